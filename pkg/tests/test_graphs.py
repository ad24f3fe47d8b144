"""Sparse selection and co-activation graph tests."""

import numpy as np
import pytest

from logitgraph.errors import EmptySelectionError, ParameterError
from logitgraph.graphs import (
    SparseSelection,
    build_graph,
    degree_features,
    graph_to_dot,
    graph_to_json_dict,
    sparsify,
)
from logitgraph.rng import Rng
from logitgraph.tensors import seq_sum, tensor_from


def two_row_tensor():
    return tensor_from([[[0.1, 5, 3], [4, 0.2, 3]]])


class TestSparsify:
    def test_mask_mode_example(self):
        sel = sparsify(two_row_tensor(), 0, 2, "mask")
        assert sel.indices == [0, 1, 2]
        assert sel.values.tolist() == [[0, 5, 3], [4, 0, 3]]

    def test_gather_mode_example(self):
        sel = sparsify(two_row_tensor(), 0, 2, "gather")
        assert sel.values.tolist() == [[0.1, 5, 3], [4, 0.2, 3]]

    def test_full_selection(self):
        t = tensor_from([[[2.0, 1.0, 3.0]]])
        sel = sparsify(t, 0, 3, "mask")
        assert sel.indices == [0, 1, 2]
        assert sel.values.tolist() == [[2.0, 1.0, 3.0]]

    def test_parameter_errors(self):
        t = two_row_tensor()
        with pytest.raises(ParameterError):
            sparsify(t, 0, 0)
        with pytest.raises(ParameterError):
            sparsify(t, 5, 2)
        with pytest.raises(ParameterError):
            sparsify(t, 0, 2, "other")

    def test_union_bound_property(self):
        rng = Rng(5)
        for _ in range(100):
            B, L, d = 1, rng.randint(1, 6), rng.randint(2, 12)
            k = rng.randint(1, 12)
            t = tensor_from(rng.uniform_array(-4, 4, B * L * d).reshape(B, L, d))
            sel = sparsify(t, 0, k)
            assert sel.width <= min(d, L * k)
            assert sel.indices == sorted(set(sel.indices))
            if sel.mode == "mask":
                assert all(int(a.sum()) <= k for a in sel.active)

    def test_mask_equals_gather_when_k_covers_vocab(self):
        rng = Rng(6)
        for _ in range(50):
            L, d = rng.randint(1, 5), rng.randint(1, 8)
            t = tensor_from(rng.uniform_array(-4, 4, L * d).reshape(1, L, d))
            a = sparsify(t, 0, d, "mask")
            b = sparsify(t, 0, d, "gather")
            assert a.indices == b.indices
            assert (a.values == b.values).all()

    def test_vocab_permutation_equivariance(self):
        rng = Rng(8)
        for _ in range(50):
            L, d, k = rng.randint(1, 5), rng.randint(2, 9), rng.randint(1, 4)
            data = rng.uniform_array(-4, 4, L * d).reshape(1, L, d)
            # a permutation with distinct values avoids tie-order pitfalls
            perm = list(range(d))
            rng.shuffle(perm)
            permuted = data[:, :, perm]
            sel = sparsify(tensor_from(data), 0, k)
            sel_p = sparsify(tensor_from(permuted), 0, k)
            # indices map through the permutation
            inv = {orig: pos for pos, orig in enumerate(perm)}
            assert sorted(inv[i] for i in sel.indices) == sel_p.indices
            C = build_graph(sel, "raw").C
            C_p = build_graph(sel_p, "raw").C
            assert sorted(np.round(C.ravel(), 12)) == pytest.approx(
                sorted(np.round(C_p.ravel(), 12)))


class TestBuildGraph:
    def test_raw_example(self):
        g = build_graph(sparsify(two_row_tensor(), 0, 2, "mask"), "raw")
        assert g.C.tolist() == [[16, 0, 12], [0, 25, 15], [12, 15, 18]]
        assert g.node_ids == [0, 1, 2]

    def test_row_stochastic_example(self):
        g = build_graph(sparsify(two_row_tensor(), 0, 2, "mask"), "row_stochastic")
        expected = [[16 / 28, 0, 12 / 28], [0, 25 / 40, 15 / 40], [12 / 45, 15 / 45, 18 / 45]]
        assert np.max(np.abs(g.C - np.array(expected))) < 1e-15

    def test_all_zero_values_uniform_rows(self):
        sel = SparseSelection(indices=[0, 1], values=np.zeros((2, 2)), mode="mask",
                              active=np.zeros((2, 2), dtype=bool))
        g = build_graph(sel, "row_stochastic")
        assert (g.C == 0.5).all()

    def test_row_stochastic_invariants(self):
        rng = Rng(13)
        for _ in range(100):
            L, d, k = rng.randint(1, 6), rng.randint(2, 10), rng.randint(1, 4)
            t = tensor_from(rng.uniform_array(-4, 4, L * d).reshape(1, L, d))
            g = build_graph(sparsify(t, 0, k), "row_stochastic")
            assert (g.C >= 0).all()
            for row in g.C:
                assert abs(seq_sum(row) - 1.0) <= 1e-12

    def test_raw_exact_symmetry(self):
        rng = Rng(14)
        t = tensor_from(rng.uniform_array(-4, 4, 24).reshape(1, 4, 6))
        g = build_graph(sparsify(t, 0, 3), "raw")
        assert (g.C == g.C.T).all()

    def test_empty_selection_rejected(self):
        sel = SparseSelection(indices=[], values=np.zeros((2, 0)), mode="mask",
                              active=np.zeros((2, 0), dtype=bool))
        with pytest.raises(EmptySelectionError):
            build_graph(sel)


class TestDegreeFeatures:
    def test_worked_example(self):
        g = build_graph(sparsify(two_row_tensor(), 0, 2, "mask"), "raw")
        nf = degree_features(g)
        assert abs(nf.f[0] - 28 / 3) < 1e-12
        assert abs(nf.f[1] - 40 / 3) < 1e-12
        assert nf.f[2] == 15.0

    def test_identity_graph(self):
        sel = SparseSelection(indices=[0, 1, 2, 3], values=np.eye(4), mode="gather",
                              active=np.ones((4, 4), dtype=bool))
        nf = degree_features(build_graph(sel, "raw"))
        assert nf.f == [0.25, 0.25, 0.25, 0.25]

    def test_row_stochastic_constant_exact(self):
        rng = Rng(17)
        for _ in range(50):
            L, d, k = rng.randint(1, 5), rng.randint(3, 9), rng.randint(1, 3)
            t = tensor_from(rng.uniform_array(-4, 4, L * d).reshape(1, L, d))
            g = build_graph(sparsify(t, 0, k), "row_stochastic")
            nf = degree_features(g)
            width = g.C.shape[0]
            assert nf.f == [1.0 / width] * width
            # and the analytic constant is within 1e-12 of literal row means
            for i in range(width):
                assert abs(nf.f[i] - seq_sum(g.C[i]) / width) <= 1e-12


class TestExports:
    def test_json_shape(self):
        g = build_graph(sparsify(two_row_tensor(), 0, 2, "mask"), "raw")
        doc = graph_to_json_dict(g)
        assert set(doc) == {"node_ids", "C", "normalization"}
        assert doc["normalization"] == "raw"
        assert doc["C"][0][0] == 16.0

    def test_dot_structure(self):
        g = build_graph(sparsify(two_row_tensor(), 0, 2, "mask"), "raw")
        dot = graph_to_dot(g)
        assert dot.startswith("graph coactivation {")
        assert dot.rstrip().endswith("}")
        assert dot.count("[label=") == 3
        assert "n0 -- n2" in dot and "n0 -- n1" not in dot  # zero edge omitted
