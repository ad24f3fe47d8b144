"""Stability-lab tests: comparator losses against the quadruple-loop
oracle, gradient bounds, feature/sorting robustness, distribution sweep."""

import numpy as np
import pytest

from logitgraph import gw
from logitgraph.errors import ParameterError, SweepFailure
from logitgraph.gradcheck import central_difference, relative_error
from logitgraph.rng import Rng
from logitgraph.stability import (
    DistributionSweepConfig,
    estimate_lipschitz,
    feature_stability_check,
    gw_pairdist_loss,
    histogram_rows,
    kl_softmax_loss,
    pairdist_matrix,
    sort_stability_check,
    theoretical_bound,
    w1_simplex_loss,
    wd_gwd_distribution_sweep,
)


def direct_pairdist_loss(T, S, lam=1.0):
    """Quadruple-loop oracle for the pairwise-squared-difference graph loss."""
    D = len(S)
    return lam * gw.gw_cost(pairdist_matrix(T), pairdist_matrix(S), gw.uniform_plan(D, D))


class TestGwPairdistLoss:
    def test_identity_self_cost(self):
        """Under the fixed uniform coupling the self-cost is the spread of
        the pairwise-distance graph, not zero (zero would need the min
        over plans); the closed form must match the quadruple-loop oracle
        and the gradient must be a true gradient of this objective."""
        T = [1.0, 2.0, -0.5]
        loss, grad = gw_pairdist_loss(T, T)
        direct = direct_pairdist_loss(T, T)
        assert abs(loss - direct) <= 1e-12 * max(direct, 1.0)
        fd = central_difference(lambda x: gw_pairdist_loss(T, x)[0], np.asarray(T))
        assert relative_error(grad, fd) <= 1e-4

    def test_constant_vectors_near_zero(self):
        # both graphs vanish identically; the moment expansion leaves only
        # cancellation noise
        loss, grad = gw_pairdist_loss([0.7, 0.7, 0.7], [0.7, 0.7, 0.7])
        assert abs(loss) < 1e-12
        assert np.max(np.abs(grad)) < 1e-12

    def test_two_point_example_against_oracle(self):
        """T=[1,-1], S=[0,0]: C_T rows {0,4},{4,0}, C_S = 0; the uniform
        coupling leaves sum C_T(i,j)^2 * (1/4) = (16+16)/4 = 8."""
        loss, _ = gw_pairdist_loss([1.0, -1.0], [0.0, 0.0])
        assert loss == direct_pairdist_loss([1.0, -1.0], [0.0, 0.0]) == 8.0

    def test_separable_expansion_matches_quadruple_loop(self):
        rng = Rng(61)
        for _ in range(25):
            D = rng.randint(2, 12)
            T = rng.uniform_array(-3, 3, D)
            S = rng.uniform_array(-3, 3, D)
            fast, _ = gw_pairdist_loss(T, S)
            direct = direct_pairdist_loss(T, S)
            assert abs(fast - direct) <= 1e-9 * max(abs(direct), 1.0)

    def test_gradient_against_fd(self):
        rng = Rng(62)
        for _ in range(20):
            D = rng.randint(3, 16)
            T = rng.uniform_array(-2, 2, D)
            S = rng.uniform_array(-2, 2, D)
            _, grad = gw_pairdist_loss(T, S)
            fd = central_difference(lambda x: gw_pairdist_loss(T, x)[0], S)
            assert relative_error(grad, fd) <= 1e-4

    def test_coordinate_bound(self):
        rng = Rng(63)
        for D, R in ((128, 5.0), (128, 10.0), (256, 5.0)):
            bound = 64.0 * R ** 3 / D
            for i in range(100):
                r = rng.derive(i)
                T = r.uniform_array(-R, R, D)
                S = r.uniform_array(-R, R, D)
                _, grad = gw_pairdist_loss(T, S, 1.0, clip_radius=R)
                assert np.max(np.abs(grad)) <= bound + 1e-9

    def test_requires_two_points(self):
        with pytest.raises(ParameterError):
            gw_pairdist_loss([1.0], [1.0])


class TestW1SimplexLoss:
    def test_identity(self):
        loss, grad = w1_simplex_loss([0.5, -0.5], [0.5, -0.5])
        assert loss == 0.0 and np.max(np.abs(grad)) == 0.0

    def test_closed_form_example(self):
        loss, _ = w1_simplex_loss([np.log(3.0), 0.0], [0.0, 0.0])
        assert abs(loss - 0.5) < 1e-15

    def test_gradient_against_fd(self):
        rng = Rng(64)
        checked = 0
        for i in range(60):
            r = rng.derive(i)
            D = r.randint(3, 10)
            T = r.uniform_array(-3, 3, D)
            S = r.uniform_array(-3, 3, D)
            gaps = np.diff(np.sort(S))
            if gaps.min() < 1e-3:
                continue
            _, grad = w1_simplex_loss(T, S)
            fd = central_difference(lambda x: w1_simplex_loss(T, x)[0], S)
            assert relative_error(grad, fd) <= 1e-4
            checked += 1
        assert checked >= 40


class TestKlSoftmaxLoss:
    def test_alias_and_bound(self):
        rng = Rng(65)
        D, R = 64, 3.0
        bound = theoretical_bound("kl_softmax", D, R, 1.0)
        for i in range(100):
            r = rng.derive(i)
            T = r.uniform_array(-R, R, D)
            S = r.uniform_array(-R, R, D)
            loss, grad = kl_softmax_loss(T, S, 1.0, clip_radius=R)
            assert loss >= 0.0
            assert float(np.sqrt(np.sum(grad * grad))) <= bound + 1e-9

    def test_lambda_scaling(self):
        loss1, grad1 = kl_softmax_loss([1.0, 0.0], [0.0, 1.0], 1.0)
        loss2, grad2 = kl_softmax_loss([1.0, 0.0], [0.0, 1.0], 2.0)
        assert loss2 == 2.0 * loss1
        assert np.max(np.abs(grad2 - 2.0 * grad1)) == 0.0


class TestEstimateLipschitz:
    def test_bounds_and_record_fields(self):
        rec = estimate_lipschitz("gw_pairdist", 128, 5.0, 1.0, samples=200, seed=9)
        assert rec.theoretical_bound == 64.0 * 125.0 / 128.0
        assert rec.bound_holds
        rec_kl = estimate_lipschitz("kl_softmax", 128, 5.0, 1.0, samples=200, seed=9)
        assert rec_kl.bound_holds

    def test_single_sample_deterministic(self):
        a = estimate_lipschitz("w1_simplex", 32, 2.0, 1.0, samples=1, seed=77)
        b = estimate_lipschitz("w1_simplex", 32, 2.0, 1.0, samples=1, seed=77)
        assert a == b

    def test_unknown_kind_rejected(self):
        with pytest.raises(ParameterError):
            estimate_lipschitz("nope", 8, 1.0, 1.0, 1, 0)


class TestFeatureStability:
    def test_zero_perturbation(self):
        rec = feature_stability_check(np.eye(3), np.zeros((3, 3)))
        assert rec.feature_delta_norm == 0.0 and rec.holds

    def test_all_ones_equality(self):
        rng = Rng(66)
        for n in (2, 4, 9, 16):
            C = rng.uniform_array(-1, 1, n * n).reshape(n, n)
            eps = 0.37
            rec = feature_stability_check(C, eps * np.ones((n, n)))
            assert rec.holds
            assert abs(rec.feature_delta_norm - rec.lipschitz_bound) <= 1e-9

    def test_random_instances(self):
        rng = Rng(67)
        for _ in range(60):
            n = rng.randint(2, 16)
            C = rng.uniform_array(-1, 1, n * n).reshape(n, n)
            E = rng.uniform_array(-0.5, 0.5, n * n).reshape(n, n)
            assert feature_stability_check(C, E).holds


class TestSortStability:
    def test_within_half_gap(self):
        res = sort_stability_check([1.0, 2.0, 4.0], 0.4, samples=500, seed=5)
        assert res.stable and res.min_gap == 1.0 and res.samples_checked == 500

    def test_beyond_half_gap(self):
        assert not sort_stability_check([1.0, 2.0, 4.0], 0.6).stable

    def test_duplicates(self):
        res = sort_stability_check([3.0, 3.0], 0.01)
        assert not res.stable and res.min_gap == 0.0

    def test_random_instances_never_flip(self):
        rng = Rng(68)
        for i in range(30):
            r = rng.derive(i)
            n = r.randint(3, 12)
            v = r.uniform_array(-5, 5, n)
            gaps = np.diff(np.sort(v))
            if gaps.min() <= 0:
                continue
            res = sort_stability_check(v, 0.49 * float(gaps.min()), samples=500, seed=i)
            assert res.stable  # SweepFailure would raise on any flip


class TestDistributionSweep:
    def test_zero_steps_identical(self):
        cfg = DistributionSweepConfig(pairs=8, length=4, vocab=8, top_k=3,
                                      steps=0, seed=3)
        res = wd_gwd_distribution_sweep(cfg)
        assert res.uld_before == res.uld_after
        assert res.gld_before == res.gld_after
        rows = histogram_rows(res)
        before = [r for r in rows if r[0] == "before"]
        after = [r for r in rows if r[0] == "after"]
        assert [b[1:] for b in before] == [a[1:] for a in after]

    def test_descent_reduces_uld(self):
        cfg = DistributionSweepConfig(pairs=6, length=4, vocab=8, top_k=3,
                                      steps=40, lr=0.05, seed=4)
        res = wd_gwd_distribution_sweep(cfg)
        means = res.means()
        assert means["mean_uld_after"] < means["mean_uld_before"]

    def test_deterministic(self):
        cfg = DistributionSweepConfig(pairs=4, length=3, vocab=6, top_k=2,
                                      steps=5, seed=9)
        a = wd_gwd_distribution_sweep(cfg)
        b = wd_gwd_distribution_sweep(cfg)
        assert a.uld_after == b.uld_after and a.gld_after == b.gld_after
        assert histogram_rows(a) == histogram_rows(b)
