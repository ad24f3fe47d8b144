"""Per-sample sparse selections and co-activation graphs.

A sample's rank-2 logit block [L x d] is reduced to the sorted union of its
per-position top-k vocabulary indices. In mask mode a retained value
survives only at positions where that index was in the position's own
top-k (others are zeroed); gather mode keeps the full column at every
union index. Raw graphs are the exact-symmetric gram matrix of the
selection; row-stochastic graphs clamp negatives and normalize rows (the
Prop-1 verification regime, never the training path).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptySelectionError, ParameterError, ShapeError
from .tensors import Tensor, gram_matrix, seq_sum, sort_descending, topk_per_position


@dataclass
class SparseSelection:
    indices: list[int]              # strictly increasing vocab ids, length d'
    values: np.ndarray              # float64 [L x d']
    mode: str                       # "mask" | "gather"
    active: np.ndarray = field(repr=False, default=None)  # bool [L x d'], True where gradient flows

    @property
    def width(self) -> int:
        return len(self.indices)


@dataclass
class CoActivationGraph:
    C: np.ndarray                   # float64 [d' x d']
    normalization: str              # "raw" | "row_stochastic"
    node_ids: list[int]


@dataclass
class NodeFeatures:
    f: list[float]
    f_sorted: list[float]
    perm: list[int]


def sparsify(z: Tensor, sample: int, k: int, mode: str = "mask") -> SparseSelection:
    """Union-of-top-k selection for one sample of a [B x L x d] tensor."""
    if z.ndim != 3:
        raise ShapeError(f"sparsify expects a rank-3 tensor, got ndim={z.ndim}")
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    if mode not in ("mask", "gather"):
        raise ParameterError(f"mode must be 'mask' or 'gather', got {mode!r}")
    B, L, d = z.shape
    if not 0 <= sample < B:
        raise ParameterError(f"sample {sample} out of range for batch {B}")
    block = z.astype64()[sample]
    per_position: list[set[int]] = []
    union: set[int] = set()
    for t in range(L):
        idx, _ = topk_per_position(block[t].tolist(), k)
        s = set(idx)
        per_position.append(s)
        union |= s
    indices = sorted(union)
    col = {v: j for j, v in enumerate(indices)}
    values = np.zeros((L, len(indices)), dtype=np.float64)
    active = np.zeros((L, len(indices)), dtype=bool)
    if mode == "gather":
        values[:, :] = block[:, indices]
        active[:, :] = True
    else:
        for t in range(L):
            for v in per_position[t]:
                j = col[v]
                values[t, j] = block[t, v]
                active[t, j] = True
    return SparseSelection(indices=indices, values=values, mode=mode, active=active)


def build_graph(sel: SparseSelection, normalization: str = "raw") -> CoActivationGraph:
    if normalization not in ("raw", "row_stochastic"):
        raise ParameterError(f"normalization must be 'raw' or 'row_stochastic', got {normalization!r}")
    if sel.width == 0:
        raise EmptySelectionError("selection retained zero vocabulary dimensions")
    C = gram_matrix(sel.values)
    if normalization == "row_stochastic":
        d = C.shape[0]
        out = np.zeros_like(C)
        for i in range(d):
            row = np.maximum(C[i], 0.0)
            s = seq_sum(row)
            out[i] = row / s if s > 0.0 else np.full(d, 1.0 / d)
        C = out
    return CoActivationGraph(C=C, normalization=normalization, node_ids=list(sel.indices))


def degree_features(g: CoActivationGraph) -> NodeFeatures:
    """Row-mean degree features with their stable descending sort.

    Raw rows are summed in ascending value order: a canonical association
    order makes the features (and therefore the graph loss) exactly
    invariant under vocabulary relabeling, which label-order summation
    cannot be. Row-stochastic graphs get the analytic constant 1/d'
    directly: their rows sum to 1 by construction, and the exactness
    invariant could not survive literal resummation for non-dyadic d'.
    """
    d = g.C.shape[0]
    if g.normalization == "row_stochastic":
        f = [1.0 / d] * d
    else:
        f = [seq_sum(np.sort(g.C[i], kind="stable")) / d for i in range(d)]
    sr = sort_descending(f)
    return NodeFeatures(f=f, f_sorted=sr.values, perm=sr.perm)


def graph_to_json_dict(g: CoActivationGraph) -> dict:
    """The documented inspection export: {node_ids, C, normalization}."""
    return {
        "node_ids": list(g.node_ids),
        "C": [[float(x) for x in row] for row in g.C],
        "normalization": g.normalization,
    }


def graph_to_dot(g: CoActivationGraph) -> str:
    """DOT rendering with one node per retained vocab id and weighted edges.

    Exact-zero off-diagonal weights are omitted; node order and edge order
    are deterministic.
    """
    d = g.C.shape[0]
    lines = ["graph coactivation {"]
    for i in range(d):
        lines.append(f'  n{i} [label="{g.node_ids[i]}"];')
    for i in range(d):
        for j in range(i, d):
            w = float(g.C[i, j])
            if w != 0.0:
                lines.append(f"  n{i} -- n{j} [weight={w!r}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
