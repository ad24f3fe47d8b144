"""Forward and analytic backward passes for the distillation losses.

Four kernels and their combination:

* ``uld_loss``: token-level sorted Wasserstein-1 between a pivot and a
  source logit row (shorter row zero-padded), averaged over all B*L
  positions in the batch form.
* ``gld_loss``: structure-level loss between per-sample co-activation
  graphs; sorted degree features matched rank-by-rank, truncated to the
  smaller width, averaged over the batch and summed over sources.
* ``kl_loss``: softmax KL(teacher || student) baseline; shared vocab only.
* ``sft_cross_entropy``: masked next-token cross-entropy.

Gradients are exact subgradients: sort permutations are frozen at forward
time and sign(0) = 0 at absolute-value kinks. All reductions are
order-pinned (see tensors.seq_sum); gradients flow to the pivot only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError, ValidationError
from .graphs import NodeFeatures, build_graph, degree_features, sparsify
from .tensors import Tensor, log_softmax, seq_sum, sort_descending, tensor_from

_CONFIG_DEFAULTS = {
    "lambda_gld": 0.001,
    "lambda_uld": 0.5,
    "lambda_sft": 1.0,
    "top_k": 10,
    "sparsify_mode": "mask",
    "dtype": "float64",
}


@dataclass
class LossConfig:
    lambda_gld: float = 0.001
    lambda_uld: float = 0.5
    lambda_sft: float = 1.0
    top_k: int = 10
    sparsify_mode: str = "mask"
    dtype: str = "float64"

    def validate(self) -> "LossConfig":
        # normalize numeric types: JSON clients may deliver 1 for 1.0
        self.lambda_gld = float(self.lambda_gld)
        self.lambda_uld = float(self.lambda_uld)
        self.lambda_sft = float(self.lambda_sft)
        self.top_k = int(self.top_k)
        if min(self.lambda_gld, self.lambda_uld, self.lambda_sft) < 0:
            raise ParameterError("loss weights must be >= 0")
        if self.top_k < 1:
            raise ParameterError(f"top_k must be >= 1, got {self.top_k}")
        if self.sparsify_mode not in ("mask", "gather"):
            raise ParameterError(f"sparsify_mode must be 'mask' or 'gather', got {self.sparsify_mode!r}")
        if self.dtype not in ("float32", "float64"):
            raise ParameterError(f"dtype must be 'float32' or 'float64', got {self.dtype!r}")
        return self

    @classmethod
    def from_dict(cls, doc: dict) -> "LossConfig":
        unknown = sorted(set(doc) - set(_CONFIG_DEFAULTS))
        if unknown:
            raise ParameterError(f"unknown config keys: {', '.join(unknown)}")
        merged = dict(_CONFIG_DEFAULTS)
        merged.update(doc)
        return cls(**merged).validate()

    @classmethod
    def from_json(cls, text: str) -> "LossConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParameterError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ParameterError("config JSON must be an object")
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return {
            "lambda_gld": self.lambda_gld,
            "lambda_uld": self.lambda_uld,
            "lambda_sft": self.lambda_sft,
            "top_k": self.top_k,
            "sparsify_mode": self.sparsify_mode,
            "dtype": self.dtype,
        }


@dataclass
class LossReport:
    total: float
    sft: float
    per_source: list[dict]  # {"source_id": int, "uld": float, "gld": float}

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "sft": self.sft,
            "per_source": [dict(entry) for entry in self.per_source],
        }


def _sign(x: float) -> float:
    if x > 0.0:
        return 1.0
    if x < 0.0:
        return -1.0
    return 0.0


def uld_loss(pivot_row, source_row) -> tuple[float, list[float]]:
    """Sorted Wasserstein-1 between two logit rows.

    The shorter row is zero-padded to the longer length before sorting.
    Returns the loss and its gradient w.r.t. the pivot row (padded slots
    carry no gradient).
    """
    p = [float(x) for x in pivot_row]
    s = [float(x) for x in source_row]
    if not p or not s:
        raise ParameterError("uld_loss: empty row")
    n = max(len(p), len(s))
    sp = sort_descending(p + [0.0] * (n - len(p)))
    ss = sort_descending(s + [0.0] * (n - len(s)))
    loss = 0.0
    grad = [0.0] * len(p)
    for r in range(n):
        d = sp.values[r] - ss.values[r]
        loss += d if d >= 0.0 else -d
        orig = sp.perm[r]
        if orig < len(p):
            grad[orig] = _sign(d)
    return loss, grad


def uld_batch(z_pivot: Tensor, z_source: Tensor) -> tuple[float, np.ndarray]:
    """Position-mean ULD over a shared [B x L] grid; vocab sizes may differ."""
    _check_batch_grid(z_pivot, z_source)
    B, L, _ = z_pivot.shape
    zp = z_pivot.astype64()
    zs = z_source.astype64()
    grad = np.zeros(z_pivot.shape, dtype=np.float64)
    count = B * L
    total = 0.0
    for b in range(B):
        for t in range(L):
            loss, g = uld_loss(zp[b, t].tolist(), zs[b, t].tolist())
            total += loss
            grad[b, t, :] = g
    return total / count, grad / count


def sorted_matching_cost(f, g, work_f: np.ndarray | None = None,
                         work_g: np.ndarray | None = None) -> float:
    """Forward value of the sorted matching: sum_{r<k} |f_vr - g_vr| over
    descending-sorted copies truncated to k = min(len f, len g).

    Value-identical to gld_pairwise's loss (sorted values do not depend on
    tie order). Callers may pass preallocated work buffers; the benchmark
    does, to keep allocator noise out of the complexity signature.
    """
    fa = np.ascontiguousarray(f, dtype=np.float64)
    ga = np.ascontiguousarray(g, dtype=np.float64)
    if fa.size == 0 or ga.size == 0:
        raise ParameterError("sorted_matching_cost: empty feature vector")
    if work_f is None or work_f.shape != fa.shape:
        work_f = np.empty_like(fa)
    if work_g is None or work_g.shape != ga.shape:
        work_g = np.empty_like(ga)
    np.copyto(work_f, fa)
    np.copyto(work_g, ga)
    work_f.sort(kind="quicksort")
    work_g.sort(kind="quicksort")
    k = min(work_f.shape[0], work_g.shape[0])
    d = np.abs(work_f[-k:][::-1] - work_g[-k:][::-1])
    return float(np.add.accumulate(d)[-1])


def gld_pairwise(f_source: NodeFeatures, f_pivot: NodeFeatures) -> tuple[float, list[float]]:
    """Sorted degree-feature matching, truncated to the smaller width.

    Gradient is w.r.t. the pivot features, routed through the pivot's
    frozen sort permutation; ranks beyond the truncation carry none.
    """
    if not f_source.f or not f_pivot.f:
        raise ParameterError("gld_pairwise: empty features")
    k = min(len(f_source.f_sorted), len(f_pivot.f_sorted))
    loss = 0.0
    grad = [0.0] * len(f_pivot.f)
    for r in range(k):
        d = f_source.f_sorted[r] - f_pivot.f_sorted[r]
        loss += d if d >= 0.0 else -d
        grad[f_pivot.perm[r]] = -_sign(d)
    return loss, grad


def _gld_sample(zp: Tensor, zs: Tensor, sample: int, cfg: LossConfig,
                grad_out: np.ndarray | None) -> float:
    """One sample's graph loss against one source; accumulates dL/dZ_pivot."""
    sel_p = sparsify(zp, sample, cfg.top_k, cfg.sparsify_mode)
    sel_s = sparsify(zs, sample, cfg.top_k, cfg.sparsify_mode)
    feat_p = degree_features(build_graph(sel_p, "raw"))
    feat_s = degree_features(build_graph(sel_s, "raw"))
    loss, gfeat = gld_pairwise(feat_s, feat_p)
    if grad_out is not None:
        V = sel_p.values                      # [L x p]
        p = sel_p.width
        g = np.asarray(gfeat, dtype=np.float64)
        row_sums = np.array([seq_sum(V[t]) for t in range(V.shape[0])])
        gdots = np.array([seq_sum(g * V[t]) for t in range(V.shape[0])])
        # dL/dV(t,q) = (g[q] * sum_j V(t,j) + sum_i g[i] V(t,i)) / p
        dV = (row_sums[:, None] * g[None, :] + gdots[:, None]) / p
        dV = np.where(sel_p.active, dV, 0.0)
        grad_out[sample][:, sel_p.indices] += dV
    return loss


def gld_loss(z_pivot: Tensor, z_sources: list[Tensor], cfg: LossConfig,
             want_grad: bool = True) -> tuple[float, np.ndarray]:
    """Batch-mean graph loss summed over sources, with dL/dZ_pivot."""
    if z_pivot.ndim != 3:
        raise ShapeError("gld_loss expects a rank-3 pivot tensor")
    B = z_pivot.shape[0]
    if B < 1:
        raise ParameterError("gld_loss: empty batch")
    grad = np.zeros(z_pivot.shape, dtype=np.float64)
    total = 0.0
    for zs in z_sources:
        _check_batch_grid(z_pivot, zs)
        source_total = 0.0
        for b in range(B):
            source_total += _gld_sample(z_pivot, zs, b, cfg, grad if want_grad else None)
        total += source_total / B
    return total, grad / B


def kl_loss(pivot_row, source_row) -> tuple[float, list[float]]:
    """KL(p_source || p_pivot) over softmaxes of equal-length rows.

    Gradient w.r.t. the pivot logits is p_pivot - p_source (softmax
    Jacobian applied analytically).
    """
    p = [float(x) for x in pivot_row]
    s = [float(x) for x in source_row]
    if len(p) != len(s):
        raise ShapeError(f"kl_loss needs equal vocab sizes, got {len(p)} vs {len(s)}")
    if not p:
        raise ParameterError("kl_loss: empty row")
    log_pt = log_softmax(s)
    log_ps = log_softmax(p)
    pt = np.exp(log_pt)
    ps = np.exp(log_ps)
    loss = seq_sum(pt * (log_pt - log_ps))
    return loss, (ps - pt).tolist()


def kl_batch(z_pivot: Tensor, z_source: Tensor) -> tuple[float, np.ndarray]:
    _check_batch_grid(z_pivot, z_source)
    if z_pivot.shape[2] != z_source.shape[2]:
        raise ShapeError("kl_batch needs equal vocab sizes")
    B, L, _ = z_pivot.shape
    zp = z_pivot.astype64()
    zs = z_source.astype64()
    grad = np.zeros(z_pivot.shape, dtype=np.float64)
    total = 0.0
    for b in range(B):
        for t in range(L):
            loss, g = kl_loss(zp[b, t].tolist(), zs[b, t].tolist())
            total += loss
            grad[b, t, :] = g
    count = B * L
    return total / count, grad / count


def sft_cross_entropy(z_pivot: Tensor, targets, mask=None) -> tuple[float, np.ndarray]:
    """Mean masked next-token cross-entropy with its exact gradient.

    `targets` is a [B x L] integer array; `mask` a same-shape boolean array
    (None = all positions supervised). Gradient at an unmasked position is
    (softmax - onehot) / count, zero elsewhere.
    """
    if z_pivot.ndim != 3:
        raise ShapeError("sft_cross_entropy expects a rank-3 pivot tensor")
    B, L, d = z_pivot.shape
    tgt = np.asarray(targets)
    if tgt.shape != (B, L):
        raise ShapeError(f"targets shape {tgt.shape} does not match batch grid {(B, L)}")
    if mask is None:
        msk = np.ones((B, L), dtype=bool)
    else:
        msk = np.asarray(mask, dtype=bool)
        if msk.shape != (B, L):
            raise ShapeError(f"mask shape {msk.shape} does not match batch grid {(B, L)}")
    count = int(msk.sum())
    if count == 0:
        raise ParameterError("sft_cross_entropy: zero unmasked positions")
    zp = z_pivot.astype64()
    grad = np.zeros(z_pivot.shape, dtype=np.float64)
    total = 0.0
    for b in range(B):
        for t in range(L):
            if not msk[b, t]:
                continue
            target = int(tgt[b, t])
            if not 0 <= target < d:
                raise ValidationError(f"target {target} out of vocab range [0, {d}) at ({b}, {t})")
            ls = log_softmax(zp[b, t])
            total += -float(ls[target])
            g = np.exp(ls)
            g[target] -= 1.0
            grad[b, t, :] = g / count
    return total / count, grad


def fused_loss(z_pivot: Tensor, z_sources: list[Tensor], targets=None, mask=None,
               cfg: LossConfig | None = None) -> tuple[LossReport, Tensor]:
    """The combined objective: lambda_gld * sum_s gld_s + lambda_uld *
    sum_s uld_s + lambda_sft * sft, with the weighted-sum gradient w.r.t.
    the pivot logits (returned in the pivot's dtype).

    Component values are always reported; a component's gradient is skipped
    when its weight is zero, so zero-weight configs return exact zeros.
    """
    cfg = (cfg or LossConfig()).validate()
    if z_pivot.ndim != 3:
        raise ShapeError("fused_loss expects a rank-3 pivot tensor")
    grad = np.zeros(z_pivot.shape, dtype=np.float64)
    ulds: list[float] = []
    glds: list[float] = []
    per_source: list[dict] = []
    for idx, zs in enumerate(z_sources):
        _check_batch_grid(z_pivot, zs)
        uld_val, uld_grad = uld_batch(z_pivot, zs)
        gld_val, gld_grad = gld_loss(z_pivot, [zs], cfg, want_grad=cfg.lambda_gld != 0.0)
        if cfg.lambda_uld != 0.0:
            grad += cfg.lambda_uld * uld_grad
        if cfg.lambda_gld != 0.0:
            grad += cfg.lambda_gld * gld_grad
        ulds.append(uld_val)
        glds.append(gld_val)
        per_source.append({"source_id": idx, "uld": uld_val, "gld": gld_val})
    sft_val = 0.0
    if targets is not None:
        sft_val, sft_grad = sft_cross_entropy(z_pivot, targets, mask)
        if cfg.lambda_sft != 0.0:
            grad += cfg.lambda_sft * sft_grad
    total = cfg.lambda_gld * seq_sum(glds) + cfg.lambda_uld * seq_sum(ulds) + cfg.lambda_sft * sft_val
    report = LossReport(total=total, sft=sft_val, per_source=per_source)
    grad_tensor = tensor_from(grad, dtype=z_pivot.dtype)
    return report, grad_tensor


def _check_batch_grid(z_pivot: Tensor, z_source: Tensor) -> None:
    if z_pivot.ndim != 3 or z_source.ndim != 3:
        raise ShapeError("loss kernels expect rank-3 tensors [B x L x d]")
    if z_pivot.shape[:2] != z_source.shape[:2]:
        raise ShapeError(
            f"batch grids differ: pivot {z_pivot.shape[:2]}, source {z_source.shape[:2]}"
        )
