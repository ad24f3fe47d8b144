"""Central finite-difference verification of every analytic gradient.

Each loss gets a seeded instance generator and a non-differentiability
predicate. Sorting-based losses are checked away from sort ties (gap
below 1e-3 in the sorted coordinates excludes the instance, counted and
reported) and away from absolute-value kinks (matched difference within
10h). Instance dimensions are drawn small enough that exclusions stay
rare; the acceptance gate requires them under 5%.

Relative error is ||g_a - g_fd||_inf / max(||g_a||_inf, ||g_fd||_inf),
zero when both vanish.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ParameterError
from .losses import LossConfig, gld_loss, kl_loss, sft_cross_entropy, uld_loss
from .rng import Rng
from .stability import gw_pairdist_loss, w1_simplex_loss
from .tensors import tensor_from

GRADCHECK_KINDS = ("uld", "gld", "kl", "sft", "gw_pairdist", "w1_simplex")

_H = 1e-6
_TIE_GAP = 1e-3
_KINK_GAP = 10 * _H


@dataclass
class GradCheckRecord:
    loss_kind: str
    instance: int
    excluded: bool
    rel_err: float
    dims: str

    @property
    def passed(self) -> bool:
        return self.excluded or self.rel_err <= 1e-4


def central_difference(fn: Callable[[np.ndarray], float], x: np.ndarray,
                       h: float = _H) -> np.ndarray:
    flat = x.ravel().astype(np.float64).copy()
    out = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = fn(flat.reshape(x.shape))
        flat[i] = orig - h
        lo = fn(flat.reshape(x.shape))
        flat[i] = orig
        out[i] = (hi - lo) / (2.0 * h)
    return out.reshape(x.shape)


def relative_error(g_analytic: np.ndarray, g_fd: np.ndarray) -> float:
    ga = np.asarray(g_analytic, dtype=np.float64).ravel()
    gf = np.asarray(g_fd, dtype=np.float64).ravel()
    denom = max(float(np.max(np.abs(ga))) if ga.size else 0.0,
                float(np.max(np.abs(gf))) if gf.size else 0.0)
    diff = float(np.max(np.abs(ga - gf))) if ga.size else 0.0
    if denom < 1e-12:
        return diff
    return diff / denom


def _min_sorted_gap(v) -> float:
    s = np.sort(np.asarray(v, dtype=np.float64))
    if s.size < 2:
        return np.inf
    return float(np.min(s[1:] - s[:-1]))


def _check_uld(rng: Rng) -> tuple:
    B = rng.randint(1, 2)
    L = rng.randint(2, 3)
    dp = rng.randint(2, 6)
    ds = rng.randint(2, 6)
    n = max(dp, ds)
    rows_p = [rng.uniform_array(-5.0, 5.0, dp) for _ in range(B * L)]
    rows_s = [rng.uniform_array(-5.0, 5.0, ds) for _ in range(B * L)]
    excluded = False
    for rp, rs in zip(rows_p, rows_s):
        # only the pivot row moves under FD: ties among the constant pad
        # zeros are harmless, ties touching a real pivot entry are not
        padded = [(float(x), True) for x in rp] + [(0.0, False)] * (n - dp)
        padded.sort(key=lambda vr: -vr[0])
        for (v1, r1), (v2, r2) in zip(padded, padded[1:]):
            if (r1 or r2) and v1 - v2 < _TIE_GAP:
                excluded = True
        padded_p = np.array([v for v, _ in padded])
        padded_s = np.sort(np.concatenate([rs, np.zeros(n - ds)]))[::-1]
        d = padded_p - padded_s
        if np.min(np.abs(d)) < _KINK_GAP and np.max(np.abs(d)) > 0:
            excluded = True
    dims = f"B={B},L={L},dp={dp},ds={ds}"
    if excluded:
        return None, None, None, dims

    def forward(flat: np.ndarray) -> float:
        total = 0.0
        for idx in range(B * L):
            row = flat[idx * dp:(idx + 1) * dp]
            total += uld_loss(row.tolist(), rows_s[idx].tolist())[0]
        return total / (B * L)

    x = np.concatenate(rows_p)
    analytic = np.zeros_like(x)
    for idx in range(B * L):
        _, g = uld_loss(rows_p[idx].tolist(), rows_s[idx].tolist())
        analytic[idx * dp:(idx + 1) * dp] = np.asarray(g) / (B * L)
    return forward, x, analytic, dims


def _check_gld(rng: Rng) -> tuple:
    B = 1
    L = rng.randint(2, 4)
    d = rng.randint(4, 10)
    k = rng.randint(1, min(3, d))
    mode = "mask" if rng.u01() < 0.5 else "gather"
    cfg = LossConfig(top_k=k, sparsify_mode=mode).validate()
    # wider logit range spreads the quadratic features, keeping 1e-3 sort
    # gaps (and hence exclusions) rare
    zp = rng.uniform_array(-4.0, 4.0, B * L * d).reshape(B, L, d)
    zs = rng.uniform_array(-4.0, 4.0, B * L * d).reshape(B, L, d)
    dims = f"B={B},L={L},d={d},k={k},{mode}"

    excluded = False
    for t in range(L):
        row = np.sort(zp[0, t])[::-1]
        if k < d and row[k - 1] - row[k] < _TIE_GAP:
            excluded = True
    from .graphs import build_graph, degree_features, sparsify
    zp_t = tensor_from(zp)
    zs_t = tensor_from(zs)
    feat_p = degree_features(build_graph(sparsify(zp_t, 0, k, cfg.sparsify_mode), "raw"))
    feat_s = degree_features(build_graph(sparsify(zs_t, 0, k, cfg.sparsify_mode), "raw"))
    if _min_sorted_gap(feat_p.f) < _TIE_GAP:
        excluded = True
    kk = min(len(feat_p.f_sorted), len(feat_s.f_sorted))
    diffs = np.asarray(feat_s.f_sorted[:kk]) - np.asarray(feat_p.f_sorted[:kk])
    if kk and np.min(np.abs(diffs)) < _KINK_GAP and np.max(np.abs(diffs)) > 0:
        excluded = True
    if excluded:
        return None, None, None, dims

    def forward(flat: np.ndarray) -> float:
        t = tensor_from(flat.reshape(B, L, d))
        return gld_loss(t, [zs_t], cfg, want_grad=False)[0]

    _, grad = gld_loss(zp_t, [zs_t], cfg)
    return forward, zp.ravel().copy(), grad.ravel(), dims


def _check_kl(rng: Rng) -> tuple:
    d = rng.randint(2, 32)
    pivot = rng.uniform_array(-4.0, 4.0, d)
    source = rng.uniform_array(-4.0, 4.0, d)
    dims = f"d={d}"

    def forward(flat: np.ndarray) -> float:
        return kl_loss(flat.tolist(), source.tolist())[0]

    _, g = kl_loss(pivot.tolist(), source.tolist())
    return forward, pivot, np.asarray(g), dims


def _check_sft(rng: Rng) -> tuple:
    B = rng.randint(1, 2)
    L = rng.randint(2, 6)
    d = rng.randint(2, 24)
    z = rng.uniform_array(-4.0, 4.0, B * L * d).reshape(B, L, d)
    targets = np.array([[rng.randint(0, d - 1) for _ in range(L)] for _ in range(B)])
    mask = np.array([[rng.u01() < 0.8 for _ in range(L)] for _ in range(B)])
    if not mask.any():
        mask[0, 0] = True
    dims = f"B={B},L={L},d={d}"

    def forward(flat: np.ndarray) -> float:
        return sft_cross_entropy(tensor_from(flat.reshape(B, L, d)), targets, mask)[0]

    _, grad = sft_cross_entropy(tensor_from(z), targets, mask)
    return forward, z.ravel().copy(), grad.ravel(), dims


def _check_gw_pairdist(rng: Rng) -> tuple:
    D = rng.randint(4, 32)
    R = 5.0
    # sample strictly inside the clip box so the clamp is inactive
    T = rng.uniform_array(-0.95 * R, 0.95 * R, D)
    S = rng.uniform_array(-0.95 * R, 0.95 * R, D)
    dims = f"D={D}"

    def forward(flat: np.ndarray) -> float:
        return gw_pairdist_loss(T, flat, 1.0, clip_radius=R)[0]

    _, g = gw_pairdist_loss(T, S, 1.0, clip_radius=R)
    return forward, S, np.asarray(g), dims


def _check_w1(rng: Rng) -> tuple:
    D = rng.randint(4, 10)
    R = 5.0
    T = rng.uniform_array(-0.95 * R, 0.95 * R, D)
    S = rng.uniform_array(-0.95 * R, 0.95 * R, D)
    dims = f"D={D}"
    excluded = False
    # softmax is order-preserving, so sort stability is the logit-gap
    # condition; only S moves under FD, the teacher's sort is frozen
    if _min_sorted_gap(S) < _TIE_GAP:
        excluded = True
    from .tensors import softmax
    d = np.sort(softmax(T))[::-1] - np.sort(softmax(S))[::-1]
    if np.min(np.abs(d)) < _KINK_GAP and np.max(np.abs(d)) > 0:
        excluded = True
    if excluded:
        return None, None, None, dims

    def forward(flat: np.ndarray) -> float:
        return w1_simplex_loss(T, flat, 1.0, clip_radius=R)[0]

    _, g = w1_simplex_loss(T, S, 1.0, clip_radius=R)
    return forward, S, np.asarray(g), dims


_GENERATORS = {
    "uld": _check_uld,
    "gld": _check_gld,
    "kl": _check_kl,
    "sft": _check_sft,
    "gw_pairdist": _check_gw_pairdist,
    "w1_simplex": _check_w1,
}


def run_gradcheck(loss_kind: str, instances: int, seed: int,
                  corrupt: bool = False) -> list[GradCheckRecord]:
    """Check `instances` seeded instances of one loss kind.

    `corrupt` is the negative-control hook: it biases the analytic
    gradient so a healthy harness must fail.
    """
    if loss_kind not in _GENERATORS:
        raise ParameterError(f"unknown gradcheck kind {loss_kind!r}")
    gen = _GENERATORS[loss_kind]
    base = Rng(seed)
    records = []
    for i in range(instances):
        forward, x, analytic, dims = gen(base.derive(i))
        if forward is None:
            records.append(GradCheckRecord(loss_kind, i, True, 0.0, dims))
            continue
        if corrupt:
            analytic = analytic + 0.1 * max(1.0, float(np.max(np.abs(analytic))))
        fd = central_difference(forward, x)
        records.append(GradCheckRecord(loss_kind, i, False, relative_error(analytic, fd), dims))
    return records
