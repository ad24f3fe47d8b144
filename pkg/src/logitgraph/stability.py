"""Executable stability analyses: comparator losses on clipped logits with
their gradient-norm bounds, empirical Lipschitz estimation, feature and
sorting stability, and the sorted-W1 vs graph-loss distribution sweep.

The three comparator losses all take a teacher vector T and student S of
length D, clipped to [-R, R] before evaluation:

* ``gw_pairdist_loss``: the graph loss on pairwise-squared-difference
  graphs C(k,l) = (x_k - x_l)^2 under the uniform coupling 1/D^2,
  evaluated through the separable moment expansion (the quartic loop is
  kept as a test oracle via the gw module). Its proven gradient bound is
  per-coordinate: |dL/dS_p| <= 64 lam R^3 / D, and the recorded norm is
  the max-abs coordinate. The L2 norm provably exceeds that constant at
  these sizes, so records for this loss are infinity-norm by construction.
* ``w1_simplex_loss``: sorted Wasserstein-1 between softmax outputs (unit
  diameter ground metric); L2 norms recorded; its sqrt(D)/2 constant
  presumes the exact dual potential, so the record is reported without a
  bound assertion.
* ``kl_softmax_loss``: lam * KL(softmax T || softmax S); L2 norms against
  the lam e^R D constant.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ParameterError, ShapeError, SweepFailure, ValidationError
from .losses import LossConfig, gld_loss, kl_loss, uld_batch
from .rng import Rng
from .tensors import seq_sum, softmax, spectral_norm, tensor_from

LIPSCHITZ_KINDS = ("gw_pairdist", "w1_simplex", "kl_softmax")


@dataclass
class LipschitzRecord:
    loss_kind: str
    D: int
    R: float
    lam: float
    empirical_max_grad_norm: float
    theoretical_bound: float
    samples: int
    seed: int

    @property
    def bound_holds(self) -> bool:
        return self.empirical_max_grad_norm <= self.theoretical_bound + 1e-9


@dataclass
class StabilityRecord:
    n: int
    perturbation_spectral_norm: float
    feature_delta_norm: float
    lipschitz_bound: float

    @property
    def holds(self) -> bool:
        return self.feature_delta_norm <= self.lipschitz_bound + 1e-12


def _clip(x: np.ndarray, R: float | None) -> np.ndarray:
    return x if R is None else np.clip(x, -R, R)


def pairdist_matrix(x) -> list[list[float]]:
    """C(k,l) = (x_k - x_l)^2, the lab's graph construction."""
    xs = np.asarray(x, dtype=np.float64)
    diff = xs[:, None] - xs[None, :]
    return (diff * diff).tolist()


def gw_pairdist_loss(T, S, lam: float = 1.0, clip_radius: float | None = None
                     ) -> tuple[float, np.ndarray]:
    """Graph loss on pairwise-squared-difference graphs, uniform coupling.

    loss = lam * sum_ijkl (C_T(i,j) - C_S(k,l))^2 / D^4, evaluated in O(D)
    through power sums: sum_ij (x_i - x_j)^2 = 2 D m2 - 2 m1^2 and
    sum_ij (x_i - x_j)^4 = 2 D m4 - 8 m1 m3 + 6 m2^2. The gradient is the
    closed form of d/dS_p with the uniform coupling:

        -8 lam (S_CT / D^4) (D S_p - m1) + (8 lam / D^2)
            (D S_p^3 - 3 S_p^2 m1 + 3 S_p m2 - m3).
    """
    Tv = _clip(np.asarray(T, dtype=np.float64).ravel(), clip_radius)
    Sv = _clip(np.asarray(S, dtype=np.float64).ravel(), clip_radius)
    D = Sv.size
    if D < 2 or Tv.size < 2:
        raise ParameterError("gw_pairdist_loss needs D >= 2")
    if Tv.size != D:
        raise ShapeError("teacher and student lengths differ")

    def moments(x):
        return (seq_sum(x), seq_sum(x * x), seq_sum(x ** 3), seq_sum(x ** 4))

    m1T, m2T, m3T, m4T = moments(Tv)
    m1S, m2S, m3S, m4S = moments(Sv)
    s_ct = 2.0 * D * m2T - 2.0 * m1T * m1T
    s_cs = 2.0 * D * m2S - 2.0 * m1S * m1S
    sq_ct = 2.0 * D * m4T - 8.0 * m1T * m3T + 6.0 * m2T * m2T
    sq_cs = 2.0 * D * m4S - 8.0 * m1S * m3S + 6.0 * m2S * m2S
    D2 = float(D * D)
    D4 = D2 * D2
    loss = lam * (D2 * sq_ct + D2 * sq_cs - 2.0 * s_ct * s_cs) / D4
    grad = (
        -8.0 * lam * (s_ct / D4) * (D * Sv - m1S)
        + (8.0 * lam / D2) * (D * Sv ** 3 - 3.0 * Sv ** 2 * m1S + 3.0 * Sv * m2S - m3S)
    )
    return loss, grad


def w1_simplex_loss(T, S, lam: float = 1.0, clip_radius: float | None = None
                    ) -> tuple[float, np.ndarray]:
    """lam * sum_r |softmax(T) sorted desc - softmax(S) sorted desc|.

    Gradient w.r.t. S runs the matched signs back through the frozen sort
    permutation and the softmax Jacobian diag(p) - p p^T.
    """
    Tv = _clip(np.asarray(T, dtype=np.float64).ravel(), clip_radius)
    Sv = _clip(np.asarray(S, dtype=np.float64).ravel(), clip_radius)
    if Sv.size < 1 or Tv.size < 1:
        raise ParameterError("w1_simplex_loss needs D >= 1")
    pT = softmax(Tv)
    pS = softmax(Sv)
    orderT = np.argsort(-pT, kind="stable")
    orderS = np.argsort(-pS, kind="stable")
    k = min(orderT.size, orderS.size)
    d = pT[orderT[:k]] - pS[orderS[:k]]
    loss = lam * seq_sum(np.abs(d))
    dsigma = np.zeros_like(pS)
    dsigma[orderS[:k]] = -lam * np.sign(d)
    inner = seq_sum(dsigma * pS)
    grad = pS * (dsigma - inner)
    return loss, grad


def kl_softmax_loss(T, S, lam: float = 1.0, clip_radius: float | None = None
                    ) -> tuple[float, np.ndarray]:
    """lam * KL(softmax T || softmax S) with gradient lam (p_S - p_T)."""
    Tv = _clip(np.asarray(T, dtype=np.float64).ravel(), clip_radius)
    Sv = _clip(np.asarray(S, dtype=np.float64).ravel(), clip_radius)
    loss, grad = kl_loss(Sv.tolist(), Tv.tolist())
    return lam * loss, lam * np.asarray(grad)


_LOSS_TABLE = {
    "gw_pairdist": gw_pairdist_loss,
    "w1_simplex": w1_simplex_loss,
    "kl_softmax": kl_softmax_loss,
}


def theoretical_bound(loss_kind: str, D: int, R: float, lam: float) -> float:
    if loss_kind == "gw_pairdist":
        return float(64.0 * lam * R ** 3 / D)
    if loss_kind == "w1_simplex":
        return float(lam * np.sqrt(D) / 2.0)
    if loss_kind == "kl_softmax":
        return float(lam * np.exp(R) * D)
    raise ParameterError(f"unknown loss kind {loss_kind!r}")


def gradient_record_norm(loss_kind: str, grad: np.ndarray) -> float:
    """Max-abs coordinate for the graph loss (its proven bound is
    per-coordinate); Euclidean norm for the softmax-domain losses."""
    g = np.asarray(grad, dtype=np.float64)
    if loss_kind == "gw_pairdist":
        return float(np.max(np.abs(g))) if g.size else 0.0
    return float(np.sqrt(seq_sum(g * g)))


def estimate_lipschitz(loss_kind: str, D: int, R: float, lam: float,
                       samples: int, seed: int) -> LipschitzRecord:
    """Empirical max gradient norm over i.i.d. clipped pairs.

    Sample i draws T then S uniform in [-R, R]^D from substream seed + i.
    The empirical maximum is a lower bound on the true Lipschitz constant.
    """
    if samples < 1:
        raise ParameterError("samples must be >= 1")
    if loss_kind not in _LOSS_TABLE:
        raise ParameterError(f"unknown loss kind {loss_kind!r}")
    fn = _LOSS_TABLE[loss_kind]
    best = 0.0
    base = Rng(seed)
    for i in range(samples):
        rng = base.derive(i)
        Tv = rng.uniform_array(-R, R, D)
        Sv = rng.uniform_array(-R, R, D)
        _, grad = fn(Tv, Sv, lam, clip_radius=R)
        norm = gradient_record_norm(loss_kind, grad)
        if norm > best:
            best = norm
    return LipschitzRecord(
        loss_kind=loss_kind,
        D=D,
        R=R,
        lam=lam,
        empirical_max_grad_norm=best,
        theoretical_bound=theoretical_bound(loss_kind, D, R, lam),
        samples=samples,
        seed=seed,
    )


def row_mean_map(M) -> np.ndarray:
    """F(C) = (1/n) C 1, the degree-feature extraction map."""
    A = np.asarray(M, dtype=np.float64)
    n = A.shape[1]
    return np.array([seq_sum(A[i]) / n for i in range(A.shape[0])])


def feature_stability_check(C, E) -> StabilityRecord:
    """||F(C) - F(C+E)||_2 against the (1/sqrt n) ||E||_2 Lipschitz bound."""
    Cn = np.asarray(C, dtype=np.float64)
    En = np.asarray(E, dtype=np.float64)
    if Cn.ndim != 2 or Cn.shape[0] != Cn.shape[1]:
        raise ShapeError("C must be square")
    if En.shape != Cn.shape:
        raise ShapeError(f"perturbation shape {En.shape} != {Cn.shape}")
    n = Cn.shape[0]
    delta = row_mean_map(Cn) - row_mean_map(Cn + En)
    delta_norm = float(np.sqrt(seq_sum(delta * delta)))
    sigma = spectral_norm(En, max_iters=2000, tol=1e-13).value
    return StabilityRecord(
        n=n,
        perturbation_spectral_norm=sigma,
        feature_delta_norm=delta_norm,
        lipschitz_bound=sigma / np.sqrt(n),
    )


class SortStabilityResult(NamedTuple):
    stable: bool
    min_gap: float
    samples_checked: int


def sort_stability_check(v, perturbation_max: float, samples: int = 1000,
                         seed: int = 0) -> SortStabilityResult:
    """Half-min-gap sorting robustness check.

    Returns stable=True iff perturbation_max < delta/2 where delta is the
    minimum gap between consecutive sorted entries (0 for duplicates, so
    duplicates report False). When True the check also samples
    infinity-norm-bounded perturbations and verifies the argsort never
    changes; a change would contradict the gap argument and raises.
    """
    xs = np.asarray(v, dtype=np.float64).ravel()
    if xs.size < 2:
        raise ParameterError("need at least two entries")
    if not np.isfinite(xs).all():
        raise ValidationError("non-finite entry")
    s = np.sort(xs)[::-1]
    gaps = s[:-1] - s[1:]
    min_gap = float(gaps.min())
    if min_gap <= 0.0:
        return SortStabilityResult(False, 0.0, 0)
    if not perturbation_max < min_gap / 2.0:
        return SortStabilityResult(False, min_gap, 0)
    base = np.argsort(-xs, kind="stable")
    rng = Rng(seed)
    n = xs.size
    noise = rng.uniform_array(-perturbation_max, perturbation_max, samples * n)
    perturbed = xs[None, :] + noise.reshape(samples, n)
    orders = np.argsort(-perturbed, axis=1, kind="stable")
    changes = int(np.sum(np.any(orders != base[None, :], axis=1)))
    if changes:
        raise SweepFailure(
            f"argsort changed under {changes} perturbations below half the min gap"
        )
    return SortStabilityResult(True, min_gap, samples)


@dataclass
class DistributionSweepConfig:
    pairs: int = 200
    length: int = 8
    vocab: int = 32
    top_k: int = 10
    steps: int = 50
    lr: float = 0.05
    bins: int = 20
    seed: int = 0

    def validate(self) -> "DistributionSweepConfig":
        if self.pairs < 1:
            raise ParameterError("pairs must be >= 1")
        if self.bins < 1:
            raise ParameterError("bins must be >= 1")
        if self.steps < 0:
            raise ParameterError("steps must be >= 0")
        return self


@dataclass
class DistributionSweepResult:
    config: DistributionSweepConfig
    uld_before: list[float]
    gld_before: list[float]
    uld_after: list[float]
    gld_after: list[float]

    def means(self) -> dict:
        n = len(self.uld_before)
        return {
            "mean_uld_before": seq_sum(self.uld_before) / n,
            "mean_uld_after": seq_sum(self.uld_after) / n,
            "mean_gld_before": seq_sum(self.gld_before) / n,
            "mean_gld_after": seq_sum(self.gld_after) / n,
        }


def wd_gwd_distribution_sweep(config: DistributionSweepConfig) -> DistributionSweepResult:
    """Token-level vs structure-level loss distributions before and after a
    descent that minimizes only the token-level loss.

    Per pair: draw pivot/source logit tensors (B=1, identical vocabulary),
    record (uld, gld), run `steps` plain gradient steps on the ULD
    objective alone, record both again. The structure-level delta is
    reported, never asserted.
    """
    cfg = config.validate()
    loss_cfg = LossConfig(top_k=cfg.top_k).validate()
    uld_b: list[float] = []
    gld_b: list[float] = []
    uld_a: list[float] = []
    gld_a: list[float] = []
    base = Rng(cfg.seed)
    for pair in range(cfg.pairs):
        rng = base.derive(pair)
        shape = (1, cfg.length, cfg.vocab)
        zp = tensor_from(rng.uniform_array(-2.0, 2.0, cfg.length * cfg.vocab).reshape(shape))
        zs = tensor_from(rng.uniform_array(-2.0, 2.0, cfg.length * cfg.vocab).reshape(shape))
        u0, _ = uld_batch(zp, zs)
        g0, _ = gld_loss(zp, [zs], loss_cfg, want_grad=False)
        uld_b.append(u0)
        gld_b.append(g0)
        cur = zp
        for _ in range(cfg.steps):
            _, grad = uld_batch(cur, zs)
            cur = tensor_from(cur.astype64() - cfg.lr * grad)
        u1, _ = uld_batch(cur, zs)
        g1, _ = gld_loss(cur, [zs], loss_cfg, want_grad=False)
        uld_a.append(u1)
        gld_a.append(g1)
    return DistributionSweepResult(
        config=cfg, uld_before=uld_b, gld_before=gld_b, uld_after=uld_a, gld_after=gld_a
    )


def histogram_rows(result: DistributionSweepResult) -> list[tuple[str, str, float, float, int]]:
    """(phase, loss_kind, bin_lo, bin_hi, count) rows over shared bins.

    Bin edges for a loss kind span the combined before/after range so the
    two phases are directly comparable; a degenerate range collapses to a
    single bin.
    """
    rows: list[tuple[str, str, float, float, int]] = []
    bins = result.config.bins
    for kind, before, after in (
        ("uld", result.uld_before, result.uld_after),
        ("gld", result.gld_before, result.gld_after),
    ):
        combined = before + after
        lo = min(combined)
        hi = max(combined)
        if hi <= lo:
            edges = [lo, lo + 1.0]
        else:
            width = (hi - lo) / bins
            edges = [lo + i * width for i in range(bins)] + [hi]
        for phase, values in (("before", before), ("after", after)):
            counts = [0] * (len(edges) - 1)
            for x in values:
                idx = len(edges) - 2
                for i in range(len(edges) - 1):
                    if x < edges[i + 1]:
                        idx = i
                        break
                counts[idx] += 1
            for i, count in enumerate(counts):
                rows.append((phase, kind, edges[i], edges[i + 1], count))
    return rows
