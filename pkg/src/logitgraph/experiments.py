"""Experiment runners behind the service endpoints and CLI subcommands.

Each runner turns validated parameters into a finished artifact (CSV or
JSON text plus an ok flag); the service and CLI only transport these.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import gw
from .errors import ParameterError, ShapeError, ValidationError
from .gradcheck import GRADCHECK_KINDS, run_gradcheck
from .losses import LossConfig, fused_loss, sorted_matching_cost
from .reports import RunManifest, csv_text, digest_bytes, json_text
from .rng import Rng
from .stability import (
    LIPSCHITZ_KINDS,
    DistributionSweepConfig,
    estimate_lipschitz,
    histogram_rows,
    wd_gwd_distribution_sweep,
)
from .tensors import decode_tensor, encode_tensor, tensor_from

IDENTITY_RTOL = 1e-9


def random_row_stochastic(rng: Rng, n: int) -> list[list[float]]:
    """Rows of normalized uniforms: entrywise positive, row sums 1."""
    rows = []
    for _ in range(n):
        u = rng.uniform_array(0.0, 1.0, n) + 1e-12
        from .tensors import seq_sum
        rows.append((u / seq_sum(u)).tolist())
    return rows


@dataclass
class SweepOutcome:
    csv: str
    ok: bool
    manifest: dict
    summary: dict


def run_verify_bound(trials: int, n_lo: int = 2, n_hi: int = 16,
                     m_lo: int = 2, m_hi: int = 16, seed: int = 0) -> SweepOutcome:
    """Uniform-plan bound check plus expansion-identity residual per trial.

    Trial 0 is always the constructed one-hot 2x2 pair that attains the
    bound with equality (omitted when trials = 0, which produces a bare
    header). Exit-ok iff every bound holds and every relative residual
    is at most 1e-9.
    """
    if trials < 0:
        raise ParameterError("trials must be >= 0")
    if not (2 <= n_lo <= n_hi and 2 <= m_lo <= m_hi):
        raise ParameterError("size ranges must satisfy 2 <= lo <= hi")
    header = ["n", "m", "gw_uniform", "approx_uniform", "abs_err", "bound",
              "identity_residual", "seed"]
    rows: list[list] = []
    ok = True
    worst_margin = float("inf")
    worst_residual = 0.0
    if trials > 0:
        onehot_C = gw.one_hot_matrix(2, 0)
        onehot_D = [[0.0, 1.0], [1.0, 0.0]]
        rec = gw.check_bound(onehot_C, onehot_D)
        rows.append([rec.n, rec.m, rec.gw_uniform, rec.approx_uniform,
                     rec.abs_err, rec.bound, rec.identity_residual, seed])
        ok &= rec.holds and rec.identity_residual <= IDENTITY_RTOL
    base = Rng(seed)
    for trial in range(trials):
        rng = base.derive(trial + 1)
        n = rng.randint(n_lo, n_hi)
        m = rng.randint(m_lo, m_hi)
        rec = gw.check_bound(random_row_stochastic(rng, n), random_row_stochastic(rng, m))
        rows.append([rec.n, rec.m, rec.gw_uniform, rec.approx_uniform,
                     rec.abs_err, rec.bound, rec.identity_residual, seed])
        worst_margin = min(worst_margin, rec.bound - rec.abs_err)
        worst_residual = max(worst_residual, rec.identity_residual)
        ok &= rec.holds and rec.identity_residual <= IDENTITY_RTOL
    manifest = RunManifest(
        command="verify-bound",
        config={"trials": trials, "n_lo": n_lo, "n_hi": n_hi, "m_lo": m_lo, "m_hi": m_hi},
        seed=seed,
    ).to_dict()
    summary = {
        "trials": trials,
        "ok": ok,
        "worst_bound_margin": None if trials == 0 else worst_margin,
        "worst_identity_residual": worst_residual,
    }
    return SweepOutcome(csv=csv_text(header, rows), ok=ok, manifest=manifest, summary=summary)


def run_gradcheck_sweep(instances: int, seed: int = 0,
                        kinds: list[str] | None = None,
                        corrupt: bool = False) -> SweepOutcome:
    if instances < 0:
        raise ParameterError("instances must be >= 0")
    kinds = list(GRADCHECK_KINDS) if kinds is None else kinds
    for kind in kinds:
        if kind not in GRADCHECK_KINDS:
            raise ParameterError(f"unknown gradcheck kind {kind!r}")
    header = ["loss_kind", "instance", "dims", "excluded", "rel_err", "passed"]
    rows: list[list] = []
    ok = True
    exclusion_rates = {}
    for kind in kinds:
        records = run_gradcheck(kind, instances, seed, corrupt=corrupt)
        for r in records:
            rows.append([r.loss_kind, r.instance, r.dims, r.excluded, r.rel_err, r.passed])
            ok &= r.passed
        if records:
            exclusion_rates[kind] = sum(r.excluded for r in records) / len(records)
    manifest = RunManifest(
        command="gradcheck",
        config={"instances": instances, "kinds": kinds, "corrupt": corrupt},
        seed=seed,
    ).to_dict()
    return SweepOutcome(csv=csv_text(header, rows), ok=ok, manifest=manifest,
                        summary={"exclusion_rates": exclusion_rates, "ok": ok})


def run_lipschitz_sweep(dims: list[int], radii: list[float], lam: float = 1.0,
                        samples: int = 1000, seed: int = 0,
                        kinds: list[str] | None = None) -> SweepOutcome:
    """Lipschitz records over the (loss kind x D x R) grid.

    ok requires (a) the provable bounds to hold for the graph loss
    (per-coordinate) and the KL loss (L2), and (b) the claimed empirical
    ordering gw < w1 < kl at every grid point when all three run.
    """
    kinds = list(LIPSCHITZ_KINDS) if kinds is None else kinds
    for kind in kinds:
        if kind not in LIPSCHITZ_KINDS:
            raise ParameterError(f"unknown lipschitz kind {kind!r}")
    header = ["loss_kind", "D", "R", "lambda", "samples", "seed",
              "empirical_max", "theoretical_bound"]
    rows: list[list] = []
    ok = True
    ordering: list[dict] = []
    for D in dims:
        for R in radii:
            by_kind = {}
            for kind in kinds:
                rec = estimate_lipschitz(kind, D, R, lam, samples, seed)
                by_kind[kind] = rec
                rows.append([rec.loss_kind, rec.D, rec.R, rec.lam, rec.samples,
                             rec.seed, rec.empirical_max_grad_norm, rec.theoretical_bound])
                if kind in ("gw_pairdist", "kl_softmax"):
                    ok = bool(ok and rec.bound_holds)
            if all(k in by_kind for k in LIPSCHITZ_KINDS):
                gw_e = by_kind["gw_pairdist"].empirical_max_grad_norm
                w1_e = by_kind["w1_simplex"].empirical_max_grad_norm
                kl_e = by_kind["kl_softmax"].empirical_max_grad_norm
                holds = bool(gw_e < w1_e < kl_e)
                ordering.append({"D": D, "R": R, "gw": gw_e, "w1": w1_e,
                                 "kl": kl_e, "holds": holds})
                ok = bool(ok and holds)
    manifest = RunManifest(
        command="lipschitz",
        config={"dims": dims, "radii": radii, "lambda": lam,
                "samples": samples, "kinds": kinds},
        seed=seed,
    ).to_dict()
    return SweepOutcome(csv=csv_text(header, rows), ok=ok, manifest=manifest,
                        summary={"ordering": ordering, "ok": ok})


def _timed_median(fn, rounds: int, min_time: float) -> float:
    t0 = time.perf_counter()
    fn()
    est = max(time.perf_counter() - t0, 1e-7)
    batch = max(1, min(int(min_time / est), 10_000_000))
    samples = []
    for _ in range(rounds):
        t0 = time.perf_counter()
        for _ in range(batch):
            fn()
        samples.append((time.perf_counter() - t0) / batch)
    samples.sort()
    return samples[len(samples) // 2]


def run_benchmark(sorted_sizes: list[int] | None = None,
                  quad_sizes: list[int] | None = None,
                  repeats: int = 9, min_time: float = 0.05,
                  seed: int = 0) -> SweepOutcome:
    """Complexity-signature timings: the sorted matching pipeline across
    large n versus the quadruple-loop oracle across small n.

    The sorted pipeline is the forward evaluator on preallocated work
    buffers (allocator churn would otherwise dominate the top of the
    range); the quadruple loop runs as-is. Medians are taken per size
    over `repeats` interleaved rounds.
    """
    if repeats < 1:
        raise ParameterError("repeats must be >= 1")
    sorted_sizes = [1 << p for p in range(10, 18)] if sorted_sizes is None else sorted_sizes
    quad_sizes = [8, 16, 32, 64] if quad_sizes is None else quad_sizes
    rng = Rng(seed)
    tasks: list[tuple[str, int]] = []
    fns = {}
    for n in sorted_sizes:
        f = rng.uniform_array(-1.0, 1.0, n)
        g = rng.uniform_array(-1.0, 1.0, n)
        wf = np.empty_like(f)
        wg = np.empty_like(g)
        fns[("sorted", n)] = (lambda f=f, g=g, wf=wf, wg=wg:
                              sorted_matching_cost(f, g, work_f=wf, work_g=wg))
        tasks.append(("sorted", n))
    for n in quad_sizes:
        C = rng.uniform_matrix(-1.0, 1.0, n, n)
        D = rng.uniform_matrix(-1.0, 1.0, n, n)
        plan = gw.uniform_plan(n, n)
        fns[("quad", n)] = (lambda C=C, D=D, plan=plan: gw.gw_cost(C, D, plan))
        tasks.append(("quad", n))

    # interleave rounds across sizes so slow clock drift hits them evenly
    batches = {}
    for key in tasks:
        fn = fns[key]
        t0 = time.perf_counter()
        fn()
        est = max(time.perf_counter() - t0, 1e-7)
        batches[key] = max(1, min(int(min_time / est), 10_000_000))
    acc: dict[tuple, list[float]] = {key: [] for key in tasks}
    for _ in range(repeats):
        for key in tasks:
            fn = fns[key]
            b = batches[key]
            t0 = time.perf_counter()
            for _ in range(b):
                fn()
            acc[key].append((time.perf_counter() - t0) / b)
    header = ["path", "n", "repeats", "median_seconds"]
    rows = []
    medians: dict[tuple, float] = {}
    for key in tasks:
        ts = sorted(acc[key])
        med = ts[len(ts) // 2]
        medians[key] = med
        rows.append([key[0], key[1], repeats, med])
    summary = {"ratios": {}}
    for path, sizes in (("sorted", sorted_sizes), ("quad", quad_sizes)):
        pairs = []
        for a, b in zip(sizes, sizes[1:]):
            pairs.append(medians[(path, b)] / medians[(path, a)])
        agg = None
        if len(sizes) >= 2:
            doublings = np.log2(sizes[-1] / sizes[0])
            agg = float((medians[(path, sizes[-1])] / medians[(path, sizes[0])])
                        ** (1.0 / doublings))
        summary["ratios"][path] = {"per_pair": pairs, "per_doubling_aggregate": agg}
    manifest = RunManifest(
        command="benchmark",
        config={"sorted_sizes": sorted_sizes, "quad_sizes": quad_sizes,
                "repeats": repeats, "min_time": min_time},
        seed=seed,
    ).to_dict()
    return SweepOutcome(csv=csv_text(header, rows), ok=True, manifest=manifest, summary=summary)


def run_distribution_sweep(pairs: int = 200, length: int = 8, vocab: int = 32,
                           top_k: int = 10, steps: int = 50, lr: float = 0.05,
                           bins: int = 20, seed: int = 0) -> SweepOutcome:
    cfg = DistributionSweepConfig(pairs=pairs, length=length, vocab=vocab,
                                  top_k=top_k, steps=steps, lr=lr, bins=bins, seed=seed)
    result = wd_gwd_distribution_sweep(cfg)
    header = ["phase", "loss_kind", "bin_lo", "bin_hi", "count"]
    rows = [list(r) for r in histogram_rows(result)]
    means = result.means()
    summary = dict(means)
    summary["uld_delta"] = means["mean_uld_after"] - means["mean_uld_before"]
    summary["gld_delta"] = means["mean_gld_after"] - means["mean_gld_before"]
    manifest = RunManifest(
        command="distribution-sweep",
        config={"pairs": pairs, "length": length, "vocab": vocab, "top_k": top_k,
                "steps": steps, "lr": lr, "bins": bins},
        seed=seed,
    ).to_dict()
    return SweepOutcome(csv=csv_text(header, rows), ok=True, manifest=manifest, summary=summary)


@dataclass
class ComputeOutcome:
    report_json: str
    gradient_lgt1: bytes | None
    report: dict
    manifest: dict


def run_compute(pivot_blob: bytes, source_blobs: list[bytes],
                targets_blob: bytes | None, config: LossConfig,
                want_gradient: bool = True, seed: int = 0) -> ComputeOutcome:
    """End-to-end loss evaluation over serialized LGT1 tensors.

    Targets (optional) are a rank-2 [B x L] tensor of integral values;
    negative entries mark masked positions. The report JSON embeds the
    manifest and is byte-deterministic for identical inputs.
    """
    pivot = decode_tensor(pivot_blob)
    if pivot.ndim != 3:
        raise ShapeError(f"pivot must be rank 3, got ndim={pivot.ndim}")
    sources = [decode_tensor(b) for b in source_blobs]
    targets = mask = None
    if targets_blob is not None:
        t = decode_tensor(targets_blob)
        if t.ndim != 2:
            raise ShapeError(f"targets must be rank 2, got ndim={t.ndim}")
        vals = t.astype64()
        if not np.all(vals == np.round(vals)):
            raise ValidationError("targets must be integral")
        mask = vals >= 0
        targets = np.where(mask, vals, 0).astype(np.int64)
    report, grad = fused_loss(pivot, sources, targets, mask, config)
    digests = {"pivot": digest_bytes(pivot_blob)}
    for i, blob in enumerate(source_blobs):
        digests[f"source_{i}"] = digest_bytes(blob)
    if targets_blob is not None:
        digests["targets"] = digest_bytes(targets_blob)
    manifest = RunManifest(command="compute", config=config.to_dict(), seed=seed,
                           input_digests=digests).to_dict()
    doc = {"manifest": manifest, "report": report.to_dict()}
    grad_blob = encode_tensor(grad) if want_gradient else None
    return ComputeOutcome(report_json=json_text(doc), gradient_lgt1=grad_blob,
                          report=report.to_dict(), manifest=manifest)


def build_fixtures(seed: int = 42) -> dict[str, bytes]:
    """The shipped deterministic test tensors plus the documented config.

    pivot/source_a share a 16-wide vocabulary, source_b has 12 (exercises
    cross-vocab padding and truncation), targets is the [B x L] integral
    tensor with one masked (-1) position.
    """
    rng = Rng(seed)
    B, L, d, d_b = 2, 4, 16, 12
    pivot = tensor_from(rng.uniform_array(-3.0, 3.0, B * L * d).reshape(B, L, d))
    source_a = tensor_from(rng.uniform_array(-3.0, 3.0, B * L * d).reshape(B, L, d))
    source_b = tensor_from(rng.uniform_array(-3.0, 3.0, B * L * d_b).reshape(B, L, d_b))
    targets = np.array([[rng.randint(0, d - 1) for _ in range(L)] for _ in range(B)],
                       dtype=np.float64)
    targets[1, 3] = -1.0
    cfg = LossConfig()
    config_json = json_text(cfg.to_dict())
    return {
        "pivot.lgt1": encode_tensor(pivot),
        "source_a.lgt1": encode_tensor(source_a),
        "source_b.lgt1": encode_tensor(source_b),
        "targets.lgt1": encode_tensor(tensor_from(targets)),
        "config.json": config_json.encode(),
    }
