"""Service handlers: every endpoint body lives here as a plain function
from request model to response model, so the CLI can call them in-process
and the FastAPI app only does routing and error translation."""

from __future__ import annotations

import base64

from .. import __version__
from ..errors import ParameterError
from ..experiments import (
    build_fixtures,
    run_benchmark,
    run_compute,
    run_distribution_sweep,
    run_gradcheck_sweep,
    run_lipschitz_sweep,
    run_verify_bound,
)
from ..graphs import build_graph, graph_to_dot, graph_to_json_dict, sparsify
from ..losses import LossConfig
from ..reports import RunManifest, digest_bytes, json_text
from ..tensors import decode_tensor
from . import schemas


def _b64decode(payload: str, what: str) -> bytes:
    try:
        return base64.b64decode(payload.encode("ascii"), validate=True)
    except Exception as exc:
        raise ParameterError(f"{what} is not valid base64: {exc}") from exc


def compute(req: schemas.ComputeRequest) -> schemas.ComputeResponse:
    cfg = LossConfig.from_dict(req.config) if req.config is not None else LossConfig()
    outcome = run_compute(
        pivot_blob=_b64decode(req.pivot, "pivot"),
        source_blobs=[_b64decode(s, f"source_{i}") for i, s in enumerate(req.sources)],
        targets_blob=_b64decode(req.targets, "targets") if req.targets else None,
        config=cfg,
        want_gradient=req.want_gradient,
        seed=req.seed,
    )
    grad_b64 = None
    if outcome.gradient_lgt1 is not None:
        grad_b64 = base64.b64encode(outcome.gradient_lgt1).decode("ascii")
    return schemas.ComputeResponse(
        report=outcome.report,
        manifest=outcome.manifest,
        report_json=outcome.report_json,
        gradient=grad_b64,
    )


def graph_export(req: schemas.GraphRequest) -> schemas.GraphResponse:
    if req.format not in ("json", "dot"):
        raise ParameterError(f"format must be 'json' or 'dot', got {req.format!r}")
    blob = _b64decode(req.tensor, "tensor")
    tensor = decode_tensor(blob)
    sel = sparsify(tensor, req.sample, req.k, req.mode)
    g = build_graph(sel, req.normalization)
    manifest = RunManifest(
        command="graph-export",
        config={"sample": req.sample, "k": req.k, "mode": req.mode,
                "normalization": req.normalization, "format": req.format},
        seed=0,
        input_digests={"tensor": digest_bytes(blob)},
    ).to_dict()
    if req.format == "json":
        doc = graph_to_json_dict(g)
        return schemas.GraphResponse(graph=doc, dot=None, text=json_text(doc),
                                     manifest=manifest)
    dot = graph_to_dot(g)
    return schemas.GraphResponse(graph=None, dot=dot, text=dot, manifest=manifest)


def verify_bound(req: schemas.VerifyBoundRequest) -> schemas.SweepResponse:
    out = run_verify_bound(req.trials, req.n_lo, req.n_hi, req.m_lo, req.m_hi, req.seed)
    return schemas.SweepResponse(csv=out.csv, ok=out.ok, manifest=out.manifest, summary=out.summary)


def gradcheck(req: schemas.GradcheckRequest) -> schemas.SweepResponse:
    out = run_gradcheck_sweep(req.instances, req.seed, req.kinds, req.corrupt)
    return schemas.SweepResponse(csv=out.csv, ok=out.ok, manifest=out.manifest, summary=out.summary)


def lipschitz(req: schemas.LipschitzRequest) -> schemas.SweepResponse:
    out = run_lipschitz_sweep(req.dims, req.radii, req.lam, req.samples, req.seed, req.kinds)
    return schemas.SweepResponse(csv=out.csv, ok=out.ok, manifest=out.manifest, summary=out.summary)


def benchmark(req: schemas.BenchmarkRequest) -> schemas.SweepResponse:
    out = run_benchmark(req.sorted_sizes, req.quad_sizes, req.repeats, req.min_time, req.seed)
    return schemas.SweepResponse(csv=out.csv, ok=out.ok, manifest=out.manifest, summary=out.summary)


def distribution_sweep(req: schemas.DistributionSweepRequest) -> schemas.SweepResponse:
    out = run_distribution_sweep(req.pairs, req.length, req.vocab, req.top_k,
                                 req.steps, req.lr, req.bins, req.seed)
    return schemas.SweepResponse(csv=out.csv, ok=out.ok, manifest=out.manifest, summary=out.summary)


def fixtures(req: schemas.FixturesRequest) -> schemas.FixturesResponse:
    files = build_fixtures(req.seed)
    return schemas.FixturesResponse(
        files={name: base64.b64encode(blob).decode("ascii") for name, blob in files.items()}
    )


def version() -> schemas.VersionResponse:
    return schemas.VersionResponse(
        name="logitgraph",
        version=__version__,
        config_defaults=LossConfig().to_dict(),
    )
