"""Thin command-line client for the service.

Every subcommand builds a request model and sends it either to the
in-process handlers (default) or to a running server via --server; the
response artifacts are written to disk verbatim, so outputs are
byte-identical between the two transports and across repeated runs with
the same seed.

Exit codes: 0 success / all assertions pass, 1 internal assertion
failure, 2 input format or IO error, 3 shape/parameter/validation error.
"""

from __future__ import annotations

import argparse
import base64
import os
import sys

from . import errors
from .errors import IoError, LogitGraphError, ParameterError
from .losses import LossConfig
from .reports import json_text
from .service import api, schemas

_DTYPES = {"f32": "float32", "f64": "float64"}


class ServiceClient:
    """Dispatches requests in-process by default, over HTTP with --server."""

    def __init__(self, server: str | None):
        self.server = server.rstrip("/") if server else None

    def call(self, name: str, path: str, request, response_model):
        if self.server is None:
            return getattr(api, name)(request) if request is not None else getattr(api, name)()
        import httpx

        with httpx.Client(timeout=600.0) as client:
            if request is None:
                resp = client.get(f"{self.server}{path}")
            else:
                resp = client.post(f"{self.server}{path}", json=request.model_dump())
        if resp.status_code >= 400:
            try:
                body = resp.json()
                exc_cls = getattr(errors, body.get("error_type", ""), LogitGraphError)
                raise exc_cls(body.get("message", resp.text))
            except (ValueError, KeyError):
                raise LogitGraphError(f"server error {resp.status_code}: {resp.text}")
        return response_model.model_validate(resp.json())


def _read_file(path: str, what: str) -> bytes:
    if not os.path.isfile(path):
        raise errors.FormatError(f"{what} file not found: {path}")
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def _write_file(path: str, data: bytes | str) -> None:
    mode = "wb" if isinstance(data, bytes) else "w"
    try:
        with open(path, mode) as fh:
            fh.write(data)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def _require_out(args) -> str:
    if not args.out:
        raise ParameterError("this command requires --out")
    return args.out


def _write_sweep(args, resp: schemas.SweepResponse) -> int:
    out = _require_out(args)
    _write_file(out, resp.csv)
    _write_file(out + ".manifest.json",
                json_text({"manifest": resp.manifest, "summary": resp.summary, "ok": resp.ok}))
    print(f"{'ok' if resp.ok else 'FAILED'}: wrote {out}")
    return 0 if resp.ok else 1


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x]


def _cmd_compute(args, client: ServiceClient) -> int:
    config = None
    if args.config:
        config_doc = LossConfig.from_json(_read_file(args.config, "config").decode()).to_dict()
        config = config_doc
    if args.dtype:
        config = dict(config or LossConfig().to_dict())
        config["dtype"] = _DTYPES[args.dtype]
    req = schemas.ComputeRequest(
        pivot=_b64(_read_file(args.pivot, "pivot")),
        sources=[_b64(_read_file(p, "source")) for p in args.source],
        targets=_b64(_read_file(args.targets, "targets")) if args.targets else None,
        config=config,
        want_gradient=args.grad_out is not None,
        seed=args.seed,
    )
    resp = client.call("compute", "/v1/compute", req, schemas.ComputeResponse)
    out = _require_out(args)
    _write_file(out, resp.report_json)
    if args.grad_out and resp.gradient:
        _write_file(args.grad_out, base64.b64decode(resp.gradient))
    print(f"total={resp.report['total']!r} -> {out}")
    return 0


def _cmd_verify_bound(args, client: ServiceClient) -> int:
    n_lo, n_hi = (int(x) for x in args.n_range.split(":"))
    m_lo, m_hi = (int(x) for x in args.m_range.split(":"))
    req = schemas.VerifyBoundRequest(trials=args.trials, n_lo=n_lo, n_hi=n_hi,
                                     m_lo=m_lo, m_hi=m_hi, seed=args.seed)
    return _write_sweep(args, client.call("verify_bound", "/v1/verify-bound", req,
                                          schemas.SweepResponse))


def _cmd_gradcheck(args, client: ServiceClient) -> int:
    req = schemas.GradcheckRequest(
        instances=args.instances,
        seed=args.seed,
        kinds=args.kinds.split(",") if args.kinds else None,
        corrupt=args.corrupt,
    )
    return _write_sweep(args, client.call("gradcheck", "/v1/gradcheck", req,
                                          schemas.SweepResponse))


def _cmd_lipschitz(args, client: ServiceClient) -> int:
    req = schemas.LipschitzRequest(
        dims=_int_list(args.dims),
        radii=_float_list(args.radii),
        lam=args.lam,
        samples=args.samples,
        seed=args.seed,
        kinds=args.kinds.split(",") if args.kinds else None,
    )
    return _write_sweep(args, client.call("lipschitz", "/v1/lipschitz", req,
                                          schemas.SweepResponse))


def _cmd_benchmark(args, client: ServiceClient) -> int:
    req = schemas.BenchmarkRequest(
        sorted_sizes=_int_list(args.sorted_sizes) if args.sorted_sizes else None,
        quad_sizes=_int_list(args.quad_sizes) if args.quad_sizes else None,
        repeats=args.repeats,
        min_time=args.min_time,
        seed=args.seed,
    )
    return _write_sweep(args, client.call("benchmark", "/v1/benchmark", req,
                                          schemas.SweepResponse))


def _cmd_graph_export(args, client: ServiceClient) -> int:
    req = schemas.GraphRequest(
        tensor=_b64(_read_file(args.tensor, "tensor")),
        sample=args.sample,
        k=args.k,
        mode=args.mode,
        normalization=args.normalization,
        format=args.format,
    )
    resp = client.call("graph_export", "/v1/graph-export", req, schemas.GraphResponse)
    out = _require_out(args)
    _write_file(out, resp.text)
    _write_file(out + ".manifest.json", json_text({"manifest": resp.manifest}))
    print(f"wrote {out}")
    return 0


def _cmd_distribution_sweep(args, client: ServiceClient) -> int:
    req = schemas.DistributionSweepRequest(
        pairs=args.pairs, length=args.length, vocab=args.vocab, top_k=args.top_k,
        steps=args.steps, lr=args.lr, bins=args.bins, seed=args.seed,
    )
    return _write_sweep(args, client.call("distribution_sweep", "/v1/distribution-sweep",
                                          req, schemas.SweepResponse))


def _cmd_fixtures(args, client: ServiceClient) -> int:
    out_dir = _require_out(args)
    req = schemas.FixturesRequest(seed=args.seed if args.seed else 42)
    resp = client.call("fixtures", "/v1/fixtures", req, schemas.FixturesResponse)
    os.makedirs(out_dir, exist_ok=True)
    for name, payload in sorted(resp.files.items()):
        _write_file(os.path.join(out_dir, name), base64.b64decode(payload))
    print(f"wrote {len(resp.files)} fixture files to {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="64-bit experiment seed")
    common.add_argument("--threads", type=int, default=1,
                        help="scheduling hint; execution is single-threaded for reproducibility")
    common.add_argument("--dtype", choices=sorted(_DTYPES), default=None,
                        help="computation dtype override (compute only)")
    common.add_argument("--out", default=None, help="output file (or directory for fixtures)")
    common.add_argument("--server", default=None,
                        help="base URL of a running service; default runs in-process")

    parser = argparse.ArgumentParser(
        prog="logitgraph",
        description="Structure-aware logit distillation losses and verification sweeps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compute", parents=[common], help="fused loss over tensor files")
    p.add_argument("--pivot", required=True)
    p.add_argument("--source", action="append", default=[], help="repeatable source tensor path")
    p.add_argument("--targets", default=None,
                   help="rank-2 LGT1 of integral targets; negative entries are masked")
    p.add_argument("--config", default=None, help="LossConfig JSON path")
    p.add_argument("--grad-out", default=None, help="write the pivot gradient tensor here")
    p.set_defaults(fn=_cmd_compute)

    p = sub.add_parser("verify-bound", parents=[common],
                       help="uniform-plan bound and expansion-identity sweep")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--n-range", default="2:16")
    p.add_argument("--m-range", default="2:16")
    p.set_defaults(fn=_cmd_verify_bound)

    p = sub.add_parser("gradcheck", parents=[common],
                       help="finite-difference gradient verification")
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--kinds", default=None, help="comma list; default all")
    p.add_argument("--corrupt", action="store_true",
                   help="negative-control hook: bias the analytic gradients")
    p.set_defaults(fn=_cmd_gradcheck)

    p = sub.add_parser("lipschitz", parents=[common], help="gradient-norm bound sweep")
    p.add_argument("--dims", default="128,1024")
    p.add_argument("--radii", default="5,10")
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--kinds", default=None)
    p.set_defaults(fn=_cmd_lipschitz)

    p = sub.add_parser("benchmark", parents=[common], help="complexity-signature timings")
    p.add_argument("--sorted-sizes", default=None, help="comma list; default 2^10..2^17")
    p.add_argument("--quad-sizes", default=None, help="comma list; default 8,16,32,64")
    p.add_argument("--repeats", type=int, default=9)
    p.add_argument("--min-time", type=float, default=0.05)
    p.set_defaults(fn=_cmd_benchmark)

    p = sub.add_parser("graph-export", parents=[common], help="co-activation graph inspection")
    p.add_argument("--tensor", required=True)
    p.add_argument("--sample", type=int, default=0)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--mode", choices=["mask", "gather"], default="mask")
    p.add_argument("--normalization", choices=["raw", "row_stochastic"], default="raw")
    p.add_argument("--format", choices=["json", "dot"], default="json")
    p.set_defaults(fn=_cmd_graph_export)

    p = sub.add_parser("distribution-sweep", parents=[common],
                       help="token-level vs structure-level loss distributions")
    p.add_argument("--pairs", type=int, default=200)
    p.add_argument("--length", type=int, default=8)
    p.add_argument("--vocab", type=int, default=32)
    p.add_argument("--top-k", type=int, default=10)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--bins", type=int, default=20)
    p.set_defaults(fn=_cmd_distribution_sweep)

    p = sub.add_parser("fixtures", parents=[common], help="write the shipped test tensors")
    p.set_defaults(fn=_cmd_fixtures)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 3
    client = ServiceClient(args.server)
    try:
        return args.fn(args, client)
    except LogitGraphError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # malformed input must never produce a traceback
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
