"""Request/response models for the HTTP interface.

Tensors cross the wire as base64-encoded LGT1 bytes (the same container
as the on-disk format), so clients in any language only need the one
codec. All report floats travel as JSON numbers, which round-trip
float64 exactly under repr-based serialization.
"""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field


class ComputeRequest(BaseModel):
    pivot: str = Field(description="base64 LGT1, rank-3 [B x L x d]")
    sources: list[str] = Field(default_factory=list)
    targets: Optional[str] = Field(default=None, description="base64 LGT1, rank-2 [B x L]; negative = masked")
    config: Optional[dict] = None
    want_gradient: bool = True
    seed: int = 0


class ComputeResponse(BaseModel):
    report: dict
    manifest: dict
    report_json: str
    gradient: Optional[str] = None   # base64 LGT1, pivot-shaped


class GraphRequest(BaseModel):
    tensor: str
    sample: int = 0
    k: int = 10
    mode: str = "mask"
    normalization: str = "raw"
    format: str = "json"             # "json" | "dot"


class GraphResponse(BaseModel):
    graph: Optional[dict] = None
    dot: Optional[str] = None
    text: str                        # the artifact exactly as written to disk
    manifest: dict


class VerifyBoundRequest(BaseModel):
    trials: int = 1000
    n_lo: int = 2
    n_hi: int = 16
    m_lo: int = 2
    m_hi: int = 16
    seed: int = 0


class GradcheckRequest(BaseModel):
    instances: int = 100
    seed: int = 0
    kinds: Optional[list[str]] = None
    corrupt: bool = False


class LipschitzRequest(BaseModel):
    dims: list[int] = Field(default_factory=lambda: [128, 1024])
    radii: list[float] = Field(default_factory=lambda: [5.0, 10.0])
    lam: float = 1.0
    samples: int = 1000
    seed: int = 0
    kinds: Optional[list[str]] = None


class BenchmarkRequest(BaseModel):
    sorted_sizes: Optional[list[int]] = None
    quad_sizes: Optional[list[int]] = None
    repeats: int = 9
    min_time: float = 0.05
    seed: int = 0


class DistributionSweepRequest(BaseModel):
    pairs: int = 200
    length: int = 8
    vocab: int = 32
    top_k: int = 10
    steps: int = 50
    lr: float = 0.05
    bins: int = 20
    seed: int = 0


class FixturesRequest(BaseModel):
    seed: int = 42


class FixturesResponse(BaseModel):
    files: dict     # name -> base64 bytes


class SweepResponse(BaseModel):
    csv: str
    ok: bool
    manifest: dict
    summary: dict


class VersionResponse(BaseModel):
    name: str
    version: str
    config_defaults: dict


class ErrorBody(BaseModel):
    error_type: str
    message: str
    exit_code: int
