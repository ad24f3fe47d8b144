"""Run manifests and deterministic report serialization.

Every artifact is reproducible byte-for-byte from its inputs: manifests
carry the command, its configuration, the seed, the tool version and
sha256 digests of the input files, never a timestamp. Floats are
serialized with repr (shortest round-trip), so JSON consumers recover
the exact doubles.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np
from dataclasses import dataclass, field

_TOOL_VERSION = "0.1.0"


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    tool_version: str = _TOOL_VERSION
    input_digests: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "tool_version": self.tool_version,
            "input_digests": dict(sorted(self.input_digests.items())),
        }


def digest_bytes(blob: bytes) -> str:
    return hashlib.sha256(blob).hexdigest()


def json_text(obj) -> str:
    """Canonical JSON serialization for reports: 2-space indent, stable
    key order as constructed, trailing newline."""
    return json.dumps(obj, indent=2) + "\n"


def csv_text(header: list[str], rows: list[list]) -> str:
    """Minimal deterministic CSV: repr for floats, str for the rest."""
    def cell(x) -> str:
        if isinstance(x, (bool, np.bool_)):
            return "true" if x else "false"
        if isinstance(x, float):
            return repr(float(x))  # plain float repr even for numpy scalars
        return str(x)

    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(cell(x) for x in row))
    return "\n".join(lines) + "\n"
