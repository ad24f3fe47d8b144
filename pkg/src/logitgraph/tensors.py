"""Dense tensor container, bit-exact LGT1 file IO, and the deterministic
numeric primitives every other module builds on.

Reduction discipline: every sum that can reach a byte-pinned artifact is
strictly sequential left-to-right. ``seq_sum`` delegates to
``np.add.accumulate``, whose per-element semantics (r[i] = r[i-1] + x[i])
are bitwise identical to a Python accumulation loop; the property suite
asserts that equivalence. BLAS-backed reductions are kept off these paths
(``spectral_norm`` is the one numpy-matvec exception; its consumers are
tolerance-based checks, never golden files).

LGT1 container layout (little-endian throughout):

    bytes 0-3   magic ASCII "LGT1"
    byte  4     dtype code: 1 = float32, 2 = float64
    byte  5     ndim, 1..4
    bytes 6-7   reserved, must be zero
    then        ndim x uint64 dimension sizes
    then        payload, IEEE-754, row-major (last dimension fastest)

No padding, no alignment, no checksum.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import FormatError, IoError, ParameterError, ShapeError, ValidationError

MAGIC = b"LGT1"
_DTYPE_CODES = {"float32": 1, "float64": 2}
_CODE_DTYPES = {1: "float32", 2: "float64"}
_NP_DTYPES = {"float32": np.dtype("<f4"), "float64": np.dtype("<f8")}


def seq_sum(x) -> float:
    """Strictly sequential left-to-right sum of a 1-D array (0.0 if empty)."""
    a = np.ascontiguousarray(x, dtype=np.float64).ravel()
    if a.size == 0:
        return 0.0
    return float(np.add.accumulate(a)[-1])


def seq_dot(x, y) -> float:
    """Sequential sum of the elementwise product (an order-pinned dot)."""
    a = np.ascontiguousarray(x, dtype=np.float64).ravel()
    b = np.ascontiguousarray(y, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ShapeError(f"seq_dot length mismatch: {a.shape[0]} vs {b.shape[0]}")
    return seq_sum(a * b)


@dataclass
class Tensor:
    """Dense row-major array with an explicit dtype tag.

    Rank-3 tensors [batch B x sequence L x vocab d] of model logits are the
    canonical payload; the container itself supports ndim 1..4 (targets are
    rank 2, gradients mirror their pivot).
    """

    data: np.ndarray
    dtype: str

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def validate(self) -> "Tensor":
        if self.dtype not in _DTYPE_CODES:
            raise ValidationError(f"unsupported dtype {self.dtype!r}")
        if not 1 <= self.data.ndim <= 4:
            raise ValidationError(f"ndim must be 1..4, got {self.data.ndim}")
        if self.data.size and not np.isfinite(self.data).all():
            raise ValidationError("tensor contains NaN or Inf entries")
        return self

    def astype64(self) -> np.ndarray:
        """Exact float64 view of the data (f32 embeds exactly)."""
        return np.ascontiguousarray(self.data, dtype=np.float64)


def tensor_from(data, dtype: str = "float64") -> Tensor:
    if dtype not in _NP_DTYPES:
        raise ValidationError(f"unsupported dtype {dtype!r}")
    arr = np.ascontiguousarray(np.asarray(data), dtype=_NP_DTYPES[dtype])
    return Tensor(data=arr, dtype=dtype).validate()


def encode_tensor(t: Tensor) -> bytes:
    """Serialize to LGT1 bytes."""
    t.validate()
    header = MAGIC + bytes([_DTYPE_CODES[t.dtype], t.ndim, 0, 0])
    dims = b"".join(struct.pack("<Q", s) for s in t.shape)
    payload = np.ascontiguousarray(t.data, dtype=_NP_DTYPES[t.dtype]).tobytes(order="C")
    return header + dims + payload


def decode_tensor(blob: bytes) -> Tensor:
    """Parse LGT1 bytes; FormatError on structural problems, ValidationError on NaN/Inf."""
    if len(blob) < 8:
        raise FormatError("file too short for an LGT1 header")
    if blob[:4] != MAGIC:
        raise FormatError(f"bad magic: expected {MAGIC!r}, got {blob[:4]!r}")
    code, ndim, r0, r1 = blob[4], blob[5], blob[6], blob[7]
    if code not in _CODE_DTYPES:
        raise FormatError(f"unknown dtype code {code}")
    if not 1 <= ndim <= 4:
        raise FormatError(f"ndim must be 1..4, got {ndim}")
    if r0 != 0 or r1 != 0:
        raise FormatError("reserved header bytes must be zero")
    dtype = _CODE_DTYPES[code]
    dim_end = 8 + 8 * ndim
    if len(blob) < dim_end:
        raise FormatError("truncated dimension table")
    shape = tuple(struct.unpack("<Q", blob[8 + 8 * i:16 + 8 * i])[0] for i in range(ndim))
    count = 1
    for s in shape:
        count *= s
    itemsize = _NP_DTYPES[dtype].itemsize
    expected = dim_end + count * itemsize
    if len(blob) != expected:
        raise FormatError(
            f"payload size mismatch: header declares {count} scalars "
            f"({expected - dim_end} bytes), file carries {len(blob) - dim_end}"
        )
    arr = np.frombuffer(blob[dim_end:], dtype=_NP_DTYPES[dtype]).reshape(shape).copy()
    return Tensor(data=arr, dtype=dtype).validate()


def read_tensor(path) -> Tensor:
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise FormatError(f"tensor file not found: {path}")
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    return decode_tensor(blob)


def write_tensor(t: Tensor, path) -> None:
    blob = encode_tensor(t)
    try:
        with open(os.fspath(path), "wb") as fh:
            fh.write(blob)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


class SortResult(NamedTuple):
    """Stable descending sort with its permutation.

    values[r] == input[perm[r]], values is non-increasing, and tied entries
    keep their original relative order.
    """

    values: list[float]
    perm: list[int]


def sort_descending(v: Sequence[float]) -> SortResult:
    xs = [float(x) for x in v]
    for x in xs:
        if x != x:
            raise ValidationError("sort_descending: NaN entry")
    neg = [-x for x in xs]
    perm = sorted(range(len(xs)), key=neg.__getitem__)
    return SortResult(values=[xs[i] for i in perm], perm=perm)


def topk_per_position(row: Sequence[float], k: int) -> tuple[list[int], list[float]]:
    """Indices of the k largest entries, by descending value, ties to the
    smaller original index; k is clamped to the row length."""
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    xs = [float(x) for x in row]
    neg = [-x for x in xs]
    order = sorted(range(len(xs)), key=neg.__getitem__)[:min(k, len(xs))]
    return order, [xs[i] for i in order]


def gram_matrix(Z) -> np.ndarray:
    """Co-activation gram matrix C(i,j) = sum_t Z(t,i) * Z(t,j).

    Each unordered pair is summed once (strictly left-to-right over t) and
    mirrored, so the output is symmetric to exact equality.
    """
    A = np.ascontiguousarray(Z, dtype=np.float64)
    if A.ndim != 2:
        raise ShapeError(f"gram_matrix expects a 2-D block, got ndim={A.ndim}")
    L, d = A.shape
    if L < 1:
        raise ShapeError("gram_matrix needs at least one sequence position")
    C = np.zeros((d, d), dtype=np.float64)
    cols = [np.ascontiguousarray(A[:, i]) for i in range(d)]
    for i in range(d):
        ci = cols[i]
        for j in range(i, d):
            v = seq_sum(ci * cols[j])
            C[i, j] = v
            C[j, i] = v
    return C


def softmax(v) -> np.ndarray:
    """Max-shifted softmax; output is positive and sums to 1 within 1e-12."""
    a = np.ascontiguousarray(v, dtype=np.float64).ravel()
    if a.size == 0:
        raise ParameterError("softmax of an empty vector")
    if not np.isfinite(a).all():
        raise ValidationError("softmax: non-finite entry")
    e = np.exp(a - a.max())
    return e / seq_sum(e)


def log_softmax(v) -> np.ndarray:
    """log(softmax(v)) computed without forming small exponentials."""
    a = np.ascontiguousarray(v, dtype=np.float64).ravel()
    if a.size == 0:
        raise ParameterError("log_softmax of an empty vector")
    if not np.isfinite(a).all():
        raise ValidationError("log_softmax: non-finite entry")
    shifted = a - a.max()
    return shifted - np.log(seq_sum(np.exp(shifted)))


class SpectralNormResult(NamedTuple):
    value: float
    converged: bool
    iterations: int


def spectral_norm(M, max_iters: int = 500, tol: float = 1e-12) -> SpectralNormResult:
    """Largest singular value by power iteration on M^T M.

    Deterministic all-ones start; on breakdown (start orthogonal to the top
    subspace) restarts from basis vectors. Converged means two successive
    estimates agree to `tol` relatively. numpy matvecs internally: this
    primitive backs tolerance checks only, never byte-pinned output.
    """
    A = np.ascontiguousarray(M, dtype=np.float64)
    if A.ndim != 2:
        raise ShapeError(f"spectral_norm expects a matrix, got ndim={A.ndim}")
    if A.size == 0:
        return SpectralNormResult(0.0, True, 0)
    n = A.shape[1]
    starts = [np.full(n, 1.0 / np.sqrt(n))] + [None] * min(n, 8)
    for s_idx, start in enumerate(starts):
        if start is None:
            start = np.zeros(n)
            start[s_idx - 1] = 1.0
        v = start
        prev = 0.0
        for it in range(1, max_iters + 1):
            w = A.T @ (A @ v)
            norm_w = float(np.sqrt(np.sum(w * w)))
            if norm_w == 0.0:
                break  # start vector annihilated; try next start
            v = w / norm_w
            est = float(np.sqrt(np.sum((A @ v) ** 2)))
            if prev > 0.0 and abs(est - prev) <= tol * max(prev, 1e-300):
                return SpectralNormResult(est, True, it)
            prev = est
        else:
            return SpectralNormResult(prev, False, max_iters)
        if prev > 0.0:
            return SpectralNormResult(prev, False, max_iters)
    return SpectralNormResult(0.0, True, 0)
