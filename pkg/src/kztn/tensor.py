"""Dense tensor kernels: contraction, truncated SVD, gauging, serialization.

All tensors are numpy arrays of complex128 in row-major (C) layout. A tensor
train is a plain list of such arrays; site tensors carry their bond indices
first and last, i.e. (left bond, ...site indices..., right bond).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionError, FormatError, NumericalError

MAGIC = b"KZTN"
FORMAT_VERSION = 1

# Randomized-SVD sketch settings for the fast path in truncated_svd. The
# sketch matrix is regenerated deterministically from a fixed seed, so
# results are reproducible across runs and processes.
_SKETCH_SEED = 0x4B5A
_SKETCH_OVERSAMPLE = 16
_SKETCH_POWER_ITERS = 2
_EXACT_MIN_DIM = 320
_sketch_cache: dict[tuple[int, int], np.ndarray] = {}


def as_tensor(data) -> np.ndarray:
    """Return ``data`` as a contiguous complex128 array."""
    return np.ascontiguousarray(data, dtype=np.complex128)


def contract(a, b, pairs) -> np.ndarray:
    """Contract tensors ``a`` and ``b`` over the given axis pairs.

    ``pairs`` is a sequence of (axis_of_a, axis_of_b). The result carries the
    unpaired axes of ``a`` (in order) followed by those of ``b``.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    ax_a = [p[0] for p in pairs]
    ax_b = [p[1] for p in pairs]
    for i, j in zip(ax_a, ax_b):
        if a.shape[i] != b.shape[j]:
            raise DimensionError(
                f"cannot contract axis {i} (extent {a.shape[i]}) with "
                f"axis {j} (extent {b.shape[j]})"
            )
    return np.tensordot(a, b, axes=(ax_a, ax_b))


@dataclass
class SvdResult:
    """Truncated SVD factors.

    ``left_isometry`` has orthonormal columns, ``right_isometry`` orthonormal
    rows; ``discarded_weight`` is the squared weight of the dropped singular
    values relative to the total squared weight.
    """

    left_isometry: np.ndarray
    singular_values: np.ndarray
    right_isometry: np.ndarray
    discarded_weight: float

    @property
    def kept_rank(self) -> int:
        return self.singular_values.size


def _select_rank(sq: np.ndarray, total: float, max_rank: int, cutoff: float) -> int:
    # Keep every singular value whose squared relative tail (itself included)
    # exceeds the cutoff, then cap at max_rank. Trailing exact zeros are
    # dropped even at cutoff 0.
    tails = np.cumsum(sq[::-1])[::-1]
    kept = int(np.count_nonzero(tails > cutoff * total))
    return max(1, min(kept, max_rank))


def _sketch(n: int, width: int) -> np.ndarray:
    key = (n, width)
    g = _sketch_cache.get(key)
    if g is None:
        rng = np.random.default_rng(_SKETCH_SEED)
        g = rng.standard_normal((n, width)) + 1j * rng.standard_normal((n, width))
        _sketch_cache[key] = g
    return g


def _randomized_factors(matrix: np.ndarray, max_rank: int):
    # Range finder with power iterations; accurate for the rapidly decaying
    # spectra produced by gate splits. Deterministic via the fixed sketch.
    width = min(max_rank + _SKETCH_OVERSAMPLE, min(matrix.shape))
    y = matrix @ _sketch(matrix.shape[1], width)
    q, _ = np.linalg.qr(y)
    for _ in range(_SKETCH_POWER_ITERS):
        z, _ = np.linalg.qr(matrix.conj().T @ q)
        q, _ = np.linalg.qr(matrix @ z)
    b = q.conj().T @ matrix
    u_b, s, vh = np.linalg.svd(b, full_matrices=False)
    return q @ u_b, s, vh


def truncated_svd(matrix, max_rank: int, cutoff: float = 0.0,
                  method: str = "auto") -> SvdResult:
    """Truncated SVD of a rank-2 tensor.

    Drops the largest trailing group of singular values whose squared weight,
    relative to the total, stays at or below ``cutoff``; the kept rank is then
    capped at ``max_rank``. ``method`` selects the backend: "exact" (LAPACK),
    "randomized" (deterministic sketch, for matrices much larger than the
    kept rank), or "auto".
    """
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise DimensionError(f"expected a rank-2 tensor, got rank {matrix.ndim}")
    if max_rank < 1:
        raise DimensionError(f"max_rank must be >= 1, got {max_rank}")
    if not (0.0 <= cutoff < 1.0):
        raise NumericalError(f"cutoff must lie in [0, 1), got {cutoff}")
    if not np.all(np.isfinite(matrix)):
        raise NumericalError(
            f"non-finite matrix entries for SVD of extents {matrix.shape}"
        )

    min_dim = min(matrix.shape)
    use_randomized = method == "randomized" or (
        method == "auto"
        and min_dim > _EXACT_MIN_DIM
        and 3 * max_rank <= min_dim
    )

    total = float(np.vdot(matrix, matrix).real)
    if total == 0.0:
        u = np.zeros((matrix.shape[0], 1), dtype=np.complex128)
        vh = np.zeros((1, matrix.shape[1]), dtype=np.complex128)
        u[0, 0] = 1.0
        vh[0, 0] = 1.0
        return SvdResult(u, np.zeros(1), vh, 0.0)

    if use_randomized:
        u, s, vh = _randomized_factors(matrix.astype(np.complex128, copy=False),
                                       max_rank)
        sq = s**2
        kept = _select_rank(sq, total, max_rank, cutoff)
        discarded = max(0.0, (total - float(np.sum(sq[:kept]))) / total)
        return SvdResult(np.ascontiguousarray(u[:, :kept]),
                         np.ascontiguousarray(s[:kept]),
                         np.ascontiguousarray(vh[:kept]),
                         discarded)

    try:
        u, s, vh = np.linalg.svd(matrix, full_matrices=False)
    except np.linalg.LinAlgError:
        try:
            u, s, vh = scipy.linalg.svd(matrix, full_matrices=False,
                                        lapack_driver="gesvd")
        except Exception as exc:
            raise NumericalError(
                f"SVD did not converge for extents {matrix.shape}"
            ) from exc
    sq = s**2
    kept = _select_rank(sq, total, max_rank, cutoff)
    discarded = float(np.sum(sq[kept:]) / total)
    return SvdResult(np.ascontiguousarray(u[:, :kept]),
                     np.ascontiguousarray(s[:kept]),
                     np.ascontiguousarray(vh[:kept]),
                     discarded)


def _qr_pos(matrix: np.ndarray):
    """QR with the gauge freedom fixed: R has a non-negative real diagonal."""
    q, r = np.linalg.qr(matrix)
    diag = np.diagonal(r).copy()
    phase = np.where(np.abs(diag) > 1e-300, diag / np.abs(diag), 1.0)
    return q * phase, r * phase.conj()[:, None]


def _lq_pos(matrix: np.ndarray):
    """LQ counterpart of :func:`_qr_pos`: L has a non-negative real diagonal."""
    q, r = _qr_pos(matrix.conj().T)
    return r.conj().T, q.conj().T


def _check_train(train):
    if not train:
        raise DimensionError("empty tensor train")
    for j, t in enumerate(train):
        if np.ndim(t) < 2:
            raise DimensionError(f"site {j}: train tensors need rank >= 2")
    for j in range(len(train) - 1):
        if train[j].shape[-1] != train[j + 1].shape[0]:
            raise DimensionError(
                f"bond mismatch between sites {j} and {j + 1}: "
                f"{train[j].shape[-1]} vs {train[j + 1].shape[0]}"
            )


def gauge(train, center: int) -> list:
    """Return a gauged copy of ``train`` with the orthogonality center at ``center``.

    Tensors left of the center become left-isometric (over left bond plus all
    site indices), tensors right of it right-isometric. The represented
    global tensor is unchanged. 0-based ``center``.
    """
    _check_train(train)
    n = len(train)
    if not 0 <= center < n:
        raise DimensionError(f"center {center} outside train of length {n}")
    out = [np.asarray(t, dtype=np.complex128) for t in train]
    for j in range(center):
        t = out[j]
        left, right = t.shape[0], t.shape[-1]
        mid = t.shape[1:-1]
        q, r = _qr_pos(t.reshape(left * int(np.prod(mid, dtype=int)), right))
        out[j] = q.reshape(left, *mid, q.shape[1])
        out[j + 1] = np.tensordot(r, out[j + 1], axes=(1, 0))
    for j in range(n - 1, center, -1):
        t = out[j]
        left, right = t.shape[0], t.shape[-1]
        mid = t.shape[1:-1]
        low, q = _lq_pos(t.reshape(left, int(np.prod(mid, dtype=int)) * right))
        out[j] = q.reshape(q.shape[0], *mid, right)
        out[j - 1] = np.tensordot(out[j - 1], low, axes=(out[j - 1].ndim - 1, 0))
    return out


def train_norm(train, center: int | None = None) -> float:
    """Norm of the global tensor a train represents.

    With ``center`` given the train is assumed gauged there and the norm is
    read off the center tensor; otherwise the full transfer contraction runs.
    """
    if center is not None:
        return float(np.linalg.norm(train[center]))
    env = np.ones((1, 1), dtype=np.complex128)
    for t in train:
        t = np.asarray(t)
        tmp = np.tensordot(env, t, axes=(1, 0))
        axes = list(range(t.ndim - 1))
        env = np.tensordot(t.conj(), tmp, axes=(axes, axes))
    return float(np.sqrt(abs(env[0, 0])))


def tensor_to_bytes(tensor) -> bytes:
    """Serialize one tensor: magic, version, rank, extents (u64 LE), data."""
    t = as_tensor(tensor)
    header = MAGIC + struct.pack("<BB", FORMAT_VERSION, t.ndim)
    extents = struct.pack(f"<{t.ndim}Q", *t.shape)
    return header + extents + t.astype("<c16", copy=False).tobytes(order="C")


def tensor_from_bytes(buf: bytes, offset: int = 0):
    """Inverse of :func:`tensor_to_bytes`. Returns (tensor, next_offset)."""
    if buf[offset:offset + 4] != MAGIC:
        raise FormatError("bad magic bytes (expected KZTN)")
    if len(buf) < offset + 6:
        raise FormatError("truncated tensor header")
    version, rank = struct.unpack_from("<BB", buf, offset + 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported tensor format version {version}")
    pos = offset + 6
    if len(buf) < pos + 8 * rank:
        raise FormatError("truncated extent list")
    extents = struct.unpack_from(f"<{rank}Q", buf, pos)
    pos += 8 * rank
    count = int(np.prod(extents, dtype=np.int64)) if rank else 1
    nbytes = 16 * count
    if len(buf) < pos + nbytes:
        raise FormatError("truncated tensor payload")
    data = np.frombuffer(buf, dtype="<c16", count=count, offset=pos)
    tensor = data.astype(np.complex128).reshape(extents)
    return tensor, pos + nbytes
