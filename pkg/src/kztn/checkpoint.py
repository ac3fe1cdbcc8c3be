"""Binary checkpoints for both engine state types.

Layout: container magic + version + kind byte, a small fixed header per
kind, the truncation log, then one serialized tensor block per site. All
floats are little-endian IEEE doubles, so a round trip is bit-exact.
"""

from __future__ import annotations

import os
import struct
import tempfile

from .errors import FormatError
from .lptn import LptnState
from .mps import MpsState
from .tensor import MAGIC, tensor_from_bytes, tensor_to_bytes

CONTAINER_VERSION = 1
KIND_MPS = 1
KIND_LPTN = 2


def _pack_common(state) -> bytes:
    center = -1 if state.gauge_center is None else state.gauge_center
    log = state.truncation_log
    head = struct.pack("<qQQ", center, len(state.tensors), len(log))
    return head + struct.pack(f"<{len(log)}d", *log)


def state_to_bytes(state) -> bytes:
    if isinstance(state, MpsState):
        body = struct.pack("<B", KIND_MPS) + _pack_common(state)
    elif isinstance(state, LptnState):
        body = (struct.pack("<B", KIND_LPTN)
                + struct.pack("<dd", state.beta, state.trace_norm)
                + _pack_common(state))
    else:
        raise FormatError(f"cannot checkpoint {type(state).__name__}")
    blocks = b"".join(tensor_to_bytes(t) for t in state.tensors)
    return MAGIC + struct.pack("<B", CONTAINER_VERSION) + body + blocks


def state_from_bytes(buf: bytes):
    if buf[:4] != MAGIC:
        raise FormatError(f"bad container magic {buf[:4]!r}")
    if len(buf) < 6:
        raise FormatError("truncated container header")
    version, kind = buf[4], buf[5]
    if version != CONTAINER_VERSION:
        raise FormatError(f"unsupported container version {version}")
    offset = 6
    beta = trace_norm = None
    if kind == KIND_LPTN:
        if len(buf) < offset + 16:
            raise FormatError("truncated purification header")
        beta, trace_norm = struct.unpack_from("<dd", buf, offset)
        offset += 16
    elif kind != KIND_MPS:
        raise FormatError(f"unknown state kind {kind}")
    if len(buf) < offset + 24:
        raise FormatError("truncated container header")
    center, n_sites, n_log = struct.unpack_from("<qQQ", buf, offset)
    offset += 24
    if len(buf) < offset + 8 * n_log:
        raise FormatError("truncated truncation log")
    log = list(struct.unpack_from(f"<{n_log}d", buf, offset))
    offset += 8 * n_log
    tensors = []
    for _ in range(n_sites):
        t, offset = tensor_from_bytes(buf, offset)
        tensors.append(t)
    if offset != len(buf):
        raise FormatError(f"{len(buf) - offset} trailing bytes in container")
    gauge = None if center < 0 else int(center)
    expected_rank = 3 if kind == KIND_MPS else 4
    for t in tensors:
        if t.ndim != expected_rank:
            raise FormatError(
                f"rank-{t.ndim} tensor in a kind-{kind} container")
    if kind == KIND_MPS:
        return MpsState(tensors, gauge, log)
    return LptnState(tensors, float(beta), float(trace_norm), gauge, log)


def save_state(state, path):
    """Write atomically: a torn write never leaves a half-checkpoint behind."""
    payload = state_to_bytes(state)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_state(path):
    with open(path, "rb") as fh:
        return state_from_bytes(fh.read())


def checkpoint_roundtrip(state, path):
    save_state(state, path)
    return load_state(path)
