"""Bit-exact binary checkpoint serialization and checkpoint averaging.

File layout (little-endian):
  magic "DSTL" | format version u32 | tensor count u32 |
  per tensor: name length u32, UTF-8 name, rank u32, dims u32 each,
  values float32 | step u64 | phase tag u8
"""

import struct
from dataclasses import dataclass

import numpy as np

from .params import ParamSet

MAGIC = b"DSTL"
FORMAT_VERSION = 1

PHASES = ("burn_in", "train_main", "fine_tune")


class CheckpointError(Exception):
    pass


@dataclass
class Checkpoint:
    params: ParamSet
    step: int = 0
    phase: str = "burn_in"

    def __post_init__(self):
        if self.step < 0:
            raise CheckpointError("step must be >= 0")
        if self.phase not in PHASES:
            raise CheckpointError("unknown phase: %r" % self.phase)


def serialize_checkpoint(ckpt):
    parts = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
    names = ckpt.params.names()
    parts.append(struct.pack("<I", len(names)))
    for name in names:
        tensor = ckpt.params[name]
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<I", tensor.ndim))
        for dim in tensor.shape:
            parts.append(struct.pack("<I", dim))
        parts.append(tensor.astype("<f4").tobytes())
    parts.append(struct.pack("<Q", ckpt.step))
    parts.append(struct.pack("<B", PHASES.index(ckpt.phase)))
    return b"".join(parts)


def deserialize_checkpoint(data):
    if data[:4] != MAGIC:
        raise CheckpointError("bad magic bytes")
    offset = 4
    version, = struct.unpack_from("<I", data, offset)
    offset += 4
    if version != FORMAT_VERSION:
        raise CheckpointError("unsupported format version %d" % version)
    count, = struct.unpack_from("<I", data, offset)
    offset += 4
    params = ParamSet()
    for _ in range(count):
        name_len, = struct.unpack_from("<I", data, offset)
        offset += 4
        name = data[offset:offset + name_len].decode("utf-8")
        offset += name_len
        rank, = struct.unpack_from("<I", data, offset)
        offset += 4
        shape = struct.unpack_from("<%dI" % rank, data, offset)
        offset += 4 * rank
        size = int(np.prod(shape)) if rank else 1
        values = np.frombuffer(data, dtype="<f4", count=size, offset=offset)
        offset += 4 * size
        params.set(name, values.reshape(shape).astype(np.float64))
    step, = struct.unpack_from("<Q", data, offset)
    offset += 8
    phase_tag, = struct.unpack_from("<B", data, offset)
    if phase_tag >= len(PHASES):
        raise CheckpointError("bad phase tag %d" % phase_tag)
    return Checkpoint(params=params, step=step, phase=PHASES[phase_tag])


def save_checkpoint(ckpt, path):
    with open(path, "wb") as f:
        f.write(serialize_checkpoint(ckpt))


def load_checkpoint(path):
    with open(path, "rb") as f:
        return deserialize_checkpoint(f.read())


def average_checkpoints(checkpoints, last_n):
    """Element-wise mean over the final min(last_n, len) checkpoints."""
    if not checkpoints:
        raise CheckpointError("no checkpoints to average")
    if last_n < 1:
        raise CheckpointError("last_n must be >= 1")
    selected = checkpoints[-min(last_n, len(checkpoints)):]
    first = selected[0]
    for ckpt in selected[1:]:
        if not first.params.same_shapes(ckpt.params):
            raise CheckpointError("checkpoint name/shape mismatch")
    averaged = first.params.zeros_like()
    for ckpt in selected:
        averaged.add_(ckpt.params, scale=1.0 / len(selected))
    return Checkpoint(
        params=averaged,
        step=max(c.step for c in selected),
        phase=selected[-1].phase,
    )
