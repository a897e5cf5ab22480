"""Binary teacher-logit dumps and network checkpoints.

Both formats are little-endian with a 4-byte magic and a ``u32`` version.

Logit dump (``TKLD``)::

    magic "TKLD" | version u32 = 1 | N u32 | C u32
    N*C float32 logits, row-major
    N   uint32 labels

Checkpoint (``TRKD``)::

    magic "TRKD" | version u32 = 1 | L u32 (linear layers) | L+1 u32 widths
    | C u32 (classes)
    float64 weights of layers 0..L-1, each (fan_in, fan_out) row-major
    float64 biases of layers 0..L-1
    float64 class weights (C, widths[-1]) row-major
"""
import os
import struct
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .exceptions import DumpValidationError, FormatError, TruncationError, VersionError
from .network import Mlp
from .partition import partition_batch
from .prob import log_softmax, temperature_scale

__all__ = [
    "LogitDump",
    "write_dump",
    "read_dump",
    "analyze_partitions",
    "Checkpoint",
    "save_checkpoint",
    "load_checkpoint",
]

DUMP_MAGIC = b"TKLD"
DUMP_VERSION = 1
CKPT_MAGIC = b"TRKD"
CKPT_VERSION = 1
_U32 = struct.Struct("<I")


@dataclass(frozen=True, eq=False)
class LogitDump:
    logits: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        logits = np.ascontiguousarray(self.logits, dtype=np.float32)
        labels = np.ascontiguousarray(self.labels, dtype=np.uint32)
        if logits.ndim != 2 or labels.shape != (logits.shape[0],):
            raise DumpValidationError("need an (N, C) logit matrix and N labels")
        if not np.all(np.isfinite(logits)):
            raise DumpValidationError("logits must be finite")
        if labels.size and labels.max() >= logits.shape[1]:
            raise DumpValidationError(f"label {labels.max()} >= number of classes {logits.shape[1]}")
        object.__setattr__(self, "logits", logits)
        object.__setattr__(self, "labels", labels)

    @property
    def num_examples(self):
        return self.logits.shape[0]

    @property
    def num_classes(self):
        return self.logits.shape[1]

    def __eq__(self, other):
        return (isinstance(other, LogitDump)
                and self.logits.tobytes() == other.logits.tobytes()
                and self.labels.tobytes() == other.labels.tobytes()
                and self.logits.shape == other.logits.shape)


def _dump_bytes(dump):
    header = DUMP_MAGIC + struct.pack("<III", DUMP_VERSION, dump.num_examples, dump.num_classes)
    return header + dump.logits.astype("<f4").tobytes() + dump.labels.astype("<u4").tobytes()


def write_dump(dump, path):
    with open(path, "wb") as fh:
        fh.write(_dump_bytes(dump))


def read_dump(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4 or data[:4] != DUMP_MAGIC:
        raise FormatError(f"{path}: not a TKLD logit dump (bad magic)")
    if len(data) < 16:
        raise TruncationError(f"{path}: truncated header")
    version, n, c = struct.unpack_from("<III", data, 4)
    if version != DUMP_VERSION:
        raise VersionError(f"{path}: unsupported dump version {version}")
    expected = 16 + 4 * n * c + 4 * n
    if len(data) < expected:
        raise TruncationError(f"{path}: expected {expected} bytes, found {len(data)}")
    if len(data) > expected:
        raise FormatError(f"{path}: {len(data) - expected} trailing bytes")
    logits = np.frombuffer(data, dtype="<f4", count=n * c, offset=16).reshape(n, c)
    labels = np.frombuffer(data, dtype="<u4", count=n, offset=16 + 4 * n * c)
    return LogitDump(logits.astype(np.float32), labels.astype(np.uint32))


def analyze_partitions(dump, tau_list, temperature=1.0):
    """Confusion-set statistics of the dumped teacher posteriors, one record per tau.

    Posteriors are recomputed in float64 from the (temperature-scaled)
    logits.
    """
    logp = log_softmax(temperature_scale(dump.logits.astype(np.float64), temperature))
    probs = np.exp(logp)
    y = dump.labels.astype(np.int64)
    out = []
    for tau in tau_list:
        part = partition_batch(probs, y, float(tau))
        size = part.confusion_size
        out.append({
            "tau": float(tau),
            "num_examples": int(dump.num_examples),
            "confusion_size_mean": float(size.mean()),
            "confusion_size_median": float(np.median(size)),
            "confusion_size_max": int(size.max()),
            "mass_target_mean": float(part.mass_target.mean()),
            "mass_confusion_mean": float(part.mass_confusion.mean()),
            "mass_background_mean": float(part.mass_background.mean()),
        })
    return out


class Checkpoint(NamedTuple):
    net: Mlp
    class_weights: np.ndarray


def save_checkpoint(path, net, class_weights):
    W = np.asarray(class_weights, dtype=np.float64)
    widths = net.widths
    if W.ndim != 2 or W.shape[1] != widths[-1]:
        raise FormatError("class weights must be (C, embedding_dim)")
    parts = [CKPT_MAGIC, _U32.pack(CKPT_VERSION), _U32.pack(len(net.weights))]
    parts += [_U32.pack(w) for w in widths]
    parts.append(_U32.pack(W.shape[0]))
    parts += [w.astype("<f8").tobytes() for w in net.weights]
    parts += [b.astype("<f8").tobytes() for b in net.biases]
    parts.append(W.astype("<f8").tobytes())
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(b"".join(parts))
    os.replace(tmp, path)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4 or data[:4] != CKPT_MAGIC:
        raise FormatError(f"{path}: not a TRKD checkpoint (bad magic)")
    if len(data) < 12:
        raise TruncationError(f"{path}: truncated header")
    version, n_layers = struct.unpack_from("<II", data, 4)
    if version != CKPT_VERSION:
        raise VersionError(f"{path}: unsupported checkpoint version {version}")
    head = 12 + 4 * (n_layers + 2)
    if n_layers < 1 or len(data) < head:
        raise TruncationError(f"{path}: truncated header")
    widths = struct.unpack_from(f"<{n_layers + 1}I", data, 12)
    n_classes = _U32.unpack_from(data, 12 + 4 * (n_layers + 1))[0]
    shapes = list(zip(widths[:-1], widths[1:]))
    n_floats = sum(a * b for a, b in shapes) + sum(widths[1:]) + n_classes * widths[-1]
    expected = head + 8 * n_floats
    if len(data) < expected:
        raise TruncationError(f"{path}: expected {expected} bytes, found {len(data)}")
    if len(data) > expected:
        raise FormatError(f"{path}: {len(data) - expected} trailing bytes")
    flat = np.frombuffer(data, dtype="<f8", count=n_floats, offset=head).astype(np.float64)
    pos = 0
    weights, biases = [], []
    for a, b in shapes:
        weights.append(flat[pos:pos + a * b].reshape(a, b))
        pos += a * b
    for _, b in shapes:
        biases.append(flat[pos:pos + b])
        pos += b
    W = flat[pos:].reshape(n_classes, widths[-1])
    return Checkpoint(Mlp(weights, biases), W)
