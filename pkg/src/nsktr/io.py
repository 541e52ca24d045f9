"""Binary tensor/model files and dataset directories.

Tensor file ("NSKT", version 1), little-endian throughout:

    bytes  0-3   magic b"NSKT"
    bytes  4-7   u32 version (= 1)
    bytes  8-11  u32 D (number of modes)
    next 8*D     u64 dims
    rest         f64 values, column-major linearization

Model file ("NSKM", version 1):

    magic b"NSKM" | u32 version | u32 D | u32 R | D x u64 dims
    D x (f64 lambda1, f64 lambda2, f64 lambda3, u8 nonneg)
    D factor payloads, each I_d*R f64 in column-major order
    u32 json length | UTF-8 JSON metadata blob

Writes are atomic (temp file + rename).  Readers validate magic,
version, and exact payload length.
"""

import json
import os
import struct
import tempfile

import numpy as np

from .regularizers import ModeRegConfig
from .tensor import DenseTensor, KruskalModel

__all__ = [
    "FileFormatError",
    "TENSOR_MAGIC",
    "MODEL_MAGIC",
    "FORMAT_VERSION",
    "write_tensor",
    "read_tensor",
    "write_model",
    "read_model",
    "write_dataset",
    "read_dataset",
]

TENSOR_MAGIC = b"NSKT"
MODEL_MAGIC = b"NSKM"
FORMAT_VERSION = 1

# Refuse absurd headers instead of attempting the allocation.
_MAX_ELEMENTS = 1 << 40


class FileFormatError(Exception):
    """The file is not a valid tensor/model file."""


def _atomic_write(path, payload):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".nsktr-tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_tensor(path, t):
    """Serialize a DenseTensor; bit-exact round trip with read_tensor."""
    parts = [TENSOR_MAGIC,
             struct.pack("<II", FORMAT_VERSION, t.ndim),
             np.asarray(t.dims, dtype="<u8").tobytes(),
             np.ascontiguousarray(t.values, dtype="<f8").tobytes()]
    _atomic_write(path, b"".join(parts))


def read_tensor(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != TENSOR_MAGIC:
        raise FileFormatError(f"{path}: not a tensor file (bad magic)")
    version, ndim = struct.unpack_from("<II", blob, 4)
    if version != FORMAT_VERSION:
        raise FileFormatError(f"{path}: unsupported tensor file version {version}")
    if ndim < 1:
        raise FileFormatError(f"{path}: tensor file declares {ndim} modes")
    offset = 12
    if len(blob) < offset + 8 * ndim:
        raise FileFormatError(f"{path}: truncated tensor file header")
    dims = np.frombuffer(blob, dtype="<u8", count=ndim, offset=offset)
    offset += 8 * ndim
    count = 1
    for d in dims:
        count *= int(d)
        if count > _MAX_ELEMENTS:
            raise FileFormatError(f"{path}: dims {tuple(int(x) for x in dims)} overflow")
    expected = offset + 8 * count
    if len(blob) != expected:
        raise FileFormatError(
            f"{path}: payload has {len(blob) - offset} bytes, expected {8 * count}")
    values = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).copy()
    return DenseTensor(tuple(int(d) for d in dims), values)


def write_model(path, model, configs=None, metadata=None):
    """Serialize a KruskalModel plus its training penalties and metadata.

    configs defaults to no-penalty entries; metadata is any
    JSON-serializable mapping (seed, iterations, final objective, loss).
    """
    D = model.ndim
    if configs is None:
        configs = [ModeRegConfig() for _ in range(D)]
    if len(configs) != D:
        raise ValueError(f"{len(configs)} mode configs for {D} modes")
    meta = json.dumps(metadata or {}, sort_keys=True).encode("utf-8")
    parts = [MODEL_MAGIC,
             struct.pack("<III", FORMAT_VERSION, D, model.rank),
             np.asarray(model.dims, dtype="<u8").tobytes()]
    for cfg in configs:
        parts.append(struct.pack("<dddB", cfg.lambda1, cfg.lambda2, cfg.lambda3,
                                 1 if cfg.nonneg else 0))
    for f in model.factors:
        parts.append(np.asarray(f.ravel(order="F"), dtype="<f8").tobytes())
    parts.append(struct.pack("<I", len(meta)))
    parts.append(meta)
    _atomic_write(path, b"".join(parts))


def read_model(path):
    """Returns (KruskalModel, list of ModeRegConfig, metadata dict)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16 or blob[:4] != MODEL_MAGIC:
        raise FileFormatError(f"{path}: not a model file (bad magic)")
    version, ndim, rank = struct.unpack_from("<III", blob, 4)
    if version != FORMAT_VERSION:
        raise FileFormatError(f"{path}: unsupported model file version {version}")
    if ndim < 1 or rank < 1:
        raise FileFormatError(f"{path}: invalid header (D={ndim}, R={rank})")
    offset = 16
    if len(blob) < offset + 8 * ndim:
        raise FileFormatError(f"{path}: truncated model file header")
    dims = [int(d) for d in np.frombuffer(blob, dtype="<u8", count=ndim, offset=offset)]
    offset += 8 * ndim
    configs = []
    for _ in range(ndim):
        if len(blob) < offset + 25:
            raise FileFormatError(f"{path}: truncated penalty block")
        l1, l2, l3, nn = struct.unpack_from("<dddB", blob, offset)
        offset += 25
        configs.append(ModeRegConfig(l1, l2, l3, bool(nn)))
    factors = []
    for d in dims:
        count = d * rank
        if count > _MAX_ELEMENTS or len(blob) < offset + 8 * count:
            raise FileFormatError(f"{path}: truncated factor payload")
        flat = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).copy()
        factors.append(flat.reshape(d, rank, order="F"))
        offset += 8 * count
    if len(blob) < offset + 4:
        raise FileFormatError(f"{path}: missing metadata block")
    (meta_len,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    if len(blob) != offset + meta_len:
        raise FileFormatError(f"{path}: metadata length mismatch")
    try:
        metadata = json.loads(blob[offset:].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FileFormatError(f"{path}: bad metadata blob: {e}") from e
    return KruskalModel(factors), configs, metadata


# ----------------------------------------------------------------------
# dataset directories: one tensor file per sample + responses.csv + meta


def write_dataset(directory, data, signal=None, meta=None):
    """Write a dataset as sample_NNNNNN.nskt files plus responses.csv.

    Optionally stores the generating signal (signal.nskt) and a meta.json
    with the loss tag and any extra fields.
    """
    os.makedirs(directory, exist_ok=True)
    from .tensor import DenseTensor as _DT  # local alias, avoids shadowing

    for i in range(data.n):
        write_tensor(os.path.join(directory, f"sample_{i:06d}.nskt"),
                     _DT.from_array(data.covariates[i]))
    lines = ["index,y"]
    for i, y in enumerate(data.responses):
        lines.append(f"{i},{float(y)!r}")
    _atomic_write(os.path.join(directory, "responses.csv"),
                  ("\n".join(lines) + "\n").encode("utf-8"))
    if signal is not None:
        write_tensor(os.path.join(directory, "signal.nskt"), signal)
    payload = {"loss": data.loss, "n": data.n, "dims": list(data.dims)}
    payload.update(meta or {})
    _atomic_write(os.path.join(directory, "meta.json"),
                  (json.dumps(payload, sort_keys=True, indent=2) + "\n").encode("utf-8"))


def read_dataset(directory, loss=None):
    """Read a dataset directory written by :func:`write_dataset`."""
    from .model import Dataset

    meta_path = os.path.join(directory, "meta.json")
    meta = {}
    if os.path.exists(meta_path):
        with open(meta_path) as fh:
            meta = json.load(fh)
    if loss is None:
        loss = meta.get("loss", "linear")
    resp_path = os.path.join(directory, "responses.csv")
    if not os.path.exists(resp_path):
        raise FileFormatError(f"{directory}: missing responses.csv")
    indices, ys = [], []
    with open(resp_path) as fh:
        header = fh.readline().strip()
        if header != "index,y":
            raise FileFormatError(f"{directory}: bad responses.csv header {header!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            idx_s, y_s = line.split(",")
            indices.append(int(idx_s))
            ys.append(float(y_s))
    samples = []
    for i in indices:
        path = os.path.join(directory, f"sample_{i:06d}.nskt")
        if not os.path.exists(path):
            raise FileFormatError(f"{directory}: missing {os.path.basename(path)}")
        samples.append(read_tensor(path))
    stacked = np.stack([s.to_array() for s in samples])
    return Dataset(stacked, np.asarray(ys), loss=loss)
