"""Single-file binary container for fitted models.

Layout: 8-byte magic, little-endian uint32 header length, compact JSON
header (sorted keys), then each array's raw C-order bytes in the order the
header lists them. Every field that enters the file is deterministic given
the fitted model, so saving the same model twice is byte-identical.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..core import BiasLensError
from .base import FittedModel
from .baselines import MostPopModel, RandomModel
from .bpr import BPRModel
from .factor import MFModel, PMFModel
from .knn import UserKNNModel
from .neumf import NeuMFModel
from .nmf import NMFModel
from .pf import PFModel
from .vaecf import VAECFModel
from .wmf import WMFModel

MAGIC = b"BLMODEL\x01"

MODEL_CLASSES = {cls.kind.value: cls for cls in (
    UserKNNModel, MFModel, PMFModel, NMFModel, WMFModel, PFModel,
    BPRModel, NeuMFModel, VAECFModel, MostPopModel, RandomModel)}

_DTYPES = {"<i8": np.dtype("<i8"), "<f8": np.dtype("<f8")}


class CorruptModelFile(BiasLensError):
    pass


def _normalize(arr: np.ndarray) -> np.ndarray:
    if arr.dtype.kind == "i":
        return np.ascontiguousarray(arr, dtype="<i8")
    return np.ascontiguousarray(arr, dtype="<f8")


def save_model(model: FittedModel, path: str | Path) -> None:
    arrays = [("row_ptr", model.row_ptr), ("row_cols", model.row_cols),
              ("row_vals", model.row_vals)]
    arrays += model.param_arrays()
    arrays = [(name, _normalize(a)) for name, a in arrays]
    header = {
        "kind": model.kind.value,
        "seed": model.seed,
        "hyperparams": model.hyperparams,
        "n_users": model.n_users,
        "n_items": model.n_items,
        "loss_trace": model.loss_trace,
        "arrays": [{"name": name, "shape": list(a.shape), "dtype": a.dtype.str}
                   for name, a in arrays],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, a in arrays:
            fh.write(a.tobytes(order="C"))


def load_model(path: str | Path) -> FittedModel:
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 4 or raw[:len(MAGIC)] != MAGIC:
        raise CorruptModelFile(f"{path}: not a model container")
    (hlen,) = struct.unpack_from("<I", raw, len(MAGIC))
    start = len(MAGIC) + 4
    try:
        header = json.loads(raw[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptModelFile(f"{path}: bad header") from exc
    cls = MODEL_CLASSES.get(header.get("kind"))
    if cls is None:
        raise CorruptModelFile(f"{path}: unknown model kind {header.get('kind')!r}")

    offset = start + hlen
    arrays = {}
    for entry in header["arrays"]:
        dtype = _DTYPES.get(entry["dtype"])
        if dtype is None:
            raise CorruptModelFile(f"{path}: unsupported dtype {entry['dtype']!r}")
        shape = tuple(entry["shape"])
        n_bytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        chunk = raw[offset:offset + n_bytes]
        if len(chunk) != n_bytes:
            raise CorruptModelFile(f"{path}: truncated array {entry['name']!r}")
        arrays[entry["name"]] = np.frombuffer(chunk, dtype=dtype).reshape(shape).copy()
        offset += n_bytes
    if offset != len(raw):
        raise CorruptModelFile(f"{path}: {len(raw) - offset} trailing bytes")
    return cls.from_arrays(header, arrays)
