"""Versioned checkpoint container.

Layout: a magic line, an 8-byte little-endian header length, a canonical
JSON header (sorted keys), then the raw tensor payload.  Every tensor is
listed in the header with its name, dimension tags, shape and element
type, and stored as little-endian IEEE bytes in header order (model
tensors sorted by name, then optimizer tensors).  The canonical encoding
makes save -> load -> save byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import Tensor

from .errors import DataError
from .model import FactoredTransformer, ModelConfig

_MAGIC = b"lowmt-checkpoint v1\n"

_DTYPES = {
    torch.float32: "<f4",
    torch.float64: "<f8",
    torch.int64: "<i8",
}
_TORCH_DTYPES = {v: k for k, v in _DTYPES.items()}


@dataclass
class Checkpoint:
    config: ModelConfig
    model_state: dict[str, Tensor]
    step: int
    valid_ppl: float
    ppl_history: list[float] = field(default_factory=list)
    is_best: bool = False
    optimizer_tensors: dict[str, Tensor] = field(default_factory=dict)
    optimizer_meta: dict = field(default_factory=dict)

    def restore_model(self, dtype=None) -> FactoredTransformer:
        model = FactoredTransformer(self.config)
        if dtype is not None:
            model = model.to(dtype)
        model.load_state_dict(self.model_state)
        model.eval()
        return model


def _dim_tags(name: str, shape: tuple[int, ...]) -> list[str]:
    """Human-readable dimension names for the header."""
    if name.endswith("src_embed.weight") or name.endswith("tgt_embed.weight"):
        return ["token_vocab", "embed_dim"]
    if name.endswith("factor_embed.weight"):
        return ["factor_vocab", "factor_dim"]
    if name.endswith("generator.weight"):
        return ["token_vocab", "d_model"]
    if name.endswith(".pe") or name == "pe":
        return ["position", "d_model"]
    return {0: [], 1: ["features"], 2: ["out_features", "in_features"]}.get(
        len(shape), [f"d{i}" for i in range(len(shape))]
    )


def _tensor_bytes(t: Tensor) -> bytes:
    dtype = _DTYPES.get(t.dtype)
    if dtype is None:
        raise DataError(f"unsupported tensor dtype {t.dtype}")
    return t.detach().cpu().contiguous().numpy().astype(dtype, copy=False).tobytes()


def checkpoint_bytes(ckpt: Checkpoint) -> bytes:
    entries = []
    payload = bytearray()
    for kind, tensors in (("model", ckpt.model_state), ("optimizer", ckpt.optimizer_tensors)):
        for name in sorted(tensors):
            t = tensors[name]
            entries.append(
                {
                    "name": name,
                    "kind": kind,
                    "dims": _dim_tags(name, tuple(t.shape)),
                    "shape": list(t.shape),
                    "dtype": _DTYPES[t.dtype],
                }
            )
            payload.extend(_tensor_bytes(t))
    header = {
        "config": asdict(ckpt.config),
        "step": ckpt.step,
        "valid_ppl": ckpt.valid_ppl,
        "ppl_history": ckpt.ppl_history,
        "is_best": ckpt.is_best,
        "optimizer": ckpt.optimizer_meta,
        "tensors": entries,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _MAGIC + struct.pack("<Q", len(blob)) + blob + bytes(payload)


def save_checkpoint(ckpt: Checkpoint, path: Path | str) -> None:
    Path(path).write_bytes(checkpoint_bytes(ckpt))


def fingerprint_checkpoint(ckpt: Checkpoint) -> str:
    return hashlib.sha256(checkpoint_bytes(ckpt)).hexdigest()


def load_checkpoint(path: Path | str) -> Checkpoint:
    path = Path(path)
    raw = path.read_bytes()
    if not raw.startswith(_MAGIC):
        raise DataError(f"{path} is not a {_MAGIC.strip().decode()!r} file")
    offset = len(_MAGIC)
    (header_len,) = struct.unpack_from("<Q", raw, offset)
    offset += 8
    header = json.loads(raw[offset : offset + header_len].decode("utf-8"))
    offset += header_len
    model_state: dict[str, Tensor] = {}
    optimizer_tensors: dict[str, Tensor] = {}
    for entry in header["tensors"]:
        dtype = entry["dtype"]
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = count * np.dtype(dtype).itemsize
        if offset + nbytes > len(raw):
            raise DataError(f"{path} truncated inside tensor {entry['name']}")
        arr = np.frombuffer(raw, dtype=dtype, count=count, offset=offset).reshape(shape)
        offset += nbytes
        tensor = torch.from_numpy(arr.copy()).to(_TORCH_DTYPES[dtype])
        (model_state if entry["kind"] == "model" else optimizer_tensors)[entry["name"]] = tensor
    if offset != len(raw):
        raise DataError(f"{path} has {len(raw) - offset} trailing bytes")
    return Checkpoint(
        config=ModelConfig(**header["config"]),
        model_state=model_state,
        step=header["step"],
        valid_ppl=header["valid_ppl"],
        ppl_history=list(header["ppl_history"]),
        is_best=header["is_best"],
        optimizer_tensors=optimizer_tensors,
        optimizer_meta=header["optimizer"],
    )


def fingerprint(path: Path | str) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
