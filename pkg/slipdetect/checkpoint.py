"""
Binary checkpoint format (little endian):

    b"SLIPCKPT" | u32 version | 32-byte sha256 of the config JSON
    | u32 config length | config JSON (utf-8, sorted keys)
    | u32 parameter count
    | per parameter: u32 name length | name | u32 ndim | u32 dims... | float64 data

Parameters are written in manifest order; identical configs and weights give
identical bytes.
"""

import hashlib
import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Dict, Mapping, Optional, Union

import numpy as np

from .exceptions import CheckpointError, ConfigError
from .network import SlipDetector, SlipModelConfig, parameter_manifest
from .tensor import Tensor

logger = logging.getLogger(__name__)

MAGIC = b"SLIPCKPT"
FORMAT_VERSION = 1
CHECKPOINT_NAME = "checkpoint.ckpt"

_U32 = struct.Struct("<I")


@dataclass
class Checkpoint:
    config: SlipModelConfig
    arrays: Dict[str, np.ndarray]

    def build_model(self) -> SlipDetector:
        return SlipDetector.from_arrays(self.config, self.arrays)


def _as_array(value: Union[np.ndarray, Tensor]) -> np.ndarray:
    data = value.data if isinstance(value, Tensor) else value
    return np.ascontiguousarray(data, dtype="<f8")


def encode_checkpoint(cfg: SlipModelConfig, params: Mapping[str, Union[np.ndarray, Tensor]]) -> bytes:
    manifest = parameter_manifest(cfg)
    config_bytes = cfg.canonical_json().encode("utf-8")
    chunks = [
        MAGIC,
        _U32.pack(FORMAT_VERSION),
        hashlib.sha256(config_bytes).digest(),
        _U32.pack(len(config_bytes)),
        config_bytes,
        _U32.pack(len(manifest)),
    ]
    for spec in manifest:
        if spec.name not in params:
            raise CheckpointError(f"cannot save: parameter {spec.name} is missing")
        array = _as_array(params[spec.name])
        if array.shape != spec.shape:
            raise CheckpointError(
                f"cannot save: parameter {spec.name} has shape {array.shape}, expected {spec.shape}"
            )
        name = spec.name.encode("utf-8")
        chunks.append(_U32.pack(len(name)))
        chunks.append(name)
        chunks.append(_U32.pack(array.ndim))
        chunks.extend(_U32.pack(dim) for dim in array.shape)
        chunks.append(array.tobytes(order="C"))
    return b"".join(chunks)


def save_checkpoint(
    path: Union[str, Path], cfg: SlipModelConfig, params: Mapping[str, Union[np.ndarray, Tensor]]
) -> Path:
    path = Path(path)
    payload = encode_checkpoint(cfg, params)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as handle:
        handle.write(payload)
    tmp.replace(path)
    logger.info("Saved checkpoint %s (%d bytes, config %s)", path, len(payload), cfg.digest()[:12])
    return path


class _Reader:
    def __init__(self, handle: BinaryIO, source: str):
        self.handle = handle
        self.source = source

    def read(self, size: int) -> bytes:
        data = self.handle.read(size)
        if len(data) != size:
            raise CheckpointError(f"{self.source}: truncated checkpoint", path=self.source)
        return data

    def u32(self) -> int:
        return _U32.unpack(self.read(4))[0]


def load_checkpoint(
    path: Union[str, Path], expected: Optional[SlipModelConfig] = None
) -> Checkpoint:
    """
    Read a checkpoint; the embedded config rebuilds the model.

    With ``expected`` given, the embedded config digest must match it.
    """
    path = Path(path)
    source = str(path)
    try:
        handle = open(path, "rb")
    except OSError as exc:
        raise CheckpointError(f"cannot open checkpoint {source}: {exc.strerror}", path=source) from exc

    with handle:
        reader = _Reader(handle, source)
        if reader.read(len(MAGIC)) != MAGIC:
            raise CheckpointError(f"{source}: not a slip detector checkpoint", path=source)
        version = reader.u32()
        if version != FORMAT_VERSION:
            raise CheckpointError(
                f"{source}: unsupported checkpoint version {version}", path=source, version=version
            )
        digest = reader.read(32)
        config_bytes = reader.read(reader.u32())
        if hashlib.sha256(config_bytes).digest() != digest:
            raise CheckpointError(f"{source}: config digest mismatch, file is corrupt", path=source)
        try:
            cfg = SlipModelConfig.from_dict(json.loads(config_bytes.decode("utf-8")))
        except (ValueError, ConfigError) as exc:
            raise CheckpointError(f"{source}: invalid embedded config: {exc}", path=source) from exc

        if expected is not None and expected.digest() != cfg.digest():
            raise CheckpointError(
                f"{source}: checkpoint config {cfg.digest()[:12]} does not match "
                f"expected {expected.digest()[:12]}",
                path=source,
            )

        arrays: Dict[str, np.ndarray] = {}
        for _ in range(reader.u32()):
            name = reader.read(reader.u32()).decode("utf-8")
            shape = tuple(reader.u32() for _ in range(reader.u32()))
            count = int(np.prod(shape, dtype=np.int64))
            arrays[name] = np.frombuffer(reader.read(8 * count), dtype="<f8").reshape(shape).astype(np.float64)
        if handle.read(1):
            raise CheckpointError(f"{source}: trailing bytes after the last parameter", path=source)

    manifest = parameter_manifest(cfg)
    expected_names = [spec.name for spec in manifest]
    if list(arrays) != expected_names:
        raise CheckpointError(f"{source}: parameter names do not match the embedded config", path=source)
    for spec in manifest:
        if arrays[spec.name].shape != spec.shape:
            raise CheckpointError(
                f"{source}: parameter {spec.name} has shape {arrays[spec.name].shape}, expected {spec.shape}",
                path=source,
            )
    return Checkpoint(config=cfg, arrays=arrays)
