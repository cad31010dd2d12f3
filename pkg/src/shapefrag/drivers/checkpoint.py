"""Binary checkpoint container for :class:`~shapefrag.model.network.ShapeToFragments`.

All integers are little endian::

    magic        4 bytes      b"SFCK"
    version      u16 n + n bytes of ASCII (e.g. "1.0")
    config       u32 n + n bytes of UTF-8 TOML ([model] table + optional [meta])
    blocks       u32 count, then per block:
                 u16 n + n bytes of UTF-8 parameter name
                 u8 ndim, ndim x u32 dims
                 prod(dims) x float32

Readers accept any container with the same major version.
"""

import logging
import struct
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import numpy as np
import torch
from packaging.version import InvalidVersion, Version

from ..errors import CheckpointNotFound, InvalidCheckpoint
from ..model.config import ModelConfig, from_dict, to_dict
from ..model.network import ShapeToFragments
from . import toml

_logger = logging.getLogger(__name__)

MAGIC = b"SFCK"
FORMAT_VERSION = Version("1.0")


def dumps(model: ShapeToFragments, meta: Optional[Mapping[str, Any]] = None) -> bytes:
    doc: Dict[str, Any] = {"model": to_dict(model.config)}
    if meta:
        doc["meta"] = dict(meta)
    version = str(FORMAT_VERSION).encode("ascii")
    config = toml.dumps(doc).encode("utf-8")
    state = model.state_dict()

    parts = [MAGIC, struct.pack("<H", len(version)), version]
    parts += [struct.pack("<I", len(config)), config]
    parts.append(struct.pack("<I", len(state)))
    for name, tensor in state.items():
        raw = name.encode("utf-8")
        data = tensor.detach().cpu().numpy().astype("<f4")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack(f"<B{data.ndim}I", data.ndim, *data.shape))
        parts.append(data.tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes, origin: str):
        self.data, self.pos, self.origin = data, 0, origin

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise InvalidCheckpoint(self.origin, "truncated file")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def loads(data: bytes, origin: str = "<bytes>") -> Tuple[ShapeToFragments, Dict[str, Any]]:
    """Rebuild the model (in eval mode) and return it with the ``meta`` table"""
    reader = _Reader(data, origin)
    if reader.take(len(MAGIC)) != MAGIC:
        raise InvalidCheckpoint(origin, "bad magic number")
    (n,) = reader.unpack("<H")
    try:
        version = Version(reader.take(n).decode("ascii"))
    except (UnicodeDecodeError, InvalidVersion):
        raise InvalidCheckpoint(origin, "unreadable container version") from None
    if version.major != FORMAT_VERSION.major:
        raise InvalidCheckpoint(origin, f"unsupported container version {version}")
    (n,) = reader.unpack("<I")
    doc = toml.loads(reader.take(n).decode("utf-8"))
    config = from_dict(ModelConfig, doc.get("model", {}))

    state = {}
    (count,) = reader.unpack("<I")
    for _ in range(count):
        (n,) = reader.unpack("<H")
        name = reader.take(n).decode("utf-8")
        (ndim,) = reader.unpack("<B")
        shape = reader.unpack(f"<{ndim}I")
        size = int(np.prod(shape, dtype=np.int64))
        values = np.frombuffer(reader.take(4 * size), dtype="<f4").reshape(shape)
        state[name] = torch.from_numpy(values.astype(np.float32))

    model = ShapeToFragments(config)
    try:
        model.load_state_dict(state)
    except RuntimeError as ex:
        raise InvalidCheckpoint(origin, str(ex).splitlines()[0]) from ex
    model.eval()
    return model, doc.get("meta", {})


def dump(
    model: ShapeToFragments, path: Union[str, Path], meta: Optional[Mapping[str, Any]] = None
) -> Path:
    target = Path(path)
    target.write_bytes(dumps(model, meta))
    _logger.debug(f"Checkpoint written to {target}")
    return target


def load(path: Union[str, Path]) -> Tuple[ShapeToFragments, Dict[str, Any]]:
    CheckpointNotFound.check(path)
    return loads(Path(path).read_bytes(), str(path))
