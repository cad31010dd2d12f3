"""VOXL text format for occupancy grids.

::

    VOXL <extent> <pitch> <ox> <oy> <oz>
    <bit> <run length>
    ...

Runs cover the occupancy in raster order (``z`` outermost, ``x`` innermost) and must
add up to ``extent³`` cells.
"""

from pathlib import Path
from typing import List, Union

import numpy as np

from ..errors import InvalidFileFormat
from ..geom import GridSpec, VoxelGrid

MAGIC = "VOXL"


def dumps(grid: VoxelGrid) -> str:
    spec = grid.spec
    ox, oy, oz = spec.origin
    lines = [f"{MAGIC} {spec.extent} {spec.pitch!r} {ox!r} {oy!r} {oz!r}"]
    bits = grid.raster().astype(np.int8)
    if bits.size:
        change = np.flatnonzero(np.diff(bits)) + 1
        starts = np.concatenate([[0], change])
        ends = np.concatenate([change, [bits.size]])
        lines.extend(f"{bits[s]} {e - s}" for s, e in zip(starts, ends))
    return "\n".join(lines) + "\n"


def loads(text: str) -> VoxelGrid:
    lines = [line.strip() for line in text.splitlines() if line.strip()]
    if not lines or not lines[0].startswith(MAGIC):
        raise InvalidFileFormat(MAGIC, f"missing '{MAGIC}' header")
    header = lines[0].split()
    try:
        extent, pitch = int(header[1]), float(header[2])
        origin = tuple(float(v) for v in header[3:6])
    except (ValueError, IndexError):
        raise InvalidFileFormat(MAGIC, f"malformed header {lines[0]!r}") from None
    if len(origin) != 3:
        raise InvalidFileFormat(MAGIC, f"malformed header {lines[0]!r}")
    spec = GridSpec(pitch, extent, origin)

    chunks: List[np.ndarray] = []
    total = 0
    for lineno, line in enumerate(lines[1:], 2):
        try:
            bit, count = (int(v) for v in line.split())
        except ValueError:
            raise InvalidFileFormat(MAGIC, f"line {lineno}: expected '<bit> <count>'") from None
        if bit not in (0, 1) or count < 0:
            raise InvalidFileFormat(MAGIC, f"line {lineno}: invalid run {line!r}")
        chunks.append(np.full(count, bool(bit)))
        total += count
    if total != extent**3:
        raise InvalidFileFormat(MAGIC, f"runs cover {total} cells, expected {extent ** 3}")
    bits = np.concatenate(chunks) if chunks else np.zeros(0, dtype=bool)
    return VoxelGrid.from_raster(spec, bits)


def load(path: Union[str, Path]) -> VoxelGrid:
    return loads(Path(path).read_text(encoding="utf-8"))


def dump(grid: VoxelGrid, path: Union[str, Path]):
    Path(path).write_text(dumps(grid), encoding="utf-8")
