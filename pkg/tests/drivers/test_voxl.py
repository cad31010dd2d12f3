import numpy as np
import pytest

from shapefrag.drivers import voxl
from shapefrag.errors import InvalidFileFormat
from shapefrag.geom import GridSpec, VoxelGrid, voxelize


def test_run_length_layout():
    spec = GridSpec(0.5, 2, (-0.5, -0.5, -0.5))
    occ = np.zeros((2, 2, 2), dtype=bool)
    occ[1, 0, 0] = occ[0, 1, 0] = occ[1, 1, 0] = True  # raster cells 1..3
    text = voxl.dumps(VoxelGrid(spec, occ))
    assert text.splitlines() == ["VOXL 2 0.5 -0.5 -0.5 -0.5", "0 1", "1 3", "0 4"]
    assert voxl.loads(text) == VoxelGrid(spec, occ)


def test_file_roundtrip(tmp_path, toluene):
    grid = voxelize(toluene, GridSpec.centered(toluene.centroid(), 0.5, 32))
    path = tmp_path / "shape.voxl"
    voxl.dump(grid, path)
    back = voxl.load(path)
    assert back == grid
    assert back.spec == grid.spec


def test_empty_grid():
    grid = VoxelGrid.empty(GridSpec(1.0, 3))
    assert voxl.dumps(grid).splitlines()[1:] == ["0 27"]
    assert voxl.loads(voxl.dumps(grid)).count == 0


@pytest.mark.parametrize(
    "text, match",
    [
        ("", "header"),
        ("GRID 2 1.0 0 0 0\n0 8\n", "header"),
        ("VOXL 2 x 0 0 0\n0 8\n", "malformed header"),
        ("VOXL 2 1.0 0 0\n0 8\n", "malformed header"),
        ("VOXL 2 1.0 0 0 0\n0 7\n", "expected 8"),
        ("VOXL 2 1.0 0 0 0\n2 8\n", "invalid run"),
        ("VOXL 2 1.0 0 0 0\n0\n", "expected '<bit> <count>'"),
    ],
)
def test_invalid_content(text, match):
    with pytest.raises(InvalidFileFormat, match=match):
        voxl.loads(text)
