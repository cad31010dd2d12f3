from io import StringIO

import pytest

from shapefrag.drivers import sdf, voxl
from shapefrag.geom import voxelize
from shapefrag.scorers import shape
from shapefrag.sketch import ligand_grid


@pytest.fixture
def reference(tmp_path, toluene):
    grid = voxelize(toluene, ligand_grid(toluene, 1.0, 24))
    path = tmp_path / "shape.voxl"
    voxl.dump(grid, path)
    return grid, path


def test_identical_shape_scores_minus_one(reference, toluene, biphenyl):
    grid, _ = reference
    values = shape.score([toluene, biphenyl], grid)
    assert values[0] == pytest.approx(-1.0)
    assert -1.0 < values[1] <= 0.0


def test_main_follows_the_scorer_protocol(reference, toluene, biphenyl):
    _, path = reference
    stdin = StringIO(sdf.write_records([toluene, biphenyl]))
    stdout = StringIO()
    shape.main(["--shape", str(path)], stdin, stdout)
    lines = stdout.getvalue().splitlines()
    assert len(lines) == 2
    assert float(lines[0]) == pytest.approx(-1.0)


def test_run_reports_errors(tmp_path, caplog):
    with pytest.raises(SystemExit):
        shape.run(["--shape", str(tmp_path / "missing.voxl")])
    assert "missing.voxl" in caplog.text
