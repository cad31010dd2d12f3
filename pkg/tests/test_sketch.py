import numpy as np
import pytest
from scipy import ndimage

from shapefrag.drivers import voxl
from shapefrag.errors import EmptyInput
from shapefrag.geom import GridSpec, VoxelGrid, voxelize
from shapefrag.molecule import Molecule
from shapefrag.sketch import (
    FACES,
    PocketShape,
    SeedKind,
    SeedShape,
    SketchParams,
    accept,
    enabled_kinds,
    ligand_grid,
    pocket_box,
    pocket_from_atoms,
    sample_seed_shape,
    sketch_from_ligand,
    sketch_from_pocket,
)


def cubic_pocket(size=20, margin=2, pitch=1.0):
    extent = size + 2 * margin
    spec = GridSpec.centered((0, 0, 0), pitch, extent)
    cavity = np.zeros((extent,) * 3, dtype=bool)
    cavity[margin:-margin, margin:-margin, margin:-margin] = True
    return PocketShape(VoxelGrid(spec, cavity))


@pytest.fixture(scope="module")
def pocket():
    return cubic_pocket()


def test_empty_pocket():
    with pytest.raises(ValueError, match="empty"):
        PocketShape(VoxelGrid.empty(GridSpec(1.0, 4)))


def test_boundary_is_the_cube_surface(pocket):
    inner = 20**3 - 18**3
    assert int(pocket.boundary.sum()) == inner
    assert len(pocket.boundary_cells) == inner


def test_normals_point_outwards(pocket):
    face = (2, 12, 12)  # centre of the x-min face
    assert pocket.normals[face] @ np.array([-1.0, 0.0, 0.0]) > 0.9
    top = (12, 12, 21)
    assert pocket.normals[top] @ np.array([0.0, 0.0, 1.0]) > 0.9


def test_seed_anchors_lie_on_the_boundary(pocket):
    rng = np.random.default_rng(0)
    boundary = pocket.boundary
    kinds = set()
    for _ in range(1000):
        seed = sample_seed_shape(rng, pocket)
        assert boundary[seed.anchor]
        kinds.add(seed.kind)
        if seed.kind == SeedKind.SPHERE:
            assert 4.0 <= seed.radii[0] <= 8.0
        else:
            assert all(3.0 <= a <= 8.0 for a in seed.radii)
        offset = np.linalg.norm(np.subtract(seed.center, pocket.spec.cell_center(seed.anchor)))
        assert offset <= seed.radius + 1e-9
    assert kinds == {SeedKind.SPHERE, SeedKind.ELLIPSOID}


def test_sketch_from_pocket(pocket):
    params = SketchParams(v_min=250, v_max=500, n_shapes=50, seed=3)
    report = sketch_from_pocket(pocket, params)
    assert len(report.shapes) == 50 and report.missing == 0
    cavity = pocket.grid.occupancy
    contact = ndimage.binary_dilation(pocket.boundary, structure=FACES)
    for shape in report.shapes:
        occ = shape.in_pocket.occupancy
        assert 250 <= shape.volume <= 500
        assert not np.any(occ & ~cavity)
        assert ndimage.label(occ, structure=FACES)[1] == 1
        assert np.any(occ & contact)
        assert 1 <= shape.attempts <= params.max_attempts
    manifest = report.manifest().splitlines()
    assert manifest[0] == "shape\tseed_kind\tvolume\tattempts"
    assert len(manifest) == 51


def test_sketch_is_reproducible(pocket):
    params = SketchParams(n_shapes=5, seed=11)
    first = [voxl.dumps(g) for g in sketch_from_pocket(pocket, params).grids]
    second = [voxl.dumps(g) for g in sketch_from_pocket(pocket, params).grids]
    assert first == second
    other_params = SketchParams(n_shapes=5, seed=12)
    other = [voxl.dumps(g) for g in sketch_from_pocket(pocket, other_params).grids]
    assert other != first


def test_every_seed_gives_its_own_shapes(pocket):
    runs = [sketch_from_pocket(pocket, SketchParams(n_shapes=3, seed=s)).grids for s in range(10)]
    sets = {tuple(voxl.dumps(g) for g in grids) for grids in runs}
    assert len(sets) == 10
    again = sketch_from_pocket(pocket, SketchParams(n_shapes=3, seed=4)).grids
    assert len(again) == len(runs[4]) == 3
    for a, b in zip(again, runs[4]):
        assert a.spec == b.spec
        assert np.array_equal(a.occupancy, b.occupancy)


def test_shapes_are_centred_on_their_centroid():
    pocket = cubic_pocket(size=20, margin=6)  # 32³ grid
    report = sketch_from_pocket(pocket, SketchParams(n_shapes=5, seed=2))
    assert len(report.shapes) == 5
    for shape in report.shapes:
        grid = shape.grid
        assert grid.spec.extent == 32 and grid.spec.pitch == 1.0
        assert np.linalg.norm(grid.centroid() - grid.spec.center) < 2.0
        assert np.all(np.abs(grid.centroid() - grid.spec.center) <= 0.5 + 1e-9)
        # same cells, same world positions
        assert grid.count == shape.in_pocket.count
        assert np.allclose(grid.centroid(), shape.in_pocket.centroid())


def test_shapes_on_a_smaller_grid(pocket):
    params = SketchParams(v_min=100, v_max=300, n_shapes=3, seed=1, extent=16)
    for shape in sketch_from_pocket(pocket, params).shapes:
        assert shape.grid.spec.extent == 16
        assert 0 < shape.grid.count <= shape.in_pocket.count
        assert 100 <= shape.volume <= 300


def test_half_ball_on_a_pocket_face(pocket):
    # a sphere centred on the x-min face of the 20 Å cube keeps about half its volume
    radius = 5.0
    seed = SeedShape(SeedKind.SPHERE, (-10.0, 0.0, 0.0), (radius,))
    candidate = seed.rasterize(pocket.spec).occupancy & pocket.grid.occupancy
    volume = candidate.sum() * pocket.spec.cell_volume
    half_ball = 2 / 3 * np.pi * radius**3
    assert volume == pytest.approx(half_ball, rel=0.1)
    assert accept(candidate, pocket, SketchParams(v_min=200, v_max=300))


def test_shape_only_depends_on_its_index(pocket):
    few = sketch_from_pocket(pocket, SketchParams(n_shapes=2, seed=5))
    more = sketch_from_pocket(pocket, SketchParams(n_shapes=4, seed=5))
    assert few.grids == more.grids[:2]


def test_missing_shapes_are_counted(pocket, caplog):
    params = SketchParams(v_min=1e5, v_max=2e5, n_shapes=2, max_attempts=3)
    report = sketch_from_pocket(pocket, params)
    assert report.shapes == [] and report.missing == 2
    assert "2 of 2 shapes not found" in caplog.text


def test_accept_rejects_disconnected(pocket):
    candidate = np.zeros_like(pocket.grid.occupancy)
    candidate[2:9, 2:9, 2:5] = True
    candidate[15:20, 15:20, 2:7] = True
    params = SketchParams(v_min=10, v_max=10_000)
    assert not accept(candidate, pocket, params)
    candidate[15:20, 15:20, 2:7] = False
    assert accept(candidate, pocket, params)


def test_accept_requires_contact(pocket):
    candidate = np.zeros_like(pocket.grid.occupancy)
    candidate[8:15, 8:15, 8:15] = True  # deep inside the cavity
    assert not accept(candidate, pocket, SketchParams(v_min=10, v_max=10_000))


def test_ligand_seed_shapes(pocket, toluene):
    rng = np.random.default_rng(4)
    seed = sample_seed_shape(rng, pocket, [toluene], kinds=["ligand"])
    assert seed.kind == SeedKind.LIGAND
    grid = seed.rasterize(pocket.spec)
    bare = voxelize(seed.posed_molecule(), pocket.spec, clip=True)
    assert grid.count > bare.count
    assert np.all(grid.occupancy[bare.occupancy])


def test_enabled_kinds(toluene):
    assert enabled_kinds(None) == [SeedKind.SPHERE, SeedKind.ELLIPSOID]
    assert SeedKind.LIGAND in enabled_kinds([toluene])
    assert enabled_kinds(None, ["sphere"]) == [SeedKind.SPHERE]
    with pytest.raises(EmptyInput):
        enabled_kinds(None, ["ligand"])


def test_seed_shape_validation():
    with pytest.raises(ValueError, match="radii"):
        SeedShape(SeedKind.SPHERE, (0, 0, 0), (0.0,))
    with pytest.raises(ValueError, match="molecule"):
        SeedShape(SeedKind.LIGAND, (0, 0, 0))


def test_sketch_params_validation():
    with pytest.raises(ValueError, match="band"):
        SketchParams(v_min=500, v_max=250)
    with pytest.raises(ValueError):
        SketchParams(n_shapes=0)


def test_pocket_from_atoms():
    spec = GridSpec.centered((0, 0, 0), 1.0, 16)
    wall = [(x, y, -6.0) for x in range(-6, 7, 2) for y in range(-6, 7, 2)]
    atoms = Molecule.build(["C"] * len(wall), wall)
    pocket = pocket_from_atoms(atoms, spec)
    covered = voxelize(atoms, spec, clip=True).occupancy
    assert np.array_equal(pocket.grid.occupancy, ~covered)


def test_pocket_box(benzene):
    spec = pocket_box(benzene, 0.5)
    low, high = benzene.coords.min(axis=0), benzene.coords.max(axis=0)
    assert np.allclose(spec.center, (low + high) / 2)
    assert spec.length >= (high - low).max()
    assert spec.length < (high - low).max() + 0.5

    spec = pocket_box(benzene, 1.0, center=(1.0, 2.0, 3.0), size=20.0)
    assert spec.extent == 20 and spec.pitch == 1.0
    assert np.allclose(spec.center, (1.0, 2.0, 3.0))

    spec = pocket_box(benzene, 1.0, size=12.0)
    assert spec.extent == 12
    assert np.allclose(spec.center, (low + high) / 2)


def test_pocket_box_validation(benzene):
    with pytest.raises(ValueError, match="positive"):
        pocket_box(benzene, 1.0, size=0.0)
    with pytest.raises(ValueError, match="empty"):
        pocket_box(Molecule.build([], []), 1.0)
    spec = pocket_box(Molecule.build([], []), 1.0, center=(0, 0, 0), size=8.0)
    assert spec.extent == 8


def test_ligand_shapes(toluene):
    spec = ligand_grid(toluene, 0.5, 32)
    assert np.allclose(spec.center, toluene.centroid())
    grid = sketch_from_ligand(toluene, spec)
    assert grid == voxelize(toluene, spec)
