"""Molecular shape sketching.

Shapes come either straight from a ligand (:func:`sketch_from_ligand`) or from a
pocket: a *seed shape* (sphere, ellipsoid or dilated library molecule) is dropped on
the cavity boundary and its intersection with the cavity is kept when it is
molecule-sized, connected and in contact with the pocket surface
(:func:`sketch_from_pocket`).
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .errors import EmptyInput
from .geom import (
    GridSpec,
    Quaternion,
    RandomSource,
    VoxelGrid,
    rasterize_spheres,
    recenter,
    voxelize,
)
from .molecule import Molecule

_logger = logging.getLogger(__name__)

FACES = ndimage.generate_binary_structure(3, 1)
"""6-connectivity structuring element"""

SPHERE_RADII = (4.0, 8.0)
ELLIPSOID_AXES = (3.0, 8.0)


class SeedKind(Enum):
    SPHERE = "sphere"
    ELLIPSOID = "ellipsoid"
    LIGAND = "ligand"


@dataclass(frozen=True, eq=False)
class PocketShape:
    """Pocket cavity: occupied cells are the open space a ligand may fill"""

    grid: VoxelGrid

    def __post_init__(self):
        if self.grid.count == 0:
            raise ValueError("Pocket cavity is empty")

    @property
    def spec(self) -> GridSpec:
        return self.grid.spec

    @cached_property
    def boundary(self) -> np.ndarray:
        """Cavity cells with a 6-neighbour outside the cavity (grid border included)"""
        cavity = self.grid.occupancy
        return cavity & ~ndimage.binary_erosion(cavity, structure=FACES, border_value=0)

    @cached_property
    def boundary_cells(self) -> np.ndarray:
        return np.argwhere(self.boundary)

    @cached_property
    def normals(self) -> np.ndarray:
        """Outward unit normal of the cavity surface at every cell (``(e, e, e, 3)``)"""
        cavity = self.grid.occupancy.astype(np.float64)
        smooth = ndimage.gaussian_filter(cavity, sigma=1.0, mode="constant")
        grad = np.stack(np.gradient(smooth), axis=-1)
        norm = np.linalg.norm(grad, axis=-1, keepdims=True)
        return np.divide(-grad, norm, out=np.zeros_like(grad), where=norm > 1e-9)


def pocket_from_atoms(atoms: Molecule, spec: GridSpec) -> PocketShape:
    """Cavity = cells of the bounding box ``spec`` not covered by any atom sphere"""
    occupied = voxelize(atoms, spec, clip=True)
    return PocketShape(VoxelGrid(spec, ~occupied.occupancy))


def pocket_box(
    atoms: Molecule,
    pitch: float,
    center: Optional[Sequence[float]] = None,
    size: Optional[float] = None,
) -> GridSpec:
    """Cubic box of edge ``size`` Å around ``center`` (the bounding box of ``atoms`` for
    whichever of the two is not given)
    """
    if center is None or size is None:
        if not atoms.atoms:
            raise ValueError("Pocket atom list is empty")
        low, high = atoms.coords.min(axis=0), atoms.coords.max(axis=0)
        center = (low + high) / 2 if center is None else center
        size = float((high - low).max()) if size is None else size
    if not size > 0:
        raise ValueError(f"Pocket box size must be positive ({size!r} given)")
    return GridSpec.centered(tuple(center), pitch, math.ceil(size / pitch - 1e-9))


@dataclass(frozen=True, eq=False)
class SeedShape:
    kind: SeedKind
    center: Tuple[float, float, float]
    radii: Tuple[float, ...] = ()
    rotation: Quaternion = Quaternion.identity()
    molecule: Optional[Molecule] = field(default=None, repr=False)
    anchor: Optional[Tuple[int, int, int]] = None
    """Boundary cell the seed was placed on"""

    def __post_init__(self):
        if self.kind == SeedKind.LIGAND:
            if self.molecule is None or not self.molecule.atoms:
                raise ValueError("Ligand-derived seed shapes require a molecule")
        elif not self.radii or min(self.radii) <= 0:
            raise ValueError(f"Seed shape radii must be positive ({self.radii!r} given)")

    @property
    def radius(self) -> float:
        """Characteristic size (Å) used to offset the seed from the surface"""
        if self.kind == SeedKind.LIGAND:
            assert self.molecule is not None
            rel = self.molecule.coords - self.molecule.centroid()
            return float(np.sqrt((rel**2).sum(axis=1).mean()))
        return float(min(self.radii))

    def posed_molecule(self) -> Molecule:
        assert self.molecule is not None
        return self.molecule.centered().transformed(self.rotation, self.center)

    def rasterize(self, spec: GridSpec) -> VoxelGrid:
        if self.kind == SeedKind.SPHERE:
            return VoxelGrid(spec, rasterize_spheres([self.center], [self.radii[0]], spec))
        if self.kind == SeedKind.ELLIPSOID:
            rel = spec.cell_centers() - np.asarray(self.center)
            body = rel @ self.rotation.to_matrix()  # world -> body frame
            inside = ((body / np.asarray(self.radii)) ** 2).sum(axis=-1) <= 1.0
            return VoxelGrid(spec, inside)
        shape = voxelize(self.posed_molecule(), spec, clip=True)
        return VoxelGrid(spec, ndimage.binary_dilation(shape.occupancy, structure=FACES))


def enabled_kinds(
    library: Optional[Sequence[Molecule]], kinds: Optional[Sequence] = None
) -> List[SeedKind]:
    if kinds is None:
        found = [SeedKind.SPHERE, SeedKind.ELLIPSOID]
        return found + [SeedKind.LIGAND] if library else found
    selected = [SeedKind(k) for k in kinds]
    if SeedKind.LIGAND in selected and not library:
        raise EmptyInput("Ligand-derived seed shapes")
    return selected


def sample_seed_shape(
    rng: RandomSource,
    pocket: PocketShape,
    library: Optional[Sequence[Molecule]] = None,
    kinds: Optional[Sequence] = None,
) -> SeedShape:
    """Draw a seed shape placed on a uniformly chosen cavity-boundary cell and shifted
    outwards along the surface normal by ``U[0, radius]``.
    """
    options = enabled_kinds(library, kinds)
    kind = options[int(rng.integers(len(options)))]
    cells = pocket.boundary_cells
    anchor = tuple(int(v) for v in cells[int(rng.integers(len(cells)))])

    if kind == SeedKind.SPHERE:
        seed = SeedShape(kind, (0.0, 0.0, 0.0), (float(rng.uniform(*SPHERE_RADII)),))
    elif kind == SeedKind.ELLIPSOID:
        axes = tuple(float(a) for a in rng.uniform(*ELLIPSOID_AXES, size=3))
        seed = SeedShape(kind, (0.0, 0.0, 0.0), axes, Quaternion.random(rng))
    else:
        assert library
        mol = library[int(rng.integers(len(library)))]
        seed = SeedShape(kind, (0.0, 0.0, 0.0), (), Quaternion.random(rng), mol)

    offset = float(rng.uniform(0.0, seed.radius))
    normal = pocket.normals[anchor]
    center = pocket.spec.cell_center(anchor) + normal * offset
    return SeedShape(
        kind, tuple(float(c) for c in center), seed.radii, seed.rotation, seed.molecule, anchor
    )


@dataclass(frozen=True)
class SketchParams:
    """Acceptance band (Å³) and attempt limits of :func:`sketch_from_pocket`"""

    v_min: float = 250.0
    v_max: float = 500.0
    n_shapes: int = 10
    seed: int = 0
    max_attempts: int = 200
    kinds: Optional[Tuple[str, ...]] = None
    extent: Optional[int] = None
    """Cells per axis of the output grids (the pocket grid extent by default)"""

    def __post_init__(self):
        if not 0 < self.v_min < self.v_max:
            raise ValueError(f"Invalid volume band [{self.v_min}, {self.v_max}]")
        if self.n_shapes < 1 or self.max_attempts < 1:
            raise ValueError("n_shapes and max_attempts must be at least 1")
        if self.extent is not None and self.extent < 1:
            raise ValueError(f"Grid extent must be at least 1 ({self.extent!r} given)")


@dataclass(frozen=True, eq=False)
class SketchedShape:
    grid: VoxelGrid
    """Shape on a grid centred on its centroid"""
    seed: SeedShape
    attempts: int
    in_pocket: VoxelGrid = field(repr=False)
    """The same cells on the pocket grid"""

    @property
    def volume(self) -> float:
        return self.in_pocket.volume


@dataclass
class SketchReport:
    shapes: List[SketchedShape] = field(default_factory=list)
    missing: int = 0

    @property
    def grids(self) -> List[VoxelGrid]:
        return [s.grid for s in self.shapes]

    def manifest(self) -> str:
        """Tab-separated ``shape, seed kind, volume, attempts`` table"""
        lines = ["shape\tseed_kind\tvolume\tattempts"]
        for i, s in enumerate(self.shapes):
            lines.append(f"{i}\t{s.seed.kind.value}\t{s.volume:.3f}\t{s.attempts}")
        return "\n".join(lines) + "\n"


def accept(candidate: np.ndarray, pocket: PocketShape, params: SketchParams) -> bool:
    volume = candidate.sum() * pocket.spec.cell_volume
    if not params.v_min <= volume <= params.v_max:
        return False
    _, components = ndimage.label(candidate, structure=FACES)
    if components != 1:
        return False
    contact = ndimage.binary_dilation(pocket.boundary, structure=FACES)
    return bool((candidate & contact).any())


def shape_stream(seed: int, index: int) -> RandomSource:
    """Independent random stream of the ``index``-th shape of a run"""
    return np.random.default_rng([seed, index])


def sketch_from_pocket(
    pocket: PocketShape,
    params: SketchParams = SketchParams(),
    library: Optional[Sequence[Molecule]] = None,
) -> SketchReport:
    """Sample up to ``params.n_shapes`` shapes complementary to the pocket surface.

    Every accepted shape is moved to a grid of ``params.extent`` cells centred on its
    centroid (see :func:`~shapefrag.geom.recenter`). Shape ``i`` only depends on
    ``(params.seed, i)``.
    """
    report = SketchReport()
    cavity = pocket.grid.occupancy
    for i in range(params.n_shapes):
        rng = shape_stream(params.seed, i)
        for attempt in range(1, params.max_attempts + 1):
            seed = sample_seed_shape(rng, pocket, library, params.kinds)
            candidate = seed.rasterize(pocket.spec).occupancy & cavity
            if accept(candidate, pocket, params):
                found = VoxelGrid(pocket.spec, candidate)
                grid = recenter(found, params.extent)
                report.shapes.append(SketchedShape(grid, seed, attempt, found))
                break
        else:
            report.missing += 1
    if report.missing:
        _logger.warning(
            f"{report.missing} of {params.n_shapes} shapes not found within "
            f"{params.max_attempts} attempts"
        )
    return report


def sketch_from_ligand(ligand: Molecule, spec: GridSpec) -> VoxelGrid:
    """Shape of the ligand itself"""
    return voxelize(ligand, spec, eps=0.0)


def ligand_grid(ligand: Molecule, pitch: float, extent: int) -> GridSpec:
    """Grid centred on the ligand centroid"""
    return GridSpec.centered(ligand.centroid(), pitch, extent)
