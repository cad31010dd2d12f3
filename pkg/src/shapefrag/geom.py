"""3D geometry kernels: quaternions and rigid motions, voxel grids, voxelization of
molecules, 3D patch extraction and volumetric shape comparison.

Conventions
-----------

- Points are :class:`numpy.ndarray` objects of shape ``(3,)`` or ``(n, 3)`` in Å.
- Quaternions use the ``(w, x, y, z)`` convention. ``q`` and ``-q`` describe the same
  rotation; :meth:`Quaternion.canonical` picks the representative with ``w >= 0``.
- Occupancy arrays are indexed ``[ix, iy, iz]``. Anything serialised in "raster order"
  iterates ``z`` in the outermost loop, then ``y``, then ``x``.

.. testsetup:: *

   from shapefrag.geom import *
"""

import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from einops import rearrange
from scipy.spatial.transform import Rotation

from .errors import (
    InvalidRotation,
    OutOfBounds,
    PatchingError,
    SpecMismatch,
    UnknownElement,
)

if TYPE_CHECKING:  # pragma: no cover
    from .molecule import Molecule

_logger = logging.getLogger(__name__)

UNIT_TOLERANCE = 1e-6
"""Maximum deviation of a rotation quaternion norm from 1"""

DEFAULT_PITCH = 1.0
DEFAULT_EXTENT = 32
"""Default grid: a 32 Å cube, shared by voxelization, sketching and the model"""

Vec3 = np.ndarray
RandomSource = np.random.Generator

# Bondi, A. "van der Waals Volumes and Radii", J. Phys. Chem. 68 (1964) 441-451.
VDW_RADII = {
    "H": 1.20,
    "He": 1.40,
    "C": 1.70,
    "N": 1.55,
    "O": 1.52,
    "F": 1.47,
    "Ne": 1.54,
    "Si": 2.10,
    "P": 1.80,
    "S": 1.80,
    "Cl": 1.75,
    "Ar": 1.88,
    "As": 1.85,
    "Se": 1.90,
    "Br": 1.85,
    "Kr": 2.02,
    "Te": 2.06,
    "I": 1.98,
    "Xe": 2.16,
}


def vdw_radius(element: str) -> float:
    """Van der Waals radius (Å) of ``element``.

    >>> vdw_radius("C")
    1.7
    """
    UnknownElement.check(element, VDW_RADII)
    return VDW_RADII[element]


# ---- Rotations ----


class Quaternion(NamedTuple):
    w: float
    x: float
    y: float
    z: float

    @classmethod
    def identity(cls) -> "Quaternion":
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_array(cls, values) -> "Quaternion":
        w, x, y, z = (float(v) for v in values)
        return cls(w, x, y, z)

    @classmethod
    def from_axis_angle(cls, axis, angle: float) -> "Quaternion":
        axis = np.asarray(axis, dtype=np.float64)
        axis = axis / np.linalg.norm(axis)
        s = math.sin(angle / 2)
        return cls(math.cos(angle / 2), *(float(a * s) for a in axis))

    @classmethod
    def from_matrix(cls, matrix) -> "Quaternion":
        x, y, z, w = Rotation.from_matrix(np.asarray(matrix, dtype=np.float64)).as_quat()
        return cls(float(w), float(x), float(y), float(z)).canonical()

    @classmethod
    def random(cls, rng: RandomSource) -> "Quaternion":
        """Rotation drawn uniformly (Haar measure) from the 3-sphere"""
        x, y, z, w = Rotation.random(random_state=rng).as_quat()
        return cls(float(w), float(x), float(y), float(z))

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=np.float64)

    @property
    def norm(self) -> float:
        return math.sqrt(sum(c * c for c in self))

    def check_unit(self, tolerance: float = UNIT_TOLERANCE) -> "Quaternion":
        norm = self.norm
        if not math.isfinite(norm) or abs(norm - 1.0) > tolerance:
            raise InvalidRotation(self, norm)
        return self

    def normalized(self) -> "Quaternion":
        norm = self.norm
        if norm == 0 or not math.isfinite(norm):
            raise InvalidRotation(self, norm)
        return Quaternion(*(c / norm for c in self))

    def canonical(self) -> "Quaternion":
        """Representative of ``{q, -q}`` with a non-negative ``w`` (first non-zero
        component positive when ``w == 0``).
        """
        for c in self:
            if c > 0:
                return self
            if c < 0:
                return Quaternion(*(-v for v in self))
        return self

    def conjugate(self) -> "Quaternion":
        return Quaternion(self.w, -self.x, -self.y, -self.z)

    def multiply(self, other: "Quaternion") -> "Quaternion":
        """Hamilton product ``self ⊗ other`` (applies ``other`` first)"""
        w0, x0, y0, z0 = self
        w1, x1, y1, z1 = other
        return Quaternion(
            w0 * w1 - x0 * x1 - y0 * y1 - z0 * z1,
            w0 * x1 + x0 * w1 + y0 * z1 - z0 * y1,
            w0 * y1 - x0 * z1 + y0 * w1 + z0 * x1,
            w0 * z1 + x0 * y1 - y0 * x1 + z0 * w1,
        )

    def to_matrix(self) -> np.ndarray:
        w, x, y, z = self
        n = w * w + x * x + y * y + z * z
        s = 2.0 / n
        X, Y, Z = x * s, y * s, z * s
        wX, wY, wZ = w * X, w * Y, w * Z
        xX, xY, xZ = x * X, x * Y, x * Z
        yY, yZ, zZ = y * Y, y * Z, z * Z
        return np.array(
            [
                [1.0 - (yY + zZ), xY - wZ, xZ + wY],
                [xY + wZ, 1.0 - (xX + zZ), yZ - wX],
                [xZ - wY, yZ + wX, 1.0 - (xX + yY)],
            ]
        )

    def angle_to(self, other: "Quaternion") -> float:
        """Angle (radians) of the rotation taking ``self`` onto ``other``"""
        dot = abs(float(np.dot(self.normalized().as_array(), other.normalized().as_array())))
        return 2.0 * math.acos(min(1.0, dot))


def compose(first: Quaternion, second: Quaternion) -> Quaternion:
    """Single rotation equivalent to applying ``first`` and then ``second``"""
    return second.multiply(first)


def apply_rigid(points, rotation: Quaternion, translation) -> np.ndarray:
    """Rotate ``points`` by ``rotation`` and then translate them by ``translation``.

    >>> apply_rigid([[1.0, 0.0, 0.0]], Quaternion(0.0, 0.0, 0.0, 1.0), [0, 0, 0]).round(9)
    array([[-1.,  0.,  0.]])
    """
    rotation = Quaternion(*rotation).check_unit()
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    moved = pts @ rotation.to_matrix().T + np.asarray(translation, dtype=np.float64)
    return moved.reshape(np.shape(points)) if np.ndim(points) == 1 else moved


@dataclass(frozen=True)
class RigidMotion:
    """Rotation followed by a translation"""

    rotation: Quaternion = Quaternion.identity()
    translation: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    @classmethod
    def random(cls, rng: RandomSource, translation_range: float = 2.0) -> "RigidMotion":
        rotation = Quaternion.random(rng)
        shift = rng.uniform(-translation_range, translation_range, size=3)
        return cls(rotation, tuple(float(v) for v in shift))

    def apply(self, points) -> np.ndarray:
        return apply_rigid(points, self.rotation, self.translation)

    def inverse(self) -> "RigidMotion":
        inv = self.rotation.conjugate()
        shift = -apply_rigid(np.asarray(self.translation), inv, (0.0, 0.0, 0.0))
        return RigidMotion(inv, tuple(float(v) for v in shift))

    def then(self, other: "RigidMotion") -> "RigidMotion":
        """Motion equivalent to applying ``self`` and then ``other``"""
        shift = other.apply(np.asarray(self.translation, dtype=np.float64))
        rotation = compose(self.rotation, other.rotation)
        return RigidMotion(rotation, tuple(float(v) for v in shift))


# ---- Grids ----


@dataclass(frozen=True)
class GridSpec:
    """Cubic grid of ``extent³`` voxels with edge ``pitch`` (Å), whose minimum corner
    is ``origin``.
    """

    pitch: float = DEFAULT_PITCH
    extent: int = DEFAULT_EXTENT
    origin: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not self.pitch > 0:
            raise ValueError(f"Grid pitch must be positive ({self.pitch!r} given)")
        if int(self.extent) < 1:
            raise ValueError(f"Grid extent must be at least 1 ({self.extent!r} given)")
        object.__setattr__(self, "extent", int(self.extent))
        object.__setattr__(self, "pitch", float(self.pitch))
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))

    @classmethod
    def centered(
        cls, center=(0.0, 0.0, 0.0), pitch: float = DEFAULT_PITCH, extent: int = DEFAULT_EXTENT
    ) -> "GridSpec":
        half = extent * pitch / 2
        origin = tuple(float(c) - half for c in center)
        return cls(pitch, extent, origin)

    @property
    def length(self) -> float:
        return self.extent * self.pitch

    @property
    def center(self) -> np.ndarray:
        return np.asarray(self.origin) + self.length / 2

    @property
    def cell_volume(self) -> float:
        return self.pitch**3

    def axis_centers(self) -> List[np.ndarray]:
        """Coordinates of the cell centres along x, y and z"""
        steps = (np.arange(self.extent) + 0.5) * self.pitch
        return [o + steps for o in self.origin]

    def cell_centers(self) -> np.ndarray:
        """``(extent, extent, extent, 3)`` array with the centre of every cell"""
        return np.stack(np.meshgrid(*self.axis_centers(), indexing="ij"), axis=-1)

    def cell_center(self, index) -> np.ndarray:
        return np.asarray(self.origin) + (np.asarray(index) + 0.5) * self.pitch

    def contains(self, position, reach: float = 0.0) -> bool:
        low = np.asarray(self.origin)
        p = np.asarray(position)
        return bool(np.all(p - reach >= low) and np.all(p + reach <= low + self.length))


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    spec: GridSpec
    occupancy: np.ndarray = field(repr=False)

    def __post_init__(self):
        occ = np.asarray(self.occupancy, dtype=bool)
        if occ.shape != (self.spec.extent,) * 3:
            raise ValueError(f"Occupancy shape {occ.shape} does not match {self.spec}")
        object.__setattr__(self, "occupancy", occ)

    @classmethod
    def empty(cls, spec: GridSpec) -> "VoxelGrid":
        return cls(spec, np.zeros((spec.extent,) * 3, dtype=bool))

    def __eq__(self, other):
        return (
            isinstance(other, VoxelGrid)
            and self.spec == other.spec
            and np.array_equal(self.occupancy, other.occupancy)
        )

    @property
    def count(self) -> int:
        return int(self.occupancy.sum())

    @property
    def volume(self) -> float:
        """Occupied volume in Å³"""
        return self.count * self.spec.cell_volume

    def raster(self) -> np.ndarray:
        """Occupancy flattened in raster order (z outermost, x innermost)"""
        return self.occupancy.transpose(2, 1, 0).ravel()

    @classmethod
    def from_raster(cls, spec: GridSpec, bits) -> "VoxelGrid":
        e = spec.extent
        return cls(spec, np.asarray(bits, dtype=bool).reshape(e, e, e).transpose(2, 1, 0))

    def centroid(self) -> np.ndarray:
        """Mean of the occupied cell centres (grid centre when empty)"""
        cells = np.argwhere(self.occupancy)
        if not len(cells):
            return self.spec.center
        return self.spec.cell_center(cells.mean(axis=0))


def recenter(grid: VoxelGrid, extent: Optional[int] = None) -> VoxelGrid:
    """Move the occupied cells of ``grid`` to a grid of ``extent`` cells (same pitch)
    whose centre lies within half a cell of the shape centroid on every axis.

    Cells keep their world positions. Cells falling outside the new grid are dropped.
    """
    spec = grid.spec
    extent = spec.extent if extent is None else int(extent)
    target = GridSpec.centered(grid.centroid(), spec.pitch, extent)
    source_origin = np.asarray(spec.origin)
    shift = np.rint((source_origin - np.asarray(target.origin)) / spec.pitch).astype(int)
    origin = tuple(float(v) for v in source_origin - shift * spec.pitch)
    cells = np.argwhere(grid.occupancy) + shift
    inside = np.all((cells >= 0) & (cells < extent), axis=1)
    if not inside.all():
        _logger.warning(f"{int((~inside).sum())} cells do not fit a {extent}³ grid, dropped")
    occupancy = np.zeros((extent,) * 3, dtype=bool)
    occupancy[tuple(cells[inside].T)] = True
    return VoxelGrid(GridSpec(spec.pitch, extent, origin), occupancy)


# ---- Voxelization ----


def rasterize_spheres(
    centers, radii, spec: GridSpec, out: Optional[np.ndarray] = None
) -> np.ndarray:
    """Mark every cell whose centre lies within ``radii[i]`` of ``centers[i]``.
    Spheres partially outside the grid are clipped.
    """
    occ = np.zeros((spec.extent,) * 3, dtype=bool) if out is None else out
    axes = spec.axis_centers()
    origin = np.asarray(spec.origin)
    for center, radius in zip(np.asarray(centers, dtype=np.float64).reshape(-1, 3), radii):
        if radius <= 0:
            continue
        lo = np.floor((center - radius - origin) / spec.pitch).astype(int) - 1
        hi = np.ceil((center + radius - origin) / spec.pitch).astype(int) + 1
        lo, hi = np.clip(lo, 0, spec.extent), np.clip(hi, 0, spec.extent)
        if np.any(hi <= lo):
            continue
        dx = axes[0][lo[0] : hi[0]] - center[0]
        dy = axes[1][lo[1] : hi[1]] - center[1]
        dz = axes[2][lo[2] : hi[2]] - center[2]
        d2 = dx[:, None, None] ** 2 + dy[None, :, None] ** 2 + dz[None, None, :] ** 2
        block = occ[lo[0] : hi[0], lo[1] : hi[1], lo[2] : hi[2]]
        block |= d2 <= radius * radius
    return occ


def voxelize(
    molecule: "Molecule",
    spec: GridSpec,
    eps: float = 0.0,
    rng: Optional[RandomSource] = None,
    *,
    clip: bool = False,
    offset: Optional[float] = None,
) -> VoxelGrid:
    """Binary occupancy image of ``molecule``: a cell is occupied when its centre lies
    within ``r(a) + ε`` of some atom ``a``.

    ``ε`` is drawn once per call, uniformly from ``[-eps, eps]``, when ``rng`` is given
    (and is ``0`` otherwise). ``offset`` fixes ``ε`` explicitly. Atoms whose sphere
    (including the largest possible ``ε``) leaves the grid raise :class:`OutOfBounds`,
    unless ``clip=True``.
    """
    if offset is not None:
        noise, reach_eps = float(offset), max(float(offset), 0.0)
    elif rng is not None and eps > 0:
        noise, reach_eps = float(rng.uniform(-eps, eps)), abs(eps)
    else:
        noise, reach_eps = 0.0, 0.0

    radii = [vdw_radius(atom.element) for atom in molecule.atoms]
    if not clip:
        low = np.asarray(spec.origin)
        for atom, r in zip(molecule.atoms, radii):
            reach = r + reach_eps
            if not spec.contains(atom.position, reach):
                high = low + spec.length
                raise OutOfBounds(atom.id, atom.element, atom.position, reach, low, high)

    occ = rasterize_spheres(molecule.coords, [r + noise for r in radii], spec)
    return VoxelGrid(spec, occ)


def shape_tanimoto(a: VoxelGrid, b: VoxelGrid) -> float:
    """Volumetric Tanimoto coefficient ``|A ∩ B| / |A ∪ B|`` (``1.0`` for two empty
    shapes).
    """
    SpecMismatch.check(a.spec, b.spec)
    union = np.count_nonzero(a.occupancy | b.occupancy)
    if union == 0:
        return 1.0
    return np.count_nonzero(a.occupancy & b.occupancy) / union


def extract_patches(
    grid: VoxelGrid, patch_edge: int
) -> List[Tuple[np.ndarray, Tuple[int, int, int]]]:
    """Split the grid into non-overlapping cubic patches.

    Patches are listed in raster order (``z`` outermost) and paired with their
    ``(px, py, pz)`` lattice position; each patch is indexed ``[x, y, z]`` like the grid.
    """
    PatchingError.check(grid.spec.extent, patch_edge)
    n = grid.spec.extent // patch_edge
    cubes = rearrange(
        grid.occupancy,
        "(x a) (y b) (z c) -> (z y x) a b c",
        a=patch_edge,
        b=patch_edge,
        c=patch_edge,
    )
    positions = [(px, py, pz) for pz in range(n) for py in range(n) for px in range(n)]
    return list(zip(cubes, positions))


def centroid(points: Sequence) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return pts.mean(axis=0) if len(pts) else np.zeros(3)
