"""Small built-in library of 3D base molecules.

Molecules are assembled from planar ring templates, substituent templates and ring
linkers laid out with standard bond lengths. The library is what the corpus
synthesizer falls back to when no base SDF file is given.
"""

import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .molecule import Molecule

AROMATIC = 4


@dataclass(frozen=True)
class RingSpec:
    name: str
    elements: Tuple[str, ...]
    orders: Tuple[int, ...]
    """Order of bond ``(k, k + 1)``"""
    bond_length: float
    sites: Tuple[int, int]
    """Two non-adjacent substitution sites"""

    @property
    def radius(self) -> float:
        return self.bond_length / (2 * math.sin(math.pi / len(self.elements)))


@dataclass(frozen=True)
class Template:
    """Substituent/linker atoms in a local 2D frame: ``x`` along the exit direction of
    the anchor atom (at the origin), ``y`` along its tangent. Bonds to the anchor use
    the atom index ``-1``.
    """

    name: str
    atoms: Tuple[Tuple[str, float, float], ...]
    bonds: Tuple[Tuple[int, int, int], ...]
    tail: Optional[Tuple[int, float]] = None
    """Atom (``-1`` = anchor) and direction (degrees) where a second ring attaches"""


RINGS = (
    RingSpec("benzene", ("C",) * 6, (AROMATIC,) * 6, 1.39, (0, 3)),
    RingSpec("pyridine", ("N", "C", "C", "C", "C", "C"), (AROMATIC,) * 6, 1.38, (2, 4)),
    RingSpec("pyrimidine", ("N", "C", "N", "C", "C", "C"), (AROMATIC,) * 6, 1.37, (3, 5)),
    RingSpec("thiophene", ("S", "C", "C", "C", "C"), (1, 2, 1, 2, 1), 1.50, (1, 4)),
    RingSpec("furan", ("O", "C", "C", "C", "C"), (1, 2, 1, 2, 1), 1.40, (1, 4)),
    RingSpec("pyrrole", ("N", "C", "C", "C", "C"), (1, 2, 1, 2, 1), 1.40, (1, 4)),
    RingSpec("cyclohexane", ("C",) * 6, (1,) * 6, 1.53, (0, 3)),
    RingSpec("cyclopentane", ("C",) * 5, (1,) * 5, 1.53, (0, 2)),
)

SUBSTITUENTS = (
    Template("methyl", (("C", 1.5, 0.0),), ((-1, 0, 1),)),
    Template("ethyl", (("C", 1.5, 0.0), ("C", 2.25, 1.3)), ((-1, 0, 1), (0, 1, 1))),
    Template(
        "propyl",
        (("C", 1.5, 0.0), ("C", 2.25, 1.3), ("C", 3.75, 1.3)),
        ((-1, 0, 1), (0, 1, 1), (1, 2, 1)),
    ),
    Template("hydroxy", (("O", 1.43, 0.0),), ((-1, 0, 1),)),
    Template("amino", (("N", 1.47, 0.0),), ((-1, 0, 1),)),
    Template("fluoro", (("F", 1.35, 0.0),), ((-1, 0, 1),)),
    Template("chloro", (("Cl", 1.75, 0.0),), ((-1, 0, 1),)),
    Template("bromo", (("Br", 1.9, 0.0),), ((-1, 0, 1),)),
    Template("methoxy", (("O", 1.43, 0.0), ("C", 2.15, 1.24)), ((-1, 0, 1), (0, 1, 1))),
    Template(
        "ethoxy",
        (("O", 1.43, 0.0), ("C", 2.15, 1.24), ("C", 3.65, 1.24)),
        ((-1, 0, 1), (0, 1, 1), (1, 2, 1)),
    ),
    Template(
        "acetyl",
        (("C", 1.5, 0.0), ("O", 2.1, 1.1), ("C", 2.25, -1.3)),
        ((-1, 0, 1), (0, 1, 2), (0, 2, 1)),
    ),
    Template(
        "carboxyl",
        (("C", 1.5, 0.0), ("O", 2.1, 1.1), ("O", 2.2, -1.2)),
        ((-1, 0, 1), (0, 1, 2), (0, 2, 1)),
    ),
    Template(
        "carboxamide",
        (("C", 1.5, 0.0), ("O", 2.1, 1.1), ("N", 2.25, -1.3)),
        ((-1, 0, 1), (0, 1, 2), (0, 2, 1)),
    ),
    Template("nitrile", (("C", 1.45, 0.0), ("N", 2.6, 0.0)), ((-1, 0, 1), (0, 1, 3))),
    Template("vinyl", (("C", 1.5, 0.0), ("C", 2.17, 1.16)), ((-1, 0, 1), (0, 1, 2))),
)

LINKERS = (
    Template("direct", (), (), (-1, 0.0)),
    Template("methylene", (("C", 1.5, 0.0),), ((-1, 0, 1),), (0, 60.0)),
    Template("ether", (("O", 1.43, 0.0),), ((-1, 0, 1),), (0, 60.0)),
    Template("amine", (("N", 1.47, 0.0),), ((-1, 0, 1),), (0, 60.0)),
    Template(
        "carbonyl", (("C", 1.5, 0.0), ("O", 2.1, -1.1)), ((-1, 0, 1), (0, 1, 2)), (0, 60.0)
    ),
    Template(
        "amide",
        (("C", 1.5, 0.0), ("O", 2.1, -1.1), ("N", 2.25, 1.3)),
        ((-1, 0, 1), (0, 1, 2), (0, 2, 1)),
        (2, 0.0),
    ),
)

RING_LINK = 1.48
NORMAL = np.array([0.0, 0.0, 1.0])


class _Builder:
    def __init__(self):
        self.elements: List[str] = []
        self.coords: List[np.ndarray] = []
        self.bonds: List[Tuple[int, int, int]] = []

    def add_ring(
        self, ring: RingSpec, center, u, v, first: int = 0
    ) -> List[Tuple[int, np.ndarray, np.ndarray]]:
        """Add ``ring`` with atom ``first`` at ``center + radius * u``. Return
        ``(atom id, exit, tangent)`` for every ring atom.
        """
        n, start = len(ring.elements), len(self.elements)
        out = []
        for k, element in enumerate(ring.elements):
            theta = 2 * math.pi * (k - first) / n
            exit_ = math.cos(theta) * u + math.sin(theta) * v
            tangent = -math.sin(theta) * u + math.cos(theta) * v
            self.elements.append(element)
            self.coords.append(np.asarray(center) + ring.radius * exit_)
            out.append((start + k, exit_, tangent))
        for k, order in enumerate(ring.orders):
            self.bonds.append((start + k, start + (k + 1) % n, order))
        return out

    def add_template(self, template: Template, anchor: int, exit_, tangent) -> List[int]:
        origin = self.coords[anchor]
        start = len(self.elements)
        for element, x, y in template.atoms:
            self.elements.append(element)
            self.coords.append(origin + x * exit_ + y * tangent)
        ids = [start + i for i in range(len(template.atoms))]
        for a, b, order in template.bonds:
            ia = anchor if a < 0 else ids[a]
            ib = anchor if b < 0 else ids[b]
            self.bonds.append((ia, ib, order))
        return ids

    def build(self, name: str) -> Molecule:
        return Molecule.build(self.elements, np.array(self.coords), self.bonds, name)


def substituted(ring: RingSpec, substituents: Sequence[Template]) -> Molecule:
    """``ring`` carrying up to two substituents on its substitution sites"""
    b = _Builder()
    atoms = b.add_ring(ring, np.zeros(3), np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]))
    for site, sub in zip(ring.sites, substituents):
        atom, exit_, tangent = atoms[site]
        b.add_template(sub, atom, exit_, tangent)
    name = "-".join([ring.name, *(s.name for s in substituents)])
    return b.build(name)


def linked(
    first: RingSpec,
    second: RingSpec,
    linker: Template,
    substituent: Optional[Template] = None,
    twist: float = 0.0,
) -> Molecule:
    """Two rings joined through ``linker``; ``twist`` (degrees) rotates the second ring
    about the link axis. ``substituent`` goes on the free site of the second ring.
    """
    b = _Builder()
    atoms = b.add_ring(first, np.zeros(3), np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]))
    anchor, exit_, tangent = atoms[first.sites[0]]
    ids = b.add_template(linker, anchor, exit_, tangent)
    assert linker.tail is not None
    tail_atom, angle = linker.tail
    tail = anchor if tail_atom < 0 else ids[tail_atom]
    rad = math.radians(angle)
    d = math.cos(rad) * exit_ + math.sin(rad) * tangent
    attach = b.coords[tail] + RING_LINK * d

    u = -d
    tw = math.radians(twist)
    v = math.cos(tw) * np.cross(NORMAL, u) + math.sin(tw) * NORMAL
    center = attach + second.radius * d
    ring_atoms = b.add_ring(second, center, u, v, first=second.sites[0])
    b.bonds.append((tail, ring_atoms[second.sites[0]][0], 1))
    if substituent is not None:
        atom, sub_exit, sub_tangent = ring_atoms[second.sites[1]]
        b.add_template(substituent, atom, sub_exit, sub_tangent)
    parts = [first.name, linker.name, second.name] + ([substituent.name] if substituent else [])
    return b.build("-".join(parts))


def base_molecules() -> List[Molecule]:
    """Deterministic base set: mono- and di-substituted rings and linked ring pairs"""
    mols: List[Molecule] = []
    for ring in RINGS:
        mols.extend(substituted(ring, [sub]) for sub in SUBSTITUENTS)
    n_sub = len(SUBSTITUENTS)
    for i, ring in enumerate(RINGS):
        for j in range(0, n_sub, 3):
            pair = [SUBSTITUENTS[(j + i) % n_sub], SUBSTITUENTS[(j + i + 5) % n_sub]]
            mols.append(substituted(ring, pair))
    mols.extend(_linked_pairs(24))
    return mols


def _linked_pairs(count: int) -> Iterable[Molecule]:
    for k in range(count):
        first = RINGS[k % len(RINGS)]
        second = RINGS[(3 * k + 1) % len(RINGS)]
        linker = LINKERS[k % len(LINKERS)]
        sub = SUBSTITUENTS[k % len(SUBSTITUENTS)] if k % 2 else None
        yield linked(first, second, linker, sub, twist=30.0 * (k % 3))
