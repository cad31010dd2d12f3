"""Heavy-atom molecular graphs with 3D coordinates.

Hydrogens are implicit: they are never stored and do not take part in valence, shape
or fragmentation computations.
"""

import logging
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from scipy.spatial.distance import pdist, squareform

from .errors import InvalidMolecule
from .geom import Quaternion, RigidMotion, apply_rigid, centroid

_logger = logging.getLogger(__name__)


class BondOrder(IntEnum):
    """Bond orders, numbered as in the MOL V2000 bond block"""

    SINGLE = 1
    DOUBLE = 2
    TRIPLE = 3
    AROMATIC = 4


@dataclass(frozen=True, eq=False)
class Atom:
    element: str
    position: np.ndarray = field(repr=False)
    id: int = 0

    def __post_init__(self):
        if not self.element:
            raise ValueError("Atom element cannot be empty")
        pos = np.asarray(self.position, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(pos)):
            raise ValueError(f"Atom {self.id} has non-finite coordinates {pos}")
        object.__setattr__(self, "position", pos)


@dataclass(frozen=True)
class Bond:
    a: int
    b: int
    order: BondOrder = BondOrder.SINGLE
    in_ring: bool = False

    @property
    def pair(self) -> Tuple[int, int]:
        return (self.a, self.b) if self.a < self.b else (self.b, self.a)

    def other(self, atom: int) -> int:
        return self.b if atom == self.a else self.a

    @property
    def is_acyclic_single(self) -> bool:
        return self.order == BondOrder.SINGLE and not self.in_ring


@dataclass(eq=False)
class Molecule:
    atoms: List[Atom] = field(default_factory=list)
    bonds: List[Bond] = field(default_factory=list)
    name: str = ""
    multi_component: bool = False

    def __post_init__(self):
        for i, atom in enumerate(self.atoms):
            if atom.id != i:
                raise InvalidMolecule(self.name, f"atom {i} carries id {atom.id}")
        seen = set()
        n = len(self.atoms)
        for bond in self.bonds:
            if bond.a == bond.b:
                raise InvalidMolecule(self.name, f"bond {bond.a}-{bond.b} is a self loop")
            if not (0 <= bond.a < n and 0 <= bond.b < n):
                raise InvalidMolecule(self.name, f"bond {bond.a}-{bond.b} out of range")
            if bond.pair in seen:
                raise InvalidMolecule(self.name, f"duplicated bond {bond.a}-{bond.b}")
            seen.add(bond.pair)

    @classmethod
    def build(
        cls,
        elements: Sequence[str],
        coords,
        bonds: Iterable[Tuple] = (),
        name: str = "",
    ) -> "Molecule":
        """Create a molecule from plain sequences, computing ring flags and
        connectivity. Each bond is ``(a, b)`` or ``(a, b, order)``.
        """
        xyz = np.asarray(coords, dtype=np.float64).reshape(-1, 3)
        atoms = [Atom(e, p, i) for i, (e, p) in enumerate(zip(elements, xyz))]
        bond_objs = [
            Bond(b[0], b[1], BondOrder(b[2]) if len(b) > 2 else BondOrder.SINGLE) for b in bonds
        ]
        return cls(atoms, bond_objs, name).perceive()

    def __len__(self):
        return len(self.atoms)

    def __repr__(self):
        sizes = f"atoms={len(self.atoms)}, bonds={len(self.bonds)}"
        return f"{self.__class__.__name__}({self.name!r}, {sizes})"

    @property
    def coords(self) -> np.ndarray:
        if not self.atoms:
            return np.zeros((0, 3))
        return np.stack([a.position for a in self.atoms])

    @property
    def elements(self) -> List[str]:
        return [a.element for a in self.atoms]

    def centroid(self) -> np.ndarray:
        return centroid(self.coords)

    def graph(self) -> nx.Graph:
        """Molecular graph with ``element`` node labels and ``order`` edge labels"""
        g = nx.Graph()
        for atom in self.atoms:
            g.add_node(atom.id, element=atom.element)
        for i, bond in enumerate(self.bonds):
            g.add_edge(bond.a, bond.b, order=int(bond.order), index=i)
        return g

    def neighbors(self) -> Dict[int, List[int]]:
        adjacency: Dict[int, List[int]] = {a.id: [] for a in self.atoms}
        for bond in self.bonds:
            adjacency[bond.a].append(bond.b)
            adjacency[bond.b].append(bond.a)
        return adjacency

    def components(self) -> List[set]:
        return [set(c) for c in nx.connected_components(self.graph())]

    def is_connected(self) -> bool:
        return len(self.atoms) <= 1 or nx.is_connected(self.graph())

    def perceive(self) -> "Molecule":
        """Recompute ``in_ring`` flags and the multi-component flag in place.
        A bond belongs to a ring exactly when it is not a bridge of the graph.
        """
        g = self.graph()
        bridges = {tuple(sorted(e)) for e in nx.bridges(g)} if len(g) else set()
        self.bonds = [replace(b, in_ring=b.pair not in bridges) for b in self.bonds]
        self.multi_component = not self.is_connected()
        return self

    def valence(self, atom: int) -> int:
        """Explicit heavy-atom valence; an aromatic system counts as one extra unit
        on top of one unit per aromatic bond.
        """
        total = 0
        aromatic = False
        for bond in self.bonds:
            if atom in (bond.a, bond.b):
                aromatic |= bond.order == BondOrder.AROMATIC
                total += 1 if bond.order == BondOrder.AROMATIC else int(bond.order)
        return total + int(aromatic)

    def transformed(self, rotation: Quaternion, translation) -> "Molecule":
        xyz = apply_rigid(self.coords, rotation, translation) if self.atoms else self.coords
        return self.with_coords(xyz)

    def moved(self, motion: RigidMotion) -> "Molecule":
        return self.transformed(motion.rotation, motion.translation)

    def with_coords(self, coords) -> "Molecule":
        atoms = [Atom(a.element, p, a.id) for a, p in zip(self.atoms, np.asarray(coords))]
        return Molecule(atoms, list(self.bonds), self.name, self.multi_component)

    def centered(self) -> "Molecule":
        """Copy translated so that its centroid sits at the origin"""
        return self.with_coords(self.coords - self.centroid())

    def renamed(self, name: str) -> "Molecule":
        return Molecule(list(self.atoms), list(self.bonds), name, self.multi_component)


def merge(parts: Sequence[Molecule], extra_bonds: Iterable[Tuple] = (), name: str = "") -> Molecule:
    """Concatenate molecules (renumbering atoms) and add ``extra_bonds`` given as
    ``(a, b)``/``(a, b, order)`` over the concatenated numbering.
    """
    elements: List[str] = []
    coords: List[np.ndarray] = []
    bonds: List[Tuple] = []
    for part in parts:
        shift = len(elements)
        elements.extend(part.elements)
        coords.extend(a.position for a in part.atoms)
        bonds.extend((b.a + shift, b.b + shift, b.order) for b in part.bonds)
    bonds.extend(extra_bonds)
    return Molecule.build(elements, np.array(coords).reshape(-1, 3), bonds, name)


def isomorphic(a: Molecule, b: Molecule) -> bool:
    """Graph isomorphism over elements and bond orders (geometry ignored)"""
    if len(a.atoms) != len(b.atoms) or len(a.bonds) != len(b.bonds):
        return False
    node_match = nx.algorithms.isomorphism.categorical_node_match("element", None)
    edge_match = nx.algorithms.isomorphism.categorical_edge_match("order", None)
    return nx.is_isomorphic(a.graph(), b.graph(), node_match=node_match, edge_match=edge_match)


def molecule_key(m: Molecule, iterations: int = 4) -> str:
    """Canonical graph key over elements and bond orders (conformation ignored)"""
    g = m.graph()
    for node, data in g.nodes(data=True):
        data["label"] = data["element"]
    for _u, _v, data in g.edges(data=True):
        data["label"] = str(data["order"])
    digest = nx.weisfeiler_lehman_graph_hash(
        g, node_attr="label", edge_attr="label", iterations=iterations
    )
    return f"{formula(m.elements)}:{digest}"


def formula(elements: Iterable[str]) -> str:
    """Hill-ordered heavy-atom formula

    >>> formula(["O", "C", "C", "N"])
    'C2NO'
    """
    counts: Dict[str, int] = {}
    for e in elements:
        counts[e] = counts.get(e, 0) + 1
    order = sorted(counts, key=lambda e: (e != "C", e))
    return "".join(f"{e}{counts[e] if counts[e] > 1 else ''}" for e in order)


def find_clashes(m: Molecule, threshold: float = 0.7) -> List[Tuple[int, int, float]]:
    """Non-bonded atom pairs closer than ``threshold`` Å"""
    if len(m.atoms) < 2:
        return []
    dist = squareform(pdist(m.coords))
    bonded = {b.pair for b in m.bonds}
    close = np.argwhere(np.triu(dist < threshold, k=1))
    return [(int(i), int(j), float(dist[i, j])) for i, j in close if (i, j) not in bonded]

