"""Fragmentation of molecules into vocabulary pieces and the fragment vocabulary.

A :class:`Fragment` keeps its geometry in a *canonical frame*: centroid at the origin
and axes fixed by the fragment itself (breakpoint directions first, then atoms in
canonical graph order). The pose ``(rotation, translation)`` maps that frame back
onto the molecule the fragment was cut from.
"""

import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Dict, Iterable, List, NamedTuple, Sequence, Tuple

import networkx as nx
import numpy as np

from .errors import EmptyCorpus, MultiComponent, UnknownToken
from .geom import Quaternion, RigidMotion, apply_rigid, centroid
from .molecule import Molecule, formula
from .rules import RuleTable

_logger = logging.getLogger(__name__)

WL_ITERATIONS = 4
DEFAULT_MAX_SIZE = 4096
_TOL = 1e-6


class Control(IntEnum):
    """Reserved vocabulary indices"""

    BOB = 0
    EOB = 1
    BOS = 2
    EOS = 3
    PAD = 4


N_CONTROL = len(Control)


@dataclass(frozen=True, eq=False)
class Fragment:
    elements: Tuple[str, ...]
    coords: np.ndarray = field(repr=False)
    """Atom positions in the canonical frame"""
    bonds: Tuple[Tuple[int, int, int], ...] = field(repr=False)
    """``(a, b, order)`` over local atom ids"""
    breakpoints: Tuple[int, ...]
    """Local atom id of every cut-bond slot (an atom appears once per cut bond)"""
    exits: np.ndarray = field(repr=False)
    """Unit vector from each breakpoint atom towards its cut partner (canonical frame)"""
    key: str = ""
    rotation: Quaternion = Quaternion.identity()
    translation: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    source_ids: Tuple[int, ...] = ()

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64).reshape(-1, 3)
        exits = np.asarray(self.exits, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "exits", exits)
        if not self.key:
            object.__setattr__(self, "key", graph_key(self.elements, self.bonds, self.breakpoints))

    def __len__(self):
        return len(self.elements)

    @property
    def pose(self) -> RigidMotion:
        return RigidMotion(self.rotation, self.translation)

    def placed(self, rotation: Quaternion, translation) -> "Fragment":
        return replace(self, rotation=rotation, translation=tuple(float(v) for v in translation))

    def world_coords(self) -> np.ndarray:
        return apply_rigid(self.coords, self.rotation, self.translation)

    def world_exits(self) -> np.ndarray:
        return apply_rigid(self.exits, self.rotation, (0.0, 0.0, 0.0))

    def molecule(self, world: bool = False) -> Molecule:
        xyz = self.world_coords() if world else self.coords
        return Molecule.build(self.elements, xyz, self.bonds, self.key)


class CutBond(NamedTuple):
    """Bond removed by :func:`fragment`, with the fragments and breakpoint slots on
    each side.
    """

    a: int
    b: int
    fragments: Tuple[int, int]
    slots: Tuple[int, int]


# ---- Canonical labelling ----


def _graph(elements: Sequence[str], bonds: Iterable[Tuple], breakpoints: Sequence[int]):
    marks = Counter(breakpoints)
    g = nx.Graph()
    for i, e in enumerate(elements):
        g.add_node(i, label=f"{e}{'*' * marks[i]}")
    for a, b, order in bonds:
        g.add_edge(a, b, label=str(int(order)))
    return g


def graph_key(elements: Sequence[str], bonds: Iterable[Tuple], breakpoints: Sequence[int]) -> str:
    g = _graph(elements, bonds, breakpoints)
    digest = nx.weisfeiler_lehman_graph_hash(
        g, node_attr="label", edge_attr="label", iterations=WL_ITERATIONS
    )
    return f"{formula(elements)}|{len(breakpoints)}|{digest}"


def canonical_key(f: Fragment) -> str:
    """Key identifying ``f`` up to atom relabelling and rigid motion.

    Computed from a Weisfeiler-Lehman labelling of the fragment graph whose nodes carry
    the element and the number of breakpoints and whose edges carry the bond order.
    Distinct graphs may share a key (e.g. some regular graphs); :func:`same_graph`
    tells them apart and :func:`build_vocab` gives them distinct vocabulary keys.
    """
    return graph_key(f.elements, f.bonds, f.breakpoints)


def same_graph(a: Fragment, b: Fragment) -> bool:
    """Isomorphism of the labelled fragment graphs (breakpoints included)"""
    if len(a) != len(b) or len(a.bonds) != len(b.bonds):
        return False
    if (a.elements, a.bonds, a.breakpoints) == (b.elements, b.bonds, b.breakpoints):
        return True
    node_match = nx.algorithms.isomorphism.categorical_node_match("label", None)
    edge_match = nx.algorithms.isomorphism.categorical_edge_match("label", None)
    ga = _graph(a.elements, a.bonds, a.breakpoints)
    gb = _graph(b.elements, b.bonds, b.breakpoints)
    return nx.is_isomorphic(ga, gb, node_match=node_match, edge_match=edge_match)


def variant_key(key: str, variant: int) -> str:
    """Vocabulary key of the ``variant``-th distinct graph sharing ``key``"""
    return key if variant == 0 else f"{key}#{variant}"


def base_key(key: str) -> str:
    return key.split("#", 1)[0]


def atom_ranks(
    elements: Sequence[str], bonds: Iterable[Tuple], breakpoints: Sequence[int]
) -> List[int]:
    """Atom ids sorted in canonical order (ties kept in input order)"""
    g = _graph(elements, bonds, breakpoints)
    if g.number_of_edges():
        hashes = nx.weisfeiler_lehman_subgraph_hashes(
            g, node_attr="label", edge_attr="label", iterations=WL_ITERATIONS
        )
    else:
        hashes = {n: [] for n in g}
    labels = nx.get_node_attributes(g, "label")
    return sorted(g.nodes, key=lambda n: (labels[n], tuple(hashes[n])))


def canonical_frame(
    coords: np.ndarray, order: Sequence[int], breakpoints: Sequence[int], exits: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Centre and orthonormal axes (columns) of the canonical frame of a fragment.

    The first axis points to the (approximate) partner of the first breakpoint, the
    second is built from the next anchor that is not collinear with it.
    """
    center = centroid(coords)
    rel = np.asarray(coords) - center
    rank = {atom: i for i, atom in enumerate(order)}
    slots = sorted(range(len(breakpoints)), key=lambda s: (rank[breakpoints[s]], s))
    anchors = [rel[breakpoints[s]] + exits[s] for s in slots]
    anchors.extend(rel[atom] for atom in order)

    axes: List[np.ndarray] = []
    for v in anchors:
        for e in axes:
            v = v - np.dot(v, e) * e
        norm = np.linalg.norm(v)
        if norm > _TOL:
            axes.append(v / norm)
        if len(axes) == 2:
            break

    if not axes:
        return center, np.eye(3)
    if len(axes) == 1:
        e1 = axes[0]
        helper = np.eye(3)[int(np.argmin(np.abs(e1)))]
        e2 = helper - np.dot(helper, e1) * e1
        axes.append(e2 / np.linalg.norm(e2))
    e1, e2 = axes
    return center, np.stack([e1, e2, np.cross(e1, e2)], axis=1)


def make_fragment(
    elements: Sequence[str],
    world_coords,
    bonds: Sequence[Tuple[int, int, int]],
    breakpoints: Sequence[int],
    world_exits,
    source_ids: Sequence[int] = (),
) -> Fragment:
    """Build a fragment from world-frame geometry, computing its canonical pose"""
    xyz = np.asarray(world_coords, dtype=np.float64).reshape(-1, 3)
    exits = np.asarray(world_exits, dtype=np.float64).reshape(-1, 3)
    order = atom_ranks(elements, bonds, breakpoints)
    center, axes = canonical_frame(xyz, order, breakpoints, exits)
    return Fragment(
        elements=tuple(elements),
        coords=(xyz - center) @ axes,
        bonds=tuple((int(a), int(b), int(o)) for a, b, o in bonds),
        breakpoints=tuple(int(b) for b in breakpoints),
        exits=exits @ axes,
        rotation=Quaternion.from_matrix(axes),
        translation=tuple(float(v) for v in center),
        source_ids=tuple(int(i) for i in source_ids),
    )


# ---- Fragmentation ----


def cut_bonds(m: Molecule, rules: RuleTable) -> List[int]:
    """Indices (in ``m.bonds``) of the bonds selected by ``rules``"""
    return [i for i, bond in enumerate(m.bonds) if rules.cuts(m, bond)]


def fragment(m: Molecule, rules: RuleTable) -> Tuple[List[Fragment], List[CutBond]]:
    """Cut ``m`` into fragments.

    Every acyclic single bond touching a ring is cut, together with the acyclic single
    bonds selected by the rules in ``rules``. Fragments are listed by their lowest atom
    id; each cut bond adds one breakpoint slot to both fragments it separated.
    """
    components = m.components() if m.atoms else []
    if len(components) > 1:
        raise MultiComponent(m.name, len(components))

    cuts = cut_bonds(m, rules)
    g = m.graph()
    g.remove_edges_from(m.bonds[i].pair for i in cuts)
    parts = sorted((sorted(c) for c in nx.connected_components(g)), key=lambda c: c[0])
    owner = {atom: k for k, part in enumerate(parts) for atom in part}
    local = {atom: i for part in parts for i, atom in enumerate(part)}

    slots: List[List[int]] = [[] for _ in parts]
    exits: List[List[np.ndarray]] = [[] for _ in parts]
    cut_list: List[CutBond] = []
    coords = m.coords
    for i in cuts:
        bond = m.bonds[i]
        ends = []
        for atom, partner in ((bond.a, bond.b), (bond.b, bond.a)):
            k = owner[atom]
            direction = coords[partner] - coords[atom]
            norm = np.linalg.norm(direction)
            exits[k].append(direction / norm if norm > _TOL else np.zeros(3))
            slots[k].append(local[atom])
            ends.append((k, len(slots[k]) - 1))
        (fa, sa), (fb, sb) = ends
        cut_list.append(CutBond(bond.a, bond.b, (fa, fb), (sa, sb)))

    cut_set = set(cuts)
    fragments = []
    for k, part in enumerate(parts):
        members = set(part)
        local_bonds = [
            (local[b.a], local[b.b], int(b.order))
            for i, b in enumerate(m.bonds)
            if i not in cut_set and b.a in members
        ]
        frag = make_fragment(
            [m.atoms[a].element for a in part],
            coords[part],
            local_bonds,
            slots[k],
            np.array(exits[k]).reshape(-1, 3),
            part,
        )
        fragments.append(frag)

    _logger.debug(f"{m.name or 'molecule'}: {len(fragments)} fragments, {len(cut_list)} cuts")
    return fragments, cut_list


def reassemble_graph(fragments: Sequence[Fragment], cuts: Sequence[CutBond]) -> Molecule:
    """Graph-level inverse of :func:`fragment` (world coordinates, original bonds)"""
    n = sum(len(f) for f in fragments)
    elements = [""] * n
    xyz = np.zeros((n, 3))
    bonds = []
    for f in fragments:
        world = f.world_coords()
        for i, atom in enumerate(f.source_ids):
            elements[atom] = f.elements[i]
            xyz[atom] = world[i]
        bonds.extend((f.source_ids[a], f.source_ids[b], o) for a, b, o in f.bonds)
    bonds.extend((c.a, c.b, 1) for c in cuts)
    return Molecule.build(elements, xyz, bonds)


# ---- Vocabulary ----


@dataclass(frozen=True, eq=False)
class FragmentVocab:
    """Indexed fragment vocabulary. Indices ``0..4`` are the :class:`Control` symbols,
    fragment ``entries[i]`` has index ``i + 5``.
    """

    entries: Tuple[Fragment, ...] = ()
    counts: Tuple[int, ...] = ()
    rule_table: str = ""
    _index: Dict[str, int] = field(init=False, repr=False, compare=False)
    _variants: Dict[str, List[int]] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        counts = tuple(self.counts) or (0,) * len(self.entries)
        object.__setattr__(self, "counts", counts)
        index = {f.key: N_CONTROL + i for i, f in enumerate(self.entries)}
        if len(index) != len(self.entries):
            raise ValueError("Fragment vocabulary keys must be unique")
        object.__setattr__(self, "_index", index)
        variants: Dict[str, List[int]] = {}
        for key, i in index.items():
            variants.setdefault(base_key(key), []).append(i)
        object.__setattr__(self, "_variants", variants)

    def __len__(self):
        return N_CONTROL + len(self.entries)

    def __contains__(self, key) -> bool:
        return key in self._index

    @property
    def keys(self) -> List[str]:
        return [f.key for f in self.entries]

    def index(self, key: str) -> int:
        try:
            return self._index[key]
        except KeyError:
            raise UnknownToken("Fragment key", key, len(self)) from None

    def lookup(self, f: Fragment) -> int:
        """Index of the entry with the same graph as ``f``"""
        for index in self._variants.get(base_key(f.key), ()):
            if same_graph(self[index], f):
                return index
        raise UnknownToken("Fragment key", f.key, len(self))

    def __getitem__(self, index: int) -> Fragment:
        if not N_CONTROL <= index < len(self):
            raise UnknownToken("Fragment index", index, len(self))
        return self.entries[index - N_CONTROL]


def build_vocab(
    corpus: Sequence[Molecule], rules: RuleTable, max_size: int = DEFAULT_MAX_SIZE
) -> FragmentVocab:
    """Vocabulary of the ``max_size`` most frequent fragments in ``corpus``.

    Ties are broken by key; the geometry of each entry is the canonical-frame geometry
    of its first occurrence. Non-isomorphic fragments sharing a key become separate
    entries (see :func:`variant_key`).
    """
    EmptyCorpus.check(corpus)
    counts: Counter = Counter()
    first: Dict[str, Fragment] = {}
    variants: Dict[str, List[Fragment]] = {}
    for m in corpus:
        try:
            fragments, _ = fragment(m, rules)
        except MultiComponent as ex:
            _logger.warning(f"Skipping corpus molecule: {ex}")
            continue
        for f in fragments:
            key = _vocab_key(f, variants.setdefault(f.key, []))
            counts[key] += 1
            if key not in first:
                first[key] = replace(f, key=key).placed(Quaternion.identity(), (0.0, 0.0, 0.0))

    ranked = sorted(counts, key=lambda k: (-counts[k], k))[:max_size]
    _logger.info(f"Vocabulary: {len(ranked)} of {len(counts)} distinct fragments kept")
    return FragmentVocab(
        tuple(replace(first[k], source_ids=()) for k in ranked),
        tuple(counts[k] for k in ranked),
        rules.name,
    )


def _vocab_key(f: Fragment, seen: List[Fragment]) -> str:
    for variant, other in enumerate(seen):
        if same_graph(f, other):
            return variant_key(f.key, variant)
    if seen:
        _logger.warning(f"Distinct fragments share the key {f.key!r}, numbering them")
    seen.append(f)
    return variant_key(f.key, len(seen) - 1)


def fragment_keys(m: Molecule, rules: RuleTable) -> Counter:
    """Multiset of fragment keys of ``m``"""
    fragments, _ = fragment(m, rules)
    return Counter(f.key for f in fragments)
