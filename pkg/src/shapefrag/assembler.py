"""Turn decoded fragment trees back into molecules."""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, NamedTuple, Optional, Sequence, Set, Tuple, Union

import numpy as np

from .codec import FragmentTree
from .errors import AssemblyError
from .fragments import Fragment, FragmentVocab
from .molecule import Molecule, find_clashes, merge

_logger = logging.getLogger(__name__)

CLASH_DISTANCE = 0.7
"""Non-bonded heavy atoms closer than this (Å) clash"""

MAX_VALENCE = {
    "B": 3,
    "C": 4,
    "N": 3,
    "O": 2,
    "F": 1,
    "Cl": 1,
    "Br": 1,
    "I": 1,
    "Si": 4,
    "P": 5,
    "S": 6,
    "Se": 2,
}


class FormedBond(NamedTuple):
    parent: int
    child: int
    slots: Tuple[int, int]
    atoms: Tuple[int, int]
    length: float


@dataclass
class AssemblyResult:
    molecule: Molecule
    bonds_formed: List[FormedBond] = field(default_factory=list)
    leftover_breakpoints: int = 0
    clashes: List[Tuple[int, int, float]] = field(default_factory=list)


def instantiate(tree: FragmentTree, vocab: Optional[FragmentVocab] = None) -> List[Fragment]:
    """Fragments of ``tree`` with the vocabulary geometry placed at each node pose"""
    if vocab is None:
        return list(tree.nodes)
    return [vocab[vocab.index(n.key)].placed(n.rotation, n.translation) for n in tree.nodes]


def assemble(
    tree: FragmentTree, vocab: Optional[FragmentVocab] = None, name: str = ""
) -> AssemblyResult:
    """Merge the posed fragments of ``tree`` into one molecule.

    Tree edges are visited in depth-first order; each one is realised as a single bond
    between the closest pair of still unused breakpoints of its two fragments.
    """
    fragments = instantiate(tree, vocab)
    world = [f.world_coords() for f in fragments]
    offsets = np.cumsum([0] + [len(f) for f in fragments])
    used: Set[Tuple[int, int]] = set()
    formed: List[FormedBond] = []

    for parent, child in tree.edges():
        free_p = [s for s in range(len(fragments[parent].breakpoints)) if (parent, s) not in used]
        free_c = [s for s in range(len(fragments[child].breakpoints)) if (child, s) not in used]
        if not free_p:
            raise AssemblyError(parent, child, "parent")
        if not free_c:
            raise AssemblyError(parent, child, "child")
        candidates = []
        for sp in free_p:
            atom_p = fragments[parent].breakpoints[sp]
            for sc in free_c:
                atom_c = fragments[child].breakpoints[sc]
                dist = float(np.linalg.norm(world[parent][atom_p] - world[child][atom_c]))
                candidates.append((dist, sp, sc, atom_p, atom_c))
        dist, sp, sc, atom_p, atom_c = min(candidates)
        used.update({(parent, sp), (child, sc)})
        atoms = (int(offsets[parent] + atom_p), int(offsets[child] + atom_c))
        formed.append(FormedBond(parent, child, (sp, sc), atoms, dist))

    parts = [f.molecule().with_coords(xyz) for f, xyz in zip(fragments, world)]
    molecule = merge(parts, [(a, b, 1) for _, _, _, (a, b), _ in formed], name)
    clashes = find_clashes(molecule, CLASH_DISTANCE)
    if clashes:
        _logger.warning(f"{name or 'assembled molecule'}: {len(clashes)} clashing atom pairs")
    leftover = sum(len(f.breakpoints) for f in fragments) - len(used)
    return AssemblyResult(molecule, formed, leftover, clashes)


# ---- Sanitization ----


class RejectReason(Enum):
    VALENCE = "valence"
    CONNECTIVITY = "connectivity"
    CLASH = "clash"


class Rejection(NamedTuple):
    reason: RejectReason
    detail: str

    def __str__(self):
        return f"{self.reason.value}: {self.detail}"


def sanitize(m: Molecule) -> Union[Molecule, Rejection]:
    """Accept ``m`` (returned unchanged) or explain why it is rejected.

    Valence follows :meth:`~shapefrag.molecule.Molecule.valence` and is checked against
    :obj:`MAX_VALENCE` (elements outside that table are not limited).
    """
    for atom in m.atoms:
        limit = MAX_VALENCE.get(atom.element)
        valence = m.valence(atom.id)
        if limit is not None and valence > limit:
            detail = f"atom {atom.id} ({atom.element}) has valence {valence}"
            return Rejection(RejectReason.VALENCE, detail)
    if not m.is_connected():
        count = len(m.components())
        return Rejection(RejectReason.CONNECTIVITY, f"{count} disconnected components")
    clashes = find_clashes(m, CLASH_DISTANCE)
    if clashes:
        i, j, d = clashes[0]
        return Rejection(RejectReason.CLASH, f"atoms {i} and {j} are {d:.2f} Å apart")
    return m


def rejection_report(rows: Sequence[Tuple[str, Rejection]]) -> str:
    """Tab-separated ``id reason detail`` lines with a header"""
    lines = ["id\treason\tdetail"]
    lines.extend(f"{ident}\t{r.reason.value}\t{r.detail}" for ident, r in rows)
    return "\n".join(lines) + "\n"


def count_by_reason(rejections: Sequence[Rejection]) -> Dict[str, int]:
    counts = {r.value: 0 for r in RejectReason}
    for r in rejections:
        counts[r.reason.value] += 1
    return counts
