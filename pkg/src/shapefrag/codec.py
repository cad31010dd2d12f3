"""Fragment trees and their linear token form.

A molecule cut by :func:`shapefrag.fragments.fragment` becomes a :class:`FragmentTree`
rooted at a terminal fragment. :func:`linearize` walks the tree depth first and emits
one :class:`FragmentToken` ``(C, Pc, Rc)`` per fragment: the vocabulary index and the
discretized pose (absolute, in the grid frame) of the fragment. Children of a node with
two or more children are wrapped in ``BOB ... EOB`` markers; a single child follows its
parent inline::

    BOS A B C EOS                      # chain A-B-C
    BOS R BOB X EOB BOB Y EOB EOS      # R with children X and Y
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np

from .errors import (
    EmptyTree,
    InternalConsistency,
    MalformedSequence,
    TranslationOutOfRange,
)
from .fragments import Control, CutBond, Fragment, FragmentVocab, fragment
from .geom import Quaternion, RigidMotion, compose
from .molecule import Molecule
from .rules import RuleTable

_logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PoseBins:
    """Discretization of fragment poses: translations are binned over
    ``[-length/2, length/2)`` Å per axis, quaternion components over ``[-1, 1]``.
    """

    length: float = 32.0
    translation_bins: int = 64
    rotation_bins: int = 64

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError(f"Translation range must be positive ({self.length!r} given)")
        if self.translation_bins < 1 or self.rotation_bins < 1:
            raise ValueError("Bin counts must be positive")

    @property
    def translation_error(self) -> float:
        """Largest per-axis translation error introduced by binning"""
        return self.length / (2 * self.translation_bins)


class FragmentToken(NamedTuple):
    C: int
    Pc: Tuple[int, int, int]
    Rc: Tuple[int, int, int, int]


Token = Union[FragmentToken, Control]
TokenSequence = List[Token]


# ---- Pose discretization ----


def discretize_translation(P, L: float = 32.0, b_t: int = 64) -> Tuple[int, int, int]:
    """Uniform bin index of each component of ``P`` over ``[-L/2, L/2)``

    >>> discretize_translation((0.0, -16.0, 15.9), 32.0, 64)
    (32, 0, 63)
    """
    width = L / b_t
    out = []
    for p in np.asarray(P, dtype=np.float64).reshape(3):
        if not (-L / 2 <= p < L / 2):
            raise TranslationOutOfRange(float(p), L)
        out.append(min(int(math.floor((p + L / 2) / width)), b_t - 1))
    return tuple(out)  # type: ignore[return-value]


def undiscretize_translation(indices, L: float = 32.0, b_t: int = 64) -> np.ndarray:
    """Centres of the translation bins"""
    return -L / 2 + (np.asarray(indices, dtype=np.float64) + 0.5) * (L / b_t)


def discretize_rotation(R: Quaternion, b_r: int = 64) -> Tuple[int, int, int, int]:
    """Per-component bin index of the ``w >= 0`` representative of ``R``

    >>> discretize_rotation(Quaternion(1.0, 0.0, 0.0, 0.0), 64)
    (63, 32, 32, 32)
    """
    q = Quaternion(*R).check_unit().canonical()
    width = 2.0 / b_r
    idx = (min(max(int(math.floor((c + 1.0) / width)), 0), b_r - 1) for c in q)
    return tuple(idx)  # type: ignore[return-value]


def undiscretize_rotation(indices, b_r: int = 64) -> Quaternion:
    """Unit quaternion closest to the bin centres"""
    centers = -1.0 + (np.asarray(indices, dtype=np.float64) + 0.5) * (2.0 / b_r)
    norm = float(np.linalg.norm(centers))
    if norm < 1e-12:
        return Quaternion.identity()
    return Quaternion.from_array(centers / norm)


def rotation_error_bound(b_r: int) -> float:
    """Worst-case angular error (radians) of rotation binning.

    Each of the four components is off by at most half a bin (``1 / b_r``), so the bin
    centre lies within ``2 / b_r`` of the unit quaternion.
    """
    return 2 * math.asin(min(1.0, 2.0 / b_r))


# ---- Trees ----


@dataclass
class FragmentTree:
    """Tree of posed fragments.

    ``children[i]`` lists the children of node ``i`` in emission order. ``links`` maps a
    ``(parent, child)`` edge to the breakpoint slots of the cut bond it stands for
    (only known for trees built from molecules).
    """

    nodes: List[Fragment]
    children: List[List[int]]
    root: int = 0
    links: Dict[Tuple[int, int], Tuple[int, int]] = field(default_factory=dict)

    def __len__(self):
        return len(self.nodes)

    def preorder(self) -> List[int]:
        order, stack = [], [self.root] if self.nodes else []
        while stack:
            i = stack.pop()
            order.append(i)
            stack.extend(reversed(self.children[i]))
        return order

    def edges(self) -> List[Tuple[int, int]]:
        """``(parent, child)`` pairs in depth-first pre-order"""
        return [(i, c) for i in self.preorder() for c in self.children[i]]

    def degree(self, i: int) -> int:
        parent = int(any(i in kids for kids in self.children))
        return len(self.children[i]) + parent

    def structure(self, i: Optional[int] = None) -> tuple:
        """Nested ``(key, (child structures...))`` description, ignoring poses"""
        i = self.root if i is None else i
        return (self.nodes[i].key, tuple(self.structure(c) for c in self.children[i]))

    def transformed(self, motion: RigidMotion) -> "FragmentTree":
        """Same tree with every fragment pose moved by ``motion``"""
        nodes = [
            n.placed(compose(n.rotation, motion.rotation), motion.apply(np.asarray(n.translation)))
            for n in self.nodes
        ]
        kids = [list(c) for c in self.children]
        return FragmentTree(nodes, kids, self.root, dict(self.links))


def build_tree(fragments: Sequence[Fragment], cut_bonds: Sequence[CutBond]) -> FragmentTree:
    """Root the fragment graph at its terminal fragment with the smallest key.

    Children are ordered by the distance between the parent centroid and the parent
    breakpoint of the connecting bond (ties broken by key).
    """
    n = len(fragments)
    if n == 0:
        raise EmptyTree()
    g = nx.Graph()
    g.add_nodes_from(range(n))
    slot_of: Dict[Tuple[int, int], Tuple[int, int]] = {}
    for cut in cut_bonds:
        (fa, fb), (sa, sb) = cut.fragments, cut.slots
        if fa == fb or g.has_edge(fa, fb):
            raise InternalConsistency(f"repeated link between fragments {fa} and {fb}")
        g.add_edge(fa, fb)
        slot_of[(fa, fb)], slot_of[(fb, fa)] = (sa, sb), (sb, sa)
    if not nx.is_tree(g):
        raise InternalConsistency(f"{n} fragments, {len(cut_bonds)} cuts")

    terminals = [i for i in range(n) if g.degree(i) == 1]
    root = min(terminals, key=lambda i: (fragments[i].key, i)) if terminals else 0

    def distance(parent: int, child: int) -> float:
        frag = fragments[parent]
        slot = slot_of[(parent, child)][0]
        atom = frag.world_coords()[frag.breakpoints[slot]]
        return float(np.linalg.norm(atom - np.asarray(frag.translation)))

    children: List[List[int]] = [[] for _ in range(n)]
    links: Dict[Tuple[int, int], Tuple[int, int]] = {}
    for parent, child in nx.bfs_edges(g, root):
        children[parent].append(child)
        links[(parent, child)] = slot_of[(parent, child)]
    for parent, kids in enumerate(children):
        kids.sort(key=lambda c: (round(distance(parent, c), 6), fragments[c].key, c))
    return FragmentTree(list(fragments), children, root, links)


def encode_tree(tree: FragmentTree, vocab: FragmentVocab, i: int, bins: PoseBins) -> FragmentToken:
    node = tree.nodes[i]
    return FragmentToken(
        vocab.lookup(node),
        discretize_translation(node.translation, bins.length, bins.translation_bins),
        discretize_rotation(node.rotation, bins.rotation_bins),
    )


def linearize(
    tree: FragmentTree, vocab: FragmentVocab, bins: PoseBins = PoseBins()
) -> TokenSequence:
    """Depth-first token sequence of ``tree`` (see module docstring)"""
    seq: TokenSequence = [Control.BOS]

    def visit(i: int):
        seq.append(encode_tree(tree, vocab, i, bins))
        kids = tree.children[i]
        if len(kids) == 1:
            visit(kids[0])
        elif len(kids) > 1:
            for child in kids:
                seq.append(Control.BOB)
                visit(child)
                seq.append(Control.EOB)

    if tree.nodes:
        visit(tree.root)
    seq.append(Control.EOS)
    return seq


def delinearize(
    seq: Sequence[Token], vocab: FragmentVocab, bins: PoseBins = PoseBins()
) -> FragmentTree:
    """Inverse of :func:`linearize`: fragments are taken from ``vocab`` and placed at
    the bin centres of their pose.
    """
    tokens = list(seq)
    if not tokens or tokens[0] != Control.BOS:
        raise MalformedSequence(0, "sequence must start with BOS")
    if len(tokens) >= 2 and tokens[1] == Control.EOS:
        raise EmptyTree()

    nodes: List[Fragment] = []
    children: List[List[int]] = []

    def place(pos: int) -> int:
        token = tokens[pos]
        if not isinstance(token, FragmentToken):
            raise MalformedSequence(pos, f"expected a fragment, got {_name(token)}")
        if not all(0 <= p < bins.translation_bins for p in token.Pc):
            raise MalformedSequence(pos, f"translation bins {token.Pc} out of range")
        if not all(0 <= r < bins.rotation_bins for r in token.Rc):
            raise MalformedSequence(pos, f"rotation bins {token.Rc} out of range")
        frag = vocab[token.C]
        rotation = undiscretize_rotation(token.Rc, bins.rotation_bins)
        shift = undiscretize_translation(token.Pc, bins.length, bins.translation_bins)
        nodes.append(frag.placed(rotation, shift))
        children.append([])
        return len(nodes) - 1

    def parse(pos: int) -> Tuple[int, int]:
        """Parse a node starting at ``pos``; return ``(node id, next position)``"""
        node = place(pos)
        pos += 1
        nxt = _at(tokens, pos)
        if isinstance(nxt, FragmentToken):
            child, pos = parse(pos)
            children[node].append(child)
        elif nxt == Control.BOB:
            while _at(tokens, pos) == Control.BOB:
                child, pos = parse(pos + 1)
                if _at(tokens, pos) != Control.EOB:
                    raise MalformedSequence(pos, "unterminated branch (expected EOB)")
                children[node].append(child)
                pos += 1
            if len(children[node]) == 1:
                _logger.debug(f"Position {pos}: single branch wrapped in BOB/EOB")
        return node, pos

    root, pos = parse(1)
    if _at(tokens, pos) != Control.EOS:
        raise MalformedSequence(pos, f"expected EOS, got {_name(_at(tokens, pos))}")
    if pos != len(tokens) - 1:
        raise MalformedSequence(pos + 1, "tokens after EOS")
    return FragmentTree(nodes, children, root)


def _at(tokens: Sequence[Token], pos: int) -> Optional[Token]:
    return tokens[pos] if pos < len(tokens) else None


def _name(token: Optional[Token]) -> str:
    if token is None:
        return "end of sequence"
    if isinstance(token, FragmentToken):
        return "a fragment"
    try:
        return Control(token).name
    except ValueError:
        return repr(token)


def validate_sequence(seq: Sequence[Token]) -> int:
    """Check the ``BOS node EOS`` grammar without a vocabulary (poses are not looked
    at) and return the number of fragments. Raises :class:`MalformedSequence`.
    """
    tokens = list(seq)
    if not tokens or tokens[0] != Control.BOS:
        raise MalformedSequence(0, "sequence must start with BOS")
    if len(tokens) >= 2 and tokens[1] == Control.EOS:
        raise EmptyTree()

    def node(pos: int) -> Tuple[int, int]:
        if not isinstance(_at(tokens, pos), FragmentToken):
            raise MalformedSequence(pos, f"expected a fragment, got {_name(_at(tokens, pos))}")
        count, pos = 1, pos + 1
        nxt = _at(tokens, pos)
        if isinstance(nxt, FragmentToken):
            sub, pos = node(pos)
            count += sub
        elif nxt == Control.BOB:
            while _at(tokens, pos) == Control.BOB:
                sub, pos = node(pos + 1)
                if _at(tokens, pos) != Control.EOB:
                    raise MalformedSequence(pos, "unterminated branch (expected EOB)")
                count, pos = count + sub, pos + 1
        return count, pos

    count, pos = node(1)
    if _at(tokens, pos) != Control.EOS:
        raise MalformedSequence(pos, f"expected EOS, got {_name(_at(tokens, pos))}")
    if pos != len(tokens) - 1:
        raise MalformedSequence(pos + 1, "tokens after EOS")
    return count


def is_balanced(seq: Sequence[Token]) -> bool:
    depth = 0
    for token in seq:
        if token == Control.BOB:
            depth += 1
        elif token == Control.EOB:
            depth -= 1
            if depth < 0:
                return False
    return depth == 0


def expected_length(tree: FragmentTree) -> int:
    """Number of tokens :func:`linearize` emits for ``tree``"""
    wrapped = sum(len(k) for k in tree.children if len(k) > 1)
    return len(tree) + 2 * wrapped + 2


def encode_molecule(
    m: Molecule, vocab: FragmentVocab, rules: RuleTable, bins: PoseBins = PoseBins()
) -> Tuple[FragmentTree, TokenSequence]:
    """Fragment ``m`` and linearize its tree (fragments must be in ``vocab``)"""
    fragments, cuts = fragment(m, rules)
    for f in fragments:
        vocab.lookup(f)
    tree = build_tree(fragments, cuts)
    return tree, linearize(tree, vocab, bins)
