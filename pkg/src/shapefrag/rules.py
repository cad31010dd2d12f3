"""Bond rules deciding where molecules are cut into fragments.

Acyclic single bonds touching a ring are *always* cut (see
:func:`shapefrag.fragments.fragment`). A :class:`RuleTable` lists the extra bond rules
that are applied on top of that. Each rule receives the (perceived) molecule and an
acyclic single bond and answers whether the bond should be cut.
"""

import inspect
from typing import Dict, Mapping, Optional, Set, TypeVar

import networkx as nx

from .molecule import Bond, BondOrder, Molecule
from .types import BondRule

T = TypeVar("T", bound="RuleTable")

HETERO_LINKS = {frozenset(("C", "O")), frozenset(("C", "N"))}


def replace(self: T, **changes) -> T:
    """Works similarly to :func:`dataclasses.replace`"""
    sig = inspect.signature(self.__class__)
    kwargs = {x: getattr(self, x) for x in sig.parameters}
    kwargs.update(changes)
    return self.__class__(**kwargs)


class RuleTable:
    """Named collection of bond rules, following the API defined in
    :class:`shapefrag.types.RuleTable`.
    """

    def __init__(
        self,
        name: str,
        help_text: str = "",
        rules: Optional[Mapping[str, BondRule]] = None,
    ):
        self.name = name
        self.help_text = help_text
        self.rules: Dict[str, BondRule] = dict(rules or {})

    replace = replace

    def _copy(self: T) -> T:
        return self.__class__(name=self.name, help_text=self.help_text, rules=self.rules)

    def __repr__(self):
        return f"{self.__class__.__name__}({self.name!r}, rules={list(self.rules)})"

    def cuts(self, molecule: Molecule, bond: Bond) -> bool:
        """``True`` when ``bond`` is an acyclic single bond selected for cutting"""
        if not bond.is_acyclic_single:
            return False
        if touches_ring(molecule, bond):
            return True
        return any(rule(molecule, bond) for rule in self.rules.values())


def ring_atoms(molecule: Molecule) -> Set[int]:
    return {i for b in molecule.bonds if b.in_ring for i in b.pair}


def touches_ring(molecule: Molecule, bond: Bond) -> bool:
    """Single bond with at least one endpoint in a ring"""
    rings = ring_atoms(molecule)
    return bond.a in rings or bond.b in rings


def is_carbonyl_carbon(molecule: Molecule, atom: int) -> bool:
    if molecule.atoms[atom].element != "C":
        return False
    for b in molecule.bonds:
        if atom in b.pair and b.order == BondOrder.DOUBLE:
            if molecule.atoms[b.other(atom)].element == "O":
                return True
    return False


def adjacent_to_carbonyl(molecule: Molecule, bond: Bond) -> bool:
    """Cut carbon-carbon single bonds next to a C=O group"""
    elements = molecule.elements
    if elements[bond.a] != "C" or elements[bond.b] != "C":
        return False
    return is_carbonyl_carbon(molecule, bond.a) or is_carbonyl_carbon(molecule, bond.b)


def hetero_linkage(molecule: Molecule, bond: Bond) -> bool:
    """Cut ether/amine C-O and C-N linkages with at least two heavy atoms per side"""
    elements = molecule.elements
    if frozenset((elements[bond.a], elements[bond.b])) not in HETERO_LINKS:
        return False
    g = molecule.graph()
    g.remove_edge(bond.a, bond.b)
    sides = (nx.node_connected_component(g, bond.a), nx.node_connected_component(g, bond.b))
    return all(len(side) >= 2 for side in sides)
