from typing import TYPE_CHECKING, Callable, Dict, Protocol

if TYPE_CHECKING:  # pragma: no cover
    from .molecule import Bond, Molecule

BondRule = Callable[["Molecule", "Bond"], bool]
"""Predicate deciding whether an acyclic single bond should be cut"""


class CLIChoice(Protocol):
    """:meta private:"""

    name: str
    help_text: str


class RuleTable(Protocol):
    name: str
    help_text: str
    rules: Dict[str, BondRule]


class Fragmenter(Protocol):
    def __getitem__(self, table_name: str) -> RuleTable:
        """Create and register (and return) a :class:`RuleTable`
        (or return a previously registered one).
        """
        ...

    def register_rule(self, table_name: str, fn: BondRule, name: str = ""):
        """Add a bond rule to the given table. ``name`` defaults to ``fn.__name__``."""
        ...


Plugin = Callable[[Fragmenter], None]


__all__ = [
    "BondRule",
    "CLIChoice",
    "Fragmenter",
    "Plugin",
    "RuleTable",
]
