import inspect
import logging
from typing import Dict, List, Optional, Sequence, Tuple

from . import types  # Structural/Abstract types
from .errors import AlreadyRegisteredRule, UndefinedRuleTable
from .fragments import CutBond, Fragment, FragmentVocab, build_vocab, fragment
from .molecule import Molecule
from .plugins import builtin_plugins, list_from_entry_points
from .rules import RuleTable

_logger = logging.getLogger(__name__)

DEFAULT_TABLE = "reduced"


class Fragmenter:
    """Registry of fragmentation :class:`~shapefrag.rules.RuleTable` objects, following
    the public API defined in :class:`shapefrag.types.Fragmenter`.

    Rule tables are contributed by plugins: functions receiving the fragmenter object
    and registering tables/rules on it. When ``plugins`` is not given, the plugins
    advertised in the ``shapefrag.rules`` `entry-points`_ group are loaded together with
    the ones shipped in :mod:`shapefrag.plugins`.

    .. _entry-points: https://packaging.python.org/specifications/entry-points/
    """

    tables: Dict[str, RuleTable]
    plugins: List[types.Plugin]

    def __init__(
        self,
        plugins: Optional[Sequence[types.Plugin]] = None,
        tables: Sequence[RuleTable] = (),
    ):
        if plugins is None:
            plugins = [*builtin_plugins(), *list_from_entry_points()]
        self.plugins = _deduplicate_plugins(plugins)
        self.tables = {t.name: t for t in tables}

        for activate in self.plugins:
            activate(self)

    def __getitem__(self, table_name: str) -> RuleTable:
        """Retrieve an existing rule table (or create a new one)."""
        if table_name not in self.tables:
            self.tables[table_name] = RuleTable(table_name)
        return self.tables[table_name]

    def register_rule(self, table_name: str, fn: types.BondRule, name: str = ""):
        table = self[table_name]
        name = (name or fn.__name__).strip()
        AlreadyRegisteredRule.check(name, table_name, fn, table.rules)
        table.rules[name] = fn

    def table(self, table_name: str = DEFAULT_TABLE) -> RuleTable:
        """Copy of a registered table (changes do not leak back into the registry)"""
        UndefinedRuleTable.check(table_name, list(self.tables.keys()))
        return self.tables[table_name]._copy()

    def fragment(
        self, m: Molecule, table_name: str = DEFAULT_TABLE
    ) -> Tuple[List[Fragment], List[CutBond]]:
        return fragment(m, self.table(table_name))

    def build_vocab(
        self, corpus: Sequence[Molecule], table_name: str = DEFAULT_TABLE, **kwargs
    ) -> FragmentVocab:
        return build_vocab(corpus, self.table(table_name), **kwargs)


def default_rules(table_name: str = DEFAULT_TABLE) -> RuleTable:
    return Fragmenter().table(table_name)


def _deduplicate_plugins(plugins: Sequence[types.Plugin]) -> List[types.Plugin]:
    deduplicated = {_plugin_name(p): p for p in plugins}
    return list(deduplicated.values())


def _plugin_name(plugin: types.Plugin) -> str:
    mod = inspect.getmodule(plugin)
    modname = getattr(mod, "__name__", str(mod))
    name = getattr(plugin, "__qualname__", getattr(plugin, "__name__", "**plugin**"))
    return f"{modname}:{name}"
