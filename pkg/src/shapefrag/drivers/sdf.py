"""Reader/writer for the MOL V2000 subset used by ``shapefrag``.

Supported: header block (3 lines), counts line, fixed-width atom block (coordinates +
element), bond block (orders 1, 2, 3 and 4 = aromatic) and the ``M  END`` terminator.
Other property lines and SD data fields are ignored. Explicit hydrogens are dropped
(hydrogens are implicit in ``shapefrag``). V3000 records and query atoms/bonds raise
:class:`~shapefrag.errors.UnsupportedFeature`.
"""

import logging
from pathlib import Path
from typing import Iterator, List, Sequence, Tuple, Union

from ..errors import ParseError, UnsupportedFeature
from ..molecule import BondOrder, Molecule

_logger = logging.getLogger(__name__)

__all__ = [
    "parse_molecule",
    "write_molecule",
    "parse_records",
    "write_records",
    "load",
    "dump",
]

RECORD_END = "$$$$"
QUERY_ATOMS = {"A", "Q", "L", "LP", "*", "R#"}
HYDROGENS = {"H", "D", "T"}
PROGRAM = "shapefrag"
ATOM_TAIL = " 0" + "  0" * 11


def parse_molecule(text: str, first_lineno: int = 1) -> Molecule:
    """Parse a single MOL record. ``first_lineno`` is only used in error messages."""
    lines = text.splitlines()
    while lines and lines[-1].strip() in ("", RECORD_END):
        lines.pop()

    def fail(i: int, reason: str):
        line = lines[i] if i < len(lines) else ""
        return ParseError(first_lineno + i, reason, line)

    if len(lines) < 4:
        raise fail(len(lines), "truncated record (missing counts line)")
    name = lines[0].strip()
    counts = lines[3]
    if "V3000" in counts:
        raise UnsupportedFeature(first_lineno + 3, "V3000 connection table")
    try:
        n_atoms, n_bonds = int(counts[0:3]), int(counts[3:6])
    except ValueError:
        raise fail(3, "malformed counts line") from None

    elements: List[str] = []
    coords: List[Tuple[float, float, float]] = []
    keep: List[int] = []  # 1-based MOL index -> heavy-atom id (or -1)
    for i in range(4, 4 + n_atoms):
        if i >= len(lines):
            raise fail(i, f"expected {n_atoms} atom lines")
        x, y, z, symbol = _atom_line(lines[i], lambda r, i=i: fail(i, r))
        if symbol in QUERY_ATOMS:
            raise UnsupportedFeature(first_lineno + i, f"query atom {symbol!r}")
        if symbol in HYDROGENS:
            keep.append(-1)
            continue
        keep.append(len(elements))
        elements.append(symbol)
        coords.append((x, y, z))

    bonds = []
    for i in range(4 + n_atoms, 4 + n_atoms + n_bonds):
        if i >= len(lines):
            raise fail(i, f"expected {n_bonds} bond lines")
        line = lines[i]
        try:
            a, b, order = int(line[0:3]), int(line[3:6]), int(line[6:9])
        except ValueError:
            raise fail(i, "malformed bond line") from None
        if not (1 <= a <= n_atoms and 1 <= b <= n_atoms):
            raise fail(i, f"bond references atom outside 1..{n_atoms}")
        if order not in BondOrder._value2member_map_:
            raise UnsupportedFeature(first_lineno + i, f"bond type {order}")
        if keep[a - 1] < 0 or keep[b - 1] < 0:
            continue
        bonds.append((keep[a - 1], keep[b - 1], order))

    for i in range(4 + n_atoms + n_bonds, len(lines)):
        if lines[i].startswith("M  V30"):
            raise UnsupportedFeature(first_lineno + i, "V3000 property block")
        if lines[i].startswith("M  END"):
            break

    dropped = keep.count(-1)
    if dropped:
        _logger.debug(f"{name!r}: {dropped} explicit hydrogens dropped")
    return Molecule.build(elements, coords, bonds, name)


def _atom_line(line: str, fail) -> Tuple[float, float, float, str]:
    try:
        x, y, z = float(line[0:10]), float(line[10:20]), float(line[20:30])
        symbol = line[31:34].strip()
    except ValueError:
        # Some writers do not respect the column layout
        parts = line.split()
        try:
            x, y, z, symbol = float(parts[0]), float(parts[1]), float(parts[2]), parts[3]
        except (ValueError, IndexError):
            raise fail("malformed atom line") from None
    if not symbol:
        raise fail("missing element symbol")
    return x, y, z, symbol


def write_molecule(m: Molecule) -> str:
    """MOL V2000 record for ``m`` (coordinates with 4 decimals, no ``$$$$``)"""
    out = [m.name, f"  {PROGRAM}", ""]
    out.append(f"{len(m.atoms):3d}{len(m.bonds):3d}  0  0  0  0  0  0  0  0999 V2000")
    for atom in m.atoms:
        x, y, z = atom.position
        out.append(f"{x:10.4f}{y:10.4f}{z:10.4f} {atom.element:<3}{ATOM_TAIL}")
    for bond in m.bonds:
        out.append(f"{bond.a + 1:3d}{bond.b + 1:3d}{int(bond.order):3d}  0")
    out.append("M  END")
    return "\n".join(out) + "\n"


def iter_records(text: str) -> Iterator[Tuple[int, str]]:
    """Yield ``(first line number, record text)`` for each record in an SD stream"""
    start, buffer = 1, []
    for lineno, line in enumerate(text.splitlines(), 1):
        if line.strip() == RECORD_END:
            yield start, "\n".join(buffer)
            start, buffer = lineno + 1, []
        else:
            buffer.append(line)
    if any(line.strip() for line in buffer):
        yield start, "\n".join(buffer)


def parse_records(text: str) -> List[Molecule]:
    return [parse_molecule(record, lineno) for lineno, record in iter_records(text)]


def write_records(mols: Sequence[Molecule]) -> str:
    return "".join(write_molecule(m) + RECORD_END + "\n" for m in mols)


def load(path: Union[str, Path]) -> List[Molecule]:
    return parse_records(Path(path).read_text(encoding="utf-8"))


def dump(mols: Sequence[Molecule], path: Union[str, Path]):
    Path(path).write_text(write_records(mols), encoding="utf-8")
