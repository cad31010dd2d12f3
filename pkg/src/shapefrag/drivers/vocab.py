"""Vocabulary directories: ``index.toml`` plus one MOL record per fragment (in its
canonical frame).
"""

import logging
from pathlib import Path
from typing import Union

from ..errors import InvalidFileFormat
from ..fragments import N_CONTROL, Fragment, FragmentVocab
from . import sdf, toml

_logger = logging.getLogger(__name__)

INDEX = "index.toml"


def dump(vocab: FragmentVocab, directory: Union[str, Path]) -> Path:
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, (frag, count) in enumerate(zip(vocab.entries, vocab.counts)):
        index = N_CONTROL + i
        name = f"{index:05d}.mol"
        (root / name).write_text(sdf.write_molecule(frag.molecule()), encoding="utf-8")
        entries.append(
            {
                "key": frag.key,
                "index": index,
                "count": int(count),
                "file": name,
                "breakpoints": list(frag.breakpoints),
                "exits": [[float(v) for v in e] for e in frag.exits],
            }
        )
    toml.dump({"rule_table": vocab.rule_table, "fragment": entries}, root / INDEX)
    _logger.info(f"Vocabulary with {len(entries)} fragments written to {root}")
    return root


def load(directory: Union[str, Path]) -> FragmentVocab:
    root = Path(directory)
    if not (root / INDEX).is_file():
        raise InvalidFileFormat("vocabulary", f"{root / INDEX} not found")
    doc = toml.load(root / INDEX)
    entries, counts = [], []
    for i, item in enumerate(doc.get("fragment", [])):
        if item["index"] != N_CONTROL + i:
            raise InvalidFileFormat("vocabulary", f"unexpected index {item['index']}")
        mol = sdf.parse_molecule((root / item["file"]).read_text(encoding="utf-8"))
        frag = Fragment(
            elements=tuple(mol.elements),
            coords=mol.coords,
            bonds=tuple((b.a, b.b, int(b.order)) for b in mol.bonds),
            breakpoints=tuple(item["breakpoints"]),
            exits=item["exits"],
            key=item["key"],
        )
        entries.append(frag)
        counts.append(item.get("count", 0))
    return FragmentVocab(tuple(entries), tuple(counts), doc.get("rule_table", ""))
