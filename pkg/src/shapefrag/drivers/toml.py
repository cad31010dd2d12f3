"""This module serves as a compatibility layer between API-compatible
TOML parsers/serialisers (``tomllib`` is only part of the standard library from
Python 3.11 onwards).
"""

import sys
from pathlib import Path
from typing import Any, Dict, Union

from tomli_w import dumps as _dumps

if sys.version_info >= (3, 11):  # pragma: no cover
    from tomllib import loads
else:  # pragma: no cover
    from tomli import loads

__all__ = [
    "dumps",
    "loads",
    "load",
    "dump",
]


def dumps(doc: Dict[str, Any]) -> str:
    text = _dumps(doc)
    return text.strip() + "\n"  # ensure terminating newline (POSIX requirement)


def load(path: Union[str, Path]) -> Dict[str, Any]:
    return loads(Path(path).read_text(encoding="utf-8"))


def dump(doc: Dict[str, Any], path: Union[str, Path]):
    Path(path).write_text(dumps(doc), encoding="utf-8")
