"""Text form of token sequences: one sequence per line, whitespace-separated tokens.
Fragment tokens are written ``F:<C>:<px>,<py>,<pz>:<rw>,<rx>,<ry>,<rz>``, control
symbols by name (``BOS``, ``EOS``, ``BOB``, ``EOB``).

>>> seq = loads("BOS F:5:32,32,32:63,32,32,32 EOS")[0]
>>> seq[1]
FragmentToken(C=5, Pc=(32, 32, 32), Rc=(63, 32, 32, 32))
>>> dumps([seq]).strip()
'BOS F:5:32,32,32:63,32,32,32 EOS'
"""

from pathlib import Path
from typing import List, Sequence, Union

from ..codec import FragmentToken, Token, TokenSequence
from ..errors import InvalidFileFormat
from ..fragments import Control

FORMAT = "token sequence"
CONTROLS = {c.name: c for c in (Control.BOS, Control.EOS, Control.BOB, Control.EOB)}


def format_token(token: Token) -> str:
    if isinstance(token, FragmentToken):
        pc = ",".join(str(int(i)) for i in token.Pc)
        rc = ",".join(str(int(i)) for i in token.Rc)
        return f"F:{int(token.C)}:{pc}:{rc}"
    return Control(token).name


def parse_token(text: str) -> Token:
    if text in CONTROLS:
        return CONTROLS[text]
    parts = text.split(":")
    try:
        if len(parts) != 4 or parts[0] != "F":
            raise ValueError
        pc = tuple(int(v) for v in parts[2].split(","))
        rc = tuple(int(v) for v in parts[3].split(","))
        if len(pc) != 3 or len(rc) != 4:
            raise ValueError
        return FragmentToken(int(parts[1]), pc, rc)  # type: ignore[arg-type]
    except ValueError:
        raise InvalidFileFormat(FORMAT, f"unrecognised token {text!r}") from None


def dumps(sequences: Sequence[Sequence[Token]]) -> str:
    return "".join(" ".join(format_token(t) for t in seq) + "\n" for seq in sequences)


def loads(text: str) -> List[TokenSequence]:
    return [[parse_token(t) for t in line.split()] for line in text.splitlines() if line.strip()]


def load(path: Union[str, Path]) -> List[TokenSequence]:
    return loads(Path(path).read_text(encoding="utf-8"))


def dump(sequences: Sequence[Sequence[Token]], path: Union[str, Path]):
    Path(path).write_text(dumps(sequences), encoding="utf-8")
