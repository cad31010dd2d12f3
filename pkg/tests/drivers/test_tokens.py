import pytest

from shapefrag.codec import FragmentToken
from shapefrag.drivers import tokens
from shapefrag.errors import InvalidFileFormat
from shapefrag.fragments import Control

SEQUENCES = [
    [Control.BOS, FragmentToken(7, (1, 2, 3), (60, 30, 31, 32)), Control.EOS],
    [
        Control.BOS,
        FragmentToken(5, (32, 32, 32), (63, 32, 32, 32)),
        Control.BOB,
        FragmentToken(6, (0, 0, 63), (40, 1, 2, 3)),
        Control.EOB,
        Control.BOB,
        FragmentToken(9, (10, 11, 12), (50, 20, 30, 40)),
        Control.EOB,
        Control.EOS,
    ],
]


def test_text_layout():
    text = tokens.dumps(SEQUENCES)
    lines = text.splitlines()
    assert len(lines) == 2
    assert lines[0] == "BOS F:7:1,2,3:60,30,31,32 EOS"
    assert lines[1].split()[2] == "BOB"
    assert tokens.loads(text) == SEQUENCES


def test_blank_lines_are_skipped():
    assert tokens.loads("\nBOS F:5:0,0,0:0,0,0,0 EOS\n\n") == [
        [Control.BOS, FragmentToken(5, (0, 0, 0), (0, 0, 0, 0)), Control.EOS]
    ]


def test_file_roundtrip(tmp_path):
    path = tmp_path / "shape-000.tok"
    tokens.dump(SEQUENCES, path)
    assert tokens.load(path) == SEQUENCES


@pytest.mark.parametrize(
    "text", ["PAD", "F:5:1,2:1,2,3,4", "F:5:1,2,3:1,2,3", "X:5:1,2,3:1,2,3,4", "F:a:1,2,3:1,2,3,4"]
)
def test_invalid_tokens(text):
    with pytest.raises(InvalidFileFormat, match="unrecognised token"):
        tokens.loads(f"BOS {text} EOS")
