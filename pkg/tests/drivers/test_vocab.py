import numpy as np
import pytest

from shapefrag.drivers import toml
from shapefrag.drivers import vocab as vocab_dir
from shapefrag.errors import InvalidFileFormat
from shapefrag.fragments import N_CONTROL


def test_dump_and_load(tmp_path, vocab):
    root = vocab_dir.dump(vocab, tmp_path / "vocab")
    assert (root / vocab_dir.INDEX).is_file()
    assert (root / f"{N_CONTROL:05d}.mol").is_file()

    back = vocab_dir.load(root)
    assert len(back) == len(vocab)
    assert back.keys == vocab.keys
    assert back.counts == vocab.counts
    assert back.rule_table == vocab.rule_table == "reduced"
    for original, loaded in zip(vocab.entries, back.entries):
        assert loaded.breakpoints == original.breakpoints
        assert np.allclose(loaded.coords, original.coords, atol=1e-4)
        assert np.allclose(loaded.exits, original.exits)


def test_index_document(tmp_path, vocab):
    root = vocab_dir.dump(vocab, tmp_path)
    doc = toml.load(root / vocab_dir.INDEX)
    first = doc["fragment"][0]
    assert first["index"] == N_CONTROL
    assert first["key"] == vocab.keys[0]
    assert first["count"] == max(vocab.counts)


def test_missing_index(tmp_path):
    with pytest.raises(InvalidFileFormat, match="index.toml"):
        vocab_dir.load(tmp_path)


def test_unexpected_index(tmp_path, vocab):
    root = vocab_dir.dump(vocab, tmp_path)
    doc = toml.load(root / vocab_dir.INDEX)
    doc["fragment"] = doc["fragment"][1:]
    toml.dump(doc, root / vocab_dir.INDEX)
    with pytest.raises(InvalidFileFormat, match="unexpected index"):
        vocab_dir.load(root)
