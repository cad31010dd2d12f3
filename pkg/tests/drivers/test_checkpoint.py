import struct

import pytest
import torch

from shapefrag.drivers import checkpoint as ckpt
from shapefrag.errors import CheckpointNotFound, InvalidCheckpoint
from shapefrag.model.network import build_model


@pytest.fixture
def model(tiny_config):
    return build_model(tiny_config, seed=0)


def test_dump_and_load(tmp_path, model):
    path = ckpt.dump(model, tmp_path / "model.sfck", {"step": 12})
    back, meta = ckpt.load(path)
    assert meta == {"step": 12}
    assert back.config == model.config
    assert not back.training
    state, loaded = model.state_dict(), back.state_dict()
    assert state.keys() == loaded.keys()
    for name in state:
        assert torch.allclose(state[name].float(), loaded[name])


def test_header():
    assert ckpt.MAGIC == b"SFCK"
    assert str(ckpt.FORMAT_VERSION) == "1.0"


def test_bad_magic(model):
    data = ckpt.dumps(model)
    with pytest.raises(InvalidCheckpoint, match="magic"):
        ckpt.loads(b"XXXX" + data[4:])


def test_truncated(model):
    data = ckpt.dumps(model)
    with pytest.raises(InvalidCheckpoint, match="truncated"):
        ckpt.loads(data[: len(data) // 2])


def test_other_major_version(model):
    data = ckpt.dumps(model)
    n = struct.unpack("<H", data[4:6])[0]
    patched = data[:4] + struct.pack("<H", 3) + b"2.0" + data[6 + n :]
    with pytest.raises(InvalidCheckpoint, match="version 2.0"):
        ckpt.loads(patched)


def test_minor_version_accepted(model):
    data = ckpt.dumps(model)
    n = struct.unpack("<H", data[4:6])[0]
    patched = data[:4] + struct.pack("<H", 3) + b"1.7" + data[6 + n :]
    back, _ = ckpt.loads(patched)
    assert back.config == model.config


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointNotFound):
        ckpt.load(tmp_path / "nope.sfck")
