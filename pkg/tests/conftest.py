import sys

import numpy as np
import pytest

from shapefrag import building_blocks as bb
from shapefrag.fragmenter import Fragmenter
from shapefrag.fragments import build_vocab
from shapefrag.model.config import ModelConfig
from shapefrag.molecule import Molecule
from shapefrag.plugins import builtin_plugins


def benzene_ring(name="benzene", center=(0.0, 0.0, 0.0)) -> Molecule:
    angles = np.arange(6) * np.pi / 3
    xyz = np.stack([1.39 * np.cos(angles), 1.39 * np.sin(angles), np.zeros(6)], axis=1)
    bonds = [(k, (k + 1) % 6, 4) for k in range(6)]
    return Molecule.build(["C"] * 6, xyz + np.asarray(center), bonds, name)


@pytest.fixture
def benzene():
    return benzene_ring()


@pytest.fixture
def toluene():
    return bb.substituted(bb.RINGS[0], [bb.SUBSTITUENTS[0]])


@pytest.fixture
def biphenyl():
    return bb.linked(bb.RINGS[0], bb.RINGS[0], bb.LINKERS[0])


@pytest.fixture(scope="session")
def fragmenter():
    return Fragmenter(builtin_plugins())


@pytest.fixture(scope="session")
def rules(fragmenter):
    return fragmenter.table("reduced")


@pytest.fixture(scope="session")
def base():
    return bb.base_molecules()


@pytest.fixture(scope="session")
def vocab(base, rules):
    return build_vocab(base, rules)


@pytest.fixture
def tiny_config(vocab):
    return ModelConfig(
        vocab_size=len(vocab),
        dim=16,
        layers_enc=1,
        layers_dec=1,
        heads=2,
        patch_edge=4,
        extent=8,
        pitch=2.0,
        max_len=24,
        dropout=0.0,
        ffn_mult=2,
    )


@pytest.fixture
def python_scorer():
    """Build a scorer command running an inline Python snippet"""

    def _command(code: str):
        return (sys.executable, "-c", code)

    return _command
