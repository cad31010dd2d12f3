"""Public API available for general usage.

In addition to the classes and functions "exported" by this module, the following are
also part of the public API:

- The public members of the :mod:`~shapefrag.types` module.
- The public members of the :mod:`~shapefrag.errors` module.
- The ``activate`` function in each submodule of the :obj:`~shapefrag.plugins` package
- The ``load``/``dump`` functions of the :mod:`~shapefrag.drivers` modules.

Please notice there might be classes of similar names exported by both ``api`` and
``types``. When this happens, the classes in ``types`` are not concrete implementations,
but instead act as :class:`protocols <typing.Protocol>` (i.e. abstract descriptions
for checking `structural polymorphism`_ during static analysis).
These should be preferred when writing type hints and signatures.

Plugin authors can also use the bond predicates exported by :mod:`~shapefrag.rules`.

.. _structural polymorphism: https://www.python.org/dev/peps/pep-0544/
"""

from .assembler import AssemblyResult, assemble, sanitize
from .codec import FragmentToken, FragmentTree, PoseBins, build_tree, delinearize, linearize
from .fragmenter import Fragmenter
from .fragments import Fragment, FragmentVocab, build_vocab, fragment
from .geom import GridSpec, Quaternion, RigidMotion, VoxelGrid, shape_tanimoto, voxelize
from .model import ModelConfig, OptimConfig, ShapeToFragments, generate, train
from .molecule import Molecule
from .pipeline import (
    DesignParams,
    MetricsReport,
    RunManifest,
    ScorerSpec,
    dedup,
    metrics,
    run_design,
    score_filter,
    synth_corpus,
)
from .rules import RuleTable
from .sketch import PocketShape, SketchParams, sketch_from_ligand, sketch_from_pocket

__all__ = [
    "AssemblyResult",
    "DesignParams",
    "Fragment",
    "FragmentToken",
    "FragmentTree",
    "FragmentVocab",
    "Fragmenter",
    "GridSpec",
    "MetricsReport",
    "ModelConfig",
    "Molecule",
    "OptimConfig",
    "PocketShape",
    "PoseBins",
    "Quaternion",
    "RigidMotion",
    "RuleTable",
    "RunManifest",
    "ScorerSpec",
    "ShapeToFragments",
    "SketchParams",
    "VoxelGrid",
    "assemble",
    "build_tree",
    "build_vocab",
    "dedup",
    "delinearize",
    "fragment",
    "generate",
    "linearize",
    "metrics",
    "run_design",
    "sanitize",
    "score_filter",
    "shape_tanimoto",
    "sketch_from_ligand",
    "sketch_from_pocket",
    "synth_corpus",
    "train",
    "voxelize",
]
