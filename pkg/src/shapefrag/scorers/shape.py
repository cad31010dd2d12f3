"""Negated shape Tanimoto between each molecule and a reference shape::

    python -m shapefrag.scorers.shape --shape shapes/shape-000.voxl < molecules.sdf
"""

import argparse
import logging
import sys
from typing import List, Optional, Sequence, TextIO

from ..drivers import sdf, voxl
from ..geom import VoxelGrid, shape_tanimoto, voxelize
from ..molecule import Molecule

_logger = logging.getLogger(__name__)


def score(mols: Sequence[Molecule], shape: VoxelGrid) -> List[float]:
    """``-shape_tanimoto(shape, voxelize(m))`` (atoms outside the grid are clipped)"""
    return [-shape_tanimoto(shape, voxelize(m, shape.spec, clip=True)) for m in mols]


def parse_args(args: Sequence[str]) -> argparse.Namespace:
    parser = argparse.ArgumentParser(prog="python -m shapefrag.scorers.shape", description=__doc__)
    parser.add_argument("--shape", required=True, help="reference shape (VOXL file)")
    return parser.parse_args(args)


def main(args: Sequence[str] = (), stdin: Optional[TextIO] = None, stdout: Optional[TextIO] = None):
    opts = parse_args(args)
    shape = voxl.load(opts.shape)
    mols = sdf.parse_records((stdin or sys.stdin).read())
    out = stdout or sys.stdout
    for value in score(mols, shape):
        out.write(f"{value!r}\n")
    out.flush()


def run(args: Optional[Sequence[str]] = None):
    logging.basicConfig(format="[%(levelname)s] %(message)s", stream=sys.stderr)
    try:
        main(sys.argv[1:] if args is None else args)
    except Exception as ex:
        _logger.error(f"{ex.__class__.__name__}: {ex}")
        sys.exit(1)


if __name__ == "__main__":  # pragma: no cover
    run()
