"""Loss, gradients and the training loop."""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F
from torch.optim.lr_scheduler import LambdaLR

from ..codec import FragmentTree, TokenSequence, encode_molecule, linearize
from ..drivers import checkpoint as ckpt
from ..errors import (
    Diverged,
    EmptyInput,
    MultiComponent,
    NumericError,
    OverlengthPrefix,
    TranslationOutOfRange,
    UnknownToken,
)
from ..fragments import FragmentVocab
from ..geom import RandomSource, RigidMotion, VoxelGrid, voxelize
from ..molecule import Molecule
from ..rules import RuleTable
from .batching import IGNORE, Batch, collate
from .config import ModelConfig, OptimConfig
from .network import Logits, ShapeToFragments, build_model

_logger = logging.getLogger(__name__)

CHECKPOINT = "model.sfck"
LOSS_CURVE = "loss.csv"


# ---- Objective ----


def position_loss(logits: Logits, batch: Batch) -> torch.Tensor:
    """``(B, L)`` sum of the fragment, translation and rotation cross entropies.

    Padding contributes ``0``; control positions contribute only the fragment term.
    """
    t = batch.targets
    ce_c = F.cross_entropy(logits.c.transpose(1, 2), t.c, ignore_index=IGNORE, reduction="none")
    ce_p = F.cross_entropy(logits.p.permute(0, 3, 1, 2), t.p, ignore_index=IGNORE, reduction="none")
    ce_r = F.cross_entropy(logits.r.permute(0, 3, 1, 2), t.r, ignore_index=IGNORE, reduction="none")
    return ce_c + ce_p.sum(-1) + ce_r.sum(-1)


def loss(batch: Batch, model: ShapeToFragments) -> torch.Tensor:
    """Mean :func:`position_loss` over the non-padding positions of ``batch``"""
    logits = model(batch.grids, batch.inputs, batch.padding)
    total = position_loss(logits, batch).sum() / batch.mask.sum()
    if not torch.isfinite(total):
        raise NumericError(float(total), batch.batch_id)
    return total


def grad(batch: Batch, model: ShapeToFragments) -> Dict[str, torch.Tensor]:
    """Gradient of :func:`loss` with respect to every parameter (by name)"""
    named = [(n, p) for n, p in model.named_parameters() if p.requires_grad]
    value = loss(batch, model)
    grads = torch.autograd.grad(value, [p for _, p in named], allow_unused=True)
    return {
        name: torch.zeros_like(p) if g is None else g for (name, p), g in zip(named, grads)
    }


# ---- Augmentation ----


def random_motion(rng: RandomSource, translation_range: float = 2.0) -> RigidMotion:
    """Uniform rotation plus a shift uniform in ``[-range, range]`` per axis.
    A zero range disables augmentation (identity motion).
    """
    if translation_range <= 0:
        return RigidMotion()
    return RigidMotion.random(rng, translation_range)


def augment(molecule: Molecule, rng: RandomSource, translation_range: float = 2.0) -> Molecule:
    return molecule.moved(random_motion(rng, translation_range))


class Sample(Protocol):
    def draw(
        self, rng: RandomSource, config: ModelConfig, opt: OptimConfig
    ) -> Tuple[VoxelGrid, TokenSequence]:
        ...


@dataclass(frozen=True)
class FixedSample:
    """Pre-computed ``(grid, sequence)`` pair (no augmentation)"""

    grid: VoxelGrid
    sequence: TokenSequence

    def draw(self, rng, config, opt) -> Tuple[VoxelGrid, TokenSequence]:
        return self.grid, self.sequence


@dataclass(frozen=True, eq=False)
class TrainingSample:
    """Centred source molecule and its fragment tree, re-posed on every draw"""

    molecule: Molecule
    tree: FragmentTree
    vocab: FragmentVocab = field(repr=False)

    def draw(self, rng, config, opt) -> Tuple[VoxelGrid, TokenSequence]:
        motion = random_motion(rng, opt.translation_range)
        molecule, tree = self.molecule.moved(motion), self.tree.transformed(motion)
        try:
            seq = linearize(tree, self.vocab, config.bins)
        except TranslationOutOfRange:
            _logger.debug(f"{self.molecule.name}: augmented pose out of range, using original")
            molecule, seq = self.molecule, linearize(self.tree, self.vocab, config.bins)
        grid = voxelize(molecule, config.grid(), opt.eps, rng, clip=True)
        return grid, seq


def make_samples(
    corpus: Sequence[Molecule], vocab: FragmentVocab, rules: RuleTable, config: ModelConfig
) -> List[TrainingSample]:
    """Centre and encode the corpus, skipping molecules the model cannot represent"""
    samples = []
    for m in corpus:
        centred = m.centered()
        try:
            tree, seq = encode_molecule(centred, vocab, rules, config.bins)
            OverlengthPrefix.check(len(seq) - 1, config.max_len)
        except (MultiComponent, UnknownToken, TranslationOutOfRange, OverlengthPrefix) as ex:
            _logger.warning(f"Skipping {m.name or 'molecule'}: {ex}")
            continue
        samples.append(TrainingSample(centred, tree, vocab))
    return samples


# ---- Optimisation ----


def lr_factor(step: int, warmup: int) -> float:
    """Linear warmup to the peak rate, then inverse square root decay (``step`` >= 1)"""
    if step <= warmup:
        return step / warmup
    return math.sqrt(warmup / step)


def _index_batches(rng: RandomSource, n: int, size: int) -> Iterator[np.ndarray]:
    while True:
        order = rng.permutation(n)
        for start in range(0, n, size):
            yield order[start : start + size]


@dataclass
class TrainResult:
    model: ShapeToFragments
    curve: List[Tuple[int, float, float]] = field(default_factory=list)
    """``(step, loss, lr)`` rows"""
    checkpoint: Optional[Path] = None

    def curve_csv(self) -> str:
        lines = ["step,loss,lr"]
        lines.extend(f"{s},{v!r},{lr!r}" for s, v, lr in self.curve)
        return "\n".join(lines) + "\n"


def train(
    corpus: Sequence[Union[Sample, Tuple[VoxelGrid, TokenSequence]]],
    config: ModelConfig,
    opt: OptimConfig = OptimConfig(),
    rng: Optional[RandomSource] = None,
    workdir: Optional[Union[str, Path]] = None,
    model: Optional[ShapeToFragments] = None,
) -> TrainResult:
    """Train with AdamW on ``corpus``.

    Items are either :class:`TrainingSample` objects (augmented with a fresh rigid
    motion on every draw) or plain ``(grid, sequence)`` pairs. With ``workdir``, the
    model is checkpointed every ``opt.checkpoint_every`` steps and at the end, together
    with the loss curve.
    """
    if not corpus:
        raise EmptyInput("Training")
    samples: List[Sample] = [
        s if hasattr(s, "draw") else FixedSample(*s) for s in corpus  # type: ignore
    ]
    rng = np.random.default_rng(opt.seed) if rng is None else rng
    torch.manual_seed(opt.seed)
    model = build_model(config) if model is None else model
    model.train()
    optimizer = torch.optim.AdamW(model.parameters(), lr=opt.lr, weight_decay=opt.weight_decay)
    scheduler = LambdaLR(optimizer, lambda epoch: lr_factor(epoch + 1, opt.warmup))

    out = Path(workdir) if workdir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    result = TrainResult(model)

    def save(step: int) -> Optional[Path]:
        if out is None:
            return None
        result.checkpoint = ckpt.dump(model, out / CHECKPOINT, {"step": step})
        (out / LOSS_CURVE).write_text(result.curve_csv(), encoding="utf-8")
        return result.checkpoint

    batches = _index_batches(rng, len(samples), opt.batch_size)
    for step in range(1, opt.steps + 1):
        drawn = [samples[int(i)].draw(rng, config, opt) for i in next(batches)]
        batch = collate(drawn, config, batch_id=step)
        lr = optimizer.param_groups[0]["lr"]
        optimizer.zero_grad()
        try:
            value = loss(batch, model)
        except NumericError as ex:
            path = save(step - 1)
            raise Diverged(step, str(path) if path else None) from ex
        value.backward()
        if opt.clip > 0:
            torch.nn.utils.clip_grad_norm_(model.parameters(), opt.clip)
        optimizer.step()
        scheduler.step()
        result.curve.append((step, float(value.detach()), lr))
        if step == 1 or step % 100 == 0:
            _logger.info(f"step {step}: loss {float(value):.4f} (lr {lr:.2e})")
        if opt.checkpoint_every and step % opt.checkpoint_every == 0:
            save(step)

    save(opt.steps)
    model.eval()
    return result
