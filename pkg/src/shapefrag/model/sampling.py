"""Nucleus sampling and autoregressive generation."""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.special import softmax

from ..codec import FragmentToken, Token, TokenSequence, validate_sequence
from ..errors import MalformedSequence
from ..fragments import N_CONTROL, Control
from ..geom import RandomSource, VoxelGrid
from .batching import grid_tensor, stack_tokens
from .network import ShapeToFragments, inference

_logger = logging.getLogger(__name__)

BANNED = (int(Control.PAD), int(Control.BOS))
"""Symbols the decoder never emits"""


def nucleus_set(logits, p: float) -> np.ndarray:
    """Indices of the smallest most-probable prefix holding at least ``p`` of the
    probability mass (most probable first, ties by index)

    >>> nucleus_set([0.0, 2.0, 1.0], 0.5).tolist()
    [1]
    """
    if not 0 < p <= 1:
        raise ValueError(f"Nucleus threshold must be in (0, 1] ({p!r} given)")
    probs = softmax(np.asarray(logits, dtype=np.float64))
    order = np.argsort(-probs, kind="stable")
    mass = np.cumsum(probs[order])
    keep = min(int(np.searchsorted(mass, p, side="left")) + 1, len(order))
    return order[:keep]


def nucleus_sample(logits, p: float, rng: RandomSource, banned: Sequence[int] = ()) -> int:
    logits = np.array(logits, dtype=np.float64)
    if banned:
        logits[list(banned)] = -np.inf
    kept = nucleus_set(logits, p)
    probs = softmax(logits)[kept]
    return int(rng.choice(kept, p=probs / probs.sum()))


@dataclass
class GenerationResult:
    sequences: List[TokenSequence] = field(default_factory=list)
    dropped: int = 0
    """Sequences without EOS within ``max_len`` or violating the branch grammar"""

    def __len__(self):
        return len(self.sequences)


def _sample_token(c, pt, rt, p: float, rng: RandomSource) -> Token:
    index = nucleus_sample(c, p, rng, BANNED)
    if index < N_CONTROL:
        return Control(index)
    translation = tuple(nucleus_sample(pt[k], p, rng) for k in range(3))
    rotation = tuple(nucleus_sample(rt[k], p, rng) for k in range(4))
    return FragmentToken(index, translation, rotation)  # type: ignore[arg-type]


def generate(
    grid: VoxelGrid,
    model: ShapeToFragments,
    n: int,
    p: float = 0.95,
    rng: Optional[RandomSource] = None,
    batch_size: int = 64,
) -> GenerationResult:
    """Sample ``n`` sequences for ``grid``; every head is sampled with threshold ``p``.

    Malformed sequences are dropped and counted in the result. The model is sampled in
    evaluation mode and left in the mode it was given in.
    """
    rng = np.random.default_rng() if rng is None else rng
    result = GenerationResult()
    if n <= 0:
        return result
    with inference(model):
        _sample(grid, model, n, p, rng, batch_size, result)
    if result.dropped:
        _logger.info(f"{result.dropped} of {n} sampled sequences dropped as malformed")
    return result


def _sample(grid, model, n, p, rng, batch_size, result: GenerationResult):
    config = model.config
    memory = model.encode(grid_tensor([grid], config))
    for start in range(0, n, batch_size):
        seqs: List[TokenSequence] = [[Control.BOS] for _ in range(min(batch_size, n - start))]
        active = list(range(len(seqs)))
        while active and len(seqs[active[0]]) < config.max_len:
            tokens, _ = stack_tokens([seqs[i] for i in active], config)
            logits = model.decode(memory.expand(len(active), -1, -1), tokens)
            c = logits.c[:, -1].double().numpy()
            pt = logits.p[:, -1].double().numpy()
            rt = logits.r[:, -1].double().numpy()
            for row, i in enumerate(active):
                seqs[i].append(_sample_token(c[row], pt[row], rt[row], p, rng))
            active = [i for i in active if seqs[i][-1] != Control.EOS]

        for seq in seqs:
            try:
                validate_sequence(seq)
            except MalformedSequence as ex:
                _logger.debug(f"Dropping sampled sequence: {ex}")
                result.dropped += 1
                continue
            result.sequences.append(seq)
