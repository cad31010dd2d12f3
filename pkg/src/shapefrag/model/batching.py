"""Tensor form of grids and token sequences.

Every position carries a fragment/control index ``c``, three translation bins ``p``
and four rotation bins ``r``. Control symbols use the extra "no pose" bins ``b_t`` and
``b_r`` as inputs and are ignored by the pose targets.
"""

from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import torch

from ..codec import FragmentToken, Token
from ..errors import OverlengthPrefix, ShapeMismatch, UnknownToken
from ..fragments import Control
from ..geom import VoxelGrid
from .config import ModelConfig

IGNORE = -100
"""Target value skipped by the cross entropies"""


class TokenTensors(NamedTuple):
    c: torch.Tensor
    """``(B, L)`` vocabulary indices"""
    p: torch.Tensor
    """``(B, L, 3)`` translation bins"""
    r: torch.Tensor
    """``(B, L, 4)`` rotation bins"""


def token_arrays(
    seq: Sequence[Token], config: ModelConfig
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = len(seq)
    c = np.empty(n, dtype=np.int64)
    p = np.full((n, 3), config.b_t, dtype=np.int64)
    r = np.full((n, 4), config.b_r, dtype=np.int64)
    for i, token in enumerate(seq):
        if isinstance(token, FragmentToken):
            if not 0 <= token.C < config.vocab_size:
                raise UnknownToken("Fragment index", token.C, config.vocab_size)
            c[i], p[i], r[i] = token.C, token.Pc, token.Rc
        else:
            c[i] = int(token)
    return c, p, r


def stack_tokens(
    seqs: Sequence[Sequence[Token]], config: ModelConfig, length: Optional[int] = None
) -> Tuple[TokenTensors, torch.Tensor]:
    """Right-padded token tensors and the ``(B, L)`` padding mask (``True`` = pad)"""
    length = max((len(s) for s in seqs), default=0) if length is None else length
    b = len(seqs)
    c = np.full((b, length), int(Control.PAD), dtype=np.int64)
    p = np.full((b, length, 3), config.b_t, dtype=np.int64)
    r = np.full((b, length, 4), config.b_r, dtype=np.int64)
    padding = np.ones((b, length), dtype=bool)
    for i, seq in enumerate(seqs):
        n = len(seq)
        if n > length:
            raise ValueError(f"Sequence of length {n} does not fit in {length} positions")
        c[i, :n], p[i, :n], r[i, :n] = token_arrays(seq, config)
        padding[i, :n] = False
    tensors = TokenTensors(torch.from_numpy(c), torch.from_numpy(p), torch.from_numpy(r))
    return tensors, torch.from_numpy(padding)


def grid_tensor(grids: Sequence[VoxelGrid], config: ModelConfig) -> torch.Tensor:
    """``(B, e, e, e)`` float occupancy"""
    for grid in grids:
        if grid.spec.extent != config.extent:
            raise ShapeMismatch(grid.occupancy.shape, config.extent, config.patch_edge)
    stacked = np.stack([g.occupancy for g in grids]).astype(np.float32)
    return torch.from_numpy(stacked)


@dataclass
class Batch:
    grids: torch.Tensor
    inputs: TokenTensors
    targets: TokenTensors
    padding: torch.Tensor
    batch_id: int = 0

    def __len__(self):
        return self.grids.shape[0]

    @property
    def mask(self) -> torch.Tensor:
        return ~self.padding

    def to(self, dtype: torch.dtype) -> "Batch":
        return Batch(self.grids.to(dtype), self.inputs, self.targets, self.padding, self.batch_id)


def collate(
    samples: Sequence[Tuple[VoxelGrid, Sequence[Token]]],
    config: ModelConfig,
    length: Optional[int] = None,
    batch_id: int = 0,
) -> Batch:
    """Next-token batch: inputs are ``seq[:-1]``, targets ``seq[1:]``.

    ``length`` pads every row to a fixed number of positions (the longest row
    otherwise).
    """
    seqs: List[Sequence[Token]] = []
    for _, seq in samples:
        OverlengthPrefix.check(len(seq) - 1, config.max_len)
        seqs.append(seq)
    inputs, padding = stack_tokens([s[:-1] for s in seqs], config, length)
    targets, _ = stack_tokens([s[1:] for s in seqs], config, inputs.c.shape[1])

    c = targets.c.masked_fill(padding, IGNORE)
    no_pose = padding | (c < len(Control))
    p = targets.p.masked_fill(no_pose[..., None], IGNORE)
    r = targets.r.masked_fill(no_pose[..., None], IGNORE)
    grids = grid_tensor([g for g, _ in samples], config)
    return Batch(grids, inputs, TokenTensors(c, p, r), padding, batch_id)
