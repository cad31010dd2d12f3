"""Shape-to-fragments encoder-decoder.

The encoder is a 3D vision transformer: the occupancy grid is cut into cubic patches,
each patch is flattened and projected, and learned patch positions are added. The
decoder is a causal transformer over fragment tokens with three heads sharing the same
hidden state: fragment index, per-axis translation bins and per-component rotation
bins.
"""

import logging
from contextlib import contextmanager
from typing import Iterator, NamedTuple, Optional, Sequence

import torch
from einops import rearrange
from torch import nn

from ..codec import Token
from ..errors import OverlengthPrefix, ShapeMismatch
from ..fragments import Control
from ..geom import VoxelGrid
from .batching import TokenTensors, grid_tensor, stack_tokens
from .config import ModelConfig

_logger = logging.getLogger(__name__)


class Logits(NamedTuple):
    c: torch.Tensor
    """``(..., vocab_size)``"""
    p: torch.Tensor
    """``(..., 3, b_t)``"""
    r: torch.Tensor
    """``(..., 4, b_r)``"""


class ShapeToFragments(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        if config.vocab_size <= len(Control):
            raise ValueError(f"vocab_size={config.vocab_size} leaves no fragment entries")
        self.config = config
        dim, ffn = config.dim, config.dim * config.ffn_mult

        self.patch_proj = nn.Linear(config.patch_edge**3, dim)
        self.patch_pos = nn.Parameter(torch.randn(config.n_patches, dim) * 0.02)
        enc_layer = nn.TransformerEncoderLayer(
            dim,
            config.heads,
            ffn,
            config.dropout,
            activation="gelu",
            batch_first=True,
            norm_first=True,
        )
        self.encoder = nn.TransformerEncoder(
            enc_layer, config.layers_enc, norm=nn.LayerNorm(dim), enable_nested_tensor=False
        )

        self.fragment_emb = nn.Embedding(config.vocab_size, dim, padding_idx=int(Control.PAD))
        # one extra "no pose" row for control symbols
        self.translation_emb = nn.ModuleList(nn.Embedding(config.b_t + 1, dim) for _ in range(3))
        self.rotation_emb = nn.ModuleList(nn.Embedding(config.b_r + 1, dim) for _ in range(4))
        self.position_emb = nn.Embedding(config.max_len, dim)
        dec_layer = nn.TransformerDecoderLayer(
            dim,
            config.heads,
            ffn,
            config.dropout,
            activation="gelu",
            batch_first=True,
            norm_first=True,
        )
        self.decoder = nn.TransformerDecoder(dec_layer, config.layers_dec, norm=nn.LayerNorm(dim))
        self.dropout = nn.Dropout(config.dropout)

        self.head_c = nn.Linear(dim, config.vocab_size)
        self.head_p = nn.Linear(dim, 3 * config.b_t)
        self.head_r = nn.Linear(dim, 4 * config.b_r)
        if config.zero_init_heads:
            for head in (self.head_c, self.head_p, self.head_r):
                nn.init.zeros_(head.weight)
                nn.init.zeros_(head.bias)

    def encode(self, grids: torch.Tensor) -> torch.Tensor:
        """``(B, e, e, e)`` occupancy → ``(B, n_patches, dim)`` memory"""
        cfg = self.config
        if tuple(grids.shape[1:]) != (cfg.extent,) * 3:
            raise ShapeMismatch(tuple(grids.shape[1:]), cfg.extent, cfg.patch_edge)
        e = cfg.patch_edge
        patches = rearrange(
            grids.to(self.patch_pos.dtype),
            "n (x a) (y b) (z c) -> n (z y x) (a b c)",
            a=e,
            b=e,
            c=e,
        )
        h = self.patch_proj(patches) + self.patch_pos
        return self.encoder(self.dropout(h))

    def embed(self, tokens: TokenTensors) -> torch.Tensor:
        length = tokens.c.shape[1]
        OverlengthPrefix.check(length, self.config.max_len)
        h = self.fragment_emb(tokens.c)
        for axis, emb in enumerate(self.translation_emb):
            h = h + emb(tokens.p[..., axis])
        for comp, emb in enumerate(self.rotation_emb):
            h = h + emb(tokens.r[..., comp])
        positions = torch.arange(length, device=tokens.c.device)
        return h + self.position_emb(positions)

    def decode(
        self, memory: torch.Tensor, tokens: TokenTensors, padding: Optional[torch.Tensor] = None
    ) -> Logits:
        b, length = tokens.c.shape
        causal = torch.triu(torch.ones(length, length, dtype=torch.bool, device=memory.device), 1)
        h = self.decoder(
            self.dropout(self.embed(tokens)), memory, tgt_mask=causal, tgt_key_padding_mask=padding
        )
        cfg = self.config
        return Logits(
            self.head_c(h),
            self.head_p(h).view(b, length, 3, cfg.b_t),
            self.head_r(h).view(b, length, 4, cfg.b_r),
        )

    def forward(
        self, grids: torch.Tensor, tokens: TokenTensors, padding: Optional[torch.Tensor] = None
    ) -> Logits:
        return self.decode(self.encode(grids), tokens, padding)


def build_model(config: ModelConfig, seed: Optional[int] = None) -> ShapeToFragments:
    if seed is not None:
        torch.manual_seed(seed)
    model = ShapeToFragments(config)
    n_params = sum(p.numel() for p in model.parameters())
    _logger.info(f"Model with {n_params} parameters (dim={config.dim}, vocab={config.vocab_size})")
    return model


@contextmanager
def inference(model: ShapeToFragments) -> Iterator[ShapeToFragments]:
    """Evaluation mode without gradients; the previous mode is restored on exit"""
    training = model.training
    model.eval()
    try:
        with torch.no_grad():
            yield model
    finally:
        model.train(training)


def encode(grid: VoxelGrid, model: ShapeToFragments) -> torch.Tensor:
    """Memory of a single grid: one hidden vector per patch"""
    with inference(model):
        return model.encode(grid_tensor([grid], model.config))[0]


def decode_step(memory: torch.Tensor, prefix: Sequence[Token], model: ShapeToFragments) -> Logits:
    """Logits of the token following ``prefix``"""
    OverlengthPrefix.check(len(prefix), model.config.max_len)
    tokens, _ = stack_tokens([prefix], model.config)
    with inference(model):
        logits = model.decode(memory[None], tokens)
    return Logits(logits.c[0, -1], logits.p[0, -1], logits.r[0, -1])
