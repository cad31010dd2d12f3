from dataclasses import asdict, dataclass, fields
from typing import Any, Dict, Mapping, Type, TypeVar

from ..codec import PoseBins
from ..errors import PatchingError
from ..geom import DEFAULT_EXTENT, DEFAULT_PITCH, GridSpec

T = TypeVar("T")


@dataclass(frozen=True)
class ModelConfig:
    """Size of the shape-to-fragments network.

    The defaults are desk scale. The input grid is ``extent³`` voxels of ``pitch`` Å,
    cut into ``(extent / patch_edge)³`` patches.
    """

    vocab_size: int = 0
    dim: int = 128
    layers_enc: int = 4
    layers_dec: int = 4
    heads: int = 4
    patch_edge: int = 4
    extent: int = DEFAULT_EXTENT
    pitch: float = DEFAULT_PITCH
    b_t: int = 64
    b_r: int = 64
    pose_length: float = 32.0
    """Translation range (Å) covered by the ``b_t`` bins of every axis"""
    max_len: int = 96
    dropout: float = 0.1
    ffn_mult: int = 4
    zero_init_heads: bool = True
    """Start from uniform output distributions"""

    def __post_init__(self):
        if self.dim % self.heads:
            raise ValueError(f"dim={self.dim} is not divisible by heads={self.heads}")
        PatchingError.check(self.extent, self.patch_edge)
        if self.max_len < 3:
            raise ValueError(f"max_len={self.max_len} cannot fit BOS, a fragment and EOS")

    @property
    def n_patches(self) -> int:
        return (self.extent // self.patch_edge) ** 3

    @property
    def bins(self) -> PoseBins:
        return PoseBins(self.pose_length, self.b_t, self.b_r)

    def grid(self, center=(0.0, 0.0, 0.0)) -> GridSpec:
        return GridSpec.centered(center, self.pitch, self.extent)


@dataclass(frozen=True)
class OptimConfig:
    lr: float = 5e-4
    weight_decay: float = 1e-2
    warmup: int = 4000
    steps: int = 20000
    batch_size: int = 32
    seed: int = 0
    eps: float = 0.1
    """Voxelization radius noise (Å) applied on every draw"""
    translation_range: float = 2.0
    """Augmentation shift (Å per axis); ``0`` disables augmentation"""
    clip: float = 1.0
    checkpoint_every: int = 1000

    def __post_init__(self):
        if self.steps < 0 or self.batch_size < 1 or self.warmup < 1:
            raise ValueError("steps >= 0, batch_size >= 1 and warmup >= 1 are required")


def to_dict(config) -> Dict[str, Any]:
    return asdict(config)


def from_dict(cls: Type[T], values: Mapping[str, Any]) -> T:
    """Build ``cls`` ignoring unknown keys (forward compatible checkpoints)"""
    known = {f.name for f in fields(cls)}  # type: ignore[arg-type]
    return cls(**{k: v for k, v in values.items() if k in known})
