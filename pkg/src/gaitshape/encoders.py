"""Model components: silhouette encoder, temporally shifted body shape
encoder, and the per-bin fusion head that produces identity embeddings.

All components are plain float32 CPU modules without batch statistics, so
outputs depend only on the input sequence and the weights.
"""

from __future__ import annotations

import dataclasses
import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from .data import FRAME_HEIGHT, FRAME_WIDTH, SHAPE_DIM
from .distill import ProjectionHead

TEMPORAL_FUSION_MODES = ("temporal_shift", "avg_pool", "max_pool")


@dataclasses.dataclass
class ShiftConfig:
    """Temporal mixing of the body shape encoder.

    ratio is the channel fraction shifted per direction; k = floor(C * ratio)
    channels arrive from the previous frame and the next k from the following
    frame. Boundary frames keep their own content in the missing direction.
    """

    ratio: float = 0.125
    n_blocks: int = 6
    temporal_fusion: str = "temporal_shift"

    def __post_init__(self):
        if not 0.0 <= self.ratio <= 0.5:
            raise ValueError(f"shift ratio must be in [0, 0.5], got {self.ratio}")
        if self.n_blocks < 1:
            raise ValueError("n_blocks must be >= 1")
        if self.temporal_fusion not in TEMPORAL_FUSION_MODES:
            raise ValueError(
                f"temporal_fusion must be one of {TEMPORAL_FUSION_MODES}"
            )


@dataclasses.dataclass
class ModelConfig:
    silhouette_channels: tuple[int, int, int] = (32, 64, 128)
    body_channels: tuple[int, ...] = (16, 24, 32, 64, 96, 160)
    horizontal_bins: int = 16
    embedding_dim: int = 128
    shape_dim: int = SHAPE_DIM
    proj_dim: int = 10
    shift: ShiftConfig = dataclasses.field(default_factory=ShiftConfig)
    n_classes: int | None = None
    seed: int = 0

    def __post_init__(self):
        if len(self.silhouette_channels) != 3:
            raise ValueError("silhouette encoder uses exactly 3 stages")
        if self.horizontal_bins != FRAME_HEIGHT // 4:
            raise ValueError(
                f"horizontal_bins must match the encoder output rows "
                f"({FRAME_HEIGHT // 4})"
            )


def _shift_batched(feat: torch.Tensor, ratio: float) -> torch.Tensor:
    # feat: (B, m, C, ...); frames never mix across the batch dimension
    c = feat.shape[2]
    k = int(c * ratio)
    if k == 0 or feat.shape[1] == 1:
        return feat
    out = feat.clone()
    out[:, 1:, :k] = feat[:, :-1, :k]
    out[:, :-1, k : 2 * k] = feat[:, 1:, k : 2 * k]
    return out


def temporal_shift(feat: torch.Tensor, ratio: float) -> torch.Tensor:
    """Exchange channel slices between neighboring frames.

    feat is frame-major, (m, C, ...). With k = floor(C * ratio), channels
    [0, k) of frame t come from frame t-1 and channels [k, 2k) from frame
    t+1; the rest stay put. The first frame keeps its own leading slice and
    the last frame its own trailing slice, so content is never zero-filled
    and a single-frame sequence passes through unchanged.
    """
    if not 0.0 <= ratio <= 0.5:
        raise ValueError(f"shift ratio must be in [0, 0.5], got {ratio}")
    if feat.dim() < 2:
        raise ValueError("expected at least (frames, channels)")
    return _shift_batched(feat.unsqueeze(0), ratio).squeeze(0)


class SilhouetteEncoder(nn.Module):
    """Three conv stages over single frames; output keeps 16 rows so each
    row becomes one horizontal bin (64x44 -> C x 16 x 5)."""

    def __init__(self, channels=(32, 64, 128)):
        super().__init__()
        c1, c2, c3 = channels
        self.conv1 = nn.Conv2d(1, c1, 3, padding=1)
        self.conv2 = nn.Conv2d(c1, c2, 3, padding=1)
        self.conv3 = nn.Conv2d(c2, c3, 3, padding=1)
        self.out_channels = c3

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # x: (n, 1, 64, 44) float32
        x = F.leaky_relu(self.conv1(F.max_pool2d(x, 2)))
        x = F.leaky_relu(self.conv2(F.max_pool2d(x, 2)))
        # third stage halves width only, preserving the 16 bin rows
        x = F.leaky_relu(self.conv3(F.max_pool2d(x, (1, 2))))
        return x


class BodyShapeEncoder(nn.Module):
    """Lightweight depthwise-separable stack over frames with temporal
    shifting between blocks; emits one shape-code vector per sequence."""

    def __init__(self, channels=(16, 24, 32, 64, 96, 160),
                 shift: ShiftConfig | None = None, out_dim: int = SHAPE_DIM):
        super().__init__()
        self.shift = shift or ShiftConfig()
        n = self.shift.n_blocks
        chans = list(channels[:n])
        while len(chans) < n:
            chans.append(channels[-1])
        self.depthwise = nn.ModuleList()
        self.pointwise = nn.ModuleList()
        self.norms = nn.ModuleList()
        cin = 1
        for i, cout in enumerate(chans):
            stride = 2 if i < 4 else 1
            self.depthwise.append(
                nn.Conv2d(cin, cin, 3, stride=stride, padding=1, groups=cin)
            )
            self.pointwise.append(nn.Conv2d(cin, cout, 1))
            # Per-sample normalization: six fan-in-uniform blocks shrink
            # activations geometrically, which would leave the shape head
            # with near-zero inputs and no way to reach prior-scale outputs.
            self.norms.append(nn.GroupNorm(1, cout))
            cin = cout
        self.head = nn.Linear(cin, out_dim)

    def forward(self, frames: torch.Tensor) -> torch.Tensor:
        # frames: (B, m, 64, 44) float32 -> (B, out_dim)
        b, m = frames.shape[0], frames.shape[1]
        x = frames.reshape(b * m, 1, frames.shape[2], frames.shape[3])
        use_shift = self.shift.temporal_fusion == "temporal_shift"
        for dw, pw, norm in zip(self.depthwise, self.pointwise, self.norms):
            x = F.leaky_relu(norm(pw(dw(x))))
            if use_shift:
                x5 = x.reshape(b, m, *x.shape[1:])
                x = _shift_batched(x5, self.shift.ratio).reshape(b * m, *x.shape[1:])
        x5 = x.reshape(b, m, *x.shape[1:])
        if self.shift.temporal_fusion == "max_pool":
            t = x5.max(dim=1).values
        else:
            t = x5.mean(dim=1)
        return self.head(t.mean(dim=(2, 3)))


class FusionHead(nn.Module):
    """Broadcast the shape code onto every frame feature, pool over time
    and width, then map each of the 16 bins through two FC layers."""

    def __init__(self, in_channels: int, shape_dim: int = SHAPE_DIM,
                 bins: int = 16, embedding_dim: int = 128):
        super().__init__()
        self.bins = bins
        width = in_channels + shape_dim
        self.w1 = nn.Parameter(torch.empty(bins, width, embedding_dim))
        self.b1 = nn.Parameter(torch.zeros(bins, embedding_dim))
        self.w2 = nn.Parameter(torch.empty(bins, embedding_dim, embedding_dim))
        self.b2 = nn.Parameter(torch.zeros(bins, embedding_dim))
        self.reset_parameters()

    def reset_parameters(self, generator: torch.Generator | None = None) -> None:
        with torch.no_grad():
            for w in (self.w1, self.w2):
                bound = 1.0 / w.shape[1] ** 0.5
                w.uniform_(-bound, bound, generator=generator)
            self.b1.zero_()
            self.b2.zero_()

    def forward(self, frame_feats: torch.Tensor, shape_code: torch.Tensor):
        # frame_feats: (B, m, C, bins, W'); shape_code: (B, shape_dim)
        b, m, _, h, w = frame_feats.shape
        if h != self.bins:
            raise ValueError(f"expected {self.bins} bin rows, got {h}")
        code = shape_code[:, None, :, None, None].expand(b, m, -1, h, w)
        x = torch.cat([frame_feats, code], dim=2)
        x = x.max(dim=1).values  # over time
        x = x.max(dim=3).values  # over width, one vector per bin
        x = x.permute(2, 0, 1)  # (bins, B, C + shape_dim)
        x = F.leaky_relu(torch.bmm(x, self.w1) + self.b1[:, None, :])
        x = torch.bmm(x, self.w2) + self.b2[:, None, :]
        return x.permute(1, 0, 2)  # (B, bins, embedding_dim)


class GaitShapeModel(nn.Module):
    """Full recognizer: both encoders, fusion, distillation projection
    heads (saved with the model), and an optional identity classifier."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.silhouette_encoder = SilhouetteEncoder(config.silhouette_channels)
        self.body_shape_encoder = BodyShapeEncoder(
            config.body_channels, shift=config.shift, out_dim=config.shape_dim
        )
        self.fusion = FusionHead(
            self.silhouette_encoder.out_channels,
            shape_dim=config.shape_dim,
            bins=config.horizontal_bins,
            embedding_dim=config.embedding_dim,
        )
        self.projection = ProjectionHead(config.shape_dim, config.proj_dim)
        self.classifier = None
        if config.n_classes:
            self.classifier = nn.Linear(
                config.horizontal_bins * config.embedding_dim, config.n_classes
            )
        self.reset_parameters(config.seed)

    def reset_parameters(self, seed: int) -> None:
        """Deterministic init: fan-in scaled uniform weights, zero biases.

        The distillation projection heads start at identity instead, so the
        contrastive pairing begins aligned with the raw shape space.
        """
        g = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for module in self.modules():
                if isinstance(module, (nn.Conv2d, nn.Linear)):
                    fan_in = module.weight.shape[1:].numel()
                    bound = 1.0 / math.sqrt(fan_in)
                    module.weight.uniform_(-bound, bound, generator=g)
                    if module.bias is not None:
                        module.bias.zero_()
                elif isinstance(module, nn.GroupNorm):
                    module.weight.fill_(1.0)
                    module.bias.zero_()
                elif isinstance(module, FusionHead):
                    module.reset_parameters(generator=g)
            self.projection.reset_parameters()

    def embed(self, frames: torch.Tensor):
        """frames (B, m, 64, 44) float32 -> (embeddings (B, bins, dim),
        shape code (B, shape_dim))."""
        if frames.dim() != 4:
            raise ValueError(f"expected (B, m, H, W), got {tuple(frames.shape)}")
        b, m, h, w = frames.shape
        if (h, w) != (FRAME_HEIGHT, FRAME_WIDTH):
            raise ValueError(f"frames must be {FRAME_HEIGHT}x{FRAME_WIDTH}")
        per_frame = self.silhouette_encoder(frames.reshape(b * m, 1, h, w))
        per_frame = per_frame.reshape(b, m, *per_frame.shape[1:])
        shape_code = self.body_shape_encoder(frames)
        return self.fusion(per_frame, shape_code), shape_code

    def forward(self, frames: torch.Tensor) -> torch.Tensor:
        return self.embed(frames)[0]


def freeze(model: GaitShapeModel, which: str) -> GaitShapeModel:
    """Stop gradient flow into a named component (e.g. for transfer runs)."""
    parts = {
        "silhouette_encoder": model.silhouette_encoder,
        "body_shape_encoder": model.body_shape_encoder,
        "fusion": model.fusion,
        "projection": model.projection,
    }
    if which not in parts:
        raise ValueError(f"unknown component {which!r}; one of {sorted(parts)}")
    parts[which].requires_grad_(False)
    return model
