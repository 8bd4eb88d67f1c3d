"""Toy UNet-style localization network with a center-of-mass readout.

Encoder stages (conv + LeakyReLU, average-pool between), a bottleneck, and
a mirrored decoder (bilinear upsample + conv) with skip concatenations; the
raw input stack is concatenated into the last two layers. The single output
channel is a quasi-heat-map (may be negative); its center of mass, clamped
to the grid, is the position estimate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F

from .heatmap import COM_SUM_EPS, DegenerateHeatMapError

CHECKPOINT_FORMAT_VERSION = 1


@dataclass
class LocNetConfig:
    n_px: int = 64
    n_bs: int = 5
    enc_widths: tuple = (8, 16, 24, 45, 60)
    bottleneck: int = 100
    kernel: int = 5
    full_res_kernel: int = 3  # cheaper kernels at the two full-resolution stages
    leaky_slope: float = 0.01
    # standardize the heat map to unit variance before the readout; the center
    # of mass is scale-invariant so outputs are unchanged, but the free scale
    # direction otherwise drifts until gradients either explode or vanish
    normalize_heatmap: bool = True
    seed: int = 0

    def __post_init__(self):
        self.enc_widths = tuple(int(w) for w in self.enc_widths)
        if self.n_px % (2 ** len(self.enc_widths)) or self.n_px < 2 ** (len(self.enc_widths) + 1):
            raise ValueError(
                f"n_px={self.n_px} does not support {len(self.enc_widths)} pooling steps"
            )

    @property
    def in_channels(self) -> int:
        return 3 * self.n_bs + 1

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "LocNetConfig":
        return cls(**d)


def center_of_mass_torch(h: torch.Tensor) -> torch.Tensor:
    """Differentiable center of mass of (B, 1, N, N) heat maps -> (B, 2)."""
    total = h.sum(dim=(1, 2, 3))
    if bool((total.abs() < COM_SUM_EPS).any()):
        raise DegenerateHeatMapError("heat map mass within epsilon of zero")
    n_rows, n_cols = h.shape[-2:]
    xs = torch.arange(1, n_cols + 1, dtype=h.dtype, device=h.device)
    ys = torch.arange(1, n_rows + 1, dtype=h.dtype, device=h.device)
    mu_x = (h.sum(dim=(1, 2)) * xs).sum(dim=1) / total
    mu_y = (h.sum(dim=(1, 3)) * ys).sum(dim=1) / total
    return torch.stack([mu_x, mu_y], dim=1)


class LocNet(nn.Module):
    def __init__(self, config: LocNetConfig):
        super().__init__()
        self.config = config
        torch.manual_seed(config.seed)
        k, kf = config.kernel, config.full_res_kernel
        slope = config.leaky_slope
        c_in = config.in_channels
        w = config.enc_widths

        def conv(ci, co, ksize):
            return nn.Conv2d(ci, co, ksize, padding=ksize // 2)

        self.act = nn.LeakyReLU(slope)
        self.enc = nn.ModuleList()
        prev = c_in
        for i, width in enumerate(w):
            self.enc.append(conv(prev, width, kf if i == 0 else k))
            prev = width
        self.bottleneck = conv(prev, config.bottleneck, 3)
        # decoder stage i consumes the upsampled stream and emits w[i] channels,
        # which are then concatenated with encoder stage i's output
        self.dec = nn.ModuleList()
        prev = config.bottleneck
        for i in reversed(range(len(w))):
            ksize = kf if i == 0 else k
            self.dec.append(conv(prev, w[i], ksize))
            prev = 2 * w[i] + (c_in if i == 0 else 0)
        self.pre_head = conv(prev, w[0], kf)
        self.head = nn.Conv2d(w[0] + c_in, 1, 1)

    def forward(self, x: torch.Tensor):
        cfg = self.config
        if x.shape[1:] != (cfg.in_channels, cfg.n_px, cfg.n_px):
            raise ValueError(
                f"expected input (B, {cfg.in_channels}, {cfg.n_px}, {cfg.n_px}), got {tuple(x.shape)}"
            )
        skips = []
        t = x
        for i, layer in enumerate(self.enc):
            if i > 0:
                t = F.avg_pool2d(t, 2)
            t = self.act(layer(t))
            skips.append(t)
        t = self.act(self.bottleneck(F.avg_pool2d(t, 2)))
        for stage, layer in enumerate(self.dec):
            i = len(self.enc) - 1 - stage
            t = F.interpolate(t, scale_factor=2, mode="bilinear", align_corners=False)
            t = self.act(layer(t))
            t = torch.cat([t, skips[i]] + ([x] if i == 0 else []), dim=1)
        t = torch.cat([self.act(self.pre_head(t)), x], dim=1)
        h = self.head(t)
        if cfg.normalize_heatmap:
            h = h / torch.sqrt(h.var(dim=(1, 2, 3), keepdim=True, unbiased=False) + 1e-6)
        est = center_of_mass_torch(h).clamp(1.0, float(cfg.n_px))
        return h, est


def locnet_forward(model: LocNet, channels: np.ndarray):
    """Run the network on one encoded input stack; returns (heat map, (x, y))."""
    x = torch.as_tensor(np.asarray(channels), dtype=next(model.parameters()).dtype)
    if x.ndim != 3:
        raise ValueError(f"expected (C, N, N) channels, got shape {tuple(x.shape)}")
    model.eval()
    with torch.no_grad():
        h, est = model(x.unsqueeze(0))
    return h[0, 0].numpy(), (float(est[0, 0]), float(est[0, 1]))


def save_checkpoint(model: LocNet, stem) -> None:
    """Weight file <stem>.pt plus architecture descriptor <stem>.json."""
    stem = str(stem)
    torch.save(model.state_dict(), stem + ".pt")
    descriptor = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": model.config.to_dict(),
    }
    with open(stem + ".json", "w") as f:
        json.dump(descriptor, f, indent=1, sort_keys=True)


def load_checkpoint(path) -> LocNet:
    stem = str(path)
    for suffix in (".pt", ".json"):
        if stem.endswith(suffix):
            stem = stem[: -len(suffix)]
    with open(stem + ".json") as f:
        descriptor = json.load(f)
    if descriptor.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {descriptor.get('format_version')}")
    model = LocNet(LocNetConfig.from_dict(descriptor["config"]))
    model.load_state_dict(torch.load(stem + ".pt", weights_only=True))
    model.eval()
    return model
