"""Paired low/high resolution refinement stage.

A small residual convolutional upsampler trained on (low, high) image pairs
with mean squared error. Applied to generated images after sampling to
restore detail at the classifier's working resolution.
"""

from __future__ import annotations

import copy

import numpy as np
import torch
from sklearn.base import BaseEstimator, TransformerMixin
from torch import nn

from .validation import check_image_batch, check_seed


class _UpsamplerNet(nn.Module):
    def __init__(self, channels: int, scale: int, hidden: int):
        super().__init__()
        self.scale = scale
        self.body = nn.Sequential(
            nn.Conv2d(channels, hidden, 3, padding=1),
            nn.SiLU(),
            nn.Conv2d(hidden, hidden, 3, padding=1),
            nn.SiLU(),
            nn.Conv2d(hidden, channels, 3, padding=1),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        up = torch.nn.functional.interpolate(x, scale_factor=self.scale, mode="nearest")
        return up + self.body(up)


class PairedUpsampler(BaseEstimator, TransformerMixin):
    """Learnable k-times upsampler with a nearest-neighbor skip connection.

    fit(X_low, X_high) trains on image pairs whose sides differ by an
    integer factor; transform(X_low) upsamples new images. Deterministic
    for a fixed seed.
    """

    def __init__(self, hidden: int = 32, steps: int = 1000, lr: float = 1e-3, seed: int = 0):
        self.hidden = hidden
        self.steps = steps
        self.lr = lr
        self.seed = seed

    def fit(self, X_low, X_high):
        low = check_image_batch(X_low, name="X_low")
        high = check_image_batch(X_high, name="X_high")
        if len(low) == 0:
            raise ValueError("pair list must be non-empty")
        if len(low) != len(high):
            raise ValueError("X_low and X_high must have equal length")
        if low.shape[3] != high.shape[3]:
            raise ValueError("low and high images must share channel count")
        if high.shape[1] % low.shape[1] or high.shape[2] % low.shape[2]:
            raise ValueError("high resolution must be an integer multiple of low")
        kh, kw = high.shape[1] // low.shape[1], high.shape[2] // low.shape[2]
        if kh != kw:
            raise ValueError(f"anisotropic scale {kh}x{kw} not supported")
        check_seed(self.seed)

        torch.manual_seed(self.seed)
        net = _UpsamplerNet(low.shape[3], kh, self.hidden)
        x = torch.from_numpy(low).permute(0, 3, 1, 2).contiguous()
        y = torch.from_numpy(high).permute(0, 3, 1, 2).contiguous()
        optimizer = torch.optim.Adam(net.parameters(), lr=self.lr)
        history = []
        for _ in range(self.steps):
            optimizer.zero_grad()
            loss = torch.mean((net(x) - y) ** 2)
            loss.backward()
            optimizer.step()
            history.append(float(loss.item()))

        self.scale_ = kh
        self.net_ = net
        self.history_ = history
        return self

    def transform(self, X_low) -> np.ndarray:
        if not hasattr(self, "net_"):
            raise RuntimeError("PairedUpsampler must be fitted before transform")
        low = check_image_batch(X_low, name="X_low")
        x = torch.from_numpy(low).permute(0, 3, 1, 2).contiguous()
        with torch.no_grad():
            out = self.net_(x).clamp(-1.0, 1.0)
        return out.permute(0, 2, 3, 1).cpu().numpy().astype(np.float32)

    def clone_fitted(self) -> "PairedUpsampler":
        other = PairedUpsampler(self.hidden, self.steps, self.lr, self.seed)
        if hasattr(self, "net_"):
            other.net_ = copy.deepcopy(self.net_)
            other.scale_ = self.scale_
            other.history_ = list(self.history_)
        return other


def degraded_pairs(highs, scale: int, noise_sigmas=(0.0, 0.1, 0.2, 0.3), seed: int = 0):
    """Build (low, high) training pairs by downsampling each high-res image
    and adding Gaussian noise at several levels.

    The noise levels make the fitted upsampler double as a light denoiser,
    which matters when its inputs come from a generative sampler rather
    than a clean downsampling pipeline.
    """
    from .images import resize_image

    highs = check_image_batch(highs, name="highs")
    if highs.shape[1] % scale:
        raise ValueError(f"high resolution {highs.shape[1]} not divisible by scale {scale}")
    rng = np.random.default_rng(seed)
    lows, outs = [], []
    for high in highs:
        low = resize_image(high, highs.shape[1] // scale)
        for sigma in noise_sigmas:
            noisy = low if sigma == 0 else np.clip(
                low + rng.normal(0.0, sigma, low.shape), -1.0, 1.0)
            lows.append(noisy.astype(np.float32))
            outs.append(high)
    return np.stack(lows), np.stack(outs)


def save_upsampler(up: PairedUpsampler, path) -> None:
    from .checkpoint import module_arrays, save_checkpoint

    if not hasattr(up, "net_"):
        raise RuntimeError("upsampler is not fitted")
    configs = {"params": up.get_params(), "scale": up.scale_,
               "channels": up.net_.body[0].in_channels}
    save_checkpoint(path, configs, module_arrays(up.net_, "net."))


def load_upsampler(path) -> PairedUpsampler:
    from .checkpoint import load_checkpoint, load_module_arrays

    configs, arrays = load_checkpoint(path)
    up = PairedUpsampler(**configs["params"])
    net = _UpsamplerNet(configs["channels"], configs["scale"], up.hidden)
    load_module_arrays(net, arrays, "net.")
    up.net_ = net
    up.scale_ = configs["scale"]
    up.history_ = []
    return up


def superres_finetune(pairs, hidden: int = 32, steps: int = 1000, lr: float = 1e-3,
                      seed: int = 0) -> PairedUpsampler:
    """Train an upsampler from a list of (low, high) array pairs."""
    if not pairs:
        raise ValueError("pair list must be non-empty")
    lows = np.stack([np.asarray(lo, dtype=np.float32) for lo, _ in pairs])
    highs = np.stack([np.asarray(hi, dtype=np.float32) for _, hi in pairs])
    return PairedUpsampler(hidden=hidden, steps=steps, lr=lr, seed=seed).fit(lows, highs)
