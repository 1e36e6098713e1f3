"""Desk-scale denoising diffusion core.

Pixel-space DDPM pieces: beta schedules (linear and cosine), the closed-form
forward noising, a small conditional encoder-decoder denoiser predicting the
injected noise, the simple epsilon-prediction training loss, and ancestral
sampling with fixed per-step variance. Pixel values live in [-1, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .validation import check_seed

BETA_START = 1e-4
BETA_END = 2e-2
COSINE_S = 0.008
COSINE_BETA_MAX = 0.999


@dataclass
class NoiseSchedule:
    """Per-timestep diffusion coefficients: beta, alpha = 1-beta, alpha_bar = cumprod."""

    kind: str
    T: int
    betas: np.ndarray
    alphas: np.ndarray = field(init=False)
    alpha_bars: np.ndarray = field(init=False)

    def __post_init__(self):
        self.betas = np.asarray(self.betas, dtype=np.float64)
        if self.betas.shape != (self.T,):
            raise ValueError(f"betas must have shape ({self.T},)")
        if not ((self.betas > 0) & (self.betas < 1)).all():
            raise ValueError("betas must lie strictly inside (0, 1)")
        self.alphas = 1.0 - self.betas
        self.alpha_bars = np.cumprod(self.alphas)
        if not (np.diff(self.alpha_bars) < 0).all():
            raise ValueError("alpha_bar must be strictly decreasing")

    def to_config(self) -> dict:
        return {"kind": self.kind, "T": self.T}


def make_schedule(kind: str, T: int) -> NoiseSchedule:
    """Build a noise schedule.

    linear: beta interpolated from 1e-4 to 2e-2 across T steps.
    cosine: alpha_bar follows f(t)/f(0) with f(t) = cos^2(((t/T + s)/(1 + s)) * pi/2),
    s = 0.008; betas derived from consecutive ratios and clipped to <= 0.999.
    """
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if kind == "linear":
        betas = np.linspace(BETA_START, BETA_END, T)
    elif kind == "cosine":
        grid = np.arange(T + 1, dtype=np.float64) / T
        f = np.cos((grid + COSINE_S) / (1 + COSINE_S) * math.pi / 2) ** 2
        betas = np.clip(1.0 - f[1:] / f[:-1], None, COSINE_BETA_MAX)
    else:
        raise ValueError(f"unknown schedule kind {kind!r}")
    return NoiseSchedule(kind=kind, T=T, betas=betas)


def _gather(coeffs: np.ndarray, t, like: torch.Tensor) -> torch.Tensor:
    """Pick per-sample coefficients and shape them for broadcasting against images."""
    values = torch.as_tensor(coeffs, dtype=like.dtype, device=like.device)
    t = torch.as_tensor(t, device=like.device, dtype=torch.long)
    if (t < 0).any() or (t >= len(coeffs)).any():
        raise ValueError(f"timestep out of range [0, {len(coeffs)})")
    picked = values[t]
    # append singleton dims so (N,) broadcasts over (N, C, H, W); scalars pass through
    while picked.dim() < like.dim():
        picked = picked.unsqueeze(-1)
    return picked


def forward_noise(x0: torch.Tensor, t, eps: torch.Tensor, schedule: NoiseSchedule) -> torch.Tensor:
    """Closed-form forward process: sqrt(ab_t) * x0 + sqrt(1 - ab_t) * eps."""
    if x0.shape != eps.shape:
        raise ValueError(f"x0 and eps shapes differ: {tuple(x0.shape)} vs {tuple(eps.shape)}")
    ab = _gather(schedule.alpha_bars, t, x0)
    return torch.sqrt(ab) * x0 + torch.sqrt(1.0 - ab) * eps


def timestep_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Sinusoidal embedding of integer timesteps, shape (N, dim)."""
    half = dim // 2
    freqs = torch.exp(
        -math.log(10000.0) * torch.arange(half, dtype=torch.float64) / max(half - 1, 1)
    ).to(t.device)
    args = t.double()[:, None] * freqs[None, :]
    emb = torch.cat([torch.sin(args), torch.cos(args)], dim=-1)
    if dim % 2 == 1:
        emb = torch.nn.functional.pad(emb, (0, 1))
    return emb


@dataclass(frozen=True)
class DenoiserConfig:
    """Architecture knobs for the conditional denoiser."""

    channels: int = 3
    image_size: int = 32
    hidden: tuple[int, ...] = (32, 64)
    emb_dim: int = 32
    cond_dim: int = 16

    def to_dict(self) -> dict:
        return {
            "channels": self.channels,
            "image_size": self.image_size,
            "hidden": list(self.hidden),
            "emb_dim": self.emb_dim,
            "cond_dim": self.cond_dim,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DenoiserConfig":
        return cls(
            channels=d["channels"],
            image_size=d["image_size"],
            hidden=tuple(d["hidden"]),
            emb_dim=d["emb_dim"],
            cond_dim=d["cond_dim"],
        )


class Denoiser(nn.Module):
    """Small convolutional encoder-decoder predicting the injected noise.

    The sinusoidal timestep embedding is concatenated with the conditioning
    vector, passed through an MLP, and added (per channel) to the hidden
    activations of every stage. Decoder stages add the matching encoder
    activation (skip connections). The final convolution is linear, so a
    zero-weight network outputs exactly zero.
    """

    def __init__(self, config: DenoiserConfig):
        super().__init__()
        self.config = config
        c, hs = config.channels, config.hidden
        self.emb_mlp = nn.Sequential(
            nn.Linear(config.emb_dim + config.cond_dim, config.emb_dim * 2),
            nn.SiLU(),
            nn.Linear(config.emb_dim * 2, config.emb_dim),
        )
        self.conv_in = nn.Conv2d(c, hs[0], 3, padding=1)
        self.down = nn.ModuleList(
            [nn.Conv2d(hs[i], hs[i + 1], 3, stride=2, padding=1) for i in range(len(hs) - 1)]
        )
        self.mid = nn.Conv2d(hs[-1], hs[-1], 3, padding=1)
        self.up = nn.ModuleList(
            [nn.ConvTranspose2d(hs[i + 1], hs[i], 4, stride=2, padding=1)
             for i in reversed(range(len(hs) - 1))]
        )
        self.conv_out = nn.Conv2d(hs[0], c, 3, padding=1)
        stages = [hs[0], *hs[1:], hs[-1], *list(reversed(hs[:-1]))]
        self.emb_proj = nn.ModuleList([nn.Linear(config.emb_dim, ch) for ch in stages])

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def forward(self, x: torch.Tensor, t, cond: torch.Tensor) -> torch.Tensor:
        squeeze = x.dim() == 3
        if squeeze:
            x = x.unsqueeze(0)
        n = x.shape[0]
        if x.shape[1] != self.config.channels:
            raise ValueError(
                f"expected {self.config.channels} channels, got {x.shape[1]}"
            )
        t = torch.as_tensor(t, device=x.device, dtype=torch.long).reshape(-1)
        if t.numel() == 1:
            t = t.expand(n)
        cond = torch.as_tensor(cond, dtype=x.dtype, device=x.device)
        if cond.dim() == 1:
            cond = cond.unsqueeze(0).expand(n, -1)
        if cond.shape != (n, self.config.cond_dim):
            raise ValueError(
                f"cond must have shape ({n}, {self.config.cond_dim}), got {tuple(cond.shape)}"
            )
        temb = timestep_embedding(t, self.config.emb_dim).to(x.dtype)
        emb = self.emb_mlp(torch.cat([temb, cond], dim=-1))

        def inject(h, stage):
            return h + self.emb_proj[stage](emb)[:, :, None, None]

        stage = 0
        h = torch.nn.functional.silu(inject(self.conv_in(x), stage))
        stage += 1
        skips = [h]
        for layer in self.down:
            h = torch.nn.functional.silu(inject(layer(h), stage))
            stage += 1
            skips.append(h)
        h = torch.nn.functional.silu(inject(self.mid(h), stage))
        stage += 1
        for i, layer in enumerate(self.up):
            h = torch.nn.functional.silu(
                inject(layer(h), stage) + skips[len(self.up) - 1 - i]
            )
            stage += 1
        out = self.conv_out(h)
        return out.squeeze(0) if squeeze else out


def predict_eps(model: Denoiser, x_t: torch.Tensor, t, cond: torch.Tensor) -> torch.Tensor:
    """Denoiser forward pass; output has the shape of x_t."""
    return model(x_t, t, cond)


def loss_simple(
    model: Denoiser,
    x0: torch.Tensor,
    cond: torch.Tensor,
    schedule: NoiseSchedule,
    rng_seed: int,
) -> torch.Tensor:
    """Mean squared error between injected and predicted noise.

    Timesteps are sampled uniformly over [0, T) and eps from a standard
    normal, both from a generator seeded with rng_seed, so the loss is a
    deterministic function of (params, inputs, seed).
    """
    check_seed(rng_seed, "rng_seed")
    if x0.dim() == 3:
        x0 = x0.unsqueeze(0)
    if x0.shape[0] == 0:
        raise ValueError("batch must be non-empty")
    g = torch.Generator(device="cpu").manual_seed(rng_seed)
    t = torch.randint(0, schedule.T, (x0.shape[0],), generator=g)
    eps = torch.randn(x0.shape, generator=g, dtype=x0.dtype)
    x_t = forward_noise(x0, t, eps, schedule)
    pred = model(x_t, t, cond)
    return torch.mean((eps - pred) ** 2)


@torch.no_grad()
def sample(
    model: Denoiser,
    schedule: NoiseSchedule,
    cond: torch.Tensor,
    seed: int,
    n: int,
) -> torch.Tensor:
    """Ancestral sampling from pure noise down to t = 0.

    x_{t-1} = (x_t - beta_t / sqrt(1 - ab_t) * eps_hat) / sqrt(alpha_t) + sigma_t * z
    with sigma_t^2 = beta_t and z = 0 at the last step. The result is clamped
    to [-1, 1] and is bit-reproducible for a fixed seed.
    """
    check_seed(seed, "seed")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    cfg = model.config
    g = torch.Generator(device="cpu").manual_seed(seed)
    dtype = next(model.parameters()).dtype
    x = torch.randn((n, cfg.channels, cfg.image_size, cfg.image_size), generator=g, dtype=dtype)
    cond = torch.as_tensor(cond, dtype=dtype)
    if cond.dim() == 1:
        cond = cond.unsqueeze(0).expand(n, -1)
    for t in reversed(range(schedule.T)):
        beta = schedule.betas[t]
        alpha = schedule.alphas[t]
        ab = schedule.alpha_bars[t]
        eps_hat = model(x, torch.full((n,), t, dtype=torch.long), cond)
        x = (x - beta / math.sqrt(1.0 - ab) * eps_hat) / math.sqrt(alpha)
        if t > 0:
            z = torch.randn(x.shape, generator=g, dtype=dtype)
            x = x + math.sqrt(beta) * z
    return x.clamp(-1.0, 1.0)


def images_to_tensor(arrays: Sequence[np.ndarray] | np.ndarray) -> torch.Tensor:
    """Stack HxWxC float arrays in [-1, 1] into an NCHW float32 tensor."""
    batch = np.stack([np.asarray(a, dtype=np.float32) for a in arrays])
    if batch.ndim == 3:
        batch = batch[:, :, :, None]
    return torch.from_numpy(batch).permute(0, 3, 1, 2).contiguous()


def tensor_to_images(x: torch.Tensor) -> np.ndarray:
    """NCHW tensor back to an NxHxWxC float32 array."""
    return x.detach().permute(0, 2, 3, 1).cpu().numpy().astype(np.float32)
