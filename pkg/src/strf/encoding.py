"""Frequency encoding of coordinates and the learned latent time code.

Positions, viewing directions and the scalar timestamp are lifted with the
usual sin/cos octave features; the encoded timestamp is then pushed through
a small MLP whose output is the latent time vector fed to the field.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import torch
from torch import nn

log = logging.getLogger(__name__)


@dataclass
class FrequencyEncodingConfig:
    """Octave counts for position/direction/time plus the time-latent width."""

    l_pos: int = 10
    l_dir: int = 4
    l_time: int = 4
    time_latent_dim: int = 8
    include_raw: bool = True

    def __post_init__(self):
        if min(self.l_pos, self.l_dir, self.l_time) < 0:
            raise ValueError("octave counts must be >= 0")
        if self.time_latent_dim < 1:
            raise ValueError("time_latent_dim must be >= 1")


def encoded_length(k: int, octaves: int, include_raw: bool = True) -> int:
    return k * (2 * octaves + (1 if include_raw else 0))


def positional_encode(x, octaves: int, include_raw: bool = True):
    """Concatenate [x,] sin(2^j pi x), cos(2^j pi x) for j = 0..octaves-1.

    Works on (..., k) arrays; with octaves = 0 and include_raw the input
    passes through unchanged. Accepts numpy or torch, returns the same kind.
    """
    is_tensor = isinstance(x, torch.Tensor)
    t = x if is_tensor else torch.as_tensor(x, dtype=torch.float64)
    parts = [t] if include_raw else []
    for j in range(octaves):
        freq = (2.0**j) * math.pi
        parts.append(torch.sin(freq * t))
        parts.append(torch.cos(freq * t))
    if not parts:
        out = t[..., :0]
    else:
        out = torch.cat(parts, dim=-1)
    return out if is_tensor else out.numpy()


def kaiming_init_(linear: nn.Linear, generator: torch.Generator) -> None:
    """Uniform fan-in (Kaiming) init, biases zero, driven by one generator."""
    bound = math.sqrt(6.0 / linear.in_features)
    with torch.no_grad():
        linear.weight.uniform_(-bound, bound, generator=generator)
        linear.bias.zero_()


class TimeEncoder(nn.Module):
    """Latent time representation: frequency-encoded t through a small MLP.

    Two tanh hidden layers of width 64; the output dimension is the latent
    width handed to the radiance field. Timestamps live in [0, 1]; values
    outside are clamped (novel-time extrapolation renders the clamped end).
    """

    HIDDEN = 64

    def __init__(self, cfg: FrequencyEncodingConfig, generator: torch.Generator | None = None):
        super().__init__()
        self.cfg = cfg
        in_dim = encoded_length(1, cfg.l_time, cfg.include_raw)
        self.fc1 = nn.Linear(in_dim, self.HIDDEN)
        self.fc2 = nn.Linear(self.HIDDEN, self.HIDDEN)
        self.out = nn.Linear(self.HIDDEN, cfg.time_latent_dim)
        self.double()
        if generator is not None:
            for layer in (self.fc1, self.fc2, self.out):
                kaiming_init_(layer, generator)

    @property
    def latent_dim(self) -> int:
        return self.cfg.time_latent_dim

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        if t.dim() == 0:
            t = t.reshape(1)
        if bool((t < 0).any() or (t > 1).any()):
            log.warning("timestamp outside [0, 1]; clamping for extrapolation")
            t = t.clamp(0.0, 1.0)
        enc = positional_encode(t[:, None], self.cfg.l_time, self.cfg.include_raw)
        h = torch.tanh(self.fc1(enc))
        h = torch.tanh(self.fc2(h))
        return self.out(h)


def encode_time(t, encoder: TimeEncoder) -> torch.Tensor:
    """Latent code for timestamps t (scalar or (N,)), shape (N, latent_dim)."""
    dtype = next(encoder.parameters()).dtype
    t_t = t if isinstance(t, torch.Tensor) else torch.as_tensor(t, dtype=dtype)
    return encoder(t_t.to(dtype))
