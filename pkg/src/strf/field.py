"""The two-stage space-time radiance network.

Stage one maps the encoded position plus latent time code to a density and
a hidden appearance feature; stage two maps that feature together with the
encoded viewing direction to RGB. Density therefore cannot depend on the
viewing direction by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import NamedTuple

import torch
import torch.nn.functional as F
from torch import nn

from .encoding import FrequencyEncodingConfig, TimeEncoder, encoded_length, kaiming_init_, positional_encode


@dataclass
class FieldConfig:
    """Architecture of the radiance network.

    hidden_depth/hidden_width fix the first-stage MLP; the encoded input is
    concatenated back in at `skip_layer` (1-based). view_hidden is the width
    of the single hidden layer of the direction branch. use_time = False
    drops the time encoder entirely (the static-scene ablation).
    """

    hidden_width: int = 256
    hidden_depth: int = 8
    skip_layer: int = 5
    view_hidden: int = 128
    use_time: bool = True
    encoding: FrequencyEncodingConfig = dc_field(default_factory=FrequencyEncodingConfig)
    seed: int = 0

    def __post_init__(self):
        if self.hidden_depth < 2:
            raise ValueError("hidden_depth must be >= 2")
        if not 1 < self.skip_layer <= self.hidden_depth:
            raise ValueError("skip_layer must lie in (1, hidden_depth]")


class FieldOutput(NamedTuple):
    sigma: torch.Tensor  # density per meter, >= 0, shape (N,)
    color: torch.Tensor  # RGB in [0, 1], shape (N, 3)


class RadianceField(nn.Module):
    """Space-time radiance field with deterministic seeded initialization."""

    def __init__(self, cfg: FieldConfig):
        super().__init__()
        self.cfg = cfg
        enc = cfg.encoding
        gen = torch.Generator().manual_seed(cfg.seed)
        self.time_encoder = TimeEncoder(enc, gen) if cfg.use_time else None
        self.pos_dim = encoded_length(3, enc.l_pos, enc.include_raw)
        self.dir_dim = encoded_length(3, enc.l_dir, enc.include_raw)
        in_dim = self.pos_dim + (enc.time_latent_dim if cfg.use_time else 0)
        self.in_dim = in_dim

        layers = []
        last = in_dim
        for i in range(1, cfg.hidden_depth + 1):
            if i == cfg.skip_layer:
                last += in_dim
            layers.append(nn.Linear(last, cfg.hidden_width))
            last = cfg.hidden_width
        self.layers = nn.ModuleList(layers)
        self.sigma_head = nn.Linear(cfg.hidden_width, 1)
        self.view_fc = nn.Linear(cfg.hidden_width + self.dir_dim, cfg.view_hidden)
        self.rgb_head = nn.Linear(cfg.view_hidden, 3)
        self.double()
        for layer in (*self.layers, self.sigma_head, self.view_fc, self.rgb_head):
            kaiming_init_(layer, gen)

    def forward(self, p: torch.Tensor, t_latent: torch.Tensor | None, d: torch.Tensor) -> FieldOutput:
        """Density and radiance for points p, latent times and unit dirs.

        p: (N, 3); t_latent: (N, latent_dim) or None when use_time is off;
        d: (N, 3). Returns sigma (N,) and color (N, 3).
        """
        x = positional_encode(p, self.cfg.encoding.l_pos, self.cfg.encoding.include_raw)
        if self.time_encoder is not None:
            if t_latent is None:
                raise ValueError("field was built with a time encoder; t_latent is required")
            if t_latent.dim() == 1:
                t_latent = t_latent.expand(p.shape[0], -1)
            x = torch.cat([x, t_latent], dim=-1)
        elif t_latent is not None:
            raise ValueError("field was built without time; got a t_latent input")

        h = x
        for i, layer in enumerate(self.layers, start=1):
            if i == self.cfg.skip_layer:
                h = torch.cat([h, x], dim=-1)
            h = F.relu(layer(h))
        sigma = F.softplus(self.sigma_head(h)).squeeze(-1)
        d_enc = positional_encode(d, self.cfg.encoding.l_dir, self.cfg.encoding.include_raw)
        hv = F.relu(self.view_fc(torch.cat([h, d_enc], dim=-1)))
        color = torch.sigmoid(self.rgb_head(hv))
        return FieldOutput(sigma, color)

    def encode_time(self, t) -> torch.Tensor | None:
        if self.time_encoder is None:
            return None
        dtype = next(self.parameters()).dtype
        t_t = t if isinstance(t, torch.Tensor) else torch.as_tensor(t, dtype=dtype)
        return self.time_encoder(t_t.to(dtype))


def field_forward(p, t_latent, d, params: RadianceField) -> FieldOutput:
    """Validated single-point or batched evaluation of the field.

    Accepts (3,)/(N, 3) positions with matching latent codes and unit
    directions; raises on shape mismatch, non-finite input, or non-unit d.
    """
    dtype = next(params.parameters()).dtype
    p_t = torch.as_tensor(p, dtype=dtype) if not isinstance(p, torch.Tensor) else p
    d_t = torch.as_tensor(d, dtype=dtype) if not isinstance(d, torch.Tensor) else d
    single = p_t.dim() == 1
    if single:
        p_t = p_t[None]
        d_t = d_t[None]
    if p_t.shape[-1] != 3 or d_t.shape != p_t.shape:
        raise ValueError(f"expected matching (N, 3) inputs, got {tuple(p_t.shape)} and {tuple(d_t.shape)}")
    if not (torch.isfinite(p_t).all() and torch.isfinite(d_t).all()):
        raise ValueError("field inputs must be finite")
    if (torch.linalg.norm(d_t, dim=-1) - 1.0).abs().max() > 1e-6:
        raise ValueError("viewing directions must be unit length")
    t_l = t_latent
    if t_l is not None:
        t_l = torch.as_tensor(t_l, dtype=dtype) if not isinstance(t_l, torch.Tensor) else t_l
        if t_l.dim() == 1:
            t_l = t_l[None].expand(p_t.shape[0], -1)
        if params.time_encoder is not None and t_l.shape[-1] != params.time_encoder.latent_dim:
            raise ValueError(
                f"t_latent width {t_l.shape[-1]} does not match encoder ({params.time_encoder.latent_dim})"
            )
    out = params(p_t, t_l, d_t)
    if single:
        return FieldOutput(out.sigma[0], out.color[0])
    return out


def field_backward(
    inputs: tuple,
    upstream: tuple,
    params: RadianceField,
    wrt_inputs: bool = False,
):
    """Reverse-mode gradients of (sigma, color) against the parameters.

    inputs = (p, t_latent, d); upstream = (grad_sigma, grad_color) with the
    shapes of the forward outputs. Returns a dict name -> gradient over
    params.named_parameters(); with wrt_inputs also "p" (and "t_latent").
    Gradients are summed over the batch.
    """
    p, t_latent, d = inputs
    dtype = next(params.parameters()).dtype
    p_t = torch.as_tensor(p, dtype=dtype).detach().clone().requires_grad_(wrt_inputs)
    d_t = torch.as_tensor(d, dtype=dtype).detach()
    t_l = None
    if t_latent is not None:
        t_l = torch.as_tensor(t_latent, dtype=dtype).detach().clone().requires_grad_(wrt_inputs)
    out = field_forward(p_t, t_l, d_t, params)
    g_sigma = torch.as_tensor(upstream[0], dtype=dtype)
    g_color = torch.as_tensor(upstream[1], dtype=dtype)
    names, tensors = zip(*params.named_parameters())
    extra = [p_t] + ([t_l] if t_l is not None else [])
    grads = torch.autograd.grad(
        outputs=(out.sigma, out.color),
        inputs=tensors + tuple(extra) if wrt_inputs else tensors,
        grad_outputs=(g_sigma, g_color),
        allow_unused=True,
    )
    result = {}
    for name, tensor, grad in zip(names, tensors, grads):
        result[name] = torch.zeros_like(tensor) if grad is None else grad
    if wrt_inputs:
        offset = len(tensors)
        result["p"] = grads[offset]
        if t_l is not None:
            result["t_latent"] = grads[offset + 1]
    return result
