"""Conditional noise-prediction network over a plan of multi-view latents.

Layout: a full-resolution stem, three staged levels at 1/2, 1/4, 1/8
resolution with widths (32, 64, 128), one cross-view epipolar attention
block and one condition cross-attention per level, then a mirrored up path
with additive skips. Input is 4 planes (RGB latent + mask channel), output
is the 3-plane noise estimate at full resolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

from .cond import ConditionBundle, ConditionEncoders, positional_encoding_t
from .epiattn import CrossViewBlock, PlanGeometry


class AlignmentError(ValueError):
    pass


@dataclass(frozen=True)
class DenoiserConfig:
    image_size: int = 64
    dof: int = 4
    base_width: int = 16
    level_widths: tuple = (32, 64, 128)
    token_width: int = 64
    state_tokens: int = 4
    m_samples: int = 4
    r_max: float = 4.0
    time_dim: int = 64
    t_max: int = 64  # timestep index capacity
    n_views_max: int = 8
    # ablation toggle: zero out pose/joint deltas and the offset gate
    motion_conditioning: bool = True

    @property
    def guidance_tokens(self) -> int:
        return (self.image_size // 8) ** 2


class ResBlock(nn.Module):
    def __init__(self, width: int, time_dim: int):
        super().__init__()
        groups = math.gcd(width, 8)
        self.norm1 = nn.GroupNorm(groups, width)
        self.conv = nn.Conv2d(width, width, 3, padding=1)
        self.time_proj = nn.Linear(time_dim, width)
        self.norm2 = nn.GroupNorm(groups, width)
        self.out = nn.Conv2d(width, width, 1)
        nn.init.zeros_(self.out.weight)
        nn.init.zeros_(self.out.bias)

    def forward(self, x: torch.Tensor, temb: torch.Tensor) -> torch.Tensor:
        h = self.conv(torch.nn.functional.silu(self.norm1(x)))
        h = h + self.time_proj(temb)[:, :, None, None]
        h = self.out(torch.nn.functional.silu(self.norm2(h)))
        return x + h


class CondAttention(nn.Module):
    """Cross-attention from pixels to the per-entry condition token context."""

    def __init__(self, width: int, token_width: int):
        super().__init__()
        self.width = width
        self.q = nn.Conv2d(width, width, 1)
        self.k = nn.Linear(token_width, width)
        self.v = nn.Linear(token_width, width)
        self.out = nn.Conv2d(width, width, 1)
        nn.init.zeros_(self.out.weight)
        nn.init.zeros_(self.out.bias)

    def forward(self, x: torch.Tensor, tokens: torch.Tensor) -> torch.Tensor:
        k_img, c, h, w = x.shape
        q = self.q(x).reshape(k_img, c, h * w).transpose(1, 2)  # (K, HW, c)
        keys = self.k(tokens)  # (K, T, c)
        vals = self.v(tokens)
        logits = torch.einsum("kqc,ktc->kqt", q, keys) / (c**0.5)
        attn = torch.softmax(logits, dim=-1)
        mixed = torch.einsum("kqt,ktc->kqc", attn, vals)
        mixed = mixed.transpose(1, 2).reshape(k_img, c, h, w)
        return x + self.out(mixed)


class Denoiser(nn.Module):
    """Noise predictor for all entries of a sample plan, processed jointly."""

    def __init__(self, cfg: DenoiserConfig):
        super().__init__()
        self.cfg = cfg
        tw = cfg.token_width
        self.encoders = ConditionEncoders(
            dof=cfg.dof,
            t_max=cfg.t_max,
            n_views=cfg.n_views_max,
            width=tw,
            state_tokens=cfg.state_tokens,
        )
        # spatial identity for guidance patches lives in the denoiser so the
        # guidance encoder itself stays permutation-equivariant
        self.guidance_pos = nn.Parameter(torch.randn(cfg.guidance_tokens, tw) * 0.02)
        self.role_embed = nn.Parameter(torch.zeros(2, tw))

        self.time_mlp = nn.Sequential(
            nn.Linear(cfg.time_dim, cfg.time_dim * 2), nn.SiLU(), nn.Linear(cfg.time_dim * 2, cfg.time_dim)
        )

        w0 = cfg.base_width
        w1, w2, w3 = cfg.level_widths
        self.stem = nn.Conv2d(4, w0, 3, padding=1)
        self.down0 = nn.Conv2d(w0, w1, 3, stride=2, padding=1)
        self.down1 = nn.Conv2d(w1, w2, 3, stride=2, padding=1)
        self.down2 = nn.Conv2d(w2, w3, 3, stride=2, padding=1)

        self.res = nn.ModuleList([ResBlock(w, cfg.time_dim) for w in (w1, w2, w3)])
        self.cross_view = nn.ModuleList(
            [CrossViewBlock(w, tw, m_samples=cfg.m_samples, r_max=cfg.r_max) for w in (w1, w2, w3)]
        )
        self.cond_attn = nn.ModuleList([CondAttention(w, tw) for w in (w1, w2, w3)])

        self.up2 = nn.Conv2d(w3, w2, 3, padding=1)
        self.res_up2 = ResBlock(w2, cfg.time_dim)
        self.up1 = nn.Conv2d(w2, w1, 3, padding=1)
        self.res_up1 = ResBlock(w1, cfg.time_dim)
        self.up0 = nn.Conv2d(w1, w0, 3, padding=1)
        self.out_norm = nn.GroupNorm(math.gcd(w0, 8), w0)
        self.out_conv = nn.Conv2d(w0, 3, 3, padding=1)
        nn.init.zeros_(self.out_conv.weight)
        nn.init.zeros_(self.out_conv.bias)

    def context_tokens(self, bundle: ConditionBundle) -> torch.Tensor:
        """(K, G+S+1, token_width) condition context per plan entry."""
        k = bundle.n_entries
        guidance = (bundle.guidance_tokens + self.guidance_pos).unsqueeze(0).expand(k, -1, -1)
        roles = torch.stack(
            [self.role_embed[1 if f else 0] for f in bundle.history_flags]
        )
        entry_tok = (bundle.index_embeddings + roles).unsqueeze(1)
        return torch.cat([guidance, bundle.state_tokens, entry_tok], dim=1)

    def forward(
        self,
        latents: torch.Tensor,  # (K, 4, H, W): RGB latent + mask plane
        t_diff: torch.Tensor,  # (K,) diffusion timesteps (1-based)
        bundle: ConditionBundle,
        geometry: PlanGeometry,
    ) -> torch.Tensor:
        k = latents.shape[0]
        if latents.ndim != 4 or latents.shape[1] != 4:
            raise AlignmentError(f"latents must be (K, 4, H, W), got {tuple(latents.shape)}")
        if bundle.n_entries != k or len(geometry) != k or t_diff.shape != (k,):
            raise AlignmentError("latents, plan conditions, and geometry are misaligned")
        if latents.shape[-1] != self.cfg.image_size:
            raise AlignmentError(
                f"expected image size {self.cfg.image_size}, got {latents.shape[-1]}"
            )

        temb = self.time_mlp(positional_encoding_t(t_diff.to(latents.dtype), self.cfg.time_dim))
        tokens = self.context_tokens(bundle)
        state_pooled = bundle.state_tokens.mean(dim=1)
        motion = bundle.motion_norms

        s = self.stem(latents)
        x = self.down0(s)
        skips = []
        for lvl in range(3):
            x = self.res[lvl](x, temb)
            x = self.cross_view[lvl](x, geometry, state_pooled, motion)
            x = self.cond_attn[lvl](x, tokens)
            skips.append(x)
            if lvl == 0:
                x = self.down1(x)
            elif lvl == 1:
                x = self.down2(x)

        x = nn.functional.interpolate(x, scale_factor=2, mode="nearest")
        x = self.up2(x) + skips[1]
        x = self.res_up2(x, temb)
        x = nn.functional.interpolate(x, scale_factor=2, mode="nearest")
        x = self.up1(x) + skips[0]
        x = self.res_up1(x, temb)
        x = nn.functional.interpolate(x, scale_factor=2, mode="nearest")
        x = self.up0(x) + s
        x = torch.nn.functional.silu(self.out_norm(x))
        return self.out_conv(x)
