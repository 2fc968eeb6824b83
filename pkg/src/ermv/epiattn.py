"""Cross-view attention gated by epipolar geometry and predicted motion offsets.

For a query pixel p in image i the block predicts a motion-induced offset
dp from local features and the image's state tokens, shifts the query to
p' = p + dp, intersects the target image j with the epipolar line of p',
samples M key/value positions along the visible segment, and attends over
them. Results are averaged over all partner images and added through a
zero-initialized projection, so a freshly initialized block is the identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .geom import (
    DegenerateGeometry,
    FundamentalMatrix,
    Intrinsics,
    NoVisibleSegment,
    PixelPoint,
    epipolar_line,
    fundamental_matrix,
    sample_epipolar,
)

_EPS = 1e-12


class DimensionMismatch(ValueError):
    pass


def motion_gate(motion_norm: torch.Tensor) -> torch.Tensor:
    """Gate in [0, 1): zero exactly at zero motion, saturating for large motion."""
    return motion_norm / (1.0 + motion_norm)


class OffsetPredictor(nn.Module):
    """Small MLP mapping (local feature, pooled state tokens) to a 2D offset.

    The raw output is smoothly bounded to |dp|_inf <= r_max and multiplied by
    the motion gate, so zero camera/joint motion forces a zero offset.
    """

    def __init__(self, feature_dim: int, state_dim: int, hidden: int = 32, r_max: float = 4.0):
        super().__init__()
        self.r_max = r_max
        self.feature_dim = feature_dim
        self.state_dim = state_dim
        self.net = nn.Sequential(
            nn.Linear(feature_dim + state_dim, hidden),
            nn.SiLU(),
            nn.Linear(hidden, 2),
        )

    def forward(
        self, features: torch.Tensor, state_pooled: torch.Tensor, motion_norm: torch.Tensor
    ) -> torch.Tensor:
        if features.shape[-1] != self.feature_dim or state_pooled.shape[-1] != self.state_dim:
            raise DimensionMismatch(
                f"expected feature/state dims ({self.feature_dim}, {self.state_dim}), "
                f"got ({features.shape[-1]}, {state_pooled.shape[-1]})"
            )
        raw = self.net(torch.cat([features, state_pooled], dim=-1))
        bounded = self.r_max * torch.tanh(raw / self.r_max)
        gate = motion_gate(motion_norm)
        while gate.ndim < bounded.ndim:
            gate = gate.unsqueeze(-1)
        return gate * bounded


def predict_offset(
    feature: torch.Tensor,
    state_tokens: torch.Tensor,
    motion_norm: float,
    predictor: OffsetPredictor,
) -> torch.Tensor:
    """Offset for one query pixel; state tokens are mean-pooled."""
    pooled = state_tokens.mean(dim=0)
    return predictor(
        feature, pooled, torch.as_tensor(motion_norm, dtype=feature.dtype, device=feature.device)
    )


def ema_attention(q: torch.Tensor, keys: torch.Tensor, values: torch.Tensor) -> torch.Tensor:
    """Scaled dot-product attention of one query over M key/value samples."""
    if q.shape[-1] != keys.shape[-1] or keys.shape != values.shape:
        raise DimensionMismatch("query/key/value widths disagree")
    d_k = q.shape[-1]
    logits = (keys @ q) / math.sqrt(d_k)
    weights = torch.softmax(logits, dim=-1)
    return weights @ values


def bilinear_sample(featmap: torch.Tensor, pts: torch.Tensor) -> torch.Tensor:
    """Sample (h, w, c) features at continuous pixel points (..., 2)."""
    h, w, _ = featmap.shape
    u = pts[..., 0].clamp(0.0, w - 1.0)
    v = pts[..., 1].clamp(0.0, h - 1.0)
    u0 = u.floor().clamp(max=w - 2.0)
    v0 = v.floor().clamp(max=h - 2.0)
    fu = (u - u0).unsqueeze(-1)
    fv = (v - v0).unsqueeze(-1)
    u0 = u0.long()
    v0 = v0.long()
    g00 = featmap[v0, u0]
    g01 = featmap[v0, u0 + 1]
    g10 = featmap[v0 + 1, u0]
    g11 = featmap[v0 + 1, u0 + 1]
    top = g00 * (1 - fu) + g01 * fu
    bot = g10 * (1 - fu) + g11 * fu
    return top * (1 - fv) + bot * fv


@dataclass
class AttentionWeights:
    """Projection matrices (c x c each) plus learned null key/value."""

    wq: torch.Tensor
    wk: torch.Tensor
    wv: torch.Tensor
    null_k: torch.Tensor
    null_v: torch.Tensor


def gather_epipolar_kv(
    target: torch.Tensor,
    F: FundamentalMatrix,
    p_prime: PixelPoint,
    m: int,
    weights: AttentionWeights,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Keys/values along the epipolar line of p' inside the target image.

    `target` is an (h, w, c) feature map. Propagates NoVisibleSegment (and
    the epipole-degenerate case) to the caller, which substitutes the
    learned null key/value pair.
    """
    h, w, _ = target.shape
    bounds = Intrinsics(fx=1.0, fy=1.0, cx=0.0, cy=0.0, width=w, height=h)
    line = epipolar_line(F, p_prime)
    pts = sample_epipolar(line, bounds, m)
    pts_t = torch.tensor(np.asarray(pts), dtype=target.dtype, device=target.device)
    feats = bilinear_sample(target, pts_t)
    return feats @ weights.wk, feats @ weights.wv


class PlanGeometry:
    """Per-plan epipolar geometry, evaluated lazily per feature resolution.

    Holds one (pose, intrinsics) pair per plan entry; fundamental matrices
    for every ordered pair are computed at each requested resolution with
    intrinsics rescaled under the pixel-center convention. Degenerate pairs
    (zero baseline) are flagged invalid and fall back to the null token.
    """

    def __init__(self, poses: list, intrinsics: list):
        if len(poses) != len(intrinsics):
            raise DimensionMismatch("one intrinsics per pose required")
        self.poses = poses
        self.intrinsics = intrinsics
        self._cache: dict = {}

    def __len__(self) -> int:
        return len(self.poses)

    def pairs(self):
        """Ordered pairs grouped by target image: [(src, tgt) for tgt ...]."""
        k = len(self.poses)
        return [(i, j) for j in range(k) for i in range(k) if i != j]

    def fundamentals(self, width: int, height: int, dtype, device):
        """(P, 3, 3) fundamental matrices and (P,) validity at a resolution."""
        key = (width, height, dtype)
        if key in self._cache:
            return self._cache[key]
        scaled = [i.scaled(width, height) for i in self.intrinsics]
        mats, valid = [], []
        for i, j in self.pairs():
            try:
                f = fundamental_matrix(self.poses[i], scaled[i], self.poses[j], scaled[j])
                mats.append(f.matrix)
                valid.append(True)
            except DegenerateGeometry:
                mats.append(np.zeros((3, 3)))
                valid.append(False)
        out = (
            torch.tensor(np.stack(mats), dtype=dtype, device=device),
            torch.tensor(valid, dtype=torch.bool, device=device),
        )
        self._cache[key] = out
        return out


def _clip_lines(lines: torch.Tensor, width: int, height: int):
    """Vectorized line clipping against [0, w-1] x [0, h-1].

    lines: (..., 3) un-normalized (a, b, c). Returns segment endpoints
    (..., 2) each and a validity mask. Mirrors geom.clip_line_to_rect.
    """
    a, b, c = lines[..., 0], lines[..., 1], lines[..., 2]
    norm = torch.sqrt(a * a + b * b)
    ok = norm > _EPS
    safe = torch.where(ok, norm, torch.ones_like(norm))
    a, b, c = a / safe, b / safe, c / safe
    p0 = torch.stack([-a * c, -b * c], dim=-1)
    d = torch.stack([b, -a], dim=-1)

    lo = torch.full_like(a, -torch.inf)
    hi = torch.full_like(a, torch.inf)
    for axis, bound in ((0, width - 1.0), (1, height - 1.0)):
        da = d[..., axis]
        pa = p0[..., axis]
        parallel = da.abs() <= _EPS
        d_safe = torch.where(parallel, torch.ones_like(da), da)
        s0 = (0.0 - pa) / d_safe
        s1 = (bound - pa) / d_safe
        smin = torch.minimum(s0, s1)
        smax = torch.maximum(s0, s1)
        inside = (pa >= -1e-9) & (pa <= bound + 1e-9)
        neg_inf = torch.full_like(da, -torch.inf)
        pos_inf = torch.full_like(da, torch.inf)
        smin = torch.where(parallel, torch.where(inside, neg_inf, pos_inf), smin)
        smax = torch.where(parallel, torch.where(inside, pos_inf, neg_inf), smax)
        lo = torch.maximum(lo, smin)
        hi = torch.minimum(hi, smax)

    valid = ok & (lo <= hi) & torch.isfinite(lo) & torch.isfinite(hi)
    zeros = torch.zeros_like(lo)
    lo = torch.where(valid, lo, zeros)
    hi = torch.where(valid, hi, zeros)
    start = p0 + lo.unsqueeze(-1) * d
    end = p0 + hi.unsqueeze(-1) * d
    return start, end, valid


def sample_segment_points(start: torch.Tensor, end: torch.Tensor, m: int) -> torch.Tensor:
    """(..., m, 2) points spaced uniformly along each segment."""
    if m == 1:
        ts = torch.tensor([0.5], dtype=start.dtype, device=start.device)
    else:
        ts = torch.linspace(0.0, 1.0, m, dtype=start.dtype, device=start.device)
    return start.unsqueeze(-2) + ts.view(-1, 1) * (end - start).unsqueeze(-2)


class CrossViewBlock(nn.Module):
    """Residual cross-view aggregation for all images of one sample plan."""

    def __init__(self, channels: int, state_dim: int, m_samples: int = 8, r_max: float = 4.0):
        super().__init__()
        self.channels = channels
        self.m_samples = m_samples
        self.offset = OffsetPredictor(channels, state_dim, r_max=r_max)
        self.wq = nn.Linear(channels, channels, bias=False)
        self.wk = nn.Linear(channels, channels, bias=False)
        self.wv = nn.Linear(channels, channels, bias=False)
        # learned fallbacks in raw feature space; projected by wk/wv on use
        self.null_key_feat = nn.Parameter(torch.zeros(channels))
        self.null_val_feat = nn.Parameter(torch.zeros(channels))
        self.out_proj = nn.Linear(channels, channels)
        nn.init.zeros_(self.out_proj.weight)
        nn.init.zeros_(self.out_proj.bias)

    def attention_weights(self) -> AttentionWeights:
        return AttentionWeights(
            wq=self.wq.weight.T,
            wk=self.wk.weight.T,
            wv=self.wv.weight.T,
            null_k=self.wk(self.null_key_feat),
            null_v=self.wv(self.null_val_feat),
        )

    def forward(
        self,
        feats: torch.Tensor,  # (K, C, h, w)
        geometry: PlanGeometry,
        state_pooled: torch.Tensor,  # (K, state_dim)
        motion_norms: torch.Tensor,  # (K,)
    ) -> torch.Tensor:
        k_img, c, h, w = feats.shape
        if len(geometry) != k_img:
            raise DimensionMismatch("one geometry entry per feature map required")
        if k_img < 2:
            return feats
        dtype, device = feats.dtype, feats.device
        q_count = h * w

        grid_v, grid_u = torch.meshgrid(
            torch.arange(h, dtype=dtype, device=device),
            torch.arange(w, dtype=dtype, device=device),
            indexing="ij",
        )
        base = torch.stack([grid_u, grid_v], dim=-1).reshape(q_count, 2)

        flat = feats.permute(0, 2, 3, 1).reshape(k_img, q_count, c)
        state_rep = state_pooled.unsqueeze(1).expand(k_img, q_count, state_pooled.shape[-1])
        offsets = self.offset(flat, state_rep, motion_norms.unsqueeze(-1))
        shifted = base.unsqueeze(0) + offsets  # (K, Q, 2)

        # query features sampled from the projected own map at the shifted point
        q_maps = self.wq(flat).reshape(k_img, h, w, c)
        q_vec = torch.stack(
            [bilinear_sample(q_maps[i], shifted[i]) for i in range(k_img)]
        )  # (K, Q, C)
        # fold wk into the query side: q . wk(f) == (wk^T q) . f, so only the
        # raw feature map needs sampling along the epipolar lines
        qk = q_vec @ self.wk.weight  # (K, Q, C)

        f_pairs, pair_valid = geometry.fundamentals(w, h, dtype, device)
        pairs = geometry.pairs()
        src = torch.tensor([i for i, _ in pairs], device=device)
        p = len(pairs)

        shifted_h = torch.cat([shifted, torch.ones_like(shifted[..., :1])], dim=-1)
        lines = torch.einsum("pab,pqb->pqa", f_pairs, shifted_h[src])
        start, end, seg_valid = _clip_lines(lines, w, h)
        pts = sample_segment_points(start, end, self.m_samples)  # (P, Q, M, 2)

        valid = seg_valid & pair_valid.unsqueeze(-1)  # (P, Q)

        # gather raw target features, pairs grouped by target image
        per_tgt = k_img - 1
        pts_by_tgt = pts.reshape(k_img, per_tgt * q_count * self.m_samples, 1, 2)
        denom = torch.tensor([max(w - 1, 1), max(h - 1, 1)], dtype=dtype, device=device)
        grid = pts_by_tgt / denom * 2.0 - 1.0
        sampled = nn.functional.grid_sample(
            feats, grid, mode="bilinear", padding_mode="border", align_corners=True
        )  # (K, C, per_tgt*Q*M, 1)
        sampled = (
            sampled.squeeze(-1)
            .transpose(1, 2)
            .reshape(k_img, per_tgt, q_count, self.m_samples, c)
            .reshape(p, q_count, self.m_samples, c)
            .contiguous()
        )

        logits = torch.einsum("pqmc,pqc->pqm", sampled, qk[src]) / math.sqrt(c)
        # invisible queries attend to the learned null key instead; with every
        # logit equal the weights are uniform and the value fixup below wins
        null_logit = (qk @ self.null_key_feat) / math.sqrt(c)  # (K, Q)
        logits = torch.where(valid.unsqueeze(-1), logits, null_logit[src].unsqueeze(-1))
        attn = torch.softmax(logits, dim=-1)
        gathered = torch.einsum("pqm,pqmc->pqc", attn, sampled)
        gathered = torch.where(
            valid.unsqueeze(-1), gathered, self.null_val_feat.view(1, 1, c)
        )

        agg = torch.zeros(k_img, q_count, c, dtype=dtype, device=device)
        agg.index_add_(0, src, gathered)
        # wv commutes with the average over partners and samples
        agg = self.wv(agg / float(per_tgt))

        delta = self.out_proj(agg).reshape(k_img, h, w, c).permute(0, 3, 1, 2)
        return feats + delta
