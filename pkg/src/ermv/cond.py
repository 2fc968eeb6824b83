"""Conditioning signals: state/motion vectors, guidance tokens, index embeddings.

Every encoder here is a small trainable torch module; all of them are pure
and deterministic given their parameters, and differentiable end to end.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .geom import CameraPose, se3_delta


class DimensionMismatch(ValueError):
    pass


class BadShape(ValueError):
    pass


class IndexOutOfRange(IndexError):
    pass


@dataclass
class StateVector:
    """Flattened [pose (12), q (d), pose delta (12), q delta (d)]."""

    values: np.ndarray
    dof: int

    def __post_init__(self):
        expected = 24 + 2 * self.dof
        if self.values.shape != (expected,):
            raise DimensionMismatch(
                f"state vector must have length {expected}, got {self.values.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("state vector contains non-finite entries")

    @property
    def delta_translation(self) -> np.ndarray:
        off = 12 + self.dof + 9
        return self.values[off : off + 3]

    @property
    def delta_q(self) -> np.ndarray:
        return self.values[24 + self.dof :]

    @property
    def motion_norm(self) -> float:
        return float(np.linalg.norm(np.concatenate([self.delta_translation, self.delta_q])))


def flatten_pose(pose: CameraPose) -> np.ndarray:
    return np.concatenate([pose.rotation.reshape(9), pose.translation])


def build_state_vector(
    pose: CameraPose,
    q: np.ndarray,
    prev_pose: CameraPose | None,
    prev_q: np.ndarray | None,
) -> StateVector:
    """Assemble the per-image state vector; deltas are zero at the first frame."""
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    d = q.shape[0]
    if prev_pose is None or prev_q is None:
        # first frame: no predecessor, so the delta is the identity transform
        delta_p = _identity_relative()
        delta_q = np.zeros(d)
    else:
        prev_q = np.asarray(prev_q, dtype=np.float64).reshape(-1)
        if prev_q.shape[0] != d:
            raise DimensionMismatch(f"q has dof {d} but prev_q has {prev_q.shape[0]}")
        delta_p = se3_delta(pose, prev_pose)
        delta_q = q - prev_q
    values = np.concatenate([flatten_pose(pose), q, delta_p, delta_q])
    return StateVector(values=values, dof=d)


def _identity_relative() -> np.ndarray:
    return np.concatenate([np.eye(3).reshape(9), np.zeros(3)])


def positional_encoding(x, dims: int) -> np.ndarray:
    """Sinusoidal encoding with interleaved (sin, cos) per frequency.

    Frequencies follow 10000^(-i/k) for i = 0..k-1 with dims = 2k. A scalar
    input returns a (dims,) vector; an array input gains a trailing axis.
    """
    if dims % 2 != 0 or dims < 2:
        raise ValueError("dims must be a positive even number")
    x = np.asarray(x, dtype=np.float64)
    k = dims // 2
    freqs = 10000.0 ** (-np.arange(k) / k)
    angles = x[..., None] * freqs
    out = np.empty(x.shape + (dims,))
    out[..., 0::2] = np.sin(angles)
    out[..., 1::2] = np.cos(angles)
    return out


def positional_encoding_t(x: torch.Tensor, dims: int) -> torch.Tensor:
    """Torch twin of positional_encoding (differentiable in x)."""
    k = dims // 2
    freqs = 10000.0 ** (-torch.arange(k, dtype=x.dtype, device=x.device) / k)
    angles = x.unsqueeze(-1) * freqs
    out = torch.stack([torch.sin(angles), torch.cos(angles)], dim=-1)
    return out.reshape(*x.shape, dims)


class StateEncoder(nn.Module):
    """MLP + sinusoidal lift mapping a state vector to S tokens of width c."""

    def __init__(self, dof: int, tokens: int = 4, width: int = 64, hidden: int = 64, pe_dims: int = 8):
        super().__init__()
        if (tokens * width) % pe_dims != 0:
            raise ValueError("tokens*width must be divisible by pe_dims")
        self.dof = dof
        self.tokens = tokens
        self.width = width
        self.pe_dims = pe_dims
        in_dim = 24 + 2 * dof
        self.mlp = nn.Sequential(
            nn.Linear(in_dim, hidden),
            nn.SiLU(),
            nn.Linear(hidden, tokens * width // pe_dims),
        )

    def forward(self, state: torch.Tensor) -> torch.Tensor:
        if state.shape[-1] != 24 + 2 * self.dof:
            raise DimensionMismatch(
                f"expected state length {24 + 2 * self.dof}, got {state.shape[-1]}"
            )
        h = self.mlp(state)
        lifted = positional_encoding_t(h, self.pe_dims)
        return lifted.reshape(*state.shape[:-1], self.tokens, self.width)


class GuidanceEncoder(nn.Module):
    """Trainable 8x8 patch embedding of the edited reference frame."""

    def __init__(self, width: int = 64, patch: int = 8):
        super().__init__()
        self.patch = patch
        self.width = width
        self.proj = nn.Linear(patch * patch * 3, width)

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        """(H, W, 3) image in [0, 1] -> (G, width) tokens, G = (H/8)*(W/8)."""
        if image.ndim != 3 or image.shape[-1] != 3:
            raise BadShape(f"expected HxWx3 image, got {tuple(image.shape)}")
        h, w, _ = image.shape
        p = self.patch
        if h % p or w % p:
            raise BadShape(f"image size {h}x{w} not divisible by patch {p}")
        tiles = image.reshape(h // p, p, w // p, p, 3).permute(0, 2, 1, 3, 4)
        flat = tiles.reshape(h // p * (w // p), p * p * 3)
        return self.proj(flat)


class IndexEncoder(nn.Module):
    """Sum of a timestep embedding and a view embedding."""

    def __init__(self, t_max: int, n_views: int, width: int = 64):
        super().__init__()
        self.t_max = t_max
        self.n_views = n_views
        self.time_table = nn.Parameter(torch.randn(t_max, width) * 0.02)
        self.view_table = nn.Parameter(torch.randn(n_views, width) * 0.02)

    def forward(self, t: int, v: int) -> torch.Tensor:
        if not (0 <= t < self.t_max):
            raise IndexOutOfRange(f"timestep {t} outside [0, {self.t_max})")
        if not (0 <= v < self.n_views):
            raise IndexOutOfRange(f"view {v} outside [0, {self.n_views})")
        return self.time_table[t] + self.view_table[v]


class ConditionEncoders(nn.Module):
    """All trainable conditioning encoders bundled for the denoiser."""

    def __init__(self, dof: int, t_max: int = 64, n_views: int = 8, width: int = 64,
                 state_tokens: int = 4):
        super().__init__()
        self.width = width
        self.state = StateEncoder(dof, tokens=state_tokens, width=width)
        self.guidance = GuidanceEncoder(width=width)
        self.index = IndexEncoder(t_max, n_views, width=width)


@dataclass
class ConditionBundle:
    """Per-plan conditioning: guidance plus per-entry state/index/mask."""

    guidance_tokens: torch.Tensor  # (G, c)
    state_tokens: torch.Tensor  # (K, S, c)
    index_embeddings: torch.Tensor  # (K, c)
    motion_norms: torch.Tensor  # (K,) gate input per entry
    history_flags: list = field(default_factory=list)  # (K,) bools
    mask_channels: torch.Tensor | None = None  # (K, H, W) binary or None

    def __post_init__(self):
        c = self.guidance_tokens.shape[-1]
        if self.state_tokens.shape[-1] != c or self.index_embeddings.shape[-1] != c:
            raise DimensionMismatch("token width differs across bundle components")
        k = self.state_tokens.shape[0]
        if len(self.history_flags) != k or self.index_embeddings.shape[0] != k:
            raise DimensionMismatch("per-entry component counts differ")

    @property
    def n_entries(self) -> int:
        return self.state_tokens.shape[0]


def build_condition_bundle(
    encoders: ConditionEncoders,
    guidance_image: torch.Tensor,
    entries: list,
    mask_channels: torch.Tensor | None = None,
) -> ConditionBundle:
    """Encode conditioning for plan entries.

    Each entry is a dict with keys pose, q, prev_pose, prev_q, t, v, history.
    """
    device = next(encoders.parameters()).device
    dtype = next(encoders.parameters()).dtype
    states, norms = [], []
    for e in entries:
        sv = build_state_vector(e["pose"], e["q"], e.get("prev_pose"), e.get("prev_q"))
        states.append(torch.as_tensor(sv.values, dtype=dtype, device=device))
        norms.append(sv.motion_norm)
    state_tokens = encoders.state(torch.stack(states))
    index_embeddings = torch.stack([encoders.index(e["t"], e["v"]) for e in entries])
    return ConditionBundle(
        guidance_tokens=encoders.guidance(guidance_image.to(dtype=dtype, device=device)),
        state_tokens=state_tokens,
        index_embeddings=index_embeddings,
        motion_norms=torch.tensor(norms, dtype=dtype, device=device),
        history_flags=[bool(e["history"]) for e in entries],
        mask_channels=mask_channels,
    )
