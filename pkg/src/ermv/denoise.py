"""Diffusion core: noise schedule, forward noising, training loss, sampling.

The latent space is the 64x64 pixel space itself (identity encoder/decoder
at this scale); latents carry a 4th mask plane for corrective regeneration.
History-role entries are re-anchored to their known images at every reverse
step, so accepted context frames steer the jointly generated future frames.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .cond import ConditionBundle, build_condition_bundle
from .epiattn import PlanGeometry
from .unet import AlignmentError, Denoiser
from .util import derive_seed
from .windows import Memory, SamplePlan, WindowSpec, covering_plans


class InvalidRange(ValueError):
    pass


class BadTimestep(ValueError):
    pass


class MissingHistory(KeyError):
    pass


@dataclass(frozen=True)
class NoiseSchedule:
    """Linear beta ramp with cached cumulative products (1-based timesteps)."""

    betas: np.ndarray

    @property
    def T_steps(self) -> int:
        return len(self.betas)

    @property
    def alphas(self) -> np.ndarray:
        return 1.0 - self.betas

    @property
    def alpha_bars(self) -> np.ndarray:
        return np.cumprod(self.alphas)

    def alpha_bar(self, t: int) -> float:
        if not 1 <= t <= self.T_steps:
            raise BadTimestep(f"timestep {t} outside [1, {self.T_steps}]")
        return float(self.alpha_bars[t - 1])


def make_schedule(t_steps: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    if t_steps < 1:
        raise InvalidRange("t_steps must be >= 1")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise InvalidRange("need 0 < beta_start <= beta_end < 1")
    return NoiseSchedule(betas=np.linspace(beta_start, beta_end, t_steps))


def default_schedule() -> NoiseSchedule:
    # beta_end chosen so the terminal signal level alpha_bar_T stays below
    # 0.05, keeping ancestral sampling from pure noise well posed
    return make_schedule(200, 1e-4, 0.035)


def q_sample(z0: torch.Tensor, t_diff, eps: torch.Tensor, sched: NoiseSchedule) -> torch.Tensor:
    """Closed-form forward noising z_t = sqrt(ab_t) z0 + sqrt(1 - ab_t) eps."""
    if z0.shape != eps.shape:
        raise AlignmentError("z0 and eps shapes differ")
    if isinstance(t_diff, int):
        ab = torch.tensor(sched.alpha_bar(t_diff), dtype=z0.dtype, device=z0.device)
    else:
        t = torch.as_tensor(t_diff)
        if torch.any(t < 1) or torch.any(t > sched.T_steps):
            raise BadTimestep(f"timesteps outside [1, {sched.T_steps}]")
        bars = torch.as_tensor(sched.alpha_bars, dtype=z0.dtype, device=z0.device)
        ab = bars[t.long() - 1].reshape(-1, *([1] * (z0.ndim - 1)))
    return torch.sqrt(ab) * z0 + torch.sqrt(1.0 - ab) * eps


@dataclass
class LatentBatch:
    """Per plan entry: clean latent, mask plane, timestep, target noise."""

    z0: torch.Tensor  # (K, 3, H, W)
    mask_plane: torch.Tensor  # (K, 1, H, W)
    t_diff: torch.Tensor  # (K,)
    noise: torch.Tensor  # (K, 3, H, W)


@dataclass
class PlanInputs:
    """Everything the denoiser needs for one plan, minus the latents."""

    plan: SamplePlan
    bundle: ConditionBundle
    geometry: PlanGeometry


def torch_image(img: np.ndarray, dtype, device) -> torch.Tensor:
    """(H, W, 3) numpy image -> (3, H, W) tensor."""
    return torch.as_tensor(img, dtype=dtype, device=device).permute(2, 0, 1)


def build_plan_inputs(
    model: Denoiser,
    states,
    plan: SamplePlan,
    guidance_image: np.ndarray,
    mask_channels: torch.Tensor | None = None,
) -> PlanInputs:
    """Assemble conditioning and geometry for the entries of a plan.

    `states` provides poses/intrinsics/q indexed like a Trajectory; images
    are not touched here.
    """
    dtype = next(model.parameters()).dtype
    device = next(model.parameters()).device
    with_motion = model.cfg.motion_conditioning
    entries = []
    for e in plan.entries:
        prev_t = e.t - 1 if with_motion else -1
        entries.append(
            {
                "pose": states.poses[e.t][e.v],
                "q": states.q[e.t],
                "prev_pose": states.poses[prev_t][e.v] if prev_t >= 0 else None,
                "prev_q": states.q[prev_t] if prev_t >= 0 else None,
                "t": e.t,
                "v": e.v,
                "history": e.role == "history",
            }
        )
    bundle = build_condition_bundle(
        model.encoders,
        torch.as_tensor(guidance_image, dtype=dtype, device=device),
        entries,
        mask_channels=mask_channels,
    )
    geometry = PlanGeometry(
        [states.poses[e.t][e.v] for e in plan.entries],
        [states.intrinsics[e.v] for e in plan.entries],
    )
    return PlanInputs(plan=plan, bundle=bundle, geometry=geometry)


def denoiser_forward(
    model: Denoiser, batch: LatentBatch, inputs: PlanInputs, sched: NoiseSchedule
) -> torch.Tensor:
    """Predicted noise for every entry of the noised batch."""
    z_t = q_sample(batch.z0, batch.t_diff, batch.noise, sched)
    latents = torch.cat([z_t, batch.mask_plane], dim=1)
    return model(latents, batch.t_diff, inputs.bundle, inputs.geometry)


def plan_loss(
    model: Denoiser, batch: LatentBatch, inputs: PlanInputs, sched: NoiseSchedule
) -> torch.Tensor:
    eps_hat = denoiser_forward(model, batch, inputs, sched)
    return torch.mean((eps_hat - batch.noise) ** 2)


def make_latent_batch(
    model: Denoiser,
    target_images: list,
    plan: SamplePlan,
    sched: NoiseSchedule,
    seed: int,
    mask_planes: torch.Tensor | None = None,
    shared_t: bool = True,
) -> LatentBatch:
    """Noise targets and timesteps for a plan, deterministic per seed."""
    dtype = next(model.parameters()).dtype
    device = next(model.parameters()).device
    gen = torch.Generator(device="cpu").manual_seed(derive_seed("batch", seed))
    k = len(plan.entries)
    z0 = torch.stack([torch_image(img, dtype, device) for img in target_images])
    if shared_t:
        t_val = int(torch.randint(1, sched.T_steps + 1, (1,), generator=gen).item())
        t_diff = torch.full((k,), t_val, dtype=torch.long)
    else:
        t_diff = torch.randint(1, sched.T_steps + 1, (k,), generator=gen)
    noise = torch.randn(z0.shape, generator=gen, dtype=dtype)
    if mask_planes is None:
        mask_planes = torch.zeros(k, 1, *z0.shape[-2:], dtype=dtype)
    return LatentBatch(z0=z0, mask_plane=mask_planes, t_diff=t_diff, noise=noise)


def training_step(
    model: Denoiser,
    states,
    target_images: list,
    guidance_image: np.ndarray,
    plan: SamplePlan,
    sched: NoiseSchedule,
    seed: int,
) -> tuple[float, dict]:
    """Eq-style noise-prediction loss and its gradient over all parameters."""
    inputs = build_plan_inputs(model, states, plan, guidance_image)
    batch = make_latent_batch(model, target_images, plan, sched, seed)
    loss = plan_loss(model, batch, inputs, sched)
    names, params = zip(*[(n, p) for n, p in model.named_parameters() if p.requires_grad])
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    grad_map = {n: g for n, g in zip(names, grads)}
    return float(loss.item()), grad_map


@dataclass
class AnchorSpec:
    """Reverse-step re-anchoring: where mask is set, z_t tracks q_sample(image)."""

    image: torch.Tensor  # (3, H, W)
    mask: torch.Tensor  # (1, H, W) in [0, 1]


def sample_sequence(
    model: Denoiser,
    states,
    plan: SamplePlan,
    guidance_image: np.ndarray,
    memory: Memory,
    sched: NoiseSchedule,
    seed: int,
    correction_anchors: dict | None = None,
) -> dict:
    """Ancestral reverse diffusion for the plan; returns {(t, v): image}.

    History entries must exist in memory; their latents are re-anchored to
    the known images at every step. `correction_anchors` optionally maps
    (t, v) to an AnchorSpec realizing mask-conditioned regeneration.
    """
    dtype = next(model.parameters()).dtype
    device = next(model.parameters()).device
    k = len(plan.entries)
    h = w = model.cfg.image_size
    correction_anchors = correction_anchors or {}

    anchors: list[AnchorSpec | None] = []
    mask_planes = torch.zeros(k, 1, h, w, dtype=dtype, device=device)
    for idx, e in enumerate(plan.entries):
        key = (e.t, e.v)
        if e.role == "history":
            img = memory.get(e.t, e.v)
            if img is None:
                raise MissingHistory(f"memory lacks history frame {key}")
            anchors.append(
                AnchorSpec(image=torch_image(img, dtype, device), mask=torch.ones(1, h, w, dtype=dtype))
            )
        elif key in correction_anchors:
            spec = correction_anchors[key]
            anchors.append(spec)
            mask_planes[idx] = spec.mask
        else:
            anchors.append(None)

    inputs = build_plan_inputs(model, states, plan, guidance_image, mask_channels=mask_planes)
    gen = torch.Generator(device="cpu").manual_seed(derive_seed("sample", seed))

    alphas = torch.as_tensor(sched.alphas, dtype=dtype)
    bars = torch.as_tensor(sched.alpha_bars, dtype=dtype)
    betas = torch.as_tensor(sched.betas, dtype=dtype)

    z = torch.randn(k, 3, h, w, generator=gen, dtype=dtype)
    with torch.no_grad():
        for t in range(sched.T_steps, 0, -1):
            for idx, spec in enumerate(anchors):
                if spec is not None:
                    noise = torch.randn(3, h, w, generator=gen, dtype=dtype)
                    z_known = q_sample(spec.image, t, noise, sched)
                    z[idx] = spec.mask * z_known + (1.0 - spec.mask) * z[idx]
            t_vec = torch.full((k,), t, dtype=torch.long)
            latents = torch.cat([z, mask_planes], dim=1)
            eps_hat = model(latents, t_vec, inputs.bundle, inputs.geometry)
            ab_t = bars[t - 1]
            coef = betas[t - 1] / torch.sqrt(1.0 - ab_t)
            mean = (z - coef * eps_hat) / torch.sqrt(alphas[t - 1])
            if t > 1:
                ab_prev = bars[t - 2]
                var = (1.0 - ab_prev) / (1.0 - ab_t) * betas[t - 1]
                noise = torch.randn(z.shape, generator=gen, dtype=dtype)
                z = mean + torch.sqrt(var) * noise
            else:
                z = mean
    z = z.clamp(0.0, 1.0)
    return {
        (e.t, e.v): z[i].permute(1, 2, 0).numpy().astype(np.float64)
        for i, e in enumerate(plan.entries)
    }


def rollout_world_model(
    model: Denoiser,
    states,
    first_frames: np.ndarray,  # (N, H, W, 3) images at t = 0
    actions: np.ndarray,  # (T-1, d)
    window_spec: WindowSpec,
    sched: NoiseSchedule,
    seed: int,
) -> np.ndarray:
    """Generate the full T x N sequence from the first frame and actions.

    `states` supplies poses/intrinsics for all T timesteps and q derived
    from the actions; outputs are fed back into memory window by window.
    """
    n_views = first_frames.shape[0]
    T = len(actions) + 1
    if T == 1:
        return first_frames[None].copy()
    h, w = first_frames.shape[1:3]
    out = np.zeros((T, n_views, h, w, 3))
    out[0] = first_frames

    guidance = first_frames[0]
    memory = Memory(L_hist=window_spec.L_hist)
    memory.advance([(0, v, first_frames[v]) for v in range(n_views)], current_t=1)

    current_t = 1
    while current_t < T:
        span = min(window_spec.L_future, T - current_t)
        plans = covering_plans(
            window_spec,
            current_t,
            t_count=min(current_t + span, T),
            memory_keys=memory.keys(),
            rng_seed=derive_seed("rollout", seed, current_t),
        )
        for ci, plan in enumerate(plans):
            images = sample_sequence(
                model,
                states,
                plan,
                guidance,
                memory,
                sched,
                seed=derive_seed("rollout-chunk", seed, current_t, ci),
            )
            accepted = [(t, v, images[(t, v)]) for (t, v) in sorted(images) if (t, v) not in memory]
            for t, v, img in accepted:
                out[t, v] = img
            memory.advance(accepted, current_t=current_t)
        current_t += span
        memory.advance([], current_t=current_t)
    return out
