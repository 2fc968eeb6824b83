"""Run orchestration: dataset generation, training, evaluation, manifests."""

from __future__ import annotations

import dataclasses
import json
import time
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, config_to_dict
from .denoise import (
    NoiseSchedule,
    build_plan_inputs,
    make_latent_batch,
    make_schedule,
    plan_loss,
)
from .metrics import masked_psnr, psnr, ssim
from .synthdata import (
    CHECKER_TEXTURES,
    EditSpec,
    MotionSpec,
    ObjectSpec,
    apply_edit,
    desk_scene,
    generate_trajectory,
    load_dataset,
    write_dataset,
)
from .unet import Denoiser, DenoiserConfig
from .util import derive_seed
from .windows import WindowSpec, sample_window


class Manifest:
    """Append-only record of a run: config echo, timings, metrics, tickets."""

    def __init__(self, out_dir: Path, config: RunConfig):
        self.path = Path(out_dir) / "manifest.json"
        if self.path.exists():
            self.data = json.loads(self.path.read_text())
        else:
            self.data = {
                "package_version": __version__,
                "config": config_to_dict(config),
                "events": [],
            }

    def add(self, phase: str, **payload) -> None:
        self.data["events"].append({"phase": phase, "time": time.time(), **payload})
        self.save()

    def save(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(self.data, indent=1))


def default_edit_spec(seed: int) -> EditSpec:
    """Seeded scene edit: background swap plus a distractor in free space."""
    rng = np.random.default_rng(np.random.Philox(key=seed ^ 0xED17))
    textures = sorted(CHECKER_TEXTURES)
    if rng.uniform() < 0.5:
        background = textures[int(rng.integers(len(textures)))]
    else:
        background = tuple(rng.uniform(0.08, 0.5, size=3))
    distractor = ObjectSpec(
        id="distractor0",
        shape="box" if rng.uniform() < 0.5 else "sphere",
        center=(float(rng.uniform(-0.3, -0.15)), float(rng.uniform(0.2, 0.3)), 0.04),
        size=0.04,
        color=tuple(rng.uniform(0.15, 0.95, size=3)),
    )
    return EditSpec(background_override=background, add_distractors=(distractor,))


def trajectory_names(cfg: RunConfig) -> list:
    train = [f"train_{i:02}" for i in range(cfg.data.n_train)]
    holdout = [f"holdout_{i:02}" for i in range(cfg.data.n_holdout)]
    return train + holdout


def cmd_gen_data(cfg: RunConfig) -> Path:
    """Render original + ground-truth-edited trajectory pairs with masks."""
    root = Path(cfg.dataset_root)
    root.mkdir(parents=True, exist_ok=True)
    d = cfg.data
    motion = MotionSpec(blur_substeps=d.blur_substeps)
    names = trajectory_names(cfg)
    for idx, name in enumerate(names):
        traj_seed = derive_seed("trajectory", cfg.seed, idx)
        scene = desk_scene(traj_seed)
        traj, masks = generate_trajectory(scene, motion, T=d.T, N=d.N, H=d.H, W=d.W)
        edited_scene = apply_edit(scene, default_edit_spec(traj_seed))
        edited, _ = generate_trajectory(edited_scene, motion, T=d.T, N=d.N, H=d.H, W=d.W)
        base = root / name
        base.mkdir(exist_ok=True)
        echo = {"seed": traj_seed, "name": name, "trajectory_index": idx}
        write_dataset(base / "original", traj, masks, config_echo=echo)
        write_dataset(base / "edited", edited, None, config_echo={**echo, "variant": "edited"})
    manifest = {
        "package_version": __version__,
        "config": config_to_dict(cfg),
        "trajectories": names,
        # downstream policy training would replace 80% of originals with
        # edited variants; recorded here for provenance only
        "augmentation_mix": {"original": 0.2, "edited": 0.8},
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return root


class TrainingWorld:
    """All training trajectories resident in memory, original + edited."""

    def __init__(self, cfg: RunConfig):
        root = Path(cfg.dataset_root)
        if not (root / "manifest.json").exists():
            raise FileNotFoundError(f"dataset not found at {root}; run gen-data first")
        self.pairs = []
        for i in range(cfg.data.n_train):
            name = f"train_{i:02}"
            original, _, _ = load_dataset(root / name / "original")
            edited, _, _ = load_dataset(root / name / "edited")
            self.pairs.append((original, edited))

    def sample_batch_item(self, cfg: RunConfig, step: int, slot: int):
        """Deterministic (trajectory, variant, plan) draw for one batch slot."""
        rng = np.random.default_rng(
            np.random.Philox(key=derive_seed("train-draw", cfg.seed, step, slot))
        )
        traj_idx = int(rng.integers(len(self.pairs)))
        original, edited = self.pairs[traj_idx]
        use_edit = bool(rng.uniform() < 0.5)
        target = edited if use_edit else original
        current_t = int(rng.integers(1, target.T))
        spec = clamp_window(cfg.window, current_t, target.T, target.N)
        plan = sample_window(spec, current_t, int(rng.integers(2**62)))
        guidance = target.images[0, 0]
        images = [target.images[e.t, e.v] for e in plan.entries]
        return original, plan, guidance, images


def clamp_window(spec: WindowSpec, current_t: int, T: int, N: int) -> WindowSpec:
    """Shrink the future window near the end of a sequence."""
    l_future = max(1, min(spec.L_future, T - current_t))
    k_future = min(spec.K_future, l_future * N)
    return dataclasses.replace(spec, N=N, L_future=l_future, K_future=k_future)


def model_from_run_config(cfg: RunConfig) -> Denoiser:
    model_cfg = dataclasses.replace(
        cfg.model,
        image_size=cfg.data.H,
        dof=cfg.data.dof,
        t_max=max(cfg.model.t_max, cfg.data.T),
        n_views_max=max(cfg.model.n_views_max, cfg.data.N),
    )
    return Denoiser(model_cfg)


def schedule_from_config(cfg: RunConfig) -> NoiseSchedule:
    s = cfg.schedule
    return make_schedule(s.t_steps, s.beta_start, s.beta_end)


def save_model_checkpoint(path, cfg: RunConfig, model: Denoiser, optimizer=None, step: int = 0):
    echo = {
        "model": dataclasses.asdict(model.cfg),
        "schedule": dataclasses.asdict(cfg.schedule),
        "dof": model.cfg.dof,
        "seed": cfg.seed,
        "step": step,
    }
    tensors = {name: p.detach().cpu().numpy() for name, p in model.named_parameters()}
    if optimizer is not None:
        named = [n for n, _ in model.named_parameters()]
        state = optimizer.state_dict()["state"]
        for idx, name in enumerate(named):
            if idx not in state:
                continue
            tensors[f"opt.{name}.exp_avg"] = state[idx]["exp_avg"].numpy()
            tensors[f"opt.{name}.exp_avg_sq"] = state[idx]["exp_avg_sq"].numpy()
            tensors[f"opt.{name}.step"] = np.asarray(float(state[idx]["step"]))
    save_checkpoint(path, echo, tensors)


def load_model_checkpoint(path) -> tuple[Denoiser, dict, dict]:
    """Rebuild the denoiser (and return optimizer tensors) from a checkpoint."""
    echo, tensors = load_checkpoint(path)
    model_cfg = DenoiserConfig(
        **{**echo["model"], "level_widths": tuple(echo["model"]["level_widths"])}
    )
    model = Denoiser(model_cfg)
    state = {
        name: torch.from_numpy(tensors[name].copy())
        for name, _ in model.named_parameters()
        if name in tensors
    }
    missing = [n for n, _ in model.named_parameters() if n not in state]
    if missing:
        raise ValueError(f"checkpoint {path} is missing tensors: {missing[:3]}...")
    model.load_state_dict(state, strict=False)
    opt_tensors = {k: v for k, v in tensors.items() if k.startswith("opt.")}
    return model, echo, opt_tensors


def restore_optimizer(optimizer, model: Denoiser, opt_tensors: dict) -> None:
    named = [n for n, _ in model.named_parameters()]
    state = {}
    for idx, name in enumerate(named):
        key = f"opt.{name}.exp_avg"
        if key not in opt_tensors:
            continue
        state[idx] = {
            "step": torch.tensor(float(opt_tensors[f"opt.{name}.step"])),
            "exp_avg": torch.from_numpy(opt_tensors[key].copy()),
            "exp_avg_sq": torch.from_numpy(opt_tensors[f"opt.{name}.exp_avg_sq"].copy()),
        }
    sd = optimizer.state_dict()
    sd["state"] = state
    optimizer.load_state_dict(sd)


def cmd_train(cfg: RunConfig) -> Path:
    """Train the denoiser on the generated dataset; returns the checkpoint path."""
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out_dir, cfg)
    world = TrainingWorld(cfg)
    sched = schedule_from_config(cfg)

    start_step = 0
    if cfg.train.resume:
        model, echo, opt_tensors = load_model_checkpoint(cfg.train.resume)
        start_step = int(echo.get("step", 0))
    else:
        torch.manual_seed(derive_seed("init", cfg.seed))
        model = model_from_run_config(cfg)
        opt_tensors = {}
    optimizer = torch.optim.AdamW(
        model.parameters(), lr=cfg.train.lr, weight_decay=cfg.train.weight_decay
    )
    if opt_tensors:
        restore_optimizer(optimizer, model, opt_tensors)

    manifest.add("train-start", step=start_step, total_steps=cfg.train.steps)
    t0 = time.time()
    window_losses = []
    smoothed = None
    for step in range(start_step, cfg.train.steps):
        optimizer.zero_grad()
        step_loss = 0.0
        for slot in range(cfg.train.batch_size):
            states, plan, guidance, images = world.sample_batch_item(cfg, step, slot)
            inputs = build_plan_inputs(model, states, plan, guidance)
            batch = make_latent_batch(
                model, images, plan, sched, seed=derive_seed("noise", cfg.seed, step, slot)
            )
            loss = plan_loss(model, batch, inputs, sched) / cfg.train.batch_size
            loss.backward()
            step_loss += float(loss.item())
        optimizer.step()
        window_losses.append(step_loss)
        smoothed = step_loss if smoothed is None else 0.98 * smoothed + 0.02 * step_loss
        if (step + 1) % cfg.train.log_every == 0 or step == start_step:
            avg = float(np.mean(window_losses))
            window_losses = []
            elapsed = time.time() - t0
            print(
                f"step {step + 1}/{cfg.train.steps} loss {avg:.4f} "
                f"smoothed {smoothed:.4f} elapsed {elapsed:.0f}s",
                flush=True,
            )
            manifest.add("train-log", step=step + 1, loss=avg, smoothed=smoothed)

    ckpt_path = out_dir / cfg.train.checkpoint_name
    save_model_checkpoint(ckpt_path, cfg, model, optimizer, step=cfg.train.steps)
    manifest.add("train-done", checkpoint=str(ckpt_path), seconds=time.time() - t0)
    return ckpt_path


def dataset_report(candidate_dir, reference_dir, skip_frames=(), mask_dir_from_reference=True):
    """SSIM/PSNR between two dataset directories, plus masked PSNR if possible."""
    cand, _, meta = load_dataset(candidate_dir)
    ref, ref_masks, _ = load_dataset(reference_dir)
    if cand.images.shape != ref.images.shape:
        raise ValueError("datasets have different shapes")
    ssims, psnrs = [], []
    masked_sq, masked_n = 0.0, 0
    for t in range(ref.T):
        for v in range(ref.N):
            if (t, v) in skip_frames:
                continue
            a = ref.images[t, v]
            b = cand.images[t, v]
            ssims.append(ssim(a, b))
            psnrs.append(psnr(a, b))
            if ref_masks is not None:
                m = ref_masks.masks[t, v].astype(bool)
                if m.any():
                    diff = ((a - b) ** 2).mean(axis=-1)
                    masked_sq += float(diff[m].sum())
                    masked_n += int(m.sum())
    out = {
        "ssim": float(np.mean(ssims)),
        "psnr": float(np.mean(psnrs)),
        "n_images": len(ssims),
    }
    if masked_n:
        mse = masked_sq / masked_n
        out["masked_psnr"] = 99.0 if mse <= 0 else min(99.0, float(10 * np.log10(1.0 / mse)))
    return out


def cmd_eval(cfg: RunConfig, candidate: str, reference: str) -> dict:
    report = dataset_report(candidate, reference)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "eval.json").write_text(json.dumps(report, indent=1))
    return report
