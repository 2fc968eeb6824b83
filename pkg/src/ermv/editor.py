"""Autoregressive editing of a trajectory and world-model rollout commands."""

from __future__ import annotations

import dataclasses
import json
import time
from pathlib import Path

import numpy as np
import torch

from .config import RunConfig
from .denoise import AnchorSpec, rollout_world_model, sample_sequence, torch_image
from .feedback import CheckerConfig, TicketStore, mllm_check, oracle_check, run_feedback_loop
from .pipeline import (
    Manifest,
    clamp_window,
    dataset_report,
    load_model_checkpoint,
    schedule_from_config,
)
from .synthdata import GroundTruthMasks, Trajectory, load_dataset, read_image, write_dataset
from .util import derive_seed
from .windows import Memory, PlanEntry, SamplePlan, covering_plans


def checker_from_config(cfg: RunConfig, gt_masks: GroundTruthMasks | None):
    """Wire the configured checker strategy into a (orig, edited, t, v) callable."""
    section = cfg.checker
    if section.mode == "oracle":
        if gt_masks is None:
            raise ValueError("oracle checker needs ground-truth masks")

        def check(original, edited, t, v):
            return oracle_check(
                original, edited, gt_masks.masks[t, v], threshold=section.oracle_ssim_threshold
            )

        return check

    template = CheckerConfig().prompt_template
    if section.prompt_template_path:
        template = Path(section.prompt_template_path).read_text()
    ccfg = CheckerConfig(
        mode="external",
        endpoint=section.endpoint,
        prompt_template=template,
        oracle_ssim_threshold=section.oracle_ssim_threshold,
        retries=section.retries,
    )

    def check(original, edited, t, v):
        return mllm_check(original, edited, section.objects, ccfg)

    return check


def mask_source_from_config(cfg: RunConfig, gt_masks: GroundTruthMasks | None):
    mode = cfg.edit.mask_source
    if mode == "none":
        return None
    if mode == "gt":
        if gt_masks is None:
            raise ValueError("mask_source 'gt' needs ground-truth masks")
        return lambda t, v: gt_masks.masks[t, v]
    mask_dir = Path(mode)

    def from_dir(t, v):
        path = mask_dir / f"t{t:04}_v{v:02}.png"
        if not path.exists():
            return None
        from PIL import Image

        return (np.asarray(Image.open(path)) > 127).astype(np.uint8)

    return from_dir


class EditSession:
    """Sliding-window editing of one trajectory with the feedback loop."""

    def __init__(
        self,
        model,
        sched,
        states: Trajectory,
        guidance: np.ndarray,
        window,
        checker,
        mask_source,
        store: TicketStore,
        seed: int,
    ):
        self.model = model
        self.sched = sched
        self.states = states
        self.guidance = guidance
        self.window = dataclasses.replace(window, N=states.N)
        self.checker = checker
        self.mask_source = mask_source
        self.store = store
        self.seed = seed
        self.memory = Memory(L_hist=window.L_hist)
        self.output = np.zeros_like(states.images)
        self.accepted = np.zeros((states.T, states.N), dtype=bool)

    def regenerate_frame(self, t: int, v: int, mask: np.ndarray, attempt: int = 0) -> np.ndarray:
        """Mask-conditioned single-frame regeneration anchored to the source.

        Seeded by (run seed, frame, attempt) only, so the review-service path
        and the file-based mask path repair a frame identically.
        """
        hist_keys = [k for k in self.memory.keys() if k != (t, v)]
        entries = [PlanEntry(ht, hv, "history") for ht, hv in hist_keys[-self.window.K_hist :]]
        entries.append(PlanEntry(t, v, "future"))
        plan = SamplePlan(entries=tuple(entries), seed=0)
        dtype = next(self.model.parameters()).dtype
        anchor = AnchorSpec(
            image=torch_image(self.states.images[t, v], dtype, "cpu"),
            mask=torch.as_tensor(np.asarray(mask), dtype=dtype)[None],
        )
        ticketed = sample_sequence(
            self.model,
            self.states,
            plan,
            self.guidance,
            self.memory,
            self.sched,
            seed=derive_seed("regen", self.seed, t, v, attempt),
            correction_anchors={(t, v): anchor},
        )
        return ticketed[(t, v)]

    def resolve_tickets_batch(self, tickets: list, masks: dict) -> dict:
        """Repair several ticketed frames in one joint sampling pass.

        Every ticketed frame gets its own inpainting anchor; the shared plan
        keeps the cost of a correction round near one chunk's worth instead
        of one full pass per frame. Returns the frames accepted on re-check.
        """
        dtype = next(self.model.parameters()).dtype
        repaired: dict = {}
        frames = sorted((tk.t, tk.v) for tk in tickets)
        by_frame = {(tk.t, tk.v): tk for tk in tickets}
        for start in range(0, len(frames), self.window.K_future):
            group = frames[start : start + self.window.K_future]
            hist_keys = [k for k in self.memory.keys() if k not in group]
            entries = [PlanEntry(ht, hv, "history") for ht, hv in hist_keys[-self.window.K_hist :]]
            entries += [PlanEntry(t, v, "future") for t, v in group]
            plan = SamplePlan(entries=tuple(entries), seed=0)
            anchors = {}
            for t, v in group:
                ticket = by_frame[(t, v)]
                self.store.set_mask(ticket.ticket_id, masks[(t, v)])
                anchors[(t, v)] = AnchorSpec(
                    image=torch_image(self.states.images[t, v], dtype, "cpu"),
                    mask=torch.as_tensor(np.asarray(masks[(t, v)]) > 0, dtype=dtype)[None],
                )
            attempts = tuple(by_frame[f].attempt for f in group)
            generated = sample_sequence(
                self.model,
                self.states,
                plan,
                self.guidance,
                self.memory,
                self.sched,
                seed=derive_seed("regen-batch", self.seed, tuple(group), attempts),
                correction_anchors=anchors,
            )
            for t, v in group:
                ticket = by_frame[(t, v)]
                corrected = generated[(t, v)]
                recheck = self.checker(self.states.images[t, v], corrected, t, v)
                self.store.mark_regenerated(ticket.ticket_id, recheck)
                if recheck.is_consistent:
                    self.store.accept(ticket.ticket_id)
                    repaired[(t, v)] = corrected
                else:
                    self.store.new_ticket(t, v, recheck, attempt=ticket.attempt + 1)
        return repaired

    def _process_chunk(self, plan: SamplePlan, current_t: int, chunk_seed: int):
        generated = sample_sequence(
            self.model, self.states, plan, self.guidance, self.memory, self.sched, seed=chunk_seed
        )
        future_only = {
            (e.t, e.v): generated[(e.t, e.v)] for e in plan.entries if e.role == "future"
        }
        outcome = run_feedback_loop(
            future_only,
            lambda t, v: self.states.images[t, v],
            self.checker,
            self.store,
        )
        if outcome.tickets and self.mask_source is not None:
            masks = {}
            resolvable = []
            for ticket in outcome.tickets:
                mask = self.mask_source(ticket.t, ticket.v)
                if mask is not None:
                    masks[(ticket.t, ticket.v)] = mask
                    resolvable.append(ticket)
            outcome.accepted.update(self.resolve_tickets_batch(resolvable, masks))
        for (t, v), img in future_only.items():
            self.output[t, v] = outcome.accepted.get((t, v), img)
        for (t, v), img in outcome.accepted.items():
            self.accepted[t, v] = True
        self.memory.advance(
            [(t, v, img) for (t, v), img in sorted(outcome.accepted.items())], current_t
        )
        return outcome

    def run(self) -> dict:
        T, N = self.states.T, self.states.N
        # the user-edited head frame is adopted as-is
        self.output[0, 0] = self.guidance
        self.accepted[0, 0] = True
        self.memory.advance([(0, 0, self.guidance)], current_t=1)

        stats = {"tickets": 0, "frames": 0}
        # bootstrap: remaining views of the first timestep, guided by (0, 0)
        other_views = [v for v in range(1, N)]
        for start in range(0, len(other_views), self.window.K_future):
            chunk = other_views[start : start + self.window.K_future]
            entries = [PlanEntry(0, 0, "history")] + [PlanEntry(0, v, "future") for v in chunk]
            plan = SamplePlan(entries=tuple(entries), seed=0)
            outcome = self._process_chunk(plan, 1, derive_seed("bootstrap", self.seed, start))
            stats["tickets"] += len(outcome.tickets)
            stats["frames"] += len(chunk)

        current_t = 1
        while current_t < T:
            span = max(1, min(self.window.L_future, T - current_t))
            spec = clamp_window(self.window, current_t, T, N)
            plans = covering_plans(
                spec,
                current_t,
                t_count=current_t + span,
                memory_keys=self.memory.keys(),
                rng_seed=derive_seed("edit-window", self.seed, current_t),
            )
            for ci, plan in enumerate(plans):
                outcome = self._process_chunk(
                    plan, current_t, derive_seed("edit-chunk", self.seed, current_t, ci)
                )
                stats["tickets"] += len(outcome.tickets)
                stats["frames"] += len(plan.future)
            current_t += span
            self.memory.advance([], current_t)
        return stats


def _resolve_guidance(cfg: RunConfig, base: Path) -> np.ndarray:
    if cfg.edit.guidance:
        return read_image(Path(cfg.edit.guidance))
    variant = cfg.edit.variant
    ref, _, _ = load_dataset(base / variant)
    return ref.images[0, 0]


def cmd_edit(cfg: RunConfig, checkpoint: str | Path | None = None) -> dict:
    """Edit one trajectory end to end; writes frames, tickets, and metrics."""
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out_dir, cfg)
    ckpt = Path(checkpoint) if checkpoint else out_dir / cfg.train.checkpoint_name
    model, echo, _ = load_model_checkpoint(ckpt)
    model.eval()
    sched = schedule_from_config(cfg)

    base = Path(cfg.dataset_root) / cfg.edit.trajectory
    states, gt_masks, _ = load_dataset(base / "original")
    guidance = _resolve_guidance(cfg, base)

    store = TicketStore(path=out_dir / "tickets.json")
    session = EditSession(
        model=model,
        sched=sched,
        states=states,
        guidance=guidance,
        window=cfg.window,
        checker=checker_from_config(cfg, gt_masks),
        mask_source=mask_source_from_config(cfg, gt_masks),
        store=store,
        seed=derive_seed("edit", cfg.seed, cfg.edit.seed),
    )
    t0 = time.time()
    stats = session.run()
    edited = Trajectory(
        images=session.output,
        poses=states.poses,
        intrinsics=states.intrinsics,
        q=states.q,
        actions=states.actions,
    )
    out_ds = out_dir / "edited_output"
    write_dataset(out_ds, edited, None, config_echo={"source": str(base), "kind": "edited"})

    report = {}
    gt_dir = base / cfg.edit.variant
    if (gt_dir / "meta.json").exists():
        # the adopted guidance frame is an input, not a model output
        report = dataset_report(out_ds, gt_dir, skip_frames={(0, 0)})
        # masked PSNR should be measured against the mask-bearing original dir
        masked = dataset_report(out_ds, base / "original", skip_frames={(0, 0)})
        if "masked_psnr" in masked and cfg.edit.variant != "original":
            report["masked_psnr_vs_original"] = masked["masked_psnr"]
        (out_dir / "edit_metrics.json").write_text(json.dumps(report, indent=1))
    manifest.add(
        "edit-done", seconds=time.time() - t0, stats=stats, metrics=report, output=str(out_ds)
    )
    return {"stats": stats, "metrics": report, "output": str(out_ds), "store": store}


def load_actions(path: Path) -> np.ndarray:
    data = json.loads(Path(path).read_text())
    return np.asarray(data["actions"], dtype=np.float64)


def cmd_rollout(cfg: RunConfig, checkpoint: str | Path | None = None) -> dict:
    """World-model rollout from the first frame with a given action sequence."""
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out_dir, cfg)
    ckpt = Path(checkpoint) if checkpoint else out_dir / cfg.train.checkpoint_name
    model, _, _ = load_model_checkpoint(ckpt)
    model.eval()
    sched = schedule_from_config(cfg)

    base = Path(cfg.dataset_root) / cfg.rollout.trajectory
    states, _, _ = load_dataset(base / "original")
    if cfg.rollout.actions:
        actions = load_actions(Path(cfg.rollout.actions))
    else:
        actions = states.actions[: states.T - 1]
    if len(actions) != states.T - 1:
        raise ValueError(
            f"action count {len(actions)} does not match T-1 = {states.T - 1}"
        )
    if not np.allclose(states.q[1:], states.q[:-1] + actions, atol=1e-9):
        raise ValueError("actions are inconsistent with the trajectory's joint states")

    spec = dataclasses.replace(cfg.window, N=states.N)
    t0 = time.time()
    out = rollout_world_model(
        model,
        states,
        states.images[0],
        actions,
        spec,
        sched,
        seed=derive_seed("rollout", cfg.seed, cfg.rollout.seed),
    )
    rolled = Trajectory(
        images=out, poses=states.poses, intrinsics=states.intrinsics, q=states.q, actions=states.actions
    )
    out_ds = out_dir / "rollout_output"
    write_dataset(out_ds, rolled, None, config_echo={"source": str(base), "kind": "rollout"})
    skip = {(0, v) for v in range(states.N)}  # given, not generated
    report = dataset_report(out_ds, base / "original", skip_frames=skip)
    (out_dir / "rollout_metrics.json").write_text(json.dumps(report, indent=1))
    manifest.add("rollout-done", seconds=time.time() - t0, metrics=report, output=str(out_ds))
    return {"metrics": report, "output": str(out_ds)}
