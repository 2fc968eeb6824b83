"""Sparse spatio-temporal sampling over a sliding (time x view) window.

A window at `current_t` spans L_hist frames of history strictly before
current_t and L_future frames starting at current_t. Plans draw K_hist and
K_future images uniformly without replacement from each role; early in a
sequence, history is drawn only from the frames that actually exist.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InvalidSpec(ValueError):
    pass


class StaleFrame(ValueError):
    pass


@dataclass(frozen=True)
class WindowSpec:
    L_hist: int = 8
    L_future: int = 8
    N: int = 6
    K_hist: int = 4
    K_future: int = 6

    def __post_init__(self):
        if self.L_hist < 1 or self.L_future < 1 or self.N < 1:
            raise InvalidSpec("window dimensions must be positive")
        if not (1 <= self.K_hist <= self.L_hist * self.N):
            raise InvalidSpec(f"K_hist must be in [1, {self.L_hist * self.N}]")
        if not (1 <= self.K_future <= self.L_future * self.N):
            raise InvalidSpec(f"K_future must be in [1, {self.L_future * self.N}]")


@dataclass(frozen=True)
class PlanEntry:
    t: int
    v: int
    role: str  # "history" | "future"


@dataclass(frozen=True)
class SamplePlan:
    entries: tuple
    seed: int

    def __post_init__(self):
        keys = [(e.t, e.v) for e in self.entries]
        if len(set(keys)) != len(keys):
            raise InvalidSpec("plan entries must be unique")

    @property
    def history(self) -> tuple:
        return tuple(e for e in self.entries if e.role == "history")

    @property
    def future(self) -> tuple:
        return tuple(e for e in self.entries if e.role == "future")

    def __len__(self) -> int:
        return len(self.entries)


def sample_window(spec: WindowSpec, current_t: int, rng_seed: int) -> SamplePlan:
    """Uniform per-role sampling without replacement, deterministic per seed.

    History candidates are (t, v) with max(0, current_t - L_hist) <= t <
    current_t; future candidates start at current_t. When fewer history
    frames exist than K_hist, the plan simply carries fewer history entries.
    """
    if current_t < 1:
        raise InvalidSpec("current_t must be >= 1")
    rng = np.random.default_rng(np.random.Philox(key=rng_seed))

    hist_lo = max(0, current_t - spec.L_hist)
    hist_candidates = [(t, v) for t in range(hist_lo, current_t) for v in range(spec.N)]
    fut_candidates = [
        (t, v)
        for t in range(current_t, current_t + spec.L_future)
        for v in range(spec.N)
    ]

    k_hist = min(spec.K_hist, len(hist_candidates))
    picks_h = rng.choice(len(hist_candidates), size=k_hist, replace=False)
    picks_f = rng.choice(len(fut_candidates), size=spec.K_future, replace=False)

    entries = [PlanEntry(*hist_candidates[i], "history") for i in sorted(picks_h)]
    entries += [PlanEntry(*fut_candidates[i], "future") for i in sorted(picks_f)]
    return SamplePlan(entries=tuple(entries), seed=rng_seed)


class Memory:
    """Accepted edited frames for the trailing L_hist timesteps.

    Single writer: mutations go through advance(); reads are lock-free.
    """

    def __init__(self, L_hist: int):
        if L_hist < 1:
            raise InvalidSpec("L_hist must be >= 1")
        self.L_hist = L_hist
        self._frames: dict = {}

    def advance(self, accepted, current_t: int) -> "Memory":
        """Insert accepted (t, v, image) frames, then evict stale timesteps."""
        floor = current_t - self.L_hist
        for t, v, image in accepted:
            if t < floor:
                raise StaleFrame(f"frame t={t} is older than current_t - L_hist = {floor}")
            self._frames[(t, v)] = image
        for key in [k for k in self._frames if k[0] < floor]:
            del self._frames[key]
        return self

    def get(self, t: int, v: int):
        return self._frames.get((t, v))

    def keys(self):
        return sorted(self._frames.keys())

    def __len__(self) -> int:
        return len(self._frames)

    def __contains__(self, key) -> bool:
        return key in self._frames


def advance_memory(mem: Memory, accepted, current_t: int) -> Memory:
    return mem.advance(accepted, current_t)


def covering_plans(
    spec: WindowSpec, current_t: int, t_count: int, memory_keys, rng_seed: int
) -> list:
    """Plans that cover every (t, v) with current_t <= t < t_count exactly once.

    Future frames are shuffled deterministically and chunked into groups of
    at most K_future; each chunk draws up to K_hist history entries from the
    available memory keys inside the history window.
    """
    if current_t < 1:
        raise InvalidSpec("current_t must be >= 1")
    span = min(t_count - current_t, spec.L_future)
    future = [(t, v) for t in range(current_t, current_t + span) for v in range(spec.N)]
    if not future:
        return []
    rng = np.random.default_rng(np.random.Philox(key=rng_seed))
    order = rng.permutation(len(future))
    hist_candidates = [
        (t, v) for (t, v) in memory_keys if current_t - spec.L_hist <= t < current_t
    ]
    plans = []
    for start in range(0, len(order), spec.K_future):
        chunk = [future[i] for i in order[start : start + spec.K_future]]
        k_hist = min(spec.K_hist, len(hist_candidates))
        picks = rng.choice(len(hist_candidates), size=k_hist, replace=False) if k_hist else []
        entries = [PlanEntry(*hist_candidates[i], "history") for i in sorted(picks)]
        entries += [PlanEntry(t, v, "future") for t, v in sorted(chunk)]
        plans.append(SamplePlan(entries=tuple(entries), seed=rng_seed))
    return plans


def attention_cost(spec: WindowSpec, tokens_per_image: int, mode: str) -> int:
    """Cross-image attention pair count for a window: a hardware-free proxy
    for the memory footprint of dense vs sparse processing."""
    if tokens_per_image < 1:
        raise InvalidSpec("tokens_per_image must be >= 1")
    if mode == "dense":
        n = (spec.L_hist + spec.L_future) * spec.N * tokens_per_image
    elif mode == "sparse":
        n = (spec.K_hist + spec.K_future) * tokens_per_image
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return n * n
