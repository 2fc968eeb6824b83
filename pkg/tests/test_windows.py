import numpy as np
import pytest

from ermv.windows import (
    InvalidSpec,
    Memory,
    SamplePlan,
    PlanEntry,
    StaleFrame,
    WindowSpec,
    advance_memory,
    attention_cost,
    sample_window,
)

PAPER_SPEC = WindowSpec(L_hist=8, L_future=8, N=6, K_hist=4, K_future=6)


class TestSampleWindow:
    def test_paper_config_plan_size(self):
        plan = sample_window(PAPER_SPEC, current_t=8, rng_seed=0)
        assert len(plan) == 10
        assert len(plan.history) == 4
        assert len(plan.future) == 6

    def test_exhaustive_sampling_is_dense_window(self):
        spec = WindowSpec(L_hist=2, L_future=2, N=3, K_hist=6, K_future=6)
        plan = sample_window(spec, current_t=4, rng_seed=1)
        hist = {(e.t, e.v) for e in plan.history}
        fut = {(e.t, e.v) for e in plan.future}
        assert hist == {(t, v) for t in (2, 3) for v in range(3)}
        assert fut == {(t, v) for t in (4, 5) for v in range(3)}

    def test_seed_determinism_and_variation(self):
        a = sample_window(PAPER_SPEC, current_t=8, rng_seed=42)
        b = sample_window(PAPER_SPEC, current_t=8, rng_seed=42)
        assert a == b
        distinct = sum(
            sample_window(PAPER_SPEC, 8, s) != sample_window(PAPER_SPEC, 8, s + 10_000)
            for s in range(100)
        )
        assert distinct > 99 * 0.99

    def test_short_history_samples_fewer(self):
        plan = sample_window(PAPER_SPEC, current_t=1, rng_seed=0)
        assert len(plan.history) == 4  # one frame x 6 views available, capped by K_hist
        plan0 = sample_window(WindowSpec(L_hist=8, L_future=8, N=2, K_hist=6, K_future=4), 1, 0)
        assert len(plan0.history) == 2  # only (0, v) exists
        for e in plan0.history:
            assert e.t == 0

    def test_indices_inside_window(self):
        for seed in range(50):
            plan = sample_window(PAPER_SPEC, current_t=9, rng_seed=seed)
            for e in plan.history:
                assert 1 <= e.t < 9 and 0 <= e.v < 6
            for e in plan.future:
                assert 9 <= e.t < 17 and 0 <= e.v < 6

    def test_invalid(self):
        with pytest.raises(InvalidSpec):
            sample_window(PAPER_SPEC, current_t=0, rng_seed=0)
        with pytest.raises(InvalidSpec):
            WindowSpec(K_hist=0)
        with pytest.raises(InvalidSpec):
            WindowSpec(L_hist=1, N=2, K_hist=3)

    def test_duplicate_entries_rejected(self):
        with pytest.raises(InvalidSpec):
            SamplePlan(entries=(PlanEntry(0, 0, "history"), PlanEntry(0, 0, "future")), seed=0)

    def test_uniform_history_slot_frequency(self):
        # K_hist = 1 over 10,000 seeds: each of the 48 slots within 3 sigma
        spec = WindowSpec(L_hist=8, L_future=8, N=6, K_hist=1, K_future=1)
        n = 10_000
        counts = np.zeros(48)
        for seed in range(n):
            plan = sample_window(spec, current_t=8, rng_seed=seed)
            (e,) = plan.history
            counts[e.t * 6 + e.v] += 1
        p = 1.0 / 48.0
        sigma = np.sqrt(p * (1 - p) / n)
        freq = counts / n
        assert np.all(np.abs(freq - p) <= 3 * sigma), np.abs(freq - p).max() / sigma


class TestMemory:
    def test_insert_and_query(self):
        mem = Memory(L_hist=4)
        img = np.zeros((2, 2, 3))
        advance_memory(mem, [(3, 1, img)], current_t=4)
        assert mem.get(3, 1) is img
        assert mem.get(3, 0) is None

    def test_eviction(self):
        mem = Memory(L_hist=2)
        mem.advance([(0, 0, "a"), (1, 0, "b")], current_t=2)
        mem.advance([(2, 0, "c")], current_t=3)
        assert mem.get(0, 0) is None
        assert mem.get(1, 0) == "b"
        assert mem.get(2, 0) == "c"

    def test_stale_insert_rejected(self):
        mem = Memory(L_hist=2)
        with pytest.raises(StaleFrame):
            mem.advance([(0, 0, "x")], current_t=3)

    def test_only_accepted_frames_present(self):
        mem = Memory(L_hist=8)
        mem.advance([(1, 0, "img")], current_t=2)
        assert mem.keys() == [(1, 0)]


class TestAttentionCost:
    def test_paper_window_counts(self):
        assert attention_cost(PAPER_SPEC, 1, "dense") == 96**2 == 9216
        assert attention_cost(PAPER_SPEC, 1, "sparse") == 10**2 == 100
        reduction = 1 - 100 / 9216
        assert reduction > 0.989

    def test_sparse_equals_dense_at_full_window(self):
        spec = WindowSpec(L_hist=2, L_future=2, N=2, K_hist=4, K_future=4)
        assert attention_cost(spec, 3, "sparse") == attention_cost(spec, 3, "dense")

    def test_quadratic_law(self):
        a = WindowSpec(L_hist=4, L_future=4, N=4, K_hist=4, K_future=4)
        b = WindowSpec(L_hist=4, L_future=4, N=4, K_hist=2, K_future=2)
        assert attention_cost(a, 2, "sparse") == 4 * attention_cost(b, 2, "sparse")

    def test_sparse_below_half_dense_for_small_k(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            L_h = int(rng.integers(1, 10))
            L_f = int(rng.integers(1, 10))
            n = int(rng.integers(2, 8))
            total = (L_h + L_f) * n
            k_max = int(np.floor(0.7 * total)) - 1
            if k_max < 2:
                continue
            k = int(rng.integers(2, k_max + 1))
            k_h = max(1, min(k // 2, L_h * n))
            k_f = max(1, min(k - k_h, L_f * n))
            spec = WindowSpec(L_hist=L_h, L_future=L_f, N=n, K_hist=k_h, K_future=k_f)
            assert attention_cost(spec, 4, "sparse") <= 0.5 * attention_cost(spec, 4, "dense")
