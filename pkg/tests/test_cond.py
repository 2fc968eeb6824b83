import numpy as np
import pytest
import torch

from ermv.cond import (
    BadShape,
    ConditionBundle,
    ConditionEncoders,
    DimensionMismatch,
    GuidanceEncoder,
    IndexOutOfRange,
    IndexEncoder,
    StateEncoder,
    build_condition_bundle,
    build_state_vector,
    positional_encoding,
    positional_encoding_t,
)
from ermv.geom import CameraPose

from .fd import fd_check


def pose_pair():
    prev = CameraPose.look_at((1.2, 0.3, 0.9), (0, 0, 0.1))
    cur = CameraPose.look_at((1.18, 0.36, 0.92), (0, 0, 0.1))
    return prev, cur


class TestStateVector:
    def test_length(self):
        prev, cur = pose_pair()
        sv = build_state_vector(cur, np.zeros(4), prev, np.zeros(4))
        assert sv.values.shape == (32,)  # 24 + 2*4

    def test_first_timestep_deltas(self):
        _, cur = pose_pair()
        sv = build_state_vector(cur, np.ones(3), None, None)
        assert np.allclose(sv.delta_translation, 0.0)
        assert np.allclose(sv.delta_q, 0.0)
        assert sv.motion_norm == 0.0
        # delta block matches the duplicate-pose (zero motion) encoding
        dup = build_state_vector(cur, np.ones(3), cur, np.ones(3))
        assert np.array_equal(sv.values, dup.values)

    def test_joint_delta(self):
        prev, cur = pose_pair()
        sv = build_state_vector(cur, np.array([0.1, 0, 0, 0]), prev, np.zeros(4))
        assert np.allclose(sv.delta_q, [0.1, 0, 0, 0])

    def test_dimension_mismatch(self):
        prev, cur = pose_pair()
        with pytest.raises(DimensionMismatch):
            build_state_vector(cur, np.zeros(4), prev, np.zeros(3))


class TestPositionalEncoding:
    def test_zero_input(self):
        enc = positional_encoding(0.0, 8)
        assert np.allclose(enc, [0, 1, 0, 1, 0, 1, 0, 1])

    def test_output_length(self):
        assert positional_encoding(1.7, 12).shape == (12,)
        assert positional_encoding(np.zeros(5), 6).shape == (5, 6)

    def test_distinct_inputs_differ(self):
        a = positional_encoding(1.0, 8)
        b = positional_encoding(2.0, 8)
        assert np.linalg.norm(a - b) > 0

    def test_torch_twin_matches(self):
        x = np.linspace(-2, 2, 7)
        a = positional_encoding(x, 10)
        b = positional_encoding_t(torch.tensor(x, dtype=torch.float64), 10).numpy()
        assert np.allclose(a, b, atol=1e-12)

    def test_odd_dims_rejected(self):
        with pytest.raises(ValueError):
            positional_encoding(1.0, 7)


class TestStateEncoder:
    def test_deterministic_and_shaped(self):
        enc = StateEncoder(dof=4, tokens=4, width=64)
        x = torch.randn(32)
        a = enc(x)
        b = enc(x)
        assert a.shape == (4, 64)
        assert torch.equal(a, b)

    def test_batched(self):
        enc = StateEncoder(dof=4)
        out = enc(torch.randn(5, 32))
        assert out.shape == (5, 4, 64)

    def test_dimension_mismatch(self):
        enc = StateEncoder(dof=4)
        with pytest.raises(DimensionMismatch):
            enc(torch.randn(30))

    def test_gradient_matches_finite_differences(self):
        torch.manual_seed(0)
        enc = StateEncoder(dof=2, tokens=2, width=16).double()
        x = torch.randn(28, dtype=torch.float64)
        w = torch.randn(2, 16, dtype=torch.float64)

        def loss():
            return (enc(x) * w).sum()

        fd_check(loss, enc.parameters(), n_samples=30)


class TestGuidanceEncoder:
    def test_token_count(self):
        enc = GuidanceEncoder(width=64)
        tokens = enc(torch.rand(64, 64, 3))
        assert tokens.shape == (64, 64)

    def test_identical_images_identical_tokens(self):
        enc = GuidanceEncoder()
        img = torch.rand(32, 32, 3)
        assert torch.equal(enc(img), enc(img.clone()))

    def test_patch_swap_permutes_tokens(self):
        enc = GuidanceEncoder()
        img = torch.rand(32, 32, 3)
        swapped = img.clone()
        # patches (0,0) and (1,2) in the 4x4 patch grid
        swapped[0:8, 0:8], swapped[8:16, 16:24] = (
            img[8:16, 16:24].clone(),
            img[0:8, 0:8].clone(),
        )
        base = enc(img)
        perm = enc(swapped)
        i, j = 0, 1 * 4 + 2
        assert torch.allclose(perm[i], base[j])
        assert torch.allclose(perm[j], base[i])
        keep = [k for k in range(16) if k not in (i, j)]
        assert torch.allclose(perm[keep], base[keep])

    def test_bad_shape(self):
        enc = GuidanceEncoder()
        with pytest.raises(BadShape):
            enc(torch.rand(30, 32, 3))

    def test_gradient_matches_finite_differences(self):
        torch.manual_seed(1)
        enc = GuidanceEncoder(width=8).double()
        img = torch.rand(16, 16, 3, dtype=torch.float64)
        w = torch.randn(4, 8, dtype=torch.float64)

        def loss():
            return (enc(img) * w).sum()

        fd_check(loss, enc.parameters(), n_samples=24)


class TestIndexEncoder:
    def test_views_differ(self):
        enc = IndexEncoder(t_max=8, n_views=4, width=16)
        assert not torch.allclose(enc(0, 0), enc(0, 1))

    def test_deterministic(self):
        enc = IndexEncoder(t_max=8, n_views=4, width=16)
        assert torch.equal(enc(3, 2), enc(3, 2))

    def test_additivity(self):
        enc = IndexEncoder(t_max=8, n_views=4, width=16)
        assert torch.equal(enc(5, 1), enc.time_table[5] + enc.view_table[1])

    def test_out_of_range(self):
        enc = IndexEncoder(t_max=8, n_views=4, width=16)
        with pytest.raises(IndexOutOfRange):
            enc(8, 0)
        with pytest.raises(IndexOutOfRange):
            enc(0, 4)


class TestBundle:
    def test_build(self):
        encoders = ConditionEncoders(dof=4, t_max=16, n_views=6)
        prev, cur = pose_pair()
        entries = [
            {"pose": prev, "q": np.zeros(4), "prev_pose": None, "prev_q": None, "t": 0, "v": 0, "history": True},
            {"pose": cur, "q": np.full(4, 0.1), "prev_pose": prev, "prev_q": np.zeros(4), "t": 1, "v": 1, "history": False},
        ]
        bundle = build_condition_bundle(encoders, torch.rand(64, 64, 3), entries)
        assert bundle.n_entries == 2
        assert bundle.guidance_tokens.shape == (64, 64)
        assert bundle.state_tokens.shape == (2, 4, 64)
        assert bundle.motion_norms[0] == 0.0
        assert bundle.motion_norms[1] > 0.0
        assert bundle.history_flags == [True, False]

    def test_width_consistency_enforced(self):
        with pytest.raises(DimensionMismatch):
            ConditionBundle(
                guidance_tokens=torch.zeros(4, 64),
                state_tokens=torch.zeros(1, 4, 32),
                index_embeddings=torch.zeros(1, 64),
                motion_norms=torch.zeros(1),
                history_flags=[False],
            )
