import numpy as np
import pytest

from ermv.geom import (
    BehindCamera,
    CameraPose,
    DegenerateGeometry,
    EpipolarLine,
    EpipoleDegenerate,
    FundamentalMatrix,
    Intrinsics,
    NoVisibleSegment,
    PixelPoint,
    compose,
    epipolar_line,
    fundamental_matrix,
    project,
    project_many,
    sample_epipolar,
    se3_delta,
)


def random_rig(rng, n_points=100):
    """Two cameras on a sphere looking at the origin plus visible points."""
    poses, intrs = [], []
    for _ in range(2):
        theta = rng.uniform(0, 2 * np.pi)
        z = rng.uniform(0.3, 0.9)
        r = np.sqrt(1 - z * z)
        eye = 2.0 * np.array([r * np.cos(theta), r * np.sin(theta), z])
        poses.append(CameraPose.look_at(eye, (0, 0, 0)))
        intrs.append(
            Intrinsics(
                fx=rng.uniform(50, 120),
                fy=rng.uniform(50, 120),
                cx=rng.uniform(28, 36),
                cy=rng.uniform(28, 36),
                width=64,
                height=64,
            )
        )
    points = rng.uniform(-0.3, 0.3, size=(n_points, 3))
    return poses, intrs, points


def ident_intr(f=1.0, c=0.0, size=64):
    # principal point must be inside the image; c=0 works for any size
    return Intrinsics(fx=f, fy=f, cx=c, cy=c, width=size, height=size)


class TestPose:
    def test_rejects_non_orthonormal(self):
        with pytest.raises(ValueError):
            CameraPose(np.eye(3) * 1.01, np.zeros(3))

    def test_rejects_reflection(self):
        r = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(ValueError):
            CameraPose(r, np.zeros(3))

    def test_inverse_roundtrip(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            pose = CameraPose.look_at(rng.normal(size=3) + 3.0, rng.normal(size=3) * 0.1)
            both = compose(pose, pose.inverse())
            assert np.allclose(both.rotation, np.eye(3), atol=1e-12)
            assert np.allclose(both.translation, 0.0, atol=1e-12)


class TestProject:
    def test_optical_axis(self):
        p = project(CameraPose.identity(), ident_intr(), (0.0, 0.0, 1.0))
        assert p == (0.0, 0.0)

    def test_hand_check(self):
        # u = fx*x/z + cx = 100*0.1/1 + 32 = 42
        intr = Intrinsics(fx=100, fy=100, cx=32, cy=32, width=64, height=64)
        p = project(CameraPose.identity(), intr, (0.1, 0.0, 1.0))
        assert np.isclose(p.u, 42.0) and np.isclose(p.v, 32.0)

    def test_behind_camera(self):
        with pytest.raises(BehindCamera):
            project(CameraPose.identity(), ident_intr(), (0.0, 0.0, 0.0))
        with pytest.raises(BehindCamera):
            project(CameraPose.identity(), ident_intr(), (0.0, 0.0, -1.0))


class TestFundamental:
    def test_zero_baseline(self):
        pose = CameraPose.look_at((1, 1, 1), (0, 0, 0))
        intr = ident_intr()
        with pytest.raises(DegenerateGeometry):
            fundamental_matrix(pose, intr, pose, intr)

    def test_pure_translation_analytic(self):
        # F proportional to [t]x for identity intrinsics and R = I
        pose_i = CameraPose.identity()
        pose_j = CameraPose(np.eye(3), np.array([0.1, 0.0, 0.0]))
        f = fundamental_matrix(pose_i, ident_intr(), pose_j, ident_intr()).matrix
        expected = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])
        expected /= np.linalg.norm(expected)
        sign = np.sign(np.sum(f * expected))
        assert np.allclose(f, sign * expected, atol=1e-12)

    def test_epipolar_residual_sweep(self):
        rng = np.random.default_rng(7)
        (pose_i, pose_j), (intr_i, intr_j), points = random_rig(rng)
        F = fundamental_matrix(pose_i, intr_i, pose_j, intr_j).matrix
        xi = project_many(pose_i, intr_i, points)
        xj = project_many(pose_j, intr_j, points)
        hi = np.concatenate([xi, np.ones((len(xi), 1))], axis=1)
        hj = np.concatenate([xj, np.ones((len(xj), 1))], axis=1)
        hi /= np.linalg.norm(hi, axis=1, keepdims=True)
        hj /= np.linalg.norm(hj, axis=1, keepdims=True)
        residuals = np.abs(np.sum(hj * (hi @ F.T), axis=1))
        assert residuals.max() <= 1e-9

    def test_rank_two(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            (pose_i, pose_j), (intr_i, intr_j), _ = random_rig(rng, n_points=1)
            F = fundamental_matrix(pose_i, intr_i, pose_j, intr_j).matrix
            s = np.linalg.svd(F, compute_uv=False)
            assert s[2] <= 1e-8
            assert np.isclose(np.linalg.norm(F), 1.0)

    def test_transpose_symmetry(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            (pose_i, pose_j), (intr_i, intr_j), _ = random_rig(rng, n_points=1)
            fij = fundamental_matrix(pose_i, intr_i, pose_j, intr_j).matrix
            fji = fundamental_matrix(pose_j, intr_j, pose_i, intr_i).matrix
            sign = np.sign(np.sum(fji * fij.T))
            assert np.allclose(fji, sign * fij.T, atol=1e-9)


class TestEpipolarLine:
    def test_matrix_vector_example(self):
        f = FundamentalMatrix(np.array([[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]]))
        line = epipolar_line(f, PixelPoint(0.0, 0.0))
        assert np.allclose((line.a, line.b, line.c), (0.0, -1.0, 0.0))

    def test_normalized(self):
        rng = np.random.default_rng(11)
        (pose_i, pose_j), (intr_i, intr_j), points = random_rig(rng, n_points=10)
        F = fundamental_matrix(pose_i, intr_i, pose_j, intr_j)
        for uv in project_many(pose_i, intr_i, points):
            line = epipolar_line(F, PixelPoint(*uv))
            assert np.isclose(line.a**2 + line.b**2, 1.0)

    def test_epipole_raises(self):
        rng = np.random.default_rng(13)
        (pose_i, pose_j), (intr_i, intr_j), _ = random_rig(rng, n_points=1)
        F = fundamental_matrix(pose_i, intr_i, pose_j, intr_j)
        # right null vector of F is the epipole in image i
        _, _, vt = np.linalg.svd(F.matrix)
        e = vt[-1]
        assert abs(e[2]) > 1e-6
        e = e / e[2]
        with pytest.raises(EpipoleDegenerate):
            epipolar_line(F, PixelPoint(e[0], e[1]))


class TestSampleEpipolar:
    def test_horizontal_line_three_points(self):
        line = EpipolarLine(0.0, 1.0, -16.0)  # v = 16
        bounds = Intrinsics(fx=1, fy=1, cx=0, cy=0, width=32, height=32)
        pts = sample_epipolar(line, bounds, 3)
        assert np.allclose(pts, [(0, 16), (15.5, 16), (31, 16)])

    def test_single_sample_is_midpoint(self):
        line = EpipolarLine(0.0, 1.0, -16.0)
        bounds = Intrinsics(fx=1, fy=1, cx=0, cy=0, width=32, height=32)
        (p,) = sample_epipolar(line, bounds, 1)
        assert np.allclose(p, (15.5, 16.0))

    def test_line_outside_image(self):
        line = EpipolarLine(1.0, 0.0, 5.0)  # u = -5
        bounds = Intrinsics(fx=1, fy=1, cx=0, cy=0, width=32, height=32)
        with pytest.raises(NoVisibleSegment):
            sample_epipolar(line, bounds, 4)

    def test_points_on_line_and_inside(self):
        rng = np.random.default_rng(17)
        bounds = Intrinsics(fx=1, fy=1, cx=0, cy=0, width=64, height=48)
        n_visible = 0
        for _ in range(200):
            theta = rng.uniform(0, np.pi)
            line = EpipolarLine(np.cos(theta), np.sin(theta), rng.uniform(-60, 20))
            try:
                pts = sample_epipolar(line, bounds, 7)
            except NoVisibleSegment:
                continue
            n_visible += 1
            for p in pts:
                assert line.distance(p) <= 1e-9
                assert -1e-9 <= p.u <= 63 + 1e-9
                assert -1e-9 <= p.v <= 47 + 1e-9
        assert n_visible > 50


class TestSe3Delta:
    def test_no_motion(self):
        pose = CameraPose.look_at((1.0, 0.5, 0.8), (0, 0, 0))
        d = se3_delta(pose, pose)
        assert np.allclose(d, np.concatenate([np.eye(3).reshape(9), np.zeros(3)]), atol=1e-12)

    def test_camera_frame_shift(self):
        # compose-and-invert oracle: shifting the camera-frame translation by
        # +0.05 along x must appear as a pure (0.05, 0, 0) delta translation.
        rng = np.random.default_rng(19)
        for _ in range(10):
            prev = CameraPose.look_at(rng.normal(size=3) + 2.5, rng.normal(size=3) * 0.2)
            cur = CameraPose(prev.rotation, prev.translation + np.array([0.05, 0.0, 0.0]))
            d = se3_delta(cur, prev)
            assert np.allclose(d[:9], np.eye(3).reshape(9), atol=1e-12)
            assert np.allclose(d[9:], [0.05, 0.0, 0.0], atol=1e-12)

    def test_roundtrip(self):
        rng = np.random.default_rng(23)
        for _ in range(10):
            prev = CameraPose.look_at(rng.normal(size=3) + 2.5, rng.normal(size=3) * 0.2)
            cur = CameraPose.look_at(rng.normal(size=3) + 2.5, rng.normal(size=3) * 0.2)
            d = se3_delta(cur, prev)
            delta_pose = CameraPose(d[:9].reshape(3, 3), d[9:])
            recon = compose(prev, delta_pose)
            assert np.allclose(recon.rotation, cur.rotation, atol=1e-9)
            assert np.allclose(recon.translation, cur.translation, atol=1e-9)
