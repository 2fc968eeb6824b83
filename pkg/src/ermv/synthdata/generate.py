"""Ground-truth 4D trajectory generation: scenes, cameras, arm, motion blur."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geom import CameraPose, Intrinsics
from .render import SceneGeometry, protected_hits, render_geometry
from .scene import ArmSpec, InvalidConfig, ObjectSpec, SceneConfig, TableSpec


@dataclass(frozen=True)
class MotionSpec:
    """Smooth camera-rig and joint motion over a trajectory."""

    camera_radius: float = 1.25
    camera_height: float = 0.85
    camera_speed: float = 0.035  # radians per frame, shared orbit drift
    camera_bob: float = 0.04  # meters, vertical oscillation amplitude
    action_amplitude: float = 0.05  # radians, per-joint oscillation scale
    action_period: float = 24.0  # frames
    blur_substeps: int = 8
    target: tuple = (0.0, 0.0, 0.12)


@dataclass
class Trajectory:
    """T timesteps x N views of images plus camera and joint states."""

    images: np.ndarray  # (T, N, H, W, 3) float64 in [0, 1]
    poses: list  # [t][v] -> CameraPose
    intrinsics: list  # [v] -> Intrinsics
    q: np.ndarray  # (T, d) radians
    actions: np.ndarray  # (T, d) commanded deltas; q[t+1] = q[t] + a[t]

    @property
    def T(self) -> int:
        return self.images.shape[0]

    @property
    def N(self) -> int:
        return self.images.shape[1]

    @property
    def dof(self) -> int:
        return self.q.shape[1]


@dataclass
class GroundTruthMasks:
    masks: np.ndarray  # (T, N, H, W) uint8 in {0, 1}


def arm_points(arm: ArmSpec, q: np.ndarray) -> np.ndarray:
    """Forward kinematics: joint positions (d+1, 3) of the planar chain.

    Joint angles accumulate; q = 0 points every segment straight up.
    """
    s_dir = np.array([np.cos(arm.plane_yaw), np.sin(arm.plane_yaw), 0.0])
    z_dir = np.array([0.0, 0.0, 1.0])
    pts = [np.asarray(arm.base, dtype=np.float64)]
    theta = 0.0
    for length, angle in zip(arm.lengths, q):
        theta += float(angle)
        step = length * (np.sin(theta) * s_dir + np.cos(theta) * z_dir)
        pts.append(pts[-1] + step)
    return np.stack(pts)


def scene_geometry(cfg: SceneConfig, q: np.ndarray, time: float = 0.0) -> SceneGeometry:
    """Instantiate the primitive soup for joint state q at a given frame time."""
    spheres = [o for o in cfg.objects if o.shape == "sphere"]
    boxes = [o for o in cfg.objects if o.shape == "box"]
    joints = arm_points(cfg.arm, q)

    def moved(o: ObjectSpec):
        return np.asarray(o.center) + time * np.asarray(o.velocity)

    return SceneGeometry(
        sphere_centers=np.array([moved(o) for o in spheres]).reshape(-1, 3),
        sphere_radii=np.array([o.size for o in spheres]),
        sphere_colors=np.array([o.color for o in spheres]).reshape(-1, 3),
        sphere_ids=[o.id for o in spheres],
        box_centers=np.array([moved(o) for o in boxes]).reshape(-1, 3),
        box_half=np.array([[o.size] * 3 for o in boxes]).reshape(-1, 3),
        box_colors=np.array([o.color for o in boxes]).reshape(-1, 3),
        box_ids=[o.id for o in boxes],
        capsule_a=joints[:-1],
        capsule_b=joints[1:],
        capsule_radius=cfg.arm.radius,
        capsule_color=cfg.arm.color,
        table_half=(cfg.table.half_x, cfg.table.half_y),
        table_color=cfg.table.color,
        background=cfg.background,
    )


class TrajectorySampler:
    """Continuous-time scene/camera state shared by renders and blur substeps."""

    def __init__(self, cfg: SceneConfig, motion: MotionSpec, n_views: int, intr: Intrinsics):
        self.cfg = cfg
        self.motion = motion
        self.n_views = n_views
        self.intr = intr
        rng = np.random.default_rng(np.random.Philox(key=cfg.seed))
        d = cfg.arm.dof
        self.q0 = rng.uniform(0.15, 0.55, size=d) * rng.choice([-1.0, 1.0], size=d)
        self.joint_phase = rng.uniform(0.0, 2.0 * np.pi, size=d)
        self.joint_amp = motion.action_amplitude * rng.uniform(0.6, 1.4, size=d)
        self.view_azimuth = (
            np.linspace(0.0, 2.0 * np.pi, n_views, endpoint=False)
            + rng.uniform(-0.08, 0.08, size=n_views)
        )
        self.view_bob_phase = rng.uniform(0.0, 2.0 * np.pi, size=n_views)

    def joint_state(self, tau: float) -> np.ndarray:
        ph = 2.0 * np.pi * tau / self.motion.action_period + self.joint_phase
        return self.q0 + self.joint_amp * self.motion.action_period / (2 * np.pi) * (
            np.sin(ph) - np.sin(self.joint_phase)
        )

    def camera_pose(self, view: int, tau: float) -> CameraPose:
        m = self.motion
        az = self.view_azimuth[view] + m.camera_speed * tau
        z = m.camera_height + m.camera_bob * np.sin(
            2.0 * np.pi * tau / m.action_period + self.view_bob_phase[view]
        )
        eye = np.array([m.camera_radius * np.cos(az), m.camera_radius * np.sin(az), z])
        return CameraPose.look_at(eye, m.target)

    def geometry(self, tau: float) -> SceneGeometry:
        return scene_geometry(self.cfg, self.joint_state(tau), time=tau)


def generate_trajectory(
    cfg: SceneConfig,
    motion: MotionSpec,
    T: int,
    N: int,
    H: int,
    W: int,
) -> tuple[Trajectory, GroundTruthMasks]:
    """Render a full trajectory with motion blur plus protected-object masks.

    Deterministic given (cfg.seed, motion). Frame t integrates the shutter
    over [t-1, t] (frame 0 is sharp); masks are rendered at the frame time.
    """
    if T < 2 or N < 2:
        raise InvalidConfig("need T >= 2 and N >= 2")
    if not cfg.objects:
        raise InvalidConfig("scene has no objects")
    if cfg.arm.dof < 1:
        raise InvalidConfig("arm needs at least one joint")

    fov_f = 0.95 * W
    intr = Intrinsics(fx=fov_f, fy=fov_f, cx=(W - 1) / 2.0, cy=(H - 1) / 2.0, width=W, height=H)
    sampler = TrajectorySampler(cfg, motion, N, intr)

    d = cfg.arm.dof
    q = np.stack([sampler.joint_state(float(t)) for t in range(T)])
    actions = np.zeros((T, d))
    actions[:-1] = q[1:] - q[:-1]

    images = np.zeros((T, N, H, W, 3))
    masks = np.zeros((T, N, H, W), dtype=np.uint8)
    poses = [[None] * N for _ in range(T)]
    S = max(1, motion.blur_substeps)
    for t in range(T):
        lo = max(0.0, t - 1.0)
        taus = [lo + (t - lo) * ((s + 0.5) / S) for s in range(S)] if t > 0 else [0.0]
        geoms = [sampler.geometry(tau) for tau in taus]
        for v in range(N):
            acc = np.zeros((H, W, 3))
            # the mask keeps only pixels that are protected content across the
            # whole shutter interval, so edits are exactly local under blur
            protected_all = np.ones((H, W), dtype=bool)
            for tau, geom in zip(taus, geoms):
                img, hit = render_geometry(geom, sampler.camera_pose(v, tau), intr)
                acc += img
                protected_all &= protected_hits(hit, cfg.protected_ids)
            images[t, v] = acc / len(taus)
            poses[t][v] = sampler.camera_pose(v, float(t))
            masks[t, v] = protected_all.astype(np.uint8)

    traj = Trajectory(
        images=images,
        poses=poses,
        intrinsics=[intr] * N,
        q=q,
        actions=actions,
    )
    return traj, GroundTruthMasks(masks=masks)


def desk_scene(seed: int) -> SceneConfig:
    """Seeded desk-scale scene: one protected manipulated object + clutter."""
    rng = np.random.default_rng(np.random.Philox(key=seed ^ 0x5CE11E))
    palette = rng.uniform(0.15, 0.95, size=(4, 3))
    target = ObjectSpec(
        id="target",
        shape="sphere",
        center=(rng.uniform(-0.05, 0.18), rng.uniform(-0.12, 0.12), 0.06),
        size=0.06,
        color=tuple(palette[0]),
    )
    extra = ObjectSpec(
        id="block0",
        shape="box",
        center=(rng.uniform(0.16, 0.34), rng.uniform(-0.22, -0.05), 0.045),
        size=0.045,
        color=tuple(palette[1]),
    )
    bg = tuple(rng.uniform(0.10, 0.35, size=3))
    table = TableSpec(color=tuple(rng.uniform(0.35, 0.7, size=3)))
    return SceneConfig(
        background=bg,
        table=table,
        objects=(target, extra),
        protected_ids=("target",),
        seed=seed,
    )
