"""Camera geometry: SE(3) poses, pinhole projection, two-view epipolar algebra.

Conventions used throughout the package:
  * poses map world coordinates to camera coordinates, x_cam = R @ x_world + t
  * pixel coordinates are continuous, (0, 0) at the center of the top-left
    pixel, so a WxH image covers the rectangle [0, W-1] x [0, H-1]
  * epipolar lines are stored as (a, b, c) with a*u + b*v + c = 0 and
    a^2 + b^2 = 1

All arithmetic is double precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class GeometryError(Exception):
    pass


class BehindCamera(GeometryError):
    """Point has non-positive depth in the camera frame."""


class DegenerateGeometry(GeometryError):
    """Two-view geometry undefined (zero baseline)."""


class EpipoleDegenerate(GeometryError):
    """Queried pixel maps to the null space of F."""


class NoVisibleSegment(GeometryError):
    """Epipolar line does not intersect the image rectangle."""


class PixelPoint(NamedTuple):
    u: float
    v: float


@dataclass(frozen=True)
class CameraPose:
    """World-to-camera rigid transform."""

    rotation: np.ndarray  # (3, 3)
    translation: np.ndarray  # (3,)

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if r.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {r.shape}")
        if np.max(np.abs(r @ r.T - np.eye(3))) > 1e-9:
            raise ValueError("rotation is not orthonormal within 1e-9")
        if abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise ValueError("rotation determinant is not +1 within 1e-9")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    def matrix(self) -> np.ndarray:
        """4x4 homogeneous world-to-camera matrix."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> "CameraPose":
        rt = self.rotation.T
        return CameraPose(rt, -rt @ self.translation)

    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation

    @staticmethod
    def identity() -> "CameraPose":
        return CameraPose(np.eye(3), np.zeros(3))

    @staticmethod
    def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> "CameraPose":
        """Pose of a camera at `eye` looking toward `target` (+z forward)."""
        eye = np.asarray(eye, dtype=np.float64)
        fwd = np.asarray(target, dtype=np.float64) - eye
        n = np.linalg.norm(fwd)
        if n < 1e-12:
            raise ValueError("eye and target coincide")
        fwd = fwd / n
        right = np.cross(fwd, np.asarray(up, dtype=np.float64))
        rn = np.linalg.norm(right)
        if rn < 1e-12:
            raise ValueError("view direction parallel to up vector")
        right = right / rn
        down = np.cross(fwd, right)
        r = np.stack([right, down, fwd])  # rows: camera axes in world coords
        return CameraPose(r, -r @ eye)


def compose(first: CameraPose, second: CameraPose) -> CameraPose:
    """Transform applying `first` then `second` (second @ first as matrices)."""
    return CameraPose(
        second.rotation @ first.rotation,
        second.rotation @ first.translation + second.translation,
    )


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width) or not (0 <= self.cy < self.height):
            raise ValueError("principal point outside the image")

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def inverse_matrix(self) -> np.ndarray:
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ]
        )

    def scaled(self, width: int, height: int) -> "Intrinsics":
        """Intrinsics for the same camera resampled to width x height.

        Uses the pixel-center convention: u_new = s*u + (s-1)/2.
        """
        sx = width / self.width
        sy = height / self.height
        return Intrinsics(
            fx=self.fx * sx,
            fy=self.fy * sy,
            cx=self.cx * sx + (sx - 1.0) / 2.0,
            cy=self.cy * sy + (sy - 1.0) / 2.0,
            width=width,
            height=height,
        )


@dataclass(frozen=True)
class FundamentalMatrix:
    """3x3 rank-2 matrix with unit Frobenius norm, x_j^T F x_i = 0."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (3, 3):
            raise ValueError(f"F must be 3x3, got {m.shape}")
        n = np.linalg.norm(m)
        if n < 1e-15:
            raise ValueError("F is numerically zero")
        m = m / n
        s = np.linalg.svd(m, compute_uv=False)
        if s[2] > 1e-8:
            raise ValueError(f"F is not rank 2 (smallest singular value {s[2]:.3g})")
        object.__setattr__(self, "matrix", m)


@dataclass(frozen=True)
class EpipolarLine:
    """Line a*u + b*v + c = 0 with a^2 + b^2 = 1."""

    a: float
    b: float
    c: float

    def __post_init__(self):
        n = float(np.hypot(self.a, self.b))
        if n < 1e-12:
            raise ValueError("degenerate line: a = b = 0")
        object.__setattr__(self, "a", self.a / n)
        object.__setattr__(self, "b", self.b / n)
        object.__setattr__(self, "c", self.c / n)

    def distance(self, p: PixelPoint) -> float:
        return abs(self.a * p.u + self.b * p.v + self.c)


def project_many(pose: CameraPose, intr: Intrinsics, points: np.ndarray) -> np.ndarray:
    """Pinhole-project world points of shape (n, 3) to pixels of shape (n, 2).

    Raises BehindCamera if any point has camera-frame depth <= 1e-6.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    cam = pts @ pose.rotation.T + pose.translation
    z = cam[:, 2]
    if np.any(z <= 1e-6):
        raise BehindCamera("point at or behind the camera plane")
    u = intr.fx * cam[:, 0] / z + intr.cx
    v = intr.fy * cam[:, 1] / z + intr.cy
    return np.stack([u, v], axis=1)


def project(pose: CameraPose, intr: Intrinsics, point) -> PixelPoint:
    """Pinhole-project a single world point."""
    uv = project_many(pose, intr, np.asarray(point, dtype=np.float64).reshape(1, 3))
    return PixelPoint(float(uv[0, 0]), float(uv[0, 1]))


def _skew(v: np.ndarray) -> np.ndarray:
    return np.array(
        [[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]]
    )


def fundamental_matrix(
    pose_i: CameraPose,
    intr_i: Intrinsics,
    pose_j: CameraPose,
    intr_j: Intrinsics,
) -> FundamentalMatrix:
    """Two-view fundamental matrix F with x_j^T F x_i = 0 in pixel coords.

    Built from the known relative pose: with (R, t) mapping camera-i
    coordinates to camera-j coordinates, F = K_j^-T [t]x R K_i^-1.
    Raises DegenerateGeometry when the baseline is (numerically) zero.
    """
    r_rel = pose_j.rotation @ pose_i.rotation.T
    t_rel = pose_j.translation - r_rel @ pose_i.translation
    if np.linalg.norm(t_rel) <= 1e-9:
        raise DegenerateGeometry("zero baseline: epipolar geometry undefined")
    e = _skew(t_rel) @ r_rel
    f = intr_j.inverse_matrix().T @ e @ intr_i.inverse_matrix()
    return FundamentalMatrix(f)


def epipolar_line(F: FundamentalMatrix, p: PixelPoint) -> EpipolarLine:
    """Epipolar line F @ (u, v, 1) in the partner image, unit-normalized."""
    l = F.matrix @ np.array([p.u, p.v, 1.0])
    if np.linalg.norm(l) < 1e-12 or np.hypot(l[0], l[1]) < 1e-12:
        raise EpipoleDegenerate("pixel maps to the null space of F")
    return EpipolarLine(float(l[0]), float(l[1]), float(l[2]))


def clip_line_to_rect(
    line: EpipolarLine, width: int, height: int
) -> tuple[np.ndarray, np.ndarray]:
    """Clip a line to [0, width-1] x [0, height-1]; returns the two endpoints.

    Raises NoVisibleSegment when the intersection is empty.
    """
    a, b, c = line.a, line.b, line.c
    # Parametric form through the closest point to the origin.
    p0 = np.array([-a * c, -b * c])
    d = np.array([b, -a])
    lo, hi = -np.inf, np.inf
    for axis, (bound_lo, bound_hi) in enumerate(
        ((0.0, float(width - 1)), (0.0, float(height - 1)))
    ):
        if abs(d[axis]) < 1e-12:
            if not (bound_lo - 1e-9 <= p0[axis] <= bound_hi + 1e-9):
                raise NoVisibleSegment("line misses the image rectangle")
            continue
        s0 = (bound_lo - p0[axis]) / d[axis]
        s1 = (bound_hi - p0[axis]) / d[axis]
        if s0 > s1:
            s0, s1 = s1, s0
        lo = max(lo, s0)
        hi = min(hi, s1)
    if not np.isfinite(lo) or not np.isfinite(hi) or lo > hi:
        raise NoVisibleSegment("line misses the image rectangle")
    return p0 + lo * d, p0 + hi * d


def sample_epipolar(line: EpipolarLine, bounds: Intrinsics, m: int) -> list[PixelPoint]:
    """M points uniformly spaced along the line's visible segment.

    Endpoints are included for m >= 2; m = 1 returns the segment midpoint.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    p_start, p_end = clip_line_to_rect(line, bounds.width, bounds.height)
    if m == 1:
        mid = 0.5 * (p_start + p_end)
        return [PixelPoint(float(mid[0]), float(mid[1]))]
    ts = np.linspace(0.0, 1.0, m)
    pts = p_start[None, :] + ts[:, None] * (p_end - p_start)[None, :]
    return [PixelPoint(float(u), float(v)) for u, v in pts]


def se3_delta(pose_t: CameraPose, pose_prev: CameraPose) -> np.ndarray:
    """Relative rigid motion between consecutive poses, flattened to 12 values.

    Returns delta = pose_t @ pose_prev^-1 as (9 row-major rotation entries,
    3 translation entries), so compose(pose_prev, delta) == pose_t and zero
    motion yields flatten(I, 0).
    """
    if np.array_equal(pose_t.rotation, pose_prev.rotation) and np.array_equal(
        pose_t.translation, pose_prev.translation
    ):
        # exact zero-motion identity, free of roundoff from the compose path
        return np.concatenate([np.eye(3).reshape(9), np.zeros(3)])
    inv = pose_prev.inverse()
    r = pose_t.rotation @ inv.rotation
    t = pose_t.rotation @ inv.translation + pose_t.translation
    return np.concatenate([r.reshape(9), t])
