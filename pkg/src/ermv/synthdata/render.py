"""Analytic ray-cast renderer with exact z-buffering.

Primary rays only (no bounces, no cast shadows): every pixel gets the color
of its nearest primitive under flat Lambertian shading from one directional
light, or the procedural background. This keeps the ground truth exact and
makes occlusion-aware object masks a byproduct of the same hit test.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geom import CameraPose, Intrinsics
from .scene import CHECKER_TEXTURES

LIGHT_DIR = np.array([0.35, -0.25, -0.90])
LIGHT_DIR = LIGHT_DIR / np.linalg.norm(LIGHT_DIR)
AMBIENT = 0.40
_EPS = 1e-9

TABLE_ID = "__table__"
ARM_ID = "__arm__"
BACKGROUND_ID = "__background__"


@dataclass
class SceneGeometry:
    """Primitive soup at one instant of time."""

    sphere_centers: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    sphere_radii: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sphere_colors: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    sphere_ids: list = field(default_factory=list)
    box_centers: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    box_half: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    box_colors: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    box_ids: list = field(default_factory=list)
    capsule_a: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    capsule_b: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    capsule_radius: float = 0.02
    capsule_color: tuple = (0.8, 0.4, 0.1)
    table_half: tuple = (0.5, 0.38)
    table_color: tuple = (0.6, 0.45, 0.3)
    background: object = (0.15, 0.2, 0.25)


def _ray_grid(pose: CameraPose, intr: Intrinsics):
    """Camera center and normalized world-frame ray directions per pixel."""
    u, v = np.meshgrid(
        np.arange(intr.width, dtype=np.float64),
        np.arange(intr.height, dtype=np.float64),
    )
    x = (u - intr.cx) / intr.fx
    y = (v - intr.cy) / intr.fy
    d_cam = np.stack([x, y, np.ones_like(x)], axis=-1)
    d_world = d_cam @ pose.rotation  # R^T applied to rows
    d_world /= np.linalg.norm(d_world, axis=-1, keepdims=True)
    return pose.center(), d_world


def _shade(colors: np.ndarray, normals: np.ndarray) -> np.ndarray:
    lam = np.clip(-(normals @ LIGHT_DIR), 0.0, 1.0)
    return colors * (AMBIENT + (1.0 - AMBIENT) * lam)[..., None]


def _background_color(background, dirs: np.ndarray) -> np.ndarray:
    if isinstance(background, str):
        c0, c1 = CHECKER_TEXTURES[background]
        az = np.arctan2(dirs[..., 1], dirs[..., 0])
        el = np.arcsin(np.clip(dirs[..., 2], -1.0, 1.0))
        parity = (np.floor(az / 0.45) + np.floor(el / 0.45)) % 2
        out = np.where(parity[..., None] > 0.5, np.asarray(c1), np.asarray(c0))
        return out
    return np.broadcast_to(np.asarray(background, dtype=np.float64), dirs.shape).copy()


def render_geometry(geom: SceneGeometry, pose: CameraPose, intr: Intrinsics):
    """Render one view; returns (image HxWx3, hit_id HxW object array)."""
    origin, dirs = _ray_grid(pose, intr)
    h, w = dirs.shape[:2]
    best_t = np.full((h, w), np.inf)
    color = _background_color(geom.background, dirs)
    hit_id = np.full((h, w), BACKGROUND_ID, dtype=object)

    def consider(t, mask, shaded, tag):
        closer = mask & (t < best_t)
        if not closer.any():
            return
        best_t[closer] = t[closer]
        color[closer] = shaded[closer]
        hit_id[closer] = tag

    # table: rectangle in the z = 0 plane
    dz = dirs[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        t_tab = np.where(np.abs(dz) > _EPS, -origin[2] / dz, np.inf)
    pt = origin[None, None, :] + t_tab[..., None] * dirs
    tab_mask = (
        (t_tab > _EPS)
        & (np.abs(pt[..., 0]) <= geom.table_half[0])
        & (np.abs(pt[..., 1]) <= geom.table_half[1])
    )
    normal = np.zeros((h, w, 3))
    normal[..., 2] = -np.sign(dz)
    consider(
        t_tab,
        tab_mask,
        _shade(np.broadcast_to(np.asarray(geom.table_color), (h, w, 3)), normal),
        TABLE_ID,
    )

    # spheres
    for k in range(len(geom.sphere_radii)):
        c = geom.sphere_centers[k]
        r = geom.sphere_radii[k]
        oc = origin - c
        b = dirs @ oc
        disc = b * b - (oc @ oc - r * r)
        ok = disc >= 0.0
        sq = np.sqrt(np.where(ok, disc, 0.0))
        t = -b - sq
        mask = ok & (t > _EPS)
        hit = origin[None, None, :] + t[..., None] * dirs
        n = (hit - c) / r
        shaded = _shade(np.broadcast_to(geom.sphere_colors[k], (h, w, 3)), n)
        consider(t, mask, shaded, geom.sphere_ids[k])

    # axis-aligned boxes (slab method)
    for k in range(len(geom.box_ids)):
        c = geom.box_centers[k]
        half = geom.box_half[k]
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / dirs
        t1 = (c - half - origin) * inv
        t2 = (c + half - origin) * inv
        tmin = np.minimum(t1, t2).max(axis=-1)
        tmax = np.maximum(t1, t2).min(axis=-1)
        mask = (tmax >= tmin) & (tmin > _EPS)
        hit = origin[None, None, :] + tmin[..., None] * dirs
        rel = (hit - c) / half
        axis = np.argmax(np.abs(rel), axis=-1)
        n = np.zeros((h, w, 3))
        for ax in range(3):
            sel = axis == ax
            n[sel, ax] = np.sign(rel[sel, ax])
        shaded = _shade(np.broadcast_to(geom.box_colors[k], (h, w, 3)), n)
        consider(tmin, mask, shaded, geom.box_ids[k])

    # arm capsules
    for k in range(len(geom.capsule_a)):
        a = geom.capsule_a[k]
        bseg = geom.capsule_b[k]
        r = geom.capsule_radius
        axis_vec = bseg - a
        seg_len = np.linalg.norm(axis_vec)
        if seg_len < 1e-12:
            continue
        wv = axis_vec / seg_len
        p = origin - a
        d_par = dirs @ wv
        p_par = p @ wv
        d_perp = dirs - d_par[..., None] * wv
        p_perp = p - p_par * wv
        qa = np.sum(d_perp * d_perp, axis=-1)
        qb = d_perp @ p_perp
        qc = p_perp @ p_perp - r * r
        disc = qb * qb - qa * qc
        ok = (disc >= 0.0) & (qa > _EPS)
        sq = np.sqrt(np.where(ok, disc, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            t_cyl = np.where(ok, (-qb - sq) / qa, np.inf)
        s = p_par + t_cyl * d_par  # position along the segment axis
        cyl_mask = ok & (t_cyl > _EPS) & (s >= 0.0) & (s <= seg_len)
        t_best = np.where(cyl_mask, t_cyl, np.inf)
        # spherical caps
        for cap in (a, bseg):
            oc = origin - cap
            b2 = dirs @ oc
            disc2 = b2 * b2 - (oc @ oc - r * r)
            ok2 = disc2 >= 0.0
            t_cap = -b2 - np.sqrt(np.where(ok2, disc2, 0.0))
            cap_mask = ok2 & (t_cap > _EPS)
            t_best = np.where(cap_mask & (t_cap < t_best), t_cap, t_best)
        mask = np.isfinite(t_best)
        t_fin = np.where(mask, t_best, 0.0)
        hit = origin[None, None, :] + t_fin[..., None] * dirs
        s_hit = np.clip((hit - a) @ wv, 0.0, seg_len)
        nearest = a[None, None, :] + s_hit[..., None] * wv[None, None, :]
        n = hit - nearest
        norm = np.linalg.norm(n, axis=-1, keepdims=True)
        n = np.where(norm > 1e-12, n / np.maximum(norm, 1e-12), 0.0)
        shaded = _shade(np.broadcast_to(np.asarray(geom.capsule_color), (h, w, 3)), n)
        consider(t_best, mask, shaded, ARM_ID)

    return color, hit_id


def render_view(geometry_at, camera_at, intr: Intrinsics, substeps: int = 1):
    """Average `substeps` renders across the shutter interval.

    `geometry_at` and `camera_at` map a phase in [0, 1] to the scene geometry
    and camera pose. substeps = 1 renders the interval midpoint (sharp).
    """
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    acc = None
    for s in range(substeps):
        tau = (s + 0.5) / substeps
        img, _ = render_geometry(geometry_at(tau), camera_at(tau), intr)
        acc = img if acc is None else acc + img
    return acc / substeps


def protected_hits(hit_id: np.ndarray, protected_ids) -> np.ndarray:
    tags = set(protected_ids) | {ARM_ID}
    return np.isin(hit_id, list(tags))


def render_mask(geom: SceneGeometry, pose: CameraPose, intr: Intrinsics, protected_ids):
    """Binary mask of pixels whose nearest hit is a protected object."""
    _, hit_id = render_geometry(geom, pose, intr)
    return protected_hits(hit_id, protected_ids).astype(np.uint8)
