"""Scene configuration, edit specifications, and image degradation fixtures."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import gaussian_filter

CHECKER_TEXTURES = {
    "checker_gray": ((0.55, 0.55, 0.58), (0.35, 0.35, 0.38)),
    "checker_warm": ((0.70, 0.55, 0.40), (0.45, 0.33, 0.22)),
    "checker_cool": ((0.35, 0.45, 0.65), (0.20, 0.28, 0.45)),
}


class InvalidConfig(ValueError):
    pass


class UnknownObjectId(KeyError):
    pass


class EmptyMask(ValueError):
    pass


def _color(c):
    c = tuple(float(x) for x in c)
    if len(c) != 3 or any(not (0.0 <= x <= 1.0) for x in c):
        raise InvalidConfig(f"color must be an RGB triple in [0,1], got {c}")
    return c


@dataclass(frozen=True)
class ObjectSpec:
    id: str
    shape: str  # "sphere" | "box"
    center: tuple  # meters, world frame
    size: float  # sphere radius or box half-extent
    color: tuple
    velocity: tuple = (0.0, 0.0, 0.0)  # meters per frame

    def __post_init__(self):
        if self.shape not in ("sphere", "box"):
            raise InvalidConfig(f"unknown shape {self.shape!r}")
        if self.size <= 0:
            raise InvalidConfig("object size must be positive")
        object.__setattr__(self, "center", tuple(float(x) for x in self.center))
        object.__setattr__(self, "color", _color(self.color))
        object.__setattr__(self, "velocity", tuple(float(x) for x in self.velocity))


@dataclass(frozen=True)
class ArmSpec:
    """Planar chain of revolute segments rendered as capsules."""

    lengths: tuple  # per-segment length, meters
    radius: float = 0.035
    color: tuple = (0.85, 0.45, 0.10)
    base: tuple = (-0.42, 0.0, 0.0)  # world position of the chain root
    plane_yaw: float = 0.0  # orientation of the chain's vertical plane

    def __post_init__(self):
        if len(self.lengths) < 1:
            raise InvalidConfig("arm needs at least one segment")
        object.__setattr__(self, "lengths", tuple(float(x) for x in self.lengths))
        object.__setattr__(self, "color", _color(self.color))

    @property
    def dof(self) -> int:
        return len(self.lengths)


@dataclass(frozen=True)
class TableSpec:
    half_x: float = 0.50
    half_y: float = 0.38
    color: tuple = (0.62, 0.47, 0.32)

    def __post_init__(self):
        object.__setattr__(self, "color", _color(self.color))


@dataclass(frozen=True)
class SceneConfig:
    background: object = (0.16, 0.20, 0.26)  # RGB triple or checker texture id
    table: TableSpec = field(default_factory=TableSpec)
    objects: tuple = ()
    arm: ArmSpec = field(default_factory=lambda: ArmSpec(lengths=(0.22, 0.20, 0.16, 0.12)))
    protected_ids: tuple = ()  # objects masked alongside the arm
    seed: int = 0

    def __post_init__(self):
        objects = tuple(self.objects)
        ids = [o.id for o in objects]
        if len(set(ids)) != len(ids):
            raise InvalidConfig("object ids must be unique")
        if isinstance(self.background, str):
            if self.background not in CHECKER_TEXTURES:
                raise InvalidConfig(f"unknown texture id {self.background!r}")
        else:
            object.__setattr__(self, "background", _color(self.background))
        unknown = set(self.protected_ids) - set(ids)
        if unknown:
            raise InvalidConfig(f"protected ids not in scene: {sorted(unknown)}")
        object.__setattr__(self, "objects", objects)
        object.__setattr__(self, "protected_ids", tuple(self.protected_ids))

    def object_by_id(self, oid: str) -> ObjectSpec:
        for o in self.objects:
            if o.id == oid:
                return o
        raise UnknownObjectId(oid)


@dataclass(frozen=True)
class EditSpec:
    """Declarative scene edit; protected objects are never touched."""

    background_override: object = None
    add_distractors: tuple = ()
    remove_ids: tuple = ()
    protected_ids: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "add_distractors", tuple(self.add_distractors))
        object.__setattr__(self, "remove_ids", tuple(self.remove_ids))
        object.__setattr__(self, "protected_ids", tuple(self.protected_ids))
        overlap = set(self.remove_ids) & set(self.protected_ids)
        if overlap:
            raise InvalidConfig(f"cannot remove protected objects: {sorted(overlap)}")


def apply_edit(cfg: SceneConfig, edit: EditSpec) -> SceneConfig:
    """Apply an EditSpec, returning the edited scene configuration.

    Re-rendering the result with the same motion yields the ground-truth
    edited trajectory.
    """
    protected = set(edit.protected_ids) | set(cfg.protected_ids)
    overlap = protected & set(edit.remove_ids)
    if overlap:
        raise InvalidConfig(f"cannot remove protected objects: {sorted(overlap)}")
    known = {o.id for o in cfg.objects}
    missing = set(edit.remove_ids) - known
    if missing:
        raise UnknownObjectId(sorted(missing)[0])
    objects = [o for o in cfg.objects if o.id not in edit.remove_ids]
    for d in edit.add_distractors:
        if d.id in {o.id for o in objects}:
            raise InvalidConfig(f"distractor id {d.id!r} already in scene")
        objects.append(d)
    background = cfg.background if edit.background_override is None else edit.background_override
    return replace(cfg, background=background, objects=tuple(objects))


def degrade(image, mask, mode: str, background=(0.5, 0.5, 0.5), seed: int = 0):
    """Synthetically damage the masked region of an image.

    Modes: "erase" fills with the background color, "blur" applies a strong
    Gaussian blur, "shift" displaces the underlying content. Pixels outside
    the mask are never changed.
    """
    image = np.asarray(image, dtype=np.float64)
    mask = np.asarray(mask).astype(bool)
    if mask.shape != image.shape[:2]:
        raise ValueError(f"mask shape {mask.shape} does not match image {image.shape}")
    if not mask.any():
        raise EmptyMask("degradation mask has no pixels")
    out = image.copy()
    if mode == "erase":
        out[mask] = np.asarray(background, dtype=np.float64)
    elif mode == "blur":
        blurred = np.stack(
            [gaussian_filter(image[..., c], sigma=3.0) for c in range(image.shape[2])],
            axis=-1,
        )
        out[mask] = blurred[mask]
    elif mode == "shift":
        rng = np.random.default_rng(np.random.Philox(key=seed))
        dy, dx = rng.integers(3, 7, size=2)
        rolled = np.roll(image, (int(dy), int(dx)), axis=(0, 1))
        out[mask] = rolled[mask]
    else:
        raise ValueError(f"unknown degradation mode {mode!r}")
    return out
