from .scene import (
    CHECKER_TEXTURES,
    ArmSpec,
    EditSpec,
    EmptyMask,
    InvalidConfig,
    ObjectSpec,
    SceneConfig,
    TableSpec,
    UnknownObjectId,
    apply_edit,
    degrade,
)
from .generate import (
    GroundTruthMasks,
    MotionSpec,
    Trajectory,
    arm_points,
    desk_scene,
    generate_trajectory,
    scene_geometry,
)
from .render import ARM_ID, BACKGROUND_ID, TABLE_ID, SceneGeometry, protected_hits, render_geometry, render_mask, render_view
from .io import IoError, frame_name, linear_to_srgb, load_dataset, read_image, srgb_to_linear, write_dataset, write_image

__all__ = [
    "ARM_ID",
    "BACKGROUND_ID",
    "CHECKER_TEXTURES",
    "TABLE_ID",
    "ArmSpec",
    "EditSpec",
    "EmptyMask",
    "GroundTruthMasks",
    "InvalidConfig",
    "IoError",
    "MotionSpec",
    "ObjectSpec",
    "SceneConfig",
    "SceneGeometry",
    "TableSpec",
    "Trajectory",
    "UnknownObjectId",
    "apply_edit",
    "arm_points",
    "degrade",
    "desk_scene",
    "frame_name",
    "generate_trajectory",
    "linear_to_srgb",
    "load_dataset",
    "read_image",
    "render_geometry",
    "render_mask",
    "render_view",
    "scene_geometry",
    "srgb_to_linear",
    "write_dataset",
    "write_image",
]
