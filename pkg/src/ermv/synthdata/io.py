"""Trajectory dataset directory format.

Layout: `meta.json` (T, N, H, W, d, seed, config echo), `frames/` with one
8-bit RGB PNG per (t, v) named t{t:04}_v{v:02}.png (linear-to-sRGB on write,
inverse on read), `states.json` (poses as 3x4 row-major arrays, intrinsics,
q_t, a_t per timestep), and `masks/` with 8-bit grayscale PNGs (0 or 255).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from ..geom import CameraPose, Intrinsics
from .generate import GroundTruthMasks, Trajectory


class IoError(OSError):
    pass


def linear_to_srgb(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return np.where(x <= 0.0031308, 12.92 * x, 1.055 * np.power(x, 1.0 / 2.4) - 0.055)


def srgb_to_linear(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return np.where(x <= 0.04045, x / 12.92, np.power((x + 0.055) / 1.055, 2.4))


def write_image(path: Path, img: np.ndarray) -> None:
    data = np.round(linear_to_srgb(img) * 255.0).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(path)


def read_image(path: Path) -> np.ndarray:
    data = np.asarray(Image.open(path).convert("RGB"), dtype=np.float64) / 255.0
    return srgb_to_linear(data)


def frame_name(t: int, v: int) -> str:
    return f"t{t:04}_v{v:02}.png"


def write_dataset(
    root, traj: Trajectory, masks: GroundTruthMasks | None = None, config_echo: dict | None = None
) -> None:
    root = Path(root)
    if not root.parent.exists():
        raise IoError(f"parent directory does not exist: {root.parent}")
    (root / "frames").mkdir(parents=True, exist_ok=True)
    T, N, H, W = traj.images.shape[:4]
    meta = {
        "T": T,
        "N": N,
        "H": H,
        "W": W,
        "d": traj.dof,
        "seed": (config_echo or {}).get("seed"),
        "config": config_echo or {},
    }
    (root / "meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True))

    for t in range(T):
        for v in range(N):
            write_image(root / "frames" / frame_name(t, v), traj.images[t, v])

    states = {
        "intrinsics": [
            {
                "fx": i.fx,
                "fy": i.fy,
                "cx": i.cx,
                "cy": i.cy,
                "width": i.width,
                "height": i.height,
            }
            for i in traj.intrinsics
        ],
        "timesteps": [
            {
                "t": t,
                "q": traj.q[t].tolist(),
                "a": traj.actions[t].tolist(),
                "poses": [
                    np.hstack(
                        [traj.poses[t][v].rotation, traj.poses[t][v].translation[:, None]]
                    )
                    .reshape(-1)
                    .tolist()
                    for v in range(N)
                ],
            }
            for t in range(T)
        ],
    }
    (root / "states.json").write_text(json.dumps(states))

    if masks is not None:
        (root / "masks").mkdir(exist_ok=True)
        for t in range(T):
            for v in range(N):
                arr = (masks.masks[t, v] * 255).astype(np.uint8)
                Image.fromarray(arr, mode="L").save(root / "masks" / frame_name(t, v))


def load_dataset(root) -> tuple[Trajectory, GroundTruthMasks | None, dict]:
    root = Path(root)
    if not (root / "meta.json").exists():
        raise IoError(f"not a dataset directory: {root}")
    meta = json.loads((root / "meta.json").read_text())
    states = json.loads((root / "states.json").read_text())
    T, N, H, W = meta["T"], meta["N"], meta["H"], meta["W"]

    images = np.zeros((T, N, H, W, 3))
    for t in range(T):
        for v in range(N):
            images[t, v] = read_image(root / "frames" / frame_name(t, v))

    intrinsics = [
        Intrinsics(
            fx=i["fx"], fy=i["fy"], cx=i["cx"], cy=i["cy"], width=i["width"], height=i["height"]
        )
        for i in states["intrinsics"]
    ]
    poses = []
    q = np.zeros((T, meta["d"]))
    actions = np.zeros((T, meta["d"]))
    for entry in states["timesteps"]:
        t = entry["t"]
        q[t] = entry["q"]
        actions[t] = entry["a"]
        row = []
        for flat in entry["poses"]:
            m = np.asarray(flat, dtype=np.float64).reshape(3, 4)
            row.append(CameraPose(m[:, :3], m[:, 3]))
        poses.append(row)

    masks = None
    if (root / "masks").exists():
        arr = np.zeros((T, N, H, W), dtype=np.uint8)
        for t in range(T):
            for v in range(N):
                m = np.asarray(Image.open(root / "masks" / frame_name(t, v)), dtype=np.uint8)
                arr[t, v] = (m > 127).astype(np.uint8)
        masks = GroundTruthMasks(masks=arr)

    traj = Trajectory(images=images, poses=poses, intrinsics=intrinsics, q=q, actions=actions)
    return traj, masks, meta
