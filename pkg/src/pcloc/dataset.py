"""Frame directories: PNG images, an index of ``timestamp filename`` lines,
camera intrinsics as JSON and an optional ground-truth trajectory."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from PIL import Image

from .errors import FormatError
from .geometry import Intrinsics, Trajectory, read_trajectory, write_trajectory

INDEX_NAME = "index.txt"
INTRINSICS_NAME = "intrinsics.json"
GROUND_TRUTH_NAME = "groundtruth.txt"


def save_intrinsics(path: str | Path, K: Intrinsics) -> None:
    d = dict(zip(("fx", "fy", "cx", "cy"), K.as_tuple()[:4]), width=K.width, height=K.height)
    Path(path).write_text(json.dumps(d, indent=2) + "\n")


def load_intrinsics(path: str | Path) -> Intrinsics:
    d = json.loads(Path(path).read_text())
    try:
        return Intrinsics(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
                          int(d["width"]), int(d["height"]))
    except KeyError as e:
        raise FormatError(f"{path}: missing intrinsics field {e}") from e


def load_image(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def save_image(path: str | Path, img: np.ndarray) -> None:
    Image.fromarray(np.asarray(img, dtype=np.uint8)).save(path)


def write_frames(directory: str | Path, timestamps: Sequence[float], images: Sequence[np.ndarray],
                 K: Intrinsics | None = None, ground_truth: Trajectory | None = None) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    lines = []
    for i, (ts, img) in enumerate(zip(timestamps, images)):
        name = f"frame_{i:05d}.png"
        save_image(d / name, img)
        lines.append(f"{float(ts)!r} {name}")
    (d / INDEX_NAME).write_text("\n".join(lines) + "\n")
    if K is not None:
        save_intrinsics(d / INTRINSICS_NAME, K)
    if ground_truth is not None:
        write_trajectory(d / GROUND_TRUTH_NAME, ground_truth)
    return d


def read_index(directory: str | Path) -> list[tuple[float, Path]]:
    d = Path(directory)
    idx = d / INDEX_NAME
    if not idx.exists():
        raise FormatError(f"{d}: no {INDEX_NAME}")
    out = []
    for lineno, line in enumerate(idx.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(maxsplit=1)
        if len(parts) != 2:
            raise FormatError(f"{idx}:{lineno}: expected 'timestamp filename'")
        out.append((float(parts[0]), d / parts[1]))
    return out


def iter_frames(directory: str | Path) -> Iterator[tuple[float, np.ndarray]]:
    for ts, path in read_index(directory):
        yield ts, load_image(path)


def frame_intrinsics(directory: str | Path) -> Intrinsics | None:
    p = Path(directory) / INTRINSICS_NAME
    return load_intrinsics(p) if p.exists() else None


def frame_ground_truth(directory: str | Path) -> Trajectory | None:
    p = Path(directory) / GROUND_TRUTH_NAME
    return read_trajectory(p) if p.exists() else None
