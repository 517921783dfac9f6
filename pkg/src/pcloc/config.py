"""Pipeline configuration: one nested dataclass, JSON round trip, stable hash."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .features import FeatureConfig
from .pose import RansacConfig
from .renderer import RenderConfig


@dataclass(frozen=True)
class LiftConfig:
    # half-size of the pixel window whose LiDAR points define the local plane
    window_radius: int = 2
    plane_fit: bool = True
    min_points: int = 4
    # max plane RMS residual as a fraction of the depth band
    max_rms_band: float = 0.02
    # drop keypoints whose neighbourhood is not planar (creases, corners, silhouettes)
    reject_nonplanar: bool = True
    # without a usable plane (too few points), keep the plain pixel depth
    fallback_pixel_depth: bool = False
    # window searched for a measured seed when the nearest pixel is a hole (0: off)
    sparse_window_radius: int = 3

    def __post_init__(self):
        if self.window_radius < 1 or self.min_points < 3 or self.sparse_window_radius < 0:
            raise ValueError("window_radius >= 1, sparse_window_radius >= 0 and min_points >= 3 required")


@dataclass(frozen=True)
class TrackerConfig:
    max_failures: int = 3
    max_features: int = 1000
    # max keypoint motion (pixels per frame) between render and query; 0 disables the gate
    search_radius: float = 48.0

    def __post_init__(self):
        if self.max_failures < 1:
            raise ValueError("max_failures must be >= 1")


@dataclass(frozen=True)
class RelocConfig:
    face_resolution: int = 512
    max_features: int = 1000
    # records tried with PnP, in descending match count
    max_candidates: int = 8
    min_matches: int = 15

    def __post_init__(self):
        if self.face_resolution < 64:
            raise ValueError("face_resolution must be >= 64")


@dataclass(frozen=True)
class MapConfig:
    n_directions: int = 4
    pitch_deg: float = 15.0
    max_features: int = 1000
    merge_window: float = 1.5  # half-width of the pixel window, 3x3 pixels
    merge_max_distance: int = 64
    k_nearest: int = 3
    # weight converting rotation (radians) into meters for keyframe distance
    angle_weight: float = 1.0
    # search-by-projection after the first pose: one round per radius (px)
    guided_radii: tuple[float, ...] = (4.0, 2.0)
    guided_keyframes: int = 24
    # RANSAC inlier threshold (px) for map localization; map points are sharper than render lifts
    reproj_threshold: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "guided_radii", tuple(float(r) for r in self.guided_radii))
        if any(r <= 0 for r in self.guided_radii) or self.guided_keyframes < 1:
            raise ValueError("guided radii must be positive and guided_keyframes >= 1")
        if self.n_directions not in (4, 8):
            raise ValueError("n_directions must be 4 or 8")
        if self.k_nearest < 1:
            raise ValueError("k_nearest must be >= 1")
        if not self.reproj_threshold > 0:
            raise ValueError("reproj_threshold must be > 0")


@dataclass(frozen=True)
class PipelineConfig:
    render: RenderConfig = field(default_factory=RenderConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    ransac: RansacConfig = field(default_factory=RansacConfig)
    lift: LiftConfig = field(default_factory=LiftConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    reloc: RelocConfig = field(default_factory=RelocConfig)
    map: MapConfig = field(default_factory=MapConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        kw = {}
        for f in dataclasses.fields(cls):
            if f.name in d:
                sub_cls = type(f.default_factory())
                names = {g.name for g in dataclasses.fields(sub_cls)}
                unknown = set(d[f.name]) - names
                if unknown:
                    raise ValueError(f"unknown keys in [{f.name}]: {sorted(unknown)}")
                kw[f.name] = sub_cls(**d[f.name])
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ValueError(f"unknown config sections: {sorted(unknown)}")
        return cls(**kw)

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    def replace(self, **sections) -> "PipelineConfig":
        return dataclasses.replace(self, **sections)


def config_hash(*parts) -> bytes:
    """sha256 over the canonical JSON of dataclasses / plain values."""
    def norm(x):
        if dataclasses.is_dataclass(x):
            return dataclasses.asdict(x)
        return x
    blob = json.dumps([norm(p) for p in parts], sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).digest()
