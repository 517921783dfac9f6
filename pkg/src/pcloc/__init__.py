"""Camera localization against colored LiDAR point clouds.

Live frames are matched against views rendered from the cloud (Render &
Match), or against a landmark map prebuilt from rendered keyframes
(Prebuild & Localize).
"""

from .cloud import PointCloud, read_ply, write_ply
from .config import PipelineConfig
from .geometry import Intrinsics, RigidPose, Trajectory, read_trajectory, write_trajectory
from .renderer import RenderConfig, render

__all__ = [
    "Intrinsics",
    "PipelineConfig",
    "PointCloud",
    "RenderConfig",
    "RigidPose",
    "Trajectory",
    "read_ply",
    "read_trajectory",
    "render",
    "write_ply",
    "write_trajectory",
]
