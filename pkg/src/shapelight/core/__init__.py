"""Geometry and raster primitives shared by every stage."""

from .camera import CameraModel, look_at_camera, triangulate
from .image import EdgeMap, ImageF
from .pointcloud import PointCloud
from .rasterops import (
    euclidean_distance_transform,
    hysteresis_threshold,
    nearest_true_indices,
)
from .transforms import (
    RigidTransform2D,
    RigidTransform3D,
    rot_x,
    rot_y,
    rot_z,
    wrap_angle,
)
from . import io

__all__ = [
    "CameraModel",
    "EdgeMap",
    "ImageF",
    "PointCloud",
    "RigidTransform2D",
    "RigidTransform3D",
    "euclidean_distance_transform",
    "hysteresis_threshold",
    "io",
    "look_at_camera",
    "nearest_true_indices",
    "rot_x",
    "rot_y",
    "rot_z",
    "triangulate",
    "wrap_angle",
]
