"""Pinhole camera model, projection and two-view triangulation.

Frames
------
robot/base frame : X, Y in the table plane, Z up, units mm
camera frame     : x right, y down, z forward (optical axis), units mm

``pose`` maps base-frame points into the camera frame:
p_cam = R @ p_base + t.

Projection is the undistorted pinhole map u = fx*x/z + cx, v = fy*y/z + cy
with pixel centers at integer coordinates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateRays, PointBehindCamera
from .transforms import RigidTransform3D

MIN_TRIANGULATION_DEG = 0.5


@dataclass(frozen=True)
class CameraModel:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    pose: RigidTransform3D  # base -> camera

    def __post_init__(self):
        for name in ("fx", "fy"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")

    # ------------------------------------------------------------ geometry
    @property
    def center(self) -> np.ndarray:
        """Camera center in the base frame."""
        return self.pose.inverse().t

    def to_camera(self, pts: np.ndarray) -> np.ndarray:
        return self.pose.apply(pts)

    def to_base(self, pts: np.ndarray) -> np.ndarray:
        return self.pose.inverse().apply(pts)

    def project(self, pts: np.ndarray, frame: str = "base") -> np.ndarray:
        """Project (..., 3) points to (..., 2) pixel coordinates.

        Raises PointBehindCamera if any point has z <= 0 in the camera frame.
        """
        pts = np.asarray(pts, dtype=np.float64)
        pc = self.to_camera(pts) if frame == "base" else pts
        z = pc[..., 2]
        if np.any(z <= 0):
            raise PointBehindCamera(f"{int(np.sum(z <= 0))} point(s) with z <= 0")
        u = self.fx * pc[..., 0] / z + self.cx
        v = self.fy * pc[..., 1] / z + self.cy
        return np.stack([u, v], axis=-1)

    def pixel_rays(self, px: np.ndarray, frame: str = "base"):
        """Rays through pixels: returns (origin (3,), unit dirs (..., 3)).

        In the base frame all rays share the camera center as origin.
        """
        px = np.asarray(px, dtype=np.float64)
        d = np.stack(
            [
                (px[..., 0] - self.cx) / self.fx,
                (px[..., 1] - self.cy) / self.fy,
                np.ones(px.shape[:-1]),
            ],
            axis=-1,
        )
        d /= np.linalg.norm(d, axis=-1, keepdims=True)
        if frame == "camera":
            return np.zeros(3), d
        inv = self.pose.inverse()
        return inv.t, d @ inv.R.T

    def back_project(self, px: np.ndarray, depth: np.ndarray, frame: str = "base"):
        """Lift pixels to 3D given per-pixel depth (camera-frame z, mm)."""
        px = np.asarray(px, dtype=np.float64)
        z = np.asarray(depth, dtype=np.float64)
        pc = np.stack(
            [
                (px[..., 0] - self.cx) / self.fx * z,
                (px[..., 1] - self.cy) / self.fy * z,
                z,
            ],
            axis=-1,
        )
        return pc if frame == "camera" else self.to_base(pc)

    def pixel_grid(self):
        """(h, w) meshes of u and v pixel-center coordinates."""
        u = np.arange(self.width, dtype=np.float64)
        v = np.arange(self.height, dtype=np.float64)
        return np.meshgrid(u, v)

    def table_xy(self, table_z: float = 0.0):
        """Intersect every pixel ray with the plane z = table_z (base frame).

        Returns (h, w, 2) base-frame XY. Rays parallel to the table give nan.
        """
        uu, vv = self.pixel_grid()
        px = np.stack([uu, vv], axis=-1)
        origin, dirs = self.pixel_rays(px.reshape(-1, 2))
        dz = dirs[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            s = (table_z - origin[2]) / dz
        pts = origin[None, :] + s[:, None] * dirs
        pts[np.abs(dz) < 1e-12] = np.nan
        return pts[:, :2].reshape(self.height, self.width, 2)

    # ------------------------------------------------------------ serialization
    def to_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
            "pose": self.pose.to_dict(),
        }

    @staticmethod
    def from_dict(d: dict) -> "CameraModel":
        return CameraModel(
            fx=float(d["fx"]),
            fy=float(d["fy"]),
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            width=int(d["width"]),
            height=int(d["height"]),
            pose=RigidTransform3D.from_dict(d["pose"]),
        )

    def save_json(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")

    @staticmethod
    def load_json(path) -> "CameraModel":
        with open(path) as f:
            return CameraModel.from_dict(json.load(f))


def look_at_camera(
    eye,
    target,
    fx: float,
    width: int,
    height: int,
    fy: float | None = None,
    up=(0.0, 1.0, 0.0),
) -> CameraModel:
    """Build a camera at ``eye`` whose optical axis points at ``target``.

    ``up`` picks the image +v direction (projected). Default (0,1,0) keeps
    base +Y pointing down the image for an overhead camera.
    """
    eye = np.asarray(eye, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    fwd = target - eye
    fwd = fwd / np.linalg.norm(fwd)
    upv = np.asarray(up, dtype=np.float64)
    right = np.cross(upv, fwd)
    nr = np.linalg.norm(right)
    if nr < 1e-12:
        # up parallel to forward; pick another hint
        upv = np.array([1.0, 0.0, 0.0])
        right = np.cross(upv, fwd)
        nr = np.linalg.norm(right)
    right /= nr
    down = np.cross(fwd, right)
    # rows of R are the camera axes expressed in the base frame
    R = np.stack([right, down, fwd], axis=0)
    t = -R @ eye
    pose = RigidTransform3D(R, t)
    if fy is None:
        fy = fx
    return CameraModel(
        fx=fx, fy=fy, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0,
        width=width, height=height, pose=pose,
    )


def triangulate(cam1: CameraModel, px1, cam2: CameraModel, px2):
    """Midpoint triangulation of one pixel correspondence.

    Returns (point (3,), residual) where residual is half the gap between
    the two rays at closest approach (mm). Raises DegenerateRays when the
    rays subtend less than half a degree.
    """
    o1, d1 = cam1.pixel_rays(np.asarray(px1, dtype=np.float64))
    o2, d2 = cam2.pixel_rays(np.asarray(px2, dtype=np.float64))
    d1 = d1.reshape(3)
    d2 = d2.reshape(3)
    cosang = abs(float(np.dot(d1, d2)))
    if cosang > np.cos(np.deg2rad(MIN_TRIANGULATION_DEG)):
        raise DegenerateRays(
            f"rays subtend {np.rad2deg(np.arccos(min(cosang, 1.0))):.4f} deg"
        )
    # closest points: solve [d1.d1  -d1.d2; d1.d2  -d2.d2] [s; t] = [d1.(o2-o1); d2.(o2-o1)]
    w = o2 - o1
    a = np.dot(d1, d1)
    b = np.dot(d1, d2)
    c = np.dot(d2, d2)
    e = np.dot(d1, w)
    f = np.dot(d2, w)
    den = a * c - b * b
    s = (c * e - b * f) / den
    t = (b * e - a * f) / den
    p1 = o1 + s * d1
    p2 = o2 + t * d2
    gap = float(np.linalg.norm(p1 - p2))
    return 0.5 * (p1 + p2), 0.5 * gap
