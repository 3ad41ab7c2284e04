"""Oriented point clouds (base-frame mm)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import EmptyCloud, ShapeMismatch
from . import io as core_io


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray  # (n, 3) mm
    normals: np.ndarray = None  # type: ignore[assignment]  # (n, 3) unit

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        n = self.normals
        if n is not None:
            n = np.asarray(n, dtype=np.float64).reshape(-1, 3)
            if n.shape[0] != p.shape[0]:
                raise ShapeMismatch("normals/points count mismatch")
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "normals", n)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def has_normals(self) -> bool:
        return self.normals is not None

    def require_nonempty(self) -> "PointCloud":
        if len(self) == 0:
            raise EmptyCloud("point cloud is empty")
        return self

    def transformed(self, R: np.ndarray, t: np.ndarray) -> "PointCloud":
        pts = self.points @ np.asarray(R).T + np.asarray(t).reshape(3)
        nrm = self.normals @ np.asarray(R).T if self.has_normals else None
        return PointCloud(pts, nrm)

    def save_ply(self, path) -> None:
        core_io.write_ply(path, self.points, self.normals)

    @staticmethod
    def load_ply(path) -> "PointCloud":
        pts, nrm = core_io.read_ply(path)
        return PointCloud(pts, nrm)
