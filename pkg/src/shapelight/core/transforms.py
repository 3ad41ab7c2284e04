"""Rigid transforms used for poses and camera extrinsics."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

ORTHONORMAL_TOL = 1e-9


def wrap_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    t = float(theta) % (2.0 * np.pi)
    if t > np.pi:
        t -= 2.0 * np.pi
    return t


def _check_rotation(R: np.ndarray, tol: float = ORTHONORMAL_TOL) -> np.ndarray:
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3):
        raise ValueError("rotation must be 3x3")
    if not np.allclose(R.T @ R, np.eye(3), atol=tol * 10, rtol=0):
        raise ValueError("rotation is not orthonormal")
    if abs(np.linalg.det(R) - 1.0) > 1e-6:
        raise ValueError("rotation determinant != +1")
    return R


def rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=np.float64)


def rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=np.float64)


def rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=np.float64)


@dataclass(frozen=True)
class RigidTransform3D:
    """p_out = R @ p_in + t. Units: mm."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "R", _check_rotation(self.R))
        t = np.asarray(self.t, dtype=np.float64).reshape(3)
        object.__setattr__(self, "t", t)

    @staticmethod
    def identity() -> "RigidTransform3D":
        return RigidTransform3D(np.eye(3), np.zeros(3))

    def apply(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        return pts @ self.R.T + self.t

    def rotate(self, vecs: np.ndarray) -> np.ndarray:
        return np.asarray(vecs, dtype=np.float64) @ self.R.T

    def inverse(self) -> "RigidTransform3D":
        return RigidTransform3D(self.R.T, -self.R.T @ self.t)

    def compose(self, other: "RigidTransform3D") -> "RigidTransform3D":
        """self after other: (self*other).apply(p) == self.apply(other.apply(p))."""
        return RigidTransform3D(self.R @ other.R, self.R @ other.t + self.t)

    def to_dict(self) -> dict:
        return {"rotation": self.R.reshape(-1).tolist(), "translation": self.t.tolist()}

    @staticmethod
    def from_dict(d: dict) -> "RigidTransform3D":
        R = np.asarray(d["rotation"], dtype=np.float64).reshape(3, 3)
        return RigidTransform3D(R, np.asarray(d["translation"], dtype=np.float64))

    def save_json(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")

    @staticmethod
    def load_json(path) -> "RigidTransform3D":
        with open(path) as f:
            return RigidTransform3D.from_dict(json.load(f))


@dataclass(frozen=True)
class RigidTransform2D:
    """Planar pose on the table: rotation theta about +Z, then offset (x, y).

    theta is stored wrapped into (-pi, pi]. Units: mm, radians.
    """

    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @staticmethod
    def identity() -> "RigidTransform2D":
        return RigidTransform2D(0.0, 0.0, 0.0)

    def apply(self, pts: np.ndarray) -> np.ndarray:
        """Apply to (n, 2) planar points."""
        pts = np.asarray(pts, dtype=np.float64)
        c, s = np.cos(self.theta), np.sin(self.theta)
        R = np.array([[c, -s], [s, c]])
        return pts @ R.T + np.array([self.x, self.y])

    def compose(self, other: "RigidTransform2D") -> "RigidTransform2D":
        c, s = np.cos(self.theta), np.sin(self.theta)
        return RigidTransform2D(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.theta + other.theta,
        )

    def inverse(self) -> "RigidTransform2D":
        c, s = np.cos(self.theta), np.sin(self.theta)
        return RigidTransform2D(
            -(c * self.x + s * self.y),
            -(-s * self.x + c * self.y),
            -self.theta,
        )

    def to_3d(self) -> RigidTransform3D:
        """Lift to 3D: rotation about +Z, translation in the z=0 plane."""
        return RigidTransform3D(rot_z(self.theta), np.array([self.x, self.y, 0.0]))

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "theta": self.theta}

    @staticmethod
    def from_dict(d: dict) -> "RigidTransform2D":
        return RigidTransform2D(d["x"], d["y"], d["theta"])

    def save_json(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")

    @staticmethod
    def load_json(path) -> "RigidTransform2D":
        with open(path) as f:
            return RigidTransform2D.from_dict(json.load(f))
