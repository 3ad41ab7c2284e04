"""Turn a normal map into depth by integrating its gradient field.

Normals fix the surface only up to a gauge: each 4-connected mask
component yields one unknown constant (orthographic) or one unknown scale
(perspective, where the constant lives in log depth). Every solve here is
the least-squares fit of per-edge depth differences to the per-edge
average of the normal-implied gradients, which is exactly the masked
5-point Poisson system with natural boundary conditions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse.linalg import cg, splu

from .core import io
from .core.camera import CameraModel
from .core.pointcloud import PointCloud
from .errors import EmptyMask, NzTooSmall, ShapeMismatch, SolverDiverged
from .normals import NormalMap

NZ_FLOOR = 1e-3
DIRECT_LIMIT = 100_000
CG_RTOL = 1e-8
_FOUR = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel depth along the camera ray.

    Each entry of ``components`` labels the 4-connected region a pixel was
    integrated in (0 outside the mask); depths are comparable only within
    one component. ``gauge_free`` records that every component carries an
    arbitrary gauge: an additive constant for orthographic integration and
    a log-domain constant (a scale) for perspective.
    """

    samples: np.ndarray  # (h, w) mm
    valid: np.ndarray  # (h, w) bool
    mode: str = "perspective"
    components: np.ndarray = None  # type: ignore[assignment]
    gauge_free: bool = True

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 2:
            raise ShapeMismatch(f"depth must be (h,w), got {s.shape}")
        v = np.asarray(self.valid, dtype=bool)
        if v.shape != s.shape:
            raise ShapeMismatch("depth/valid shape mismatch")
        if not np.isfinite(s[v]).all():
            raise ValueError("non-finite depth on valid pixels")
        if self.mode not in ("perspective", "orthographic"):
            raise ValueError(f"unknown mode {self.mode!r}")
        c = self.components
        if c is None:
            c = v.astype(np.int64)
        else:
            c = np.asarray(c, dtype=np.int64)
            if c.shape != s.shape:
                raise ShapeMismatch("components shape mismatch")
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "valid", v)
        object.__setattr__(self, "components", c)

    @property
    def shape(self):
        return self.samples.shape

    def save_pfm(self, path) -> None:
        io.write_pfm(path, np.where(self.valid, self.samples, 0.0))

    @staticmethod
    def load_pfm(path, mode: str = "perspective") -> "DepthMap":
        s = io.read_pfm(path, channels=1)
        return DepthMap(samples=s, valid=s != 0.0, mode=mode)


def _camera_frame_normals(normals: NormalMap, cam: CameraModel) -> np.ndarray:
    return normals.vectors @ cam.pose.R.T


def _gradient_fields(n_cam, mask, cam, mode):
    """Per-pixel d(depth)/du and /dv implied by the normals.

    Orthographic works on depth directly; perspective on log depth, where
    the field stays well defined because both numerator and denominator
    flip with the normal's sign convention.
    """
    nz = n_cam[..., 2]
    if np.any(np.abs(nz[mask]) < NZ_FLOOR):
        raise NzTooSmall(
            "normals nearly perpendicular to the view; exclude them from the mask"
        )
    if mode == "orthographic":
        with np.errstate(divide="ignore", invalid="ignore"):
            gx = np.where(mask, -n_cam[..., 0] / nz, 0.0)
            gy = np.where(mask, -n_cam[..., 1] / nz, 0.0)
        return gx, gy
    h, w = mask.shape
    uu, vv = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    ray = np.stack(
        [(uu - cam.cx) / cam.fx, (vv - cam.cy) / cam.fy, np.ones_like(uu)], axis=2
    )
    g = np.einsum("hwd,hwd->hw", n_cam, ray)
    if np.any(np.abs(g[mask]) < NZ_FLOOR):
        raise NzTooSmall("view-grazing normals; exclude them from the mask")
    with np.errstate(divide="ignore", invalid="ignore"):
        gx = np.where(mask, -(n_cam[..., 0] / cam.fx) / g, 0.0)
        gy = np.where(mask, -(n_cam[..., 1] / cam.fy) / g, 0.0)
    return gx, gy


def _solve_masked_poisson(mask, gx, gy):
    """Least-squares edge fit: z[b] - z[a] = mean of the field on the edge.

    One pixel per 4-connected component is pinned to make the Laplacian
    nonsingular; the gauge is then fixed to zero mean per component.
    Returns (z values over mask pixels row-major, component labels).
    """
    labels, _ = ndimage.label(mask, structure=_FOUR)
    n = int(mask.sum())
    idx = np.full(mask.shape, -1, dtype=np.int64)
    idx[mask] = np.arange(n)

    right = mask[:, :-1] & mask[:, 1:]
    down = mask[:-1, :] & mask[1:, :]
    a = np.concatenate([idx[:, :-1][right], idx[:-1, :][down]])
    b = np.concatenate([idx[:, 1:][right], idx[1:, :][down]])
    target = np.concatenate(
        [
            0.5 * (gx[:, :-1][right] + gx[:, 1:][right]),
            0.5 * (gy[:-1, :][down] + gy[1:, :][down]),
        ]
    )
    e = target.size
    rows = np.concatenate([np.arange(e), np.arange(e)])
    cols = np.concatenate([a, b])
    vals = np.concatenate([-np.ones(e), np.ones(e)])
    A = sparse.csr_matrix((vals, (rows, cols)), shape=(e, n))
    L = (A.T @ A).tocsc()
    rhs = A.T @ target

    comp = labels[mask]
    _, pin = np.unique(comp, return_index=True)
    keep = np.ones(n, dtype=bool)
    keep[pin] = False
    z = np.zeros(n)
    if keep.any():
        Lr = L[keep][:, keep]
        rr = rhs[keep]
        if n <= DIRECT_LIMIT:
            z[keep] = splu(Lr.tocsc()).solve(rr)
        else:
            import pyamg

            precond = pyamg.smoothed_aggregation_solver(Lr.tocsr()).aspreconditioner()
            zk, info = cg(Lr, rr, rtol=CG_RTOL, maxiter=10_000, M=precond)
            if info != 0:
                raise SolverDiverged(f"conjugate gradient stopped with info={info}")
            z[keep] = zk

    means = np.bincount(comp, weights=z) / np.maximum(np.bincount(comp), 1)
    z -= means[comp]
    return z, labels


def poisson_integrate(
    normals: NormalMap, mask=None, cam: CameraModel = None, mode: str = "perspective"
) -> DepthMap:
    """Integrate a base-frame normal map into depth along the camera ray.

    Orthographic depth is in mm per pixel step; perspective depth is
    exp(log-depth) with zero-mean log per component, so each component is
    correct up to one scale factor.
    """
    if mode not in ("perspective", "orthographic"):
        raise ValueError(f"mode must be 'perspective' or 'orthographic', got {mode!r}")
    if cam is None:
        raise ValueError("a camera model is required")
    m = normals.valid if mask is None else np.asarray(mask, dtype=bool)
    if m.shape != normals.shape:
        raise ShapeMismatch("mask/normal map shape mismatch")
    m = m & normals.valid
    if not m.any():
        raise EmptyMask("no pixels to integrate")

    n_cam = _camera_frame_normals(normals, cam)
    gx, gy = _gradient_fields(n_cam, m, cam, mode)
    z, labels = _solve_masked_poisson(m, gx, gy)

    out = np.zeros(m.shape)
    out[m] = np.exp(z) if mode == "perspective" else z
    return DepthMap(samples=out, valid=m, mode=mode, components=labels)


def align_depth_gauge(d: DepthMap, reference: np.ndarray) -> DepthMap:
    """Fix each component's free gauge against a reference depth image.

    Perspective components are scaled (log-domain shift), orthographic
    ones shifted, to match the reference's per-component mean.
    """
    ref = np.asarray(reference, dtype=np.float64)
    if ref.shape != d.shape:
        raise ShapeMismatch("reference shape mismatch")
    out = d.samples.copy()
    for c in np.unique(d.components[d.valid]):
        sel = d.valid & (d.components == c)
        if d.mode == "perspective":
            shift = np.mean(np.log(ref[sel]) - np.log(out[sel]))
            out[sel] *= np.exp(shift)
        else:
            out[sel] += np.mean(ref[sel] - out[sel])
    return DepthMap(
        samples=out, valid=d.valid, mode=d.mode, components=d.components,
        gauge_free=False,
    )


def gradient_residual(d: DepthMap, normals: NormalMap, cam: CameraModel) -> float:
    """Relative RMS mismatch between the solved depth's per-edge
    differences and the normal-implied per-edge gradient targets."""
    n_cam = _camera_frame_normals(normals, cam)
    gx, gy = _gradient_fields(n_cam, d.valid, cam, d.mode)
    z = np.where(
        d.valid, np.log(np.maximum(d.samples, 1e-300)), 0.0
    ) if d.mode == "perspective" else d.samples

    m = d.valid
    right = m[:, :-1] & m[:, 1:]
    down = m[:-1, :] & m[1:, :]
    diff = np.concatenate(
        [
            z[:, 1:][right] - z[:, :-1][right],
            z[1:, :][down] - z[:-1, :][down],
        ]
    )
    target = np.concatenate(
        [
            0.5 * (gx[:, :-1][right] + gx[:, 1:][right]),
            0.5 * (gy[:-1, :][down] + gy[1:, :][down]),
        ]
    )
    denom = float(np.sqrt(np.mean(target**2)))
    if denom < 1e-300:
        return float(np.sqrt(np.mean(diff**2)))
    return float(np.sqrt(np.mean((diff - target) ** 2)) / denom)


def depth_to_pointcloud(
    d: DepthMap, cam: CameraModel, normals: NormalMap = None
) -> PointCloud:
    """Back-project valid depth pixels into a base-frame point cloud."""
    vv, uu = np.nonzero(d.valid)
    z = d.samples[vv, uu]
    x = (uu - cam.cx) / cam.fx * z
    y = (vv - cam.cy) / cam.fy * z
    pts_cam = np.stack([x, y, z], axis=1)
    pts = cam.to_base(pts_cam)
    nrm = None
    if normals is not None:
        if normals.shape != d.shape:
            raise ShapeMismatch("normal map / depth map size mismatch")
        nrm = normals.vectors[vv, uu]
    return PointCloud(pts, nrm)
