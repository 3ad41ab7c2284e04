"""Evaluation metrics for recovered geometry.

Angular statistics compare normal maps pixelwise, surface error scores a
point cloud against a reference mesh with exact point-to-triangle
distances, chamfer distance compares two clouds symmetrically, and the
earth mover's distance compares the *distributions* of two normal maps on
a spherical histogram, which stays meaningful when the maps do not share
a pixel grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Tuple

import numpy as np
from scipy import ndimage, sparse
from scipy.optimize import linprog
from scipy.spatial import cKDTree

from .core.pointcloud import PointCloud
from .errors import EmptyMask, ShapeMismatch, SolverDiverged
from .normals import NormalMap

if TYPE_CHECKING:
    from .synth.primitives import Mesh

GOOD_NORMAL_DEG = 20.0
DEFAULT_SPHERE_BINS = (12, 24)  # inclination x azimuth
_TRIANGLE_CHUNK = 512


@dataclass(frozen=True)
class AngularStats:
    """Per-pixel angular error summary in degrees."""

    mean_deg: float
    sigma_deg: float
    pct_under_20: float
    count: int

    def __post_init__(self):
        if self.mean_deg < 0 or self.sigma_deg < 0:
            raise ValueError("angular statistics cannot be negative")
        if not 0.0 <= self.pct_under_20 <= 100.0:
            raise ValueError("percentage outside [0, 100]")
        if self.count <= 0:
            raise ValueError("empty summary")


@dataclass(frozen=True)
class SurfaceError:
    mean_mm: float
    sigma_mm: float
    max_mm: float

    def __post_init__(self):
        if min(self.mean_mm, self.sigma_mm, self.max_mm) < 0:
            raise ValueError("distances cannot be negative")


def angular_error_stats(
    n_est: NormalMap, n_gt: NormalMap, mask: Optional[np.ndarray] = None
) -> AngularStats:
    """Mean, sigma and fraction under 20 degrees over the shared mask."""
    if n_est.shape != n_gt.shape:
        raise ShapeMismatch(f"normal maps disagree: {n_est.shape} vs {n_gt.shape}")
    m = n_est.valid & n_gt.valid
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != m.shape:
            raise ShapeMismatch("mask shape does not match the normal maps")
        m &= mask
    if not m.any():
        raise EmptyMask("no pixels to compare")
    ang = n_est.angular_error_deg(n_gt)[m]
    return AngularStats(
        mean_deg=float(ang.mean()),
        sigma_deg=float(ang.std()),
        pct_under_20=float(100.0 * np.mean(ang < GOOD_NORMAL_DEG)),
        count=int(ang.size),
    )


def _segment_distance_sq(dp, edge, edge_dot):
    # dp: (p, f, 3) point minus segment start; edge: (f, 3)
    t = np.einsum("pfk,fk->pf", dp, edge) / edge_dot
    np.clip(t, 0.0, 1.0, out=t)
    diff = dp - t[..., None] * edge
    return np.einsum("pfk,pfk->pf", diff, diff)


def _point_triangle_distance(points: np.ndarray, mesh: "Mesh") -> np.ndarray:
    """Exact distance from each point to the closest point of any face."""
    a, b, c = mesh.face_corners()
    e0 = b - a
    e1 = c - a
    e2 = c - b
    d00 = np.einsum("fk,fk->f", e0, e0)
    d01 = np.einsum("fk,fk->f", e0, e1)
    d11 = np.einsum("fk,fk->f", e1, e1)
    denom = d00 * d11 - d01 * d01
    degenerate = denom < 1e-18
    denom = np.where(degenerate, 1.0, denom)
    d22 = np.maximum(np.einsum("fk,fk->f", e2, e2), 1e-30)
    d00s = np.maximum(d00, 1e-30)
    d11s = np.maximum(d11, 1e-30)

    out = np.empty(len(points))
    for lo in range(0, len(points), _TRIANGLE_CHUNK):
        p = points[lo : lo + _TRIANGLE_CHUNK]
        dp = p[:, None, :] - a[None, :, :]  # (p, f, 3)
        d20 = np.einsum("pfk,fk->pf", dp, e0)
        d21 = np.einsum("pfk,fk->pf", dp, e1)
        # interior candidate: perpendicular foot when barycentric coords admit it
        v = (d11 * d20 - d01 * d21) / denom
        w = (d00 * d21 - d01 * d20) / denom
        inside = (v >= 0.0) & (w >= 0.0) & (v + w <= 1.0) & ~degenerate
        # explicit difference vector; the pythagorean shortcut cancels badly
        # for points lying on the surface
        foot = dp - v[..., None] * e0 - w[..., None] * e1
        plane_sq = np.einsum("pfk,pfk->pf", foot, foot)
        plane_sq = np.where(inside, plane_sq, np.inf)
        # otherwise the closest point lies on one of the three edges
        sq = np.minimum(plane_sq, _segment_distance_sq(dp, e0, d00s))
        sq = np.minimum(sq, _segment_distance_sq(dp, e1, d11s))
        sq = np.minimum(sq, _segment_distance_sq(dp - e0[None], e2, d22))
        out[lo : lo + len(p)] = np.sqrt(sq.min(axis=1))
    return out


def surface_error(cloud: PointCloud, mesh_gt: "Mesh") -> SurfaceError:
    """Point-to-mesh distance statistics, measurement scored against truth.

    One-sided by design: every cloud point is charged its distance to the
    reference surface, holes in the cloud are not.
    """
    cloud.require_nonempty()
    d = _point_triangle_distance(cloud.points, mesh_gt)
    return SurfaceError(float(d.mean()), float(d.std()), float(d.max()))


def chamfer(cloud_a: PointCloud, cloud_b: PointCloud) -> float:
    """Symmetric mean nearest-neighbor distance, the average of both directions."""
    cloud_a.require_nonempty()
    cloud_b.require_nonempty()
    d_ab = cKDTree(cloud_b.points).query(cloud_a.points)[0]
    d_ba = cKDTree(cloud_a.points).query(cloud_b.points)[0]
    return 0.5 * (float(d_ab.mean()) + float(d_ba.mean()))


def sphere_bin_centers(bins: Tuple[int, int] = DEFAULT_SPHERE_BINS) -> np.ndarray:
    """Unit direction at the center of each inclination/azimuth bin, (n_inc*n_az, 3)."""
    n_inc, n_az = bins
    inc = (np.arange(n_inc) + 0.5) * np.pi / n_inc
    az = -np.pi + (np.arange(n_az) + 0.5) * 2.0 * np.pi / n_az
    inc_g, az_g = np.meshgrid(inc, az, indexing="ij")
    return np.stack(
        [np.sin(inc_g) * np.cos(az_g), np.sin(inc_g) * np.sin(az_g), np.cos(inc_g)],
        axis=2,
    ).reshape(-1, 3)


def bin_normals(
    nmap: NormalMap,
    mask: Optional[np.ndarray] = None,
    bins: Tuple[int, int] = DEFAULT_SPHERE_BINS,
) -> np.ndarray:
    """Histogram of valid normals over the sphere grid, normalized to unit mass."""
    n_inc, n_az = bins
    m = nmap.valid if mask is None else nmap.valid & np.asarray(mask, dtype=bool)
    if m.shape != nmap.shape:
        raise ShapeMismatch("mask shape does not match the normal map")
    if not m.any():
        raise EmptyMask("no valid normals to bin")
    v = nmap.vectors[m]
    inc = np.arccos(np.clip(v[:, 2], -1.0, 1.0))
    az = np.arctan2(v[:, 1], v[:, 0])
    i_inc = np.minimum((inc / np.pi * n_inc).astype(np.int64), n_inc - 1)
    i_az = ((az + np.pi) / (2.0 * np.pi) * n_az).astype(np.int64) % n_az
    hist = np.bincount(i_inc * n_az + i_az, minlength=n_inc * n_az).astype(np.float64)
    return hist / hist.sum()


def _transport_cost(pa: np.ndarray, pb: np.ndarray, ground: np.ndarray) -> float:
    # exact balanced transport as a small LP; supports only occupied bins
    ia = np.flatnonzero(pa > 0)
    ib = np.flatnonzero(pb > 0)
    cost = ground[np.ix_(ia, ib)]
    na, nb = ia.size, ib.size
    n = na * nb
    rows = np.concatenate(
        [np.repeat(np.arange(na), nb), na + np.tile(np.arange(nb), na)]
    )
    cols = np.concatenate([np.arange(n), np.arange(n)])
    a_eq = sparse.csr_matrix((np.ones(2 * n), (rows, cols)), shape=(na + nb, n))
    b_eq = np.concatenate([pa[ia], pb[ib]])
    res = linprog(cost.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if not res.success:
        raise SolverDiverged(f"transport LP failed: {res.message}")
    return max(float(res.fun), 0.0)


def emd_normals(
    n_a: NormalMap,
    n_b: NormalMap,
    mask_a: Optional[np.ndarray] = None,
    mask_b: Optional[np.ndarray] = None,
    bins: Tuple[int, int] = DEFAULT_SPHERE_BINS,
) -> float:
    """Earth mover's distance between the two normal distributions.

    Normals are binned on the sphere grid and transported with the
    geodesic angle between bin centers as ground distance, so the result
    is in radians: identical distributions score 0, and two deltas a
    quarter turn apart score pi/2 (a quarter turn spans a whole number
    of inclination bins).
    """
    pa = bin_normals(n_a, mask_a, bins)
    pb = bin_normals(n_b, mask_b, bins)
    if np.array_equal(pa, pb):
        return 0.0
    centers = sphere_bin_centers(bins)
    ground = np.arccos(np.clip(centers @ centers.T, -1.0, 1.0))
    return _transport_cost(pa, pb, ground)


def _mask_boundary(mask: np.ndarray) -> np.ndarray:
    return mask & ~ndimage.binary_erosion(mask)


def boundary_misalignment_px(mask_a: np.ndarray, mask_b: np.ndarray) -> float:
    """Symmetric mean distance between two masks' boundary contours.

    Each mask's boundary is its pixels not surviving a single binary
    erosion. For every boundary pixel of one mask the distance to the
    nearest boundary pixel of the other is read off a distance transform,
    and the two directed means are averaged. Identical masks score 0;
    concentric discs with radii 3px apart score about 3 (rasterization
    nibbles a fraction of a pixel). A rigid shift scores below the shift
    length because contours slide along themselves where they run
    parallel to the motion.
    """
    a = np.asarray(mask_a, dtype=bool)
    b = np.asarray(mask_b, dtype=bool)
    if a.shape != b.shape:
        raise ShapeMismatch("masks must share a pixel grid")
    ba, bb = _mask_boundary(a), _mask_boundary(b)
    if not ba.any() or not bb.any():
        raise EmptyMask("a mask has no boundary pixels")
    d_to_b = ndimage.distance_transform_edt(~bb)
    d_to_a = ndimage.distance_transform_edt(~ba)
    return 0.5 * (float(d_to_b[ba].mean()) + float(d_to_a[bb].mean()))
