"""Rigid motion between two partial views of an unknown object.

No model, no correspondence labels: each view is an oriented point cloud
lifted from the recovered depth and normals. Both clouds are voxel
downsampled, described with 33-bin fast point feature histograms, matched
by mutual nearest neighbors in feature space, and aligned globally with a
graduated non-convexity solve over scaled Geman-McClure residuals. A
point-to-plane ICP then polishes the fit. For tabletop motion the
interesting part of the answer is planar, so the 3D result also reports
its (x, y, spin) reading.

The feature math follows one strict convention so a brute-force
re-evaluation reproduces it bit for bit: neighbor sums run in ascending
point order, and every pair feature is computed with the exact
expressions in ``_pair_features``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .core.pointcloud import PointCloud
from .core.transforms import RigidTransform2D, RigidTransform3D
from .errors import (
    EmptyCloud,
    MissingInput,
    NoConvergence,
    TooFewCorrespondences,
)

FPFH_BINS = 11  # per angle feature; three features concatenate to 33
MIN_CORRESPONDENCES = 10
GNC_ITERS = 64
GNC_HALVING_PERIOD = 4
ICP_MAX_ITERS = 50
ICP_REL_TOL = 1e-6
_DUPLICATE_EPS = 1e-12


# ------------------------------------------------------------- downsampling
def voxel_downsample(cloud: PointCloud, voxel: float) -> PointCloud:
    """Average points (and normals) per occupied voxel.

    Output order follows the lexicographic voxel index, so the result is
    a pure function of the input set, not of its ordering.
    """
    if voxel <= 0:
        raise ValueError("voxel size must be positive")
    cloud.require_nonempty()
    idx = np.floor(cloud.points / voxel).astype(np.int64)
    order = np.lexsort((idx[:, 2], idx[:, 1], idx[:, 0]))
    idx = idx[order]
    pts = cloud.points[order]
    first = np.ones(len(pts), dtype=bool)
    first[1:] = np.any(idx[1:] != idx[:-1], axis=1)
    group = np.cumsum(first) - 1
    n_cells = int(group[-1]) + 1
    counts = np.bincount(group, minlength=n_cells).astype(np.float64)
    mean_pts = np.empty((n_cells, 3))
    for c in range(3):
        mean_pts[:, c] = np.bincount(group, weights=pts[:, c], minlength=n_cells)
    mean_pts /= counts[:, None]
    normals = None
    if cloud.has_normals:
        nrm = cloud.normals[order]
        acc = np.empty((n_cells, 3))
        for c in range(3):
            acc[:, c] = np.bincount(group, weights=nrm[:, c], minlength=n_cells)
        length = np.linalg.norm(acc, axis=1)
        # a cell whose normals cancel keeps an arbitrary but fixed axis
        acc[length < 1e-12] = (0.0, 0.0, 1.0)
        length = np.where(length < 1e-12, 1.0, length)
        normals = acc / length[:, None]
    return PointCloud(mean_pts, normals)


# ------------------------------------------------------------------- fpfh
@dataclass(frozen=True)
class FeatureCloud:
    """Point cloud with one L1-normalized 33-bin histogram per point."""

    cloud: PointCloud
    histograms: np.ndarray  # (n, 33)
    isolated: np.ndarray  # (n,) bool, true where no neighbor was in range

    def __post_init__(self):
        h = np.asarray(self.histograms, dtype=np.float64)
        if h.shape != (len(self.cloud), 3 * FPFH_BINS):
            raise ValueError("histogram block does not match the cloud")
        if (h < 0).any():
            raise ValueError("histograms must be non-negative")
        sums = h.sum(axis=1)
        ok = np.isclose(sums, 1.0, atol=1e-6) | (sums == 0.0)
        if not ok.all():
            raise ValueError("histograms must sum to 1 (or 0 when isolated)")
        object.__setattr__(self, "histograms", h)
        object.__setattr__(
            self, "isolated", np.asarray(self.isolated, dtype=bool).reshape(-1)
        )

    def __len__(self) -> int:
        return len(self.cloud)


def _pair_features(p_i, n_i, p_j, n_j):
    """Darboux angles (alpha, phi, theta) for pairs (i fixed, j rows).

    The point whose normal leans closer to the connecting line acts as
    the source. Pairs whose direction is parallel to the source normal
    have no well-defined frame and are dropped (mask False).
    """
    d = p_j - p_i
    dist = np.sqrt((d * d).sum(axis=-1))
    ok = dist > _DUPLICATE_EPS
    safe = np.where(ok, dist, 1.0)
    dhat = d / safe[..., None]
    ci = (dhat * n_i).sum(axis=-1)
    cj = (dhat * n_j).sum(axis=-1)
    swap = np.abs(ci) < np.abs(cj)
    u = np.where(swap[..., None], n_j, np.broadcast_to(n_i, n_j.shape))
    nt = np.where(swap[..., None], np.broadcast_to(n_i, n_j.shape), n_j)
    ds = np.where(swap[..., None], -dhat, dhat)
    phi = np.where(swap, -cj, ci)
    v = np.cross(ds, u)
    vn = np.sqrt((v * v).sum(axis=-1))
    ok &= vn > _DUPLICATE_EPS
    v = v / np.where(ok, vn, 1.0)[..., None]
    w = np.cross(u, v)
    alpha = (v * nt).sum(axis=-1)
    theta = np.arctan2((w * nt).sum(axis=-1), (u * nt).sum(axis=-1))
    return alpha, phi, theta, dist, ok


def _bin_triplet(alpha, phi, theta) -> np.ndarray:
    """33-bin histogram: alpha bins, then phi bins, then theta bins."""
    b = FPFH_BINS
    ia = np.minimum(np.floor((alpha + 1.0) * (b / 2.0)).astype(np.int64), b - 1)
    ip = np.minimum(np.floor((phi + 1.0) * (b / 2.0)).astype(np.int64), b - 1)
    it = np.minimum(
        np.floor((theta + np.pi) * (b / (2.0 * np.pi))).astype(np.int64), b - 1
    )
    ia = np.maximum(ia, 0)
    ip = np.maximum(ip, 0)
    it = np.maximum(it, 0)
    h = np.zeros(3 * b)
    h[:b] = np.bincount(ia, minlength=b)
    h[b : 2 * b] = np.bincount(ip, minlength=b)
    h[2 * b :] = np.bincount(it, minlength=b)
    return h


def compute_fpfh(cloud: PointCloud, radius: float) -> FeatureCloud:
    """Two-pass fast point feature histograms with the given support radius.

    Pass one bins each point's Darboux angles against its ball neighbors
    (the simplified histogram); pass two blends in the neighbors'
    histograms weighted by inverse distance:

        F(p) = S(p) + (1/k) * sum_q S(q) / |p - q|

    then normalizes to unit mass. Points with an empty ball keep an
    all-zero histogram and are flagged isolated.
    """
    if radius <= 0:
        raise ValueError("feature radius must be positive")
    if not cloud.has_normals:
        raise MissingInput("feature computation needs per-point normals")
    cloud.require_nonempty()
    pts = cloud.points
    nrm = cloud.normals
    n = len(cloud)
    tree = cKDTree(pts)
    neighbor_lists = []
    for i in range(n):
        nbr = sorted(j for j in tree.query_ball_point(pts[i], radius) if j != i)
        neighbor_lists.append(np.asarray(nbr, dtype=np.int64))

    spfh = np.zeros((n, 3 * FPFH_BINS))
    dists = [None] * n
    for i in range(n):
        nbr = neighbor_lists[i]
        if nbr.size == 0:
            continue
        alpha, phi, theta, dist, ok = _pair_features(
            pts[i], nrm[i], pts[nbr], nrm[nbr]
        )
        dists[i] = dist
        if ok.any():
            spfh[i] = _bin_triplet(alpha[ok], phi[ok], theta[ok])

    hist = np.zeros((n, 3 * FPFH_BINS))
    isolated = np.zeros(n, dtype=bool)
    for i in range(n):
        nbr = neighbor_lists[i]
        if nbr.size == 0:
            isolated[i] = True
            continue
        acc = np.zeros(3 * FPFH_BINS)
        dist = dists[i]
        for j, w in zip(nbr, dist):
            if w > _DUPLICATE_EPS:
                acc = acc + spfh[j] / w
        f = spfh[i] + acc / nbr.size
        s = f.sum()
        if s > 0:
            hist[i] = f / s
        else:
            isolated[i] = True
    return FeatureCloud(cloud, hist, isolated)


# --------------------------------------------------------------- alignment
@dataclass(frozen=True)
class RegistrationResult:
    """Global alignment outcome: transform plus health indicators."""

    transform: RigidTransform3D
    num_correspondences: int
    rmse: float
    degenerate: bool = False


@dataclass(frozen=True)
class IcpResult:
    transform: RigidTransform3D
    rmse: float
    iterations: int
    converged: bool


def _mutual_matches(src: FeatureCloud, dst: FeatureCloud) -> np.ndarray:
    si = np.flatnonzero(~src.isolated)
    di = np.flatnonzero(~dst.isolated)
    if si.size == 0 or di.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    tree_dst = cKDTree(dst.histograms[di])
    tree_src = cKDTree(src.histograms[si])
    fwd = tree_dst.query(src.histograms[si])[1]
    bwd = tree_src.query(dst.histograms[di])[1]
    mutual = bwd[fwd] == np.arange(si.size)
    return np.column_stack([si[mutual], di[fwd[mutual]]])


def _rodrigues(w: np.ndarray) -> np.ndarray:
    angle = float(np.linalg.norm(w))
    if angle < 1e-15:
        return np.eye(3)
    k = w / angle
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(angle) * kx + (1.0 - np.cos(angle)) * (kx @ kx)


def global_register(
    src: FeatureCloud,
    dst: FeatureCloud,
    voxel: float,
    *,
    max_iters: int = GNC_ITERS,
) -> RegistrationResult:
    """Feature-based global alignment, source onto destination.

    Mutual-nearest-neighbor feature matches feed a robust least-squares
    solve: scaled Geman-McClure weights with the control parameter
    started at the squared source diameter and halved every few
    iterations down to the voxel scale, each step a linearized rigid
    update. Needs no initial guess. ``degenerate`` flags a normal system
    whose smallest direction is unconstrained (symmetric or featureless
    geometry); the transform is still the least-norm answer.
    """
    pairs = _mutual_matches(src, dst)
    if pairs.shape[0] < MIN_CORRESPONDENCES:
        raise TooFewCorrespondences(
            f"{pairs.shape[0]} mutual feature matches, need {MIN_CORRESPONDENCES}"
        )
    p = src.cloud.points[pairs[:, 0]]
    q = dst.cloud.points[pairs[:, 1]]

    span = src.cloud.points.max(axis=0) - src.cloud.points.min(axis=0)
    mu = float(span @ span)
    mu_floor = max(float(voxel), 1e-3) ** 2
    R = np.eye(3)
    t = np.zeros(3)
    degenerate = False
    for it in range(max_iters):
        if it > 0 and it % GNC_HALVING_PERIOD == 0:
            mu = max(mu / 2.0, mu_floor)
        pp = p @ R.T + t
        e = pp - q
        r2 = (e * e).sum(axis=1)
        w = (mu / (mu + r2)) ** 2
        sw = np.sqrt(w)
        a = np.zeros((len(p), 3, 6))
        a[:, 0, 1] = pp[:, 2]
        a[:, 0, 2] = -pp[:, 1]
        a[:, 1, 0] = -pp[:, 2]
        a[:, 1, 2] = pp[:, 0]
        a[:, 2, 0] = pp[:, 1]
        a[:, 2, 1] = -pp[:, 0]
        a[:, :, 3:] = np.eye(3)
        aw = (a * sw[:, None, None]).reshape(-1, 6)
        bw = (-e * sw[:, None]).reshape(-1)
        sol, _, rank, sv = np.linalg.lstsq(aw, bw, rcond=None)
        if rank < 6 or sv[-1] < 1e-8 * sv[0]:
            degenerate = True
        dR = _rodrigues(sol[:3])
        R = dR @ R
        t = dR @ t + sol[3:]
        if float(np.linalg.norm(sol)) < 1e-12:
            break
    pp = p @ R.T + t
    rmse = float(np.sqrt(np.mean(((pp - q) ** 2).sum(axis=1))))
    return RegistrationResult(
        RigidTransform3D(R, t), pairs.shape[0], rmse, degenerate
    )


def icp_point_to_plane(
    src: PointCloud,
    dst: PointCloud,
    init: RigidTransform3D,
    max_corr: float,
    *,
    max_iters: int = ICP_MAX_ITERS,
) -> IcpResult:
    """Refine a rough alignment by point-to-plane iteration.

    Correspondences are nearest destination points within ``max_corr``;
    each step solves the small-angle linearization of the plane
    residuals and applies the exact rotation. Keeps the best transform
    seen, so the returned residual never exceeds the residual at
    ``init``; if the loop exhausts its budget without the relative
    improvement dropping below tolerance, the result is flagged.
    """
    if not dst.has_normals:
        raise MissingInput("point-to-plane needs destination normals")
    src.require_nonempty()
    dst.require_nonempty()
    tree = cKDTree(dst.points)
    R = init.R.copy()
    t = init.t.copy()

    def plane_rmse(Rc, tc):
        pp = src.points @ Rc.T + tc
        dist, j = tree.query(pp, distance_upper_bound=max_corr)
        ok = np.isfinite(dist)
        if not ok.any():
            return np.inf, ok, j, pp
        r = ((pp[ok] - dst.points[j[ok]]) * dst.normals[j[ok]]).sum(axis=1)
        return float(np.sqrt(np.mean(r * r))), ok, j, pp

    best_R, best_t = R, t
    best_rmse, ok, j, pp = plane_rmse(R, t)
    if not np.isfinite(best_rmse):
        raise NoConvergence("no correspondences within range at the initial pose")
    prev = best_rmse
    converged = False
    iterations = 0
    for it in range(max_iters):
        if prev == 0.0:
            converged = True
            break
        if not ok.any():
            break
        n = dst.normals[j[ok]]
        d = dst.points[j[ok]]
        s = pp[ok]
        r = ((s - d) * n).sum(axis=1)
        a = np.hstack([np.cross(s, n), n])
        sol, *_ = np.linalg.lstsq(a, -r, rcond=None)
        if float(np.linalg.norm(sol)) < 1e-15:
            converged = True
            break
        dR = _rodrigues(sol[:3])
        R = dR @ R
        t = dR @ t + sol[3:]
        iterations = it + 1
        rmse, ok, j, pp = plane_rmse(R, t)
        if rmse < best_rmse:
            best_R, best_t, best_rmse = R, t, rmse
        if np.isfinite(rmse) and abs(prev - rmse) <= ICP_REL_TOL * max(prev, 1e-12):
            converged = True
            break
        prev = rmse
    return IcpResult(
        RigidTransform3D(best_R, best_t), best_rmse, iterations, converged
    )


# ---------------------------------------------------------------- tracking
@dataclass(frozen=True)
class TrackResult:
    """Motion between two views: full 3D transform and its planar reading."""

    delta: RigidTransform2D
    transform: RigidTransform3D
    global_result: RegistrationResult
    icp: IcpResult


def planar_delta(transform: RigidTransform3D) -> RigidTransform2D:
    """Project a near-tabletop rigid motion onto (x, y, spin about +Z)."""
    R = transform.R
    yaw = float(np.arctan2(R[1, 0] - R[0, 1], R[0, 0] + R[1, 1]))
    return RigidTransform2D(float(transform.t[0]), float(transform.t[1]), yaw)


def track_motion(
    cloud_a: PointCloud,
    cloud_b: PointCloud,
    *,
    voxel: float = 3.0,
    fpfh_radius: float = None,  # type: ignore[assignment]
    max_corr: float = None,  # type: ignore[assignment]
) -> TrackResult:
    """Estimate the rigid motion carrying view A onto view B.

    Both clouds are voxel downsampled; the feature support radius
    defaults to 1.5 voxels and the ICP correspondence gate to 2 voxels.
    """
    if fpfh_radius is None:
        fpfh_radius = 1.5 * voxel
    if max_corr is None:
        max_corr = 2.0 * voxel
    a = voxel_downsample(cloud_a, voxel)
    b = voxel_downsample(cloud_b, voxel)
    if len(a) == 0 or len(b) == 0:
        raise EmptyCloud("a view downsampled to nothing")
    fa = compute_fpfh(a, fpfh_radius)
    fb = compute_fpfh(b, fpfh_radius)
    coarse = global_register(fa, fb, voxel)
    fine = icp_point_to_plane(a, b, coarse.transform, max_corr)
    return TrackResult(planar_delta(fine.transform), fine.transform, coarse, fine)
