"""Vacuum grasp selection from normals and occlusion edges across two views.

The pipeline mirrors mode-seeking object tracking: candidate gripper
orientations are scattered around each pick direction, every pixel is
scored by how many candidates its normal satisfies (histogram
back-projection), the largest high-probability patch is found by
adaptive mean shift, and the patch is only accepted if its window is
nearly free of occlusion edges. Window centers from the two views are
triangulated into the grasp point. Thin flat objects that offer no
grippable relief are handled separately by fitting a minimum enclosing
circle to their occlusion-edge rims.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core.camera import CameraModel, triangulate
from .core.image import EdgeMap, ImageF
from .errors import (
    DegenerateRays,
    NoFeasibleGrasp,
    RejectionExhausted,
    TooFewEdgePixels,
    WindowOutOfBounds,
    ZeroMass,
)
from .normals import NormalMap

FLAT_TOL_DEG = 20.0  # normals within this cone of a candidate count as flat
EDGE_SCORE_THRESHOLD = 0.04
EDGE_WEIGHT_DENSITY = 1.0
EDGE_WEIGHT_SPREAD = 0.5
CUP_RADIUS_MM = 6.0
TRIANGULATION_TOL_MM = 3.0
CONVERGE_PX = 0.5
MAX_MEANSHIFT_ITERS = 100
SEED_GRID = 5
CLEARANCE_MARGIN_DEG = 5.0


def _tangent_basis(v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    a = np.array([1.0, 0.0, 0.0]) if abs(v[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    t1 = np.cross(v, a)
    t1 /= np.linalg.norm(t1)
    return t1, np.cross(v, t1)


def sample_gripper_orientations(
    pick_dir: np.ndarray,
    n: int,
    sigma: float,
    table_clearance: bool = False,
    clearance_margin_deg: float = CLEARANCE_MARGIN_DEG,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Scatter n unit directions about pick_dir, Gaussian in its tangent plane.

    With table_clearance, directions dipping below the table plane by more
    than the gripper's tilt margin are rejected and redrawn.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    d = np.asarray(pick_dir, dtype=np.float64).reshape(3)
    norm = np.linalg.norm(d)
    if norm < 1e-12:
        raise ValueError("pick direction has no length")
    d = d / norm
    rng = rng or np.random.default_rng()
    t1, t2 = _tangent_basis(d)
    floor = -np.sin(np.radians(clearance_margin_deg))

    out = np.empty((n, 3))
    have = 0
    rejected = 0
    while have < n:
        k = n - have
        ab = rng.normal(scale=sigma, size=(k, 2))
        cand = d[None, :] + ab[:, :1] * t1[None, :] + ab[:, 1:] * t2[None, :]
        cand /= np.linalg.norm(cand, axis=1, keepdims=True)
        if table_clearance:
            ok = cand[:, 2] >= floor
            rejected += int(np.sum(~ok))
            if rejected > 100 * n:
                raise RejectionExhausted(
                    f"{rejected} rejections for {n} samples; pick direction "
                    "points into the table"
                )
            cand = cand[ok]
        out[have : have + len(cand)] = cand
        have += len(cand)
    return out


def backproject_probability(
    nmap: NormalMap, samples: np.ndarray, tol_deg: float = FLAT_TOL_DEG
) -> ImageF:
    """Per pixel, the fraction of candidate directions its normal satisfies."""
    s = np.asarray(samples, dtype=np.float64).reshape(-1, 3)
    cos_tol = np.cos(np.radians(tol_deg))
    dots = np.einsum("hwk,nk->hwn", nmap.vectors, s)
    prob = np.mean(dots > cos_tol, axis=2)
    prob[~nmap.valid] = 0.0
    return ImageF(prob, valid=nmap.valid)


@dataclass(frozen=True)
class PatchWindow:
    """Oriented rectangular window in pixel coordinates.

    half_extents is (major, minor); orientation is the major axis angle
    against +u. mass is the probability sum over the final search window.
    """

    center: np.ndarray  # (u, v)
    half_extents: np.ndarray
    orientation: float
    mass: float = 0.0
    iterations: int = 0

    def __post_init__(self):
        object.__setattr__(
            self, "center", np.asarray(self.center, dtype=np.float64).reshape(2)
        )
        object.__setattr__(
            self,
            "half_extents",
            np.asarray(self.half_extents, dtype=np.float64).reshape(2),
        )
        if (self.half_extents < 0).any():
            raise ValueError("half extents cannot be negative")

    def corners(self) -> np.ndarray:
        c, s = np.cos(self.orientation), np.sin(self.orientation)
        rot = np.array([[c, -s], [s, c]])
        hu, hv = self.half_extents
        local = np.array([[hu, hv], [hu, -hv], [-hu, hv], [-hu, -hv]])
        return self.center[None, :] + local @ rot.T

    def pixel_mask(self, shape: Tuple[int, int]) -> np.ndarray:
        """Boolean raster of pixels whose centers fall inside the rectangle."""
        h, w = shape
        vv, uu = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
        du = uu - self.center[0]
        dv = vv - self.center[1]
        c, s = np.cos(self.orientation), np.sin(self.orientation)
        along = du * c + dv * s
        across = -du * s + dv * c
        return (np.abs(along) <= self.half_extents[0]) & (
            np.abs(across) <= self.half_extents[1]
        )


def _window_sum_centroid(p: np.ndarray, center, size):
    h, w = p.shape
    half = size / 2.0
    lo_u = max(int(np.floor(center[0] - half)), 0)
    hi_u = min(int(np.ceil(center[0] + half)), w - 1)
    lo_v = max(int(np.floor(center[1] - half)), 0)
    hi_v = min(int(np.ceil(center[1] + half)), h - 1)
    if lo_u > hi_u or lo_v > hi_v:
        return 0.0, center
    region = p[lo_v : hi_v + 1, lo_u : hi_u + 1]
    m00 = float(region.sum())
    if m00 <= 0.0:
        return 0.0, center
    vv, uu = np.meshgrid(
        np.arange(lo_v, hi_v + 1), np.arange(lo_u, hi_u + 1), indexing="ij"
    )
    cu = float((region * uu).sum() / m00)
    cv = float((region * vv).sum() / m00)
    return m00, np.array([cu, cv])


def _window_shape(p: np.ndarray, center, size) -> Tuple[np.ndarray, float]:
    """Half extents and orientation from second central moments of the window."""
    h, w = p.shape
    half = size / 2.0
    lo_u = max(int(np.floor(center[0] - half)), 0)
    hi_u = min(int(np.ceil(center[0] + half)), w - 1)
    lo_v = max(int(np.floor(center[1] - half)), 0)
    hi_v = min(int(np.ceil(center[1] + half)), h - 1)
    region = p[lo_v : hi_v + 1, lo_u : hi_u + 1]
    m00 = float(region.sum())
    vv, uu = np.meshgrid(
        np.arange(lo_v, hi_v + 1), np.arange(lo_u, hi_u + 1), indexing="ij"
    )
    cu = float((region * uu).sum() / m00)
    cv = float((region * vv).sum() / m00)
    du = uu - cu
    dv = vv - cv
    a = float((region * du * du).sum() / m00)
    b = float((region * du * dv).sum() / m00)
    c = float((region * dv * dv).sum() / m00)
    common = np.sqrt(max(b * b + ((a - c) / 2.0) ** 2, 0.0))
    lam_major = (a + c) / 2.0 + common
    lam_minor = (a + c) / 2.0 - common
    # sqrt(3 lambda) recovers the half width of a uniform rectangle exactly
    extents = np.sqrt(3.0 * np.maximum([lam_major, lam_minor], 0.0))
    angle = 0.5 * np.arctan2(2.0 * b, a - c)
    return extents, float(angle)


def camshift_largest_patch(
    prob: ImageF,
    seeds: Optional[np.ndarray] = None,
    max_iters: int = MAX_MEANSHIFT_ITERS,
) -> PatchWindow:
    """Adaptive mean shift over the probability image, best patch of many seeds.

    Each seed iterates plain CAMShift: recenter on the window centroid,
    rescale the square search window to 2 sqrt(M00 / peak), stop when the
    center moves under half a pixel. Plain mean shift is local, so a grid
    of seeds is run and the converged window with the largest mass wins.
    """
    p = np.where(prob.valid, prob.samples, 0.0)
    if p.sum() <= 0.0:
        raise ZeroMass("probability image carries no mass")
    peak = float(p.max())
    h, w = p.shape
    if seeds is None:
        us = np.linspace(0, w - 1, SEED_GRID + 2)[1:-1]
        vs = np.linspace(0, h - 1, SEED_GRID + 2)[1:-1]
        seeds = np.array([[u, v] for v in vs for u in us])

    best = None
    for seed in seeds:
        center = np.asarray(seed, dtype=np.float64)
        size = max(h, w) / SEED_GRID
        mass = 0.0
        iters = 0
        for iters in range(1, max_iters + 1):
            mass, new_center = _window_sum_centroid(p, center, size)
            if mass <= 0.0:
                break
            shift = float(np.linalg.norm(new_center - center))
            new_size = max(2.0 * np.sqrt(mass / peak), 4.0)
            settled = shift < CONVERGE_PX and abs(new_size - size) < CONVERGE_PX
            center = new_center
            size = new_size
            if settled:
                break
        if mass <= 0.0:
            continue
        if best is None or mass > best[0]:
            best = (mass, center, size, iters)
    if best is None:
        raise ZeroMass("no seed found any probability mass")
    mass, center, size, iters = best
    extents, angle = _window_shape(p, center, size)
    return PatchWindow(center, extents, angle, mass=mass, iterations=iters)


def edge_score(
    window: PatchWindow,
    edges: EdgeMap,
    w0: float = EDGE_WEIGHT_DENSITY,
    w1: float = EDGE_WEIGHT_SPREAD,
) -> float:
    """Occlusion-edge penalty for a window; lower is safer, 0 is edge-free.

    Count moment and first distance moment of the edge pixels inside the
    window, both normalized by the window pixel count, the distance moment
    also by the half diagonal, so each term lies in [0, 1].
    """
    h, w = edges.binary.shape
    crn = window.corners()
    if (
        crn[:, 0].min() < -0.5
        or crn[:, 0].max() > w - 0.5
        or crn[:, 1].min() < -0.5
        or crn[:, 1].max() > h - 0.5
    ):
        raise WindowOutOfBounds(f"window corners {crn.tolist()} exceed {w}x{h}")
    inside = window.pixel_mask((h, w))
    n_window = int(inside.sum())
    if n_window == 0:
        return 0.0
    hit = inside & edges.binary
    n_edges = int(hit.sum())
    if n_edges == 0:
        return 0.0
    vv, uu = np.nonzero(hit)
    dist = np.hypot(uu - window.center[0], vv - window.center[1])
    half_diag = float(np.linalg.norm(window.half_extents)) or 1.0
    density = n_edges / n_window
    spread = float(dist.sum()) / (n_window * half_diag)
    return w0 * density + w1 * spread


@dataclass(frozen=True)
class GraspCandidate:
    windows: Tuple[PatchWindow, PatchWindow]
    grasp_point: np.ndarray  # mm, robot frame
    approach_normal: np.ndarray
    flatness_mass: float
    edge_score: float
    edge_threshold: float
    triangulation_residual_mm: float
    accepted: bool

    def __post_init__(self):
        object.__setattr__(
            self, "grasp_point", np.asarray(self.grasp_point, dtype=np.float64).reshape(3)
        )
        n = np.asarray(self.approach_normal, dtype=np.float64).reshape(3)
        norm = np.linalg.norm(n)
        if norm < 1e-12:
            raise ValueError("approach normal has no length")
        object.__setattr__(self, "approach_normal", n / norm)
        if self.accepted and not (
            self.edge_score <= self.edge_threshold
            and self.triangulation_residual_mm < TRIANGULATION_TOL_MM
        ):
            raise ValueError(
                "accepted grasp must pass the edge threshold and triangulate "
                f"under {TRIANGULATION_TOL_MM}mm"
            )

    def to_dict(self) -> dict:
        return {
            "windows": [
                {
                    "center_px": w.center.tolist(),
                    "half_extents_px": w.half_extents.tolist(),
                    "orientation_rad": w.orientation,
                    "mass": w.mass,
                }
                for w in self.windows
            ],
            "grasp_point_mm": self.grasp_point.tolist(),
            "approach_normal": self.approach_normal.tolist(),
            "flatness_mass": self.flatness_mass,
            "edge_score": self.edge_score,
            "edge_threshold": self.edge_threshold,
            "triangulation_residual_mm": self.triangulation_residual_mm,
            "accepted": self.accepted,
        }


def select_grasp(
    views: Sequence[Tuple[NormalMap, EdgeMap]],
    cams: Sequence[CameraModel],
    directions: Sequence[np.ndarray],
    n_samples: int = 500,
    sigma: float = 0.2,
    tol_deg: float = FLAT_TOL_DEG,
    edge_threshold: float = EDGE_SCORE_THRESHOLD,
    weights: Tuple[float, float] = (EDGE_WEIGHT_DENSITY, EDGE_WEIGHT_SPREAD),
    cup_radius_mm: float = CUP_RADIUS_MM,
    table_clearance: bool = True,
    rng: Optional[np.random.Generator] = None,
) -> GraspCandidate:
    """Best vacuum grasp over the given pick directions and two views.

    Every direction runs back-projection, mean shift and edge scoring in
    both views; feasible directions additionally triangulate under
    3mm and leave room to inscribe the suction cup. Among feasible
    candidates the largest combined patch mass wins, ties going to the
    earlier direction in the list.
    """
    if len(views) != 2 or len(cams) != 2:
        raise ValueError("exactly two views are required")
    rng = rng or np.random.default_rng()
    w0, w1 = weights

    best: Optional[GraspCandidate] = None
    reasons: List[str] = []
    for di, direction in enumerate(directions):
        try:
            samples = sample_gripper_orientations(
                direction, n_samples, sigma, table_clearance, rng=rng
            )
        except RejectionExhausted as e:
            reasons.append(f"direction {di}: {e}")
            continue
        windows = []
        scores = []
        normals_at = []
        feasible = True
        for (nmap, edges), cam in zip(views, cams):
            try:
                prob = backproject_probability(nmap, samples, tol_deg)
                win = camshift_largest_patch(prob)
                score = edge_score(win, edges, w0, w1)
            except (ZeroMass, WindowOutOfBounds) as e:
                reasons.append(f"direction {di}: {e}")
                feasible = False
                break
            h, w = nmap.shape
            u = int(np.clip(np.rint(win.center[0]), 0, w - 1))
            v = int(np.clip(np.rint(win.center[1]), 0, h - 1))
            if not nmap.valid[v, u]:
                reasons.append(f"direction {di}: window center off the surface")
                feasible = False
                break
            windows.append(win)
            scores.append(score)
            normals_at.append(nmap.vectors[v, u])
        if not feasible:
            continue
        if max(scores) > edge_threshold:
            reasons.append(
                f"direction {di}: edge score {max(scores):.3f} over threshold"
            )
            continue
        try:
            point, residual = triangulate(
                cams[0], windows[0].center, cams[1], windows[1].center
            )
        except DegenerateRays as e:
            reasons.append(f"direction {di}: {e}")
            continue
        if residual >= TRIANGULATION_TOL_MM:
            reasons.append(f"direction {di}: rays miss by {residual:.2f}mm")
            continue
        fits = True
        for win, cam in zip(windows, cams):
            z = float(cam.to_camera(point[None, :])[0, 2])
            px_per_mm = cam.fx / z
            if win.half_extents[1] < cup_radius_mm * px_per_mm:
                fits = False
        if not fits:
            reasons.append(f"direction {di}: window too small for the suction cup")
            continue
        cand = GraspCandidate(
            windows=(windows[0], windows[1]),
            grasp_point=point,
            approach_normal=normals_at[0] + normals_at[1],
            flatness_mass=windows[0].mass + windows[1].mass,
            edge_score=max(scores),
            edge_threshold=edge_threshold,
            triangulation_residual_mm=residual,
            accepted=True,
        )
        if best is None or cand.flatness_mass > best.flatness_mass:
            best = cand
    if best is None:
        raise NoFeasibleGrasp("; ".join(reasons) if reasons else "no directions given")
    return best


# --------------------------------------------------------------- thin discs


def _circle_two(a, b):
    c = 0.5 * (a + b)
    return c, float(np.linalg.norm(a - c))


def _circle_three(a, b, c):
    # circumcircle; collinear triples fall back to the widest pair
    d = 2.0 * ((a[0] - c[0]) * (b[1] - c[1]) - (b[0] - c[0]) * (a[1] - c[1]))
    scale = max(np.abs(np.concatenate([a, b, c])).max(), 1.0)
    if abs(d) < 1e-12 * scale * scale:
        pairs = [_circle_two(a, b), _circle_two(b, c), _circle_two(a, c)]
        return max(pairs, key=lambda cr: cr[1])
    aa = a[0] ** 2 + a[1] ** 2
    bb = b[0] ** 2 + b[1] ** 2
    cc = c[0] ** 2 + c[1] ** 2
    ux = (
        (aa - cc) * (b[1] - c[1]) - (bb - cc) * (a[1] - c[1])
    ) / d
    uy = (
        (bb - cc) * (a[0] - c[0]) - (aa - cc) * (b[0] - c[0])
    ) / d
    center = np.array([ux, uy])
    return center, float(np.linalg.norm(a - center))


def _inside(center, r, p, eps):
    return np.linalg.norm(p - center) <= r + eps


def minimum_enclosing_circle(points: np.ndarray) -> Tuple[np.ndarray, float]:
    """Exact smallest circle containing all points, expected linear time.

    Incremental construction with restarts; the circle is unique, so the
    internal shuffle only affects speed, never the result.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("no points")
    scale = max(float(np.abs(pts).max()), 1.0)
    eps = 1e-9 * scale
    pts = pts[np.random.default_rng(0).permutation(len(pts))]

    center, r = pts[0].copy(), 0.0
    for i in range(1, len(pts)):
        if _inside(center, r, pts[i], eps):
            continue
        center, r = pts[i].copy(), 0.0
        for j in range(i):
            if _inside(center, r, pts[j], eps):
                continue
            center, r = _circle_two(pts[i], pts[j])
            for k in range(j):
                if _inside(center, r, pts[k], eps):
                    continue
                center, r = _circle_three(pts[i], pts[j], pts[k])
    return center, r


@dataclass(frozen=True)
class DiscDetection:
    center_mm: np.ndarray  # triangulated rim-circle center, robot frame
    radius_px: Tuple[float, float]
    center_px: Tuple[np.ndarray, np.ndarray]
    residual_mm: float


def detect_disc(
    edges1: EdgeMap, edges2: EdgeMap, cams: Sequence[CameraModel]
) -> DiscDetection:
    """Locate a thin flat disc from its occlusion-edge rim in two views."""
    per_view = []
    for edges in (edges1, edges2):
        px = edges.pixels
        if len(px) < 3:
            raise TooFewEdgePixels(f"{len(px)} edge pixels, need at least 3")
        per_view.append(minimum_enclosing_circle(px.astype(np.float64)))
    (c1, r1), (c2, r2) = per_view
    point, residual = triangulate(cams[0], c1, cams[1], c2)
    return DiscDetection(
        center_mm=point,
        radius_px=(r1, r2),
        center_px=(c1, c2),
        residual_mm=residual,
    )
