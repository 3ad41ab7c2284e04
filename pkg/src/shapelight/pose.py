"""Planar pose of a known model from silhouette, normals, and edges.

The object sits on the table, so its pose is (x, y) translation plus a
spin theta about +Z. Alignment cascades through three stages, each
matching the observation against a fresh render of the model at the
candidate pose:

1. blurred-silhouette squared difference (run at half resolution),
2. normal-field cosine mismatch, coarse to fine over a 4-level pyramid,
3. mean squared difference between edge distance transforms, which does
   the final sub-pixel polish.

Every stage minimizes with backtracking descent; gradients come from
central finite differences on the three parameters (one pixel of table
motion, half a degree of spin). With three parameters that costs six
renders per iteration and sidesteps differentiating the rasterizer.
Orientation starts from the best theta on a fixed grid, scored by
correlating normal patches around depth corners of the observed edge map
against each candidate render; corner-free objects fall back to the
silhouette's principal axis.
"""

from __future__ import annotations

from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.signal import fftconvolve

from .core.camera import CameraModel
from .core.image import EdgeMap
from .core.transforms import RigidTransform2D, wrap_angle
from .errors import EmptyEdges, EmptyView, NoCorners, NonFiniteLoss, NoOverlap
from .normals import NormalMap
from .synth.primitives import Scene
from .synth.render import GroundTruthBundle, render_ground_truth

THETA_STEP_DEG = 10.0
FD_STEP_PX = 1.0
FD_STEP_DEG = 0.5
SILHOUETTE_BLUR_PX = 3.0
PYRAMID_LEVELS = 4
CORNER_WINDOW_PX = 80
MAX_CORNERS = 6
# binary-edge Harris peaks: real corners land at 1e-6..1e-5 regardless of
# resolution, smooth rims at exactly zero
CORNER_RESPONSE_FLOOR = 1e-7
MIN_OVERLAP_IOU = 0.05
# coarse-to-fine handoff check: a finer level must price the pose it
# inherits no worse than it prices the pose the coarser level started
# from, up to this much raster-quantization noise (mean-cosine units)
NORMAL_LEVEL_SLACK = 2e-3


# ---------------------------------------------------------------- containers
@dataclass(frozen=True)
class PoseEstimate2D:
    """Planar pose estimate with per-stage alignment residuals.

    Residuals stay None until their stage runs; a stage that ran must
    leave a finite value. ``histories`` maps a stage name to the tuple of
    its accepted costs, each non-increasing (an optimizer that backslides
    is a bug, not data, so it is enforced here). Keys containing
    ``handoff`` hold a pyramid level's price for the coarser level's
    start pose followed by its price for the pose it inherited, and get
    an absolute quantization allowance.
    """

    x: float
    y: float
    theta: float
    silhouette_residual: float = None  # type: ignore[assignment]
    normal_residual: float = None  # type: ignore[assignment]
    edge_residual: float = None  # type: ignore[assignment]
    converged: bool = False
    histories: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_angle(self.theta))
        for name in ("silhouette_residual", "normal_residual", "edge_residual"):
            v = getattr(self, name)
            if v is not None:
                v = float(v)
                if not np.isfinite(v):
                    raise ValueError(f"{name} must be finite, got {v}")
                object.__setattr__(self, name, v)
        for key, hist in self.histories.items():
            arr = np.asarray(hist, dtype=np.float64)
            if arr.size > 1:
                slack = 1e-9 * (1.0 + np.abs(arr[:-1]))
                if "handoff" in key:
                    slack = slack + NORMAL_LEVEL_SLACK
                if np.any(np.diff(arr) > slack):
                    raise ValueError(f"history {key!r} increases")

    def as_transform(self) -> RigidTransform2D:
        return RigidTransform2D(self.x, self.y, self.theta)

    def to_dict(self) -> dict:
        return {
            "x": self.x,
            "y": self.y,
            "theta": self.theta,
            "silhouette_residual": self.silhouette_residual,
            "normal_residual": self.normal_residual,
            "edge_residual": self.edge_residual,
            "converged": self.converged,
        }


@dataclass(frozen=True)
class PoseObservation:
    """What the pipeline measured: object silhouette, normals, edges."""

    silhouette: np.ndarray  # (h, w) bool
    normals: NormalMap
    edges: EdgeMap

    def __post_init__(self):
        m = np.asarray(self.silhouette, dtype=bool)
        if m.shape != self.normals.shape:
            raise ValueError("silhouette/normal map shapes disagree")
        object.__setattr__(self, "silhouette", m)

    @staticmethod
    def from_ground_truth(bundle: GroundTruthBundle) -> "PoseObservation":
        edges = EdgeMap(
            bundle.occlusion_edges.astype(np.float64), binary=bundle.occlusion_edges
        )
        return PoseObservation(bundle.silhouette, bundle.normals, edges)


@dataclass(frozen=True)
class OrientationInit:
    """Grid-search orientation seed plus its diagnostics."""

    theta: float  # radians
    grid_deg: np.ndarray
    scores: np.ndarray = None  # type: ignore[assignment]  # None on fallback
    corners_px: np.ndarray = None  # type: ignore[assignment]  # (k, 2) (u, v)
    from_moments: bool = False


# ---------------------------------------------------------------- rendering
def _halved_camera(cam: CameraModel) -> CameraModel:
    # pixel centers sit at i + 0.5 blocks of the parent grid, which is what
    # 2x2 block averaging of the parent image samples
    return CameraModel(
        cam.fx / 2.0,
        cam.fy / 2.0,
        (cam.cx + 0.5) / 2.0 - 0.5,
        (cam.cy + 0.5) / 2.0 - 0.5,
        cam.width // 2,
        cam.height // 2,
        cam.pose,
    )


class ModelRenderer:
    """Ground-truth renders of one model for a fixed camera, LRU cached.

    Candidate poses compose on top of the model scene's own placement, so
    the returned estimate is the extra planar motion mapping the model as
    given onto the observation. The ground plane never renders here; the
    observation's silhouette already separates object from table.
    """

    def __init__(
        self,
        model: Scene,
        cam: CameraModel,
        edge_tau: float = 2.0,
        max_cached: int = 48,
    ):
        self.model = Scene(model.mesh, model.albedo, False, pose=model.pose)
        self.cam = cam
        self.edge_tau = float(edge_tau)
        self.max_cached = int(max_cached)
        self._cache: OrderedDict = OrderedDict()
        self._table_xy = None

    def bundle(self, pose) -> GroundTruthBundle:
        key = (
            round(float(pose[0]), 9),
            round(float(pose[1]), 9),
            round(float(pose[2]), 12),
        )
        hit = self._cache.get(key)
        if hit is not None:
            self._cache.move_to_end(key)
            return hit
        xf = RigidTransform2D(*key).to_3d().compose(self.model.pose)
        scene = Scene(self.model.mesh, self.model.albedo, False, pose=xf)
        b = render_ground_truth(scene, self.cam, edge_tau=self.edge_tau)
        self._cache[key] = b
        if len(self._cache) > self.max_cached:
            self._cache.popitem(last=False)
        return b

    def halved(self) -> "ModelRenderer":
        return ModelRenderer(
            self.model, _halved_camera(self.cam), self.edge_tau, self.max_cached
        )

    def anchor(self) -> np.ndarray:
        """Model centroid in the base frame; sets the px <-> mm scale."""
        return self.model.pose.apply(self.model.mesh.vertices.mean(axis=0))

    def table_xy(self) -> np.ndarray:
        if self._table_xy is None:
            self._table_xy = self.cam.table_xy()
        return self._table_xy


def _mm_per_px(cam: CameraModel, anchor: np.ndarray) -> float:
    dist = float(np.linalg.norm(cam.center - anchor))
    return dist / float(cam.fx)


def _pose_tuple(pose) -> tuple:
    if isinstance(pose, PoseEstimate2D):
        return (pose.x, pose.y, pose.theta)
    if isinstance(pose, RigidTransform2D):
        return (pose.x, pose.y, pose.theta)
    x, y, theta = pose
    return (float(x), float(y), float(theta))


# ---------------------------------------------------------------- pyramids
def _halve(a: np.ndarray) -> np.ndarray:
    """2x2 block mean, cropping an odd trailing row/column."""
    h2, w2 = a.shape[0] // 2, a.shape[1] // 2
    a = a[: 2 * h2, : 2 * w2]
    return 0.25 * (a[0::2, 0::2] + a[1::2, 0::2] + a[0::2, 1::2] + a[1::2, 1::2])


def _halved_normal_field(vec: np.ndarray, valid: np.ndarray):
    h2, w2 = valid.shape[0] // 2, valid.shape[1] // 2
    acc = np.zeros((h2, w2, 3), dtype=np.float64)
    hits = np.zeros((h2, w2), dtype=np.float64)
    for dy in (0, 1):
        for dx in (0, 1):
            acc += vec[dy::2, dx::2][:h2, :w2]
            hits += valid[dy::2, dx::2][:h2, :w2]
    norm = np.linalg.norm(acc, axis=-1)
    ok = (hits > 0) & (norm > 1e-9)
    safe = np.where(norm > 1e-9, norm, 1.0)
    unit = np.where(ok[..., None], acc / safe[..., None], 0.0)
    return unit, ok


def build_normal_pyramid(nm: NormalMap, levels: int) -> list:
    """Finest first; each level block-averages 2x2 vectors, renormalizes."""
    out = [nm]
    vec, valid = nm.vectors, nm.valid
    for _ in range(int(levels) - 1):
        vec, valid = _halved_normal_field(vec, valid)
        out.append(NormalMap(vec, valid=valid))
    return out


# ---------------------------------------------------------------- descent
def _descend(cost, p0, steps, max_iters: int):
    """Backtracking steepest descent with per-parameter natural steps.

    Returns (p, f, history, converged); history holds the accepted costs,
    non-increasing by construction. converged means a gradient/progress
    floor was reached rather than the iteration budget.
    """
    p = np.asarray(p0, dtype=np.float64).copy()
    steps = np.asarray(steps, dtype=np.float64)
    f = float(cost(p))
    if not np.isfinite(f):
        raise NonFiniteLoss("alignment cost is not finite at the starting pose")
    history = [f]
    alpha = 1.0
    converged = False
    for _ in range(int(max_iters)):
        g = np.zeros(3)
        for i in range(3):
            e = np.zeros(3)
            e[i] = steps[i]
            fp = float(cost(p + e))
            fm = float(cost(p - e))
            if np.isfinite(fp) and np.isfinite(fm):
                g[i] = (fp - fm) / (2.0 * steps[i])
            elif np.isfinite(fp):
                g[i] = (fp - f) / steps[i]
            elif np.isfinite(fm):
                g[i] = (f - fm) / steps[i]
        scaled = g * steps
        norm = float(np.linalg.norm(scaled))
        if norm == 0.0:
            converged = True
            break
        direction = scaled / norm
        moved = False
        a = alpha
        for _ in range(14):
            cand = p - a * direction * steps
            fc = float(cost(cand))
            if np.isfinite(fc) and fc < f - 1e-12 * (1.0 + abs(f)):
                p, f = cand, fc
                history.append(f)
                alpha = min(a * 1.7, 4.0)
                moved = True
                break
            a *= 0.5
        if not moved:
            # the raster staircase has flattened out below the step scale
            converged = True
            break
    return p, f, history, converged


# ---------------------------------------------------------------- corners
def _harris_response(binary: np.ndarray, smooth=1.5, window=2.0, k=0.05):
    f = ndimage.gaussian_filter(binary.astype(np.float64), smooth)
    gy, gx = np.gradient(f)
    sxx = ndimage.gaussian_filter(gx * gx, window)
    syy = ndimage.gaussian_filter(gy * gy, window)
    sxy = ndimage.gaussian_filter(gx * gy, window)
    return sxx * syy - sxy * sxy - k * (sxx + syy) ** 2


def detect_depth_corners(
    binary: np.ndarray,
    max_corners: int = MAX_CORNERS,
    min_separation_px: float = 12.0,
    response_floor: float = CORNER_RESPONSE_FLOOR,
) -> np.ndarray:
    """Corners of a binary edge raster as (k, 2) (u, v), strongest first.

    Smooth rims never clear the response floor at the pipeline's working
    resolution (7px/mm and up), which is what routes rotationally
    featureless objects onto the moment fallback. A coarsely tessellated
    rim imaged at half that can sneak its facet vertices over the floor;
    that costs extra renders but not accuracy, because a rim that round
    has no orientation worth resolving.
    """
    R = _harris_response(np.asarray(binary, dtype=bool))
    peak = (R == ndimage.maximum_filter(R, size=7)) & (R > response_floor)
    vv, uu = np.nonzero(peak)
    if vv.size == 0:
        raise NoCorners("no corner response above the floor")
    order = np.argsort(R[vv, uu])[::-1]
    out: list = []
    for i in order:
        c = np.array([uu[i], vv[i]], dtype=np.float64)
        if all(np.linalg.norm(c - o) >= min_separation_px for o in out):
            out.append(c)
        if len(out) == max_corners:
            break
    return np.asarray(out)


def _best_normalized_correlation(image: np.ndarray, template: np.ndarray) -> float:
    """Peak 3-channel NCC of template over all full-overlap placements."""
    t = template - template.mean()
    t_energy = float(np.sqrt((t * t).sum()))
    if t_energy < 1e-12:
        return 0.0
    k0, k1 = template.shape[:2]
    num = None
    s1 = None
    s2 = None
    ones = np.ones((k0, k1))
    for c in range(3):
        flipped = t[::-1, ::-1, c]
        term = fftconvolve(image[..., c], flipped, mode="valid")
        num = term if num is None else num + term
        w1 = fftconvolve(image[..., c], ones, mode="valid")
        w2 = fftconvolve(image[..., c] ** 2, ones, mode="valid")
        s1 = w1 if s1 is None else s1 + w1
        s2 = w2 if s2 is None else s2 + w2
    n = 3.0 * k0 * k1
    var = np.clip(s2 - s1 * s1 / n, 0.0, None)
    denom = np.sqrt(var) * t_energy
    ncc = num / np.maximum(denom, 1e-9)
    return float(ncc.max())


def _principal_angle(mask: np.ndarray) -> float:
    """Orientation (mod pi) of the mask's principal axis in image coords."""
    vv, uu = np.nonzero(mask)
    du = uu - uu.mean()
    dv = vv - vv.mean()
    return 0.5 * np.arctan2(2.0 * (du * dv).sum(), (du * du).sum() - (dv * dv).sum())


def _binary_edges(edges: EdgeMap) -> np.ndarray:
    if edges.binary.any():
        return edges.binary
    return edges.confidence.samples.reshape(edges.binary.shape) >= 0.5


def init_orientation(
    normals: NormalMap,
    edges: EdgeMap,
    model: Scene,
    cam: CameraModel,
    theta_grid_deg=None,
    *,
    renderer: ModelRenderer = None,  # type: ignore[assignment]
    halvings: int = 1,
    window_px: int = CORNER_WINDOW_PX,
    max_corners: int = MAX_CORNERS,
    threads: int = 1,
) -> OrientationInit:
    """Pick the starting spin from a theta grid over [0, 180).

    Scores each candidate render by the best normalized cross-correlation
    of observed normal patches around depth corners. Without corners the
    spin falls back to matching silhouette principal axes, which fixes
    orientation modulo pi; the objects that land there have rims too
    smooth to tell a pi flip apart anyway.
    """
    grid = (
        np.arange(0.0, 180.0, THETA_STEP_DEG)
        if theta_grid_deg is None
        else np.asarray(theta_grid_deg, dtype=np.float64)
    )
    base = renderer if renderer is not None else ModelRenderer(model, cam)
    rend = base
    for _ in range(max(int(halvings), 0)):
        rend = rend.halved()

    try:
        corners = detect_depth_corners(_binary_edges(edges), max_corners)
        patches = _corner_patches(normals, corners, halvings, window_px)
        if not patches:
            raise NoCorners("all corner windows clipped the image border")
    except NoCorners:
        theta = _moment_fallback(normals.valid, base)
        return OrientationInit(
            theta=theta, grid_deg=grid.copy(), from_moments=True
        )

    def score(j: int) -> float:
        b = rend.bundle((0.0, 0.0, np.radians(grid[j])))
        img = b.normals.vectors
        return float(sum(_best_normalized_correlation(img, p) for p in patches))

    if threads and threads != 1:
        workers = None if threads == 0 else int(threads)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scores = np.array(list(pool.map(score, range(len(grid)))))
    else:
        scores = np.array([score(j) for j in range(len(grid))])
    best = int(np.argmax(scores))
    return OrientationInit(
        theta=float(np.radians(grid[best])),
        grid_deg=grid.copy(),
        scores=scores,
        corners_px=corners,
    )


def _corner_patches(
    normals: NormalMap, corners: np.ndarray, halvings: int, window_px: int
) -> list:
    vec, valid = normals.vectors, normals.valid
    scale = 2 ** max(int(halvings), 0)
    for _ in range(max(int(halvings), 0)):
        vec, valid = _halved_normal_field(vec, valid)
    w = max(window_px // scale, 8)
    half = w // 2
    patches = []
    for u, v in corners:
        # pixel centers map as u -> (u + 0.5)/s - 0.5 under block halving
        ui = int(round((u + 0.5) / scale - 0.5))
        vi = int(round((v + 0.5) / scale - 0.5))
        win = vec[vi - half : vi + half, ui - half : ui + half]
        if win.shape[:2] != (2 * half, 2 * half):
            continue
        if valid[vi - half : vi + half, ui - half : ui + half].any():
            patches.append(win)
    return patches


def _moment_fallback(region: np.ndarray, renderer: ModelRenderer) -> float:
    if not region.any():
        raise NoOverlap("observed region is empty")
    b0 = renderer.bundle((0.0, 0.0, 0.0))
    delta = _principal_angle(region) - _principal_angle(b0.silhouette)
    # image-plane angles only fix the spin up to sign; try both
    best_theta, best_iou = 0.0, -1.0
    for cand in (delta % np.pi, (-delta) % np.pi):
        pose = _centroid_pose0(region, renderer, float(cand))
        br = renderer.bundle(pose)
        inter = float((br.silhouette & region).sum())
        union = float((br.silhouette | region).sum())
        iou = inter / union if union else 0.0
        if iou > best_iou:
            best_theta, best_iou = float(cand), iou
    return best_theta


# ---------------------------------------------------------------- stages
def _centroid_pose0(observed_silhouette, renderer: ModelRenderer, theta: float):
    """Slide the rotated model so silhouette centroids agree on the table."""
    mask = np.asarray(observed_silhouette, dtype=bool)
    b = renderer.bundle((0.0, 0.0, theta))
    xy = renderer.table_xy()
    obs_c = np.nanmean(xy[mask], axis=0)
    ren_c = np.nanmean(xy[b.silhouette], axis=0)
    d = obs_c - ren_c
    return (float(d[0]), float(d[1]), float(theta))


def align_silhouette(
    observed_silhouette,
    renderer: ModelRenderer,
    pose0,
    *,
    blur_px: float = SILHOUETTE_BLUR_PX,
    halvings: int = 1,
    max_iters: int = 30,
) -> PoseEstimate2D:
    """Minimize the squared difference of blurred silhouettes.

    The blur turns two binary rasters into overlapping ramps so finite
    differences see a slope instead of a cliff. Runs at reduced resolution
    by default; later stages restore the precision.
    """
    obs = np.asarray(observed_silhouette, dtype=np.float64)
    rend = renderer
    for _ in range(max(int(halvings), 0)):
        obs = _halve(obs)
        rend = rend.halved()
    obs_bin = obs > 0.5
    obs_blur = ndimage.gaussian_filter(obs, blur_px)

    p0 = np.asarray(_pose_tuple(pose0), dtype=np.float64)
    try:
        b0 = rend.bundle(p0)
    except EmptyView:
        raise NoOverlap("model renders off-frame at the starting pose") from None
    inter = float((b0.silhouette & obs_bin).sum())
    union = float((b0.silhouette | obs_bin).sum())
    if union == 0.0 or inter / union <= MIN_OVERLAP_IOU:
        raise NoOverlap(
            f"silhouette IoU {inter / max(union, 1.0):.3f} at the starting pose"
        )

    def cost(p) -> float:
        try:
            b = rend.bundle(p)
        except EmptyView:
            return np.inf
        r = ndimage.gaussian_filter(b.silhouette.astype(np.float64), blur_px)
        return float(((obs_blur - r) ** 2).sum())

    mm = _mm_per_px(rend.cam, renderer.anchor())
    steps = (FD_STEP_PX * mm, FD_STEP_PX * mm, np.radians(FD_STEP_DEG))
    p, f, hist, conv = _descend(cost, p0, steps, max_iters)
    return PoseEstimate2D(
        p[0],
        p[1],
        p[2],
        silhouette_residual=f,
        converged=conv,
        histories={"silhouette": tuple(hist)},
    )


def align_normals_multiscale(
    observed_normals: NormalMap,
    renderer: ModelRenderer,
    observed_silhouette,
    pose,
    *,
    levels: int = PYRAMID_LEVELS,
    max_iters: int = 12,
) -> PoseEstimate2D:
    """Minimize mean cosine mismatch coarse-to-fine.

    Each level's cost is the mean of 1 - <observed, rendered> over the
    observed silhouette (majority-downsampled per level); pixels the
    candidate render misses contribute the full 1. Coarse averaging can
    price a misaligned pose below what finer levels see, so raw start
    costs are not comparable across levels; the recorded contract is the
    handoff pair instead, where each level prices the coarser level's
    start pose and then the pose it actually inherited.
    """
    pyr = build_normal_pyramid(observed_normals, levels)
    masks = [np.asarray(observed_silhouette, dtype=bool)]
    for _ in range(int(levels) - 1):
        masks.append(_halve(masks[-1].astype(np.float64)) > 0.5)
    rends = [renderer]
    for _ in range(int(levels) - 1):
        rends.append(rends[-1].halved())

    p = np.asarray(_pose_tuple(pose), dtype=np.float64)
    histories: dict = {}
    prev_start = None
    all_converged = True
    final = None
    for k in reversed(range(int(levels))):
        m = masks[k] & pyr[k].valid
        if not m.any():
            continue
        ns = pyr[k].vectors[m]
        rend = rends[k]

        def cost(q, ns=ns, m=m, rend=rend) -> float:
            try:
                b = rend.bundle(q)
            except EmptyView:
                return np.inf
            nr = b.normals.vectors[m]
            return float(np.mean(1.0 - np.sum(ns * nr, axis=1)))

        if prev_start is not None:
            histories[f"normals_handoff_L{k}"] = (float(cost(prev_start)), float(cost(p)))
        prev_start = p.copy()
        mm = _mm_per_px(rend.cam, renderer.anchor())
        steps = (FD_STEP_PX * mm, FD_STEP_PX * mm, np.radians(FD_STEP_DEG))
        p, f, hist, conv = _descend(cost, p, steps, max_iters)
        histories[f"normals_L{k}"] = tuple(hist)
        all_converged = all_converged and conv
        final = f
    if final is None:
        raise NoOverlap("observed silhouette is empty at every pyramid level")
    return PoseEstimate2D(
        p[0],
        p[1],
        p[2],
        normal_residual=final,
        converged=all_converged,
        histories=histories,
    )


def align_edges_edt(
    observed_edges: EdgeMap,
    renderer: ModelRenderer,
    pose,
    *,
    max_iters: int = 25,
) -> PoseEstimate2D:
    """Minimize the MSE between edge distance transforms, full resolution."""
    eb = _binary_edges(observed_edges)
    if not eb.any():
        raise EmptyEdges("observed edge map is empty")
    edt_obs = ndimage.distance_transform_edt(~eb)

    def cost(q) -> float:
        try:
            b = renderer.bundle(q)
        except EmptyView:
            return np.inf
        re = b.occlusion_edges
        if not re.any():
            return np.inf
        return float(np.mean((edt_obs - ndimage.distance_transform_edt(~re)) ** 2))

    p0 = np.asarray(_pose_tuple(pose), dtype=np.float64)
    if not np.isfinite(cost(p0)):
        raise EmptyEdges("rendered edge map is empty at the starting pose")
    mm = _mm_per_px(renderer.cam, renderer.anchor())
    steps = (FD_STEP_PX * mm, FD_STEP_PX * mm, np.radians(FD_STEP_DEG))
    p, f, hist, conv = _descend(cost, p0, steps, max_iters)
    return PoseEstimate2D(
        p[0],
        p[1],
        p[2],
        edge_residual=f,
        converged=conv,
        histories={"edges": tuple(hist)},
    )


# ---------------------------------------------------------------- pipeline
def estimate_pose(
    observation: PoseObservation,
    model: Scene,
    cam: CameraModel,
    *,
    theta_grid_deg=None,
    blur_px: float = SILHOUETTE_BLUR_PX,
    edge_tau: float = 2.0,
    levels: int = PYRAMID_LEVELS,
    sil_halvings: int = 1,
    max_iters=(30, 12, 25),
    threads: int = 1,
) -> PoseEstimate2D:
    """Run the full cascade: orientation seed, silhouette, normals, edges.

    Objects whose edge maps are empty (gentle reliefs never exceed the
    depth-jump threshold) skip the edge polish and keep the normal-stage
    pose; the edge residual stays None in that case.
    """
    renderer = ModelRenderer(model, cam, edge_tau=edge_tau)
    # table pixels carry perfectly valid flat normals; only the object's
    # matter for orientation
    obs_normals = NormalMap(
        observation.normals.vectors * observation.silhouette[..., None],
        valid=observation.normals.valid & observation.silhouette,
    )
    seed = init_orientation(
        obs_normals,
        observation.edges,
        model,
        cam,
        theta_grid_deg,
        renderer=renderer,
        threads=threads,
    )
    pose0 = _centroid_pose0(observation.silhouette, renderer, seed.theta)
    sil = align_silhouette(
        observation.silhouette,
        renderer,
        pose0,
        blur_px=blur_px,
        halvings=sil_halvings,
        max_iters=max_iters[0],
    )
    nrm = align_normals_multiscale(
        obs_normals,
        renderer,
        observation.silhouette,
        sil,
        levels=levels,
        max_iters=max_iters[1],
    )
    histories = dict(sil.histories)
    histories.update(nrm.histories)
    edge_residual = None
    pose_final = nrm
    converged = sil.converged and nrm.converged
    try:
        edg = align_edges_edt(
            observation.edges, renderer, nrm, max_iters=max_iters[2]
        )
        histories.update(edg.histories)
        edge_residual = edg.edge_residual
        pose_final = edg
        converged = converged and edg.converged
    except EmptyEdges:
        pass
    return PoseEstimate2D(
        pose_final.x,
        pose_final.y,
        pose_final.theta,
        silhouette_residual=sil.silhouette_residual,
        normal_residual=nrm.normal_residual,
        edge_residual=edge_residual,
        converged=converged,
        histories=histories,
    )
