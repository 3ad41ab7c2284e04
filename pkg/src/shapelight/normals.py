"""Surface normals from one image stack: six grazing lights plus overhead.

The pipeline is: classify which lights reach each pixel by comparing
against the overhead image, invert the linear shading model per pixel
under that classification, fill unsolvable (heavily shadowed) pixels from
their nearest solved neighbor, then jointly polish normals and per-light
weights against the quadratic shading model with a smoothness prior.

Normals live in the robot/base frame throughout; they are independent of
which camera captured the stack.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import io
from .core.image import ImageF
from .core.rasterops import nearest_true_indices
from .errors import DivergenceDetected, NoValidPixels, ShapeMismatch
from .optim import GDResult, backtracking_gd

MIN_LIT_CHANNELS = 3
PRED_FLOOR = 1e-6  # guards ratio tests against dark predictions


@dataclass(frozen=True)
class NormalMap:
    """Per-pixel unit normals (base frame) with a validity mask.

    Construction renormalizes valid entries, so a stored valid normal is
    unit-length to machine precision; invalid entries are zeroed.
    """

    vectors: np.ndarray  # (h, w, 3)
    valid: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float64)
        if v.ndim != 3 or v.shape[2] != 3:
            raise ShapeMismatch(f"normal map must be (h,w,3), got {v.shape}")
        m = self.valid
        if m is None:
            m = np.ones(v.shape[:2], dtype=bool)
        else:
            m = np.asarray(m, dtype=bool)
            if m.shape != v.shape[:2]:
                raise ShapeMismatch(f"mask {m.shape} != map {v.shape[:2]}")
        norms = np.linalg.norm(v, axis=2)
        if np.any(norms[m] < 1e-12):
            raise ValueError("zero-length normal marked valid")
        out = np.zeros_like(v)
        out[m] = v[m] / norms[m][:, None]
        object.__setattr__(self, "vectors", out)
        object.__setattr__(self, "valid", m)

    @property
    def shape(self):
        return self.valid.shape

    def angular_error_deg(self, other: "NormalMap") -> np.ndarray:
        """Per-pixel angle (degrees) where both maps are valid, else nan."""
        if self.shape != other.shape:
            raise ShapeMismatch("normal maps differ in size")
        both = self.valid & other.valid
        dots = np.clip(np.sum(self.vectors * other.vectors, axis=2), -1.0, 1.0)
        ang = np.full(self.shape, np.nan)
        ang[both] = np.degrees(np.arccos(dots[both]))
        return ang

    def save_pfm(self, path) -> None:
        io.write_pfm(path, self.vectors)

    @staticmethod
    def load_pfm(path) -> "NormalMap":
        v = io.read_pfm(path, channels=3)
        valid = np.linalg.norm(v, axis=2) > 0.5
        return NormalMap(v, valid=valid)


@dataclass(frozen=True)
class ShadowWeights:
    """Per-pixel per-light visibility weights in [0, 1]; (h, w, 6)."""

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        if w.ndim != 3 or w.shape[2] != 6:
            raise ShapeMismatch(f"weights must be (h,w,6), got {w.shape}")
        if w.min() < -1e-12 or w.max() > 1 + 1e-12:
            raise ValueError(f"weights outside [0,1]: [{w.min()}, {w.max()}]")
        object.__setattr__(self, "w", np.clip(w, 0.0, 1.0))

    @property
    def lit_count(self) -> np.ndarray:
        return np.count_nonzero(self.w > 0, axis=2)

    def save_pfm(self, path) -> None:
        io.write_pfm(path, self.w)

    @staticmethod
    def load_pfm(path) -> "ShadowWeights":
        return ShadowWeights(io.read_pfm(path, channels=6))


def _stack6(images) -> np.ndarray:
    imgs = list(images)
    if len(imgs) != 6:
        raise ShapeMismatch(f"expected 6 directional images, got {len(imgs)}")
    shape = imgs[0].shape
    for im in imgs:
        if im.shape != shape or im.channels != 1:
            raise ShapeMismatch("directional images must share single-channel shape")
    return np.stack([im.samples for im in imgs], axis=2)


def init_shadow_weights(images, overhead: ImageF, kappa: float = 1.0) -> ShadowWeights:
    """Binary lit/shadowed guess per light: lit pixels under a grazing
    source outshine the same pixel under the weaker overhead source."""
    stack = _stack6(images)
    if overhead.shape != stack.shape[:2]:
        raise ShapeMismatch("overhead image size mismatch")
    w = (stack > kappa * overhead.samples[:, :, None]).astype(np.float64)
    return ShadowWeights(w)


@dataclass(frozen=True)
class LinearNormalsResult:
    normals: NormalMap  # valid everywhere a normal exists (solved or filled)
    solved: np.ndarray  # (h, w) bool, True where the per-pixel solve succeeded
    fill_distance: np.ndarray  # (h, w) px to the donor pixel, 0 where solved

    def save_fill_distance(self, path) -> None:
        io.write_pfm(path, self.fill_distance)


def _linear_field_at(field, xy, shape):
    """Per-pixel (.., 6, 3) light vectors from an illumination field."""
    L = field.linear_at(xy)
    L = np.asarray(L, dtype=np.float64)
    if L.shape == (6, 3):
        L = np.broadcast_to(L, shape + (6, 3))
    return L


def solve_linear_normals(
    images,
    weights: ShadowWeights,
    field,
    xy: np.ndarray = None,
) -> LinearNormalsResult:
    """Per-pixel weighted least squares against the linear light model.

    Pixels with fewer than three lit channels (or a degenerate lit-light
    set) cannot be inverted; they borrow the nearest solved pixel's normal
    and the borrow distance is reported alongside.

    ``xy`` optionally maps pixels to workspace coordinates (h, w, 2) for
    spatially varying illumination; defaults to the field's reference
    point.
    """
    I = _stack6(images)
    h, w6 = I.shape[:2]
    if weights.w.shape[:2] != (h, w6):
        raise ShapeMismatch("weights size mismatch")
    L = _linear_field_at(field, xy, (h, w6))

    wts = weights.w
    A = np.einsum("hwi,hwia,hwib->hwab", wts, L, L)
    rhs = np.einsum("hwi,hwia->hwa", wts * I, L)
    enough = (wts > 0).sum(axis=2) >= MIN_LIT_CHANNELS

    # closed-form 3x3 determinant; degenerate systems are treated as unsolved
    det = (
        A[..., 0, 0] * (A[..., 1, 1] * A[..., 2, 2] - A[..., 1, 2] * A[..., 2, 1])
        - A[..., 0, 1] * (A[..., 1, 0] * A[..., 2, 2] - A[..., 1, 2] * A[..., 2, 0])
        + A[..., 0, 2] * (A[..., 1, 0] * A[..., 2, 1] - A[..., 1, 1] * A[..., 2, 0])
    )
    scale = np.einsum("hwaa->hw", A) / 3.0
    solvable = enough & (det > 1e-9 * np.maximum(scale, 1e-30) ** 3)
    if not solvable.any():
        raise NoValidPixels("no pixel has 3 invertible lit channels")

    g = np.zeros((h, w6, 3))
    g[solvable] = np.linalg.solve(A[solvable], rhs[solvable][..., None])[..., 0]
    glen = np.linalg.norm(g, axis=2)
    solved = solvable & (glen > 1e-12)

    vectors = np.zeros((h, w6, 3))
    vectors[solved] = g[solved] / glen[solved][:, None]

    fill_distance, iy, ix = nearest_true_indices(solved)
    need = ~solved
    vectors[need] = vectors[iy[need], ix[need]]
    valid = np.ones((h, w6), dtype=bool)
    return LinearNormalsResult(
        normals=NormalMap(vectors, valid=valid),
        solved=solved,
        fill_distance=fill_distance,
    )


# ----------------------------------------------------------------- refinement
def _quadratic_field_at(field, xy, shape):
    """Split per-pixel symmetric shading matrices into (A, b, d) parts.

    A spatially constant field stays un-broadcast at (6,3,3)/(6,3)/(6,) so
    the prediction and gradient can take the batched-BLAS fast path.
    """
    M = np.asarray(field.quadratic_at(xy), dtype=np.float64)
    return M[..., :3, :3], M[..., :3, 3], M[..., 3, 3]


def _box_sum(x: np.ndarray, d: int) -> np.ndarray:
    """Windowed sum with zero padding; symmetric, hence self-adjoint.

    Trailing axes beyond the first two (e.g. normal components) are left
    unmixed.
    """
    size = (d, d) + (1,) * (x.ndim - 2)
    return ndimage.uniform_filter(x, size=size, mode="constant", cval=0.0) * (d * d)


class _SmoothnessPrior:
    """Quadratic penalty pulling each normal toward its windowed mean.

    Only pixels in ``mask`` contribute residuals or enter the means. The
    operator is linear so the exact gradient is two more box filters.
    """

    def __init__(self, mask: np.ndarray, d: int):
        self.maskf = mask.astype(np.float64)
        self.d = d
        self.count = np.maximum(_box_sum(self.maskf, d), 1.0)

    def residual(self, n: np.ndarray) -> np.ndarray:
        mean = _box_sum(n * self.maskf[..., None], self.d) / self.count[..., None]
        return (n - mean) * self.maskf[..., None]

    def loss_and_grad(self, n: np.ndarray):
        s = self.residual(n)
        f = float(np.sum(s * s))
        back = _box_sum(s / self.count[..., None], self.d)
        grad = 2.0 * (s - back * self.maskf[..., None])
        return f, grad


def _predict_parts(n, A, b, d):
    """Shading predictions plus the matrix-vector products they share
    with the gradient: returns (pred, An) where An[..., i, :] is A_i n.

    The broadcast einsum over a per-pixel (h,w,6,3,3) stack is the
    refinement hotspot; a constant field collapses it to two BLAS calls.
    """
    if A.ndim == 3:
        h, w6 = n.shape[:2]
        nf = n.reshape(-1, 3)
        An = (nf @ A.reshape(-1, 3).T).reshape(-1, 6, 3)
        quad = np.matmul(An, nf[:, :, None])[:, :, 0]
        pred = (quad + 2.0 * (nf @ b.T) + d).reshape(h, w6, 6)
        return pred, An.reshape(h, w6, 6, 3)
    An = np.einsum("hwiab,hwb->hwia", A, n)
    quad = np.einsum("hwa,hwia->hwi", n, An)
    lin = 2.0 * np.einsum("hwa,hwia->hwi", n, b)
    return quad + lin + d, An


def _predict(n, A, b, d):
    return _predict_parts(n, A, b, d)[0]


def _photometric_grad(rw, An, b):
    """d/dn of the weighted squared residual, given rw = residual*weight."""
    if b.ndim == 2:
        rwf = rw.reshape(-1, 1, 6)
        g = np.matmul(rwf, An.reshape(-1, 6, 3))[:, 0, :] + rw.reshape(-1, 6) @ b
        return -4.0 * g.reshape(rw.shape[:2] + (3,))
    return -4.0 * (
        np.einsum("hwi,hwia->hwa", rw, An) + np.einsum("hwi,hwia->hwa", rw, b)
    )


def refinement_objective(images, weights: ShadowWeights, field, beta: float = 0.1,
                         d: int = 5, xy: np.ndarray = None):
    """The refinement loss at fixed weights, as an (f, grad) closure over a
    flattened normal array.

    Exposed so the analytic gradient can be checked against central finite
    differences on exactly the objective ``refine_normals`` descends. The
    weight array is read by reference, so callers holding the same array
    see coordinated values.
    """
    I = _stack6(images)
    h, w6 = I.shape[:2]
    A, b, dcoef = _quadratic_field_at(field, xy, (h, w6))
    mask = np.ones((h, w6), dtype=bool)
    for im in images:
        mask &= im.valid
    maskf = mask.astype(np.float64)
    prior = _SmoothnessPrior(mask, d)
    wts = weights.w

    def loss_and_grad(x):
        n = x.reshape(h, w6, 3)
        pred, An = _predict_parts(n, A, b, dcoef)
        r = (I - wts * pred) * maskf[..., None]
        f = float(np.sum(r * r))
        rw = r * wts
        grad = _photometric_grad(rw, An, b)
        if beta > 0:
            fs, gs = prior.loss_and_grad(n)
            f += beta * fs
            grad = grad + beta * gs
        grad *= maskf[..., None]
        return f, grad.ravel()

    return loss_and_grad


@dataclass(frozen=True)
class RefineResult:
    normals: NormalMap
    weights: ShadowWeights
    descent: GDResult


def refine_normals(
    normals: NormalMap,
    weights: ShadowWeights,
    images,
    field,
    beta: float = 0.1,
    d: int = 5,
    xy: np.ndarray = None,
    max_iters: int = 150,
    lr0: float = 0.1,
    shrink: float = 0.9,
    update_weights: bool = True,
) -> RefineResult:
    """Joint polish of normals and shadow weights.

    Gradient descent with backtracking drives the weighted photometric
    residual against the quadratic shading predictions plus ``beta`` times
    a width-``d`` smoothness prior; normals are renormalized after every
    step. After each accepted step, pixels whose photometric loss got
    worse have their light weights shrunk toward the observed/predicted
    ratio (factor shrink*max(shrink, ratio) per light); a shrink is kept
    only if it does not increase that pixel's loss, so the total objective
    never increases.
    """
    if beta < 0:
        raise ValueError("beta must be >= 0")
    if d < 3 or d % 2 == 0:
        raise ValueError("smoothing width must be odd and >= 3")
    I = _stack6(images)
    h, w6 = I.shape[:2]
    if normals.shape != (h, w6) or weights.w.shape[:2] != (h, w6):
        raise ShapeMismatch("inputs disagree on image size")
    A, b, dcoef = _quadratic_field_at(field, xy, (h, w6))

    mask = normals.valid.copy()
    for im in images:
        mask &= im.valid
    maskf = mask.astype(np.float64)
    prior = _SmoothnessPrior(mask, d)
    wcur = weights.w.copy()
    n0 = normals.vectors.copy()
    # frozen pixels keep a unit placeholder so projection stays harmless
    n0[~mask] = np.array([0.0, 0.0, 1.0])

    def pixel_loss(n, wts):
        r = (I - wts * _predict(n, A, b, dcoef)) * maskf[..., None]
        return np.sum(r * r, axis=2)

    # the accepted trial, the weight update, and the re-evaluation after a
    # weight change all happen at the same iterate; cache the parts that
    # depend on the normals alone, keyed by array identity (the strong
    # reference prevents id reuse)
    seen = {"x": None, "pred": None, "An": None, "prior": None}

    def predict_at(x, n):
        if seen["x"] is not x:
            pred, An = _predict_parts(n, A, b, dcoef)
            seen.update(x=x, pred=pred, An=An, prior=None)
        return seen["pred"], seen["An"]

    def prior_at(x, n):
        if seen["x"] is not x:
            predict_at(x, n)
        if seen["prior"] is None:
            seen["prior"] = prior.loss_and_grad(n)
        return seen["prior"]

    def loss_and_grad(x):
        n = x.reshape(h, w6, 3)
        pred, An = predict_at(x, n)
        r = (I - wcur * pred) * maskf[..., None]
        f = float(np.sum(r * r))
        rw = r * wcur
        grad = _photometric_grad(rw, An, b)
        if beta > 0:
            fs, gs = prior_at(x, n)
            f += beta * fs
            grad = grad + beta * gs
        grad *= maskf[..., None]
        return f, grad.ravel()

    def project(x):
        n = x.reshape(h, w6, 3)
        norms = np.linalg.norm(n, axis=2)
        safe = norms > 1e-12
        n[safe] /= norms[safe][..., None]
        return n.ravel()

    ell_prev = pixel_loss(n0, wcur)

    def update(_it, x, _f):
        if not update_weights:
            return False
        n = x.reshape(h, w6, 3)
        pred, _ = predict_at(x, n)
        r_now = (I - wcur * pred) * maskf[..., None]
        ell_now = np.einsum("hwi,hwi->hw", r_now, r_now)
        worsened = ell_now > ell_prev
        if not worsened.any():
            ell_prev[...] = ell_now
            return False
        ratio = np.clip(I / np.maximum(pred, PRED_FLOOR), 0.0, 1.0)
        factor = shrink * np.maximum(shrink, ratio)
        wtry = np.where(worsened[..., None], wcur * factor, wcur)
        r_try = (I - wtry * pred) * maskf[..., None]
        ell_try = np.einsum("hwi,hwi->hw", r_try, r_try)
        take = worsened & (ell_try <= ell_now)
        changed = bool(take.any())
        if changed:
            wcur[take] = wtry[take]
        ell_prev[...] = np.where(take, ell_try, ell_now)
        return changed

    result = backtracking_gd(
        loss_and_grad,
        n0.ravel(),
        lr0=lr0,
        max_iters=max_iters,
        project=project,
        callback=update,
    )
    _check_descent_trace(result.trace)
    out = result.x.reshape(h, w6, 3).copy()
    out[~mask] = normals.vectors[~mask]
    refined = NormalMap(out, valid=normals.valid)
    return RefineResult(refined, ShadowWeights(wcur), result)


def _check_descent_trace(trace, run: int = 10) -> None:
    bad = 0
    for prev, cur in zip(trace, trace[1:]):
        bad = bad + 1 if cur > prev + 1e-12 else 0
        if bad >= run:
            raise DivergenceDetected(
                f"loss rose for {run} consecutive accepted steps"
            )
