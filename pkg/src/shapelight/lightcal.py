"""Workspace illumination recovery from images of a known target.

Two nested shading models are fitted per light from pixels with known
normals: a 3-vector linear model (albedo and radiance folded in) and a
quadratic-in-normal model expressed as a symmetric 4x4 acting on [n; 1].
On the unit sphere the quadratic block is only identifiable up to its
trace, so coefficients are stored in a traceless gauge: 5 quadratic + 3
linear + 1 constant = 9 numbers per light.

Spatial variation across the table is captured by fitting each scalar
coefficient with a bi-quadratic (degree 2 in x and in y) polynomial over
target placements.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateLayout,
    IllConditioned,
    RankDeficientNormals,
    ShapeMismatch,
    TooFewPlacements,
)
from .normals import NormalMap

N_COEFFS = 9
MIN_PLACEMENTS = 9
# bi-quadratic tensor basis: x-degree varies fastest
_BIQUAD_POWERS = [(px, py) for py in range(3) for px in range(3)]


@dataclass(frozen=True)
class LinearLightModel:
    """Per-light 3-vectors l such that a pixel with normal n reads <l, n>."""

    L: np.ndarray  # (6, 3)
    residual_rms: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        L = np.asarray(self.L, dtype=np.float64)
        if L.shape != (6, 3):
            raise ShapeMismatch(f"expected (6,3) light matrix, got {L.shape}")
        if not np.isfinite(L).all():
            raise ValueError("non-finite light vector")
        r = self.residual_rms
        r = np.zeros(6) if r is None else np.asarray(r, dtype=np.float64)
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "residual_rms", r)

    @property
    def directions(self) -> np.ndarray:
        return self.L / np.linalg.norm(self.L, axis=1, keepdims=True)

    @property
    def condition_number(self) -> float:
        s = np.linalg.svd(self.L, compute_uv=False)
        return float(s[0] / s[-1]) if s[-1] > 0 else np.inf


def coeffs_to_matrix(c: np.ndarray) -> np.ndarray:
    """(..., 9) traceless-gauge coefficients -> (..., 4, 4) symmetric."""
    c = np.asarray(c, dtype=np.float64)
    a11, a22, a12, a13, a23 = (c[..., i] for i in range(5))
    b = c[..., 5:8]
    d = c[..., 8]
    M = np.zeros(c.shape[:-1] + (4, 4))
    M[..., 0, 0] = a11
    M[..., 1, 1] = a22
    M[..., 2, 2] = -a11 - a22
    M[..., 0, 1] = M[..., 1, 0] = a12
    M[..., 0, 2] = M[..., 2, 0] = a13
    M[..., 1, 2] = M[..., 2, 1] = a23
    M[..., :3, 3] = b
    M[..., 3, :3] = b
    M[..., 3, 3] = d
    return M


def matrix_to_coeffs(M: np.ndarray) -> np.ndarray:
    """(..., 4, 4) symmetric -> traceless-gauge (..., 9) coefficients.

    The quadratic block's trace is moved into the constant term; on unit
    normals the two parameterizations predict identical intensities.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.shape[-2:] != (4, 4):
        raise ShapeMismatch(f"expected (...,4,4), got {M.shape}")
    if not np.allclose(M, np.swapaxes(M, -1, -2), atol=1e-9, rtol=0):
        raise ShapeMismatch("shading matrix must be symmetric")
    tr = M[..., 0, 0] + M[..., 1, 1] + M[..., 2, 2]
    c = np.zeros(M.shape[:-2] + (N_COEFFS,))
    c[..., 0] = M[..., 0, 0] - tr / 3.0
    c[..., 1] = M[..., 1, 1] - tr / 3.0
    c[..., 2] = M[..., 0, 1]
    c[..., 3] = M[..., 0, 2]
    c[..., 4] = M[..., 1, 2]
    c[..., 5:8] = M[..., :3, 3]
    c[..., 8] = M[..., 3, 3] + tr / 3.0
    return c


def shading_features(n: np.ndarray) -> np.ndarray:
    """Regression features matching the coefficient layout of
    coeffs_to_matrix; rows satisfy features @ c == [n;1]^T M(c) [n;1]."""
    n = np.asarray(n, dtype=np.float64)
    n1, n2, n3 = n[..., 0], n[..., 1], n[..., 2]
    return np.stack(
        [
            n1 * n1 - n3 * n3,
            n2 * n2 - n3 * n3,
            2 * n1 * n2,
            2 * n1 * n3,
            2 * n2 * n3,
            2 * n1,
            2 * n2,
            2 * n3,
            np.ones_like(n1),
        ],
        axis=-1,
    )


@dataclass(frozen=True)
class QuadraticLightModel:
    """Per-light quadratic shading model in the traceless gauge."""

    coeffs: np.ndarray  # (6, 9)
    residual_rms: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.float64)
        if c.shape != (6, N_COEFFS):
            raise ShapeMismatch(f"expected (6,9) coefficients, got {c.shape}")
        r = self.residual_rms
        r = np.zeros(6) if r is None else np.asarray(r, dtype=np.float64)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "residual_rms", r)

    def matrices(self) -> np.ndarray:
        return coeffs_to_matrix(self.coeffs)

    def predict(self, normals: np.ndarray) -> np.ndarray:
        """Intensities (..., 6) for unit normals (..., 3)."""
        return shading_features(normals) @ self.coeffs.T


def _gather_pixels(images, target_normals: NormalMap, mask):
    stack = np.stack([im.samples for im in images], axis=2)
    if stack.shape[:2] != target_normals.shape:
        raise ShapeMismatch("images and normal map disagree on size")
    mask = np.asarray(mask, dtype=bool)
    if mask.shape == target_normals.shape:
        mask = np.repeat(mask[:, :, None], 6, axis=2)
    if mask.shape != stack.shape:
        raise ShapeMismatch(f"mask shape {mask.shape} unusable")
    mask = mask & target_normals.valid[:, :, None]
    return stack, mask


def fit_linear_lights(images, target_normals: NormalMap, mask) -> LinearLightModel:
    """Least-squares 3-vector per light over masked known-normal pixels.

    The mask may be per-pixel (h, w) or per-light (h, w, 6); shadowed
    pixels must be excluded by the caller (the overhead-comparison rule
    works well).
    """
    stack, mask = _gather_pixels(images, target_normals, mask)
    L = np.zeros((6, 3))
    rms = np.zeros(6)
    for i in range(6):
        m = mask[:, :, i]
        N = target_normals.vectors[m]
        if N.shape[0] >= 3:
            s = np.linalg.svd(N, compute_uv=False)
        if N.shape[0] < 3 or s[2] < 1e-8 * s[0]:
            raise RankDeficientNormals(
                f"light {i + 1}: masked normals span less than 3 dimensions"
            )
        I = stack[:, :, i][m]
        sol, _, _, _ = np.linalg.lstsq(N, I, rcond=None)
        L[i] = sol
        rms[i] = float(np.sqrt(np.mean((N @ sol - I) ** 2)))
    return LinearLightModel(L, residual_rms=rms)


def fit_quadratic_lights(
    images, target_normals: NormalMap, mask, cond_limit: float = 1e6
) -> QuadraticLightModel:
    """Least-squares 9-coefficient quadratic shading model per light."""
    stack, mask = _gather_pixels(images, target_normals, mask)
    coeffs = np.zeros((6, N_COEFFS))
    rms = np.zeros(6)
    for i in range(6):
        m = mask[:, :, i]
        N = target_normals.vectors[m]
        Phi = shading_features(N)
        if Phi.shape[0] < N_COEFFS:
            raise IllConditioned(
                f"light {i + 1}: {Phi.shape[0]} pixels cannot fix 9 coefficients"
            )
        s = np.linalg.svd(Phi, compute_uv=False)
        if s[-1] <= 0 or s[0] / s[-1] >= cond_limit:
            raise IllConditioned(
                f"light {i + 1}: design condition {s[0] / max(s[-1], 1e-300):.2e}"
            )
        I = stack[:, :, i][m]
        sol, _, _, _ = np.linalg.lstsq(Phi, I, rcond=None)
        coeffs[i] = sol
        rms[i] = float(np.sqrt(np.mean((Phi @ sol - I) ** 2)))
    return QuadraticLightModel(coeffs, residual_rms=rms)


# ------------------------------------------------------------------ spline
def _biquad_design(xy: np.ndarray, rect) -> np.ndarray:
    """Rows of the 9 tensor monomials, coordinates scaled to [-1, 1]."""
    x0, y0, x1, y1 = rect
    x = (np.asarray(xy, dtype=np.float64)[..., 0] - x0) / max(x1 - x0, 1e-12) * 2 - 1
    y = (np.asarray(xy, dtype=np.float64)[..., 1] - y0) / max(y1 - y0, 1e-12) * 2 - 1
    cols = [x**px * y**py for px, py in _BIQUAD_POWERS]
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class IlluminationField:
    """Bi-quadratic spatial interpolation of the per-light shading models.

    ``linear_coeffs``  : (6, 3, 9)  spline coefficients per l component
    ``quad_coeffs``    : (6, 9, 9)  spline coefficients per M coefficient
    ``rect``           : (x0, y0, x1, y1) workspace rectangle in mm
    ``nodes``          : (n, 2) placement locations the fit came from
    """

    rect: tuple
    linear_coeffs: np.ndarray
    quad_coeffs: np.ndarray
    nodes: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        lc = np.asarray(self.linear_coeffs, dtype=np.float64)
        qc = np.asarray(self.quad_coeffs, dtype=np.float64)
        if lc.shape != (6, 3, N_COEFFS) or qc.shape != (6, N_COEFFS, N_COEFFS):
            raise ShapeMismatch("spline coefficient blocks have wrong shape")
        nodes = self.nodes
        nodes = np.zeros((0, 2)) if nodes is None else np.asarray(nodes, float)
        object.__setattr__(self, "linear_coeffs", lc)
        object.__setattr__(self, "quad_coeffs", qc)
        object.__setattr__(self, "rect", tuple(float(v) for v in self.rect))
        object.__setattr__(self, "nodes", nodes)

    @staticmethod
    def constant(
        linear: LinearLightModel, quad: QuadraticLightModel, rect=(-100, -100, 100, 100)
    ) -> "IlluminationField":
        lc = np.zeros((6, 3, N_COEFFS))
        lc[:, :, 0] = linear.L
        qc = np.zeros((6, N_COEFFS, N_COEFFS))
        qc[:, :, 0] = quad.coeffs
        return IlluminationField(rect, lc, qc)

    def _clamp(self, xy):
        xy = np.asarray(xy, dtype=np.float64)
        x0, y0, x1, y1 = self.rect
        out = (
            (xy[..., 0] < x0)
            | (xy[..., 0] > x1)
            | (xy[..., 1] < y0)
            | (xy[..., 1] > y1)
        )
        if np.any(out):
            warnings.warn(
                "illumination queried outside the calibrated workspace; clamped",
                stacklevel=3,
            )
            xy = np.stack(
                [np.clip(xy[..., 0], x0, x1), np.clip(xy[..., 1], y0, y1)], axis=-1
            )
        return xy

    def _center(self):
        x0, y0, x1, y1 = self.rect
        return np.array([(x0 + x1) / 2.0, (y0 + y1) / 2.0])

    def linear_at(self, xy=None) -> np.ndarray:
        """Per-light linear vectors at xy: (..., 6, 3)."""
        xy = self._center() if xy is None else self._clamp(xy)
        phi = _biquad_design(xy, self.rect)
        return np.einsum("...k,ick->...ic", phi, self.linear_coeffs)

    def quadratic_at(self, xy=None) -> np.ndarray:
        """Per-light symmetric shading matrices at xy: (..., 6, 4, 4)."""
        xy = self._center() if xy is None else self._clamp(xy)
        phi = _biquad_design(xy, self.rect)
        coeffs = np.einsum("...k,ick->...ic", phi, self.quad_coeffs)
        return coeffs_to_matrix(coeffs)

    # ------------------------------------------------------------ artifact
    def to_dict(self) -> dict:
        return {
            "rect": list(self.rect),
            "linear_coeffs": self.linear_coeffs.tolist(),
            "quad_coeffs": self.quad_coeffs.tolist(),
            "nodes": self.nodes.tolist(),
        }

    @staticmethod
    def from_dict(d: dict) -> "IlluminationField":
        return IlluminationField(
            rect=tuple(d["rect"]),
            linear_coeffs=np.array(d["linear_coeffs"]),
            quad_coeffs=np.array(d["quad_coeffs"]),
            nodes=np.array(d["nodes"]).reshape(-1, 2),
        )

    def save_json(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, sort_keys=True)
            f.write("\n")

    @staticmethod
    def load_json(path) -> "IlluminationField":
        with open(path) as f:
            return IlluminationField.from_dict(json.load(f))


def fit_spatial_spline(placements, ridge: float = 0.0) -> IlluminationField:
    """Fit the bi-quadratic spatial model from per-placement fits.

    ``placements``: iterable of (xy, LinearLightModel, QuadraticLightModel).
    ``ridge`` optionally damps the solve; the default keeps fits exact so
    coefficients that truly are bi-quadratic in (x, y) are reproduced to
    machine precision.
    """
    placements = list(placements)
    if len(placements) < MIN_PLACEMENTS:
        raise TooFewPlacements(
            f"need >= {MIN_PLACEMENTS} placements, got {len(placements)}"
        )
    xy = np.array([p[0] for p in placements], dtype=np.float64)
    spread = xy.max(axis=0) - xy.min(axis=0)
    if min(spread) < 1e-9:
        raise DegenerateLayout("placements lie on an axis-aligned line")
    centered = xy - xy.mean(axis=0)
    s = np.linalg.svd(centered, compute_uv=False)
    if s[1] < 1e-9 * max(s[0], 1e-12):
        raise DegenerateLayout("placements are collinear")

    rect = (xy[:, 0].min(), xy[:, 1].min(), xy[:, 0].max(), xy[:, 1].max())
    Phi = _biquad_design(xy, rect)
    cond = np.linalg.cond(Phi)
    if not np.isfinite(cond) or cond > 1e10:
        raise DegenerateLayout(
            f"placement layout cannot fix a bi-quadratic (condition {cond:.2e})"
        )

    targets = np.zeros((len(placements), 6 * 3 + 6 * N_COEFFS))
    for r, (_, lin, quad) in enumerate(placements):
        targets[r, : 6 * 3] = np.asarray(lin.L).ravel()
        targets[r, 6 * 3 :] = np.asarray(quad.coeffs).ravel()
    if ridge > 0:
        A = Phi.T @ Phi + ridge * np.eye(Phi.shape[1])
        sol = np.linalg.solve(A, Phi.T @ targets)
    else:
        sol, _, _, _ = np.linalg.lstsq(Phi, targets, rcond=None)
    lc = sol[:, : 6 * 3].T.reshape(6, 3, N_COEFFS)
    qc = sol[:, 6 * 3 :].T.reshape(6, N_COEFFS, N_COEFFS)
    return IlluminationField(rect, lc, qc, nodes=xy)


def eval_illumination(field: IlluminationField, xy):
    """Point query returning plain per-light models (clamped to the rect)."""
    L = field.linear_at(xy)
    M = field.quadratic_at(xy)
    return LinearLightModel(L), QuadraticLightModel(matrix_to_coeffs(M))
