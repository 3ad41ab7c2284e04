"""Occlusion edge detection from directional-to-overhead image ratios.

A point lit by a grazing panel outshines itself under the weak overhead
panel; a point shadowed by nearby geometry falls to the ambient floor.
Dividing each directional image by the overhead image therefore produces
a map that steps from low to high exactly where the scene stops occluding
that panel, and the step sits against the occluder's rim. Albedo scales
out of the ratio, so printed texture does not fire.

Each ratio is scored with a directional derivative along its own light's
image-plane direction, rectified so only shadow-to-lit transitions (walking
toward the light) count. This keeps the rim response and discards the far
shadow terminator, which transitions the opposite way. The confidence map
is the strongest response over the six lights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .core.camera import CameraModel
from .core.image import EdgeMap, ImageF
from .core.rasterops import hysteresis_threshold
from .core.transforms import wrap_angle
from .errors import ShapeMismatch

# binomial smoothing crossed with a 5-tap first difference; exact on ramps
_SMOOTH5 = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0
_DERIV5 = np.array([-1.0, -2.0, 0.0, 2.0, 1.0]) / 8.0

RATIO_EPS = 1e-4


@dataclass(frozen=True)
class RatioStack:
    """Six directional/overhead ratio images plus per-light image angles.

    ``angles[i]`` is the direction (radians, CCW from +u in (u, v) image
    coordinates) pointing toward light i as seen in the image plane,
    wrapped to (-pi, pi].
    """

    ratios: list = field(default_factory=list)  # 6x ImageF, single channel
    angles: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        r = list(self.ratios)
        if len(r) != 6:
            raise ShapeMismatch(f"expected 6 ratio images, got {len(r)}")
        shape = r[0].shape
        for im in r:
            if im.shape != shape or im.channels != 1:
                raise ShapeMismatch("ratio images must share single-channel shape")
            if not np.isfinite(im.samples).all():
                raise ValueError("non-finite ratio value")
        a = np.asarray(self.angles, dtype=np.float64)
        if a.shape != (6,):
            raise ShapeMismatch(f"need 6 light angles, got {a.shape}")
        a = np.array([wrap_angle(t) for t in a])
        object.__setattr__(self, "ratios", r)
        object.__setattr__(self, "angles", a)

    @property
    def shape(self):
        return self.ratios[0].shape


def light_image_angles(light_dirs, cam: CameraModel) -> np.ndarray:
    """Image-plane angle of each base-frame light direction.

    Rotation only; directions have no translation part. The angle is
    measured in (u, v) pixel axes, v pointing down the image.
    """
    d = np.asarray(light_dirs, dtype=np.float64)
    if d.ndim != 2 or d.shape[1] != 3:
        raise ShapeMismatch(f"light directions must be (n, 3), got {d.shape}")
    dc = d @ cam.pose.R.T
    return np.array([wrap_angle(np.arctan2(y, x)) for x, y, _ in dc])


def ratio_images(images, overhead: ImageF, light_dirs, cam: CameraModel,
                 eps: float = RATIO_EPS) -> RatioStack:
    """Divide each directional image by the overhead image.

    The denominator is floored at ``eps`` so unlit pixels stay finite.
    ``light_dirs`` are the six calibrated base-frame directions toward the
    sources, (6, 3).
    """
    imgs = list(images)
    if len(imgs) != 6:
        raise ShapeMismatch(f"expected 6 directional images, got {len(imgs)}")
    for im in imgs:
        if im.shape != overhead.shape or im.channels != 1:
            raise ShapeMismatch("directional/overhead image size mismatch")
    denom = np.maximum(overhead.samples, eps)
    ratios = [
        ImageF(im.samples / denom, valid=im.valid & overhead.valid) for im in imgs
    ]
    angles = light_image_angles(light_dirs, cam)
    if angles.shape != (6,):
        raise ShapeMismatch("need exactly 6 light directions")
    return RatioStack(ratios=ratios, angles=angles)


def directional_confidence(stack: RatioStack, normalize: str = "max") -> ImageF:
    """Rectified transition strength of each ratio along its light angle.

    Walking toward a light, a pixel run crosses shadow-to-lit exactly at
    the rim of the geometry that cast the shadow, so only positive-going
    derivatives count; the terminator at the far end of the shadow
    transitions the other way and is dropped. ``normalize`` divides by the
    image max ("max") or the 99th percentile ("p99", robust to a single
    hot pixel); output is clipped to [0, 1].
    """
    if normalize not in ("max", "p99"):
        raise ValueError(f"normalize must be 'max' or 'p99', got {normalize!r}")
    R = np.stack([im.samples for im in stack.ratios], axis=2)
    du = ndimage.correlate1d(R, _DERIV5, axis=1, mode="nearest")
    du = ndimage.correlate1d(du, _SMOOTH5, axis=0, mode="nearest")
    dv = ndimage.correlate1d(R, _DERIV5, axis=0, mode="nearest")
    dv = ndimage.correlate1d(dv, _SMOOTH5, axis=1, mode="nearest")
    along = du * np.cos(stack.angles) + dv * np.sin(stack.angles)
    score = np.maximum(along, 0.0).max(axis=2)
    scale = float(score.max()) if normalize == "max" else float(
        np.percentile(score, 99.0)
    )
    if scale <= 0.0:
        return ImageF(np.zeros_like(score))
    return ImageF(np.clip(score / scale, 0.0, 1.0))


def detect_edges(confidence, low: float = 0.1, high: float = 0.3) -> EdgeMap:
    """Hysteresis-threshold a confidence map into a binary edge map."""
    binary = hysteresis_threshold(confidence, low, high)
    return EdgeMap(confidence=confidence, binary=binary)


def edges_from_capture(images, overhead, light_dirs, cam, eps: float = RATIO_EPS,
                       low: float = 0.1, high: float = 0.3,
                       normalize: str = "max") -> EdgeMap:
    """Ratio, score, threshold; the full detection chain in one call."""
    stack = ratio_images(images, overhead, light_dirs, cam, eps=eps)
    conf = directional_confidence(stack, normalize=normalize)
    return detect_edges(conf, low=low, high=high)
