"""Exact distance transforms and hysteresis thresholding on rasters."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from ..errors import AllFalse, BadThresholds


def euclidean_distance_transform(mask: np.ndarray) -> np.ndarray:
    """Exact Euclidean distance (in pixels) to the nearest True pixel.

    True pixels get 0. Raises AllFalse on an empty mask.
    """
    m = np.asarray(mask, dtype=bool)
    if not m.any():
        raise AllFalse("distance transform of an all-False mask")
    return ndimage.distance_transform_edt(~m)


def nearest_true_indices(mask: np.ndarray):
    """Per-pixel (row, col) index of the nearest True pixel, plus distances.

    Used to fill unsolved pixels from their nearest solved neighbor.
    """
    m = np.asarray(mask, dtype=bool)
    if not m.any():
        raise AllFalse("no valid pixels to copy from")
    dist, (ir, ic) = ndimage.distance_transform_edt(~m, return_indices=True)
    return dist, ir, ic


def hysteresis_threshold(confidence: np.ndarray, low: float, high: float) -> np.ndarray:
    """Classic two-threshold growing.

    Pixels >= high seed regions which grow through 8-connected pixels
    >= low. Requires 0 <= low <= high. Accepts a bare array or any object
    with a ``samples`` array (e.g. a confidence image).
    """
    if not (0.0 <= low <= high):
        raise BadThresholds(f"need 0 <= low <= high, got low={low}, high={high}")
    c = np.asarray(getattr(confidence, "samples", confidence), dtype=np.float64)
    weak = c >= low
    strong = c >= high
    if not strong.any():
        return np.zeros_like(weak)
    eight = np.ones((3, 3), dtype=bool)
    labels, n = ndimage.label(weak, structure=eight)
    if n == 0:
        return np.zeros_like(weak)
    keep = np.zeros(n + 1, dtype=bool)
    keep[np.unique(labels[strong])] = True
    keep[0] = False
    return keep[labels]
