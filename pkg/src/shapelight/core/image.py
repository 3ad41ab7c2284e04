"""Float image containers.

Conventions used across the workbench:

* arrays are row-major, indexed [row, col] = [v, u]; pixel centers sit at
  integer coordinates, so pixel (u, v) covers [u-0.5, u+0.5) x [v-0.5, v+0.5)
* intensities are linear floats; file exposure scaling is the caller's job
* a validity mask rides along with every image; invalid pixels carry
  unspecified sample values and must be ignored by consumers
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeMismatch


@dataclass(frozen=True)
class ImageF:
    """Single- or three-channel float image with a validity mask.

    Parameters
    ----------
    samples : ndarray
        (h, w) or (h, w, 3) float array.
    valid : ndarray, optional
        (h, w) bool array; defaults to all-valid.
    """

    samples: np.ndarray
    valid: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim == 2:
            pass
        elif s.ndim == 3 and s.shape[2] in (1, 3):
            if s.shape[2] == 1:
                s = s[:, :, 0]
        else:
            raise ShapeMismatch(f"image must be (h,w) or (h,w,3), got {s.shape}")
        v = self.valid
        if v is None:
            v = np.ones(s.shape[:2], dtype=bool)
        else:
            v = np.asarray(v, dtype=bool)
            if v.shape != s.shape[:2]:
                raise ShapeMismatch(f"valid mask {v.shape} != image {s.shape[:2]}")
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "valid", v)

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.samples.ndim == 2 else self.samples.shape[2]

    @property
    def shape(self):
        return self.samples.shape

    def sample_bilinear(self, u, v):
        """Bilinear lookup at fractional pixel coordinates.

        Integer coordinates hit pixel centers exactly. Queries are clamped
        to the image border; validity is ignored (caller masks).
        """
        u = np.clip(np.asarray(u, dtype=np.float64), 0.0, self.width - 1.0)
        v = np.clip(np.asarray(v, dtype=np.float64), 0.0, self.height - 1.0)
        u0 = np.floor(u).astype(np.intp)
        v0 = np.floor(v).astype(np.intp)
        u1 = np.minimum(u0 + 1, self.width - 1)
        v1 = np.minimum(v0 + 1, self.height - 1)
        fu = u - u0
        fv = v - v0
        s = self.samples
        if s.ndim == 3:
            fu = fu[..., None]
            fv = fv[..., None]
        top = s[v0, u0] * (1 - fu) + s[v0, u1] * fu
        bot = s[v1, u0] * (1 - fu) + s[v1, u1] * fu
        return top * (1 - fv) + bot * fv


@dataclass(frozen=True)
class EdgeMap:
    """Occlusion-edge detection result.

    confidence : ImageF, single channel, values in [0, 1]
    binary     : (h, w) bool array after hysteresis
    """

    confidence: ImageF
    binary: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        c = self.confidence
        if not isinstance(c, ImageF):
            c = ImageF(np.asarray(c, dtype=np.float64))
            object.__setattr__(self, "confidence", c)
        if c.channels != 1:
            raise ShapeMismatch("edge confidence must be single channel")
        lo = float(np.nanmin(c.samples)) if c.samples.size else 0.0
        hi = float(np.nanmax(c.samples)) if c.samples.size else 0.0
        if lo < -1e-12 or hi > 1 + 1e-12:
            raise ValueError(f"edge confidence outside [0,1]: [{lo}, {hi}]")
        b = self.binary
        if b is None:
            b = np.zeros(c.samples.shape[:2], dtype=bool)
        b = np.asarray(b, dtype=bool)
        if b.shape != c.samples.shape[:2]:
            raise ShapeMismatch("binary mask shape mismatch")
        object.__setattr__(self, "binary", b)

    @property
    def pixels(self) -> np.ndarray:
        """(n, 2) array of (u, v) coordinates of edge pixels."""
        vv, uu = np.nonzero(self.binary)
        return np.stack([uu, vv], axis=1)
