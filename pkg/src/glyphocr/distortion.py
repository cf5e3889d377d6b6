"""Random training-time input distortions: translation, rotation, zoom,
elastic deformation and salt & pepper noise, each by a random amount.

The geometric parts compose into a single affine map (applied in the order
translate, rotate, zoom, one nearest-neighbour resampling pass), then the
elastic field warps, then pixels flip. Everything is pure given an explicit
numpy Generator, so callers own parallelism by splitting seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .raster import as_binary_image

__all__ = ["DistortionParams", "elastic_deform", "salt_pepper", "distort",
           "make_distorter", "contact_sheet"]


@dataclass
class DistortionParams:
    max_translate: float = 3.0      # pixels, each axis
    max_rotate: float = 5.0         # degrees
    zoom_range: tuple = (0.9, 1.1)
    elastic_sigma: float = 4.0      # smoothing width of the displacement field
    elastic_alpha: float = 8.0      # displacement scale
    saltpepper_p: float = 0.01      # per-pixel flip probability

    def __post_init__(self):
        if min(self.max_translate, self.max_rotate,
               self.elastic_sigma, self.elastic_alpha) < 0:
            raise ValueError("distortion ranges must be nonnegative")
        if not self.zoom_range[0] <= 1.0 <= self.zoom_range[1]:
            raise ValueError("zoom_range must bracket 1.0")
        if not 0.0 <= self.saltpepper_p < 0.5:
            raise ValueError("saltpepper_p must be in [0, 0.5)")


def elastic_deform(img, sigma: float, alpha: float, rng) -> np.ndarray:
    """Per-pixel uniform(-1, 1) displacement field, Gaussian-smoothed by
    sigma, scaled by alpha, applied with nearest-neighbour resampling."""
    img = as_binary_image(img)
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    h, w = img.shape
    dx = rng.uniform(-1, 1, size=(h, w))
    dy = rng.uniform(-1, 1, size=(h, w))
    if alpha == 0:
        return img.copy()
    dx = gaussian_filter(dx, sigma) * alpha
    dy = gaussian_filter(dy, sigma) * alpha
    ys, xs = np.mgrid[0:h, 0:w]
    sy = np.rint(ys + dy).astype(np.int64)
    sx = np.rint(xs + dx).astype(np.int64)
    valid = (sy >= 0) & (sy < h) & (sx >= 0) & (sx < w)
    out = np.zeros_like(img)
    out[valid] = img[sy[valid], sx[valid]]
    return out


def salt_pepper(img, p: float, rng) -> np.ndarray:
    """Flip each pixel independently with probability p."""
    img = as_binary_image(img)
    if not 0.0 <= p < 0.5:
        raise ValueError("p must be in [0, 0.5)")
    if p == 0:
        return img.copy()
    flips = rng.random(img.shape) < p
    return (img ^ flips).astype(np.uint8)


def distort(img, params: DistortionParams, rng) -> np.ndarray:
    """One random distortion draw; 48x48 binary in, 48x48 binary out.

    Amounts are sampled uniformly within params; the transform order is
    translate, rotate, zoom, elastic, salt & pepper.
    """
    img = as_binary_image(img)
    if img.shape != (48, 48):
        raise ValueError(f"distort expects 48x48 glyphs, got {img.shape}")
    tx = rng.uniform(-params.max_translate, params.max_translate)
    ty = rng.uniform(-params.max_translate, params.max_translate)
    theta = math.radians(rng.uniform(-params.max_rotate, params.max_rotate))
    zoom = rng.uniform(*params.zoom_range)

    if (tx, ty, theta, zoom) != (0.0, 0.0, 0.0, 1.0):
        h, w = img.shape
        c = (h - 1) / 2.0
        ys, xs = np.mgrid[0:h, 0:w]
        # invert zoom(rot(translate(x))): scale back, rotate back, shift back
        ux = (xs - c) / zoom
        uy = (ys - c) / zoom
        cos_t, sin_t = math.cos(theta), math.sin(theta)
        sx = np.rint(cos_t * ux + sin_t * uy + c - tx).astype(np.int64)
        sy = np.rint(-sin_t * ux + cos_t * uy + c - ty).astype(np.int64)
        valid = (sx >= 0) & (sx < w) & (sy >= 0) & (sy < h)
        warped = np.zeros_like(img)
        warped[valid] = img[sy[valid], sx[valid]]
    else:
        warped = img.copy()

    if params.elastic_alpha > 0 and params.elastic_sigma > 0:
        warped = elastic_deform(warped, params.elastic_sigma, params.elastic_alpha, rng)
    if params.saltpepper_p > 0:
        warped = salt_pepper(warped, params.saltpepper_p, rng)
    return warped


def make_distorter(params: DistortionParams = None):
    """(img, rng) -> img closure for the training loop."""
    params = params or DistortionParams()

    def apply(img, rng):
        return distort(img, params, rng)

    return apply


def contact_sheet(images, columns: int = 8, pad: int = 2) -> np.ndarray:
    """Tile binary glyphs into one grayscale sheet (ink black on white)."""
    images = [as_binary_image(im) for im in images]
    side = images[0].shape[0]
    rows = (len(images) + columns - 1) // columns
    sheet = np.full((rows * (side + pad) + pad, columns * (side + pad) + pad),
                    255, dtype=np.uint8)
    for i, im in enumerate(images):
        r, c = divmod(i, columns)
        y = pad + r * (side + pad)
        x = pad + c * (side + pad)
        sheet[y:y + side, x:x + side] = np.where(im > 0, 0, 255)
    return sheet
