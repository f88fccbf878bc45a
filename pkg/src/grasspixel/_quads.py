"""Shared image-space quadrilateral helpers (region means over pixel grids)."""

from __future__ import annotations

import numpy as np


def quad_signed_areas(quad: np.ndarray) -> np.ndarray:
    """Cross products of consecutive edges; sign pattern classifies the quad."""
    q = np.asarray(quad, dtype=np.float64)
    if q.shape != (4, 2):
        raise ValueError(f"quad must be 4 (x, y) points, got shape {q.shape}")
    crosses = np.empty(4)
    for i in range(4):
        a = q[(i + 1) % 4] - q[i]
        b = q[(i + 2) % 4] - q[(i + 1) % 4]
        crosses[i] = a[0] * b[1] - a[1] * b[0]
    return crosses


def validate_convex_quad(quad: np.ndarray) -> np.ndarray:
    """Reject degenerate (zero-area) and self-intersecting quads.

    Projected footprints and checker patches are always convex, so a mixed
    cross-product sign pattern means the corners are mis-ordered (bowtie).
    """
    q = np.asarray(quad, dtype=np.float64)
    crosses = quad_signed_areas(q)
    if np.all(crosses == 0.0):
        raise ValueError("degenerate quad (zero area)")
    if np.any(crosses > 0) and np.any(crosses < 0):
        raise ValueError("self-intersecting or non-convex quad")
    return q


def shrink_quad(quad: np.ndarray, fraction: float) -> np.ndarray:
    """Pull each corner toward the centroid by ``fraction`` (edge-bleed guard)."""
    q = np.asarray(quad, dtype=np.float64)
    centroid = q.mean(axis=0)
    return centroid + (q - centroid) * (1.0 - fraction)


def pixels_in_quad_mask(width: int, height: int, quad: np.ndarray) -> np.ndarray:
    """Boolean (height, width) mask of pixels whose centers fall in the quad."""
    q = validate_convex_quad(quad)
    crosses = quad_signed_areas(q)
    sign = 1.0 if crosses.sum() >= 0 else -1.0

    x0 = max(int(np.floor(q[:, 0].min() - 1)), 0)
    x1 = min(int(np.ceil(q[:, 0].max() + 1)), width)
    y0 = max(int(np.floor(q[:, 1].min() - 1)), 0)
    y1 = min(int(np.ceil(q[:, 1].max() + 1)), height)
    mask = np.zeros((height, width), dtype=bool)
    if x0 >= x1 or y0 >= y1:
        return mask

    xs = np.arange(x0, x1) + 0.5
    ys = np.arange(y0, y1) + 0.5
    gx, gy = np.meshgrid(xs, ys)
    inside = np.ones(gx.shape, dtype=bool)
    for i in range(4):
        ex, ey = q[(i + 1) % 4] - q[i]
        inside &= sign * (ex * (gy - q[i, 1]) - ey * (gx - q[i, 0])) >= 0
    mask[y0:y1, x0:x1] = inside
    return mask


def quad_mean(pixels: np.ndarray, quad: np.ndarray) -> np.ndarray:
    """Mean RGB over pixel centers inside the quad. Raises on empty coverage."""
    h, w = pixels.shape[:2]
    mask = pixels_in_quad_mask(w, h, quad)
    n = int(mask.sum())
    if n == 0:
        raise ValueError("quad covers no pixel centers")
    return pixels[mask].mean(axis=0)
