"""Color correction matrix: align virtual linear RGB to real linear RGB.

The 24-patch checker is photographed in the real environment and rendered in
the virtual one; a pure 3x3 linear map (no offset, no polynomial terms) is fit
by least squares with the real patches as dependent variables. The same model
applies whether the regression is run jointly or channel by channel -- the
normal equations factor per output channel.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from ._quads import quad_mean, shrink_quad
from .colorimetry import Color, Space

__all__ = [
    "PatchSource",
    "PatchSet",
    "ColorCorrectionMatrix",
    "SingularFitError",
    "fit_ccm",
    "apply_ccm",
    "patch_means",
    "patchset_to_csv",
    "patchset_from_csv",
]

PATCH_COUNT = 24

# Shrink patch quads 20% toward their centroid before averaging so patch
# borders and neighbouring patches never bleed into the mean.
ROI_SHRINK = 0.2


class PatchSource(Enum):
    REAL = "real"
    VIRTUAL = "virtual"


class SingularFitError(ValueError):
    """Raised when the virtual patch matrix is rank deficient (e.g. all gray)."""


@dataclass(frozen=True)
class PatchSet:
    """Ordered 24-patch measurement in ProPhoto linear RGB."""

    patches: tuple[Color, ...]
    source: PatchSource

    def __post_init__(self):
        if len(self.patches) != PATCH_COUNT:
            raise ValueError(f"expected {PATCH_COUNT} patches, got {len(self.patches)}")
        for p in self.patches:
            if p.space != Space.PROPHOTO_LINEAR_RGB:
                raise ValueError("patches must be ProPhoto linear RGB")
            if min(p.values) < 0:
                raise ValueError("patch values must be non-negative")

    @property
    def matrix(self) -> np.ndarray:
        """(24, 3) array of patch values."""
        return np.array([p.values for p in self.patches], dtype=np.float64)


@dataclass(frozen=True)
class ColorCorrectionMatrix:
    """3x3 map from virtual to real ProPhoto linear RGB, with fit residual."""

    m: np.ndarray
    residual_rms: float = 0.0

    def __post_init__(self):
        m = np.asarray(self.m, dtype=np.float64)
        if m.shape != (3, 3) or not np.all(np.isfinite(m)):
            raise ValueError("correction matrix must be a finite 3x3 array")
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "m", m)

    @staticmethod
    def identity() -> "ColorCorrectionMatrix":
        return ColorCorrectionMatrix(np.eye(3), 0.0)


def fit_ccm(real: PatchSet, virtual: PatchSet) -> ColorCorrectionMatrix:
    """Least-squares fit of M in real = M @ virtual over the 24 patches.

    Solved through the normal equations (the 3x3 Gram matrix of a 24-patch
    checker is tiny and well conditioned); falls back to a pseudo-inverse when
    the system is nearly singular, and raises :class:`SingularFitError` when
    the virtual patches are genuinely rank deficient.
    """
    V = virtual.matrix
    R = real.matrix
    if np.linalg.matrix_rank(V, tol=1e-10 * max(1.0, float(np.abs(V).max()))) < 3:
        raise SingularFitError("virtual patch matrix is rank deficient")
    gram = V.T @ V
    cross = V.T @ R
    if np.linalg.cond(gram) < 1e12:
        m = np.linalg.solve(gram, cross).T
    else:
        m = (np.linalg.pinv(V) @ R).T
    residuals = R - V @ m.T
    rms = float(np.sqrt(np.mean(residuals**2)))
    return ColorCorrectionMatrix(m, rms)


def apply_ccm(ccm: ColorCorrectionMatrix, c: Color) -> Color:
    """Apply the correction: matrix-vector product in ProPhoto linear RGB."""
    if c.space != Space.PROPHOTO_LINEAR_RGB:
        raise ValueError("apply_ccm expects a ProPhoto linear RGB color")
    out = ccm.m @ c.array
    return Color.prophoto(out[0], out[1], out[2])


def patch_means(image, quads, source: PatchSource = PatchSource.VIRTUAL) -> PatchSet:
    """Average each checker patch from a rendered linear image.

    ``image`` is a renderer ``LinearImage`` (or any object with a ``pixels``
    (H, W, 3) array in display-linear RGB); ``quads`` are 24 image-space
    quadrilaterals in row-major checker order. Each quad is shrunk 20% toward
    its centroid before the mean is taken, and the result is converted to
    ProPhoto linear RGB.
    """
    from .colorimetry import convert  # local import keeps module load light

    pixels = np.asarray(image.pixels, dtype=np.float64)
    quads = np.asarray(quads, dtype=np.float64)
    if quads.shape != (PATCH_COUNT, 4, 2):
        raise ValueError(f"expected {PATCH_COUNT} quads of 4 (x, y) points")
    colors = []
    for quad in quads:
        mean = quad_mean(pixels, shrink_quad(quad, ROI_SHRINK))
        display = Color.display(mean[0], mean[1], mean[2])
        colors.append(convert(display, Space.PROPHOTO_LINEAR_RGB))
    return PatchSet(tuple(colors), source)


def patchset_to_csv(ps: PatchSet) -> str:
    """24 rows of decimal R,G,B (ProPhoto linear), with header."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["R", "G", "B"])
    for p in ps.patches:
        writer.writerow([repr(v) for v in p.values])
    return buf.getvalue()


def patchset_from_csv(text_or_path, source: PatchSource) -> PatchSet:
    if isinstance(text_or_path, (str, Path)) and "\n" not in str(text_or_path):
        text = Path(text_or_path).read_text()
    else:
        text = str(text_or_path)
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if rows and rows[0][0].strip().upper() == "R":
        rows = rows[1:]
    patches = tuple(Color.prophoto(float(r[0]), float(r[1]), float(r[2])) for r in rows)
    return PatchSet(patches, source)


def ccm_to_csv(ccm: ColorCorrectionMatrix) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in ccm.m:
        writer.writerow([repr(float(v)) for v in row])
    writer.writerow(["residual_rms", repr(float(ccm.residual_rms))])
    return buf.getvalue()


def ccm_from_csv(text_or_path) -> ColorCorrectionMatrix:
    if isinstance(text_or_path, (str, Path)) and "\n" not in str(text_or_path):
        text = Path(text_or_path).read_text()
    else:
        text = str(text_or_path)
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    m = np.array([[float(v) for v in row] for row in rows[:3]])
    rms = 0.0
    for row in rows[3:]:
        if row and row[0] == "residual_rms":
            rms = float(row[1])
    return ColorCorrectionMatrix(m, rms)
