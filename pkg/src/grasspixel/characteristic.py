"""Color-change characteristics: OGCD curves, curve metrics, 8-bit calibration.

The origin grass color difference (OGCD) at length x is the CIEDE2000
distance between the measured color at the minimum length and at x, so every
curve starts at exactly zero. A sweep renders the pixel at each length,
normalizes exposure against the gray card, averages the projected footprint,
moves the mean through ProPhoto linear RGB (applying the color correction
matrix when one is given), and takes CIELAB there.

Curve analysis: isotonic regression (pool adjacent violators) followed by a
monotone piecewise-cubic interpolant gives an invertible fit; comparisons
resample both curves onto a common 0.5 mm grid and use the discrete Fréchet
distance plus the maximum pointwise OGCD error; calibration inverts the fit
so 8-bit levels land on OGCD targets that are linear in level.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.interpolate import PchipInterpolator

from .ccm import ColorCorrectionMatrix, apply_ccm
from .colorimetry import Color, Space, White, ciede2000, convert
from .lighting import LightingRig
from .renderer import (
    average_region,
    expose_gray_card,
    project_pixel_corners,
    render,
)
from .scene import Viewpoint, ZoomPolicy, viewpoint_to_camera

__all__ = [
    "CurveSource",
    "CharacteristicCurve",
    "CurveComparison",
    "CalibrationTable",
    "MonotoneCurve",
    "SweepCancelled",
    "measure_lab",
    "sweep",
    "isotonic",
    "fit_monotone",
    "discrete_frechet",
    "frechet_distance",
    "max_ogcd_error",
    "compare",
    "calibrate_8bit",
    "repeatability",
    "count_inflections",
    "curve_to_csv",
    "curve_from_csv",
    "table_to_csv",
    "comparison_to_json",
]

RESAMPLE_STEP_MM = 0.5


class CurveSource(Enum):
    REAL = "real"
    VIRTUAL = "virtual"


class SweepCancelled(RuntimeError):
    """Raised when a cancel check trips between lengths; partial data is kept
    on the exception."""

    def __init__(self, partial: "CharacteristicCurve | None"):
        super().__init__("sweep cancelled")
        self.partial = partial


@dataclass(frozen=True)
class CharacteristicCurve:
    """Ordered (length -> OGCD) samples with the CIELAB values behind them."""

    lengths_mm: np.ndarray
    ogcd: np.ndarray
    labs: tuple[Color, ...]
    source: CurveSource
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.asarray(self.lengths_mm, dtype=np.float64)
        y = np.asarray(self.ogcd, dtype=np.float64)
        if x.ndim != 1 or x.shape != y.shape or len(x) == 0:
            raise ValueError("lengths and ogcd must be equal-length 1-d arrays")
        if len(x) > 1 and not np.all(np.diff(x) > 0):
            raise ValueError("lengths must be strictly increasing")
        if y[0] != 0.0:
            raise ValueError("ogcd at the minimum length must be exactly 0")
        if np.any(y < 0) or not np.all(np.isfinite(y)):
            raise ValueError("ogcd values must be finite and non-negative")
        if len(self.labs) != len(x):
            raise ValueError("labs must parallel the samples")
        for c in self.labs:
            if c.space != Space.CIELAB:
                raise ValueError("labs must be CIELAB colors")
        x = x.copy()
        y = y.copy()
        x.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "lengths_mm", x)
        object.__setattr__(self, "ogcd", y)
        object.__setattr__(self, "labs", tuple(self.labs))

    def __len__(self) -> int:
        return len(self.lengths_mm)


@dataclass(frozen=True)
class CurveComparison:
    frechet: float
    max_error: float
    max_error_length_mm: float

    def __post_init__(self):
        if self.frechet < 0 or self.max_error < 0:
            raise ValueError("comparison metrics must be non-negative")


@dataclass(frozen=True)
class CalibrationTable:
    """256-entry map from display level to grass length."""

    lengths_mm: np.ndarray  # (256,)
    r2_before: float
    r2_after: float

    def __post_init__(self):
        e = np.asarray(self.lengths_mm, dtype=np.float64)
        if e.shape != (256,):
            raise ValueError("calibration table needs exactly 256 entries")
        if np.any(np.diff(e) < -1e-12):
            raise ValueError("calibration entries must be non-decreasing in level")
        for name in ("r2_before", "r2_after"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0 + 1e-12:
                raise ValueError(f"{name} must lie in [0, 1]")
        e = e.copy()
        e.flags.writeable = False
        object.__setattr__(self, "lengths_mm", e)


# ---------------------------------------------------------------------------
# Measurement pipeline
# ---------------------------------------------------------------------------

def measure_lab(
    scene,
    rig: LightingRig,
    cam,
    ccm: ColorCorrectionMatrix | None = None,
    *,
    spp: int | None = None,
    seed: int = 0,
    quality: str | None = None,
    bounces: int | None = None,
    workers: int | None = None,
):
    """Render once and run the full color pipeline for the footprint region.

    Returns (lab, prophoto, image, quad): CIELAB/D50 and ProPhoto means after
    optional correction, plus the exposed image and measurement quad.
    """
    img = render(scene, rig, cam, spp=spp, seed=seed, quality=quality,
                 bounces=bounces, workers=workers)
    img = expose_gray_card(img, rig)
    quad = project_pixel_corners(scene, cam)
    mean = average_region(img, quad)
    pp = convert(mean, Space.PROPHOTO_LINEAR_RGB)
    if ccm is not None:
        pp = apply_ccm(ccm, pp)
    lab = convert(pp, Space.CIELAB)
    return lab, pp, img, quad


def sweep(
    scene_builder: Callable[[float], object],
    rig: LightingRig,
    viewpoint: Viewpoint,
    lengths_mm,
    ccm: ColorCorrectionMatrix | None = None,
    *,
    spp: int | None = None,
    seed: int = 0,
    quality: str | None = None,
    bounces: int | None = None,
    workers: int | None = None,
    resolution: tuple[int, int] = (600, 400),
    fill_fraction: float = 0.65,
    meta: dict | None = None,
    progress: Callable[[int, int], None] | None = None,
    should_cancel: Callable[[], bool] | None = None,
) -> CharacteristicCurve:
    """Measure the color characteristic over a length sweep.

    ``scene_builder(length_mm)`` returns the scene (grass pixel plus context)
    at that length. The camera is fixed once, framed on the tallest scene of
    the sweep, so the measurement region is identical across lengths.
    Cancellation is honored between lengths via ``should_cancel``.
    """
    lengths = np.asarray(list(lengths_mm), dtype=np.float64)
    if len(lengths) == 0:
        raise ValueError("length sweep is empty")
    if not np.all(np.diff(lengths) > 0):
        raise ValueError("lengths must be strictly increasing")

    tallest = scene_builder(float(lengths[-1]))
    cam = viewpoint_to_camera(viewpoint, ZoomPolicy.for_scene(tallest, fill_fraction), resolution)

    labs: list[Color] = []
    done_lengths: list[float] = []
    base_meta = {
        "viewpoint": {"h_cm": viewpoint.h_cm, "d_m": viewpoint.d_m, "theta_deg": viewpoint.theta_deg},
        "seed": seed,
        "spp": spp,
        "quality": quality,
        **(meta or {}),
    }

    def partial() -> CharacteristicCurve | None:
        if not labs:
            return None
        og = np.array([ciede2000(labs[0], lab) for lab in labs])
        return CharacteristicCurve(np.array(done_lengths), og, tuple(labs),
                                   CurveSource.VIRTUAL, dict(base_meta, partial=True))

    for i, length in enumerate(lengths):
        if should_cancel is not None and should_cancel():
            raise SweepCancelled(partial())
        scene = scene_builder(float(length))
        lab, _, _, _ = measure_lab(scene, rig, cam, ccm, spp=spp, seed=seed,
                                   quality=quality, bounces=bounces, workers=workers)
        labs.append(lab)
        done_lengths.append(float(length))
        if progress is not None:
            progress(i + 1, len(lengths))

    ogcd = np.array([ciede2000(labs[0], lab) for lab in labs])
    return CharacteristicCurve(lengths, ogcd, tuple(labs), CurveSource.VIRTUAL, base_meta)


def repeatability(
    scene_builder_for_seed: Callable[[int], Callable[[float], object]],
    rig: LightingRig,
    viewpoint: Viewpoint,
    lengths_mm,
    seeds,
    **sweep_kwargs,
):
    """Sweep once per seed; return (mean per-length OGCD std, stds, curves).

    The virtual analog of re-running the physical device: distinct seeds vary
    both the Monte-Carlo sampling and the blade placement draw.
    """
    seeds = list(seeds)
    if len(seeds) < 2:
        raise ValueError("repeatability needs at least two trials")
    curves = [
        sweep(scene_builder_for_seed(s), rig, viewpoint, lengths_mm, seed=s, **sweep_kwargs)
        for s in seeds
    ]
    stack = np.stack([c.ogcd for c in curves])
    stds = stack.std(axis=0, ddof=1)
    return float(stds.mean()), stds, curves


# ---------------------------------------------------------------------------
# Monotone fitting
# ---------------------------------------------------------------------------

def isotonic(y, weights=None) -> np.ndarray:
    """Non-decreasing least-squares fit via pool adjacent violators."""
    y = np.asarray(y, dtype=np.float64)
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=np.float64)
    means = list(y)
    counts = list(w)
    starts = [[i] for i in range(len(y))]
    i = 0
    while i < len(means) - 1:
        if means[i] <= means[i + 1] + 1e-300:
            i += 1
            continue
        total = counts[i] + counts[i + 1]
        means[i] = (means[i] * counts[i] + means[i + 1] * counts[i + 1]) / total
        counts[i] = total
        starts[i] += starts[i + 1]
        del means[i + 1], counts[i + 1], starts[i + 1]
        if i > 0:
            i -= 1
    out = np.empty_like(y)
    for mean, idx in zip(means, starts):
        out[idx] = mean
    return out


class MonotoneCurve:
    """Invertible non-decreasing length -> OGCD function.

    Isotonic values interpolated with a monotone piecewise cubic (PCHIP keeps
    the data's monotonicity). The inverse returns the smallest length
    reaching a target, which also breaks flat-region ties deterministically.
    """

    def __init__(self, x, y):
        x = np.asarray(x, dtype=np.float64)
        y_iso = isotonic(y)
        if len(x) < 2:
            raise ValueError("need at least 2 points")
        self.x = x
        self.y = y_iso
        self._f = PchipInterpolator(x, y_iso, extrapolate=False)

    def __call__(self, xq):
        xq = np.clip(np.asarray(xq, dtype=np.float64), self.x[0], self.x[-1])
        out = self._f(xq)
        return float(out) if out.ndim == 0 else out

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.x[0]), float(self.x[-1])

    @property
    def value_range(self) -> tuple[float, float]:
        return float(self.y[0]), float(self.y[-1])

    def inverse(self, target: float) -> float:
        """Smallest length with f(length) >= target (clamped to the domain)."""
        lo, hi = self.domain
        if target <= self(lo):
            return lo
        if target >= self.y[-1]:
            target = self.y[-1]
        for _ in range(64):
            mid = 0.5 * (lo + hi)
            if self(mid) >= target:
                hi = mid
            else:
                lo = mid
        return hi


def fit_monotone(curve_or_x, y=None) -> MonotoneCurve:
    """Fit the invertible monotone model to a curve (needs >= 3 samples)."""
    if y is None:
        x, yv = curve_or_x.lengths_mm, curve_or_x.ogcd
    else:
        x, yv = np.asarray(curve_or_x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if len(x) < 3:
        raise ValueError("monotone fit needs at least 3 samples")
    return MonotoneCurve(x, yv)


# ---------------------------------------------------------------------------
# Curve similarity
# ---------------------------------------------------------------------------

def discrete_frechet(P, Q) -> float:
    """Discrete Fréchet distance between two point sequences (DP, exact)."""
    P = np.asarray(P, dtype=np.float64)
    Q = np.asarray(Q, dtype=np.float64)
    if P.ndim != 2 or Q.ndim != 2 or len(P) == 0 or len(Q) == 0:
        raise ValueError("curves must be non-empty (n, d) point arrays")
    n, m = len(P), len(Q)
    ca = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            dx = P[i, 0] - Q[j, 0]
            dy = P[i, 1] - Q[j, 1] if P.shape[1] > 1 else 0.0
            d = math.sqrt(dx * dx + dy * dy)
            if i == 0 and j == 0:
                ca[0, 0] = d
            elif i == 0:
                ca[0, j] = max(ca[0, j - 1], d)
            elif j == 0:
                ca[i, 0] = max(ca[i - 1, 0], d)
            else:
                ca[i, j] = max(min(ca[i - 1, j], ca[i - 1, j - 1], ca[i, j - 1]), d)
    return float(ca[n - 1, m - 1])


def _common_grid(a: CharacteristicCurve, b: CharacteristicCurve) -> np.ndarray:
    lo = max(a.lengths_mm[0], b.lengths_mm[0])
    hi = min(a.lengths_mm[-1], b.lengths_mm[-1])
    if hi < lo:
        raise ValueError("curves cover disjoint length ranges")
    n = int(math.floor((hi - lo) / RESAMPLE_STEP_MM + 1e-9))
    grid = lo + RESAMPLE_STEP_MM * np.arange(n + 1)
    if grid[-1] < hi - 1e-9:
        grid = np.append(grid, hi)
    return grid


def _resampled(curve: CharacteristicCurve, grid: np.ndarray) -> np.ndarray:
    if len(curve) >= 3:
        return fit_monotone(curve)(grid)
    return np.interp(grid, curve.lengths_mm, curve.ogcd)


def frechet_distance(a: CharacteristicCurve, b: CharacteristicCurve) -> float:
    """Fréchet distance between characteristics, as (mm, OGCD) polylines with
    unit axis weights, after resampling both onto a common 0.5 mm grid.

    Single-point curves compare directly (their distance is the point
    distance); the published comparison values are only meaningful under the
    same embedding conventions.
    """
    if len(a) == 1 or len(b) == 1:
        Pa = np.stack([a.lengths_mm, a.ogcd], axis=1)
        Pb = np.stack([b.lengths_mm, b.ogcd], axis=1)
        return discrete_frechet(Pa, Pb)
    grid = _common_grid(a, b)
    Pa = np.stack([grid, _resampled(a, grid)], axis=1)
    Pb = np.stack([grid, _resampled(b, grid)], axis=1)
    return discrete_frechet(Pa, Pb)


def max_ogcd_error(a: CharacteristicCurve, b: CharacteristicCurve) -> tuple[float, float]:
    """(max |OGCD_a - OGCD_b|, length where it is attained) over the common
    grid; ties resolve to the smallest length."""
    grid = _common_grid(a, b)
    diff = np.abs(_resampled(a, grid) - _resampled(b, grid))
    idx = int(np.argmax(diff))  # argmax returns the first, i.e. smallest length
    return float(diff[idx]), float(grid[idx])


def compare(a: CharacteristicCurve, b: CharacteristicCurve) -> CurveComparison:
    err, at = max_ogcd_error(a, b)
    return CurveComparison(frechet_distance(a, b), err, at)


# ---------------------------------------------------------------------------
# 8-bit calibration
# ---------------------------------------------------------------------------

def _linear_r2(xs: np.ndarray, ys: np.ndarray) -> float:
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    if ss_tot == 0.0:
        return 1.0
    coeffs = np.polyfit(xs, ys, 1)
    resid = ys - np.polyval(coeffs, xs)
    return 1.0 - float(np.sum(resid**2)) / ss_tot


def calibrate_8bit(curve: CharacteristicCurve) -> CalibrationTable:
    """Invert the fitted characteristic so OGCD becomes linear in level.

    Level k targets (k/255) * OGCD_max. ``r2_before`` is the linearity of
    OGCD against level when levels map to uniformly spaced lengths;
    ``r2_after`` is the linearity achieved through the table.
    """
    fit = fit_monotone(curve)
    y_lo, y_hi = fit.value_range
    if y_hi - y_lo <= 0:
        raise ValueError("curve has zero OGCD range; nothing to calibrate")
    levels = np.arange(256)
    targets = levels / 255.0 * y_hi
    entries = np.array([fit.inverse(t) for t in targets])
    x_lo, x_hi = fit.domain
    uniform = x_lo + levels / 255.0 * (x_hi - x_lo)
    r2_before = _linear_r2(levels, fit(uniform))
    r2_after = _linear_r2(levels, fit(entries))
    return CalibrationTable(entries, r2_before, r2_after)


def count_inflections(f: MonotoneCurve, rel_threshold: float = 0.05) -> int:
    """Convexity sign changes of the fitted curve at knot resolution.

    Uses second divided differences over the fit's knots (PCHIP is only C1,
    so sub-knot curvature oscillates meaninglessly) and ignores curvature
    below ``rel_threshold`` of the peak and below a floor set by the curve's
    overall scale, so straight lines count zero.
    """
    xs = f.x
    ys = f(xs)
    if len(xs) < 3:
        return 0
    left = (ys[1:-1] - ys[:-2]) / (xs[1:-1] - xs[:-2])
    right = (ys[2:] - ys[1:-1]) / (xs[2:] - xs[1:-1])
    dd = (right - left) / (xs[2:] - xs[:-2])
    span = xs[-1] - xs[0]
    scale = (ys.max() - ys.min()) / span**2 if span > 0 else 0.0
    floor = max(1e-9 * scale, 1e-15)
    peak = np.abs(dd).max()
    if peak <= floor:
        return 0
    signs = np.sign(dd[np.abs(dd) > max(rel_threshold * peak, floor)])
    if len(signs) == 0:
        return 0
    return int(np.sum(np.diff(signs) != 0))


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

CURVE_HEADER = ["length_mm", "ogcd", "L", "a", "b"]


def curve_to_csv(curve: CharacteristicCurve) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_HEADER)
    for x, y, lab in zip(curve.lengths_mm, curve.ogcd, curve.labs):
        L, a, b = lab.values
        w.writerow([repr(float(x)), repr(float(y)), repr(L), repr(a), repr(b)])
    return buf.getvalue()


def _read_text(text_or_path) -> str:
    if isinstance(text_or_path, Path):
        return text_or_path.read_text()
    s = str(text_or_path)
    if "\n" not in s and (s.endswith(".csv") or Path(s).exists()):
        return Path(s).read_text()
    return s


def curve_from_csv(text_or_path, source: CurveSource = CurveSource.REAL,
                   white: White = White.D50, meta: dict | None = None) -> CharacteristicCurve:
    """Ingest a measurement CSV: either ``length_mm,ogcd,L,a,b`` or per-length
    linear RGB ``length_mm,R,G,B`` in ProPhoto (OGCD recomputed here)."""
    rows = [r for r in csv.reader(io.StringIO(_read_text(text_or_path))) if r]
    if not rows:
        raise ValueError("empty curve CSV")
    header = [h.strip().lower() for h in rows[0]]
    body = rows[1:] if not _is_number(rows[0][0]) else rows
    if header[:2] == ["length_mm", "ogcd"] or (len(body) and len(body[0]) == 5):
        lengths, ogcd, labs = [], [], []
        for r in body:
            lengths.append(float(r[0]))
            ogcd.append(float(r[1]))
            labs.append(Color.lab(float(r[2]), float(r[3]), float(r[4]), white))
        return CharacteristicCurve(np.array(lengths), np.array(ogcd), tuple(labs),
                                   source, meta or {})
    if header[:2] == ["length_mm", "r"] or (len(body) and len(body[0]) == 4):
        lengths, labs = [], []
        for r in body:
            lengths.append(float(r[0]))
            pp = Color.prophoto(float(r[1]), float(r[2]), float(r[3]))
            labs.append(convert(pp, Space.CIELAB))
        ogcd = np.array([ciede2000(labs[0], lab) for lab in labs])
        return CharacteristicCurve(np.array(lengths), ogcd, tuple(labs), source, meta or {})
    raise ValueError("unrecognized curve CSV layout")


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def table_to_csv(table: CalibrationTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["level", "length_mm"])
    for level, mm in enumerate(table.lengths_mm):
        w.writerow([level, repr(float(mm))])
    return buf.getvalue()


def comparison_to_json(cmp: CurveComparison) -> str:
    return json.dumps(
        {
            "frechet": cmp.frechet,
            "max_error": cmp.max_error,
            "max_error_length_mm": cmp.max_error_length_mm,
        },
        indent=2,
    )
