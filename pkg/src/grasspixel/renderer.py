"""Scene-linear Monte-Carlo renderer with gray-card exposure normalization.

The estimator per camera sample: primary ray, then at each of up to
``bounces + 1`` path vertices, next-event estimation against the environment
map (luminance-CDF importance sampling; cosine fallback for tiny maps) and
the optional directional sun, followed by one cosine-distributed diffuse
bounce. A bounce ray that leaves the scene terminates the path -- the
environment was already counted at the vertex. Primary misses show the
environment directly.

Materials are Lambertian diffuse with a small smoothness-driven GGX lobe:
specular weight = 0.04 * smoothness (so smoothness 0 is exactly Lambert,
and the weight never exceeds the 0.04 dielectric cap), GGX roughness =
1 - smoothness. Metallic is fixed at zero. Indirect bounces carry only the
diffuse lobe; the bias is bounded by the specular weight.

Determinism: the sample stream is keyed on (seed, pixel, sample index), rows
are processed in fixed 16-row bands, and worker threads only change which
band runs when -- the output is bit-identical for any worker count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _tracer
from ._quads import quad_mean, validate_convex_quad
from .colorimetry import REC709_LUMA, Color
from .lighting import LM_PER_W, LightingRig, horizontal_illuminance

__all__ = [
    "Camera",
    "RenderMeta",
    "LinearImage",
    "QUALITY_PRESETS",
    "render",
    "expose_gray_card",
    "average_region",
    "project_pixel_corners",
]

DEFAULT_RESOLUTION = (600, 400)

# (samples per pixel, indirect diffuse bounces)
QUALITY_PRESETS = {
    "preview": (4, 2),
    "default": (9, 2),
    "high": (64, 2),
    "reference": (256, 2),
}


@dataclass(frozen=True)
class Camera:
    """Pinhole camera aimed at ``look_at`` with a vertical field of view."""

    position: np.ndarray
    look_at: np.ndarray
    up: np.ndarray
    vertical_fov_deg: float
    resolution: tuple[int, int] = DEFAULT_RESOLUTION

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=np.float64)
        tgt = np.asarray(self.look_at, dtype=np.float64)
        up = np.asarray(self.up, dtype=np.float64)
        if not 0.0 < self.vertical_fov_deg < 180.0:
            raise ValueError("vertical_fov_deg must lie in (0, 180)")
        fwd = tgt - pos
        if np.linalg.norm(fwd) == 0:
            raise ValueError("camera position and look_at coincide")
        if np.linalg.norm(np.cross(fwd, up)) < 1e-12:
            raise ValueError("up vector is colinear with the view direction")
        w, h = self.resolution
        if w < 1 or h < 1:
            raise ValueError("resolution must be positive")
        for name, v in (("position", pos), ("look_at", tgt), ("up", up)):
            v = v.copy()
            v.flags.writeable = False
            object.__setattr__(self, name, v)

    def basis(self):
        fwd = self.look_at - self.position
        fwd = fwd / np.linalg.norm(fwd)
        right = np.cross(fwd, self.up)
        right = right / np.linalg.norm(right)
        up2 = np.cross(right, fwd)
        return fwd, right, up2

    def half_extents(self):
        w, h = self.resolution
        half_h = math.tan(math.radians(self.vertical_fov_deg) / 2.0)
        return half_h * w / h, half_h


@dataclass(frozen=True)
class RenderMeta:
    spp: int
    seed: int
    bounce_count: int
    quality: str | None = None


@dataclass(frozen=True)
class LinearImage:
    """Scene-linear display-RGB image plus the determinism inputs that made it."""

    pixels: np.ndarray  # (H, W, 3) float64
    exposure_scale: float = 1.0
    meta: RenderMeta = field(default_factory=lambda: RenderMeta(1, 0, 0))

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError("pixels must be (H, W, 3)")
        if not np.all(np.isfinite(px)) or np.any(px < 0):
            raise ValueError("pixels must be finite and non-negative")
        if not self.exposure_scale > 0:
            raise ValueError("exposure_scale must be positive")
        px = px.copy()
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


def _flatten_scene(scene):
    tris = scene.triangles
    (node_min, node_max, node_left, node_right, node_start, node_count, order) = (
        _tracer.build_bvh(tris)
    )
    tris = np.ascontiguousarray(tris[order])
    mat_idx = np.ascontiguousarray(scene.material_index[order])
    v0 = np.ascontiguousarray(tris[:, 0])
    e1 = np.ascontiguousarray(tris[:, 1] - tris[:, 0])
    e2 = np.ascontiguousarray(tris[:, 2] - tris[:, 0])
    n = np.cross(e1, e2)
    norms = np.linalg.norm(n, axis=1, keepdims=True)
    n = np.where(norms > 0, n / np.where(norms == 0, 1, norms), 0.0)

    albedo = np.array([m.albedo.values for m in scene.materials], dtype=np.float64)
    smooth = np.array([m.smoothness for m in scene.materials], dtype=np.float64)
    spec_w = 0.04 * smooth
    alpha = np.maximum((1.0 - smooth) ** 2, 1e-3)
    return (
        v0, e1, e2, np.ascontiguousarray(n), mat_idx,
        node_min, node_max, node_left, node_right, node_start, node_count,
        albedo, spec_w, alpha,
    )


def _env_setup(rig: LightingRig):
    radiance = np.ascontiguousarray(rig.env.radiance)
    cdf, pdf, total = _tracer.build_env_distribution(radiance, REC709_LUMA)
    if total <= 0.0:
        mode = _tracer.ENV_BLACK
    elif radiance.shape[0] * radiance.shape[1] < _tracer.TINY_ENV_TEXELS:
        mode = _tracer.ENV_COSINE
    else:
        mode = _tracer.ENV_CDF
    return radiance, cdf, pdf, mode


def _sun_setup(rig: LightingRig):
    if rig.sun is None or rig.sun.illuminance <= 0.0:
        return 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, False
    d = rig.sun.direction
    irr = rig.sun.irradiance_rgb
    return float(d[0]), float(d[1]), float(d[2]), float(irr[0]), float(irr[1]), float(irr[2]), True


_BAND_ROWS = 16


def render(
    scene,
    rig: LightingRig,
    cam: Camera,
    spp: int | None = None,
    seed: int = 0,
    *,
    quality: str | None = None,
    bounces: int | None = None,
    workers: int | None = None,
) -> LinearImage:
    """Render the scene under the rig. Deterministic in (scene, rig, cam, spp, seed).

    ``quality`` picks (spp, bounces) from :data:`QUALITY_PRESETS`; explicit
    ``spp``/``bounces`` override it. ``workers`` only affects wall-clock time,
    never the pixels.
    """
    if quality is None and spp is None:
        quality = "default"
    preset = QUALITY_PRESETS.get(quality) if quality is not None else None
    if quality is not None and preset is None:
        raise ValueError(f"unknown quality preset {quality!r}; have {sorted(QUALITY_PRESETS)}")
    if spp is None:
        spp = preset[0]
    if bounces is None:
        bounces = preset[1] if preset else 2
    if spp < 1:
        raise ValueError("spp must be >= 1")
    if bounces < 0:
        raise ValueError("bounces must be >= 0")

    flat = _flatten_scene(scene)
    env, env_cdf, env_pdf, env_mode = _env_setup(rig)
    sun = _sun_setup(rig)

    width, height = cam.resolution
    fwd, right, up2 = cam.basis()
    half_w, half_h = cam.half_extents()
    out = np.zeros((height, width, 3), dtype=np.float64)

    def run_band(y0: int) -> None:
        _tracer.render_rows(
            out, y0, min(y0 + _BAND_ROWS, height), width, height,
            float(cam.position[0]), float(cam.position[1]), float(cam.position[2]),
            float(right[0]), float(right[1]), float(right[2]),
            float(up2[0]), float(up2[1]), float(up2[2]),
            float(fwd[0]), float(fwd[1]), float(fwd[2]),
            half_w, half_h,
            *flat[:5], *flat[5:11], *flat[11:],
            env, env_cdf, env_pdf, env_mode,
            *sun,
            spp, seed, bounces,
        )

    bands = list(range(0, height, _BAND_ROWS))
    n_workers = workers if workers is not None else (os.cpu_count() or 1)
    if n_workers <= 1:
        for y0 in bands:
            run_band(y0)
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            list(pool.map(run_band, bands))

    return LinearImage(out, 1.0, RenderMeta(spp, seed, bounces, quality))


def _rig_horizontal_lux(rig: LightingRig) -> float:
    """Physical horizontal illuminance of the rig as rendered (not the
    declared ambient target), so exposure stays honest for hand-built rigs."""
    lux = horizontal_illuminance(rig.env)
    if rig.sun is not None:
        lux += rig.sun.illuminance * max(float(rig.sun.direction[1]), 0.0)
    return lux


def expose_gray_card(img: LinearImage, rig: LightingRig) -> LinearImage:
    """Scale the image so an ideal horizontal 18% gray card at the subject
    location would render to linear 0.18 (luminance-matched for tinted rigs).

    The card's unexposed rendering is 0.18 * E / pi in the radiance
    convention (E the horizontal irradiance in linear units, i.e. lux / 683),
    so the exposure scale is pi / E = pi * 683 / E_lux.
    """
    lux = _rig_horizontal_lux(rig)
    if lux <= 0.0:
        raise ValueError("rig delivers no illuminance; cannot expose")
    k = math.pi * LM_PER_W / lux
    return LinearImage(img.pixels * k, img.exposure_scale * k, img.meta)


def average_region(img: LinearImage, quad) -> Color:
    """Mean linear RGB over pixels whose centers lie inside the image-space quad."""
    q = validate_convex_quad(np.asarray(quad, dtype=np.float64))
    mean = quad_mean(img.pixels, q)
    return Color.display(mean[0], mean[1], mean[2])


def project_pixel_corners(scene, cam: Camera) -> np.ndarray:
    """Project the grass pixel's four footprint corners to image coordinates."""
    corners = scene.markers.get("footprint")
    if corners is None:
        raise ValueError("scene has no footprint marker")
    return project_points(corners, cam)


def project_points(points: np.ndarray, cam: Camera) -> np.ndarray:
    """Pinhole projection of world points, consistent with ray generation."""
    fwd, right, up2 = cam.basis()
    half_w, half_h = cam.half_extents()
    w, h = cam.resolution
    pts = np.asarray(points, dtype=np.float64)
    rel = pts - cam.position
    depth = rel @ fwd
    if np.any(depth <= 1e-12):
        raise ValueError("point behind camera")
    u = (rel @ right) / (depth * half_w)
    v = (rel @ up2) / (depth * half_h)
    return np.stack([(u + 1.0) / 2.0 * w, (1.0 - v) / 2.0 * h], axis=-1)
