"""Environment lighting: HDRI maps, photometric normalization, sun split.

A lighting rig is an equirectangular radiance map plus an optional
directional sun. Real rigs are built from an on-site procedure: measure
illuminance with the sun blocked (ambient) and unblocked (total), scale the
HDRI until its horizontal illuminance matches the ambient reading, and give
the remainder to the directional light.

Photometric bridge: radiance is stored as linear display RGB, and photometric
quantities use the Rec.709 luminance of that RGB at 683 lm/W. The absolute
convention cancels through the color correction matrix in end-to-end
comparisons; what matters is that it is applied consistently.

World axes are y-up. Equirectangular mapping: row 0 is the +y pole,
``u = 0`` faces +z, and u increases toward +x (matching the viewpoint angle
convention used by the scene module).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .colorimetry import REC709_LUMA

__all__ = [
    "EnvironmentMap",
    "SunLight",
    "LightingRig",
    "load_hdri",
    "save_hdri",
    "horizontal_illuminance",
    "normalize_to_lux",
    "split_sun",
    "sun_direction",
    "uniform_sky",
    "gradient_sky",
    "indoor_panel",
    "synthetic_environment",
    "LM_PER_W",
]

LM_PER_W = 683.0


@dataclass(frozen=True)
class EnvironmentMap:
    """Equirectangular linear-RGB radiance grid with a scalar intensity."""

    pixels: np.ndarray  # (H, W, 3) float64, raw file values
    intensity_scale: float = 1.0

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError("environment map must be (H, W, 3)")
        if not np.all(np.isfinite(px)) or np.any(px < 0):
            raise ValueError("environment radiance must be finite and non-negative")
        if px.shape[1] != 2 * px.shape[0]:
            raise ValueError("environment map must be 2:1 equirectangular")
        if not self.intensity_scale > 0:
            raise ValueError("intensity_scale must be positive")
        px = px.copy()
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def radiance(self) -> np.ndarray:
        """Scaled radiance actually seen by the renderer."""
        return self.pixels * self.intensity_scale

    def scaled(self, factor: float) -> "EnvironmentMap":
        return EnvironmentMap(self.pixels, self.intensity_scale * factor)


@dataclass(frozen=True)
class SunLight:
    """Directional light: unit vector toward the sun, illuminance on a
    surface facing it [lux]."""

    direction: np.ndarray
    illuminance: float

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=np.float64)
        n = np.linalg.norm(d)
        if d.shape != (3,) or not math.isfinite(n) or n == 0:
            raise ValueError("sun direction must be a nonzero 3-vector")
        d = d / n
        d.flags.writeable = False
        object.__setattr__(self, "direction", d)
        if not self.illuminance >= 0:
            raise ValueError("sun illuminance must be >= 0")

    @property
    def irradiance_rgb(self) -> np.ndarray:
        """White-sun irradiance in linear radiance units on a facing surface."""
        e = self.illuminance / LM_PER_W
        return np.array([e, e, e])


@dataclass(frozen=True)
class LightingRig:
    """Environment map normalized to the ambient reading, plus optional sun."""

    env: EnvironmentMap
    ambient_lux: float
    sun: SunLight | None = None

    def __post_init__(self):
        if not self.ambient_lux > 0:
            raise ValueError("ambient_lux must be positive")

    @staticmethod
    def build(env: EnvironmentMap, ambient_lux: float, sun: SunLight | None = None) -> "LightingRig":
        return LightingRig(normalize_to_lux(env, ambient_lux), ambient_lux, sun)

    def horizontal_lux(self) -> float:
        """Total horizontal illuminance at the rig origin (ambient + sun)."""
        total = self.ambient_lux
        if self.sun is not None:
            total += self.sun.illuminance * max(float(self.sun.direction[1]), 0.0)
        return total


def luminance(rgb: np.ndarray) -> np.ndarray:
    return np.asarray(rgb, dtype=np.float64) @ REC709_LUMA


def _row_cosine_weights(height: int) -> np.ndarray:
    """Per-row integral of cos(theta) over solid angle, divided by texel count.

    Row i spans polar angle [pi*i/H, pi*(i+1)/H] from the +y pole. The exact
    band integral of cos(theta)sin(theta) dtheta dphi is pi*(sin^2 t1 - sin^2 t0)
    above the horizon; rows below the horizon contribute nothing.
    """
    edges = np.pi * np.arange(height + 1) / height
    t0 = np.minimum(edges[:-1], np.pi / 2)
    t1 = np.minimum(edges[1:], np.pi / 2)
    return np.pi * (np.sin(t1) ** 2 - np.sin(t0) ** 2)


def horizontal_illuminance(env: EnvironmentMap) -> float:
    """Illuminance [lux] on an upward-facing surface under the map.

    E = 683 * integral over the upper hemisphere of Y(omega) cos(theta),
    evaluated with exact per-row solid-angle weights (a uniform sky of
    luminance Y0 gives exactly 683*pi*Y0).
    """
    Y = luminance(env.radiance)
    row_weights = _row_cosine_weights(env.height)
    return LM_PER_W * float((Y.mean(axis=1) * row_weights).sum())


def normalize_to_lux(env: EnvironmentMap, target_lux: float) -> EnvironmentMap:
    """Rescale the map so its horizontal illuminance equals ``target_lux``."""
    if not target_lux > 0:
        raise ValueError("target_lux must be positive")
    current = horizontal_illuminance(env)
    if current <= 0:
        raise ValueError("environment map carries no energy above the horizon")
    return env.scaled(target_lux / current)


def split_sun(total_lux: float, ambient_lux: float, direction) -> SunLight:
    """Sunlight illuminance is the measured total minus the ambient reading."""
    if total_lux < ambient_lux:
        raise ValueError(f"total illuminance {total_lux} below ambient {ambient_lux}")
    if ambient_lux < 0:
        raise ValueError("ambient_lux must be >= 0")
    return SunLight(np.asarray(direction, dtype=np.float64), total_lux - ambient_lux)


def sun_direction(azimuth_deg: float, elevation_deg: float) -> np.ndarray:
    """Unit vector toward the sun; azimuth 0 = +z, increasing toward +x."""
    az = math.radians(azimuth_deg)
    el = math.radians(elevation_deg)
    return np.array([math.cos(el) * math.sin(az), math.sin(el), math.cos(el) * math.cos(az)])


# ---------------------------------------------------------------------------
# Radiance RGBE (.hdr) codec
# ---------------------------------------------------------------------------

def _decode_rgbe(rgbe: np.ndarray) -> np.ndarray:
    """RGBE bytes -> float radiance: mantissa * 2^(exponent - 136)."""
    rgbe = rgbe.astype(np.float64)
    exp = rgbe[..., 3]
    scale = np.where(exp == 0, 0.0, np.exp2(exp - 136.0))
    return rgbe[..., :3] * scale[..., None]


def _encode_rgbe(rgb: np.ndarray) -> np.ndarray:
    rgb = np.asarray(rgb, dtype=np.float64)
    out = np.zeros(rgb.shape[:-1] + (4,), dtype=np.uint8)
    maxc = rgb.max(axis=-1)
    nz = maxc >= 1e-32
    if not np.any(nz):
        return out
    _, exp = np.frexp(maxc[nz])
    mant = np.round(rgb[nz] * np.exp2(8.0 - exp)[..., None])
    # a mantissa that rounded up to 256 needs the next exponent
    bump = mant.max(axis=-1) > 255
    exp[bump] += 1
    mant[bump] = np.round(rgb[nz][bump] * np.exp2(8.0 - exp[bump])[..., None])
    out_nz = np.zeros(mant.shape[:-1] + (4,), dtype=np.uint8)
    out_nz[..., :3] = np.clip(mant, 0, 255).astype(np.uint8)
    out_nz[..., 3] = np.clip(exp + 128, 0, 255).astype(np.uint8)
    out[nz] = out_nz
    return out


def _letterbox_to_2to1(px: np.ndarray) -> np.ndarray:
    h, w = px.shape[:2]
    if w == 2 * h:
        return px
    warnings.warn(f"HDRI is {w}x{h}, not 2:1 equirectangular; letterboxing", stacklevel=3)
    target_h = max(h, (w + 1) // 2)
    target_w = 2 * target_h
    out = np.zeros((target_h, target_w, 3), dtype=np.float64)
    y0 = (target_h - h) // 2
    x0 = (target_w - w) // 2
    out[y0 : y0 + h, x0 : x0 + w] = px
    return out


def load_hdri(path) -> EnvironmentMap:
    """Read a Radiance RGBE (.hdr) file into an environment map.

    Supports flat scanlines, old-style (1,1,1,n) run markers, and the
    adaptive RLE used by every modern writer. Only the standard
    ``-Y H +X W`` orientation is accepted. No tone mapping is applied.
    """
    data = Path(path).read_bytes()
    if not (data.startswith(b"#?RADIANCE") or data.startswith(b"#?RGBE")):
        raise ValueError(f"{path}: not a Radiance RGBE file")

    pos = 0
    fmt_ok = False
    while True:
        nl = data.find(b"\n", pos)
        if nl < 0:
            raise ValueError(f"{path}: truncated header")
        line = data[pos:nl]
        pos = nl + 1
        if line.startswith(b"FORMAT="):
            if b"32-bit_rle_rgbe" not in line:
                raise ValueError(f"{path}: unsupported format {line!r}")
            fmt_ok = True
        if line == b"":
            break
    if not fmt_ok:
        raise ValueError(f"{path}: missing FORMAT line")

    nl = data.find(b"\n", pos)
    if nl < 0:
        raise ValueError(f"{path}: truncated resolution line")
    res = data[pos:nl].split()
    pos = nl + 1
    if len(res) != 4 or res[0] != b"-Y" or res[2] != b"+X":
        raise ValueError(f"{path}: unsupported orientation {b' '.join(res)!r}")
    height, width = int(res[1]), int(res[3])

    rgbe = np.zeros((height, width, 4), dtype=np.uint8)
    for y in range(height):
        pos = _read_scanline(data, pos, rgbe[y], path)

    px = _decode_rgbe(rgbe)
    return EnvironmentMap(_letterbox_to_2to1(px))


def _read_scanline(data: bytes, pos: int, out_row: np.ndarray, path) -> int:
    width = out_row.shape[0]
    if pos + 4 > len(data):
        raise ValueError(f"{path}: truncated scanline")
    b0, b1, b2, b3 = data[pos : pos + 4]
    if b0 == 2 and b1 == 2 and (b2 << 8 | b3) == width and 8 <= width <= 32767:
        # adaptive RLE: four separate component planes
        pos += 4
        for c in range(4):
            x = 0
            while x < width:
                if pos >= len(data):
                    raise ValueError(f"{path}: truncated RLE scanline")
                count = data[pos]
                pos += 1
                if count > 128:  # run
                    if pos >= len(data):
                        raise ValueError(f"{path}: truncated RLE run")
                    out_row[x : x + count - 128, c] = data[pos]
                    x += count - 128
                    pos += 1
                else:  # literal dump
                    if pos + count > len(data):
                        raise ValueError(f"{path}: truncated RLE literals")
                    out_row[x : x + count, c] = np.frombuffer(data[pos : pos + count], np.uint8)
                    x += count
                    pos += count
                if x > width:
                    raise ValueError(f"{path}: RLE overrun")
        return pos

    # flat scanline, possibly with old-style (1,1,1,n) repeat markers
    x = 0
    shift = 0
    while x < width:
        if pos + 4 > len(data):
            raise ValueError(f"{path}: truncated scanline")
        px = data[pos : pos + 4]
        pos += 4
        if px[0] == 1 and px[1] == 1 and px[2] == 1:
            if x == 0:
                raise ValueError(f"{path}: repeat marker with no previous pixel")
            count = px[3] << shift
            if x + count > width:
                raise ValueError(f"{path}: old-style run overrun")
            out_row[x : x + count] = out_row[x - 1]
            x += count
            shift += 8
        else:
            out_row[x] = np.frombuffer(px, np.uint8)
            x += 1
            shift = 0
    return pos


def save_hdri(path, pixels: np.ndarray) -> None:
    """Write radiance to a flat (uncompressed) RGBE .hdr file."""
    px = np.asarray(pixels, dtype=np.float64)
    if px.ndim != 3 or px.shape[2] != 3:
        raise ValueError("pixels must be (H, W, 3)")
    rgbe = _encode_rgbe(px)
    h, w = px.shape[:2]
    with open(path, "wb") as f:
        f.write(b"#?RADIANCE\n")
        f.write(b"FORMAT=32-bit_rle_rgbe\n\n")
        f.write(f"-Y {h} +X {w}\n".encode())
        f.write(rgbe.tobytes())


# ---------------------------------------------------------------------------
# Bundled synthetic environments (real HDRIs are not distributable fixtures)
# ---------------------------------------------------------------------------

def uniform_sky(value: float = 1.0, width: int = 32) -> EnvironmentMap:
    """Constant radiance everywhere; the furnace-test environment."""
    h = width // 2
    return EnvironmentMap(np.full((h, width, 3), value))


def gradient_sky(width: int = 128) -> EnvironmentMap:
    """Blue-to-warm vertical gradient, dark below the horizon."""
    h = width // 2
    theta = np.pi * (np.arange(h) + 0.5) / h
    up = np.clip(np.cos(theta), 0.0, None)
    sky = np.stack(
        [0.35 + 0.25 * up, 0.45 + 0.35 * up, 0.70 + 0.30 * up], axis=-1
    )
    below = np.cos(theta) < 0
    sky[below] = np.array([0.18, 0.14, 0.10])
    return EnvironmentMap(np.repeat(sky[:, None, :], width, axis=1))


def indoor_panel(width: int = 128, panel_value: float = 25.0) -> EnvironmentMap:
    """Bright diffuse room with a rectangular lamp panel overhead.

    The panel is a strong local peak (what the luminance-weighted sampler is
    for) but the walls still carry most of the energy, like a lit classroom;
    grass blade sides need that diffuse component to register color.
    """
    h = width // 2
    px = np.zeros((h, width, 3))
    theta = np.pi * (np.arange(h) + 0.5) / h
    above = np.cos(theta) > 0
    px[above] = np.array([0.75, 0.74, 0.70])       # walls / ceiling bounce
    px[~above] = np.array([0.30, 0.28, 0.25])      # floor
    r0, r1 = 0, max(1, h // 6)
    c0, c1 = int(width * 0.40), int(width * 0.60)
    px[r0:r1, c0:c1] = np.array([panel_value, panel_value * 0.98, panel_value * 0.92])
    return EnvironmentMap(px)


_SYNTHETIC = {
    "uniform_sky": uniform_sky,
    "gradient_sky": gradient_sky,
    "indoor_panel": indoor_panel,
}


def synthetic_environment(name: str) -> EnvironmentMap:
    """Look up a bundled environment by name (``uniform_sky``, ``gradient_sky``,
    ``indoor_panel``)."""
    try:
        return _SYNTHETIC[name]()
    except KeyError:
        raise ValueError(f"unknown synthetic environment {name!r}; have {sorted(_SYNTHETIC)}") from None
