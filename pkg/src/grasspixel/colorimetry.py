"""Color spaces, conversions, and the CIEDE2000 color difference.

Everything downstream (checker calibration, sweeps, previews) funnels its
colors through this module. The working spaces are:

* ``LINEAR_DISPLAY_RGB`` -- linear light on sRGB/Rec.709 primaries, D65 white.
  Values are scene-referred: unbounded above 1.0, never clipped here. This is
  the space renders are produced in.
* ``XYZ`` -- CIE XYZ, tagged with the white point it is adapted to.
* ``PROPHOTO_LINEAR_RGB`` -- linear ROMM/ProPhoto primaries, D50 white. The
  wide-gamut space measurement data lives in.
* ``CIELAB`` -- computed against the white point carried on the color.

Chromatic adaptation between D65 and D50 uses the Bradford transform.
No gamut clipping happens anywhere in this module; clipping is the job of
final 8-bit preview encoding only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "Space",
    "White",
    "Color",
    "EncodedSRGB",
    "decode_srgb",
    "encode_srgb",
    "convert",
    "ciede2000",
    "srgb_eotf",
    "srgb_oetf",
    "ciede2000_pairs",
    "WHITE_XYZ",
    "REC709_LUMA",
]


class Space(Enum):
    LINEAR_DISPLAY_RGB = "linear_display_rgb"
    XYZ = "xyz"
    PROPHOTO_LINEAR_RGB = "prophoto_linear_rgb"
    CIELAB = "cielab"


class White(Enum):
    D65 = "D65"
    D50 = "D50"


def _xy_to_xyz(x: float, y: float) -> np.ndarray:
    return np.array([x / y, 1.0, (1.0 - x - y) / y], dtype=np.float64)


# Whites from their chromaticity coordinates (2-degree observer).
WHITE_XYZ = {
    White.D65: _xy_to_xyz(0.3127, 0.3290),
    White.D50: _xy_to_xyz(0.3457, 0.3585),
}


def _rgb_to_xyz_matrix(primaries_xy, white: White) -> np.ndarray:
    """Derive the 3x3 RGB->XYZ matrix from primary chromaticities and white.

    Columns are the primaries' XYZ scaled so the row sums hit the white point
    exactly; deriving instead of hard-coding keeps round trips at float64
    precision.
    """
    cols = np.stack([_xy_to_xyz(x, y) for x, y in primaries_xy], axis=1)
    scale = np.linalg.solve(cols, WHITE_XYZ[white])
    return cols * scale


_SRGB_PRIMARIES = [(0.64, 0.33), (0.30, 0.60), (0.15, 0.06)]
_PROPHOTO_PRIMARIES = [(0.7347, 0.2653), (0.1596, 0.8404), (0.0366, 0.0001)]

M_DISPLAY_TO_XYZ = _rgb_to_xyz_matrix(_SRGB_PRIMARIES, White.D65)
M_XYZ_TO_DISPLAY = np.linalg.inv(M_DISPLAY_TO_XYZ)
M_PROPHOTO_TO_XYZ = _rgb_to_xyz_matrix(_PROPHOTO_PRIMARIES, White.D50)
M_XYZ_TO_PROPHOTO = np.linalg.inv(M_PROPHOTO_TO_XYZ)

# Rec.709 luminance weights = Y row of the display-RGB matrix. The lighting
# module uses these to turn linear radiance into photometric quantities.
REC709_LUMA = M_DISPLAY_TO_XYZ[1].copy()

# Bradford cone response matrix.
_M_BRADFORD = np.array(
    [
        [0.8951, 0.2664, -0.1614],
        [-0.7502, 1.7135, 0.0367],
        [0.0389, -0.0685, 1.0296],
    ]
)
_M_BRADFORD_INV = np.linalg.inv(_M_BRADFORD)


def _adaptation_matrix(src: White, dst: White) -> np.ndarray:
    if src == dst:
        return np.eye(3)
    cone_src = _M_BRADFORD @ WHITE_XYZ[src]
    cone_dst = _M_BRADFORD @ WHITE_XYZ[dst]
    return _M_BRADFORD_INV @ np.diag(cone_dst / cone_src) @ _M_BRADFORD


_ADAPT = {
    (White.D65, White.D50): _adaptation_matrix(White.D65, White.D50),
    (White.D50, White.D65): _adaptation_matrix(White.D50, White.D65),
}

_NATIVE_WHITE = {
    Space.LINEAR_DISPLAY_RGB: White.D65,
    Space.PROPHOTO_LINEAR_RGB: White.D50,
}


@dataclass(frozen=True)
class Color:
    """A single tristimulus sample tagged with its space and white point."""

    values: tuple[float, float, float]
    space: Space
    white: White

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) != 3 or not all(math.isfinite(v) for v in vals):
            raise ValueError(f"color values must be 3 finite numbers, got {self.values!r}")
        object.__setattr__(self, "values", vals)
        native = _NATIVE_WHITE.get(self.space)
        if native is not None and self.white != native:
            raise ValueError(f"{self.space.value} is defined against {native.value}, got {self.white.value}")

    @property
    def array(self) -> np.ndarray:
        return np.array(self.values, dtype=np.float64)

    @staticmethod
    def display(r: float, g: float, b: float) -> "Color":
        return Color((r, g, b), Space.LINEAR_DISPLAY_RGB, White.D65)

    @staticmethod
    def prophoto(r: float, g: float, b: float) -> "Color":
        return Color((r, g, b), Space.PROPHOTO_LINEAR_RGB, White.D50)

    @staticmethod
    def lab(L: float, a: float, b: float, white: White = White.D50) -> "Color":
        return Color((L, a, b), Space.CIELAB, white)


@dataclass(frozen=True)
class EncodedSRGB:
    """8-bit gamma-encoded sRGB triple, as produced by the color reader tool."""

    r: int
    g: int
    b: int

    def __post_init__(self):
        for name in ("r", "g", "b"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or not 0 <= v <= 255:
                raise ValueError(f"sRGB component {name}={v!r} outside [0, 255]")


def srgb_eotf(encoded):
    """sRGB electro-optical decode: gamma-encoded [0,1] -> linear [0,1].

    Accepts scalars or arrays. Piecewise per IEC 61966-2-1.
    """
    e = np.asarray(encoded, dtype=np.float64)
    lin = np.where(e <= 0.04045, e / 12.92, ((e + 0.055) / 1.055) ** 2.4)
    return lin if lin.shape else float(lin)


def srgb_oetf(linear):
    """Inverse of :func:`srgb_eotf` (linear [0,1] -> gamma-encoded [0,1])."""
    x = np.asarray(linear, dtype=np.float64)
    enc = np.where(x <= 0.0031308, x * 12.92, 1.055 * np.maximum(x, 0.0) ** (1.0 / 2.4) - 0.055)
    return enc if enc.shape else float(enc)


def decode_srgb(c: EncodedSRGB) -> Color:
    """Decode an 8-bit sRGB triple into linear display RGB (albedo ingestion)."""
    vals = srgb_eotf(np.array([c.r, c.g, c.b], dtype=np.float64) / 255.0)
    return Color.display(*vals)


def encode_srgb(c: Color) -> EncodedSRGB:
    """Clip and gamma-encode a display-RGB color to 8 bits. Preview use only."""
    if c.space != Space.LINEAR_DISPLAY_RGB:
        c = convert(c, Space.LINEAR_DISPLAY_RGB)
    enc = srgb_oetf(np.clip(c.array, 0.0, 1.0))
    b = np.round(enc * 255.0).astype(int)
    return EncodedSRGB(int(b[0]), int(b[1]), int(b[2]))


# CIELAB nonlinearity, f and inverse, with the standard 6/29 knee.
_LAB_DELTA = 6.0 / 29.0


def _lab_f(t):
    t = np.asarray(t, dtype=np.float64)
    return np.where(t > _LAB_DELTA**3, np.cbrt(t), t / (3.0 * _LAB_DELTA**2) + 4.0 / 29.0)


def _lab_f_inv(ft):
    ft = np.asarray(ft, dtype=np.float64)
    return np.where(ft > _LAB_DELTA, ft**3, 3.0 * _LAB_DELTA**2 * (ft - 4.0 / 29.0))


def xyz_to_lab(xyz: np.ndarray, white: White) -> np.ndarray:
    wp = WHITE_XYZ[white]
    fx, fy, fz = _lab_f(np.asarray(xyz, dtype=np.float64) / wp)
    return np.array([116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)])


def lab_to_xyz(lab: np.ndarray, white: White) -> np.ndarray:
    L, a, b = np.asarray(lab, dtype=np.float64)
    fy = (L + 16.0) / 116.0
    fx = fy + a / 500.0
    fz = fy - b / 200.0
    return _lab_f_inv(np.array([fx, fy, fz])) * WHITE_XYZ[white]


def _to_xyz(c: Color) -> tuple[np.ndarray, White]:
    if c.space == Space.XYZ:
        return c.array, c.white
    if c.space == Space.LINEAR_DISPLAY_RGB:
        return M_DISPLAY_TO_XYZ @ c.array, White.D65
    if c.space == Space.PROPHOTO_LINEAR_RGB:
        return M_PROPHOTO_TO_XYZ @ c.array, White.D50
    if c.space == Space.CIELAB:
        return lab_to_xyz(c.array, c.white), c.white
    raise ValueError(f"unsupported source space {c.space!r}")


def convert(c: Color, space: Space, white: White | None = None) -> Color:
    """Convert a color to ``space``, routing through XYZ.

    ``white`` selects the target white point for XYZ/CIELAB targets (defaults
    to the source's white); RGB targets have a fixed native white and reject
    any other request. Bradford adaptation bridges D65 and D50.
    """
    native = _NATIVE_WHITE.get(space)
    if native is not None:
        if white is not None and white != native:
            raise ValueError(f"{space.value} only supports {native.value}")
        white = native

    xyz, src_white = _to_xyz(c)
    dst_white = white if white is not None else src_white
    if dst_white != src_white:
        xyz = _ADAPT[(src_white, dst_white)] @ xyz

    if space == Space.XYZ:
        out = xyz
    elif space == Space.LINEAR_DISPLAY_RGB:
        out = M_XYZ_TO_DISPLAY @ xyz
    elif space == Space.PROPHOTO_LINEAR_RGB:
        out = M_XYZ_TO_PROPHOTO @ xyz
    elif space == Space.CIELAB:
        out = xyz_to_lab(xyz, dst_white)
    else:
        raise ValueError(f"unsupported target space {space!r}")
    return Color((out[0], out[1], out[2]), space, dst_white)


_POW25_7 = 25.0**7


def ciede2000_pairs(lab1: np.ndarray, lab2: np.ndarray) -> np.ndarray:
    """Vectorized CIEDE2000 over (..., 3) arrays of CIELAB values.

    Full formula including the rotation term coupling chroma and hue
    differences in the blue region. kL = kC = kH = 1.
    """
    lab1 = np.asarray(lab1, dtype=np.float64)
    lab2 = np.asarray(lab2, dtype=np.float64)
    L1, a1, b1 = lab1[..., 0], lab1[..., 1], lab1[..., 2]
    L2, a2, b2 = lab2[..., 0], lab2[..., 1], lab2[..., 2]

    C1 = np.hypot(a1, b1)
    C2 = np.hypot(a2, b2)
    Cbar = 0.5 * (C1 + C2)
    G = 0.5 * (1.0 - np.sqrt(Cbar**7 / (Cbar**7 + _POW25_7)))
    a1p = (1.0 + G) * a1
    a2p = (1.0 + G) * a2
    C1p = np.hypot(a1p, b1)
    C2p = np.hypot(a2p, b2)

    # Hue angles in degrees, in [0, 360); zero when the chroma is zero.
    h1p = np.degrees(np.arctan2(b1, a1p)) % 360.0
    h1p = np.where((a1p == 0.0) & (b1 == 0.0), 0.0, h1p)
    h2p = np.degrees(np.arctan2(b2, a2p)) % 360.0
    h2p = np.where((a2p == 0.0) & (b2 == 0.0), 0.0, h2p)

    dLp = L2 - L1
    dCp = C2p - C1p

    prod_zero = C1p * C2p == 0.0
    dh = h2p - h1p
    dh = np.where(dh > 180.0, dh - 360.0, dh)
    dh = np.where(dh < -180.0, dh + 360.0, dh)
    dh = np.where(prod_zero, 0.0, dh)
    dHp = 2.0 * np.sqrt(C1p * C2p) * np.sin(np.radians(dh) / 2.0)

    Lbp = 0.5 * (L1 + L2)
    Cbp = 0.5 * (C1p + C2p)

    hsum = h1p + h2p
    habs = np.abs(h1p - h2p)
    hbp = np.where(
        habs <= 180.0,
        0.5 * hsum,
        np.where(hsum < 360.0, 0.5 * (hsum + 360.0), 0.5 * (hsum - 360.0)),
    )
    hbp = np.where(prod_zero, hsum, hbp)

    T = (
        1.0
        - 0.17 * np.cos(np.radians(hbp - 30.0))
        + 0.24 * np.cos(np.radians(2.0 * hbp))
        + 0.32 * np.cos(np.radians(3.0 * hbp + 6.0))
        - 0.20 * np.cos(np.radians(4.0 * hbp - 63.0))
    )
    dtheta = 30.0 * np.exp(-(((hbp - 275.0) / 25.0) ** 2))
    RC = 2.0 * np.sqrt(Cbp**7 / (Cbp**7 + _POW25_7))
    SL = 1.0 + 0.015 * (Lbp - 50.0) ** 2 / np.sqrt(20.0 + (Lbp - 50.0) ** 2)
    SC = 1.0 + 0.045 * Cbp
    SH = 1.0 + 0.015 * Cbp * T
    RT = -np.sin(np.radians(2.0 * dtheta)) * RC

    fL = dLp / SL
    fC = dCp / SC
    fH = dHp / SH
    return np.sqrt(fL**2 + fC**2 + fH**2 + RT * fC * fH)


def ciede2000(a: Color, b: Color) -> float:
    """CIEDE2000 color difference between two CIELAB colors (same white)."""
    if a.space != Space.CIELAB or b.space != Space.CIELAB:
        raise ValueError("ciede2000 expects CIELAB inputs")
    if a.white != b.white:
        raise ValueError(f"white point mismatch: {a.white.value} vs {b.white.value}")
    return float(ciede2000_pairs(a.array, b.array))
