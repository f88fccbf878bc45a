"""Procedural scene building: grass pixel, color checker, camera placement.

World conventions (documented once, used everywhere):

* Axes are y-up, units are meters internally; lengths at the config boundary
  are millimeters.
* The grass-pixel base TOP surface is the plane y = 0, footprint centered on
  the origin. The base block extends down to y = -base_height.
* Slits run along the x axis. A viewpoint at theta = 0 sits on the +z axis,
  so its line of sight is perpendicular to the slits; theta rotates the
  viewpoint about +y toward +x.
* Fixed (canopy) blades are planted on the base top surface; adjustable
  blades are planted far below on the pin carrier and rise through the slits,
  their tips exactly ``length`` above the base surface. At length 0 the tips
  are flush with the base plane and fully hidden under the canopy.

Blades are thin two-sided tapered cards (two triangles) with a small seeded
tilt and rotation; identical (params, length, seed) always produce
bit-identical primitive lists.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .colorimetry import Color, Space

__all__ = [
    "MM",
    "Material",
    "GrassPixelParams",
    "Viewpoint",
    "SceneGeometry",
    "ZoomPolicy",
    "build_grass_pixel",
    "build_color_checker",
    "build_ground_plane",
    "build_plane",
    "merge_scenes",
    "viewpoint_to_camera",
    "viewpoint_grid",
    "blade_counts",
]

MM = 1e-3


def _require_display(c: Color, what: str) -> Color:
    if c.space != Space.LINEAR_DISPLAY_RGB:
        raise ValueError(f"{what} albedo must be linear display RGB")
    return c


@dataclass(frozen=True)
class Material:
    """Surface description: linear-RGB albedo, metallic (kept at 0), smoothness."""

    albedo: Color
    metallic: float = 0.0
    smoothness: float = 0.5

    def __post_init__(self):
        _require_display(self.albedo, "material")
        if not 0.0 <= self.metallic <= 1.0:
            raise ValueError("metallic must lie in [0, 1]")
        if not 0.0 <= self.smoothness <= 1.0:
            raise ValueError("smoothness must lie in [0, 1]")


@dataclass(frozen=True)
class GrassPixelParams:
    """Geometry and material description of one grass pixel.

    Densities are blades per square centimeter of plantable area. Blade
    width/taper/tilt are not published for the real device; the defaults here
    were tuned so projected canopy coverage behaves like the photographs.
    """

    fixed_albedo: Color
    adjustable_albedo: Color
    base_albedo: Color = field(
        default_factory=lambda: Color.display(0.04, 0.035, 0.03)
    )
    surface_mm: tuple[float, float] = (33.5, 33.5)
    base_height_mm: float = 15.0
    fixed_length_mm: float = 10.0
    slit_count: int = 3
    slit_width_mm: float = 5.7
    adjustable_min_mm: float = 0.0
    adjustable_max_mm: float = 20.0
    fixed_density_per_cm2: float = 30.0
    adjustable_density_per_cm2: float = 55.0
    blade_width_mm: float = 1.0
    blade_taper: float = 0.45
    fixed_tilt_deg: float = 8.0
    adjustable_tilt_deg: float = 2.0
    fixed_length_jitter: float = 0.06
    smoothness: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if min(self.surface_mm) <= 0 or self.base_height_mm <= 0 or self.fixed_length_mm <= 0:
            raise ValueError("surface and heights must be positive")
        if self.slit_count < 1 or self.slit_width_mm <= 0:
            raise ValueError("need at least one slit of positive width")
        if self.slit_count * self.slit_width_mm >= self.surface_mm[1]:
            raise ValueError("slits do not fit within the surface")
        if self.adjustable_min_mm < 0 or self.adjustable_max_mm <= self.adjustable_min_mm:
            raise ValueError("adjustable range must be non-negative and non-empty")
        if self.fixed_density_per_cm2 <= 0 or self.adjustable_density_per_cm2 <= 0:
            raise ValueError("densities must be positive")
        _require_display(self.fixed_albedo, "fixed grass")
        _require_display(self.adjustable_albedo, "adjustable grass")
        _require_display(self.base_albedo, "base")

    def slit_z_ranges_mm(self) -> list[tuple[float, float]]:
        sz = self.surface_mm[1]
        half = self.slit_width_mm / 2
        out = []
        for k in range(self.slit_count):
            center = ((k + 1) / (self.slit_count + 1) - 0.5) * sz
            out.append((center - half, center + half))
        return out


@dataclass(frozen=True)
class Viewpoint:
    """Observer position: eye height [cm], horizontal distance [m], angle [deg]."""

    h_cm: float
    d_m: float
    theta_deg: float

    def __post_init__(self):
        if not self.d_m > 0:
            raise ValueError("viewpoint distance must be positive")
        object.__setattr__(self, "theta_deg", float(self.theta_deg) % 360.0)

    @property
    def position(self) -> np.ndarray:
        t = math.radians(self.theta_deg)
        return np.array([self.d_m * math.sin(t), self.h_cm / 100.0, self.d_m * math.cos(t)])


@dataclass(frozen=True)
class SceneGeometry:
    """Immutable triangle soup with per-triangle materials and named markers."""

    triangles: np.ndarray  # (n, 3, 3) float64 vertices, world meters
    material_index: np.ndarray  # (n,) int32
    materials: tuple[Material, ...]
    markers: dict = field(default_factory=dict)

    def __post_init__(self):
        tris = np.ascontiguousarray(np.asarray(self.triangles, dtype=np.float64))
        idx = np.ascontiguousarray(np.asarray(self.material_index, dtype=np.int32))
        if tris.ndim != 3 or tris.shape[1:] != (3, 3):
            raise ValueError("triangles must be (n, 3, 3)")
        if idx.shape != (tris.shape[0],):
            raise ValueError("material_index must match triangle count")
        if len(self.materials) and (idx.min(initial=0) < 0 or idx.max(initial=-1) >= len(self.materials)):
            raise ValueError("material index out of range")
        tris.flags.writeable = False
        idx.flags.writeable = False
        object.__setattr__(self, "triangles", tris)
        object.__setattr__(self, "material_index", idx)

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.triangles.min(axis=(0, 1)), self.triangles.max(axis=(0, 1))

    @property
    def bounding_radius(self) -> float:
        lo, hi = self.bounds
        return float(np.linalg.norm(hi - lo) / 2)


def _quad(p0, p1, p2, p3) -> np.ndarray:
    """Two triangles spanning the quad p0-p1-p2-p3 (counter-clockwise)."""
    return np.array([[p0, p1, p2], [p0, p2, p3]], dtype=np.float64)


def blade_counts(p: GrassPixelParams) -> tuple[int, int]:
    """(fixed, adjustable) blade counts implied by densities and areas."""
    sx, sz = p.surface_mm
    slit_area_cm2 = p.slit_count * p.slit_width_mm * sx / 100.0
    fixed_area_cm2 = sx * sz / 100.0 - slit_area_cm2
    return (
        int(round(p.fixed_density_per_cm2 * fixed_area_cm2)),
        int(round(p.adjustable_density_per_cm2 * slit_area_cm2)),
    )


def _blade_card(x, z, y0, y1, width, taper, tilt, tilt_az, rot, bound_x, bound_z):
    """Corner positions of one blade card; keeps the tip inside the footprint."""
    c = math.cos(rot)
    s = math.sin(rot)
    tx, tz = c, -s  # width direction
    rise = y1 - y0
    axis_len = rise / math.cos(tilt) if rise > 0 else 0.0
    ox = math.sin(tilt) * math.cos(tilt_az)
    oz = math.sin(tilt) * math.sin(tilt_az)
    tip_x = x + ox * axis_len
    tip_z = z + oz * axis_len
    # lean the blade inward instead of letting its tip escape the footprint
    if abs(tip_x) > bound_x or abs(tip_z) > bound_z:
        ox, oz = -ox, -oz
        tip_x = x + ox * axis_len
        tip_z = z + oz * axis_len
    hw = width / 2
    tw = hw * taper
    p0 = (x - tx * hw, y0, z - tz * hw)
    p1 = (x + tx * hw, y0, z + tz * hw)
    q1 = (tip_x + tx * tw, y1, tip_z + tz * tw)
    q0 = (tip_x - tx * tw, y1, tip_z - tz * tw)
    return _quad(p0, p1, q1, q0)


def build_grass_pixel(p: GrassPixelParams, length_mm: float) -> SceneGeometry:
    """Build the grass pixel at a given adjustable length.

    Blade placement is drawn once from the seed and is independent of
    ``length``: the same physical blades slide up through the slits.
    Markers: ``footprint`` holds the four top corners of the base surface
    (the measurement region).
    """
    if not p.adjustable_min_mm <= length_mm <= p.adjustable_max_mm:
        raise ValueError(
            f"length {length_mm} mm outside adjustable range "
            f"[{p.adjustable_min_mm}, {p.adjustable_max_mm}] mm"
        )
    rng = np.random.default_rng(p.seed)
    sx, sz = p.surface_mm
    hx, hz = sx / 2 * MM, sz / 2 * MM
    bh = p.base_height_mm * MM
    slits = [(a * MM, b * MM) for a, b in p.slit_z_ranges_mm()]

    materials = (
        Material(p.base_albedo, smoothness=0.3),
        Material(p.fixed_albedo, smoothness=p.smoothness),
        Material(p.adjustable_albedo, smoothness=p.smoothness),
    )
    MAT_BASE, MAT_FIXED, MAT_ADJ = 0, 1, 2
    tris: list[np.ndarray] = []
    mats: list[int] = []

    def add(quads: np.ndarray, mat: int):
        tris.append(quads)
        mats.extend([mat] * len(quads))

    # base top strips between slits
    edges = [-hz] + [e for ab in slits for e in ab] + [hz]
    for z0, z1 in zip(edges[0::2], edges[1::2]):
        add(_quad((-hx, 0, z0), (hx, 0, z0), (hx, 0, z1), (-hx, 0, z1)), MAT_BASE)
    # outer walls and bottom
    for x0, z0, x1, z1 in [(-hx, -hz, hx, -hz), (hx, -hz, hx, hz), (hx, hz, -hx, hz), (-hx, hz, -hx, -hz)]:
        add(_quad((x0, -bh, z0), (x1, -bh, z1), (x1, 0, z1), (x0, 0, z0)), MAT_BASE)
    add(_quad((-hx, -bh, -hz), (-hx, -bh, hz), (hx, -bh, hz), (hx, -bh, -hz)), MAT_BASE)
    # slit pockets: two side walls and a floor each
    for za, zb in slits:
        add(_quad((-hx, -bh, za), (hx, -bh, za), (hx, 0, za), (-hx, 0, za)), MAT_BASE)
        add(_quad((-hx, -bh, zb), (hx, -bh, zb), (hx, 0, zb), (-hx, 0, zb)), MAT_BASE)
        add(_quad((-hx, -bh, za), (hx, -bh, za), (hx, -bh, zb), (-hx, -bh, zb)), MAT_BASE)

    n_fixed, n_adj = blade_counts(p)
    w = p.blade_width_mm * MM
    bound_x, bound_z = hx + w, hz + w

    # fixed canopy blades: rejection-sampled outside the slits
    placed = 0
    while placed < n_fixed:
        x = rng.uniform(-hx, hx)
        z = rng.uniform(-hz, hz)
        if any(za <= z <= zb for za, zb in slits):
            continue
        rot = rng.uniform(0, 2 * math.pi)
        tilt = math.radians(rng.uniform(0, p.fixed_tilt_deg))
        tilt_az = rng.uniform(0, 2 * math.pi)
        h = p.fixed_length_mm * MM * (1 + p.fixed_length_jitter * rng.uniform(-1, 1))
        add(_blade_card(x, z, 0.0, h, w, p.blade_taper, tilt, tilt_az, rot, bound_x, bound_z), MAT_FIXED)
        placed += 1

    # adjustable blades: planted below, tips exactly at `length` above base
    y_tip = length_mm * MM
    for _ in range(n_adj):
        k = rng.integers(0, len(slits))
        za, zb = slits[k]
        x = rng.uniform(-hx, hx)
        z = rng.uniform(za + w / 2, zb - w / 2)
        rot = rng.uniform(0, 2 * math.pi)
        tilt = math.radians(rng.uniform(0, p.adjustable_tilt_deg))
        tilt_az = rng.uniform(0, 2 * math.pi)
        if y_tip > 0:
            add(_blade_card(x, z, -bh, y_tip, w, p.blade_taper, tilt, tilt_az, rot, bound_x, bound_z), MAT_ADJ)
        else:
            # flush: keep the card entirely inside the slit pocket
            add(_blade_card(x, z, -bh, 0.0, w, 1.0, 0.0, tilt_az, rot, bound_x, bound_z), MAT_ADJ)

    footprint = np.array(
        [[-hx, 0, -hz], [hx, 0, -hz], [hx, 0, hz], [-hx, 0, hz]], dtype=np.float64
    )
    return SceneGeometry(
        np.concatenate(tris), np.array(mats, dtype=np.int32), materials,
        {"footprint": footprint},
    )


def build_color_checker(
    patch_albedos: tuple[Color, ...],
    patch_mm: float = 30.0,
    gutter_mm: float = 6.0,
    center=(0.0, 0.0, 0.0),
) -> SceneGeometry:
    """Flat 4x6 checker at y = center.y, row-major patch order.

    Row 0 sits at the most negative z so a camera on +z sees it as the top
    row; the ``patches`` marker carries each patch's world corners in the
    same order the calibration module expects its quads.
    """
    if len(patch_albedos) != 24:
        raise ValueError("color checker needs exactly 24 patch albedos")
    rows, cols = 4, 6
    pitch = (patch_mm + gutter_mm) * MM
    half = patch_mm / 2 * MM
    cx, cy, cz = center
    materials = [Material(Color.display(0.02, 0.02, 0.02), smoothness=0.0)]
    tris, mats = [], []
    w = cols * pitch
    h = rows * pitch
    backing = _quad(
        (cx - w / 2, cy - 0.0005, cz - h / 2),
        (cx + w / 2, cy - 0.0005, cz - h / 2),
        (cx + w / 2, cy - 0.0005, cz + h / 2),
        (cx - w / 2, cy - 0.0005, cz + h / 2),
    )
    tris.append(backing)
    mats.extend([0, 0])
    patch_corners = np.zeros((24, 4, 3))
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            materials.append(Material(_require_display(patch_albedos[i], "patch"), smoothness=0.0))
            px = cx + (c - (cols - 1) / 2) * pitch
            pz = cz + (r - (rows - 1) / 2) * pitch
            corners = np.array(
                [
                    [px - half, cy, pz - half],
                    [px + half, cy, pz - half],
                    [px + half, cy, pz + half],
                    [px - half, cy, pz + half],
                ]
            )
            patch_corners[i] = corners
            tris.append(_quad(*corners))
            mats.extend([i + 1, i + 1])
    return SceneGeometry(
        np.concatenate(tris), np.array(mats, dtype=np.int32), tuple(materials),
        {"patches": patch_corners},
    )


def build_plane(size_m: float, albedo: Color, y: float = 0.0, smoothness: float = 0.0) -> SceneGeometry:
    """Square horizontal plane centered on the y axis (ground, test fixtures)."""
    s = size_m / 2
    return SceneGeometry(
        _quad((-s, y, -s), (s, y, -s), (s, y, s), (-s, y, s)),
        np.array([0, 0], dtype=np.int32),
        (Material(albedo, smoothness=smoothness),),
    )


def build_ground_plane(p: GrassPixelParams, size_m: float, albedo: Color) -> SceneGeometry:
    """Ground under the pixel, flush with the base bottom."""
    return build_plane(size_m, albedo, y=-p.base_height_mm * MM)


def merge_scenes(*scenes: SceneGeometry) -> SceneGeometry:
    """Concatenate geometry, remapping material indices; markers merge left to right."""
    tris = np.concatenate([s.triangles for s in scenes])
    mats: list[Material] = []
    idx_parts = []
    markers: dict = {}
    for s in scenes:
        offset = len(mats)
        mats.extend(s.materials)
        idx_parts.append(s.material_index + offset)
        markers.update(s.markers)
    return SceneGeometry(tris, np.concatenate(idx_parts), tuple(mats), markers)


@dataclass(frozen=True)
class ZoomPolicy:
    """Pick the field of view so the subject fills the frame.

    ``fill_fraction`` is the share of the shorter image dimension the
    subject's bounding sphere should span.
    """

    target_radius_m: float
    fill_fraction: float = 0.65
    min_fov_deg: float = 0.2
    max_fov_deg: float = 120.0

    @staticmethod
    def for_scene(scene: SceneGeometry, fill_fraction: float = 0.65) -> "ZoomPolicy":
        return ZoomPolicy(scene.bounding_radius, fill_fraction)


def viewpoint_to_camera(v: Viewpoint, zoom: ZoomPolicy, resolution: tuple[int, int] = (600, 400)):
    """Place the camera for a viewpoint: at distance d and height h, rotated
    theta about the vertical axis, aimed at the pixel center (the origin)."""
    from .renderer import Camera

    pos = v.position
    dist = float(np.linalg.norm(pos))
    width, height = resolution
    sin_half = min(zoom.target_radius_m / dist, 0.999)
    tan_alpha = math.tan(math.asin(sin_half))
    tan_half_fov = tan_alpha / zoom.fill_fraction * (height / min(width, height))
    fov = math.degrees(2 * math.atan(tan_half_fov))
    fov = min(max(fov, zoom.min_fov_deg), zoom.max_fov_deg)
    return Camera(
        position=pos,
        look_at=np.zeros(3),
        up=np.array([0.0, 1.0, 0.0]),
        vertical_fov_deg=fov,
        resolution=resolution,
    )


def viewpoint_grid(heights_cm, thetas_deg, d_m: float = 2.0) -> list[Viewpoint]:
    """Cartesian grid of viewpoints (the 4x4 experiment matrix is
    heights 150/160/170/180 cm x angles 0/30/60/90 deg at d = 2 m)."""
    return [Viewpoint(h, d_m, t) for h in heights_cm for t in thetas_deg]


def with_length_seed(p: GrassPixelParams, seed: int) -> GrassPixelParams:
    """Same pixel, different placement draw (repeatability runs)."""
    return replace(p, seed=seed)
