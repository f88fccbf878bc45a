import math

import numpy as np
import pytest

from grasspixel.colorimetry import Color, EncodedSRGB, decode_srgb
from grasspixel.scene import (
    MM,
    GrassPixelParams,
    Material,
    Viewpoint,
    ZoomPolicy,
    blade_counts,
    build_color_checker,
    build_grass_pixel,
    build_ground_plane,
    build_plane,
    merge_scenes,
    viewpoint_grid,
    viewpoint_to_camera,
)

YELLOW = decode_srgb(EncodedSRGB(205, 188, 92))
GREEN = decode_srgb(EncodedSRGB(68, 122, 58))


def demo_params(**kw):
    return GrassPixelParams(fixed_albedo=YELLOW, adjustable_albedo=GREEN, **kw)


def ray_down_hits(tris: np.ndarray, xz: np.ndarray) -> np.ndarray:
    """Independent oracle: does a vertical downward ray from high above hit
    any triangle? Plain vectorized Moller-Trumbore, no BVH."""
    v0 = tris[:, 0]
    e1 = tris[:, 1] - tris[:, 0]
    e2 = tris[:, 2] - tris[:, 0]
    d = np.array([0.0, -1.0, 0.0])
    pvec = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, pvec)
    ok = np.abs(det) > 1e-18
    hits = np.zeros(len(xz), dtype=bool)
    for i, (x, z) in enumerate(xz):
        o = np.array([x, 1.0, z])
        tvec = o - v0
        u = np.einsum("ij,ij->i", tvec, pvec)
        qvec = np.cross(tvec, e1)
        v = qvec @ d
        with np.errstate(divide="ignore", invalid="ignore"):
            u_n = u / det
            v_n = v / det
            t = np.einsum("ij,ij->i", e2, qvec) / det
        hit = ok & (u_n >= 0) & (u_n <= 1) & (v_n >= 0) & (u_n + v_n <= 1) & (t > 0)
        hits[i] = bool(np.any(hit))
    return hits


class TestGrassPixel:
    def test_deterministic(self):
        a = build_grass_pixel(demo_params(seed=11), 7.5)
        b = build_grass_pixel(demo_params(seed=11), 7.5)
        np.testing.assert_array_equal(a.triangles, b.triangles)
        np.testing.assert_array_equal(a.material_index, b.material_index)

    def test_seed_changes_geometry(self):
        a = build_grass_pixel(demo_params(seed=1), 7.5)
        b = build_grass_pixel(demo_params(seed=2), 7.5)
        assert not np.array_equal(a.triangles, b.triangles)

    def test_footprint_is_surface_size(self):
        scene = build_grass_pixel(demo_params(), 5.0)
        fp = scene.markers["footprint"]
        assert fp.shape == (4, 3)
        np.testing.assert_allclose(fp[:, 1], 0.0)
        assert fp[:, 0].max() - fp[:, 0].min() == pytest.approx(33.5 * MM)
        assert fp[:, 2].max() - fp[:, 2].min() == pytest.approx(33.5 * MM)

    def test_zero_length_has_no_green_above_base(self):
        p = demo_params(seed=5)
        scene = build_grass_pixel(p, 0.0)
        green = scene.triangles[scene.material_index == 2]
        assert len(green) > 0
        assert green[:, :, 1].max() <= 1e-15

    def test_tips_sit_exactly_at_length(self):
        p = demo_params(seed=5)
        for length in (3.0, 12.5, 20.0):
            scene = build_grass_pixel(p, length)
            green = scene.triangles[scene.material_index == 2]
            assert green[:, :, 1].max() == pytest.approx(length * MM, abs=1e-15)

    def test_length_out_of_range(self):
        p = demo_params()
        with pytest.raises(ValueError):
            build_grass_pixel(p, 25.0)
        with pytest.raises(ValueError):
            build_grass_pixel(p, -1.0)

    def test_blade_counts_match_sampler(self):
        p = demo_params(seed=9)
        n_fixed, n_adj = blade_counts(p)
        scene = build_grass_pixel(p, 10.0)
        assert (scene.material_index == 1).sum() == 2 * n_fixed
        assert (scene.material_index == 2).sum() == 2 * n_adj

    def test_blades_stay_near_footprint(self):
        p = demo_params(seed=13)
        scene = build_grass_pixel(p, 20.0)
        blades = scene.triangles[scene.material_index > 0]
        w = p.blade_width_mm * MM
        hx = p.surface_mm[0] / 2 * MM
        hz = p.surface_mm[1] / 2 * MM
        assert np.abs(blades[:, :, 0]).max() <= hx + w + 1e-12
        assert np.abs(blades[:, :, 2]).max() <= hz + w + 1e-12

    def test_placement_independent_of_length(self):
        # same blades slide up: base corner positions of green cards match
        p = demo_params(seed=21)
        a = build_grass_pixel(p, 5.0)
        b = build_grass_pixel(p, 15.0)
        ga = a.triangles[a.material_index == 2]
        gb = b.triangles[b.material_index == 2]
        base_a = ga[:, :, :][ga[:, :, 1] < -1e-6]
        base_b = gb[:, :, :][gb[:, :, 1] < -1e-6]
        np.testing.assert_allclose(base_a, base_b)

    def test_green_coverage_monotone_in_length(self):
        p = demo_params(seed=7)
        rng = np.random.default_rng(0)
        hx = p.surface_mm[0] / 2 * MM
        pts = rng.uniform(-hx, hx, size=(1500, 2))
        prev = -1
        for length in (0.0, 4.0, 8.0, 12.0, 16.0, 20.0):
            scene = build_grass_pixel(p, length)
            green = scene.triangles[scene.material_index == 2]
            above = green[green[:, :, 1].max(axis=1) > 1e-12]
            cov = int(ray_down_hits(above, pts).sum()) if len(above) else 0
            assert cov >= prev
            prev = cov
        assert prev > 0

    def test_slits_must_fit(self):
        with pytest.raises(ValueError):
            demo_params(slit_width_mm=12.0)  # 3 x 12 > 33.5


class TestChecker:
    def albedos(self):
        rng = np.random.default_rng(2)
        return tuple(Color.display(*rng.uniform(0.05, 0.9, 3)) for _ in range(24))

    def test_patch_grid_layout(self):
        checker = build_color_checker(self.albedos(), patch_mm=30, gutter_mm=6)
        rects = checker.markers["patches"]
        assert rects.shape == (24, 4, 3)
        # row-major: patch 1 is one pitch to the +x of patch 0, same z
        pitch = 36 * MM
        np.testing.assert_allclose(rects[1, :, 0] - rects[0, :, 0], pitch)
        np.testing.assert_allclose(rects[1, :, 2], rects[0, :, 2])
        # patch 6 starts the second row: one pitch along +z
        np.testing.assert_allclose(rects[6, :, 2] - rects[0, :, 2], pitch)

    def test_grid_extent(self):
        checker = build_color_checker(self.albedos(), patch_mm=30, gutter_mm=6)
        rects = checker.markers["patches"]
        width = rects[:, :, 0].max() - rects[:, :, 0].min()
        height = rects[:, :, 2].max() - rects[:, :, 2].min()
        assert width == pytest.approx((6 * 36 - 6) * MM)
        assert height == pytest.approx((4 * 36 - 6) * MM)

    def test_uniform_white_plane(self):
        checker = build_color_checker(tuple(Color.display(1, 1, 1) for _ in range(24)))
        albedos = {m.albedo.values for m in checker.materials[1:]}
        assert albedos == {(1.0, 1.0, 1.0)}

    def test_patch_count_enforced(self):
        with pytest.raises(ValueError):
            build_color_checker(tuple(Color.display(1, 1, 1) for _ in range(23)))


class TestViewpointCamera:
    def test_reference_position(self):
        cam = viewpoint_to_camera(Viewpoint(170, 2, 0), ZoomPolicy(0.03))
        np.testing.assert_allclose(cam.position, [0.0, 1.70, 2.00], atol=1e-12)
        np.testing.assert_allclose(cam.look_at, [0, 0, 0])

    def test_quarter_turn(self):
        cam = viewpoint_to_camera(Viewpoint(170, 2, 90), ZoomPolicy(0.03))
        np.testing.assert_allclose(cam.position, [2.0, 1.70, 0.0], atol=1e-12)

    def test_grid_is_sixteen(self):
        grid = viewpoint_grid([150, 160, 170, 180], [0, 30, 60, 90])
        assert len(grid) == 16
        assert len({(v.h_cm, v.theta_deg) for v in grid}) == 16

    def test_theta_normalized(self):
        assert Viewpoint(170, 2, 450).theta_deg == 90.0

    def test_invalid_distance(self):
        with pytest.raises(ValueError):
            Viewpoint(170, 0, 0)

    def test_fill_policy_covers_target(self):
        # projected bounding sphere should span >= fill fraction of the
        # shorter dimension: radius r at distance d subtends ~2*atan(tan(asin(r/d)))
        r = 0.027
        vp = Viewpoint(170, 2, 0)
        cam = viewpoint_to_camera(vp, ZoomPolicy(r, fill_fraction=0.65), (600, 400))
        dist = float(np.linalg.norm(vp.position))
        ang_radius = math.asin(r / dist)
        span_px = 2 * math.tan(ang_radius) / (2 * math.tan(math.radians(cam.vertical_fov_deg) / 2)) * 400
        assert span_px >= 0.6 * 400


class TestMaterialsAndMerge:
    def test_material_ranges(self):
        with pytest.raises(ValueError):
            Material(YELLOW, metallic=1.5)
        with pytest.raises(ValueError):
            Material(YELLOW, smoothness=-0.1)

    def test_merge_remaps_materials(self):
        p = demo_params()
        pix = build_grass_pixel(p, 5.0)
        ground = build_ground_plane(p, 0.5, Color.display(0.2, 0.2, 0.2))
        merged = merge_scenes(pix, ground)
        assert len(merged.materials) == len(pix.materials) + 1
        assert merged.material_index.max() == len(merged.materials) - 1
        assert "footprint" in merged.markers

    def test_plane_extends_down(self):
        g = build_ground_plane(demo_params(), 0.5, Color.display(0.2, 0.2, 0.2))
        np.testing.assert_allclose(g.triangles[:, :, 1], -15 * MM)

    def test_plane_at_origin(self):
        g = build_plane(2.0, Color.display(0.5, 0.5, 0.5))
        assert g.bounding_radius == pytest.approx(math.sqrt(2))
