import numpy as np
import pytest

from grasspixel.ccm import (
    ColorCorrectionMatrix,
    PatchSet,
    PatchSource,
    SingularFitError,
    apply_ccm,
    ccm_from_csv,
    ccm_to_csv,
    fit_ccm,
    patch_means,
    patchset_from_csv,
    patchset_to_csv,
)
from grasspixel.colorimetry import Color


def make_patchset(values, source=PatchSource.VIRTUAL):
    return PatchSet(tuple(Color.prophoto(*v) for v in values), source)


def random_patchset(rng, source=PatchSource.VIRTUAL):
    vals = rng.uniform(0.02, 1.2, size=(24, 3))
    return make_patchset(vals, source)


class FakeImage:
    def __init__(self, pixels):
        self.pixels = pixels


class TestFit:
    def test_identity_when_equal(self):
        rng = np.random.default_rng(1)
        ps = random_patchset(rng)
        same = make_patchset(ps.matrix, PatchSource.REAL)
        ccm = fit_ccm(same, ps)
        np.testing.assert_allclose(ccm.m, np.eye(3), atol=1e-9)
        assert ccm.residual_rms == pytest.approx(0.0, abs=1e-12)

    def test_pure_scaling(self):
        rng = np.random.default_rng(2)
        virtual = random_patchset(rng)
        real = make_patchset(2.0 * virtual.matrix, PatchSource.REAL)
        ccm = fit_ccm(real, virtual)
        np.testing.assert_allclose(ccm.m, 2.0 * np.eye(3), atol=1e-9)

    def test_recovers_known_matrix(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            virtual = random_patchset(rng)
            m0 = np.eye(3) + rng.uniform(-0.2, 0.2, size=(3, 3))
            real_vals = np.clip(virtual.matrix @ m0.T, 0.0, None)
            # keep the fixture consistent: only use draws where M0 kept all
            # patches non-negative so real = M0 @ virtual holds exactly
            if np.any(virtual.matrix @ m0.T < 0):
                continue
            real = make_patchset(real_vals, PatchSource.REAL)
            ccm = fit_ccm(real, virtual)
            assert np.abs(ccm.m - m0).max() < 1e-9
            assert ccm.residual_rms < 1e-10

    def test_rank_deficient_grays_raise(self):
        grays = make_patchset(np.outer(np.linspace(0.05, 1.0, 24), np.ones(3)))
        real = make_patchset(np.outer(np.linspace(0.05, 1.0, 24), np.ones(3)), PatchSource.REAL)
        with pytest.raises(SingularFitError):
            fit_ccm(real, grays)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(4)
        virtual = random_patchset(rng)
        m0 = np.eye(3) * 1.1
        real = make_patchset(virtual.matrix @ m0.T, PatchSource.REAL)
        base = fit_ccm(real, virtual)
        perm = rng.permutation(24)
        ccm_p = fit_ccm(
            make_patchset(real.matrix[perm], PatchSource.REAL),
            make_patchset(virtual.matrix[perm]),
        )
        np.testing.assert_allclose(ccm_p.m, base.m, atol=1e-12)

    def test_wrong_patch_count_rejected(self):
        with pytest.raises(ValueError):
            PatchSet(tuple(Color.prophoto(0.5, 0.5, 0.5) for _ in range(23)), PatchSource.REAL)


class TestApply:
    def test_identity(self):
        c = Color.prophoto(0.3, 0.6, 0.9)
        out = apply_ccm(ColorCorrectionMatrix.identity(), c)
        np.testing.assert_allclose(out.array, c.array)

    def test_doubling(self):
        out = apply_ccm(ColorCorrectionMatrix(2 * np.eye(3)), Color.prophoto(0.1, 0.2, 0.3))
        np.testing.assert_allclose(out.array, [0.2, 0.4, 0.6], atol=1e-15)

    def test_matches_manual_multiply(self):
        rng = np.random.default_rng(5)
        m = rng.uniform(-0.5, 1.5, size=(3, 3))
        v = rng.uniform(0, 2, size=3)
        out = apply_ccm(ColorCorrectionMatrix(m), Color.prophoto(*v)).array
        manual = np.array(
            [
                m[0, 0] * v[0] + m[0, 1] * v[1] + m[0, 2] * v[2],
                m[1, 0] * v[0] + m[1, 1] * v[1] + m[1, 2] * v[2],
                m[2, 0] * v[0] + m[2, 1] * v[1] + m[2, 2] * v[2],
            ]
        )
        # matmul may reorder the three-term sums; anything beyond last-ulp
        # effects would be a real bug
        np.testing.assert_allclose(out, manual, rtol=1e-14, atol=1e-15)

    def test_linearity(self):
        rng = np.random.default_rng(6)
        m = ColorCorrectionMatrix(np.eye(3) + rng.uniform(-0.3, 0.3, (3, 3)))
        x, y = rng.uniform(0, 1, 3), rng.uniform(0, 1, 3)
        a, b = 0.25, 1.5
        lhs = apply_ccm(m, Color.prophoto(*(a * x + b * y))).array
        rhs = a * apply_ccm(m, Color.prophoto(*x)).array + b * apply_ccm(m, Color.prophoto(*y)).array
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def grid_quads(cols=6, rows=4, cell=20):
    quads = []
    for r in range(rows):
        for c in range(cols):
            x0, y0 = c * cell, r * cell
            quads.append([(x0 + 2, y0 + 2), (x0 + cell - 2, y0 + 2),
                          (x0 + cell - 2, y0 + cell - 2), (x0 + 2, y0 + cell - 2)])
    return np.array(quads, dtype=np.float64)


class TestPatchMeans:
    def test_constant_image(self):
        img = FakeImage(np.full((80, 120, 3), 0.25))
        ps = patch_means(img, grid_quads())
        # constant display RGB converts to a single ProPhoto value
        first = ps.patches[0].array
        for p in ps.patches:
            np.testing.assert_allclose(p.array, first, atol=1e-12)

    def test_two_tone_regions(self):
        pixels = np.zeros((80, 120, 3))
        pixels[:, :60] = 0.8   # left half covers patches in columns 0-2
        pixels[:, 60:] = 0.1
        ps = patch_means(FakeImage(pixels), grid_quads())
        vals = ps.matrix
        left = vals[0]
        right = vals[5]
        np.testing.assert_allclose(vals[1], left, atol=1e-12)
        np.testing.assert_allclose(vals[4], right, atol=1e-12)
        assert left[1] > right[1]

    def test_degenerate_quad_raises(self):
        quads = grid_quads()
        quads[3] = [(5, 5), (5, 5), (5, 5), (5, 5)]
        with pytest.raises(ValueError):
            patch_means(FakeImage(np.ones((80, 120, 3))), quads)


class TestCsvRoundTrip:
    def test_patchset(self):
        rng = np.random.default_rng(7)
        ps = random_patchset(rng, PatchSource.REAL)
        back = patchset_from_csv(patchset_to_csv(ps), PatchSource.REAL)
        np.testing.assert_array_equal(back.matrix, ps.matrix)

    def test_ccm(self):
        m = ColorCorrectionMatrix(np.array([[1.0, 0.1, 0.0], [0.0, 0.9, 0.05], [0.02, 0.0, 1.1]]), 0.012)
        back = ccm_from_csv(ccm_to_csv(m))
        np.testing.assert_array_equal(back.m, m.m)
        assert back.residual_rms == m.residual_rms
