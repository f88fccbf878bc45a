import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grasspixel.colorimetry import (
    Color,
    EncodedSRGB,
    Space,
    White,
    ciede2000,
    ciede2000_pairs,
    convert,
    decode_srgb,
    encode_srgb,
    srgb_eotf,
)

# Published CIEDE2000 verification dataset (34 pairs): L1 a1 b1 L2 a2 b2 dE00.
# Rows 9-16 probe the hue-average and hue-difference discontinuities where
# naive implementations go wrong.
CIEDE2000_DATASET = [
    (50.0000, 2.6772, -79.7751, 50.0000, 0.0000, -82.7485, 2.0425),
    (50.0000, 3.1571, -77.2803, 50.0000, 0.0000, -82.7485, 2.8615),
    (50.0000, 2.8361, -74.0200, 50.0000, 0.0000, -82.7485, 3.4412),
    (50.0000, -1.3802, -84.2814, 50.0000, 0.0000, -82.7485, 1.0000),
    (50.0000, -1.1848, -84.8006, 50.0000, 0.0000, -82.7485, 1.0000),
    (50.0000, -0.9009, -85.5211, 50.0000, 0.0000, -82.7485, 1.0000),
    (50.0000, 0.0000, 0.0000, 50.0000, -1.0000, 2.0000, 2.3669),
    (50.0000, -1.0000, 2.0000, 50.0000, 0.0000, 0.0000, 2.3669),
    (50.0000, 2.4900, -0.0010, 50.0000, -2.4900, 0.0009, 7.1792),
    (50.0000, 2.4900, -0.0010, 50.0000, -2.4900, 0.0010, 7.1792),
    (50.0000, 2.4900, -0.0010, 50.0000, -2.4900, 0.0011, 7.2195),
    (50.0000, 2.4900, -0.0010, 50.0000, -2.4900, 0.0012, 7.2195),
    (50.0000, -0.0010, 2.4900, 50.0000, 0.0009, -2.4900, 4.8045),
    (50.0000, -0.0010, 2.4900, 50.0000, 0.0010, -2.4900, 4.8045),
    (50.0000, -0.0010, 2.4900, 50.0000, 0.0011, -2.4900, 4.7461),
    (50.0000, 2.5000, 0.0000, 50.0000, 0.0000, -2.5000, 4.3065),
    (50.0000, 2.5000, 0.0000, 73.0000, 25.0000, -18.0000, 27.1492),
    (50.0000, 2.5000, 0.0000, 61.0000, -5.0000, 29.0000, 22.8977),
    (50.0000, 2.5000, 0.0000, 56.0000, -27.0000, -3.0000, 31.9030),
    (50.0000, 2.5000, 0.0000, 58.0000, 24.0000, 15.0000, 19.4535),
    (50.0000, 2.5000, 0.0000, 50.0000, 3.1736, 0.5854, 1.0000),
    (50.0000, 2.5000, 0.0000, 50.0000, 3.2972, 0.0000, 1.0000),
    (50.0000, 2.5000, 0.0000, 50.0000, 1.8634, 0.5757, 1.0000),
    (50.0000, 2.5000, 0.0000, 50.0000, 3.2592, 0.3350, 1.0000),
    (60.2574, -34.0099, 36.2677, 60.4626, -34.1751, 39.4387, 1.2644),
    (63.0109, -31.0961, -5.8663, 62.8187, -29.7946, -4.0864, 1.2630),
    (61.2901, 3.7196, -5.3901, 61.4292, 2.2480, -4.9620, 1.8731),
    (35.0831, -44.1164, 3.7933, 35.0232, -40.0716, 1.5901, 1.8645),
    (22.7233, 20.0904, -46.6940, 23.0331, 14.9730, -42.5619, 2.0373),
    (36.4612, 47.8580, 18.3852, 36.2715, 50.5065, 21.2231, 1.4146),
    (90.8027, -2.0831, 1.4410, 91.1528, -1.6435, 0.0447, 1.4441),
    (90.9257, -0.5406, -0.9208, 88.6381, -0.8985, -0.7239, 1.5381),
    (6.7747, -0.2908, -2.4247, 5.8714, -0.0985, -2.2286, 0.6377),
    (2.0776, 0.0795, -1.1350, 0.9033, -0.0636, -0.5514, 0.9082),
]


def ciede2000_oracle(lab1, lab2):
    """Independent CIEDE2000 oracle, written in radians with scalar math.

    Deliberately structured differently from the library implementation
    (atan2 wrap handling instead of modular degrees) so the two can
    cross-check each other.
    """
    L1, a1, b1 = lab1
    L2, a2, b2 = lab2
    C1 = math.sqrt(a1 * a1 + b1 * b1)
    C2 = math.sqrt(a2 * a2 + b2 * b2)
    Cm = 0.5 * (C1 + C2)
    G = 0.5 * (1.0 - math.sqrt(Cm**7 / (Cm**7 + 25.0**7)))
    a1p, a2p = (1 + G) * a1, (1 + G) * a2
    C1p = math.sqrt(a1p * a1p + b1 * b1)
    C2p = math.sqrt(a2p * a2p + b2 * b2)

    def hue(ap, b):
        if ap == 0.0 and b == 0.0:
            return 0.0
        h = math.atan2(b, ap)
        return h + 2 * math.pi if h < 0 else h

    h1p, h2p = hue(a1p, b1), hue(a2p, b2)
    dLp = L2 - L1
    dCp = C2p - C1p
    if C1p * C2p == 0.0:
        dhp = 0.0
    else:
        dhp = h2p - h1p
        if dhp > math.pi:
            dhp -= 2 * math.pi
        elif dhp < -math.pi:
            dhp += 2 * math.pi
    dHp = 2.0 * math.sqrt(C1p * C2p) * math.sin(0.5 * dhp)

    Lbp = 0.5 * (L1 + L2)
    Cbp = 0.5 * (C1p + C2p)
    if C1p * C2p == 0.0:
        hbp = h1p + h2p
    elif abs(h1p - h2p) <= math.pi:
        hbp = 0.5 * (h1p + h2p)
    elif h1p + h2p < 2 * math.pi:
        hbp = 0.5 * (h1p + h2p) + math.pi
    else:
        hbp = 0.5 * (h1p + h2p) - math.pi

    T = (
        1.0
        - 0.17 * math.cos(hbp - math.pi / 6)
        + 0.24 * math.cos(2 * hbp)
        + 0.32 * math.cos(3 * hbp + math.pi / 30)
        - 0.20 * math.cos(4 * hbp - 63 * math.pi / 180)
    )
    hbp_deg = math.degrees(hbp)
    dtheta = 30.0 * math.exp(-(((hbp_deg - 275.0) / 25.0) ** 2))
    RC = 2.0 * math.sqrt(Cbp**7 / (Cbp**7 + 25.0**7))
    SL = 1.0 + 0.015 * (Lbp - 50.0) ** 2 / math.sqrt(20.0 + (Lbp - 50.0) ** 2)
    SC = 1.0 + 0.045 * Cbp
    SH = 1.0 + 0.015 * Cbp * T
    RT = -math.sin(2.0 * math.radians(dtheta)) * RC
    fL, fC, fH = dLp / SL, dCp / SC, dHp / SH
    return math.sqrt(fL * fL + fC * fC + fH * fH + RT * fC * fH)


finite_component = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)


class TestSRGBDecode:
    def test_white_black(self):
        assert decode_srgb(EncodedSRGB(255, 255, 255)).values == (1.0, 1.0, 1.0)
        assert decode_srgb(EncodedSRGB(0, 0, 0)).values == (0.0, 0.0, 0.0)

    def test_mid_gray(self):
        c = decode_srgb(EncodedSRGB(188, 188, 188))
        assert c.values[0] == pytest.approx(0.5029, abs=5e-5)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            EncodedSRGB(256, 0, 0)
        with pytest.raises(ValueError):
            EncodedSRGB(-1, 0, 0)

    def test_monotone_per_channel(self):
        levels = srgb_eotf(np.arange(256) / 255.0)
        assert np.all(np.diff(levels) > 0)

    def test_encode_round_trip(self):
        for v in (0, 1, 17, 128, 188, 254, 255):
            assert encode_srgb(decode_srgb(EncodedSRGB(v, v, v))).r == v


class TestConvert:
    def test_display_white_to_xyz(self):
        xyz = convert(Color.display(1, 1, 1), Space.XYZ)
        assert xyz.white == White.D65
        np.testing.assert_allclose(xyz.array, [0.9505, 1.0000, 1.0890], atol=2e-4)

    def test_reference_white_is_lab_100(self):
        wp = convert(Color.display(1, 1, 1), Space.XYZ)
        lab = convert(wp, Space.CIELAB)
        np.testing.assert_allclose(lab.array, [100.0, 0.0, 0.0], atol=1e-9)

    def test_prophoto_black_is_lab_zero(self):
        lab = convert(Color.prophoto(0, 0, 0), Space.CIELAB)
        np.testing.assert_allclose(lab.array, [0.0, 0.0, 0.0], atol=1e-12)

    def test_display_white_adapts_to_prophoto_white(self):
        pp = convert(Color.display(1, 1, 1), Space.PROPHOTO_LINEAR_RGB)
        np.testing.assert_allclose(pp.array, [1.0, 1.0, 1.0], atol=1e-4)

    def test_native_white_enforced(self):
        with pytest.raises(ValueError):
            Color((0.5, 0.5, 0.5), Space.PROPHOTO_LINEAR_RGB, White.D65)
        with pytest.raises(ValueError):
            convert(Color.display(0.5, 0.5, 0.5), Space.LINEAR_DISPLAY_RGB, White.D50)

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            Color.display(float("nan"), 0, 0)
        with pytest.raises(ValueError):
            Color.display(float("inf"), 0, 0)

    @settings(max_examples=300, deadline=None)
    @given(finite_component, finite_component, finite_component)
    def test_round_trip_chain(self, r, g, b):
        c = Color.display(r, g, b)
        chain = convert(
            convert(convert(c, Space.XYZ), Space.PROPHOTO_LINEAR_RGB), Space.CIELAB
        )
        back = convert(convert(chain, Space.XYZ, White.D65), Space.LINEAR_DISPLAY_RGB)
        np.testing.assert_allclose(back.array, c.array, atol=1e-6)

    @settings(max_examples=200, deadline=None)
    @given(
        st.floats(min_value=0.0, max_value=4.0),
        st.floats(min_value=0.0, max_value=4.0),
        st.floats(min_value=0.0, max_value=4.0),
    )
    def test_round_trip_unbounded_scene_values(self, r, g, b):
        # Scene-linear values above 1.0 must survive the chain unclipped.
        c = Color.display(r, g, b)
        pp = convert(c, Space.PROPHOTO_LINEAR_RGB)
        back = convert(pp, Space.LINEAR_DISPLAY_RGB)
        np.testing.assert_allclose(back.array, c.array, atol=1e-6)


class TestCiede2000:
    @pytest.mark.parametrize("row", CIEDE2000_DATASET)
    def test_verification_dataset(self, row):
        L1, a1, b1, L2, a2, b2, expected = row
        got = ciede2000(Color.lab(L1, a1, b1), Color.lab(L2, a2, b2))
        assert got == pytest.approx(expected, abs=1e-4)

    @pytest.mark.parametrize("row", CIEDE2000_DATASET)
    def test_oracle_agrees_with_dataset(self, row):
        L1, a1, b1, L2, a2, b2, expected = row
        assert ciede2000_oracle((L1, a1, b1), (L2, a2, b2)) == pytest.approx(expected, abs=1e-4)

    def test_identical_is_zero(self):
        assert ciede2000(Color.lab(41.3, 5.5, -20.2), Color.lab(41.3, 5.5, -20.2)) == 0.0

    def test_white_point_mismatch_rejected(self):
        with pytest.raises(ValueError):
            ciede2000(Color.lab(50, 0, 0, White.D50), Color.lab(50, 0, 0, White.D65))

    def test_symmetry_and_identity_bulk(self):
        rng = np.random.default_rng(7)
        n = 100_000
        lab_a = np.column_stack(
            [rng.uniform(0, 100, n), rng.uniform(-100, 100, n), rng.uniform(-100, 100, n)]
        )
        lab_b = np.column_stack(
            [rng.uniform(0, 100, n), rng.uniform(-100, 100, n), rng.uniform(-100, 100, n)]
        )
        ab = ciede2000_pairs(lab_a, lab_b)
        ba = ciede2000_pairs(lab_b, lab_a)
        np.testing.assert_array_equal(ab, ba)
        assert np.all(ab >= 0)
        np.testing.assert_array_equal(ciede2000_pairs(lab_a, lab_a), np.zeros(n))

    @settings(max_examples=300, deadline=None)
    @given(
        st.floats(0, 100), st.floats(-120, 120), st.floats(-120, 120),
        st.floats(0, 100), st.floats(-120, 120), st.floats(-120, 120),
    )
    def test_matches_independent_oracle(self, L1, a1, b1, L2, a2, b2):
        got = ciede2000(Color.lab(L1, a1, b1), Color.lab(L2, a2, b2))
        want = ciede2000_oracle((L1, a1, b1), (L2, a2, b2))
        assert got == pytest.approx(want, abs=1e-9)
