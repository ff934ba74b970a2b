import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from groupmatch.config import DescriptorConfig, SpatialHistogramConfig
from groupmatch.descriptors import (
    aggregate_subgroup,
    angle_histogram,
    build_bundle,
    compute_bundle,
    edge_spatial_feature,
    global_feature,
    log_distance_histogram,
    stripe_appearance_feature,
    union_box,
)
from groupmatch.errors import ValidationError
from groupmatch.model import BoundingBox, GranularObject

from conftest import observation_at

CFG = SpatialHistogramConfig()


def gauss_peak_reference(n_bins, m, sigma, wrap=None):
    """Independent evaluation of the normalized discrete Gaussian peak."""
    total = 0.0
    for k in range(n_bins):
        v = math.exp(-((k - m) ** 2) / (2 * sigma**2))
        if wrap:
            v += math.exp(-((k - m - wrap) ** 2) / (2 * sigma**2))
            v += math.exp(-((k - m + wrap) ** 2) / (2 * sigma**2))
        total += v
    peak = 1.0
    if wrap:
        peak += math.exp(-(wrap**2) / (2 * sigma**2)) * 2
    return peak / total


class TestLogDistanceHistogram:
    def test_unit_sum_and_peak_location(self):
        lo, hi = CFG.dist_range
        width = (hi - lo) / CFG.n_dist_bins
        rho = lo + 5.5 * width  # center of bin 5
        h = log_distance_histogram(rho, CFG)
        assert h.sum() == pytest.approx(1.0, abs=1e-12)
        assert int(np.argmax(h)) == 5
        assert h[4] == pytest.approx(h[6])
        assert h[3] == pytest.approx(h[7])

    def test_peak_value_matches_reference(self):
        lo, hi = CFG.dist_range
        width = (hi - lo) / CFG.n_dist_bins
        h = log_distance_histogram(lo + 5.5 * width, CFG)
        # normalized discrete Gaussian at m=5 over 10 bins, sigma 1
        assert h[5] == pytest.approx(gauss_peak_reference(10, 5, 1.0), abs=1e-12)
        assert h[5] == pytest.approx(0.3989428762, abs=1e-9)

    def test_sigma_to_zero_is_one_hot(self):
        cfg = SpatialHistogramConfig(sigma_dist=1e-8)
        lo, hi = cfg.dist_range
        width = (hi - lo) / cfg.n_dist_bins
        h = log_distance_histogram(lo + 3.5 * width, cfg)
        assert h[3] == pytest.approx(1.0)
        assert h.sum() == pytest.approx(1.0)

    def test_clamping(self):
        h_low = log_distance_histogram(-100.0, CFG)
        assert int(np.argmax(h_low)) == 0
        h_high = log_distance_histogram(100.0, CFG)
        assert int(np.argmax(h_high)) == CFG.n_dist_bins - 1


class TestAngleHistogram:
    def test_unit_sum_and_peak_value(self):
        width = 2 * math.pi / CFG.n_angle_bins
        h = angle_histogram(4.5 * width, CFG)
        assert h.sum() == pytest.approx(1.0, abs=1e-12)
        assert int(np.argmax(h)) == 4
        assert h[4] == pytest.approx(gauss_peak_reference(9, 4, 1.0, wrap=9), abs=1e-12)
        assert h[4] == pytest.approx(0.3989422783, abs=1e-9)

    def test_wrap_symmetry_at_bin_zero(self):
        width = 2 * math.pi / CFG.n_angle_bins
        h = angle_histogram(0.5 * width, CFG)
        assert h[1] == pytest.approx(h[CFG.n_angle_bins - 1], abs=1e-12)
        assert h[2] == pytest.approx(h[CFG.n_angle_bins - 2], abs=1e-12)

    @given(st.integers(min_value=0, max_value=8), st.integers(min_value=1, max_value=8))
    def test_shift_equivariance(self, start, shift):
        width = 2 * math.pi / CFG.n_angle_bins
        base = angle_histogram((start + 0.5) * width, CFG)
        shifted = angle_histogram(((start + shift) % CFG.n_angle_bins + 0.5) * width, CFG)
        assert np.allclose(np.roll(base, shift), shifted, atol=1e-12)


class TestEdgeSpatialFeature:
    def test_dimension(self):
        b1 = BoundingBox(0, 0, 10, 10)
        b2 = BoundingBox(100, 100, 10, 10)
        f = edge_spatial_feature(b1, b2, (300, 400), CFG)
        assert f.shape == (19,)
        assert f[:10].sum() == pytest.approx(1.0, abs=1e-12)
        assert f[10:].sum() == pytest.approx(1.0, abs=1e-12)

    def test_argument_order_invariance(self):
        b1 = BoundingBox(10, 20, 30, 40)
        b2 = BoundingBox(200, 150, 30, 40)
        f12 = edge_spatial_feature(b1, b2, (500, 500), CFG)
        f21 = edge_spatial_feature(b2, b1, (500, 500), CFG)
        assert np.array_equal(f12, f21)

    def test_coincident_centers_hit_lowest_bin(self):
        b = BoundingBox(10, 10, 20, 20)
        b2 = BoundingBox(15, 5, 10, 30)  # same center (20, 20)
        f = edge_spatial_feature(b, b2, (100, 100), CFG)
        assert int(np.argmax(f[:10])) == 0
        assert int(np.argmax(f[10:])) == 0  # angle defined as 0

    def test_full_diagonal_geometry(self):
        # centers at opposite image corners: normalized distance 1, rho = 0
        b1 = BoundingBox(0, 0, 2, 2)  # center (1, 1)
        b2 = BoundingBox(297, 397, 2, 2)  # center (298, 398)
        size = (300, 400)
        diag = math.hypot(*size)
        dist = math.hypot(297, 397) / diag
        f = edge_spatial_feature(b1, b2, size, CFG)
        lo, hi = CFG.dist_range
        expected_bin = min(int((math.log(dist) - lo) / ((hi - lo) / 10)), 9)
        assert int(np.argmax(f[:10])) == expected_bin
        theta = math.atan2(397, 297)
        expected_angle_bin = int(theta / (2 * math.pi / 9))
        assert int(np.argmax(f[10:])) == expected_angle_bin

    def test_scale_invariance(self):
        b1 = BoundingBox(10, 20, 30, 40)
        b2 = BoundingBox(200, 150, 30, 40)
        f = edge_spatial_feature(b1, b2, (500, 500), CFG)
        b1s = BoundingBox(20, 40, 60, 80)
        b2s = BoundingBox(400, 300, 60, 80)
        fs = edge_spatial_feature(b1s, b2s, (1000, 1000), CFG)
        assert np.allclose(f, fs, atol=1e-12)


class TestStripeAppearance:
    def test_output_dimension_is_2736(self):
        crop = np.random.default_rng(0).random((64, 24, 3))
        f = stripe_appearance_feature(crop)
        assert f.shape == (2736,)  # 18 * (3*3*16 + 8)

    def test_constant_gray_crop_one_hot(self):
        crop = np.full((40, 16, 3), 0.5)
        cfg = DescriptorConfig()
        f = stripe_appearance_feature(crop, cfg=cfg)
        per_stripe = 9 * cfg.color_bins + cfg.grad_bins
        assert f.shape == (cfg.n_stripes * per_stripe,)
        for s in range(cfg.n_stripes):
            block = f[s * per_stripe : (s + 1) * per_stripe]
            for c in range(9):
                hist = block[c * cfg.color_bins : (c + 1) * cfg.color_bins]
                assert hist.sum() == pytest.approx(1.0, abs=1e-9)
                assert hist.max() == pytest.approx(1.0)  # one-hot for a constant image
            grad = block[9 * cfg.color_bins :]
            assert grad.sum() == pytest.approx(1.0, abs=1e-9)
        # 18 stripes x 10 unit-sum histograms
        assert f.sum() == pytest.approx(cfg.n_stripes * 10.0, abs=1e-6)

    def test_every_histogram_unit_sum(self, rng):
        crop = rng.random((130, 50, 3))
        cfg = DescriptorConfig()
        f = stripe_appearance_feature(crop, cfg=cfg)
        sizes = [cfg.color_bins] * 9 + [cfg.grad_bins]
        off = 0
        for _ in range(cfg.n_stripes):
            for size in sizes:
                assert f[off : off + size].sum() == pytest.approx(1.0, abs=1e-9)
                off += size

    def test_uint8_and_float_agree(self, rng):
        arr = rng.integers(0, 256, size=(60, 30, 3), dtype=np.uint8)
        f1 = stripe_appearance_feature(arr)
        f2 = stripe_appearance_feature(arr.astype(np.float64) / 255.0)
        assert np.allclose(f1, f2, atol=1e-12)

    def test_empty_crop_rejected(self):
        with pytest.raises(ValidationError) as exc:
            stripe_appearance_feature(np.zeros((0, 0, 3)))
        assert exc.value.code == "empty-crop"

    def test_custom_stripe_count(self, rng):
        crop = rng.random((64, 24, 3))
        f = stripe_appearance_feature(crop, n_stripes=6)
        assert f.shape == (6 * 152,)


class TestGlobalFeature:
    def test_single_person_equals_person_crop(self, rng):
        image = rng.random((200, 200, 3))
        obs = observation_at([(100, 100)], image_size=(200, 200))
        g = global_feature(image, obs)
        box = obs.boxes[0]
        from groupmatch.descriptors import crop_pixels

        p = stripe_appearance_feature(crop_pixels(image, box))
        assert np.array_equal(g, p)

    def test_union_box(self):
        obs = observation_at([(50, 80), (150, 200)], image_size=(400, 400))
        ub = union_box(obs)
        assert ub.x == 25.0 and ub.y == 20.0
        assert ub.x + ub.w == 175.0 and ub.y + ub.h == 260.0


class TestAggregateSubgroup:
    def test_identical_members(self):
        obs = observation_at([(100, 100), (200, 200)])
        feats = np.array([[1.0, 2.0], [1.0, 2.0]])
        bundle = build_bundle(obs, feats, feats.mean(axis=0))
        app, spat = aggregate_subgroup(bundle, GranularObject("coarse", (0, 1)))
        assert np.allclose(app, [1.0, 2.0])
        assert np.allclose(spat, bundle.edge_spatial[(0, 1)])

    def test_mean_of_two(self):
        obs = observation_at([(100, 100), (200, 200)])
        feats = np.array([[1.0, 0.0], [0.0, 1.0]])
        bundle = build_bundle(obs, feats, feats.mean(axis=0))
        app, _ = aggregate_subgroup(bundle, GranularObject("coarse", (0, 1)))
        assert np.allclose(app, [0.5, 0.5])

    def test_three_member_spatial_averages_three_edges(self):
        obs = observation_at([(100, 100), (300, 100), (200, 300)])
        feats = np.eye(3)
        bundle = build_bundle(obs, feats, feats.mean(axis=0))
        _, spat = aggregate_subgroup(bundle, GranularObject("coarse", (0, 1, 2)))
        manual = np.mean(
            [bundle.edge_spatial[(0, 1)], bundle.edge_spatial[(0, 2)], bundle.edge_spatial[(1, 2)]],
            axis=0,
        )
        assert np.allclose(spat, manual)

    @given(st.permutations([0, 1, 2]))
    def test_member_order_invariance(self, perm):
        obs = observation_at([(100, 100), (300, 150), (220, 320)])
        feats = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        bundle = build_bundle(obs, feats, feats.mean(axis=0))
        base = aggregate_subgroup(bundle, GranularObject("coarse", (0, 1, 2)))
        # canonical form sorts members, so any ordering produces the same object
        again = aggregate_subgroup(bundle, GranularObject("coarse", tuple(sorted(perm))))
        assert np.allclose(base[0], again[0])
        assert np.allclose(base[1], again[1])


class TestComputeBundle:
    def test_full_descriptor_bundle(self, rng):
        image = rng.random((300, 300, 3))
        obs = observation_at([(80, 120), (200, 180)], image_size=(300, 300))
        bundle = compute_bundle(obs, image)
        assert bundle.person_appearance.shape == (2, 2736)
        assert bundle.global_appearance.shape == (2736,)
        assert set(bundle.edge_spatial) == {(0, 1)}
        assert set(bundle.subgroup_appearance) == {(0, 1)}
