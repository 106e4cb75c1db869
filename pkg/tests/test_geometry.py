import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ruleplan.geometry import (
    SENTINEL,
    ClearanceSpec,
    Footprint,
    OrientedRectangle,
    clearance_rect,
    coverage_check,
    directional_distances,
    disk_centers,
    footprint_rect,
    infringement_distances,
    lateral_error,
    min_radius,
    optimize_cover,
    point_rect_distance,
    polyline_lateral,
    rect_rect_distance,
)

FP = Footprint(length=4.0, width=1.8)
ZERO_PADS = (0.0, 0.0, 0.0, 0.0)


def sampled_cover_radius(fp, pads, z, n=400):
    """Oracle: smallest radius covering a dense sample of the padded region,
    for disks on the region midline."""
    h_f, h_b, h_l, h_r = pads
    l_tot = fp.length + h_f + h_b
    w_tot = fp.width + h_l + h_r
    offs = -l_tot / 2 + l_tot / (2 * z) * (2 * np.arange(1, z + 1) - 1)
    xi = np.linspace(-l_tot / 2, l_tot / 2, n)
    up = np.linspace(-w_tot / 2, w_tot / 2, n)
    XI, UP = np.meshgrid(xi, up, indexing="ij")
    d = np.sqrt((XI[..., None] - offs) ** 2 + UP[..., None] ** 2)
    return float(np.max(np.min(d, axis=-1)))


class TestMinRadius:
    def test_reference_point(self):
        # w=1.8, l=4, h=0, z=2 -> sqrt(0.9^2 + 1^2)
        r = min_radius(FP, ZERO_PADS, 2)
        assert r == pytest.approx(math.sqrt(0.9**2 + 1.0**2), abs=1e-12)
        assert r == pytest.approx(1.345362404707371, abs=1e-9)
        # agrees with the sampled-coverage oracle
        assert r == pytest.approx(sampled_cover_radius(FP, ZERO_PADS, 2), abs=2e-4)

    def test_square_single_disk_is_circumradius(self):
        sq = Footprint(2.0, 2.0)
        assert min_radius(sq, ZERO_PADS, 1) == pytest.approx(math.sqrt(2.0), abs=1e-12)

    def test_monotone_limit_in_z(self):
        prev = math.inf
        for z in range(1, 60):
            r = min_radius(FP, ZERO_PADS, z)
            assert r < prev
            assert r > FP.width / 2
            prev = r
        assert min_radius(FP, ZERO_PADS, 4000) == pytest.approx(FP.width / 2, abs=1e-5)


class TestLateralError:
    def test_reference_point(self):
        sig = lateral_error(FP, ZERO_PADS, 2)
        assert sig == pytest.approx(1.345362404707371 - 0.9, abs=1e-9)

    def test_square_single_disk(self):
        sq = Footprint(2.0, 2.0)
        assert lateral_error(sq, ZERO_PADS, 1) == pytest.approx(math.sqrt(2) - 1, abs=1e-12)

    @given(z=st.integers(min_value=1, max_value=30))
    def test_nonnegative(self, z):
        assert lateral_error(FP, (0.5, 0.1, 0.3, 0.2), z) >= 0.0

    def test_strictly_decreasing_in_z(self):
        sigs = [lateral_error(FP, (0.2, 0.2, 0.2, 0.2), z) for z in range(1, 12)]
        assert all(a > b for a, b in zip(sigs, sigs[1:]))


class TestOptimizeCover:
    def test_beta_zero_prefers_one_disk(self):
        cover = optimize_cover(FP, ZERO_PADS, ZERO_PADS, beta=0.0, z_max=8)
        assert cover.z == 1

    def test_degenerate_matches_scan_oracle(self):
        # cost(z) = z + 2 * sigma(z), scanned directly
        costs = {z: z + 2.0 * lateral_error(FP, ZERO_PADS, z) for z in range(1, 9)}
        best = min(costs, key=costs.get)
        cover = optimize_cover(FP, ZERO_PADS, ZERO_PADS, beta=2.0, z_max=8)
        assert cover.z == best == 2
        assert cover.cost == pytest.approx(costs[best], abs=1e-12)

    def test_instance_cover_point_evaluation(self):
        # speed-independent instances collapse to a point cost z + beta*sigma
        cover = optimize_cover(FP, ZERO_PADS, ZERO_PADS, beta=2.0, z_max=8)
        assert cover.radius == pytest.approx(min_radius(FP, ZERO_PADS, cover.z), abs=1e-12)

    def test_empty_range_rejected(self):
        with pytest.raises(ValueError):
            optimize_cover(FP, (0.5, 0, 0, 0), (0.2, 0, 0, 0), beta=1.0, z_max=4)


class TestDiskCenters:
    def test_single_disk_at_center(self):
        c = disk_centers(3.0, -2.0, 0.7, FP, ZERO_PADS, 1)
        assert c.shape == (1, 2)
        assert np.allclose(c[0], [3.0, -2.0], atol=1e-12)

    def test_two_disks_hand_case(self):
        c = disk_centers(0.0, 0.0, 0.0, FP, ZERO_PADS, 2)
        assert np.allclose(c, [[-1.0, 0.0], [1.0, 0.0]], atol=1e-12)

    def test_pad_swap_heading_flip_symmetry(self):
        pads = (0.8, 0.2, 0.1, 0.1)
        swapped = (0.2, 0.8, 0.1, 0.1)
        a = disk_centers(1.0, 2.0, 0.3, FP, pads, 3)
        b = disk_centers(1.0, 2.0, 0.3 + math.pi, FP, swapped, 3)
        assert np.allclose(np.sort(a, axis=0), np.sort(b, axis=0), atol=1e-12)


class TestCoverageCheck:
    def test_constructed_radius_covers(self):
        rng = np.random.default_rng(0)
        for _ in range(40):
            fp = Footprint(rng.uniform(1, 6), rng.uniform(0.5, 3))
            pads = tuple(rng.uniform(0, 1.5, size=4))
            z = int(rng.integers(1, 6))
            r = min_radius(fp, pads, z)
            rect = clearance_rect(0.0, 0.0, rng.uniform(-3, 3), fp, pads)
            assert coverage_check(z, r, rect, n_per_axis=120)
            assert not coverage_check(z, 0.99 * r, rect, n_per_axis=120)

    def test_more_disks_same_radius_still_cover(self):
        r = min_radius(FP, ZERO_PADS, 2)
        rect = clearance_rect(0, 0, 0, FP, ZERO_PADS)
        assert coverage_check(4, r, rect, n_per_axis=150)


class TestRectDistance:
    def test_axis_aligned_gap(self):
        a = OrientedRectangle(0, 0, 0, 0.5, 0.5)
        b = OrientedRectangle(3, 0, 0, 0.5, 0.5)
        assert rect_rect_distance(a, b) == pytest.approx(2.0, abs=1e-12)

    def test_overlap_negative(self):
        a = OrientedRectangle(0, 0, 0, 0.5, 0.5)
        assert rect_rect_distance(a, a) < 0

    def test_touching_is_zero(self):
        a = OrientedRectangle(0, 0, 0, 0.5, 0.5)
        b = OrientedRectangle(1.0, 0, 0, 0.5, 0.5)
        assert rect_rect_distance(a, b) == pytest.approx(0.0, abs=1e-12)

    def test_matches_boundary_sampling_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(60):
            a = OrientedRectangle(rng.uniform(-2, 2), rng.uniform(-2, 2),
                                  rng.uniform(0, math.pi), rng.uniform(0.3, 2), rng.uniform(0.3, 2))
            b = OrientedRectangle(rng.uniform(2, 7), rng.uniform(-2, 2),
                                  rng.uniform(0, math.pi), rng.uniform(0.3, 2), rng.uniform(0.3, 2))
            d = rect_rect_distance(a, b)
            if d <= 0:
                continue
            # dense boundary sampling of both rectangles
            ts = np.linspace(0, 1, 220)[:, None]
            pts = []
            for r in (a, b):
                c = r.corners()
                segs = [c[i] + ts * (c[(i + 1) % 4] - c[i]) for i in range(4)]
                pts.append(np.vstack(segs))
            diff = pts[0][:, None, :] - pts[1][None, :, :]
            brute = float(np.sqrt((diff**2).sum(-1)).min())
            assert d == pytest.approx(brute, abs=1e-3)


class TestPointRectDistance:
    def test_inside_negative(self):
        r = OrientedRectangle(0, 0, 0, 2, 1)
        assert point_rect_distance(r, (0.5, 0.2)) == pytest.approx(-0.8)

    def test_outside_corner(self):
        r = OrientedRectangle(0, 0, 0, 2, 1)
        assert point_rect_distance(r, (3, 2)) == pytest.approx(math.hypot(1, 1))


class TestDirectionalDistances:
    def test_directly_ahead(self):
        ego = footprint_rect(0, 0, 0, FP)
        other = footprint_rect(4 + 5, 0, 0, FP)  # 5 m bumper gap
        d_l, d_r, d_f = directional_distances(ego, other)
        assert d_f == pytest.approx(5.0, abs=1e-12)
        assert d_l == SENTINEL and d_r == SENTINEL

    def test_fully_left(self):
        ego = footprint_rect(0, 0, 0, FP)
        other = footprint_rect(0, 1.8 + 1.0, 0, FP)  # 1 m lateral gap
        d_l, d_r, d_f = directional_distances(ego, other)
        assert d_l == pytest.approx(1.0, abs=1e-12)
        assert d_r == SENTINEL and d_f == SENTINEL

    def test_behind_all_sentinel(self):
        ego = footprint_rect(0, 0, 0, FP)
        other = footprint_rect(-10, 0, 0, FP)
        assert directional_distances(ego, other) == (SENTINEL, SENTINEL, SENTINEL)


class TestInfringement:
    LINE = np.array([[0.0, 0.0], [100.0, 0.0]])

    def test_inside(self):
        rect = footprint_rect(10, 0, 0, FP)
        assert infringement_distances(rect, self.LINE, 4.0, 2.0) == (0.0, 0.0)

    def test_left_excess(self):
        rect = footprint_rect(10, 2.0 - 0.9 + 0.3, 0, FP)  # top edge 0.3 beyond
        d_left, d_right = infringement_distances(rect, self.LINE, 4.0, 2.0)
        assert d_left == pytest.approx(0.3, abs=1e-12)
        assert d_right == 0.0

    def test_clamped_by_d_max(self):
        rect = footprint_rect(10, 50.0, 0, FP)
        d_left, d_right = infringement_distances(rect, self.LINE, 4.0, 2.0)
        assert d_left == 2.0 and d_right == 0.0
        assert d_left + d_right <= 2 * 2.0

    def test_polyline_lateral_sign(self):
        assert polyline_lateral(self.LINE, (5.0, 1.0)) == pytest.approx(1.0)
        assert polyline_lateral(self.LINE, (5.0, -1.0)) == pytest.approx(-1.0)


class TestClearanceSpec:
    def test_evaluate_and_bounds(self):
        spec = ClearanceSpec(front=(1.0, 2.0), back=(0.0, 0.0),
                             left=(0.5, 0.036), right=(0.5, 0.036))
        assert spec.evaluate(3.0) == (7.0, 0.0, 0.608, 0.608)
        lo, hi = spec.bounds(0.0, 10.0)
        assert lo == (1.0, 0.0, 0.5, 0.5)
        assert hi == (21.0, 0.0, 0.86, 0.86)

    def test_validate_rejects_negative(self):
        with pytest.raises(ValueError):
            ClearanceSpec(front=(-0.5, 0.0)).validate(0.0, 10.0)


class TestDiskSeparationImpliesRectSeparation:
    """Disk constraints holding for all pairs implies disjoint clearance regions."""

    @settings(deadline=None, max_examples=20)
    @given(seed=st.integers(min_value=0, max_value=10_000))
    def test_random_pose_pairs(self, seed):
        rng = np.random.default_rng(seed)
        fp_e = Footprint(4.0, 1.8)
        fp_i = Footprint(rng.uniform(2.0, 5.0), rng.uniform(1.0, 2.5))
        pads = tuple(rng.uniform(0.0, 1.0, size=2)) * 2  # symmetric l/r
        pads = (pads[0], pads[1], pads[2], pads[2])
        z_e, z_i = int(rng.integers(1, 5)), int(rng.integers(1, 4))
        r_e = min_radius(fp_e, pads, z_e)
        r_i = min_radius(fp_i, (0, 0, 0, 0), z_i)
        for _ in range(60):
            xe, ye, he = rng.uniform(-8, 8), rng.uniform(-8, 8), rng.uniform(0, 2 * math.pi)
            xi, yi, hi = rng.uniform(-8, 8), rng.uniform(-8, 8), rng.uniform(0, 2 * math.pi)
            ce = disk_centers(xe, ye, he, fp_e, pads, z_e)
            ci = disk_centers(xi, yi, hi, fp_i, (0, 0, 0, 0), z_i)
            dd = np.linalg.norm(ce[:, None, :] - ci[None, :, :], axis=-1)
            if np.all(dd >= r_e + r_i):
                re_rect = clearance_rect(xe, ye, he, fp_e, pads)
                ri_rect = footprint_rect(xi, yi, hi, fp_i)
                assert rect_rect_distance(re_rect, ri_rect) >= 0.0
