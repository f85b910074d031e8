from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voxsel.errors import NoFeasibleRegionError, ValidationError
from voxsel.hyperbounds import (
    BoundsInput,
    HyperRegion,
    bounds_2d,
    bounds_3d,
    bounds_3d_relaxed,
    check_pair,
    compute_bounds,
    max_simple_r2,
    null_escape_rhs,
    recommend_ab,
    sparsity_side_length,
)
from voxsel.lattice import ising_quadratic_cube, ising_quadratic_square, pair_count_cube


class TestSparsitySideLength:
    def test_paper_2d_case(self):
        assert sparsity_side_length(0.05, 1000, 2) == 7

    def test_paper_3d_case(self):
        assert sparsity_side_length(0.01, 6670, 3) == 4

    def test_single_voxel(self):
        assert sparsity_side_length(0.001, 1000, 3) == 1

    def test_exact_cube_not_floored_down(self):
        # 8^(1/3) must give 2 despite float representation
        assert sparsity_side_length(0.08, 100, 3) == 2

    def test_too_sparse(self):
        with pytest.raises(ValidationError, match="too sparse"):
            sparsity_side_length(0.0005, 1000, 2)


class TestMaxSimpleR2:
    def test_perfect_fit(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(50, 3))
        y = 2.0 * x[:, 1]
        ds = SimpleNamespace(y=y, X=x)
        assert max_simple_r2(ds) == pytest.approx(1.0, abs=1e-12)

    def test_independent_noise_is_small(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(10_000, 10))
        y = rng.normal(size=10_000)
        assert max_simple_r2(SimpleNamespace(y=y, X=x)) < 0.01

    def test_matches_per_column_regression(self):
        # independent oracle: explicit intercept+slope least squares per column
        rng = np.random.default_rng(3)
        x = rng.normal(size=(60, 5))
        y = 0.3 * x[:, 2] + rng.normal(size=60)
        best = -np.inf
        for j in range(5):
            design = np.stack([np.ones(60), x[:, j]], axis=1)
            coef, *_ = np.linalg.lstsq(design, y, rcond=None)
            sse = np.sum((y - design @ coef) ** 2)
            sst = np.sum((y - y.mean()) ** 2)
            best = max(best, 1.0 - sse / sst)
        assert max_simple_r2(SimpleNamespace(y=y, X=x)) == pytest.approx(best, abs=1e-12)

    def test_single_predictor_is_squared_correlation(self):
        rng = np.random.default_rng(11)
        x = rng.normal(size=(40, 1))
        y = 0.5 * x[:, 0] + rng.normal(size=40)
        rho = np.corrcoef(y, x[:, 0])[0, 1]
        assert max_simple_r2(SimpleNamespace(y=y, X=x)) == pytest.approx(rho**2, abs=1e-12)

    def test_constant_response_rejected(self):
        x = np.random.default_rng(0).normal(size=(10, 2))
        with pytest.raises(ValidationError, match="degenerate response"):
            max_simple_r2(SimpleNamespace(y=np.ones(10), X=x))

    def test_constant_column_skipped_with_warning(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(30, 3))
        x[:, 0] = 4.0
        y = x[:, 2] + rng.normal(size=30)
        with pytest.warns(UserWarning, match="constant predictor"):
            r2 = max_simple_r2(SimpleNamespace(y=y, X=x))
        assert 0.0 < r2 <= 1.0


class TestBounds2D:
    def test_paper_constraints_v7(self):
        inp = BoundsInput(n=104, p=1000, dim=2, pi=0.05, r2=0.5)
        region = bounds_2d(inp)
        assert region.v == 7
        # 312b + 49a > -n/2  <=>  a > (-n/2 - 312b)/49
        assert region.a_lower[0] * 49 == pytest.approx(-104 / 2, rel=1e-12)
        assert region.a_lower[1] * 49 == pytest.approx(-312, rel=1e-12)
        # -8b > a
        assert region.a_upper == (0.0, -8.0)
        # b < n/160
        assert region.b_max == pytest.approx(104 / 160, rel=1e-12)

    def test_b_max_is_one_at_n160(self):
        region = bounds_2d(BoundsInput(n=160, p=1000, dim=2, pi=0.05, r2=0.5))
        assert region.b_max == pytest.approx(1.0, rel=1e-12)

    @pytest.mark.parametrize("n", [50, 104, 333, 1024])
    def test_b_max_closed_form_regression(self, n):
        # eliminating a between the two affine boundaries gives n/160 for V=7, R2=0.5
        region = bounds_2d(BoundsInput(n=n, p=1000, dim=2, pi=0.05, r2=0.5))
        assert region.b_max == pytest.approx(n / 160, rel=1e-12)

    def test_vanishing_signal_shrinks_region(self):
        region = bounds_2d(BoundsInput(n=104, p=1000, dim=2, pi=0.05, r2=1e-9))
        assert 0 < region.b_max < 1e-6

    def test_wrong_dim_rejected(self):
        with pytest.raises(ValidationError):
            bounds_2d(BoundsInput(n=10, p=100, dim=3, pi=0.1, r2=0.5))


class TestBounds3D:
    def test_decay_slope_near_minus_23(self):
        inp = BoundsInput(n=104, p=6600, dim=3, pi=0.01, r2=0.5)
        region = bounds_3d(inp)
        assert region.v_max == 18
        assert region.a_upper[0] == 0.0
        assert region.a_upper[1] == pytest.approx(-23.11, abs=0.01)
        assert region.a_upper[1] == pytest.approx(-134776 / 5832, rel=1e-12)

    def test_null_escape_bound_v4(self):
        inp = BoundsInput(n=104, p=6600, dim=3, pi=0.01, r2=0.5)
        region = bounds_3d(inp)
        assert region.v == 4
        # 64a + 936b >= -52  <=>  a >= -0.8125 - 14.625 b
        assert region.a_lower[0] == pytest.approx(-52 / 64, rel=1e-12)
        assert region.a_lower[1] == pytest.approx(-936 / 64, rel=1e-12)
        assert round(region.a_lower[0], 2) == -0.81
        assert round(region.a_lower[1], 1) == -14.6

    def test_b_max_rounds_to_point_one(self):
        inp = BoundsInput(n=104, p=6600, dim=3, pi=0.01, r2=0.5)
        region = bounds_3d(inp)
        assert round(region.b_max, 1) == 0.1
        assert region.b_max < 0.1


class TestBounds3DRelaxed:
    def test_low_signal_escape_bound(self):
        inp = BoundsInput(n=104, p=6600, dim=3, pi=0.01, r2=0.10, mode="relaxed")
        region = bounds_3d_relaxed(inp)
        assert region.a_lower == (pytest.approx(-104 * 0.1 / 1.8, rel=1e-12), 0.0)
        assert round(region.a_lower[0], 2) == -5.78
        assert round(region.a_lower[0], 1) == -5.8
        assert region.b_max < 0.251
        assert round(region.b_max, 2) == 0.25

    def test_half_r2_lower_bound(self):
        inp = BoundsInput(n=104, p=6600, dim=3, pi=0.01, r2=0.5, mode="relaxed")
        region = bounds_3d_relaxed(inp)
        assert region.a_lower[0] == pytest.approx(-52.0, rel=1e-12)

    def test_b_max_scales_linearly_in_n(self):
        regions = [
            bounds_3d_relaxed(
                BoundsInput(n=n, p=6600, dim=3, pi=0.01, r2=0.10, mode="relaxed")
            )
            for n in (100, 1000, 10_000)
        ]
        bs = [r.b_max for r in regions]
        assert bs[1] == pytest.approx(10 * bs[0], rel=1e-12)
        assert bs[2] == pytest.approx(100 * bs[0], rel=1e-12)


class TestMonotonicity:
    def test_b_max_nondecreasing_in_n(self):
        prev = 0.0
        for n in (10, 50, 100, 500):
            r = compute_bounds(BoundsInput(n=n, p=1000, dim=2, pi=0.05, r2=0.5))
            assert r.b_max >= prev
            prev = r.b_max

    def test_b_max_nondecreasing_in_signal(self):
        prev = 0.0
        for r2 in (0.05, 0.2, 0.5, 0.8):
            r = compute_bounds(
                BoundsInput(n=104, p=6600, dim=3, pi=0.01, r2=r2, mode="relaxed")
            )
            assert r.b_max >= prev
            prev = r.b_max

    def test_decay_slope_magnitude_nondecreasing_in_vmax(self):
        slopes = [2 * pair_count_cube(v) / v**3 for v in range(2, 21)]
        assert all(s2 >= s1 for s1, s2 in zip(slopes, slopes[1:]))


class TestRecommend:
    def test_relaxed_margin_backoff(self):
        inp = BoundsInput(n=104, p=6600, dim=3, pi=0.01, r2=0.10, mode="relaxed")
        region = bounds_3d_relaxed(inp)
        a, b = recommend_ab(region, margin=0.2)
        assert b == pytest.approx(0.2, abs=0.01)
        assert region.contains(a, b, slack=0.0)
        # b backs off to 0.2 exactly; a lands strictly inside the decay
        # bound (-23.11 * 0.2 = -4.62), in the upper part of the strip
        assert region.a_lower_at(b) < a < region.a_upper_at(b)

    def test_margin_zero_hits_boundary_corner(self):
        region = HyperRegion(
            dim=2, mode="expected-r2", v=3, v_max=None, rhs=-4.0,
            b_max=1.0, a_lower=(-4.0, -6.0), a_upper=(0.0, -10.0),
        )
        with pytest.warns(UserWarning, match="boundary"):
            a, b = recommend_ab(region, margin=0.0)
        assert (a, b) == (-10.0, 1.0)

    def test_degenerate_region_rejected(self):
        region = HyperRegion(
            dim=2, mode="expected-r2", v=3, v_max=None, rhs=-4.0,
            b_max=0.0, a_lower=(0.0, -6.0), a_upper=(0.0, -10.0),
        )
        with pytest.raises(NoFeasibleRegionError):
            recommend_ab(region, margin=0.1)

    def test_bad_margin_rejected(self):
        region = bounds_2d(BoundsInput(n=104, p=1000, dim=2, pi=0.05, r2=0.5))
        with pytest.raises(ValidationError):
            recommend_ab(region, margin=0.6)

    @settings(max_examples=60, deadline=None)
    @given(
        n=st.integers(20, 2000),
        r2=st.floats(0.05, 0.9),
        pi=st.floats(0.01, 0.2),
        margin=st.floats(0.01, 0.45),
        dim=st.sampled_from([2, 3]),
        relaxed=st.booleans(),
    )
    def test_recommendation_round_trips_through_quadratics(
        self, n, r2, pi, margin, dim, relaxed
    ):
        p = 1000
        if pi * p < 1:
            return
        mode = "relaxed" if (relaxed and dim == 3) else "expected-r2"
        inp = BoundsInput(n=n, p=p, dim=dim, pi=pi, r2=r2, mode=mode)
        region = compute_bounds(inp)
        a, b = recommend_ab(region, margin=margin)
        rhs = null_escape_rhs(n, r2)
        slack = 1e-9
        if dim == 2:
            assert a + 8 * b < slack
            assert ising_quadratic_square(region.v, a, b) > rhs - slack
        else:
            assert ising_quadratic_cube(region.v_max, a, b) < slack
            if mode == "relaxed":
                assert a >= rhs - slack
            else:
                assert ising_quadratic_cube(region.v, a, b) >= rhs - slack


class TestRegionChecks:
    def test_check_pair_reports_violated_inequality(self):
        region = bounds_2d(BoundsInput(n=104, p=1000, dim=2, pi=0.05, r2=0.5))
        with pytest.raises(ValidationError, match="violated"):
            check_pair(region, a=1.0, b=0.1)
        # interior point passes silently
        check_pair(region, *recommend_ab(region, margin=0.2))

    def test_contains_respects_slack(self):
        region = bounds_2d(BoundsInput(n=104, p=1000, dim=2, pi=0.05, r2=0.5))
        b = region.b_max / 2
        a_edge = region.a_upper_at(b)
        assert region.contains(a_edge, b)
        assert not region.contains(a_edge + 1e-6, b)

    def test_record_keys(self):
        region = bounds_2d(BoundsInput(n=104, p=1000, dim=2, pi=0.05, r2=0.5))
        rec = region.to_record(recommended=(-1.0, 0.1))
        assert set(rec) == {
            "b_max",
            "a_lower_intercept",
            "a_lower_slope",
            "a_upper_slope",
            "recommended_a",
            "recommended_b",
        }

    def test_interior_strip_nonempty(self):
        region = bounds_3d(BoundsInput(n=104, p=6600, dim=3, pi=0.01, r2=0.5))
        for frac in (0.1, 0.5, 0.9):
            b = frac * region.b_max
            assert region.a_lower_at(b) < region.a_upper_at(b)
