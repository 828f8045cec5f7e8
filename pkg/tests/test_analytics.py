"""Closed-form values, thresholds, and curve sampling."""

import math

import numpy as np
import pytest

from sheetstop.analytics import (
    DiscountConfig,
    Reward,
    ValueCurve,
    baseline_levels,
    hitting_threshold,
    hitting_value,
    integrated_threshold,
    integrated_value,
    sample_curve,
    threshold_root,
)
from sheetstop.errors import ConfigurationError, DomainError
from sheetstop.special import integrate_semi_infinite

Z_STAR = 0.43481820438490376
E1_1 = 0.2193839343955202737
F_HALF_RHO_AT_1 = 4 * E1_1  # value curve at y=1, rho=0.5


class TestHittingValue:
    def test_linear_at_one(self):
        cfg = DiscountConfig(0.5)
        assert hitting_value(cfg, Reward.linear(), 1.0) == pytest.approx(math.exp(-1.0), rel=1e-14)

    def test_linear_at_two(self):
        cfg = DiscountConfig(0.5)
        assert hitting_value(cfg, Reward.linear(), 2.0) == pytest.approx(2 * math.exp(-2.0), rel=1e-14)

    def test_cubic_vanishes_at_origin(self):
        cfg = DiscountConfig(1.3)
        assert hitting_value(cfg, Reward.of_power(3), 1e-12) < 1e-30

    def test_domain(self):
        cfg = DiscountConfig(0.5)
        with pytest.raises(DomainError):
            hitting_value(cfg, Reward.linear(), 0.0)
        with pytest.raises(DomainError):
            hitting_value(cfg, Reward.linear(), -1.0)


class TestHittingThreshold:
    def test_linear(self):
        assert hitting_threshold(DiscountConfig(0.5), Reward.linear()) == 1.0

    def test_power(self):
        assert hitting_threshold(DiscountConfig(2.0), Reward.of_power(3)) == pytest.approx(1.5)

    def test_custom_quadratic_matches_power_form(self):
        cfg = DiscountConfig(0.5)
        custom = Reward.custom(lambda y: y * y, lambda y: 2 * y)
        got = hitting_threshold(cfg, custom)
        assert got == pytest.approx(2.0 / cfg.rate, abs=1e-8)

    def test_exponential_reward_has_no_maximizer(self):
        cfg = DiscountConfig(1.0)
        expo = Reward.custom(lambda y: math.exp(y), lambda y: math.exp(y))
        assert hitting_threshold(cfg, expo) is None

    def test_threshold_matches_grid_argmax(self):
        # the closed-form level maximizes the hitting value on a fine grid.
        cfg = DiscountConfig(0.5)
        ys = np.linspace(0.01, 5.0, 2500)
        vals = [hitting_value(cfg, Reward.linear(), y) for y in ys]
        best = ys[int(np.argmax(vals))]
        assert abs(best - 1.0) <= ys[1] - ys[0]


class TestIntegratedValue:
    def test_positive_branch(self):
        assert integrated_value(DiscountConfig(0.5), 1.0) == pytest.approx(F_HALF_RHO_AT_1, rel=1e-12)

    def test_zero_by_continuity(self):
        assert integrated_value(DiscountConfig(0.5), 0.0) == 0.0

    def test_odd_symmetry(self):
        cfg = DiscountConfig(0.5)
        assert integrated_value(cfg, -1.0) == pytest.approx(-F_HALF_RHO_AT_1, rel=1e-12)

    def test_negative_branch_matches_defining_integral(self):
        # the closed form on y < 0 equals the literal integral of
        # y e^{-|y| sqrt(2u)} / u scaled by 1/rho.
        cfg = DiscountConfig(0.5)
        y = -0.8
        literal = integrate_semi_infinite(
            lambda u: y * math.exp(-abs(y) * math.sqrt(2 * u)) / u, cfg.rho
        ) / cfg.rho
        assert integrated_value(cfg, y) == pytest.approx(literal, abs=1e-9)

    @pytest.mark.parametrize("y", [0.1, 0.5, 1.0, 2.0])
    @pytest.mark.parametrize("rho", [0.25, 0.5, 2.0])
    def test_representation_equivalence(self, y, rho):
        cfg = DiscountConfig(rho)
        quad = integrate_semi_infinite(
            lambda u: y * math.exp(-y * math.sqrt(2 * u)) / u, rho
        ) / rho
        assert abs(quad - integrated_value(cfg, y)) < 1e-8

    def test_decay_bounds(self):
        # asymptotics of the exponential-integral factor at rho = 0.5:
        # well below 1e-3 / 1e-20 / 1e-40 at y = 10 / 50 / 100.
        cfg = DiscountConfig(0.5)
        assert 0 < integrated_value(cfg, 10.0) < 1e-3
        assert 0 < integrated_value(cfg, 50.0) < 1e-20
        assert 0 < integrated_value(cfg, 100.0) < 1e-40

    def test_slope_limits(self):
        # finite-difference slope blows up at 0+ and is negative tiny far out.
        cfg = DiscountConfig(0.5)
        h = 1e-5
        slope_near_zero = (integrated_value(cfg, 1e-3 + h) - integrated_value(cfg, 1e-3 - h)) / (2 * h)
        assert slope_near_zero > 10.0
        slope_far = (integrated_value(cfg, 100.0 + h) - integrated_value(cfg, 100.0 - h)) / (2 * h)
        assert slope_far < 0
        assert abs(slope_far) < 1e-20


class TestIntegratedThreshold:
    def test_root_constant(self):
        assert threshold_root() == pytest.approx(Z_STAR, abs=1e-9)

    def test_scaling_in_rho(self):
        assert integrated_threshold(DiscountConfig(0.5)) == pytest.approx(Z_STAR, abs=1e-5)
        assert integrated_threshold(DiscountConfig(2.0)) == pytest.approx(Z_STAR / 2, abs=1e-5)

    def test_first_order_condition(self):
        cfg = DiscountConfig(0.5)
        y_star = integrated_threshold(cfg)
        h = 1e-5
        fd = (integrated_value(cfg, y_star + h) - integrated_value(cfg, y_star - h)) / (2 * h)
        assert abs(fd) < 1e-6

    def test_grid_scan_uniqueness(self):
        # the maximum over a fine grid lands in the cell containing the root.
        cfg = DiscountConfig(0.5)
        y_star = integrated_threshold(cfg)
        ys = np.linspace(1e-6, 10 * y_star, 1000)
        vals = [integrated_value(cfg, y) for y in ys]
        best = ys[int(np.argmax(vals))]
        assert abs(best - y_star) <= ys[1] - ys[0]


class TestBaselines:
    def test_values(self):
        assert baseline_levels(DiscountConfig(0.5)) == (1.0, -1.0)
        pos, neg = baseline_levels(DiscountConfig(2.0))
        assert pos == pytest.approx(0.5) and neg == pytest.approx(-0.5)

    @pytest.mark.parametrize("rho", [0.25, 0.5, 2.0, 7.0])
    def test_sign_reversal_against_integrated_threshold(self, rho):
        cfg = DiscountConfig(rho)
        _, neg = baseline_levels(cfg)
        assert integrated_threshold(cfg) > 0 > neg

    def test_rho_must_be_positive(self):
        with pytest.raises(ConfigurationError):
            DiscountConfig(0.0)


class TestSampleCurve:
    def test_integrated_curve_sign_structure(self):
        cfg = DiscountConfig(0.5)
        curve = sample_curve("integrated", cfg, np.linspace(-2, 2, 41))
        left = curve.values[curve.ys < 0]
        right = curve.values[curve.ys > 0]
        assert np.all(left < 0) and np.all(right > 0)

    def test_hitting_curve_unimodal_peak(self):
        cfg = DiscountConfig(0.5)
        ys = np.linspace(0.1, 3.0, 117)
        curve = sample_curve("hitting", cfg, ys, reward=Reward.linear())
        peak = ys[int(np.argmax(curve.values))]
        assert abs(peak - 1.0) <= ys[1] - ys[0]
        diffs = np.sign(np.diff(curve.values))
        assert np.count_nonzero(np.diff(diffs) != 0) == 1

    def test_single_point_curve(self):
        curve = sample_curve("integrated", DiscountConfig(0.5), [1.0])
        assert curve.values.shape == (1,)

    def test_hitting_requires_reward_and_domain(self):
        cfg = DiscountConfig(0.5)
        with pytest.raises(ConfigurationError):
            sample_curve("hitting", cfg, [1.0])
        with pytest.raises(DomainError):
            sample_curve("hitting", cfg, [-1.0, 1.0], reward=Reward.linear())

    def test_unknown_curve(self):
        with pytest.raises(ConfigurationError):
            sample_curve("mystery", DiscountConfig(0.5), [1.0])

    def test_curve_validation(self):
        with pytest.raises(ConfigurationError):
            ValueCurve(ys=np.array([1.0, 0.5]), values=np.array([0.0, 0.0]), label="x")
        with pytest.raises(ConfigurationError):
            ValueCurve(ys=np.array([0.0, 1.0]), values=np.array([0.0]), label="x")


class TestRewardType:
    def test_power_validation(self):
        with pytest.raises(ConfigurationError):
            Reward.of_power(0)

    def test_custom_needs_derivative(self):
        with pytest.raises(ConfigurationError):
            Reward(kind="custom", fn=lambda y: y)

    def test_labels(self):
        assert Reward.linear().label() == "linear"
        assert Reward.of_power(3).label() == "power:3"
