"""Tests for the domain types and sample-level statistics."""

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pretest_coverage import (
    AnalysisConfig,
    CellProbs,
    InputDomainError,
    Interval,
    ObservedTables,
    SearchStage,
    StudyDesign,
    adjusted_props,
    normal_quantiles,
    two_sided_quantile,
    two_stage_intervals,
    woolf_summary,
)

from ._oracles import two_stage_by_hand, two_sided_quantile_bisect

DESIGN = StudyDesign(1092, 467, 449, 488)


def counts_strategy(max_n=200):
    return st.integers(min_value=1, max_value=max_n).flatmap(
        lambda n: st.tuples(st.just(n), st.integers(min_value=0, max_value=n)))


def design_tables_strategy(max_n=200):
    return st.tuples(*(counts_strategy(max_n) for _ in range(4))).map(
        lambda pairs: (StudyDesign(*(n for n, _ in pairs)),
                       ObservedTables(*(y for _, y in pairs))))


class TestTypes:
    def test_design_requires_positive_counts(self):
        with pytest.raises(InputDomainError):
            StudyDesign(0, 1, 1, 1)
        with pytest.raises(InputDomainError):
            StudyDesign(1, 1, -2, 1)
        with pytest.raises(InputDomainError):
            StudyDesign(1.5, 1, 1, 1)

    def test_design_scaled(self):
        assert DESIGN.scaled(3) == StudyDesign(3276, 1401, 1347, 1464)
        with pytest.raises(InputDomainError):
            DESIGN.scaled(0)

    def test_cell_probs_domain(self):
        with pytest.raises(InputDomainError):
            CellProbs(0.0, 0.5, 0.5, 0.5)
        with pytest.raises(InputDomainError):
            CellProbs(0.5, 1.0, 0.5, 0.5)
        p = CellProbs(0.692, 0.596, 0.02, 0.02)
        assert p.within_margin(0.02)
        assert not p.within_margin(0.05)

    def test_log_odds_accessors(self):
        p = CellProbs(0.75, 0.5, 0.5, 0.25)
        assert p.theta1 == pytest.approx(math.log(3.0), abs=1e-14)
        assert p.theta2 == pytest.approx(math.log(3.0), abs=1e-14)
        assert p.psi1 == pytest.approx(3.0, abs=1e-13)

    def test_tables_validation(self):
        tables = ObservedTables(1093, 0, 0, 0)
        with pytest.raises(InputDomainError):
            tables.validate_against(DESIGN)
        with pytest.raises(InputDomainError):
            ObservedTables(-1, 0, 0, 0)

    def test_config_validation(self):
        with pytest.raises(InputDomainError):
            AnalysisConfig(alpha=0.0)
        with pytest.raises(InputDomainError):
            AnalysisConfig(beta=0.0)
        with pytest.raises(InputDomainError):
            AnalysisConfig(beta=1.5)
        with pytest.raises(InputDomainError):
            AnalysisConfig(epsilon=0.5)
        with pytest.raises(InputDomainError):
            AnalysisConfig(h=0.0)
        with pytest.raises(InputDomainError):
            AnalysisConfig(mc_schedule=())

    def test_config_normalizes_plain_tuples(self):
        config = AnalysisConfig(mc_schedule=[(100, 5), (200, 1)])
        assert config.mc_schedule == (SearchStage(100, 5), SearchStage(200, 1))

    def test_search_stage_validation(self):
        with pytest.raises(InputDomainError):
            SearchStage(0, 1)
        with pytest.raises(InputDomainError):
            SearchStage(10, 0)


class TestInterval:
    def test_basic(self):
        iv = Interval(-1.0, 2.0)
        assert iv.width == 3.0
        assert iv.contains(-1.0) and iv.contains(2.0) and iv.contains(0.0)
        assert not iv.contains(2.0000001)

    def test_empty_marker(self):
        empty = Interval.empty()
        assert empty.is_empty
        assert empty.width == 0.0
        assert not empty.contains(0.0)

    def test_rejects_bad_endpoints(self):
        with pytest.raises(InputDomainError):
            Interval(1.0, 0.0)
        with pytest.raises(InputDomainError):
            Interval(math.nan, 1.0)

    def test_intersection(self):
        assert Interval(0, 2).intersect(Interval(1, 3)) == Interval(1, 2)
        assert Interval(0, 1).intersect(Interval(2, 3)).is_empty
        touching = Interval(0, 1).intersect(Interval(1, 2))
        assert touching == Interval(1, 1)
        assert Interval(0, 1).intersect(Interval.empty()).is_empty

    def test_odds_scale_view(self):
        iv = Interval(0.0, math.log(2.0)).to_odds_scale()
        assert iv.lo == pytest.approx(1.0)
        assert iv.hi == pytest.approx(2.0)
        assert Interval.empty().to_odds_scale().is_empty


class TestAdjustedProps:
    def test_single_subject_unexposed(self):
        props = adjusted_props(StudyDesign(1, 1, 1, 1), ObservedTables(0, 0, 0, 0))
        assert props[0] == 0.25

    def test_midpoint_maps_near_half(self):
        props = adjusted_props(DESIGN, ObservedTables(546, 0, 0, 0))
        assert props[0] == pytest.approx(546.5 / 1093, abs=1e-15)
        assert props[0] == pytest.approx(0.5, abs=5e-4)

    def test_saturated_count_stays_below_one(self):
        design = StudyDesign(10, 10, 10, 10)
        props = adjusted_props(design, ObservedTables(10, 10, 10, 10))
        assert props[0] == pytest.approx(10.5 / 11, abs=1e-15)
        assert props[0] < 1.0

    def test_rejects_out_of_range_counts(self):
        with pytest.raises(InputDomainError):
            adjusted_props(StudyDesign(5, 5, 5, 5), ObservedTables(6, 0, 0, 0))

    @given(design_tables_strategy())
    def test_always_interior(self, design_tables):
        design, tables = design_tables
        for prop in adjusted_props(design, tables):
            assert 0.0 < prop < 1.0


class TestWoolfSummary:
    def test_equal_cells_give_zero_theta(self):
        summary = woolf_summary(StudyDesign(50, 50, 50, 50),
                                ObservedTables(20, 20, 30, 30))
        assert summary.theta_hat1 == 0.0
        assert summary.theta_hat2 == 0.0

    def test_variance_at_half(self):
        # y = 50 of n = 100 gives an adjusted proportion of exactly 1/2,
        # so each stratum variance is (1/100)(2+2) + (1/100)(2+2) = 0.08.
        summary = woolf_summary(StudyDesign(100, 100, 100, 100),
                                ObservedTables(50, 50, 50, 50))
        assert summary.sigma_hat_sq1 == pytest.approx(0.08, abs=1e-15)
        assert summary.sigma_hat_sq2 == pytest.approx(0.08, abs=1e-15)

    def test_equal_thetas_pool_trivially(self):
        summary = woolf_summary(StudyDesign(40, 60, 40, 60),
                                ObservedTables(10, 20, 10, 20))
        assert summary.t_hat == 0.0
        assert summary.theta_hat_pooled == summary.theta_hat1

    @given(design_tables_strategy())
    @settings(max_examples=60)
    def test_invariants(self, design_tables):
        design, tables = design_tables
        summary = woolf_summary(design, tables)
        assert summary.sigma_hat_sq1 > 0 and math.isfinite(summary.sigma_hat_sq1)
        assert summary.sigma_hat_sq2 > 0 and math.isfinite(summary.sigma_hat_sq2)
        assert math.isfinite(summary.t_hat)
        lo = min(summary.theta_hat1, summary.theta_hat2)
        hi = max(summary.theta_hat1, summary.theta_hat2)
        assert lo <= summary.theta_hat_pooled <= hi

    @given(design_tables_strategy())
    @settings(max_examples=60)
    def test_stratum_exchange(self, design_tables):
        design, tables = design_tables
        summary = woolf_summary(design, tables)
        swapped = woolf_summary(
            StudyDesign(design.n2, design.n2p, design.n1, design.n1p),
            ObservedTables(tables.y2, tables.y2p, tables.y1, tables.y1p))
        assert swapped.theta_hat1 == summary.theta_hat2
        assert swapped.theta_hat2 == summary.theta_hat1
        assert swapped.t_hat == -summary.t_hat
        assert swapped.theta_hat_pooled == summary.theta_hat_pooled


class TestQuantiles:
    def test_against_bisection_oracle(self):
        c_alpha, c_tilde, c_beta = normal_quantiles(0.05, 0.05)
        assert c_alpha == pytest.approx(two_sided_quantile_bisect(0.05), abs=1e-12)
        assert c_tilde == pytest.approx(2.2364766445577913, abs=1e-12)
        assert c_beta == c_alpha
        assert two_sided_quantile(0.10) == pytest.approx(1.6448536269514726, abs=1e-12)

    def test_four_decimal_values(self):
        c_alpha, c_tilde, _ = normal_quantiles(0.05, 0.05)
        assert c_alpha == pytest.approx(1.959964, abs=5e-7)
        assert c_tilde == pytest.approx(2.2365, abs=5e-5)

    def test_beta_one_always_rejects(self):
        _, _, c_beta = normal_quantiles(0.05, 1.0)
        assert c_beta == 0.0

    def test_tilde_exceeds_plain(self):
        for alpha in (0.01, 0.05, 0.1, 0.3):
            c_alpha, c_tilde, _ = normal_quantiles(alpha, 0.5)
            assert c_tilde > c_alpha

    def test_level_domain(self):
        with pytest.raises(InputDomainError):
            normal_quantiles(0.0, 0.05)
        with pytest.raises(InputDomainError):
            normal_quantiles(1.0, 0.05)
        with pytest.raises(InputDomainError):
            normal_quantiles(0.05, 0.0)
        with pytest.raises(InputDomainError):
            normal_quantiles(0.05, 1.1)
        with pytest.raises(InputDomainError):
            two_sided_quantile(-0.1)

    def test_quantile_limits(self):
        assert two_sided_quantile(0.0) == math.inf
        assert two_sided_quantile(1.0) == 0.0


class TestTwoStageIntervals:
    config = AnalysisConfig(alpha=0.05, beta=0.05)

    def test_zero_statistic_accepts(self):
        result = two_stage_intervals(StudyDesign(40, 60, 40, 60),
                                     ObservedTables(10, 20, 10, 20), self.config)
        assert not result.rejected
        assert result.interval1 == result.interval2

    def test_beta_one_rejects_any_difference(self):
        config = AnalysisConfig(alpha=0.05, beta=1.0)
        result = two_stage_intervals(DESIGN, ObservedTables(712, 250, 160, 145), config)
        assert result.rejected
        assert result.interval1 != result.interval2

    def test_beta_one_tie_at_zero_accepts(self):
        # |t_hat| = c_beta = 0 is the documented measure-zero tie: accept.
        config = AnalysisConfig(alpha=0.05, beta=1.0)
        result = two_stage_intervals(StudyDesign(40, 60, 40, 60),
                                     ObservedTables(10, 20, 10, 20), config)
        assert not result.rejected

    def test_tiny_beta_accepts(self):
        # c_beta grows without bound as beta -> 0, so any fixed dataset
        # eventually lands in the accept branch.
        config = AnalysisConfig(alpha=0.05, beta=1e-15)
        result = two_stage_intervals(DESIGN, ObservedTables(712, 250, 60, 300), config)
        assert not result.rejected

    @pytest.mark.parametrize("tables", [(712, 250, 160, 145), (712, 250, 60, 300)])
    def test_matches_by_hand_recomputation(self, tables):
        result = two_stage_intervals(DESIGN, ObservedTables(*tables), self.config)
        (lo1, hi1), (lo2, hi2), rejected = two_stage_by_hand(
            DESIGN.as_tuple(), tables, 0.05, 0.05)
        assert result.rejected == rejected
        assert result.interval1.lo == pytest.approx(lo1, abs=1e-12)
        assert result.interval1.hi == pytest.approx(hi1, abs=1e-12)
        assert result.interval2.lo == pytest.approx(lo2, abs=1e-12)
        assert result.interval2.hi == pytest.approx(hi2, abs=1e-12)

    def test_frozen_worked_examples(self):
        # Values pinned from the step-by-step oracle in _oracles.py.
        accept = two_stage_intervals(DESIGN, ObservedTables(712, 250, 160, 145),
                                     self.config)
        assert not accept.rejected
        assert accept.interval1.lo == pytest.approx(0.22908009405219723, abs=1e-12)
        assert accept.interval1.hi == pytest.approx(0.5724225195955531, abs=1e-12)

        reject = two_stage_intervals(DESIGN, ObservedTables(712, 250, 60, 300),
                                     self.config)
        assert reject.rejected
        assert reject.interval1.lo == pytest.approx(0.23455748270492094, abs=1e-12)
        assert reject.interval1.hi == pytest.approx(0.7375098469848476, abs=1e-12)
        assert reject.interval2.lo == pytest.approx(-2.7013941072550023, abs=1e-12)
        assert reject.interval2.hi == pytest.approx(-1.9557463874674055, abs=1e-12)

    @given(design_tables_strategy(max_n=150))
    @settings(max_examples=60)
    def test_widths_reproducible_from_summary(self, design_tables):
        design, tables = design_tables
        summary = woolf_summary(design, tables)
        result = two_stage_intervals(design, tables, self.config)
        c_alpha, c_tilde, _ = normal_quantiles(0.05, 0.05)
        if result.rejected:
            assert result.interval1.width == pytest.approx(
                2 * c_tilde * math.sqrt(summary.sigma_hat_sq1), rel=1e-12)
            assert result.interval2.width == pytest.approx(
                2 * c_tilde * math.sqrt(summary.sigma_hat_sq2), rel=1e-12)
        else:
            pooled_var = 1 / (1 / summary.sigma_hat_sq1 + 1 / summary.sigma_hat_sq2)
            assert result.interval1.width == pytest.approx(
                2 * c_alpha * math.sqrt(pooled_var), rel=1e-12)

    @given(design_tables_strategy(max_n=150))
    @settings(max_examples=60)
    def test_stratum_exchange_swaps_intervals(self, design_tables):
        design, tables = design_tables
        result = two_stage_intervals(design, tables, self.config)
        swapped = two_stage_intervals(
            StudyDesign(design.n2, design.n2p, design.n1, design.n1p),
            ObservedTables(tables.y2, tables.y2p, tables.y1, tables.y1p),
            self.config)
        assert swapped.rejected == result.rejected
        assert swapped.interval1 == result.interval2
        assert swapped.interval2 == result.interval1
