"""Tests for the betatable module."""

import math

import numpy as np
import pytest

from betaboost.betatable import (
    LOWER,
    UPPER,
    BetaTable,
    build_table,
    gamma_for_normalized_kl,
    gamma_zero,
    generate_n_list,
    generate_normalized_kl_list,
    interpolate_log_beta,
    kl_of_gamma,
    load_table,
    upper_side_gammas,
    zeta_ratio,
)
from betaboost.errors import DomainError, TableFormatError
from betaboost.simplex import path_length, reference_t, uniform_path
from betaboost.stepcdf import exact_beta_cdf


class TestGrids:
    def test_n_list_is_sorted_and_unique(self):
        grid = generate_n_list()
        assert grid == sorted(set(grid))
        assert grid[0] == 5
        assert grid[-1] == 10000
        assert 110 in grid

    def test_kl_ticks(self):
        ticks = generate_normalized_kl_list(0.1, 2.0, 4)
        assert ticks[0] == 0.0
        assert all(0.0 <= t < 1.0 for t in ticks)
        assert ticks == sorted(set(ticks))
        # Spacing halves each level past 1/2
        assert ticks[:5] == pytest.approx([0.0, 0.1, 0.2, 0.3, 0.4])
        assert 0.55 in ticks
        assert 0.775 in ticks

    def test_kl_ticks_exact(self):
        ticks = generate_normalized_kl_list(0.1, 2, 4)
        expected = (
            [0.0, 0.1, 0.2, 0.3, 0.4]
            + [0.5, 0.55, 0.6, 0.65, 0.7]
            + [0.75, 0.775, 0.8, 0.825, 0.85]
            + [0.875, 0.8875, 0.9, 0.9125, 0.925]
            + [0.9375, 0.95, 0.9625, 0.975, 0.9875]
        )
        assert len(ticks) == 25
        assert ticks == pytest.approx(expected)

    def test_kl_ticks_domain(self):
        with pytest.raises(DomainError):
            generate_normalized_kl_list(0.0, 2.0, 4)
        with pytest.raises(DomainError):
            generate_normalized_kl_list(0.1, 1.0, 4)
        with pytest.raises(DomainError):
            generate_normalized_kl_list(0.1, 2.0, -1)


class TestGammaZero:
    @pytest.mark.parametrize("N", [50, 200, 1000, 5000])
    def test_segment_length_is_one_over_n(self, N):
        assert path_length(uniform_path(), gamma_zero(N)) == pytest.approx(
            1.0 / N, abs=1e-9
        )

    def test_power_law(self):
        ns = np.geomspace(50, 5000, 12).astype(int)
        gammas = [gamma_zero(int(n)) for n in ns]
        slope = np.polyfit(np.log(ns), np.log(gammas), 1)[0]
        assert slope == pytest.approx(-2.0, abs=0.05)

    def test_domain(self):
        with pytest.raises(DomainError):
            gamma_zero(1)


class TestNormalizedKl:
    def test_zeta_endpoints(self):
        eta = 0.05
        assert zeta_ratio(0.0, eta) == pytest.approx(1.0)
        assert zeta_ratio(reference_t(eta), eta) == pytest.approx(0.0, abs=1e-12)

    def test_inverse(self):
        eta = 0.05
        assert gamma_for_normalized_kl(1.0, eta) == pytest.approx(0.0, abs=1e-12)
        assert gamma_for_normalized_kl(0.0, eta) == pytest.approx(eta, abs=1e-10)
        gammas = gamma_for_normalized_kl(np.array([0.2, 0.5, 0.8]), eta)
        assert np.all(np.diff(gammas) < 0)

    def test_inverse_domain(self):
        with pytest.raises(DomainError):
            gamma_for_normalized_kl(1.5, 0.05)

    def test_upper_side(self):
        rows = upper_side_gammas(0.05, 5)
        assert rows.shape == (5, 2)
        assert np.all(rows[:, 0] > 0.05)
        assert np.all(np.diff(rows[:, 1]) > 0)
        assert rows[-1, 0] == pytest.approx(math.log(2))

    def test_kl_of_gamma_sides(self):
        assert kl_of_gamma(0.01, 0.05)[0] == LOWER
        assert kl_of_gamma(0.1, 0.05)[0] == UPPER
        assert kl_of_gamma(0.05, 0.05)[1] == pytest.approx(0.0, abs=1e-10)


class TestBuiltTable:
    def test_shape(self, exact_table):
        assert exact_table.n_grid == [20, 50, 100, 200]
        assert not exact_table.flagged
        assert all(v <= 0 for _, _, v in exact_table.lower + exact_table.upper)

    def test_rows_are_monotone(self, exact_table):
        for N in exact_table.n_grid:
            lower = [v for n, _, v in exact_table.lower if n == N]
            upper = [v for n, _, v in exact_table.upper if n == N]
            assert all(np.diff(lower) <= 1e-12)
            assert all(np.diff(upper) >= -1e-12)

    @pytest.mark.parametrize("N", [100, 200])
    def test_grid_points_match_exact(self, exact_table, N):
        cdf = exact_beta_cdf(N, exact_table.eta)
        for gamma in [0.002, 0.005, 0.008]:
            if gamma < gamma_zero(N):
                continue
            expected = math.log(cdf.cumulative_at(gamma))
            assert interpolate_log_beta(exact_table, N, gamma) == pytest.approx(
                expected, abs=0.5
            )

    def test_mid_grid_query(self, exact_table):
        expected = math.log(exact_beta_cdf(150, exact_table.eta).cumulative_at(0.005))
        assert interpolate_log_beta(exact_table, 150, 0.005) == pytest.approx(
            expected, abs=0.5
        )

    def test_linear_in_n_between_rows(self, exact_table):
        lo = interpolate_log_beta(exact_table, 100, 0.005)
        hi = interpolate_log_beta(exact_table, 200, 0.005)
        mid = interpolate_log_beta(exact_table, 150, 0.005)
        assert mid == pytest.approx((lo + hi) / 2, abs=1e-12)

    @pytest.mark.parametrize("N", [50, 100, 150, 200])
    def test_nondecreasing_in_gamma(self, exact_table, N):
        gammas = np.linspace(0.0, 0.05, 101)
        values = [interpolate_log_beta(exact_table, N, g) for g in gammas]
        assert np.all(np.diff(values) >= -1e-12)
        assert values[-1] <= 0.0

    def test_below_grid_is_zero(self, exact_table):
        assert interpolate_log_beta(exact_table, 10, 0.001) == 0.0

    def test_above_grid_extrapolates_downward(self, exact_table):
        at_top = interpolate_log_beta(exact_table, 200, 0.002)
        beyond = interpolate_log_beta(exact_table, 400, 0.002)
        assert beyond <= at_top <= 0.0

    def test_nonincreasing_in_n(self, exact_table):
        values = [interpolate_log_beta(exact_table, n, 0.003) for n in range(50, 201)]
        assert np.all(np.diff(values) <= 1e-9)

    def test_small_gamma_is_clamped_to_threshold(self, exact_table):
        N = 100
        assert interpolate_log_beta(exact_table, N, 0.0) == pytest.approx(
            interpolate_log_beta(exact_table, N, gamma_zero(N))
        )

    def test_negative_gamma(self, exact_table):
        with pytest.raises(DomainError):
            interpolate_log_beta(exact_table, 100, -0.1)

    def test_empty_table(self):
        with pytest.raises(DomainError):
            interpolate_log_beta(BetaTable(eta=0.01, gamma0={}), 100, 0.001)


HELD_OUT = (75, 150)
MID_TICKS = [0.05, 0.15, 0.25, 0.35, 0.45]


@pytest.fixture(scope="module")
def default_grid_table():
    """Exact rows of the default N list up to 200, with two rows held out."""
    grid = [n for n in generate_n_list() if 50 <= n <= 200 and n not in HELD_OUT]
    return build_table(0.01, n_grid=grid, upper_points=3, exact_cutoff=200)


@pytest.mark.slow
class TestHeldOutRows:
    @pytest.mark.parametrize("N", HELD_OUT)
    def test_mid_tick_queries_match_exact(self, default_grid_table, N):
        cdf = exact_beta_cdf(N, 0.01)
        for gamma in gamma_for_normalized_kl(np.array(MID_TICKS), 0.01):
            expected = math.log(cdf.cumulative_at(max(gamma, gamma_zero(N))))
            value = interpolate_log_beta(default_grid_table, N, float(gamma))
            assert value == pytest.approx(expected, abs=0.5)

    def test_held_out_rows_are_absent(self, default_grid_table):
        assert not set(HELD_OUT) & set(default_grid_table.n_grid)
        assert 70 in default_grid_table.n_grid
        assert 160 in default_grid_table.n_grid



class TestTableFile:
    def test_save_and_load(self, exact_table, tmp_path):
        path = tmp_path / "beta.table"
        exact_table.save(path)
        loaded = load_table(path)
        assert loaded.eta == exact_table.eta
        assert loaded.gamma0 == exact_table.gamma0
        assert loaded.lower == exact_table.lower
        assert loaded.upper == exact_table.upper

    def test_flagged_cells_round_trip(self, exact_table, tmp_path):
        table = BetaTable(
            eta=exact_table.eta,
            gamma0=exact_table.gamma0,
            lower=exact_table.lower,
            upper=exact_table.upper,
            flagged=[(LOWER, 200, 0.0125), (UPPER, 200, 0.5)],
        )
        path = tmp_path / "beta.table"
        table.save(path)
        loaded = load_table(path)
        assert loaded.flagged == [(LOWER, 200, 0.0125), (UPPER, 200, 0.5)]
        assert loaded == table

    def test_file_without_flagged_block(self, tmp_path):
        path = tmp_path / "beta.table"
        path.write_text(
            "betatable 1\neta 0.01\ngamma0 1\n20\t0.001\n"
            "lower 1\n20\t0\t-1\nupper 0\n"
        )
        table = load_table(path)
        assert table.flagged == []
        assert table.lower == [(20, 0.0, -1.0)]

    def test_bad_flagged_side(self, tmp_path):
        path = tmp_path / "beta.table"
        path.write_text(
            "betatable 1\neta 0.01\ngamma0 0\nlower 0\nupper 0\n"
            "flagged 1\nmiddle\t20\t0.1\n"
        )
        with pytest.raises(TableFormatError) as exc:
            load_table(path)
        assert exc.value.lineno == 7

    def test_missing_file(self, tmp_path):
        with pytest.raises(TableFormatError):
            load_table(tmp_path / "absent.table")

    def test_bad_version(self, tmp_path):
        path = tmp_path / "beta.table"
        path.write_text("betatable 99\n")
        with pytest.raises(TableFormatError) as exc:
            load_table(path)
        assert exc.value.lineno == 1

    def test_bad_number_reports_line(self, tmp_path):
        path = tmp_path / "beta.table"
        path.write_text(
            "betatable 1\neta 0.01\ngamma0 1\n20\t0.001\nlower 1\n20\tx\t-1\nupper 0\n"
        )
        with pytest.raises(TableFormatError) as exc:
            load_table(path)
        assert exc.value.lineno == 6
        assert str(path) in str(exc.value)

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "beta.table"
        path.write_text("betatable 1\neta 0.01\ngamma0 2\n20\t0.001\n")
        with pytest.raises(TableFormatError):
            load_table(path)
