"""Tests for the stepcdf module."""

import math

import numpy as np
import pytest

from betaboost.errors import DomainError
from betaboost.simplex import mutual_information_cells, reference_distribution
from betaboost.stepcdf import (
    StepCdf,
    branch_partition_sizes,
    exact_beta_cdf,
    exact_beta_cdf_parallel,
    robbins_beta_cdf,
)
from betaboost.typespace import count_types, enumerate_types, log_emission_probability


class TestStepCdf:
    def test_empty(self):
        cdf = StepCdf()
        assert cdf.total_mass == 0.0
        assert cdf.cumulative_at(1.0) == 0.0
        assert len(cdf) == 0

    def test_cumulative_counts_jumps_at_or_below(self):
        cdf = StepCdf()
        cdf.account_for_events([0.2, 0.3, 0.5], [0.1, 0.2, 0.3])
        assert cdf.cumulative_at(0.05) == 0.0
        assert cdf.cumulative_at(0.1) == pytest.approx(0.2)
        assert cdf.cumulative_at(0.25) == pytest.approx(0.5)
        assert cdf.cumulative_at(0.3) == pytest.approx(1.0)

    def test_vectorized_query(self):
        cdf = StepCdf()
        cdf.account_for_events([0.5, 0.5], [0.0, 1.0])
        np.testing.assert_allclose(cdf.cumulative_at(np.array([-1, 0, 2])), [0, 0.5, 1])

    def test_near_duplicates_merge(self):
        cdf = StepCdf()
        cdf.account_for_event(0.25, 0.1)
        cdf.account_for_event(0.25, 0.1 + 1e-16)
        assert len(cdf) == 1
        assert cdf.total_mass == pytest.approx(0.5)

    def test_zero_probabilities_are_dropped(self):
        cdf = StepCdf()
        cdf.account_for_events([0.0, 0.5], [0.1, 0.2])
        assert len(cdf) == 1

    def test_negative_probability(self):
        with pytest.raises(DomainError):
            StepCdf().account_for_event(-0.1, 0.2)

    def test_merge(self):
        a, b = StepCdf(), StepCdf()
        a.account_for_events([0.3, 0.2], [0.1, 0.2])
        b.account_for_events([0.1, 0.4], [0.2, 0.3])
        a.merge(b)
        gammas, betas = zip(*a.to_rows())
        assert gammas == pytest.approx([0.1, 0.2, 0.3])
        assert betas == pytest.approx([0.3, 0.6, 1.0])

    def test_single_inserts_match_bulk(self):
        rng = np.random.default_rng(0)
        probs = rng.uniform(0.0, 1.0, 5000)
        values = np.round(rng.uniform(0.0, 0.1, 5000), 4)
        one_by_one, bulk = StepCdf(), StepCdf()
        for p, v in zip(probs, values):
            one_by_one.account_for_event(p, v)
        bulk.account_for_events(probs, values)
        for got, want in zip(one_by_one.jumps(), bulk.jumps()):
            np.testing.assert_allclose(got, want, rtol=1e-12)
        assert len(one_by_one) == len(bulk)

    def test_inserts_after_a_query(self):
        cdf = StepCdf()
        cdf.account_for_event(0.25, 0.1)
        assert cdf.cumulative_at(0.2) == pytest.approx(0.25)
        cdf.account_for_event(0.5, 0.15)
        assert cdf.cumulative_at(0.2) == pytest.approx(0.75)
        assert cdf.total_mass == pytest.approx(0.75)

    def test_merge_leaves_other_usable(self):
        a, b = StepCdf(), StepCdf()
        b.account_for_event(0.4, 0.2)
        a.merge(b)
        b.account_for_event(0.1, 0.3)
        assert a.total_mass == pytest.approx(0.4)
        assert b.total_mass == pytest.approx(0.5)

    def test_dump(self, tmp_path):
        cdf = StepCdf()
        cdf.account_for_events([0.5, 0.5], [0.0, 0.5])
        out = tmp_path / "beta.tsv"
        cdf.dump(out)
        lines = out.read_text().splitlines()
        assert lines[0] == "gamma\tbeta"
        gamma, beta = lines[-1].split("\t")
        assert float(gamma) == pytest.approx(0.5)
        assert beta == "1"


class TestExactBeta:
    @pytest.mark.parametrize("N", [1, 4, 10, 25, 50])
    @pytest.mark.parametrize("eta", [0.01, 0.1])
    def test_total_mass(self, N, eta):
        cdf = exact_beta_cdf(N, eta)
        assert cdf.total_mass == pytest.approx(1.0, abs=1e-9)
        assert cdf.cumulative_at(math.log(2)) == pytest.approx(1.0, abs=1e-9)

    def test_single_draw_has_no_dependence(self):
        # A single record is a vertex table with degenerate marginals
        cdf = exact_beta_cdf(1, 0.01)
        values, masses = cdf.jumps()
        assert len(cdf) == 1
        assert values[0] == 0.0
        assert masses[0] == pytest.approx(1.0)

    def test_two_draws(self):
        eta = 0.05
        t = reference_distribution(eta).cells[0, 0] - 0.25
        cdf = exact_beta_cdf(2, eta)
        diagonal = 0.25 + 4 * t * t
        assert cdf.cumulative_at(0.5) == pytest.approx(1.0 - diagonal, abs=1e-12)

    def test_mass_at_zero_is_rank_one_tables(self):
        eta = 0.01
        types = enumerate_types(4, 4)
        rank_one = types[:, 0] * types[:, 3] == types[:, 1] * types[:, 2]
        assert rank_one.sum() == 17
        p = reference_distribution(eta).cells.ravel()
        expected = np.exp(log_emission_probability(types[rank_one], p)).sum()
        assert exact_beta_cdf(4, eta).cumulative_at(0.0) == pytest.approx(
            expected, abs=1e-12
        )

    def test_matches_brute_force(self):
        N, eta = 12, 0.1
        p = reference_distribution(eta).cells.ravel()
        types = enumerate_types(N, 4)
        probs = np.exp(log_emission_probability(types, p))
        taus = mutual_information_cells(types.reshape(-1, 2, 2) / N)
        cdf = exact_beta_cdf(N, eta)
        for gamma in [0.0, 0.01, 0.05, 0.2, 0.5]:
            expected = probs[taus <= gamma + 1e-13].sum()
            assert cdf.cumulative_at(gamma) == pytest.approx(expected, abs=1e-12)

    def test_nondecreasing(self):
        cdf = exact_beta_cdf(20, 0.01)
        _, masses = cdf.jumps()
        assert np.all(masses >= 0)

    def test_domain(self):
        with pytest.raises(DomainError):
            exact_beta_cdf(0, 0.01)
        with pytest.raises(DomainError):
            exact_beta_cdf(5, 0.01, n=3)
        with pytest.raises(DomainError):
            exact_beta_cdf(5, 0.7)


class TestParallelBeta:
    def test_partition_sizes_cover_all_types(self):
        sizes = branch_partition_sizes(30, 4, 8)
        assert len(sizes) == 8
        assert sum(sizes) == count_types(30, 4)

    @pytest.mark.parametrize("modulus", [1, 3, 8])
    def test_in_process_matches_serial(self, modulus):
        serial = exact_beta_cdf(50, 0.01)
        merged = exact_beta_cdf_parallel(50, 0.01, modulus=modulus, workers=1)
        gammas = np.random.default_rng(0).uniform(0.0, 0.1, 1000)
        np.testing.assert_allclose(
            merged.cumulative_at(gammas), serial.cumulative_at(gammas), atol=1e-12
        )

    def test_worker_processes_match_serial(self):
        serial = exact_beta_cdf(30, 0.1)
        merged = exact_beta_cdf_parallel(30, 0.1, modulus=4, workers=2)
        gammas = np.linspace(0.0, 0.7, 200)
        np.testing.assert_allclose(
            merged.cumulative_at(gammas), serial.cumulative_at(gammas), atol=1e-12
        )

    def test_modulus_domain(self):
        with pytest.raises(DomainError):
            exact_beta_cdf_parallel(10, 0.01, modulus=0)


class TestRobbinsBeta:
    @pytest.mark.parametrize("N", [10, 25])
    def test_dominates_exact(self, N):
        exact = exact_beta_cdf(N, 0.1)
        robbins = robbins_beta_cdf(N, 0.1)
        values, _ = exact.jumps()
        bound = robbins.cumulative_at(values)
        assert np.all(bound >= exact.cumulative_at(values) - 1e-12)

    @pytest.mark.slow
    def test_ratio_shrinks_with_n(self):
        eta = 0.1
        ratios = []
        for N in [25, 50, 100]:
            gamma = eta / 2
            exact = exact_beta_cdf(N, eta).cumulative_at(gamma)
            ratios.append(robbins_beta_cdf(N, eta).cumulative_at(gamma) / exact)
        assert ratios[0] > ratios[1] > ratios[2] >= 1.0
