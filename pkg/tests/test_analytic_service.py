from itertools import combinations

import numpy as np
import pytest

from interference_lab.errors import (FeatureNotSupportedError,
                                     InterferenceRequestError)
from interference_lab.models.designs import (BernoulliDesign, ClusterDesign,
                                             CompletelyRandomizedDesign,
                                             RestrictedBernoulliDesign)
from interference_lab.models.estimates import Estimand
from interference_lab.models.graphs import InterferenceGraph
from interference_lab.service import AnalyticService


def _crd_designs(g):
    return [CompletelyRandomizedDesign(n=g.n, n_t=n_t) for n_t in range(1, g.n)]


def _exact_bias(client, d, g, model, t, target=Estimand.DTE, estimator="naive"):
    expectation = client.harness.exact_expectation(d, g, model, t, estimator, target).expectation
    return expectation - client.outcomes.true_estimand(t, target, g=g, model=model)


class TestLinearBias:

    @staticmethod
    def test_matches_enumeration_for_every_treated_count(client, corpus_graph):
        g = corpus_graph
        t = client.outcomes.linear_table(g, "symmetric", alpha=np.arange(g.n, dtype=float), beta=1.5, gamma=0.7)
        expected = -0.7 * 2 * g.edge_count / (g.n * (g.n - 1))
        for d in _crd_designs(g) + [RestrictedBernoulliDesign(n=g.n, p=0.3)]:
            assert client.analytic.bias_linear(d, g, 0.7) == pytest.approx(expected, abs=1e-12)
            assert _exact_bias(client, d, g, "symmetric", t) == pytest.approx(expected, abs=1e-12), d.label

    @staticmethod
    def test_bernoulli_trials_are_not_covered(client, path6):
        with pytest.raises(FeatureNotSupportedError):
            client.analytic.bias_linear(BernoulliDesign(n=6, p=0.5), path6, 1.0)


class TestBinaryBias:

    @staticmethod
    def test_crd_form_is_exact(client, corpus_graph):
        g = corpus_graph
        gamma = np.linspace(0.2, 1.2, g.n)
        theta = np.linspace(-0.5, 0.5, g.n)
        t = client.outcomes.linear_table(g, "binary", alpha=np.ones(g.n), beta=np.arange(g.n, dtype=float),
                                         gamma=gamma, theta=theta)
        for d in _crd_designs(g):
            closed = client.analytic.bias_binary(d, g, gamma, theta)
            assert closed == pytest.approx(_exact_bias(client, d, g, "binary", t), abs=1e-12), d.label

    @staticmethod
    @pytest.mark.parametrize("n, edges, n_t", [
        (5, list(combinations(range(5), 2)), 4),
        (6, [(i, (i + 1) % 6) for i in range(6)], 5),
    ])
    def test_no_bias_when_every_unit_is_exposed(client, n, edges, n_t):
        g = InterferenceGraph(n=n, edges=edges)
        gamma = np.arange(1, n + 1, dtype=float)
        t = client.outcomes.linear_table(g, "binary", alpha=np.zeros(n), beta=2.0, gamma=gamma)
        d = CompletelyRandomizedDesign(n=n, n_t=n_t)
        assert client.analytic.bias_binary(d, g, gamma) == pytest.approx(0.0, abs=1e-12)
        report = client.analytic.bias_naive_general(t, d, g, "binary")
        assert report.oracle_value == pytest.approx(0.0, abs=1e-12)

    @staticmethod
    def test_isolated_units_contribute_nothing(client, empty4):
        assert client.analytic.bias_binary(BernoulliDesign(n=4, p=0.5), empty4, 3.0, 1.0) == 0.0
        assert client.analytic.bias_binary(CompletelyRandomizedDesign(n=4, n_t=2), empty4, 3.0, 1.0) == 0.0

    @staticmethod
    def test_bernoulli_form_understates_the_path_bias(client, path3):
        # one treated unit gives -2/3 and two give -1/3, each count with probability 1/2
        assert client.analytic.bias_binary(BernoulliDesign(n=3, p=0.5), path3, 1.0) == pytest.approx(-1 / 3)
        assert client.analytic.bias_binary(BernoulliDesign(n=3, p=0.5), path3, 1.0, exact=True) == pytest.approx(-0.5)
        t = client.outcomes.linear_table(path3, "binary", alpha=np.zeros(3), beta=1.0, gamma=1.0)
        assert _exact_bias(client, RestrictedBernoulliDesign(n=3, p=0.5), path3, "binary", t) == pytest.approx(-0.5)

    @staticmethod
    @pytest.mark.parametrize("p", [0.3, 0.5])
    def test_bernoulli_gap_stays_within_its_bound(client, corpus_graph, p):
        g = corpus_graph
        gamma = np.linspace(0.2, 1.2, g.n)
        theta = np.linspace(-0.5, 0.5, g.n)
        t = client.outcomes.linear_table(g, "binary", alpha=np.ones(g.n), beta=np.arange(g.n, dtype=float),
                                         gamma=gamma, theta=theta)
        d = BernoulliDesign(n=g.n, p=p)
        exact = client.analytic.bias_binary(d, g, gamma, theta, exact=True)
        assert exact == pytest.approx(
            _exact_bias(client, RestrictedBernoulliDesign(n=g.n, p=p), g, "binary", t), abs=1e-12)
        degrees = g.degrees.astype(float)
        closed_interference = degrees * (1 - p) ** degrees / (g.n - degrees)
        bound = (np.abs(gamma) * np.maximum(1.0, closed_interference)).sum() / g.n + np.abs(theta).sum() / g.n
        assert abs(client.analytic.bias_binary(d, g, gamma, theta) - exact) <= bound + 1e-12

    @staticmethod
    def test_unrestricted_bernoulli_monte_carlo_matches_the_conditional_bias(client):
        g = client.graphs.generate_graph({"family": "erdos_renyi", "p": 0.1}, n=30, seed=3)
        p = 0.3
        alpha = np.linspace(-1.0, 1.0, g.n)
        gamma = np.linspace(0.5, 1.5, g.n)
        theta = np.linspace(-0.5, 0.5, g.n)
        Z = client.designs.sample_many(BernoulliDesign(n=g.n, p=p), 5, 50_000).astype(float)
        treated = Z.sum(axis=1)
        defined = (treated > 0) & (treated < g.n)
        Z, treated = Z[defined], treated[defined]
        E = client.exposures.expose_many("binary", g, Z.astype(np.int8)).astype(float)
        Y = alpha + 2.0 * Z + gamma * E + theta * Z * E
        naive = (Y * Z).sum(axis=1) / treated - (Y * (1 - Z)).sum(axis=1) / (g.n - treated)
        errors = naive - 2.0
        expected = client.analytic.bias_binary(BernoulliDesign(n=g.n, p=p), g, gamma, theta, exact=True)
        assert abs(errors.mean() - expected) < 3 * errors.std(ddof=1) / np.sqrt(len(errors))

    @staticmethod
    def test_cluster_designs_are_not_covered(client, path6):
        with pytest.raises(FeatureNotSupportedError):
            client.analytic.bias_binary(ClusterDesign(partition=[0, 0, 1, 1, 2, 2], K_t=1), path6, 1.0)

    @staticmethod
    def test_sweep(client, path6):
        frame = client.analytic.bias_sweep(path6, n_t=[1, 3, 5], gamma=[0.0, 1.0], theta=0.5)
        assert frame.columns.tolist() == ["n_t", "gamma", "theta", "bias"]
        assert len(frame) == 6
        row = frame[(frame.n_t == 3) & (frame.gamma == 1.0)].iloc[0]
        assert row["bias"] == pytest.approx(
            client.analytic.bias_binary(CompletelyRandomizedDesign(n=6, n_t=3), path6, 1.0, 0.5))


class TestGeneralDecomposition:

    @staticmethod
    @pytest.mark.parametrize("target", [Estimand.DTE, Estimand.TTE])
    @pytest.mark.parametrize("design", [
        CompletelyRandomizedDesign(n=6, n_t=2),
        RestrictedBernoulliDesign(n=6, p=0.4),
        BernoulliDesign(n=6, p=0.5),
    ])
    def test_terms_add_up_to_the_exact_bias(client, path6, target, design):
        t = client.outcomes.linear_table(path6, "symmetric", alpha=np.arange(6, dtype=float), beta=2.0,
                                         gamma=0.5, theta=0.25)
        report = client.analytic.bias_naive_general(t, design, path6, "symmetric", target=target)
        assert report.agrees
        assert report.analytic_value == pytest.approx(sum(report.decomposition.values()))
        if isinstance(design, CompletelyRandomizedDesign):
            assert report.note is None
        if isinstance(design, BernoulliDesign):
            assert "non-empty treatment arm" in report.note

    @staticmethod
    def test_additive_table_has_no_c_term(client, path6):
        t = client.outcomes.linear_table(path6, "symmetric", alpha=1.0, beta=2.0, gamma=0.5)
        report = client.analytic.bias_naive_general(t, CompletelyRandomizedDesign(n=6, n_t=3), path6, "symmetric")
        assert report.decomposition["c_term"] == 0.0
        assert report.decomposition["a_term"] == pytest.approx(0.0, abs=1e-12)

    @staticmethod
    def test_oracle_can_be_skipped(client, path6):
        t = client.outcomes.linear_table(path6, "binary", alpha=1.0, beta=2.0, gamma=0.5)
        report = client.analytic.bias_naive_general(t, CompletelyRandomizedDesign(n=6, n_t=3), path6, "binary",
                                                    oracle=False)
        assert report.oracle_value is None
        assert report.agrees is None

    @staticmethod
    def test_interference_effects_are_not_decomposed(client, path6):
        t = client.outcomes.linear_table(path6, "binary", alpha=1.0, beta=2.0, gamma=0.5)
        with pytest.raises(FeatureNotSupportedError):
            client.analytic.bias_naive_general(t, CompletelyRandomizedDesign(n=6, n_t=3), path6, "binary",
                                               target=Estimand.GAMMA1)


def test_cell_difference_in_means(client, path6):
    t = client.outcomes.linear_table(path6, "symmetric", alpha=np.arange(6, dtype=float), beta=2.0,
                                     gamma=0.5, theta=0.25)
    report = client.analytic.expected_cell_dim(t, CompletelyRandomizedDesign(n=6, n_t=3), path6, "symmetric",
                                               Estimand.TTE)
    assert report.analytic_value == pytest.approx(report.oracle_value, abs=1e-10)


class TestClusterBias:

    @staticmethod
    def _table(client, g, theta=0.0):
        return client.outcomes.linear_table(g, "symmetric", alpha=np.arange(g.n, dtype=float),
                                            beta=1.0 + 0.1 * np.arange(g.n), gamma=0.5, theta=theta)

    def test_moment_form_is_exact(self, client, path6):
        d = ClusterDesign(partition=[0, 0, 1, 1, 2, 2], K_t=1)
        report = client.analytic.bias_cluster_linear(d, path6, self._table(client, path6))
        assert report.corrected_agrees
        assert report.oracle_value == pytest.approx(_exact_bias(client, d, path6, "symmetric",
                                                                self._table(client, path6)), abs=1e-12)
        assert len(report.decomposition["c_k"]) == 3
        assert report.note is None

    def test_sampled_moments(self, path6):
        d = ClusterDesign(partition=[0, 0, 1, 1, 2, 2], K_t=1)
        service = AnalyticService(enumeration_cap=2, mc_samples=4000)
        report = service.bias_cluster_linear(d, path6, self._table(service, path6), seed=0)
        assert report.oracle_value is None
        assert "4000" in report.note

    def test_needs_the_linear_model(self, client, path6):
        d = ClusterDesign(partition=[0, 0, 1, 1, 2, 2], K_t=1)
        with pytest.raises(FeatureNotSupportedError):
            client.analytic.bias_cluster_linear(d, path6, self._table(client, path6, theta=0.3))

    def test_needs_a_cluster_design(self, client, path6):
        with pytest.raises(InterferenceRequestError, match="cluster design"):
            client.analytic.bias_cluster_linear(CompletelyRandomizedDesign(n=6, n_t=3), path6,
                                                self._table(client, path6))


class TestHorvitzThompsonVariance:

    @staticmethod
    @pytest.mark.parametrize("model", ["binary", "symmetric"])
    @pytest.mark.parametrize("target", [Estimand.DTE, Estimand.TTE])
    def test_matches_enumeration(client, path6, model, target):
        d = CompletelyRandomizedDesign(n=6, n_t=3)
        t = client.outcomes.linear_table(path6, model, alpha=1.0 + np.arange(6), beta=2.0, gamma=0.5, theta=0.25)
        pi, joint = client.propensity.enumerated_propensity(d, path6, model)
        resolved = client.exposures.resolve_contrast(target, model, path6)
        closed = client.analytic.var_ht(t, resolved, pi, joint)
        exact = client.harness.exact_expectation(d, path6, model, t, "ht", target, pi=pi)
        assert exact.undefined_mass == 0.0
        assert closed == pytest.approx(exact.variance, abs=1e-10)

    @staticmethod
    def test_needs_joint_propensities(client, path6):
        d = CompletelyRandomizedDesign(n=6, n_t=3)
        t = client.outcomes.linear_table(path6, "binary", alpha=1.0, beta=2.0, gamma=0.5)
        pi = client.propensity.propensities(d, path6, "binary")
        resolved = client.exposures.resolve_contrast(Estimand.DTE, "binary", path6)
        with pytest.raises(InterferenceRequestError, match="joint propensities"):
            client.analytic.var_ht(t, resolved, pi, None)


class TestNaiveVariance:

    @staticmethod
    def test_pair_moments(client):
        assert client.analytic.crd_pair_moments(5, 2) == pytest.approx((0.4, 0.1, 0.0, 0.0))
        assert client.analytic.crd_pair_moments(6, 3) == pytest.approx((0.5, 0.2, 0.05, 0.0))

    @staticmethod
    def test_edge_and_degree_moments(client, corpus_graph):
        g = corpus_graph
        edges = g.edges
        degrees = g.degrees.astype(float)
        n_t = g.n // 2
        T, D = [], []
        for treated in combinations(range(g.n), n_t):
            z = np.zeros(g.n)
            z[list(treated)] = 1.0
            T.append(sum(z[a] * z[b] for a, b in edges))
            D.append(degrees @ z)
        T, D = np.array(T), np.array(D)
        assert client.analytic.var_treated_edges(g, n_t) == pytest.approx(T.var(), abs=1e-12)
        assert client.analytic.var_treated_degree(g, n_t) == pytest.approx(D.var(), abs=1e-12)
        assert client.analytic.cov_treated_edges_degree(g, n_t) == pytest.approx(
            (T * D).mean() - T.mean() * D.mean(), abs=1e-12)

    @staticmethod
    def test_linear_model_variance_is_exact(client, corpus_graph):
        g = corpus_graph
        t = client.outcomes.linear_table(g, "symmetric", alpha=1.0, beta=2.0, gamma=0.8)
        for d in _crd_designs(g):
            exact = client.harness.exact_expectation(d, g, "symmetric", t, "naive").variance
            assert client.analytic.var_naive_linear_crd_exact(g, d.n_t, 0.8, 0.0) == pytest.approx(exact, abs=1e-10)

    @staticmethod
    def test_noise_term(client, empty4):
        assert client.analytic.var_naive_linear_crd_exact(empty4, 2, 1.0, 3.0) == pytest.approx(3.0)
        assert client.analytic.var_naive_linear_crd(empty4, 2, 1.0, 3.0) == pytest.approx(3.0)

    @staticmethod
    def test_four_constants_need_more_units(client, path3):
        with pytest.raises(InterferenceRequestError, match="n > 3"):
            client.analytic.var_naive_linear_crd(path3, 1, 1.0, 1.0)

    @staticmethod
    def test_binary_quadratic_form(client, path6):
        t = client.outcomes.linear_table(path6, "binary", alpha=1.0 + 0.3 * np.arange(6), beta=2.0,
                                         gamma=np.linspace(0.5, 1.5, 6))
        report = client.analytic.var_naive_binary(path6, CompletelyRandomizedDesign(n=6, n_t=3), t)
        assert report.moment_source == "enumerate"
        assert report.derived_agrees

    @staticmethod
    def test_binary_variance_matches_monte_carlo(client):
        g = InterferenceGraph(n=12, edges=[(i, (i + 1) % 12) for i in range(12)] + [(0, 6), (3, 9)])
        alpha = np.linspace(0.0, 2.0, 12)
        gamma = np.linspace(0.5, 1.5, 12)
        t = client.outcomes.linear_table(g, "binary", alpha=alpha, beta=2.0, gamma=gamma)
        d = CompletelyRandomizedDesign(n=12, n_t=5)
        exact = client.analytic.var_naive_binary(g, d, t)
        assert exact.derived_agrees

        Z = client.designs.sample_many(d, 9, 40_000)
        E = client.exposures.expose_many("binary", g, Z).astype(float)
        Z = Z.astype(float)
        Y = alpha + 2.0 * Z + gamma * E
        naive = (Y * Z).sum(axis=1) / 5 - (Y * (1 - Z)).sum(axis=1) / 7
        spread = (naive - naive.mean()) ** 2
        se = spread.std(ddof=1) / np.sqrt(len(naive))
        assert abs(naive.var(ddof=1) - exact.derived_value) < 3 * se

        sampled = client.analytic.var_naive_binary(g, d, t, moment_source="mc", samples=40_000, seed=9)
        assert sampled.moment_source == "mc"
        assert sampled.derived_value == pytest.approx(naive.var(), rel=1e-6)

    @staticmethod
    def test_binary_variance_preconditions(client, path6):
        t = client.outcomes.linear_table(path6, "binary", alpha=1.0, beta=np.arange(6, dtype=float), gamma=0.5)
        with pytest.raises(InterferenceRequestError, match="common beta"):
            client.analytic.var_naive_binary(path6, CompletelyRandomizedDesign(n=6, n_t=3), t)
        additive = client.outcomes.linear_table(path6, "binary", alpha=1.0, beta=1.0, gamma=0.5)
        with pytest.raises(FeatureNotSupportedError):
            client.analytic.var_naive_binary(path6, BernoulliDesign(n=6, p=0.5), additive)
        with pytest.raises(InterferenceRequestError, match="enumerate or mc"):
            client.analytic.var_naive_binary(path6, CompletelyRandomizedDesign(n=6, n_t=3), additive,
                                             moment_source="bootstrap")


class TestShrinkage:

    @staticmethod
    def test_shrinking_beats_horvitz_thompson(client, path6):
        d = CompletelyRandomizedDesign(n=6, n_t=3)
        t = client.outcomes.linear_table(path6, "symmetric", alpha=1.0 + np.arange(6), beta=2.0, gamma=0.5)
        assert client.designs.is_non_constant(d, path6, "symmetric", Estimand.DTE.contrast())
        report = client.analytic.ht_shrinkage(d, path6, "symmetric", t)
        assert report.ht_mean == pytest.approx(report.estimand, abs=1e-10)
        assert report.ht_mse == pytest.approx(report.ht_variance, abs=1e-10)
        assert report.improves
        assert 0.0 < report.best_k < 1.0
        assert report.best_mse < report.ht_mse

    @staticmethod
    def test_custom_grid(client, path6):
        d = CompletelyRandomizedDesign(n=6, n_t=3)
        t = client.outcomes.linear_table(path6, "symmetric", alpha=1.0, beta=2.0, gamma=0.5)
        report = client.analytic.ht_shrinkage(d, path6, "symmetric", t, grid=[0.0, 0.5])
        assert report.grid.tolist() == [0.0, 0.5]
        assert report.mse[0] == pytest.approx(report.ht_mse)
