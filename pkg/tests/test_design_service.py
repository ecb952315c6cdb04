import math

import numpy as np
import pytest
from scipy import stats

from interference_lab.errors import (InterferenceRequestError,
                                     ObjectFormationError,
                                     RerandomizationError,
                                     SupportTooLargeError)
from interference_lab.models.designs import (BernoulliDesign, ClusterDesign,
                                             CompletelyRandomizedDesign,
                                             DesignParser, ExplicitDesign,
                                             IndependentSetDesign,
                                             RerandomizedDesign,
                                             RestrictedBernoulliDesign)
from interference_lab.models.estimates import Estimand
from interference_lab.models.graphs import InterferenceGraph
from interference_lab.service import DesignService


def _is_independent(g, units):
    return not any(g.has_edge(i, j) for i in units for j in units if i < j)


class TestSampling:

    @staticmethod
    def test_complete_randomization_treats_n_t(client):
        d = CompletelyRandomizedDesign(n=10, n_t=4)
        assert client.designs.sample(d, 1).sum() == 4
        Z = client.designs.sample_many(d, 1, 200)
        assert Z.shape == (200, 10)
        assert (Z.sum(axis=1) == 4).all()

    @staticmethod
    def test_sampling_is_reproducible(client):
        d = BernoulliDesign(n=30, p=0.3)
        assert (client.designs.sample_many(d, 5, 10) == client.designs.sample_many(d, 5, 10)).all()

    @staticmethod
    def test_restricted_bernoulli_never_constant(client):
        d = RestrictedBernoulliDesign(n=3, p=0.1)
        Z = client.designs.sample_many(d, 2, 300)
        assert ((Z.sum(axis=1) > 0) & (Z.sum(axis=1) < 3)).all()

    @staticmethod
    def test_cluster_units_move_together(client):
        d = ClusterDesign(partition=[0, 0, 1, 1, 2, 2], K_t=1)
        for z in client.designs.sample_many(d, 4, 50):
            assert z[0] == z[1] and z[2] == z[3] and z[4] == z[5]
            assert z.sum() == 2

    @staticmethod
    def test_independent_set_treats_egos_only(client, path6):
        d = IndependentSetDesign(graph=path6, k_t=2)
        for z in client.designs.sample_many(d, 7, 50):
            treated = np.flatnonzero(z)
            assert len(treated) == 2
            assert _is_independent(path6, treated)

    @staticmethod
    def test_explicit_point_mass(client):
        d = ExplicitDesign.point_mass([1, 0, 1])
        assert client.designs.sample(d, 0).tolist() == [1, 0, 1]

    @staticmethod
    def test_rerandomization_gives_up(client, path6):
        base = CompletelyRandomizedDesign(n=6, n_t=3)
        d = RerandomizedDesign(base=base, graph=path6, exposure_model="binary",
                               min_counts={"(1,0)": 4}, max_tries=5)
        with pytest.raises(RerandomizationError, match="after 5 draws"):
            client.designs.sample(d, 0)

    @staticmethod
    def test_rerandomization_reports_hits_per_cell(client, path6):
        base = CompletelyRandomizedDesign(n=6, n_t=3)
        d = RerandomizedDesign(base=base, graph=path6, exposure_model="binary",
                               min_counts={(1, 0): 4, (0, 1): 0}, max_tries=5)
        with pytest.raises(RerandomizationError) as e:
            client.designs.sample(d, 0)
        assert e.value.tries == 5
        assert e.value.cell_hits == {(1, 0): 0, (0, 1): 5}
        assert "(1, 0): 0/5" in str(e.value)


class TestEnumeration:

    @staticmethod
    @pytest.mark.parametrize("design, size", [
        (CompletelyRandomizedDesign(n=6, n_t=3), 20),
        (BernoulliDesign(n=5, p=0.5), 32),
        (RestrictedBernoulliDesign(n=5, p=0.5), 30),
        (ClusterDesign(partition=[0, 0, 1, 1, 2, 2, 3], K_t=2), 6),
    ])
    def test_support_sizes(client, design, size):
        support = client.designs.enumerate_support(design)
        assert len(support) == size
        assert design.support_size == size
        assert support.total_mass == pytest.approx(1.0)

    @staticmethod
    def test_bernoulli_probabilities(client):
        support = client.designs.enumerate_support(BernoulliDesign(n=3, p=0.2))
        for z, p in support:
            k = int(z.sum())
            assert p == pytest.approx(0.2 ** k * 0.8 ** (3 - k))

    @staticmethod
    def test_restricted_bernoulli_renormalises(client):
        d = RestrictedBernoulliDesign(n=3, p=0.2)
        support = client.designs.enumerate_support(d)
        for z, p in support:
            k = int(z.sum())
            assert 0 < k < 3
            assert p == pytest.approx(0.2 ** k * 0.8 ** (3 - k) / d.normalizer)

    @staticmethod
    def test_two_units(client):
        support = client.designs.enumerate_support(RestrictedBernoulliDesign(n=2, p=0.5))
        assert sorted((tuple(z.tolist()), p) for z, p in support) == [((0, 1), 0.5), ((1, 0), 0.5)]

    @staticmethod
    def test_enumeration_cap():
        designs = DesignService(enumeration_cap=10)
        with pytest.raises(SupportTooLargeError) as e:
            designs.enumerate_support(CompletelyRandomizedDesign(n=6, n_t=3))
        assert e.value.size == 20
        assert e.value.cap == 10
        assert isinstance(e.value, InterferenceRequestError)

    @staticmethod
    def test_independent_set_support(client, path3):
        support = client.designs.enumerate_support(IndependentSetDesign(graph=path3, k_t=1))
        points = {tuple(z.tolist()): p for z, p in support}
        assert points == {
            (0, 0, 1): pytest.approx(1 / 3),
            (0, 1, 0): pytest.approx(1 / 3),
            (1, 0, 0): pytest.approx(1 / 3),
        }

    @staticmethod
    def test_independent_set_with_too_few_egos(client, path3):
        support = client.designs.enumerate_support(IndependentSetDesign(graph=path3, k_t=2))
        points = {tuple(z.tolist()): p for z, p in support}
        assert points == {(0, 1, 0): pytest.approx(1 / 3), (1, 0, 1): pytest.approx(2 / 3)}

    @staticmethod
    def test_rerandomized_support(client, path6):
        base = CompletelyRandomizedDesign(n=6, n_t=3)
        d = RerandomizedDesign(base=base, graph=path6, exposure_model="binary",
                               min_counts={(1, 0): 1, (0, 0): 1})
        support = client.designs.enumerate_support(d)
        assert 0 < len(support) < 20
        assert support.total_mass == pytest.approx(1.0)
        E = client.exposures.expose_many("binary", path6, support.assignments)
        Z = support.assignments
        assert (((Z == 1) & (E == 0)).sum(axis=1) >= 1).all()
        assert (((Z == 0) & (E == 0)).sum(axis=1) >= 1).all()

    @staticmethod
    def test_impossible_rerandomization(client, path6):
        base = CompletelyRandomizedDesign(n=6, n_t=3)
        d = RerandomizedDesign(base=base, graph=path6, exposure_model="binary", min_counts={(1, 0): 4})
        with pytest.raises(RerandomizationError):
            client.designs.enumerate_support(d)

    @staticmethod
    def test_impossible_rerandomization_counts_support_points(client, path6):
        base = CompletelyRandomizedDesign(n=6, n_t=3)
        d = RerandomizedDesign(base=base, graph=path6, exposure_model="binary", min_counts={(1, 0): 4})
        with pytest.raises(RerandomizationError) as e:
            client.designs.enumerate_support(d)
        assert e.value.tries == 20
        assert e.value.cell_hits == {(1, 0): 0}


class TestSamplerMatchesSupport:

    @staticmethod
    @pytest.mark.parametrize("build", [
        lambda g: CompletelyRandomizedDesign(n=6, n_t=3),
        lambda g: BernoulliDesign(n=6, p=0.5),
        lambda g: RestrictedBernoulliDesign(n=6, p=0.5),
        lambda g: ClusterDesign(partition=[0, 0, 1, 1, 2, 2], K_t=1),
        lambda g: IndependentSetDesign(graph=g, k_t=2),
        lambda g: IndependentSetDesign(graph=g, k_t=2, ego_mix_p=0.5),
        lambda g: RerandomizedDesign(base=CompletelyRandomizedDesign(n=6, n_t=3), graph=g, exposure_model="binary",
                                     min_counts={(1, 0): 1, (0, 0): 1}),
    ], ids=["crd", "bernoulli", "restricted_bernoulli", "cluster", "independent_set", "independent_set_mixed",
            "rerandomized"])
    def test_sampled_frequencies_follow_the_support(client, path6, build):
        d = build(path6)
        draws = 4000
        support = client.designs.enumerate_support(d)
        index = {z.tobytes(): s for s, z in enumerate(support.assignments)}
        rows = [index.get(z.tobytes(), -1) for z in client.designs.sample_many(d, 11, draws)]
        assert -1 not in rows
        observed = np.bincount(rows, minlength=len(support)).astype(float)
        expected = draws * support.probabilities
        sparse = expected < 5
        if sparse.any():
            observed = np.append(observed[~sparse], observed[sparse].sum())
            expected = np.append(expected[~sparse], expected[sparse].sum())
        assert stats.chisquare(observed, expected).pvalue > 1e-4


class TestIndependentSets:

    @staticmethod
    def test_ego_distribution_uniform_picks(client, path3):
        distribution = client.designs.ego_set_distribution(path3, 1.0)
        assert distribution == {frozenset({1}): pytest.approx(1 / 3), frozenset({0, 2}): pytest.approx(2 / 3)}

    @staticmethod
    def test_ego_distribution_smallest_degree(client, path3):
        assert client.designs.ego_set_distribution(path3, 0.0) == {frozenset({0, 2}): pytest.approx(1.0)}

    @staticmethod
    def test_ego_distribution_sums_to_one(client, corpus_graph):
        distribution = client.designs.ego_set_distribution(corpus_graph, 0.5)
        assert sum(distribution.values()) == pytest.approx(1.0)
        for egos in distribution:
            assert _is_independent(corpus_graph, egos)

    @staticmethod
    @pytest.mark.parametrize("mix_p", [0.0, 0.5, 1.0])
    def test_greedy_set_is_maximal(client, corpus_graph, mix_p):
        egos, alters = client.designs.greedy_independent_set(corpus_graph, 3, mix_p)
        assert egos | alters == frozenset(range(corpus_graph.n))
        assert not egos & alters
        assert _is_independent(corpus_graph, egos)
        for v in alters:
            assert any(corpus_graph.has_edge(v, u) for u in egos)

    @staticmethod
    def test_ego_probabilities(client, path3):
        exact = client.designs.ego_probabilities(path3, 1.0)
        assert exact.tolist() == pytest.approx([2 / 3, 1 / 3, 2 / 3])
        sampled = client.designs.ego_probabilities(path3, 1.0, method="monte_carlo", seed=0, samples=4000)
        assert sampled == pytest.approx(exact, abs=0.05)

    @staticmethod
    def test_complete_graph_has_one_ego(client):
        g = InterferenceGraph(n=5, edges=[(i, j) for i in range(5) for j in range(i + 1, 5)])
        distribution = client.designs.ego_set_distribution(g, 0.5)
        assert distribution == {frozenset({v}): pytest.approx(0.2) for v in range(5)}
        egos, _ = client.designs.greedy_independent_set(g, 0)
        assert len(egos) == 1

    @staticmethod
    def test_every_isolated_unit_is_an_ego(client, empty4):
        assert client.designs.ego_set_distribution(empty4) == {frozenset(range(4)): pytest.approx(1.0)}


class TestPartitions:

    @staticmethod
    def test_balanced_partition(client, path6):
        labels = client.designs.greedy_partition(path6, 3, seed=0)
        assert sorted(np.bincount(labels).tolist()) == [2, 2, 2]

    @staticmethod
    def test_uneven_partition(client, corpus_graph):
        labels = client.designs.greedy_partition(corpus_graph, 4, seed=1)
        sizes = np.bincount(labels, minlength=4)
        assert (labels >= 0).all()
        assert sizes.max() - sizes.min() <= 1

    @staticmethod
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_components_become_clusters(client, seed):
        g = InterferenceGraph(n=6, edges=[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)])
        labels = client.designs.greedy_partition(g, 2, seed=seed)
        clusters = {frozenset(np.flatnonzero(labels == k).tolist()) for k in range(2)}
        assert clusters == {frozenset({0, 1, 2}), frozenset({3, 4, 5})}

    @staticmethod
    def test_partition_file(client, tmp_path):
        path = str(tmp_path / "partition.txt")
        client.designs.write_partition([2, 0, 1, 2], path)
        assert client.designs.read_partition(path).tolist() == [2, 0, 1, 2]

    @staticmethod
    def test_partition_file_missing_unit(client, tmp_path):
        path = tmp_path / "partition.txt"
        path.write_text("0 0\n2 1\n")
        with pytest.raises(InterferenceRequestError, match="exactly once"):
            client.designs.read_partition(str(path))

    @staticmethod
    def test_cluster_labels_are_renumbered():
        d = ClusterDesign(partition=[7, 7, 3, 9], K_t=1)
        assert d.partition.tolist() == [1, 1, 0, 2]
        assert d.K == 3
        assert d.cluster_sizes.tolist() == [1, 2, 1]
        assert d.clusters == ((2,), (0, 1), (3,))


class TestChecks:

    @staticmethod
    def test_positivity_failure_on_the_middle_unit(client, path3):
        d = CompletelyRandomizedDesign(n=3, n_t=1)
        report = client.designs.positivity_check(d, path3, "binary", [(1, 0), (0, 0)])
        assert not report.ok
        assert report.failing_units.tolist() == [1]
        (unit, cell, pi), = report.failures
        assert (unit, cell) == (1, (0, 0))
        assert pi == pytest.approx(0.0)

    @staticmethod
    def test_positivity_unresolvable_cell(client, empty4):
        d = CompletelyRandomizedDesign(n=4, n_t=2)
        report = client.designs.positivity_check(d, empty4, "symmetric", [(1, "exposed")])
        assert report.failing_units.tolist() == [0, 1, 2, 3]
        assert all(cell == (1, -1) for _, cell, _ in report.failures)

    @staticmethod
    def test_positivity_passes(client, path6):
        report = client.designs.positivity_check(BernoulliDesign(n=6, p=0.5), path6, "symmetric",
                                                 [(1, "exposed"), (0, 0)])
        assert report.ok
        assert bool(report)

    @staticmethod
    def test_cluster_neighbours_block_isolation(client, path6):
        d = ClusterDesign(partition=[0, 0, 1, 2, 1, 2], K_t=1)
        report = client.designs.positivity_check(d, path6, "binary", [(1, 0)])
        assert report.failing_units.tolist() == [0, 1]

    @staticmethod
    def test_star_center_cannot_be_isolated(client, star5):
        d = CompletelyRandomizedDesign(n=5, n_t=2)
        report = client.designs.positivity_check(d, star5, "symmetric", [(1, 0), (0, 0)])
        assert report.failing_units.tolist() == [0]
        assert sorted(cell for _, cell, _ in report.failures) == [(0, 0), (1, 0)]

    @staticmethod
    def test_no_interference_passes(client, empty4):
        report = client.designs.positivity_check(CompletelyRandomizedDesign(n=4, n_t=2), empty4, "binary",
                                                 [(1, 0), (0, 0)])
        assert report.ok

    @staticmethod
    def test_non_constant_cells(client, path6, empty4):
        assert client.designs.is_non_constant(CompletelyRandomizedDesign(n=6, n_t=3), path6, "binary", Estimand.DTE)
        assert not client.designs.is_non_constant(CompletelyRandomizedDesign(n=4, n_t=2), empty4, "binary",
                                                  Estimand.DTE)

    @staticmethod
    def test_sampled_non_constant_check_is_reproducible(path6, monkeypatch):
        service = DesignService(enumeration_cap=4, mc_samples=25)
        draws = []
        sample_many = service.sample_many

        def recording(d, seed, count):
            Z = sample_many(d, seed, count)
            draws.append(Z)
            return Z

        monkeypatch.setattr(service, "sample_many", recording)
        d = CompletelyRandomizedDesign(n=6, n_t=3)
        assert service.is_non_constant(d, path6, "binary", Estimand.DTE)
        assert service.is_non_constant(d, path6, "binary", Estimand.DTE)
        assert len(draws) == 2
        np.testing.assert_array_equal(draws[0], draws[1])


class TestDesignModels:

    @staticmethod
    @pytest.mark.parametrize("n_t", [0, 6])
    def test_complete_randomization_needs_both_arms(n_t):
        with pytest.raises(InterferenceRequestError):
            CompletelyRandomizedDesign(n=6, n_t=n_t)

    @staticmethod
    def test_bernoulli_probability_is_open():
        with pytest.raises(InterferenceRequestError):
            BernoulliDesign(n=4, p=1.0)

    @staticmethod
    def test_explicit_mass_must_sum_to_one():
        with pytest.raises(ObjectFormationError, match="sum to 1"):
            ExplicitDesign(support=[([1, 0], 0.5), ([0, 1], 0.4)])

    @staticmethod
    def test_explicit_duplicates_merge():
        d = ExplicitDesign(support=[([1, 0], 0.25), ([0, 1], 0.5), ([1, 0], 0.25)])
        assert d.support == [((0, 1), 0.5), ((1, 0), 0.5)]

    @staticmethod
    def test_labels():
        assert CompletelyRandomizedDesign(n=6, n_t=3).label == "crd(3)"
        assert ClusterDesign(partition=[0, 1, 2], K_t=1).label == "cluster(1/3)"
        assert RestrictedBernoulliDesign(n=4, p=0.5).label == "restricted_bernoulli(0.5)"
        assert math.isclose(RestrictedBernoulliDesign(n=2, p=0.5).normalizer, 0.5)


class TestDesignParser:

    @staticmethod
    def test_complete_randomization(path6):
        d = DesignParser.parse({"type": "crd", "n_t": 2}, graph=path6)
        assert isinstance(d, CompletelyRandomizedDesign)
        assert d.n == 6 and d.n_t == 2

    @staticmethod
    def test_cluster_needs_a_partition(path6):
        with pytest.raises(InterferenceRequestError, match="partition"):
            DesignParser.parse({"type": "cluster", "K": 3, "K_t": 1}, graph=path6)

    @staticmethod
    def test_cluster_partition_must_cover_the_graph(path6):
        with pytest.raises(InterferenceRequestError, match="clusters.txt labels 4 units but the graph has 6"):
            DesignParser.parse({"type": "cluster", "partition_file": "clusters.txt", "K_t": 1},
                               graph=path6, partition=[0, 0, 1, 1])

    @staticmethod
    def test_rerandomized_wraps_its_base(path6):
        d = DesignParser.parse(
            {"type": "rerandomized", "base": {"type": "bernoulli", "p": 0.5}, "min_counts": {"(1, exposed)": 1}},
            graph=path6, exposure_model="symmetric")
        assert isinstance(d.base, BernoulliDesign)
        assert d.min_counts == {(1, "exposed"): 1}
        assert d.label == "rerandomized(bernoulli(0.5))"

    @staticmethod
    def test_unknown_type(path6):
        with pytest.raises(InterferenceRequestError, match="unknown design type"):
            DesignParser.parse({"type": "stepped_wedge"}, graph=path6)
