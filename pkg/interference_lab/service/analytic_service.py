from __future__ import annotations

import itertools
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import stats
from scipy.special import comb

from interference_lab.errors import (FeatureNotSupportedError,
                                     InterferenceRequestError)
from interference_lab.models.designs import (BernoulliDesign, ClusterDesign,
                                             CompletelyRandomizedDesign,
                                             Design, RestrictedBernoulliDesign)
from interference_lab.models.estimates import (Contrast, Estimand,
                                               ResolvedContrast)
from interference_lab.models.exposures import ExposedLevel, ExposureModel
from interference_lab.models.graphs import InterferenceGraph
from interference_lab.models.outcomes import PotentialOutcomeTable
from interference_lab.models.propensities import (JointPropensityTable,
                                                  PropensityTable)
from interference_lab.models.reports import (BiasReport, ShrinkageReport,
                                             VarianceReport)

from .base import BaseService, RandomSource
from .design_service import DesignService
from .exposure_service import ExposureService
from .harness_service import HarnessService
from .outcome_service import OutcomeService
from .propensity_service import PropensityService

#: Default grid of shrinkage factors for :meth:`AnalyticService.ht_shrinkage`.
SHRINKAGE_GRID = np.linspace(0.01, 1.0, 100)


def _falling(a: int, k: int) -> float:
    """The falling factorial a (a-1) ... (a-k+1)."""
    return float(np.prod([a - j for j in range(k)])) if k > 0 else 1.0


class AnalyticService(BaseService):
    """
    Closed-form bias and variance expressions for difference-in-means and
    Horvitz-Thompson estimators, each paired with the enumeration oracle.

    Where a stated expression is not exact, the report carries both the
    stated value and an exact assembly of the same quantities.
    """

    @property
    def designs(self) -> DesignService:
        return self._new_service(DesignService)

    @property
    def exposures(self) -> ExposureService:
        return self._new_service(ExposureService)

    @property
    def outcomes(self) -> OutcomeService:
        return self._new_service(OutcomeService)

    @property
    def propensity(self) -> PropensityService:
        return self._new_service(PropensityService)

    @property
    def harness(self) -> HarnessService:
        return self._new_service(HarnessService)

    def _oracle(self, d: Design, g, model, t, estimator: str, contrast, exposed_level) -> Optional[float]:
        if d.support_size > self.enumeration_cap:
            return None
        return self.harness.exact_expectation(d, g, model, t, estimator, contrast, exposed_level).expectation

    # bias of difference in means

    def expected_cell_dim(
        self,
        t: PotentialOutcomeTable,
        d: Design,
        g: InterferenceGraph,
        model: Union[str, ExposureModel],
        contrast: Union[Contrast, Estimand],
        exposed_level: Union[str, ExposedLevel] = ExposedLevel.FULL,
    ) -> BiasReport:
        """
        E[cell difference in means] = sum_i Y_i(tau1) w_i(tau1) - Y_i(tau0) w_i(tau0)
        with the cell-denominator weights, reported as a bias against the contrast.
        """
        resolved = self.exposures.resolve_contrast(contrast, model, g, exposed_level, strict=False)
        weights = self.propensity.weighted_exposure_probs(d, g, model, kind="by_cell", contrast=resolved)
        y1 = self._cell_outcomes(t, resolved.z1, resolved.e1)
        y0 = self._cell_outcomes(t, resolved.z0, resolved.e0)
        expectation = float(y1 @ weights.tau1 - y0 @ weights.tau0)
        theta = float((y1 - y0)[resolved.resolved].mean())
        oracle = self._oracle(d, g, model, t, "dom", resolved, exposed_level)
        return BiasReport(analytic_value=expectation - theta, expectation=expectation,
                          oracle_value=None if oracle is None else oracle - theta,
                          tolerance=self.tolerance)

    @staticmethod
    def _cell_outcomes(t: PotentialOutcomeTable, z: np.ndarray, e: np.ndarray) -> np.ndarray:
        inside = e >= 0
        values = np.zeros(t.n)
        values[inside] = t.outcomes(z, np.where(inside, e, 0))[inside]
        return values

    def bias_naive_general(
        self,
        t: PotentialOutcomeTable,
        d: Design,
        g: InterferenceGraph,
        model: Union[str, ExposureModel],
        target: Union[str, Estimand] = Estimand.DTE,
        exposed_level: Union[str, ExposedLevel] = ExposedLevel.FULL,
        oracle: bool = True,
    ) -> BiasReport:
        """
        Bias of the treated-minus-control difference in means as three terms:

        * ``a_term``: sum_i A_i(1) (alpha_i(1) - 1/n) - A_i(0) (alpha_i(0) - 1/n)
        * ``b_term``: sum_i sum_{e >= 1} B_i(e) (alpha_i(1,e) - alpha_i(0,e))
        * ``c_term``: sum_i sum_{e >= 1} C_i(e) alpha_i(1,e)

        For TTE the B and C terms also subtract B_i(x_i)/n and C_i(x_i)/n at
        each unit's exposed level x_i.
        """
        target = Estimand.parse(target)
        if target not in (Estimand.DTE, Estimand.TTE):
            raise FeatureNotSupportedError(f"naive bias decomposition for {target}")
        model = ExposureModel.parse(model)
        weights = self.propensity.weighted_exposure_probs(d, g, model)
        alpha = weights.values
        n = t.n
        width = min(alpha.shape[2], t.B.shape[1])
        a_term = float((t.A(1) * (weights.by_treatment(1) - 1.0 / n) - t.A(0) * (weights.by_treatment(0) - 1.0 / n)).sum())
        B = np.nan_to_num(t.B[:, 1:width])
        C = np.nan_to_num(t.C[:, 1:width])
        b_term = float((B * (alpha[:, 1, 1:width] - alpha[:, 0, 1:width])).sum())
        c_term = float((C * alpha[:, 1, 1:width]).sum())
        if target == Estimand.TTE:
            resolved = self.exposures.resolve_contrast(target, model, g, exposed_level)
            rows = np.arange(n)
            b_term -= float(t.B[rows, resolved.e1].sum()) / n
            c_term -= float(t.C[rows, resolved.e1].sum()) / n
        value = a_term + b_term + c_term

        oracle_value = None
        if oracle:
            expectation = self._oracle(d, g, model, t, "naive", target, exposed_level)
            if expectation is not None:
                theta = self.outcomes.true_estimand(t, target, g=g, model=model, exposed_level=exposed_level)
                oracle_value = expectation - theta
        return BiasReport(
            analytic_value=value, oracle_value=oracle_value, tolerance=self.tolerance,
            decomposition={"a_term": a_term, "b_term": b_term, "c_term": c_term},
            note=None if weights.defined_mass >= 1.0 else
            f"conditional on a non-empty treatment arm (probability {weights.defined_mass:.6g})")

    def bias_linear(self, d: Design, g: InterferenceGraph, gamma: float) -> float:
        """
        -gamma 2m / (n (n-1)) for complete randomization and restricted
        Bernoulli trials under the additive linear model B_i(e) = gamma e.
        """
        if not isinstance(d, (CompletelyRandomizedDesign, RestrictedBernoulliDesign)):
            raise FeatureNotSupportedError(f"the linear-model bias under {d.label}")
        n = g.n
        return -gamma * 2.0 * g.edge_count / (n * (n - 1))

    def bias_binary(self, d: Design, g: InterferenceGraph, gamma: Union[float, Sequence[float]],
                    theta: Union[float, Sequence[float]] = 0.0, exact: bool = False) -> float:
        """
        Closed-form bias of the difference in means under binary exposure with
        B_i(1) = gamma_i and C_i(1) = theta_i.

        The complete-randomization form is exact. The Bernoulli form treats
        the arm sizes as if they were not conditioned on being positive and
        is only an approximation: with arms near n p and n (1 - p) it
        understates the interference term by a factor of about 1 - p. With
        ``exact=True`` a Bernoulli design instead gets the bias conditional
        on both arms being non-empty, the complete-randomization form
        averaged over the binomial law of the treated count on 1..n-1.
        """
        n = g.n
        degrees = g.degrees.astype(float)
        gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (n,))
        theta = np.broadcast_to(np.asarray(theta, dtype=float), (n,))
        if isinstance(d, CompletelyRandomizedDesign):
            total = comb(n - 1, degrees)
            interference = comb(d.n_c - 1, degrees - 1) / total
            untouched = comb(d.n_c, degrees) / total
            return float(-(gamma * interference).sum() / n + (theta * (1.0 - untouched)).sum() / n)
        if isinstance(d, BernoulliDesign) and exact:
            counts = np.arange(1, n)
            weights = stats.binom.pmf(counts, n, d.p)
            biases = np.array([self.bias_binary(CompletelyRandomizedDesign(n=n, n_t=int(k)), g, gamma, theta)
                               for k in counts])
            return float(weights @ biases / weights.sum())
        if isinstance(d, BernoulliDesign):
            untouched = (1.0 - d.p) ** degrees
            return float(-(degrees * gamma * untouched / (n * (n - degrees))).sum()
                         + (theta * (1.0 / n - untouched / n)).sum())
        raise FeatureNotSupportedError(f"the binary-exposure bias under {d.label}")

    def bias_sweep(self, g: InterferenceGraph, n_t: Sequence[int], gamma: Sequence[float],
                   theta: float = 0.0) -> pd.DataFrame:
        """Binary-exposure CRD bias over a grid of treated counts and interference strengths."""
        rows = []
        for count in n_t:
            d = CompletelyRandomizedDesign(n=g.n, n_t=int(count))
            for strength in gamma:
                rows.append({"n_t": int(count), "gamma": float(strength), "theta": float(theta),
                             "bias": self.bias_binary(d, g, strength, theta)})
        return pd.DataFrame(rows, columns=["n_t", "gamma", "theta", "bias"])

    # cluster randomization

    @staticmethod
    def _linear_parameters(t: PotentialOutcomeTable) -> float:
        """The common slope gamma of a table with B_i(e) = gamma e and C_i = 0."""
        slopes = [t.B[i, 1] for i in range(t.n) if t.level_counts[i] > 1]
        gamma = float(slopes[0]) if slopes else 0.0
        for i in range(t.n):
            B, C = t.levels_of(i)
            e = np.arange(len(B))
            if not (np.allclose(B, gamma * e) and np.allclose(C, 0.0)):
                raise FeatureNotSupportedError("cluster bias outside the common-slope additive linear model")
        return gamma

    def _cluster_draws(self, d: ClusterDesign, samples: Optional[int],
                       seed: RandomSource) -> Tuple[np.ndarray, np.ndarray, bool]:
        if d.support_size <= self.enumeration_cap:
            Z = np.zeros((int(d.support_size), d.K))
            for s, treated in enumerate(itertools.combinations(range(d.K), d.K_t)):
                Z[s, list(treated)] = 1.0
            return Z, np.full(len(Z), 1.0 / len(Z)), True
        rng = self._rng(seed)
        samples = samples or self.mc_samples
        Z = (rng.random((samples, d.K)).argsort(axis=1).argsort(axis=1) < d.K_t).astype(float)
        return Z, np.full(samples, 1.0 / samples), False

    def bias_cluster_linear(self, d: ClusterDesign, g: InterferenceGraph, t: PotentialOutcomeTable,
                            samples: Optional[int] = None, seed: RandomSource = None) -> BiasReport:
        """
        Difference-in-means bias for DTE under cluster randomization and
        Y_i = alpha_i + beta_i z_i + gamma sum_j g_ij z_j.

        ``analytic_value`` is the cluster-covariance expression
        gamma - (K/K_t) sum_k mean(beta)_k n_k^2 c_k + (K/K_t) sum_k mean(alpha)_k n_k (d_k - c_k)
        with c_k = Cov(Z_k, Z_k/n_t) and d_k = Cov(1-Z_k, (1-Z_k)/n_c).
        ``corrected_value`` is the exact moment form
        sum_k A1_k E[Z_k/n_t] + gamma sum_kl G_kl E[Z_k Z_l/n_t]
        - sum_k A0_k E[(1-Z_k)/n_c] - gamma sum_kl G_kl E[(1-Z_k) Z_l/n_c] - DTE
        where G_kl counts edges between clusters k and l in both directions.
        """
        if not isinstance(d, ClusterDesign):
            raise InterferenceRequestError("bias_cluster_linear needs a cluster design")
        gamma = self._linear_parameters(t)
        K = d.K
        sizes = d.cluster_sizes.astype(float)
        member = np.zeros((g.n, K))
        member[np.arange(g.n), d.partition] = 1.0
        A1 = member.T @ (t.alpha + t.beta)
        A0 = member.T @ t.alpha
        G = member.T @ g.adjacency.toarray() @ member
        mean_alpha, mean_beta = A0 / sizes, (member.T @ t.beta) / sizes

        Z, p, exact = self._cluster_draws(d, samples, seed)
        n_t = Z @ sizes
        n_c = g.n - n_t
        m1 = p @ (Z / n_t[:, None])
        m0 = p @ ((1.0 - Z) / n_c[:, None])
        M1 = np.einsum("s,sk,sl->kl", p / n_t, Z, Z)
        M0 = np.einsum("s,sk,sl->kl", p / n_c, 1.0 - Z, Z)
        expectation = A1 @ m1 + gamma * (G * M1).sum() - A0 @ m0 - gamma * (G * M0).sum()
        dte = float(t.beta.mean())

        share_t, share_c = d.K_t / K, d.K_c / K
        c = m1 - share_t * m1
        dk = m0 - share_c * m0
        closed_form = gamma - (K / d.K_t) * (mean_beta * sizes ** 2 * c).sum() \
            + (K / d.K_t) * (mean_alpha * sizes * (dk - c)).sum()

        oracle = self._oracle(d, g, ExposureModel.SYMMETRIC, t, "naive", Estimand.DTE, ExposedLevel.FULL)
        return BiasReport(
            analytic_value=closed_form, corrected_value=expectation - dte, expectation=expectation,
            oracle_value=None if oracle is None else oracle - dte, tolerance=self.tolerance,
            decomposition={"c_k": c.tolist(), "d_k": dk.tolist()},
            note=None if exact else f"cluster moments from {len(Z)} Monte-Carlo draws")

    # variances

    def var_ht(self, t: PotentialOutcomeTable, contrast: ResolvedContrast, pi: PropensityTable,
               joint: Optional[JointPropensityTable]) -> float:
        """
        Design variance of the Horvitz-Thompson estimator from single and
        joint propensities. The cross term is
        -2 [sum_{i != j} Y_i(tau1) Y_j(tau0) pi_ij(tau1, tau0) / (pi_i(tau1) pi_j(tau0)) - sum_i sum_j Y_i(tau1) Y_j(tau0)].
        """
        if joint is None:
            raise InterferenceRequestError("the Horvitz-Thompson variance needs joint propensities")
        if not isinstance(contrast, ResolvedContrast):
            raise InterferenceRequestError("var_ht takes a contrast resolved per unit")
        n = t.n
        y1 = t.outcomes(contrast.z1, contrast.e1)
        y0 = t.outcomes(contrast.z0, contrast.e0)
        p1 = pi.cell(contrast.z1, contrast.e1)
        p0 = pi.cell(contrast.z0, contrast.e0)
        if (p1 <= 0).any() or (p0 <= 0).any():
            raise InterferenceRequestError("the Horvitz-Thompson variance needs positive propensities")
        off = ~np.eye(n, dtype=bool)

        def arm(y, p, z, e):
            pairs = joint.matrix(z, e, z, e)
            ratio = np.where(off, (pairs - np.outer(p, p)) / np.outer(p, p), 0.0)
            return float((y ** 2 * (1.0 - p) / p).sum() + y @ ratio @ y)

        cross_pairs = joint.matrix(contrast.z1, contrast.e1, contrast.z0, contrast.e0)
        cross = float(y1 @ np.where(off, cross_pairs / np.outer(p1, p0), 0.0) @ y0 - y1.sum() * y0.sum())
        total = arm(y1, p1, contrast.z1, contrast.e1) + arm(y0, p0, contrast.z0, contrast.e0) - 2.0 * cross
        return total / n ** 2

    @staticmethod
    def crd_pair_moments(n: int, n_t: int) -> Tuple[float, float, float, float]:
        """q_k = (n_t)_k / (n)_k: the probability that k given units are all treated."""
        return tuple(_falling(n_t, k) / _falling(n, k) for k in (1, 2, 3, 4))

    def var_treated_edges(self, g: InterferenceGraph, n_t: int) -> float:
        """Var of the number of edges with both ends treated under complete randomization."""
        q1, q2, q3, q4 = self.crd_pair_moments(g.n, n_t)
        m = g.edge_count
        paths = float((g.degrees * (g.degrees - 1)).sum())
        return m * q2 + paths * q3 + (m ** 2 - m - paths) * q4 - m ** 2 * q2 ** 2

    def var_treated_degree(self, g: InterferenceGraph, n_t: int) -> float:
        """Var of sum_i d_i z_i under complete randomization."""
        q1, q2, _, _ = self.crd_pair_moments(g.n, n_t)
        degrees = g.degrees.astype(float)
        squares = float((degrees ** 2).sum())
        return q1 * (1.0 - q1) * squares + (q2 - q1 ** 2) * (degrees.sum() ** 2 - squares)

    def cov_treated_edges_degree(self, g: InterferenceGraph, n_t: int) -> float:
        q1, q2, q3, _ = self.crd_pair_moments(g.n, n_t)
        m = g.edge_count
        squares = float((g.degrees.astype(float) ** 2).sum())
        return q2 * squares + q3 * (2 * m ** 2 - squares) - 2 * m ** 2 * q1 * q2

    def var_naive_linear_crd_exact(self, g: InterferenceGraph, n_t: int, gamma: float, sigma2: float) -> float:
        """
        Exact variance of the difference in means under complete randomization
        and Y_i = alpha + eps_i + beta z_i + gamma sum_j g_ij z_j with
        Var(eps_i) = sigma2: sigma2 (1/n_t + 1/n_c) + gamma^2 (n/(n_t n_c))^2 Var(2T - (n_t/n) D),
        T the treated-edge count and D = sum_i d_i z_i.
        """
        n = g.n
        n_c = n - n_t
        share = n_t / n
        spread = 4.0 * self.var_treated_edges(g, n_t) + share ** 2 * self.var_treated_degree(g, n_t) \
            - 4.0 * share * self.cov_treated_edges_degree(g, n_t)
        return sigma2 * (1.0 / n_t + 1.0 / n_c) + gamma ** 2 * (n / (n_t * n_c)) ** 2 * spread

    def var_naive_linear_crd(self, g: InterferenceGraph, n_t: int, gamma: float, sigma2: float) -> float:
        """
        The four-constant expression
        sigma2 (1/n_t + 1/n_c) + gamma^2 (c1 m + c2 m^2 + c3 sum d_i^2 + c4 sum_{i != j} d_i d_j).

        :raises InterferenceRequestError: for n <= 3
        """
        n = g.n
        if n <= 3:
            raise InterferenceRequestError("the linear-model variance constants need n > 3")
        n_c = n - n_t
        m = g.edge_count
        degrees = g.degrees.astype(float)
        squares = float((degrees ** 2).sum())
        cross = float(degrees.sum() ** 2 - squares)
        c1 = 4 * n / ((n - 1) * (n - 2) * (n - 3)) * (1 - 1 / n_t) * (1 - 1 / n_c)
        c2 = 8 * (n_t - 1) * (6 * n_t - 3 * n + 3 * n ** 2 - 5 * n * n_t) \
            / (n * (n - 1) ** 2 * (n - 2) * (n - 3) * n_t * n_c)
        c3 = 4 * n * (n_t - 1) * (n_t - 2) / (n_t * n_c * (n - 1) * (n - 2) * (n - 3)) \
            + n_t / (n_c * n ** 2) - 4 * (n_t - 1) / (n_c * (n - 1) * (n - 2))
        c4 = -n_t / (n_c * n ** 2 * (n - 1))
        return sigma2 * (1.0 / n_t + 1.0 / n_c) + gamma ** 2 * (c1 * m + c2 * m ** 2 + c3 * squares + c4 * cross)

    def var_naive_binary(
        self,
        g: InterferenceGraph,
        d: CompletelyRandomizedDesign,
        t: PotentialOutcomeTable,
        moment_source: str = "enumerate",
        samples: Optional[int] = None,
        seed: RandomSource = None,
    ) -> VarianceReport:
        """
        Variance of the difference in means under complete randomization and
        the additive binary model Y_i = alpha_i + beta z_i + gamma_i e_i.

        Three values: the six-block plug-in expression, the exact quadratic
        form a' Cov(x) a with x = (z, z e, e) and a = (c alpha, c gamma, -gamma/n_c),
        c = n/(n_t n_c), and the enumeration oracle.
        """
        if not isinstance(d, CompletelyRandomizedDesign):
            raise FeatureNotSupportedError(f"the binary-exposure naive variance under {d.label}")
        if not (t.level_counts == 2).all() or np.abs(t.C[:, 1]).max() > 0 or np.ptp(t.beta) > 0:
            raise InterferenceRequestError("needs an additive binary table with a common beta")
        if moment_source == "enumerate":
            support = self.designs.enumerate_support(d)
            Z, p = support.assignments.astype(float), support.probabilities
        elif moment_source == "mc":
            Z = self.designs.sample_many(d, seed, samples or self.mc_samples).astype(float)
            p = np.full(len(Z), 1.0 / len(Z))
        else:
            raise InterferenceRequestError("moment_source must be enumerate or mc")
        E = self.exposures.expose_many(ExposureModel.BINARY, g, Z.astype(np.int8)).astype(float)
        n, n_t, n_c = g.n, d.n_t, d.n_c
        alpha, gamma = t.alpha, t.B[:, 1]

        x = np.hstack([Z, Z * E, E])
        mean = p @ x
        covariance = (x * p[:, None]).T @ x - np.outer(mean, mean)
        c = n / (n_t * n_c)
        a = np.concatenate([c * alpha, c * gamma, -gamma / n_c])
        derived = float(a @ covariance @ a)

        ZE = Z * E
        rho, pi = p @ ZE, p @ E
        rho_ij = (ZE * p[:, None]).T @ ZE
        pi_ij = (E * p[:, None]).T @ E
        both = (Z * p[:, None]).T @ Z
        with np.errstate(invalid="ignore", divide="ignore"):
            e_given_both = np.where(both > 0, ((Z * p[:, None]).T @ ZE) / both, 0.0)
        e_given_treated = rho / (p @ Z)
        e_e_z = (ZE * p[:, None]).T @ E
        z_e = (Z * p[:, None]).T @ E
        off = ~np.eye(n, dtype=bool)

        def pairs(u, v, M):
            return float((np.outer(u, v) * np.where(off, M, 0.0)).sum())

        scale = n ** 2 / (n_t ** 2 * n_c ** 2)
        closed_form = (
            scale * ((alpha ** 2).sum() * n_t * n_c / n + pairs(alpha, alpha, np.ones((n, n))) * n_t / n ** 2)
            + scale * ((gamma ** 2 * rho * (1 - rho)).sum() + pairs(gamma, gamma, rho_ij - np.outer(rho, rho)))
            + ((gamma ** 2 * pi * (1 - pi)).sum() + pairs(gamma, gamma, pi_ij - np.outer(pi, pi))) / n ** 2
            + scale * ((alpha * gamma * rho).sum() * n_c / n
                       + pairs(alpha, gamma, (n_t ** 2 / n ** 2) * (e_given_both - e_given_treated[None, :])))
            - ((gamma ** 2 * rho * (1 - pi)).sum() + pairs(gamma, gamma, e_e_z.T - np.outer(rho, pi))) / (n_t * n_c)
            - ((alpha * gamma * (rho - n_t / n * pi)).sum()
               + pairs(alpha, gamma, z_e - n_t / n * pi[None, :])) / (n_t * n_c)
        )

        oracle = None
        if d.support_size <= self.enumeration_cap:
            oracle = self.harness.exact_expectation(d, g, ExposureModel.BINARY, t, "naive", Estimand.DTE).variance
        return VarianceReport(closed_form_value=closed_form, derived_value=derived, oracle_value=oracle,
                              moment_source=moment_source)

    # shrinkage

    def ht_shrinkage(
        self,
        d: Design,
        g: InterferenceGraph,
        model: Union[str, ExposureModel],
        t: PotentialOutcomeTable,
        contrast: Union[Contrast, Estimand] = Estimand.DTE,
        exposed_level: Union[str, ExposedLevel] = ExposedLevel.FULL,
        grid: Optional[Sequence[float]] = None,
    ) -> ShrinkageReport:
        """
        MSE of (1 - k) HT over ``grid`` from exact HT moments:
        (1-k)^2 (V + mu^2) - 2 (1-k) mu theta + theta^2.
        """
        grid = SHRINKAGE_GRID if grid is None else np.asarray(grid, dtype=float)
        moments = self.harness.exact_expectation(d, g, model, t, "ht", contrast, exposed_level)
        theta = self.outcomes.true_estimand(t, contrast, g=g, model=model, exposed_level=exposed_level)
        mu, variance = moments.expectation, moments.variance
        keep = 1.0 - grid
        mse = keep ** 2 * (variance + mu ** 2) - 2.0 * keep * mu * theta + theta ** 2
        if not self.designs.is_non_constant(d, g, model, contrast, exposed_level):
            self._logger.warning(f"{d.label} is a constant design for this contrast")
        return ShrinkageReport(estimand=theta, ht_mean=mu, ht_variance=variance, grid=grid, mse=mse)
