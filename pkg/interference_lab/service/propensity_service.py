from __future__ import annotations

from typing import Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy import stats

from interference_lab.errors import (FeatureNotSupportedError,
                                     InterferenceRequestError)
from interference_lab.models import ParamDef
from interference_lab.models.designs import (BernoulliDesign, ClusterDesign,
                                             CompletelyRandomizedDesign,
                                             Design, RestrictedBernoulliDesign)
from interference_lab.models.estimates import Contrast, Estimand
from interference_lab.models.exposures import ExposedLevel, ExposureModel
from interference_lab.models.graphs import InterferenceGraph
from interference_lab.models.propensities import (ExposureWeights,
                                                  JointPropensityTable,
                                                  PropensityTable, Provenance)

from .base import BaseService, RandomSource
from .design_service import DesignService
from .exposure_service import ExposureService

_CHUNK = 1 << 16


def _tabulate(Z: np.ndarray, E: np.ndarray, weights: np.ndarray, width: int) -> np.ndarray:
    """
    Sum ``weights`` into an ``(n, 2, width)`` array at each unit's realised
    cell. ``weights`` is per assignment ``(S,)`` or per assignment and unit
    ``(S, n)``.
    """
    n = Z.shape[1]
    values = np.zeros(n * 2 * width)
    offsets = np.arange(n, dtype=np.int64)[None, :] * 2 * width
    for start in range(0, len(Z), _CHUNK):
        stop = start + _CHUNK
        index = offsets + Z[start:stop].astype(np.int64) * width + E[start:stop]
        w = weights[start:stop]
        w = np.broadcast_to(w[:, None] if w.ndim == 1 else w, index.shape)
        values += np.bincount(index.ravel(), weights=w.ravel(), minlength=len(values))
    return values.reshape(n, 2, width)


class PropensityService(BaseService):
    """
    Propensity scores pi_i(z, e), joint propensities pi_ij and the weighted
    exposure probabilities behind the difference-in-means bias.

    Closed forms cover complete randomization and unrestricted Bernoulli
    trials under binary and symmetric exposure, and cluster designs under
    binary exposure. Everything else is enumerated over the design support
    or estimated by Monte Carlo.
    """

    @property
    def designs(self) -> DesignService:
        return self._new_service(DesignService)

    @property
    def exposures(self) -> ExposureService:
        return self._new_service(ExposureService)

    def _width(self, model: ExposureModel, g: InterferenceGraph) -> int:
        return int(self.exposures.level_counts(model, g).max()) if g.n else 1

    @staticmethod
    def _covered(d: Design, model: ExposureModel) -> bool:
        if type(d) in (CompletelyRandomizedDesign, BernoulliDesign):
            return model in (ExposureModel.BINARY, ExposureModel.SYMMETRIC)
        return isinstance(d, ClusterDesign) and model == ExposureModel.BINARY

    # closed forms

    @staticmethod
    def _crd_values(n: int, n_t: int, degrees: np.ndarray, model: ExposureModel, width: int) -> np.ndarray:
        """Complete randomization: neighbours' treatments are hypergeometric given Z_i."""
        n_c = n - n_t
        values = np.zeros((len(degrees), 2, width))
        for d in np.unique(degrees):
            rows = degrees == d
            d = int(d)
            if model == ExposureModel.BINARY:
                treated0 = n_t / n * stats.hypergeom.pmf(0, n - 1, d, n_t - 1)
                control0 = n_c / n * stats.hypergeom.pmf(0, n - 1, d, n_t)
                values[rows, 1, :2] = [treated0, max(0.0, n_t / n - treated0)]
                values[rows, 0, :2] = [control0, max(0.0, n_c / n - control0)]
            else:
                e = np.arange(d + 1)
                values[rows, 1, :d + 1] = n_t / n * stats.hypergeom.pmf(e, n - 1, d, n_t - 1)
                values[rows, 0, :d + 1] = n_c / n * stats.hypergeom.pmf(e, n - 1, d, n_t)
        return values

    @staticmethod
    def _bernoulli_values(p: float, degrees: np.ndarray, model: ExposureModel, width: int) -> np.ndarray:
        values = np.zeros((len(degrees), 2, width))
        for d in np.unique(degrees):
            rows = degrees == d
            d = int(d)
            if model == ExposureModel.BINARY:
                none = (1.0 - p) ** d
                values[rows, 1, :2] = [p * none, p * (1.0 - none)]
                values[rows, 0, :2] = [(1.0 - p) * none, (1.0 - p) * (1.0 - none)]
            else:
                pmf = stats.binom.pmf(np.arange(d + 1), d, p)
                values[rows, 1, :d + 1] = p * pmf
                values[rows, 0, :d + 1] = (1.0 - p) * pmf
        return values

    def _cluster_values(self, d: ClusterDesign, g: InterferenceGraph) -> Tuple[np.ndarray, np.ndarray]:
        """
        Cluster design under binary exposure for units with a neighbour in
        their own cluster. Returns the values and the mask of such units.
        """
        K, K_t, K_c = d.K, d.K_t, d.K_c
        values = np.zeros((g.n, 2, 2))
        covered = np.zeros(g.n, dtype=bool)
        for i in range(g.n):
            own = d.partition[i]
            touched = {int(d.partition[j]) for j in g.neighbors(i)}
            if own not in touched:
                continue
            covered[i] = True
            u = len(touched | {int(own)})
            all_control = float(np.prod([(K_c - j) / (K - j) for j in range(u)]))
            values[i, 1, 1] = K_t / K
            values[i, 0, 0] = all_control
            values[i, 0, 1] = max(0.0, K_c / K - all_control)
        return values, covered

    def analytic_propensity(self, d: Design, g: InterferenceGraph,
                            model: Union[str, ExposureModel]) -> PropensityTable:
        """
        Propensities from the closed forms.

        Cluster units without a within-cluster neighbour fall outside the
        closed form; they are enumerated over cluster assignments, or
        sampled when that support is too large, and tagged accordingly.

        :raises FeatureNotSupportedError: for designs and exposure models without a closed form
        """
        model = ExposureModel.parse(model)
        if d.n != g.n:
            raise InterferenceRequestError(f"the design has {d.n} units, the graph {g.n}")
        if not self._covered(d, model):
            raise FeatureNotSupportedError(f"analytic propensities for {d.label} under {model.code} exposure")
        width = self._width(model, g)
        if isinstance(d, CompletelyRandomizedDesign):
            return PropensityTable(values=self._crd_values(d.n, d.n_t, g.degrees, model, width),
                                   provenance=Provenance.ANALYTIC)
        if isinstance(d, BernoulliDesign):
            return PropensityTable(values=self._bernoulli_values(d.p, g.degrees, model, width),
                                   provenance=Provenance.ANALYTIC)

        values, covered = self._cluster_values(d, g)
        provenance = [Provenance.ANALYTIC] * g.n
        if covered.all():
            return PropensityTable(values=values, provenance=Provenance.ANALYTIC)
        routed = np.flatnonzero(~covered)
        if d.support_size <= self.enumeration_cap:
            fallback, _ = self.enumerated_propensity(d, g, model)
            se = None
        else:
            fallback = self.mc_propensity(d, g, model)
            se = np.zeros_like(values)
            se[routed] = fallback.se[routed]
        self._logger.warning(
            f"{len(routed)} units have no neighbour in their own cluster; "
            f"their propensities are {fallback.provenance.code}")
        values[routed] = fallback.values[routed]
        for i in routed:
            provenance[i] = fallback.provenance
        return PropensityTable(values=values, provenance=Provenance.ANALYTIC, unit_provenance=provenance,
                               se=se, samples=fallback.samples)

    # enumeration and Monte Carlo

    def enumerated_propensity(self, d: Design, g: InterferenceGraph,
                              model: Union[str, ExposureModel]) -> Tuple[PropensityTable, JointPropensityTable]:
        """
        Exact propensities and joint propensities by summing over the support.

        :raises SupportTooLargeError: beyond ``enumeration_cap`` support points
        """
        model = ExposureModel.parse(model)
        support = self.designs.enumerate_support(d)
        E = self.exposures.expose_many(model, g, support.assignments)
        values = _tabulate(support.assignments, E, support.probabilities, self._width(model, g))
        joint = JointPropensityTable(assignments=support.assignments, exposures=E,
                                     weights=support.probabilities, provenance=Provenance.ENUMERATED)
        return PropensityTable(values=values, provenance=Provenance.ENUMERATED), joint

    def _draws(self, d: Design, g: InterferenceGraph, model: ExposureModel, samples: Optional[int],
               seed: RandomSource) -> Tuple[np.ndarray, np.ndarray]:
        samples = ParamDef("samples", int, low=1).validate(samples if samples is not None else self.mc_samples)
        Z = self.designs.sample_many(d, seed, samples)
        return Z, self.exposures.expose_many(model, g, Z)

    def mc_propensity(self, d: Design, g: InterferenceGraph, model: Union[str, ExposureModel],
                      samples: Optional[int] = None, seed: RandomSource = None) -> PropensityTable:
        """Frequencies over ``samples`` draws with per-cell standard errors sqrt(pi (1 - pi) / S)."""
        model = ExposureModel.parse(model)
        Z, E = self._draws(d, g, model, samples, seed)
        S = len(Z)
        values = _tabulate(Z, E, np.full(S, 1.0 / S), self._width(model, g))
        table = PropensityTable(values=values, provenance=Provenance.MONTE_CARLO,
                                se=np.sqrt(values * (1.0 - values) / S), samples=S)
        zeros = table.zero_cells(self.exposures.level_counts(model, g))
        if zeros:
            self._logger.warning(f"{len(zeros)} reachable cells were never observed in {S} draws, e.g. {zeros[0]}")
        return table

    def mc_joint_propensity(self, d: Design, g: InterferenceGraph, model: Union[str, ExposureModel],
                            samples: Optional[int] = None, seed: RandomSource = None) -> JointPropensityTable:
        model = ExposureModel.parse(model)
        Z, E = self._draws(d, g, model, samples, seed)
        return JointPropensityTable(assignments=Z, exposures=E, weights=np.full(len(Z), 1.0 / len(Z)),
                                    provenance=Provenance.MONTE_CARLO)

    def propensities(self, d: Design, g: InterferenceGraph, model: Union[str, ExposureModel],
                     method: str = "auto", samples: Optional[int] = None,
                     seed: RandomSource = None) -> PropensityTable:
        """
        Propensities by ``method``: ``analytic``, ``enumerated``,
        ``monte_carlo`` or ``auto`` (closed form, then enumeration, then Monte Carlo).
        """
        model = ExposureModel.parse(model)
        if method == "auto":
            if self._covered(d, model):
                method = Provenance.ANALYTIC.code
            elif d.support_size <= self.enumeration_cap:
                method = Provenance.ENUMERATED.code
            else:
                method = Provenance.MONTE_CARLO.code
            self._logger.debug(f"propensities for {d.label} under {model.code} exposure: {method}")
        provenance = Provenance.parse(method)
        if provenance == Provenance.ANALYTIC:
            return self.analytic_propensity(d, g, model)
        if provenance == Provenance.ENUMERATED:
            return self.enumerated_propensity(d, g, model)[0]
        if provenance == Provenance.MONTE_CARLO:
            return self.mc_propensity(d, g, model, samples, seed)
        raise InterferenceRequestError(f"unknown propensity method {method!r}")

    def joint_propensities(self, d: Design, g: InterferenceGraph, model: Union[str, ExposureModel],
                           samples: Optional[int] = None, seed: RandomSource = None) -> JointPropensityTable:
        """Exact joints when the support is enumerable, Monte-Carlo joints otherwise."""
        if d.support_size <= self.enumeration_cap:
            return self.enumerated_propensity(d, g, model)[1]
        return self.mc_joint_propensity(d, g, model, samples, seed)

    # weighted exposure probabilities

    def weighted_exposure_probs(
        self,
        d: Design,
        g: InterferenceGraph,
        model: Union[str, ExposureModel],
        kind: str = "by_treatment",
        contrast: Union[Contrast, Estimand, None] = None,
        exposed_level: Union[str, ExposedLevel] = ExposedLevel.FULL,
        samples: Optional[int] = None,
        seed: RandomSource = None,
    ) -> ExposureWeights:
        """
        ``by_treatment``: alpha_i(z, e) = E[I(Z_i=z, E_i=e) / #{j: Z_j=z}].
        ``by_cell``: E[I(i in tau) / #{j in tau}] for both cells of ``contrast``.

        Expectations are conditional on both denominators being positive.
        """
        model = ExposureModel.parse(model)
        if kind == "by_treatment":
            if isinstance(d, CompletelyRandomizedDesign):
                pi = self.propensities(d, g, model)
                values = np.array(pi.values)
                values[:, 1, :] /= d.n_t
                values[:, 0, :] /= d.n_c
                return ExposureWeights(kind=kind, provenance=pi.provenance, values=values)
            if isinstance(d, BernoulliDesign) and model != ExposureModel.GENERAL:
                return self._bernoulli_weights(d, g, model)
        elif kind != "by_cell":
            raise InterferenceRequestError(f"kind must be by_treatment or by_cell, got {kind!r}")

        if d.support_size <= self.enumeration_cap:
            support = self.designs.enumerate_support(d)
            Z, p, provenance = support.assignments, support.probabilities, Provenance.ENUMERATED
        else:
            Z = self.designs.sample_many(d, seed, samples or self.mc_samples)
            p, provenance = np.full(len(Z), 1.0 / len(Z)), Provenance.MONTE_CARLO
        E = self.exposures.expose_many(model, g, Z)

        if kind == "by_treatment":
            treated = Z.sum(axis=1).astype(float)
            defined = (treated > 0) & (treated < d.n)
            mass = float(p[defined].sum())
            self._check_mass(mass, d)
            Z, E, p, treated = Z[defined], E[defined], p[defined], treated[defined]
            per_unit = np.where(Z == 1, (p / treated)[:, None], (p / (d.n - treated))[:, None])
            values = _tabulate(Z, E, per_unit, self._width(model, g)) / mass
            return ExposureWeights(kind=kind, provenance=provenance, values=values, defined_mass=mass)

        resolved = self.exposures.resolve_contrast(
            contrast if contrast is not None else Estimand.DTE, model, g, exposed_level, strict=False)
        in1 = (Z == resolved.z1[None, :]) & (E == resolved.e1[None, :])
        in0 = (Z == resolved.z0[None, :]) & (E == resolved.e0[None, :])
        n1, n0 = in1.sum(axis=1), in0.sum(axis=1)
        defined = (n1 > 0) & (n0 > 0)
        mass = float(p[defined].sum())
        self._check_mass(mass, d)
        w1 = np.where(defined, p / np.maximum(n1, 1), 0.0)
        w0 = np.where(defined, p / np.maximum(n0, 1), 0.0)
        return ExposureWeights(kind=kind, provenance=provenance, tau1=(w1 @ in1) / mass, tau0=(w0 @ in0) / mass,
                               defined_mass=mass)

    @staticmethod
    def _check_mass(mass: float, d: Design):
        if mass <= 0.0:
            raise InterferenceRequestError(f"the difference in means is never defined under {d.label}")

    def _bernoulli_weights(self, d: BernoulliDesign, g: InterferenceGraph, model: ExposureModel) -> ExposureWeights:
        """
        Bernoulli trials given K = k treated units are complete randomizations,
        so alpha mixes the CRD weights over the binomial law of K restricted to 1..n-1.
        """
        n = d.n
        width = self._width(model, g)
        k = np.arange(1, n)
        law = stats.binom.pmf(k, n, d.p)
        mass = float(law.sum())
        self._check_mass(mass, d)
        values = np.zeros((n, 2, width))
        for count, weight in zip(k, law / mass):
            crd = self._crd_values(n, int(count), g.degrees, model, width)
            values[:, 1, :] += weight * crd[:, 1, :] / count
            values[:, 0, :] += weight * crd[:, 0, :] / (n - count)
        defined_mass = 1.0 if isinstance(d, RestrictedBernoulliDesign) else mass
        if defined_mass < 1.0:
            self._logger.warning(f"{d.label} leaves the difference in means undefined with probability {1 - mass:.3g}")
        return ExposureWeights(kind="by_treatment", provenance=Provenance.ANALYTIC, values=values,
                               defined_mass=defined_mass)

    # output

    def write_propensities(self, table: PropensityTable, path: str, level_counts=None) -> None:
        """Write ``unit,z,e,pi,provenance,se`` rows for every reachable cell."""
        counts = level_counts if level_counts is not None else [table.width] * table.n
        rows = []
        for i in range(table.n):
            for z in (0, 1):
                for e in range(min(int(counts[i]), table.width)):
                    rows.append({
                        "unit": i, "z": z, "e": e, "pi": table.values[i, z, e],
                        "provenance": table.unit_provenance[i].code,
                        "se": table.se[i, z, e] if table.se is not None else np.nan,
                    })
        frame = pd.DataFrame(rows, columns=["unit", "z", "e", "pi", "provenance", "se"])
        frame.to_csv(path, index=False)
        self._logger.debug(f"wrote {len(frame)} propensities to {path}")
