from __future__ import annotations

from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from interference_lab.errors import (FeatureNotSupportedError,
                                     InterferenceRequestError)
from interference_lab.models.designs import Design
from interference_lab.models.estimates import (Contrast, Estimand, Estimate,
                                               ResolvedContrast)
from interference_lab.models.exposures import (EXPOSED, ExposedLevel,
                                               ExposureAssignment,
                                               ExposureModel)
from interference_lab.models.graphs import InterferenceGraph
from interference_lab.models.outcomes import (MarginalForm, OutcomeGenerator,
                                              PotentialOutcomeTable,
                                              StructuralModel)

from .base import BaseService, RandomSource
from .design_service import DesignService
from .exposure_service import ExposureService

#: Number of batches behind the Monte-Carlo standard error of a marginal estimand.
MARGINAL_BATCHES = 20


class OutcomeService(BaseService):
    """
    Potential outcomes: evaluation, realisation, estimands, generators and
    the table file format.
    """

    @property
    def designs(self) -> DesignService:
        return self._new_service(DesignService)

    @property
    def exposures(self) -> ExposureService:
        return self._new_service(ExposureService)

    def potential_outcome(self, t: PotentialOutcomeTable, i: int, z: int, e: int) -> float:
        if not 0 <= i < t.n:
            raise InterferenceRequestError(f"unit {i} is out of range for a table of {t.n} units")
        return t.outcome(i, z, e)

    def realize(self, t: PotentialOutcomeTable, a: ExposureAssignment) -> np.ndarray:
        """Observed outcomes Y_i(z_i, e_i); potential outcomes are fixed, no noise is added."""
        if a.n != t.n:
            raise InterferenceRequestError(f"the assignment has {a.n} units, the table {t.n}")
        return t.outcomes(a.z, a.e)

    # estimands

    def resolve(
        self,
        t: PotentialOutcomeTable,
        which: Union[str, Estimand, Contrast, ResolvedContrast],
        g: Optional[InterferenceGraph] = None,
        model: Union[str, ExposureModel, None] = None,
        exposed_level: Union[str, ExposedLevel] = ExposedLevel.FULL,
    ) -> ResolvedContrast:
        """
        Concrete cells of an estimand for every unit of ``t``. Without a
        graph the exposed level is read off the table: the top level
        ``K_i - 1`` for ``full`` and level 1 for ``one``.
        """
        if isinstance(which, ResolvedContrast):
            return which
        if isinstance(which, str):
            estimand = Estimand.parse(which)
            if estimand is None:
                raise InterferenceRequestError(f"unknown estimand {which!r}")
            which = estimand
        if isinstance(which, Estimand):
            which = which.contrast(exposed_level)
        if g is not None and model is not None:
            return self.exposures.resolve_contrast(which, model, g, which.exposed_level)

        def levels(level) -> np.ndarray:
            if level != EXPOSED:
                return np.full(t.n, int(level))
            if (t.level_counts < 2).any():
                unit = int(np.flatnonzero(t.level_counts < 2)[0])
                raise InterferenceRequestError(f"unit {unit} has no exposed level")
            return t.level_counts - 1 if which.exposed_level == ExposedLevel.FULL else np.ones(t.n, dtype=np.int64)

        return ResolvedContrast(np.full(t.n, which.tau1[0]), levels(which.tau1[1]),
                                np.full(t.n, which.tau0[0]), levels(which.tau0[1]))

    def unit_effects(self, t: PotentialOutcomeTable, which, **kwargs) -> np.ndarray:
        """Y_i(tau1) - Y_i(tau0) for every unit."""
        resolved = self.resolve(t, which, **kwargs)
        return t.outcomes(resolved.z1, resolved.e1) - t.outcomes(resolved.z0, resolved.e0)

    def true_estimand(self, t: PotentialOutcomeTable, which, **kwargs) -> float:
        """
        The mean unit-level contrast: DTE, TTE, gamma1, gamma2 or any :class:`Contrast`.

        :raises InterferenceRequestError: if a unit lacks a level the estimand needs
        """
        return float(self.unit_effects(t, which, **kwargs).mean())

    def marginal_estimand(
        self,
        t: PotentialOutcomeTable,
        g: InterferenceGraph,
        model: Union[str, ExposureModel],
        phi: Design,
        psi: Optional[Design] = None,
        form: Union[str, MarginalForm] = MarginalForm.THETA_PHI,
        z: int = 1,
        samples: Optional[int] = None,
        seed: RandomSource = None,
    ) -> Estimate:
        """
        Contrasts of policy-averaged outcomes:

        * ``theta_phi``: mean of E_phi(Y_i | Z_i = 1) - E_phi(Y_i | Z_i = 0)
        * ``theta_phi_psi``: mean of E_phi(Y_i) - E_psi(Y_i)
        * ``theta_phi_psi_z``: mean of E_phi(Y_i | Z_i = z) - E_psi(Y_i)

        Exact when the policies are enumerable, otherwise Monte Carlo with a
        batch-means standard error in ``diagnostics["se"]``. Units whose
        conditioning arm has probability 0 are listed in
        ``diagnostics["undefined_units"]`` and left out of the mean.
        """
        form = MarginalForm.parse(form)
        if form is None:
            raise InterferenceRequestError("form must be theta_phi, theta_phi_psi or theta_phi_psi_z")
        if form != MarginalForm.THETA_PHI and psi is None:
            raise InterferenceRequestError(f"{form.code} needs a second policy psi")
        rng = self._rng(seed)
        exact = all(d.support_size <= self.enumeration_cap for d in (phi, psi) if d is not None)
        if exact:
            terms = self._policy_terms(t, g, model, phi, psi, form, z, exact=True, rng=rng)
            undefined = np.flatnonzero(np.isnan(terms))
            value = np.nanmean(terms) if len(undefined) < t.n else None
            se = 0.0
        else:
            samples = samples or self.mc_samples
            batches = [self._policy_terms(t, g, model, phi, psi, form, z, exact=False, rng=rng,
                                          samples=max(1, samples // MARGINAL_BATCHES))
                       for _ in range(MARGINAL_BATCHES)]
            pooled = np.vstack(batches)
            undefined = np.flatnonzero(np.isnan(pooled).all(axis=0))
            per_batch = np.array([np.nanmean(b) if not np.isnan(b).all() else np.nan for b in batches])
            value = np.nanmean(per_batch) if len(undefined) < t.n else None
            se = float(np.nanstd(per_batch, ddof=1) / np.sqrt(np.isfinite(per_batch).sum()))
        if len(undefined):
            self._logger.warning(f"{len(undefined)} units have a conditioning arm of probability 0 under {phi.label}")
        return Estimate(value=value, diagnostics={
            "form": form.code, "se": se, "exact": exact, "undefined_units": undefined.tolist()})

    def _policy_terms(self, t, g, model, phi, psi, form, z, exact, rng, samples=None) -> np.ndarray:
        def draws(d: Design):
            if exact:
                support = self.designs.enumerate_support(d)
                Z, p = support.assignments, support.probabilities
            else:
                Z = self.designs.sample_many(d, rng, samples)
                p = np.full(len(Z), 1.0 / len(Z))
            Y = t.outcomes_many(Z, self.exposures.expose_many(model, g, Z))
            return Z, p, Y

        def conditional(Z, p, Y, arm):
            mask = (Z == arm).astype(float) * p[:, None]
            mass = mask.sum(axis=0)
            with np.errstate(invalid="ignore", divide="ignore"):
                return np.where(mass > 0, (mask * Y).sum(axis=0) / np.where(mass > 0, mass, 1.0), np.nan)

        Z, p, Y = draws(phi)
        if form == MarginalForm.THETA_PHI:
            return conditional(Z, p, Y, 1) - conditional(Z, p, Y, 0)
        Zpsi, ppsi, Ypsi = draws(psi)
        baseline = ppsi @ Ypsi
        if form == MarginalForm.THETA_PHI_PSI:
            return p @ Y - baseline
        return conditional(Z, p, Y, z) - baseline

    # generators

    def generate_params(self, generator: Union[str, OutcomeGenerator], g: InterferenceGraph,
                        seed: RandomSource = None,
                        model: Union[str, ExposureModel] = ExposureModel.BINARY) -> PotentialOutcomeTable:
        """
        Draw per-unit (alpha, beta, gamma, delta) for the two-by-two model and
        map them to ``B = [0, gamma]``, ``C = [0, delta]``.
        """
        generator = OutcomeGenerator.parse(generator)
        if generator is None:
            raise InterferenceRequestError("generator must be uncorrelated or correlated")
        if ExposureModel.parse(model) != ExposureModel.BINARY:
            raise FeatureNotSupportedError(f"{generator.code} outcome generation under {model} exposure")
        rng = self._rng(seed)
        n = g.n
        x = y = None
        if generator == OutcomeGenerator.UNCORRELATED:
            alpha = rng.normal(1.0, 0.1, n)
            beta = rng.uniform(0.0, 1.0, n)
            gamma = rng.uniform(0.0, 1.0, n)
            delta = rng.normal(2.0, 0.1, n)
        else:
            x = rng.lognormal(3.0, 0.5, n)
            y = rng.binomial(1, 0.4, n)
            log_x = np.log(x)
            alpha = 1.0 + 15.0 * log_x - 0.5 * y + rng.normal(0.0, 1.0 + y * np.abs(log_x))
            beta = -2.0 - 0.8 * x + 0.8 * y + rng.normal(0.0, 2.0, n)
            gamma = 3.0 + 4.0 * log_x + rng.normal(0.0, 0.1 * np.abs(alpha))
            delta = 2.0 * log_x + rng.gamma(2.0, 0.5, n)
        self._logger.debug(f"generated {generator.code} outcome parameters for {n} units")
        zeros = np.zeros(n)
        return PotentialOutcomeTable(alpha=alpha, beta=beta, B=np.column_stack([zeros, gamma]),
                                     C=np.column_stack([zeros, delta]), x=x, y=y)

    def linear_table(self, g: InterferenceGraph, model: Union[str, ExposureModel], *, alpha, beta, gamma,
                     theta=0.0, x=None, y=None) -> PotentialOutcomeTable:
        """A linear-in-exposure table on the graph's level counts."""
        return PotentialOutcomeTable.linear(
            alpha=np.broadcast_to(np.asarray(alpha, dtype=float), (g.n,)),
            beta=np.broadcast_to(np.asarray(beta, dtype=float), (g.n,)),
            gamma=gamma, theta=theta, level_counts=self.exposures.level_counts(model, g), x=x, y=y)

    # decomposition

    def decompose(self, raw: Sequence[Sequence[Sequence[float]]], x=None, y=None) -> PotentialOutcomeTable:
        """
        Build a table from raw potential outcomes, ``raw[i][z][e] = Y_i(z, e)``.
        """
        alpha, beta, B, C = [], [], [], []
        for i, outcomes in enumerate(raw):
            Y = np.asarray(outcomes, dtype=float)
            if Y.ndim != 2 or Y.shape[0] != 2:
                raise InterferenceRequestError(f"unit {i} needs a 2 x K_i block of potential outcomes")
            alpha.append(Y[0, 0])
            beta.append(Y[1, 0] - Y[0, 0])
            B.append(Y[0] - Y[0, 0])
            C.append(Y[1] - Y[1, 0] - Y[0] + Y[0, 0])
        return PotentialOutcomeTable(alpha=alpha, beta=beta, B=B, C=C, x=x, y=y)

    def reconstruct(self, t: PotentialOutcomeTable) -> List[np.ndarray]:
        """The raw ``2 x K_i`` potential outcomes of every unit."""
        raw = []
        for i in range(t.n):
            B, C = t.levels_of(i)
            raw.append(np.vstack([t.alpha[i] + B, t.alpha[i] + t.beta[i] + B + C]))
        return raw

    def apply_structural_model(self, t: PotentialOutcomeTable, model: Union[str, StructuralModel],
                               beta: Optional[float] = None) -> PotentialOutcomeTable:
        """
        Impose a structural restriction:

        * ``additive`` zeroes C
        * ``constant_effects`` replaces beta, B and C by their cross-unit means
        * ``linear`` projects B and C on ``slope * e`` by least squares
        * ``constant_additive`` is additive and constant effects together
        * ``sharp_null`` sets every beta_i to ``beta``
        """
        parsed = StructuralModel.parse(model)
        if parsed is None:
            raise InterferenceRequestError(f"unknown structural model {model!r}")
        B = [t.levels_of(i)[0] for i in range(t.n)]
        C = [t.levels_of(i)[1] for i in range(t.n)]

        if parsed == StructuralModel.UNRESTRICTED:
            return t
        if parsed == StructuralModel.ADDITIVE:
            return t.with_parameters(C=[np.zeros_like(c) for c in C])
        if parsed == StructuralModel.SHARP_NULL:
            if beta is None:
                raise InterferenceRequestError("sharp_null needs the common effect beta")
            return t.with_parameters(beta=np.full(t.n, float(beta)))
        if parsed == StructuralModel.LINEAR:
            def project(row):
                e = np.arange(len(row), dtype=float)
                denominator = (e ** 2).sum()
                return e * ((e * row).sum() / denominator if denominator > 0 else 0.0)
            return t.with_parameters(B=[project(b) for b in B], C=[project(c) for c in C])

        if len(set(t.level_counts.tolist())) > 1:
            raise FeatureNotSupportedError(f"{parsed.code} with unequal level counts")
        mean_B = np.mean(B, axis=0)
        mean_C = np.zeros_like(mean_B) if parsed == StructuralModel.CONSTANT_ADDITIVE else np.mean(C, axis=0)
        return t.with_parameters(beta=np.full(t.n, t.beta.mean()), B=[mean_B] * t.n, C=[mean_C] * t.n)

    # files

    def write_table(self, t: PotentialOutcomeTable, path: str) -> None:
        """Write ``unit,alpha,beta,B,C,x,y`` with level lists joined by ``;``."""
        def joined(row):
            return ";".join(repr(float(v)) for v in row)

        frame = pd.DataFrame({
            "unit": np.arange(t.n),
            "alpha": t.alpha,
            "beta": t.beta,
            "B": [joined(t.levels_of(i)[0]) for i in range(t.n)],
            "C": [joined(t.levels_of(i)[1]) for i in range(t.n)],
            "x": t.x if t.x is not None else np.nan,
            "y": t.y if t.y is not None else np.nan,
        })
        frame.to_csv(path, index=False)
        self._logger.debug(f"wrote {t!r} to {path}")

    def read_table(self, path: str) -> PotentialOutcomeTable:
        frame = pd.read_csv(path, dtype={"B": str, "C": str}).sort_values("unit")
        if frame["unit"].tolist() != list(range(len(frame))):
            raise InterferenceRequestError(f"{path}: units must be numbered 0..n-1")

        def split(cell: str) -> List[float]:
            return [float(v) for v in str(cell).split(";")]

        x = frame["x"].to_numpy(dtype=float) if "x" in frame and frame["x"].notna().all() else None
        y = frame["y"].to_numpy().astype(np.int64) if "y" in frame and frame["y"].notna().all() else None
        return PotentialOutcomeTable(
            alpha=frame["alpha"].to_numpy(dtype=float), beta=frame["beta"].to_numpy(dtype=float),
            B=[split(v) for v in frame["B"]], C=[split(v) for v in frame["C"]], x=x, y=y)
