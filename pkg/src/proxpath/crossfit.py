"""Cross-fitted debiased estimation of the mediation functional.

Nuisances are fit on each fold complement and the uncentered influence
function is averaged on the held-out fold; the fold means are then averaged.
The standard error comes from the pooled cross-fitted influence values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .dgp import seed_stream
from .errors import ConfigurationError, EstimationError
from .estimators import BridgeSet, EstimateReport, SLOTS, effect_reports, ey1_values, wald_ci

MAX_RESEEDS = 5


@dataclass(frozen=True, eq=False)
class FoldPlan:
    """Fold labels ``1..L`` for each of ``n`` rows."""

    assignment: np.ndarray
    L: int

    def __post_init__(self):
        a = np.asarray(self.assignment, dtype=int)
        a.setflags(write=False)
        object.__setattr__(self, "assignment", a)

    def __eq__(self, other):
        return isinstance(other, FoldPlan) and self.L == other.L and np.array_equal(self.assignment, other.assignment)

    @property
    def sizes(self):
        return np.bincount(self.assignment, minlength=self.L + 1)[1:]

    def fold(self, l):
        return np.flatnonzero(self.assignment == l)

    def complement(self, l):
        return np.flatnonzero(self.assignment != l)


def make_folds(n: int, L: int, seed=0) -> FoldPlan:
    """Random partition into ``L`` folds of sizes ``floor(n/L)`` or ``ceil(n/L)``.

    The first ``n mod L`` labels get the extra row; the labels are then
    permuted uniformly, so fold sizes are exactly ``n/L`` when ``L`` divides ``n``.
    """
    if not (isinstance(L, (int, np.integer)) and 2 <= L <= n):
        raise ConfigurationError(f"need 2 <= L <= n, got L={L}, n={n}")
    base, extra = divmod(n, L)
    sizes = [base + (1 if l < extra else 0) for l in range(L)]
    labels = np.repeat(np.arange(1, L + 1), sizes)
    rng = np.random.default_rng(seed)
    return FoldPlan(rng.permutation(labels), L)


def _arms_ok(ds, plan):
    for l in range(1, plan.L + 1):
        a = ds.a[plan.complement(l)]
        if a.sum() == 0 or a.sum() == a.size:
            return False
    return True


def _plan_with_arms(ds, L, seed):
    for attempt in range(MAX_RESEEDS + 1):
        plan = make_folds(ds.n, L, seed_stream(seed, 0, attempt))
        if _arms_ok(ds, plan):
            return plan, attempt
    raise EstimationError(f"no fold plan with both arms in every training set after {MAX_RESEEDS} reseeds",
                          stage="folds")


def _call(fitter, ds, seed, method=None):
    fn = getattr(fitter, method) if method else fitter
    if getattr(fitter, "accepts_seed", False):
        return fn(ds, seed=seed)
    return fn(ds)


def _eif_uncentered(ds, bridges):
    v = bridges.values(ds, *SLOTS)
    a, y = ds.a, ds.y
    return (a * v["q0"] * (v["h1"] - v["h0"]) + (1 - a) * v["q1"] * (v["h2"] - v["h1"])
            + a * v["q2"] * (y - v["h2"]) + v["h0"])


def _crossfit(ds, L, seed, fold_values):
    plan, reseeds = _plan_with_arms(ds, L, seed)
    phi = np.empty(ds.n)
    fold_means = []
    for l in range(1, L + 1):
        train, test = plan.complement(l), plan.fold(l)
        vals = fold_values(ds.take(train), ds.take(test), seed_stream(seed, 1, l))
        phi[test] = vals
        fold_means.append(float(np.mean(vals)))
    return plan, reseeds, phi, fold_means


def dml_estimate(ds: Dataset, L: int = 5, fitter=None, seed=0, level: float = 0.95) -> EstimateReport:
    """Cross-fitted estimate of psi.

    Parameters
    ----------
    fitter : callable
        Maps a training Dataset to a full :class:`BridgeSet` (or a dict of six
        bridges).  Fitters exposing ``accepts_seed = True`` also receive a
        per-fold ``seed`` keyword.  Defaults to the kernel minimax fitter.
    """
    if fitter is None:
        from .bridges.kernel import KernelNuisanceFitter
        fitter = KernelNuisanceFitter()

    def fold_values(train, test, fseed):
        b = _call(fitter, train, fseed)
        if isinstance(b, dict):
            b = BridgeSet.from_dict(b)
        return _eif_uncentered(test, b)

    plan, reseeds, phi, fold_means = _crossfit(ds, L, seed, fold_values)
    psi = float(np.mean(fold_means))
    se = float(np.sqrt(np.mean((phi - psi) ** 2) / ds.n))
    diag = {"fold_estimates": fold_means, "fold_sizes": plan.sizes.tolist(), "reseeds": reseeds,
            "eif_values": phi}
    return EstimateReport("P-DML", psi, se, wald_ci(psi, se, level), diag)


def dml_ey1(ds: Dataset, L: int = 5, fitter=None, seed=0, level: float = 0.95) -> EstimateReport:
    """Cross-fitted doubly robust E[Y(1)] from the pair ``(h~, q0)``.

    ``fitter`` is either a callable returning ``(h~, q0)`` or an object with a
    ``fit_ey1`` method (as the kernel fitter has).
    """
    if fitter is None:
        from .bridges.kernel import KernelNuisanceFitter
        fitter = KernelNuisanceFitter()
    method = "fit_ey1" if hasattr(fitter, "fit_ey1") else None

    def fold_values(train, test, fseed):
        h, q0 = _call(fitter, train, fseed, method)
        return ey1_values(test, h, q0)

    plan, reseeds, phi, fold_means = _crossfit(ds, L, seed, fold_values)
    est = float(np.mean(fold_means))
    se = float(np.sqrt(np.mean((phi - est) ** 2) / ds.n))
    diag = {"fold_estimates": fold_means, "fold_sizes": plan.sizes.tolist(), "reseeds": reseeds,
            "eif_values": phi}
    return EstimateReport("EY1", est, se, wald_ci(est, se, level), diag)


def dml_effects(ds: Dataset, L: int = 5, fitter=None, seed=0, level=0.95, outcome_kind="continuous"):
    """P-DML, E[Y(1)], P_AMY and (binary) R_AMY from common folds.

    Both cross-fits use the same seed and therefore the same fold plan, so the
    per-row influence values pair up for the delta-method standard errors.
    """
    psi = dml_estimate(ds, L, fitter, seed, level)
    ey1 = dml_ey1(ds, L, fitter, seed, level)
    effects = effect_reports(ey1.diagnostics["eif_values"], psi.diagnostics["eif_values"], outcome_kind, level)
    # point estimates follow the fold-mean aggregation
    effects[0] = ey1
    pamy = ey1.psi_hat - psi.psi_hat
    effects[1].psi_hat = pamy
    effects[1].ci = wald_ci(pamy, effects[1].se, level)
    if len(effects) > 2:
        from .estimators import ramy_value
        effects[2].psi_hat = ramy_value(ey1.psi_hat, psi.psi_hat)
        effects[2].ci = wald_ci(effects[2].psi_hat, effects[2].se, level)
    return [psi] + effects
