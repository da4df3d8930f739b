"""Point estimators of the mediation functional and the effect summaries.

``psi = E[Y(1, D(1), M(0, D(1)))]`` is estimated by outcome regression
(P-OR), weighting (P-IPW), two hybrids and the quadruply robust P-quadR.
Bridges are any objects with a ``kind`` attribute and an ``evaluate(ds)``
method returning one value per row, so linear and kernel bridges mix freely.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .bridges.parametric import EY1_KIND, BridgeMaps, LinearBridge, MomentProblem, fit_q_chain, solve_linear_moment
from .data import Dataset, feature_matrix
from .errors import ConfigurationError, EstimationError

TAGS = ("P-OR", "P-IPW", "P-hybrid1", "P-hybrid2", "P-quadR", "P-DML", "EY1", "P_AMY", "R_AMY")
PLUGINS = ("P-OR", "P-IPW", "P-hybrid1", "P-hybrid2")
ESTIMATORS = PLUGINS + ("P-quadR",)
SLOTS = ("h2", "h1", "h0", "q0", "q1", "q2")


@dataclass
class BridgeSet:
    """The six nuisances; any slot may be left empty."""

    h2: object = None
    h1: object = None
    h0: object = None
    q0: object = None
    q1: object = None
    q2: object = None

    def __post_init__(self):
        for k in SLOTS:
            b = getattr(self, k)
            if b is not None and getattr(b, "kind", k) != k:
                raise ConfigurationError(f"bridge of kind {b.kind!r} placed in slot {k!r}")

    @classmethod
    def from_dict(cls, d) -> "BridgeSet":
        return cls(**{k: d.get(k) for k in SLOTS})

    def require(self, *slots):
        missing = [k for k in slots if getattr(self, k) is None]
        if missing:
            raise ConfigurationError(f"missing bridge(s): {', '.join(missing)}")

    def values(self, ds: Dataset, *slots) -> dict:
        self.require(*slots)
        out = {}
        for k in slots:
            v = np.asarray(getattr(self, k).evaluate(ds), dtype=float)
            if v.shape != (ds.n,) or not np.all(np.isfinite(v)):
                raise EstimationError(f"bridge {k} did not evaluate to {ds.n} finite values", stage=k)
            out[k] = v
        return out


@dataclass
class EstimateReport:
    tag: str
    psi_hat: float
    se: float | None = None
    ci: tuple | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ConfigurationError(f"unknown estimator tag {self.tag!r}")

    def to_row(self) -> dict:
        lo, hi, level = self.ci if self.ci is not None else (None, None, None)
        return {"estimator": self.tag, "estimate": self.psi_hat, "se": self.se,
                "ci_lo": lo, "ci_hi": hi, "level": level}


def wald_ci(est, se, level=0.95):
    z = norm.ppf(0.5 + level / 2)
    return (est - z * se, est + z * se, level)


def _nonempty(ds):
    if ds.n == 0:
        raise EstimationError("empty dataset", stage="estimate")


def psi_por(ds: Dataset, h0) -> float:
    """Mean of ``h0(W, X)``."""
    _nonempty(ds)
    return float(np.mean(BridgeSet(h0=h0).values(ds, "h0")["h0"]))


def psi_pipw(ds: Dataset, q2) -> float:
    """Mean of ``A Y q2(Z, M, D, X)``."""
    _nonempty(ds)
    q = BridgeSet(q2=q2).values(ds, "q2")["q2"]
    return float(np.mean(ds.a * ds.y * q))


def psi_hybrid1(ds: Dataset, h1, q0) -> float:
    """Mean of ``A h1(W, D, X) q0(Z, X)``."""
    _nonempty(ds)
    v = BridgeSet(h1=h1, q0=q0).values(ds, "h1", "q0")
    return float(np.mean(ds.a * v["h1"] * v["q0"]))


def psi_hybrid2(ds: Dataset, h2, q1) -> float:
    """Mean of ``(1 - A) h2(W, M, D, X) q1(Z, D, X)``."""
    _nonempty(ds)
    v = BridgeSet(h2=h2, q1=q1).values(ds, "h2", "q1")
    return float(np.mean((1 - ds.a) * v["h2"] * v["q1"]))


def _eif_terms(ds, v):
    a, y = ds.a, ds.y
    return (
        a * v["q0"] * (v["h1"] - v["h0"]),
        (1 - a) * v["q1"] * (v["h2"] - v["h1"]),
        a * v["q2"] * (y - v["h2"]),
        v["h0"],
    )


def eif_values(ds: Dataset, bridges: BridgeSet, psi: float) -> np.ndarray:
    """Per-row influence function values.

    ``A q0 (h1 - h0) + (1 - A) q1 (h2 - h1) + A q2 (Y - h2) + h0 - psi``; the
    third term carries the treated indicator.
    """
    v = bridges.values(ds, *SLOTS)
    t1, t2, t3, t4 = _eif_terms(ds, v)
    return t1 + t2 + t3 + t4 - psi


def psi_quadr(ds: Dataset, bridges: BridgeSet) -> EstimateReport:
    """Quadruply robust estimate: mean of the uncentered influence function.

    ``diagnostics`` holds the four plug-in estimates computed from the same
    bridges, the four term means and the influence-function standard error.
    """
    _nonempty(ds)
    v = bridges.values(ds, *SLOTS)
    terms = _eif_terms(ds, v)
    phi = terms[0] + terms[1] + terms[2] + terms[3]
    est = float(np.mean(phi))
    a, y = ds.a, ds.y
    diag = {
        "P-OR": float(np.mean(v["h0"])),
        "P-IPW": float(np.mean(a * y * v["q2"])),
        "P-hybrid1": float(np.mean(a * v["h1"] * v["q0"])),
        "P-hybrid2": float(np.mean((1 - a) * v["h2"] * v["q1"])),
        "term_means": [float(np.mean(t)) for t in terms],
        "eif_se": float(np.std(phi, ddof=1) / np.sqrt(ds.n)) if ds.n > 1 else float("nan"),
    }
    return EstimateReport("P-quadR", est, diagnostics=diag)


# --------------------------------------------------------------------------
# E[Y(1)]


def fit_ey1_parametric(ds: Dataset, maps: BridgeMaps | None = None):
    """Linear outcome bridge ``h~(W, X)`` for E[Y(1)] and the treatment bridge ``q0``.

    ``h~`` solves ``sum_i A_i c0_i (Y_i - h~_i) = 0`` with the instruments of
    the ``h0`` fit; ``q0`` is the first stage of the treatment chain.
    """
    maps = maps or BridgeMaps.default()
    if not 0 < ds.a.sum():
        raise EstimationError("no treated units", stage="ey1")
    reg = maps.regressors.get(EY1_KIND, maps.regressors["h0"])
    ins = maps.instruments.get(EY1_KIND, maps.instruments["h0"])
    prob = MomentProblem(ds.a, feature_matrix(ins, ds), feature_matrix(reg, ds), ds.y)
    theta = solve_linear_moment(prob, stage="hy1")
    h = LinearBridge(EY1_KIND, reg, theta)
    q0 = fit_q_chain(ds, maps)[0]
    return h, q0


def ey1_values(ds: Dataset, h, q0) -> np.ndarray:
    """Per-row ``A q0 (Y - h~) + h~`` (uncentered doubly robust influence values)."""
    hv = np.asarray(h.evaluate(ds), dtype=float)
    qv = np.asarray(q0.evaluate(ds), dtype=float)
    return ds.a * qv * (ds.y - hv) + hv


def ey1_proximal(ds: Dataset, mode: str = "doubly-robust", maps: BridgeMaps | None = None,
                 bridges=None) -> float:
    """Proximal estimate of E[Y(1)].

    Parameters
    ----------
    mode : {"outcome-bridge", "treatment-bridge", "doubly-robust"}
    bridges : (h~, q0), optional
        Pre-fitted nuisances; fitted linearly with ``maps`` otherwise.
    """
    _nonempty(ds)
    if mode not in ("outcome-bridge", "treatment-bridge", "doubly-robust"):
        raise ConfigurationError(f"unknown E[Y(1)] mode {mode!r}")
    h, q0 = bridges if bridges is not None else fit_ey1_parametric(ds, maps)
    if mode == "outcome-bridge":
        return float(np.mean(h.evaluate(ds)))
    if mode == "treatment-bridge":
        return float(np.mean(ds.a * ds.y * q0.evaluate(ds)))
    return float(np.mean(ey1_values(ds, h, q0)))


# --------------------------------------------------------------------------
# effect summaries


def ramy_value(ey1: float, psi: float) -> float:
    """Reduction in odds of the event ``Y = 0``: ``1 - odds(p1) / odds(p0)``."""
    p1, p0 = 1.0 - ey1, 1.0 - psi
    return 1.0 - (p1 / (1.0 - p1)) / (p0 / (1.0 - p0))


def ramy_gradient(ey1: float, psi: float):
    """Partial derivatives of :func:`ramy_value` in ``(ey1, psi)``."""
    return psi / ((1.0 - psi) * ey1 ** 2), -((1.0 - ey1) / ey1) / (1.0 - psi) ** 2


def effect_summaries(ey1_hat: float, psi_hat: float, outcome_kind: str = "continuous"):
    """``(P_AMY, R_AMY)``; ``R_AMY`` is ``None`` unless the outcome is binary.

    Binary outcomes follow the 0/1 coding in which ``Y = 0`` is the adverse
    event, so ``p1 = 1 - ey1_hat`` and ``p0 = 1 - psi_hat``.
    """
    if outcome_kind not in ("continuous", "binary"):
        raise ConfigurationError(f"unknown outcome kind {outcome_kind!r}")
    pamy = ey1_hat - psi_hat
    if outcome_kind != "binary":
        return pamy, None
    for name, v in (("ey1_hat", ey1_hat), ("psi_hat", psi_hat)):
        if not 0.0 < v < 1.0:
            raise EstimationError(f"{name}={v} outside (0, 1): odds are degenerate", stage="effects")
    return pamy, ramy_value(ey1_hat, psi_hat)


def effect_reports(ey1_phi, psi_phi, outcome_kind="continuous", level=0.95):
    """E[Y(1)], P_AMY and (binary) R_AMY reports from paired per-row influence values.

    ``ey1_phi`` and ``psi_phi`` are uncentered influence values evaluated on
    the same rows; their means are the point estimates and the delta method on
    the paired values gives the standard errors.
    """
    ey1_phi = np.asarray(ey1_phi, dtype=float)
    psi_phi = np.asarray(psi_phi, dtype=float)
    n = ey1_phi.size

    def se_of(v):
        return float(np.std(v, ddof=1) / np.sqrt(n))

    e1, ps = float(ey1_phi.mean()), float(psi_phi.mean())
    pamy, ramy = effect_summaries(e1, ps, outcome_kind)
    out = [EstimateReport("EY1", e1, se_of(ey1_phi)), EstimateReport("P_AMY", pamy, se_of(ey1_phi - psi_phi))]
    if ramy is not None:
        g1, g0 = ramy_gradient(e1, ps)
        out.append(EstimateReport("R_AMY", ramy, se_of(g1 * ey1_phi + g0 * psi_phi)))
    for r in out:
        r.ci = wald_ci(r.psi_hat, r.se, level)
    return out
