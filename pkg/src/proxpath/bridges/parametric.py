"""Linear-in-parameter bridges fitted by exactly identified estimating equations.

Outcome chain (fitted h2 -> h1 -> h0)::

    sum_i A_i     c2_i (Y_i    - h2_i) = 0
    sum_i (1-A_i) c1_i (h2_i   - h1_i) = 0
    sum_i A_i     c0_i (h1_i   - h0_i) = 0

Treatment chain (fitted q0 -> q1 -> q2)::

    sum_i (A_i q0_i         - 1)             b0_i = 0
    sum_i ((1-A_i) q1_i     - A_i q0_i)      b1_i = 0
    sum_i (A_i q2_i         - (1-A_i) q1_i)  b2_i = 0

All sums accept nonnegative row weights; integer weights are equivalent to
fitting on a dataset where row ``i`` appears ``w_i`` times, which is how the
bootstrap evaluates many resamples in one batched pass.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..data import Dataset, FeatureSpec, feature_matrix
from ..errors import ConfigurationError, EstimationError

H_KINDS = ("h2", "h1", "h0")
Q_KINDS = ("q0", "q1", "q2")
KINDS = H_KINDS + Q_KINDS
# outcome bridge h~(W, X) of E[Y(1)]
EY1_KIND = "hy1"

SINGULAR_RTOL = 1e-10
RIDGE_RTOL = 1e-8


class RidgeWarning(UserWarning):
    """Emitted when a near-singular moment matrix is rescued by a ridge term."""


@dataclass(frozen=True)
class MomentProblem:
    """Exactly identified linear moment system ``sum_i s_i C_i (u_i + o_i - Phi_i' theta) = 0``."""

    s: np.ndarray
    C: np.ndarray
    Phi: np.ndarray
    u: np.ndarray
    o: np.ndarray | None = None

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float).reshape(-1)
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        Phi = np.atleast_2d(np.asarray(self.Phi, dtype=float))
        u = np.asarray(self.u, dtype=float).reshape(-1)
        o = np.zeros_like(u) if self.o is None else np.asarray(self.o, dtype=float).reshape(-1)
        n = s.shape[0]
        if not (C.shape[0] == Phi.shape[0] == u.shape[0] == o.shape[0] == n):
            raise ConfigurationError("moment problem components have unequal row counts")
        if C.shape[1] != Phi.shape[1]:
            raise ConfigurationError(
                f"instrument dimension {C.shape[1]} != regressor dimension {Phi.shape[1]}"
            )
        for k, v in (("s", s), ("C", C), ("Phi", Phi), ("u", u), ("o", o)):
            object.__setattr__(self, k, v)

    def moment(self, theta) -> np.ndarray:
        """Summed moment vector at ``theta``."""
        return (self.C * self.s[:, None]).T @ (self.u + self.o - self.Phi @ np.asarray(theta))


def _batched_solve(G, rhs, stage):
    """Solve ``G[b] theta[b] = rhs[b]`` with the one-shot ridge rescue."""
    sv = np.linalg.svd(G, compute_uv=False)
    gnorm = sv[:, 0]
    bad = (sv[:, -1] < SINGULAR_RTOL * gnorm) | (gnorm == 0)
    if np.any(bad):
        if np.any(gnorm[bad] == 0):
            raise EstimationError("moment matrix is identically zero (empty effective sample)",
                                  stage=stage, smallest_singular_value=0.0)
        k = G.shape[-1]
        G = G.copy()
        G[bad] += (RIDGE_RTOL * gnorm[bad])[:, None, None] * np.eye(k)
        sv2 = np.linalg.svd(G[bad], compute_uv=False)
        if np.any(sv2[:, -1] < SINGULAR_RTOL * sv2[:, 0]):
            smin = float(sv[bad][:, -1].min())
            raise EstimationError(f"moment matrix singular beyond ridge rescue, smallest singular value {smin:.3e}",
                                  stage=stage, smallest_singular_value=smin)
        warnings.warn(f"[{stage}] near-singular moment matrix, added ridge {RIDGE_RTOL:g}*||G||",
                      RidgeWarning, stacklevel=3)
    return np.linalg.solve(G, rhs[..., None])[..., 0]


def _gram(ws, C, Phi):
    # ws (B, n); returns sum_i ws_bi C_i Phi_i' with shape (B, k, k)
    k = C.shape[1]
    outer = (C[:, :, None] * Phi[:, None, :]).reshape(C.shape[0], k * k)
    return (ws @ outer).reshape(-1, k, k)


def solve_linear_moment(p: MomentProblem, stage: str = "moment") -> np.ndarray:
    """Coefficient vector solving the moment system of ``p``.

    Raises
    ------
    EstimationError
        If the moment matrix is singular even after one ridge rescue.
    """
    G = _gram(p.s[None, :], p.C, p.Phi)
    rhs = ((p.s * (p.u + p.o)) @ p.C)[None, :]
    return _batched_solve(G, rhs, stage)[0]


# --------------------------------------------------------------------------
# feature maps of the six fits


def _fs(kind, part, roles, binary):
    return FeatureSpec(f"{kind}.{part}", ("intercept",) + roles, "identity", kind, binary)


_ROLES = {
    # kind: (regressor roles, instrument roles)
    "h2": (("w", "m", "d", "x"), ("z", "m", "d", "x")),
    "h1": (("w", "d", "x"), ("z", "d", "x")),
    "h0": (("w", "x"), ("z", "x")),
    "q0": (("z", "x"), ("w", "x")),
    "q1": (("z", "d", "x"), ("w", "d", "x")),
    "q2": (("z", "m", "d", "x"), ("w", "m", "d", "x")),
    EY1_KIND: (("w", "x"), ("z", "x")),
}


@dataclass(frozen=True)
class BridgeMaps:
    """Regressor and instrument feature maps for each of the six fits."""

    regressors: dict
    instruments: dict

    @classmethod
    def default(cls, binary=frozenset()) -> "BridgeMaps":
        """Intercept plus raw inputs, i.e. ``c2 = (1, Z, M, D, X)`` and so on."""
        reg = {k: _fs(k, "reg", r, binary) for k, (r, _) in _ROLES.items()}
        ins = {k: _fs(k, "inst", i, binary) for k, (_, i) in _ROLES.items()}
        return cls(reg, ins)

    def corrupted(self, mode) -> "BridgeMaps":
        """Both the regressor and the instrument map of every targeted fit are corrupted."""
        from ..dgp import corrupted_feature_map
        return BridgeMaps(
            {k: corrupted_feature_map(v, mode) for k, v in self.regressors.items()},
            {k: corrupted_feature_map(v, mode) for k, v in self.instruments.items()},
        )


# --------------------------------------------------------------------------
# fitted bridges


@dataclass(frozen=True, eq=False)
class LinearBridge:
    kind: str
    regressors: FeatureSpec
    coefficients: np.ndarray

    def __post_init__(self):
        if self.kind not in KINDS + (EY1_KIND,):
            raise ConfigurationError(f"unknown bridge kind {self.kind!r}")
        c = np.array(self.coefficients, dtype=float).reshape(-1)
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    def evaluate(self, ds: Dataset) -> np.ndarray:
        Phi = feature_matrix(self.regressors, ds)
        if Phi.shape[1] != self.coefficients.size:
            raise ConfigurationError(
                f"bridge {self.kind} has {self.coefficients.size} coefficients, features have {Phi.shape[1]}"
            )
        return Phi @ self.coefficients

    __call__ = evaluate

    def to_text(self) -> str:
        r = self.regressors
        return "\n".join([
            "bridge linear",
            f"kind {self.kind}",
            f"map {r.id}",
            f"roles {','.join(r.roles)}",
            f"transform {r.transform}",
            f"binary {','.join(sorted(r.binary))}",
            "coefficients " + " ".join(repr(float(c)) for c in self.coefficients),
        ]) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "LinearBridge":
        fields = {}
        for line in text.strip().splitlines():
            key, _, val = line.partition(" ")
            fields[key] = val.strip()
        if fields.get("bridge") != "linear":
            raise ConfigurationError("not a linear bridge record")
        roles = tuple(r for r in fields["roles"].split(",") if r)
        binary = frozenset(b for b in fields.get("binary", "").split(",") if b)
        spec = FeatureSpec(fields["map"], roles, fields["transform"], fields["kind"], binary)
        coefs = np.array([float(c) for c in fields["coefficients"].split()])
        return cls(fields["kind"], spec, coefs)


def negative_fraction(values) -> float:
    """Share of negative fitted values (q bridges are never constrained positive)."""
    values = np.asarray(values)
    return float(np.mean(values < 0)) if values.size else 0.0


# --------------------------------------------------------------------------
# batched chain fitting


class ParametricDesign:
    """All twelve feature matrices of one dataset, ready for weighted refits.

    Parameters
    ----------
    ds : Dataset
    maps : BridgeMaps, optional
        Defaults to :meth:`BridgeMaps.default`.
    """

    def __init__(self, ds: Dataset, maps: BridgeMaps | None = None):
        self.maps = maps or BridgeMaps.default()
        self.n = ds.n
        self.y = ds.y
        self.a = ds.a
        self.reg = {k: feature_matrix(self.maps.regressors[k], ds) for k in KINDS}
        self.inst = {k: feature_matrix(self.maps.instruments[k], ds) for k in KINDS}
        for k in KINDS:
            if self.reg[k].shape[1] != self.inst[k].shape[1]:
                raise ConfigurationError(f"fit {k}: instrument and regressor dimensions differ")

    def _weights(self, weights):
        if weights is None:
            return np.ones((1, self.n))
        w = np.atleast_2d(np.asarray(weights, dtype=float))
        if w.shape[1] != self.n:
            raise ConfigurationError("weight vector length differs from the number of rows")
        return w

    def _stage(self, kind, ws, C, Phi, target):
        G = _gram(ws, C, Phi)
        rhs = (ws * target) @ C if target.ndim == 2 else ws @ (C * target[:, None])
        return _batched_solve(G, rhs, kind)

    def fit_h(self, weights=None):
        """Coefficients (B, k) and fitted values (B, n) of h2, h1, h0."""
        w = self._weights(weights)
        a = self.a
        coef, fit = {}, {}
        target = self.y
        for kind, s in (("h2", a), ("h1", 1 - a), ("h0", a)):
            theta = self._stage(kind, w * s, self.inst[kind], self.reg[kind], target)
            coef[kind] = theta
            fit[kind] = theta @ self.reg[kind].T
            target = fit[kind]
        return coef, fit

    def fit_q(self, weights=None):
        """Coefficients (B, k) and fitted values (B, n) of q0, q1, q2."""
        w = self._weights(weights)
        a = self.a
        coef, fit = {}, {}
        target = np.ones(self.n)
        for kind, s_phi, s_next in (("q0", a, a), ("q1", 1 - a, 1 - a), ("q2", a, None)):
            Phi = self.reg[kind] * s_phi[:, None]
            theta = self._stage(kind, w, self.inst[kind], Phi, target)
            coef[kind] = theta
            fit[kind] = theta @ self.reg[kind].T
            if s_next is not None:
                target = fit[kind] * s_next
        return coef, fit

    def bridges(self, coef) -> dict:
        """LinearBridge objects from the first row of a coefficient dict."""
        return {k: LinearBridge(k, self.maps.regressors[k], v[0]) for k, v in coef.items()}

    def estimates(self, weights=None) -> np.ndarray:
        """Weighted P-OR, P-IPW, P-hybrid1, P-hybrid2, P-quadR, shape (B, 5)."""
        w = self._weights(weights)
        _, h = self.fit_h(w)
        _, q = self.fit_q(w)
        a, y = self.a, self.y
        tot = w.sum(axis=1)
        terms = [
            h["h0"],
            a * y * q["q2"],
            a * h["h1"] * q["q0"],
            (1 - a) * h["h2"] * q["q1"],
            a * q["q0"] * (h["h1"] - h["h0"]) + (1 - a) * q["q1"] * (h["h2"] - h["h1"])
            + a * q["q2"] * (y - h["h2"]) + h["h0"],
        ]
        return np.column_stack([(w * t).sum(axis=1) / tot for t in terms])


def _require_both_arms(ds):
    n1 = int(ds.a.sum())
    if n1 == 0 or n1 == ds.n:
        raise EstimationError("both treatment arms must be present", stage="data")


def fit_h_chain(ds: Dataset, maps: BridgeMaps | None = None):
    """Fit ``(h2, h1, h0)`` in that order; errors carry the failing stage."""
    _require_both_arms(ds)
    design = ParametricDesign(ds, maps)
    coef, _ = design.fit_h()
    b = design.bridges(coef)
    return b["h2"], b["h1"], b["h0"]


def fit_q_chain(ds: Dataset, maps: BridgeMaps | None = None):
    """Fit ``(q0, q1, q2)`` in that order without ever modelling a propensity score."""
    _require_both_arms(ds)
    design = ParametricDesign(ds, maps)
    coef, _ = design.fit_q()
    b = design.bridges(coef)
    return b["q0"], b["q1"], b["q2"]


def fit_all_parametric(ds: Dataset, maps: BridgeMaps | None = None) -> dict:
    """All six linear bridges keyed by kind."""
    _require_both_arms(ds)
    design = ParametricDesign(ds, maps)
    out = design.bridges(design.fit_h()[0])
    out.update(design.bridges(design.fit_q()[0]))
    return out


def moment_residuals(ds: Dataset, bridges: dict, maps: BridgeMaps | None = None) -> dict:
    """Mean empirical moment vector of each estimating equation at ``bridges``."""
    maps = maps or BridgeMaps.default()
    a, y = ds.a, ds.y
    v = {k: b.evaluate(ds) for k, b in bridges.items()}
    inst = {k: feature_matrix(maps.instruments[k], ds) for k in bridges}
    res = {}
    rho = {
        "h2": a * (y - v.get("h2", 0)),
        "h1": (1 - a) * (v.get("h2", 0) - v.get("h1", 0)),
        "h0": a * (v.get("h1", 0) - v.get("h0", 0)),
        "q0": a * v.get("q0", 0) - 1,
        "q1": (1 - a) * v.get("q1", 0) - a * v.get("q0", 0),
        "q2": a * v.get("q2", 0) - (1 - a) * v.get("q1", 0),
    }
    for k in bridges:
        res[k] = inst[k].T @ rho[k] / ds.n
    return res
