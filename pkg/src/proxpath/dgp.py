"""Structural-equation simulator with interventional counterfactual oracles.

The structural family, in topological order (``U`` latent, scalar)::

    U ~ N(0, 1)
    X = x_int + x_u U + x_sd e_X
    Z = z_int + z_u U + z_x X + z_sd e_Z
    A ~ Bernoulli(expit(a_int + a_u U + a_x.X + a_z.Z))
    D = d_int + d_a A + d_u U + d_x X + d_sd e_D
    M = m_int + m_a A + m_d D + m_u U + m_x X + m_sd e_M
    W = w_int + w_u U + w_x X + w_sd e_W
    Y = y_int + y_a A + y_d.D + y_m.M + y_w.W + y_u U + y_x.X + y_sd e_Y

For ``outcome="binary"`` the last line is replaced by
``Y ~ Bernoulli(expit(y_int + y_a A + ... + y_x.X))`` and ``y_sd`` is unused.
``Z`` only enters the treatment equation and ``W`` only the outcome equation,
so the proxy exclusions hold by construction.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from types import MappingProxyType

import numpy as np
from scipy.special import expit

from .data import BLOCKS, ColumnSchema, Dataset, FeatureSpec
from .errors import ConfigurationError

# parameter name -> shape expressed in block letters ("" = scalar)
PARAM_SHAPES = {
    "x_int": "x", "x_u": "x", "x_sd": "x",
    "z_int": "z", "z_u": "z", "z_x": "zx", "z_sd": "z",
    "a_int": "", "a_u": "", "a_x": "x", "a_z": "z",
    "d_int": "d", "d_a": "d", "d_u": "d", "d_x": "dx", "d_sd": "d",
    "m_int": "m", "m_a": "m", "m_d": "md", "m_u": "m", "m_x": "mx", "m_sd": "m",
    "w_int": "w", "w_u": "w", "w_x": "wx", "w_sd": "w",
    "y_int": "", "y_a": "", "y_d": "d", "y_m": "m", "y_w": "w", "y_u": "", "y_x": "x", "y_sd": "",
}
NOISE_PARAMS = ("x_sd", "z_sd", "d_sd", "m_sd", "w_sd", "y_sd")

# Scalar defaults of the continuous-outcome design.
DEFAULT_COEFS = {
    "x_int": 0.0, "x_u": 0.0, "x_sd": 1.0,
    "z_int": 0.0, "z_u": 0.7, "z_x": 0.25, "z_sd": 1.0,
    "a_int": 0.2, "a_u": 1.0, "a_x": 0.25, "a_z": -0.5,
    "d_int": 0.0, "d_a": 0.1, "d_u": 0.5, "d_x": 0.25, "d_sd": 1.0,
    "m_int": 0.0, "m_a": 0.15, "m_d": 0.5, "m_u": 0.5, "m_x": 0.25, "m_sd": 1.0,
    "w_int": 0.0, "w_u": 1.0, "w_x": 0.25, "w_sd": 0.3,
    "y_int": 0.0, "y_a": 0.5, "y_d": 0.5, "y_m": 1.0, "y_w": 0.5, "y_u": 1.0, "y_x": 0.5, "y_sd": 1.0,
}
# Logistic outcome equation of the binary design, kept mild so that linear
# bridges stay close to the logit-linear truth.
BINARY_Y_COEFS = {
    "y_int": 0.5, "y_a": 0.15, "y_d": 0.15, "y_m": 0.3, "y_w": 0.15, "y_u": 0.3, "y_x": 0.15,
}


def _shape(code, schema):
    return tuple(schema.dim(c) for c in code)


@dataclass(frozen=True, eq=False)
class ScenarioSpec:
    """Coefficients of the structural equations plus the outcome kind.

    ``params`` maps each name of :data:`PARAM_SHAPES` to a read-only float array
    of the declared shape (a vector over a block, a matrix between two blocks,
    or a scalar).
    """

    schema: ColumnSchema
    params: MappingProxyType
    outcome: str = "continuous"

    def __post_init__(self):
        if self.outcome not in ("continuous", "binary"):
            raise ConfigurationError(f"outcome must be 'continuous' or 'binary', got {self.outcome!r}")
        clean = {}
        missing = set(PARAM_SHAPES) - set(self.params)
        if missing:
            raise ConfigurationError(f"missing scenario parameters: {sorted(missing)}")
        unknown = set(self.params) - set(PARAM_SHAPES)
        if unknown:
            raise ConfigurationError(f"unknown scenario parameters: {sorted(unknown)}")
        for name, code in PARAM_SHAPES.items():
            shp = _shape(code, self.schema)
            arr = np.array(self.params[name], dtype=float)
            if arr.shape != shp:
                if arr.size == np.prod(shp, dtype=int) and arr.size > 0:
                    arr = arr.reshape(shp)
                else:
                    raise ConfigurationError(f"parameter {name} has shape {arr.shape}, expected {shp}")
            if not np.all(np.isfinite(arr)):
                raise ConfigurationError(f"parameter {name} is not finite")
            if name in NOISE_PARAMS and np.any(arr <= 0):
                raise ConfigurationError(f"noise scale {name} must be positive")
            arr.setflags(write=False)
            clean[name] = arr
        object.__setattr__(self, "params", MappingProxyType(clean))

    def __getitem__(self, name):
        return self.params[name]

    def __reduce__(self):
        return (type(self), (self.schema, dict(self.params), self.outcome))

    def __eq__(self, other):
        if not isinstance(other, ScenarioSpec):
            return NotImplemented
        return (self.schema == other.schema and self.outcome == other.outcome
                and all(np.array_equal(self.params[k], other.params[k]) for k in PARAM_SHAPES))

    def replace(self, outcome=None, **updates) -> "ScenarioSpec":
        p = dict(self.params)
        for k, v in updates.items():
            if k not in PARAM_SHAPES:
                raise ConfigurationError(f"unknown scenario parameter {k!r}")
            arr = np.asarray(v, dtype=float)
            p[k] = arr if arr.ndim else np.broadcast_to(arr, _shape(PARAM_SHAPES[k], self.schema))
        return ScenarioSpec(self.schema, p, outcome or self.outcome)

    def to_dict(self) -> dict:
        out = {"outcome": self.outcome, "dims": {b: self.schema.dim(b) for b in BLOCKS}}
        coefs = {}
        for k in PARAM_SHAPES:
            v = self.params[k]
            coefs[k] = float(v) if v.ndim == 0 else v.tolist()
        out["coefficients"] = coefs
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        """Inverse of :meth:`to_dict`.

        Missing coefficients fall back to the default design; scalar values are
        broadcast to the block shape, so ``{"coefficients": {"y_m": 2.0}}`` is a
        complete specification.
        """
        schema = ColumnSchema(**d.get("dims", {}))
        outcome = d.get("outcome", "continuous")
        base = default_spec(schema, outcome)
        coefs = d.get("coefficients", {})
        return base.replace(**coefs) if coefs else base


def default_spec(schema: ColumnSchema | None = None, outcome: str = "continuous") -> ScenarioSpec:
    """Default design.

    With all blocks univariate this is the tuned linear-Gaussian design used by
    the acceptance experiments.  For wider blocks every scalar default is
    broadcast; cross-block loadings and outcome coefficients are divided by the
    width of the source block so that variances stay comparable.
    """
    schema = schema or ColumnSchema()
    coefs = dict(DEFAULT_COEFS)
    if outcome == "binary":
        coefs.update(BINARY_Y_COEFS)
    params = {}
    for name, code in PARAM_SHAPES.items():
        shp = _shape(code, schema)
        val = coefs[name]
        src = None
        if len(code) == 2:
            src = code[1]
        elif name in ("y_d", "y_m", "y_w", "y_x", "a_x", "a_z"):
            src = code[0]
        if src is not None and schema.dim(src) > 0:
            val = val / schema.dim(src)
        params[name] = np.full(shp, val)
    return ScenarioSpec(schema, params, outcome)


# --------------------------------------------------------------------------
# seed streams


def seed_stream(root, *key) -> np.random.SeedSequence:
    """Independent stream ``key`` of root seed ``root``.

    A pure function of ``(root, key)``; different keys give statistically
    independent streams regardless of the order in which they are requested.
    """
    key = tuple(int(k) for k in key)
    if isinstance(root, np.random.SeedSequence):
        return np.random.SeedSequence(root.entropy, spawn_key=tuple(root.spawn_key) + key)
    return np.random.SeedSequence(int(root), spawn_key=key)


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


# --------------------------------------------------------------------------
# simulation


def _lin(mat, v):
    return v @ mat.T


def _draw_background(spec, n, rng):
    s = spec.schema
    U = rng.standard_normal(n)
    X = spec["x_int"] + np.outer(U, spec["x_u"]) + rng.standard_normal((n, s.x)) * spec["x_sd"]
    return U, X


def _d_eq(spec, a, U, X, eps):
    return spec["d_int"] + np.outer(a, spec["d_a"]) + np.outer(U, spec["d_u"]) + _lin(spec["d_x"], X) + eps * spec["d_sd"]


def _m_eq(spec, a, D, U, X, eps):
    return (spec["m_int"] + np.outer(a, spec["m_a"]) + _lin(spec["m_d"], D) + np.outer(U, spec["m_u"])
            + _lin(spec["m_x"], X) + eps * spec["m_sd"])


def _w_eq(spec, U, X, eps):
    return spec["w_int"] + np.outer(U, spec["w_u"]) + _lin(spec["w_x"], X) + eps * spec["w_sd"]


def _y_index(spec, a, D, M, W, U, X):
    return (spec["y_int"] + spec["y_a"] * a + D @ spec["y_d"] + M @ spec["y_m"] + W @ spec["y_w"]
            + spec["y_u"] * U + X @ spec["y_x"])


def simulate(spec: ScenarioSpec, n: int, seed=None) -> Dataset:
    """Draw ``n`` i.i.d. units; the latent ``U`` is not returned."""
    if int(n) < 1:
        raise ConfigurationError("n must be at least 1")
    n = int(n)
    s = spec.schema
    rng = _rng(seed)
    U, X = _draw_background(spec, n, rng)
    Z = spec["z_int"] + np.outer(U, spec["z_u"]) + _lin(spec["z_x"], X) + rng.standard_normal((n, s.z)) * spec["z_sd"]
    lin_a = spec["a_int"] + spec["a_u"] * U + X @ spec["a_x"] + Z @ spec["a_z"]
    A = (rng.random(n) < expit(lin_a)).astype(float)
    D = _d_eq(spec, A, U, X, rng.standard_normal((n, s.d)))
    M = _m_eq(spec, A, D, U, X, rng.standard_normal((n, s.m)))
    W = _w_eq(spec, U, X, rng.standard_normal((n, s.w)))
    eta = _y_index(spec, A, D, M, W, U, X)
    if spec.outcome == "binary":
        Y = (rng.random(n) < expit(eta)).astype(float)
    else:
        Y = eta + spec["y_sd"] * rng.standard_normal(n)
    return Dataset(Y, A, D, M, Z, W, X, schema=s)


def propensity_mean(spec: ScenarioSpec, nodes: int = 80) -> float:
    """E[A] by Gauss-Hermite quadrature (univariate default design only).

    Given ``X`` and ``Z`` linear in ``U`` plus independent Gaussian noise, the
    treatment index is Gaussian with known mean and variance, so
    ``E[A] = E[expit(N(mu, s2))]`` is a one-dimensional integral.
    """
    s = spec.schema
    if s.x > 1 or s.z > 1:
        raise ConfigurationError("quadrature oracle implemented for univariate X and Z")
    ax = float(spec["a_x"][0]) if s.x else 0.0
    az = float(spec["a_z"][0])
    zx = float(spec["z_x"].reshape(-1)[0]) if s.x else 0.0
    xu = float(spec["x_u"][0]) if s.x else 0.0
    x_int = float(spec["x_int"][0]) if s.x else 0.0
    x_sd = float(spec["x_sd"][0]) if s.x else 0.0
    # index = c + bU U + bX eX + bZ eZ
    c = spec["a_int"] + ax * x_int + az * (spec["z_int"][0] + zx * x_int)
    b_u = spec["a_u"] + ax * xu + az * (spec["z_u"][0] + zx * xu)
    b_x = (ax + az * zx) * x_sd
    b_z = az * spec["z_sd"][0]
    var = float(b_u ** 2 + b_x ** 2 + b_z ** 2)
    t, wts = np.polynomial.hermite_e.hermegauss(nodes)
    return float(np.sum(wts * expit(float(c) + np.sqrt(var) * t)) / np.sqrt(2 * np.pi))


# --------------------------------------------------------------------------
# counterfactual oracles


def _counterfactual_means(spec, n_mc, seed, chunk=250_000):
    """Per-draw conditional means of Y(1,D(1),M(0,D(1))) and Y(1,D(1),M(1,D(1))).

    The outcome noise (or the Bernoulli draw for binary outcomes) is integrated
    out analytically, which leaves the estimand unchanged and only removes
    Monte Carlo noise.
    """
    rng = _rng(seed)
    s = spec.schema
    vals0, vals1 = [], []
    left = n_mc
    while left > 0:
        k = min(chunk, left)
        left -= k
        U, X = _draw_background(spec, k, rng)
        one = np.ones(k)
        D1 = _d_eq(spec, one, U, X, rng.standard_normal((k, s.d)))
        eps_m = rng.standard_normal((k, s.m))
        M0 = _m_eq(spec, 0 * one, D1, U, X, eps_m)
        M1 = _m_eq(spec, one, D1, U, X, eps_m)
        W = _w_eq(spec, U, X, rng.standard_normal((k, s.w)))
        e0 = _y_index(spec, one, D1, M0, W, U, X)
        e1 = _y_index(spec, one, D1, M1, W, U, X)
        if spec.outcome == "binary":
            e0, e1 = expit(e0), expit(e1)
        vals0.append(np.broadcast_to(e0, (k,)))
        vals1.append(np.broadcast_to(e1, (k,)))
    return np.concatenate(vals0), np.concatenate(vals1)


def _mean_se(v):
    v = np.asarray(v, dtype=float)
    if v.size < 2 or np.ptp(v) == 0:
        return float(v.mean()), 0.0
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size))


def _check_nmc(n_mc):
    if int(n_mc) < 10_000:
        raise ConfigurationError("n_mc must be at least 10^4")
    return int(n_mc)


def oracle_psi(spec: ScenarioSpec, n_mc: int = 1_000_000, seed=0):
    """Monte Carlo value of E[Y(1, D(1), M(0, D(1)))] and its standard error."""
    v0, _ = _counterfactual_means(spec, _check_nmc(n_mc), seed)
    return _mean_se(v0)


def oracle_ey1(spec: ScenarioSpec, n_mc: int = 1_000_000, seed=0):
    """Monte Carlo value of E[Y(1)] = E[Y(1, D(1), M(1, D(1)))] and its standard error."""
    _, v1 = _counterfactual_means(spec, _check_nmc(n_mc), seed)
    return _mean_se(v1)


@dataclass(frozen=True)
class OracleEffects:
    psi: float
    psi_se: float
    ey1: float
    ey1_se: float
    pamy: float
    pamy_se: float
    ramy: float | None = None
    ramy_se: float | None = None


def oracle_effects(spec: ScenarioSpec, n_mc: int = 1_000_000, seed=0) -> OracleEffects:
    """All oracle quantities from one set of common random numbers.

    The reduction in odds (only for binary outcomes) uses the delta method for
    its Monte Carlo standard error.
    """
    v0, v1 = _counterfactual_means(spec, _check_nmc(n_mc), seed)
    psi, psi_se = _mean_se(v0)
    ey1, ey1_se = _mean_se(v1)
    pamy, pamy_se = _mean_se(v1 - v0)
    ramy = ramy_se = None
    if spec.outcome == "binary":
        from .estimators import ramy_value, ramy_gradient
        ramy = ramy_value(ey1, psi)
        g1, g0 = ramy_gradient(ey1, psi)
        _, ramy_se = _mean_se(g1 * v1 + g0 * v0)
    return OracleEffects(psi, psi_se, ey1, ey1_se, pamy, pamy_se, ramy, ramy_se)


def closed_form_psi(spec: ScenarioSpec):
    """Exact (psi, E[Y(1)]) for a continuous-outcome spec by linear composition."""
    if spec.outcome != "continuous":
        raise ConfigurationError("closed form only exists for the linear outcome equation")
    ex = spec["x_int"]
    ed1 = spec["d_int"] + spec["d_a"] + spec["d_x"] @ ex
    em0 = spec["m_int"] + spec["m_d"] @ ed1 + spec["m_x"] @ ex
    em1 = em0 + spec["m_a"]
    ew = spec["w_int"] + spec["w_x"] @ ex
    base = spec["y_int"] + spec["y_a"] + spec["y_d"] @ ed1 + spec["y_w"] @ ew + spec["y_x"] @ ex
    return float(base + spec["y_m"] @ em0), float(base + spec["y_m"] @ em1)


# --------------------------------------------------------------------------
# misspecification


class MisspecificationMode(enum.Enum):
    NONE = "none"
    SCENARIO2 = "scenario2"
    SCENARIO3 = "scenario3"
    SCENARIO4 = "scenario4"
    SCENARIO5 = "scenario5"

    @property
    def targets(self) -> frozenset:
        return _TARGETS[self]

    @property
    def scenario(self) -> int:
        return 1 if self is MisspecificationMode.NONE else int(self.value[-1])

    @classmethod
    def for_scenario(cls, k: int) -> "MisspecificationMode":
        if k == 1:
            return cls.NONE
        try:
            return cls(f"scenario{int(k)}")
        except ValueError:
            raise ConfigurationError(f"unknown scenario {k!r}; valid are 1-5") from None


_TARGETS = {
    MisspecificationMode.NONE: frozenset(),
    MisspecificationMode.SCENARIO2: frozenset({"q0", "q1", "q2"}),
    MisspecificationMode.SCENARIO3: frozenset({"h2", "h1", "h0"}),
    MisspecificationMode.SCENARIO4: frozenset({"h0", "q1", "q2"}),
    MisspecificationMode.SCENARIO5: frozenset({"h1", "h0", "q2"}),
}

# Estimators that stay consistent in each scenario (P-quadR is consistent in all).
CONSISTENT = {
    1: frozenset({"P-OR", "P-IPW", "P-hybrid1", "P-hybrid2", "P-quadR"}),
    2: frozenset({"P-OR", "P-quadR"}),
    3: frozenset({"P-IPW", "P-quadR"}),
    4: frozenset({"P-hybrid1", "P-quadR"}),
    5: frozenset({"P-hybrid2", "P-quadR"}),
}


def corrupted_feature_map(base: FeatureSpec, mode: MisspecificationMode) -> FeatureSpec:
    """Attach the corruption transform if ``mode`` targets the fit ``base`` serves."""
    if base.serves is not None and base.serves in mode.targets:
        return base.with_transform("corrupted")
    return base
