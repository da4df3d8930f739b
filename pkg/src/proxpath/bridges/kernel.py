"""Kernel minimax estimation of bridge functions.

Each bridge solves a regularized saddle problem over Gaussian RKHSs::

    min_h max_f  (1/m) sum_i rho_i(h) f(v_i) - (1/m) sum_i f(v_i)^2
                 - lam_f ||f||^2 + lam_h ||h||^2,
    rho_i(h) = u_i + s_i h(x_i).

By the representer property ``h = K_h alpha`` and ``f = K_f beta``.  The inner
maximizer is ``beta = ((2/m) K_f + 2 lam_f I)^{-1} rho / m`` and the profiled
objective is the quadratic

    J(alpha) = rho' P rho / (4m) + lam_h alpha' K_h alpha,
    P = K_f (K_f + m lam_f I)^{-1},

minimized by ``(S P S K_h + 4 m lam_h I) alpha = -S P u``.  Rows with
``s_i = 0`` get ``alpha_i = 0``, so only rows with ``s_i != 0`` support ``h``.

Above a size cap both function classes are restricted to the span of kernels
at a seeded uniform subset of landmark rows (subset of regressors), which
turns every solve into an ``r x r`` problem.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist, pdist

from ..data import Dataset
from ..errors import ConfigurationError, EstimationError, NumericalError

JITTER = 1e-8
DEFAULT_GRID = (1e-1, 1e-2, 1e-3, 1e-4)

# kind: (rows, hypothesis roles, instrument roles)
SADDLE_LAYOUT = {
    "h2": ("treated", ("w", "m", "d", "x"), ("z", "m", "d", "x")),
    "h1": ("control", ("w", "d", "x"), ("z", "d", "x")),
    "h0": ("treated", ("w", "x"), ("z", "x")),
    "q0": ("all", ("z", "x"), ("w", "x")),
    "q1": ("all", ("z", "d", "x"), ("w", "d", "x")),
    "q2": ("all", ("z", "m", "d", "x"), ("w", "m", "d", "x")),
    "hy1": ("treated", ("w", "x"), ("z", "x")),
}


@dataclass(frozen=True)
class KernelSpec:
    """Product Gaussian kernel over input blocks.

    ``k(v, v') = offset + exp(-sum_b ||v_b - v'_b||^2 / (2 bandwidth_b^2))``
    where the blocks are laid out in ``roles`` order with column counts
    ``widths``.  A positive ``offset`` puts the constants in the RKHS, with
    ``||c||^2 = c^2 / offset``.
    """

    roles: tuple
    widths: tuple
    bandwidths: tuple
    family: str = "rbf"
    offset: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "roles", tuple(self.roles))
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        object.__setattr__(self, "bandwidths", tuple(float(b) for b in self.bandwidths))
        if self.family != "rbf":
            raise ConfigurationError("only the Gaussian RBF family is supported")
        if not len(self.roles) == len(self.widths) == len(self.bandwidths):
            raise ConfigurationError("roles, widths and bandwidths must align")
        if any(not b > 0 for b in self.bandwidths):
            raise ConfigurationError("bandwidths must be positive")
        object.__setattr__(self, "offset", float(self.offset))
        if not self.offset >= 0:
            raise ConfigurationError("kernel offset must be non-negative")

    def _scale(self, V):
        V = np.asarray(V, dtype=float)
        scale = np.repeat(1.0 / np.asarray(self.bandwidths), self.widths)
        if V.shape[1] != scale.size:
            raise ConfigurationError(f"kernel expects {scale.size} input columns, got {V.shape[1]}")
        return V * scale

    def gram(self, V1, V2=None) -> np.ndarray:
        A = self._scale(V1)
        B = A if V2 is None else self._scale(V2)
        if A.shape[1] == 0:
            return np.full((A.shape[0], B.shape[0]), 1.0 + self.offset)
        K = np.exp(-0.5 * cdist(A, B, "sqeuclidean"))
        if self.offset:
            K += self.offset
        return K

    def inputs(self, ds: Dataset) -> np.ndarray:
        cols = [ds.block(r) for r in self.roles]
        return np.concatenate(cols, axis=1) if cols else np.zeros((ds.n, 0))


def block_inputs(ds: Dataset, roles) -> tuple[np.ndarray, tuple, tuple]:
    """Concatenated input matrix of ``roles`` (empty blocks dropped), roles, widths."""
    kept = tuple(r for r in roles if ds.schema.dim(r) > 0)
    widths = tuple(ds.schema.dim(r) for r in kept)
    V = np.concatenate([ds.block(r) for r in kept], axis=1) if kept else np.zeros((ds.n, 0))
    return V, kept, widths


def _median_positive(d):
    d = d[d > 0]
    return float(np.median(d)) if d.size else 1.0


def median_heuristic(V, widths, max_rows=500) -> tuple:
    """Per-block bandwidths for the product RBF kernel.

    Each block is first scaled by its own median pairwise distance; all
    blocks are then stretched by the median pairwise distance of the scaled
    joint inputs.  With one block this is the plain median heuristic, and with
    several blocks the typical joint distance stays at one bandwidth instead of
    growing like the square root of the number of blocks.
    """
    V = np.asarray(V, dtype=float)
    m = V.shape[0]
    if not widths:
        return ()
    idx = np.unique(np.linspace(0, m - 1, min(m, max_rows)).astype(int))
    sub = V[idx]
    if sub.shape[0] < 2:
        return tuple(1.0 for _ in widths)
    per, j = [], 0
    for w in widths:
        per.append(_median_positive(pdist(sub[:, j:j + w])))
        j += w
    joint = _median_positive(pdist(sub / np.repeat(per, widths)))
    return tuple(b * joint for b in per)


@dataclass(frozen=True, eq=False)
class SaddleProblem:
    """Residual ``rho = u + s * h(hyp)``, test functions on ``inst``."""

    u: np.ndarray
    s: np.ndarray
    hyp: np.ndarray
    inst: np.ndarray
    lam_h: float
    lam_f: float

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float).reshape(-1)
        s = np.asarray(self.s, dtype=float).reshape(-1)
        hyp = np.asarray(self.hyp, dtype=float).reshape(u.size, -1)
        inst = np.asarray(self.inst, dtype=float).reshape(u.size, -1)
        if not (u.size == s.size == hyp.shape[0] == inst.shape[0]):
            raise ConfigurationError("saddle problem components have unequal row counts")
        if u.size == 0:
            raise ConfigurationError("saddle problem has no rows")
        if not (self.lam_h > 0 and self.lam_f > 0):
            raise ConfigurationError("penalties lam_h and lam_f must be positive")
        for k, v in (("u", u), ("s", s), ("hyp", hyp), ("inst", inst)):
            object.__setattr__(self, k, v)

    @property
    def m(self):
        return self.u.size

    def with_penalties(self, lam_h, lam_f):
        return SaddleProblem(self.u, self.s, self.hyp, self.inst, lam_h, lam_f)


@dataclass(eq=False)
class KernelBridge:
    """``h(v) = sum_i alpha_i k(support_i, v)`` with ``v`` built from ``kspec.roles``."""

    kind: str
    support: np.ndarray
    alpha: np.ndarray
    kspec: KernelSpec
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.support = np.asarray(self.support, dtype=float).reshape(len(self.alpha), -1)
        self.alpha = np.asarray(self.alpha, dtype=float).reshape(-1)
        if self.support.shape[0] != self.alpha.size:
            raise ConfigurationError("support rows and alpha length differ")

    def evaluate_inputs(self, V) -> np.ndarray:
        if self.alpha.size == 0:
            return np.zeros(np.asarray(V).shape[0])
        return self.kspec.gram(V, self.support) @ self.alpha

    def evaluate(self, ds: Dataset) -> np.ndarray:
        return self.evaluate_inputs(self.kspec.inputs(ds))

    __call__ = evaluate

    def rkhs_norm(self) -> float:
        K = self.kspec.gram(self.support)
        return float(np.sqrt(max(self.alpha @ K @ self.alpha, 0.0)))

    def to_text(self) -> str:
        k = self.kspec
        fmt = lambda v: " ".join(repr(float(x)) for x in v)
        lines = [
            "bridge kernel",
            f"kind {self.kind}",
            f"roles {','.join(k.roles)}",
            f"widths {' '.join(str(w) for w in k.widths)}",
            f"bandwidths {fmt(k.bandwidths)}",
            f"offset {k.offset!r}",
            f"alpha {fmt(self.alpha)}",
        ]
        lines += [f"support {fmt(row)}" for row in self.support]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "KernelBridge":
        fields, support = {}, []
        for line in text.strip().splitlines():
            key, _, val = line.partition(" ")
            if key == "support":
                support.append([float(x) for x in val.split()])
            else:
                fields[key] = val.strip()
        if fields.get("bridge") != "kernel":
            raise ConfigurationError("not a kernel bridge record")
        roles = tuple(r for r in fields["roles"].split(",") if r)
        widths = tuple(int(w) for w in fields["widths"].split())
        kspec = KernelSpec(roles, widths, tuple(float(b) for b in fields["bandwidths"].split()),
                           offset=float(fields.get("offset", 0.0)))
        alpha = np.array([float(x) for x in fields["alpha"].split()])
        sup = np.array(support, dtype=float).reshape(alpha.size, sum(widths))
        return cls(fields["kind"], sup, alpha, kspec)


# --------------------------------------------------------------------------
# solvers


def _jittered(K):
    m = K.shape[0]
    return K + (JITTER * np.trace(K) / max(m, 1)) * np.eye(m)


def profiled_objective(p: SaddleProblem, Kh, Kf, alpha) -> float:
    """``J(alpha)`` of the full-sample formulation (no landmarks)."""
    m = p.m
    rho = p.u + p.s * (Kh @ alpha)
    inner = linalg.solve(Kf + m * p.lam_f * np.eye(m), rho, assume_a="sym")
    return float(rho @ (Kf @ inner) / (4 * m) + p.lam_h * alpha @ Kh @ alpha)


def saddle_objective(p: SaddleProblem, Kh, Kf, alpha, beta) -> float:
    """The unprofiled objective ``L(alpha, beta)``."""
    m = p.m
    rho = p.u + p.s * (Kh @ alpha)
    f = Kf @ beta
    return float(rho @ f / m - f @ f / m - p.lam_f * beta @ Kf @ beta + p.lam_h * alpha @ Kh @ alpha)


def _inner_beta(p, Kf, rho):
    m = p.m
    return linalg.solve((2.0 / m) * Kf + 2 * p.lam_f * np.eye(m), rho / m, assume_a="sym")


class _ExactSolver:
    """Full-sample solver.

    With ``K = K_h`` on the support rows and ``Q = S P S`` the system is
    ``(Q K + c I) alpha = r`` with ``c = 4 m lam_h``.  Writing ``y = K^{1/2} alpha``
    gives the positive definite system ``(K^{1/2} Q K^{1/2} + c I) y = K^{1/2} r``
    and then ``alpha = (r - Q K^{1/2} y) / c``.
    """

    def __init__(self, u, s, Kh, Kf):
        self.u, self.s, self.Kh, self.Kf = u, s, Kh, Kf
        self.m = u.size
        self.sup = np.flatnonzero(s != 0)
        evals, evecs = linalg.eigh(_jittered(Kf), driver="evd")
        if evals.min() < -1e-6 * max(evals.max(), 1e-300):
            raise NumericalError("instrument Gram matrix is not positive semidefinite after jitter")
        self.evals = np.clip(evals, 0.0, None)
        self.evecs = evecs
        if self.sup.size:
            kv, ke = linalg.eigh(Kh[np.ix_(self.sup, self.sup)], driver="evd")
            self.Khalf = (ke * np.sqrt(np.clip(kv, 0.0, None))) @ ke.T
        self._P = {}
        self._D = {}

    def P(self, lam_f):
        if lam_f not in self._P:
            d = self.evals / (self.evals + self.m * lam_f)
            self._P[lam_f] = (self.evecs * d) @ self.evecs.T
        return self._P[lam_f]

    def _system(self, lam_f):
        if lam_f not in self._D:
            sup, sr = self.sup, self.s[self.sup]
            P = self.P(lam_f)
            Q = sr[:, None] * P[np.ix_(sup, sup)] * sr[None, :]
            QKh = Q @ self.Khalf
            N = self.Khalf @ QKh
            r = -sr * (P[sup] @ self.u)
            self._D[lam_f] = (QKh, 0.5 * (N + N.T), r, self.Khalf @ r)
        return self._D[lam_f]

    def solve(self, lam_h, lam_f):
        alpha = np.zeros(self.m)
        if self.sup.size == 0:
            return alpha
        QKh, N, r, Kr = self._system(lam_f)
        c = 4 * self.m * lam_h
        A = N.copy()
        A[np.diag_indices_from(A)] += c
        y = linalg.cho_solve(linalg.cho_factor(A, check_finite=False), Kr, check_finite=False)
        alpha[self.sup] = (r - QKh @ y) / c
        return alpha


class _LandmarkSolver:
    """Subset-of-regressors solver on hypothesis and instrument landmarks.

    Solves ``(T G^{-1} T' + c K_rr) a = -T G^{-1} Phi_f' u`` with
    ``G = Phi_f' Phi_f + m lam_f Kf_rr`` and ``c = 4 m lam_h``.
    """

    def __init__(self, u, s, H, F, kh, kf, lm_h, lm_f):
        self.m = u.size
        self.kh, self.kf = kh, kf
        self.Hl, self.Fl = H[lm_h], F[lm_f]
        Phi_h = kh.gram(H, self.Hl)
        self.Phi_f = Phi_f = kf.gram(F, self.Fl)
        self.Kh_rr = _jittered(kh.gram(self.Hl))
        self.Kf_rr = _jittered(kf.gram(self.Fl))
        self.T = Phi_h.T @ (s[:, None] * Phi_f)
        self.FtF = Phi_f.T @ Phi_f
        self.Ftu = Phi_f.T @ u
        self.u, self.s, self.Phi_h = u, s, Phi_h
        self._G = {}

    def _factor(self, lam_f):
        if lam_f not in self._G:
            G = self.FtF + self.m * lam_f * self.Kf_rr
            try:
                c = linalg.cho_factor(G)
            except linalg.LinAlgError:
                raise NumericalError("landmark instrument system is not positive definite") from None
            M = self.T @ linalg.cho_solve(c, self.T.T)
            b = -self.T @ linalg.cho_solve(c, self.Ftu)
            self._G[lam_f] = (c, 0.5 * (M + M.T), b)
        return self._G[lam_f]

    def solve(self, lam_h, lam_f):
        _, M, b = self._factor(lam_f)
        A = M + (4 * self.m * lam_h) * self.Kh_rr
        try:
            return linalg.cho_solve(linalg.cho_factor(A, check_finite=False), b, check_finite=False)
        except linalg.LinAlgError:
            return linalg.lstsq(A, b)[0]

    def beta(self, a, lam_f):
        c = self._factor(lam_f)[0]
        rho = self.u + self.s * (self.Phi_h @ a)
        return 0.5 * linalg.cho_solve(c, self.Phi_f.T @ rho)


def _default_kernel(V, roles, widths):
    return KernelSpec(roles, widths, median_heuristic(V, widths))


def _check_inputs(V, kspec, what):
    if V.shape[1] != sum(kspec.widths):
        raise ConfigurationError(f"{what} kernel expects {sum(kspec.widths)} columns, got {V.shape[1]}")


def solve_minimax(p: SaddleProblem, kind: str = "h2", kh: KernelSpec | None = None,
                  kf: KernelSpec | None = None, landmarks=None, landmark_cap: int = 2000,
                  seed=0) -> KernelBridge:
    """Saddle point of one regularized minimax problem.

    Parameters
    ----------
    p : SaddleProblem
    kind : str
        Bridge label stored on the result.
    kh, kf : KernelSpec, optional
        Hypothesis and instrument kernels; median heuristic on a single block
        when omitted.
    landmarks : (array, array), optional
        Row indices of hypothesis and instrument landmarks.  When omitted the
        exact solver is used for ``m <= landmark_cap`` and ``landmark_cap``
        uniform landmarks (seeded by ``seed``) are drawn otherwise.

    Returns
    -------
    KernelBridge
        ``info`` carries ``beta``, the profiled objective, the landmark flag and
        the relative stationarity residual of the profiled objective.
    """
    kh = kh or _default_kernel(p.hyp, ("v",), (p.hyp.shape[1],))
    kf = kf or _default_kernel(p.inst, ("v",), (p.inst.shape[1],))
    _check_inputs(p.hyp, kh, "hypothesis")
    _check_inputs(p.inst, kf, "instrument")
    if landmarks is None and p.m > landmark_cap:
        landmarks = choose_landmarks(p.s, landmark_cap, seed)
    if landmarks is None:
        Kh = kh.gram(p.hyp)
        Kf = kf.gram(p.inst)
        solver = _ExactSolver(p.u, p.s, Kh, Kf)
        alpha = solver.solve(p.lam_h, p.lam_f)
        sup = solver.sup
        rho = p.u + p.s * (Kh @ alpha)
        beta = _inner_beta(p, Kf, rho)
        P = solver.P(p.lam_f)
        m = p.m
        grad = Kh @ (p.s * (P @ rho)) / (2 * m) + 2 * p.lam_h * (Kh @ alpha)
        scale = np.linalg.norm(Kh @ (p.s * (P @ p.u))) / (2 * m) + np.finfo(float).tiny
        info = {
            "beta": beta,
            "objective": float(rho @ (P @ rho) / (4 * m) + p.lam_h * alpha @ Kh @ alpha),
            "stationarity": float(np.linalg.norm(grad) / scale),
            "landmarks": False,
            "lam_h": p.lam_h, "lam_f": p.lam_f,
        }
        return KernelBridge(kind, p.hyp[sup], alpha[sup], kh, info)
    lm_h, lm_f = (np.asarray(x, dtype=int) for x in landmarks)
    solver = _LandmarkSolver(p.u, p.s, p.hyp, p.inst, kh, kf, lm_h, lm_f)
    a = solver.solve(p.lam_h, p.lam_f)
    info = {"beta": solver.beta(a, p.lam_f), "landmarks": True, "lam_h": p.lam_h, "lam_f": p.lam_f}
    return KernelBridge(kind, solver.Hl, a, kh, info)


def choose_landmarks(s, cap, seed):
    """Uniform seeded landmark rows: hypothesis landmarks among rows with ``s != 0``."""
    rng = np.random.default_rng(seed)
    s = np.asarray(s)
    sup = np.flatnonzero(s != 0)
    lm_h = np.sort(rng.choice(sup, size=min(cap, sup.size), replace=False))
    lm_f = np.sort(rng.choice(s.size, size=min(cap, s.size), replace=False))
    return lm_h, lm_f


# --------------------------------------------------------------------------
# cross-validated fitting of one bridge


def _projected_moment(u, s, h_val, Kf_val):
    """Held-out sup over the unit ball of the instrument RKHS of the moment."""
    rho = u + s * h_val
    m = rho.size
    return float(np.sqrt(max(rho @ Kf_val @ rho, 0.0)) / m)


def _make_solver(u, s, H, F, kh, kf, cap, rng):
    m = u.size
    if m <= cap:
        return _ExactSolver(u, s, kh.gram(H), kf.gram(F)), None
    lm = choose_landmarks(s, cap, rng)
    solver = _LandmarkSolver(u, s, H, F, kh, kf, *lm)
    return solver, lm


def _predict(solver, coef, H_new, kh, H_train):
    if isinstance(solver, _ExactSolver):
        sup = solver.sup
        return kh.gram(H_new, H_train[sup]) @ coef[sup]
    return kh.gram(H_new, solver.Hl) @ coef


def fit_saddle_cv(u, s, H, F, kh, kf, kind, grid_h=DEFAULT_GRID, grid_f=DEFAULT_GRID,
                  cv_folds=3, landmark_cap=2000, seed=0) -> KernelBridge:
    """Pick ``(lam_h, lam_f)`` by V-fold CV of the held-out projected moment and refit.

    Held-out rows are scored by ``sqrt(rho' K_f rho) / m_val``, the supremum of
    the empirical moment over unit-norm test functions.
    """
    rng = np.random.default_rng(seed)
    m = u.size
    grid = [(lh, lf) for lh in grid_h for lf in grid_f]
    if len(grid) == 1 or cv_folds < 2 or m < 2 * cv_folds:
        best = grid[0]
        scores = None
    else:
        folds = rng.permutation(np.arange(m) % cv_folds)
        scores = np.zeros(len(grid))
        for v in range(cv_folds):
            tr, va = folds != v, folds == v
            if not np.any(s[tr] != 0):
                continue
            solver, _ = _make_solver(u[tr], s[tr], H[tr], F[tr], kh, kf, landmark_cap, rng)
            Kf_val = kf.gram(F[va])
            for g, (lh, lf) in enumerate(grid):
                coef = solver.solve(lh, lf)
                h_val = _predict(solver, coef, H[va], kh, H[tr])
                scores[g] += _projected_moment(u[va], s[va], h_val, Kf_val)
        best = grid[int(np.argmin(scores))]
    p = SaddleProblem(u, s, H, F, *best)
    lm = choose_landmarks(s, landmark_cap, rng) if m > landmark_cap else None
    out = solve_minimax(p, kind, kh, kf, landmarks=lm, landmark_cap=landmark_cap)
    out.info["cv_scores"] = None if scores is None else (scores / cv_folds).tolist()
    return out


# --------------------------------------------------------------------------
# all six bridges


@dataclass(frozen=True)
class KernelConfig:
    """Settings of the kernel nuisance fits.

    ``bandwidths`` optionally overrides the median heuristic per role, e.g.
    ``{"w": 1.0}``.  ``hyp_offset`` is the constant added to the hypothesis
    kernel so that bridges can carry an (almost unpenalized) level; the test
    function kernel stays a plain RBF.
    """

    grid_h: tuple = DEFAULT_GRID
    grid_f: tuple = DEFAULT_GRID
    cv_folds: int = 3
    landmark_cap: int = 2000
    bandwidths: dict = field(default_factory=dict)
    hyp_offset: float = 1e3

    def __post_init__(self):
        for g in (self.grid_h, self.grid_f):
            if len(g) == 0 or any(not lam > 0 for lam in g):
                raise ConfigurationError("penalty grids must be non-empty and positive")
        if self.landmark_cap < 2:
            raise ConfigurationError("landmark_cap must be at least 2")
        if not self.hyp_offset >= 0:
            raise ConfigurationError("hyp_offset must be non-negative")


def _kernel_for(V, roles, widths, overrides, offset=0.0):
    med = median_heuristic(V, widths)
    bw = tuple(float(overrides.get(r, b)) for r, b in zip(roles, med))
    return KernelSpec(roles, widths, bw, offset=offset)


def _children(seed, k):
    # like SeedSequence.spawn, but without mutating a caller-owned sequence
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.SeedSequence(ss.entropy, spawn_key=ss.spawn_key + (i,)) for i in range(k)]


def _fit_one(ds, kind, u_full, s_full, cfg, seed, rows=None):
    _, hyp_roles, inst_roles = SADDLE_LAYOUT[kind]
    H, hr, hw = block_inputs(ds, hyp_roles)
    F, fr, fw = block_inputs(ds, inst_roles)
    if rows is not None:
        H, F, u_full, s_full = H[rows], F[rows], u_full[rows], s_full[rows]
    kh = _kernel_for(H, hr, hw, cfg.bandwidths, cfg.hyp_offset)
    kf = _kernel_for(F, fr, fw, cfg.bandwidths)
    try:
        return fit_saddle_cv(u_full, s_full, H, F, kh, kf, kind, cfg.grid_h, cfg.grid_f,
                             cfg.cv_folds, cfg.landmark_cap, seed)
    except (NumericalError, linalg.LinAlgError, ValueError) as exc:
        raise EstimationError(str(exc), stage=kind) from exc


def fit_all_bridges_kernel(ds: Dataset, config: KernelConfig | None = None, seed=0) -> dict:
    """Six kernel bridges ``h2 -> h1 -> h0`` and ``q0 -> q1 -> q2``.

    Outcome bridges are fit on the treated (``h2``, ``h0``) or control (``h1``)
    rows; treatment bridges on the full sample with the treatment indicators
    inside the residual.
    """
    cfg = config or KernelConfig()
    a = ds.a
    if a.sum() == 0 or a.sum() == ds.n:
        raise EstimationError("both treatment arms must be present", stage="data")
    seeds = dict(zip(("h2", "h1", "h0", "q0", "q1", "q2"), _children(seed, 6)))
    treated, control = np.flatnonzero(a == 1), np.flatnonzero(a == 0)
    out = {}
    neg = -np.ones(ds.n)
    out["h2"] = _fit_one(ds, "h2", ds.y, neg, cfg, seeds["h2"], treated)
    out["h1"] = _fit_one(ds, "h1", out["h2"].evaluate(ds), neg, cfg, seeds["h1"], control)
    out["h0"] = _fit_one(ds, "h0", out["h1"].evaluate(ds), neg, cfg, seeds["h0"], treated)
    out["q0"] = _fit_one(ds, "q0", -np.ones(ds.n), a, cfg, seeds["q0"])
    out["q1"] = _fit_one(ds, "q1", -a * out["q0"].evaluate(ds), 1 - a, cfg, seeds["q1"])
    out["q2"] = _fit_one(ds, "q2", -(1 - a) * out["q1"].evaluate(ds), a, cfg, seeds["q2"])
    return out


def fit_ey1_kernel(ds: Dataset, config: KernelConfig | None = None, seed=0):
    """Kernel outcome bridge ``h~(W, X)`` for E[Y(1)] and the kernel ``q0``."""
    cfg = config or KernelConfig()
    a = ds.a
    if a.sum() == 0 or a.sum() == ds.n:
        raise EstimationError("both treatment arms must be present", stage="data")
    s_h, s_q = _children(seed, 2)
    h = _fit_one(ds, "hy1", ds.y, -np.ones(ds.n), cfg, s_h, np.flatnonzero(a == 1))
    q0 = _fit_one(ds, "q0", -np.ones(ds.n), a, cfg, s_q)
    return h, q0


class KernelNuisanceFitter:
    """Callable ``(ds, seed) -> BridgeSet`` for cross-fitting with kernel bridges."""

    accepts_seed = True

    def __init__(self, config: KernelConfig | None = None):
        self.config = config or KernelConfig()

    def __call__(self, ds: Dataset, seed=0):
        from ..estimators import BridgeSet
        return BridgeSet.from_dict(fit_all_bridges_kernel(ds, self.config, seed))

    def fit_ey1(self, ds: Dataset, seed=0):
        return fit_ey1_kernel(ds, self.config, seed)
