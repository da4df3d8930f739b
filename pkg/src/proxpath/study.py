"""Bootstrap inference and the replicated simulation study."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .bridges.kernel import KernelConfig, KernelNuisanceFitter
from .bridges.parametric import BridgeMaps, ParametricDesign, fit_all_parametric
from .crossfit import dml_estimate
from .data import Dataset
from .dgp import CONSISTENT, MisspecificationMode, ScenarioSpec, default_spec, oracle_psi, seed_stream, simulate
from .errors import ConfigurationError, EstimationError, ProxPathError
from .estimators import ESTIMATORS

STUDY_ESTIMATORS = ESTIMATORS + ("P-DML",)
MAX_BOOT_DROP = 0.20
MAX_REP_FAIL = 0.05
_RECOVERABLE = (ProxPathError, linalg.LinAlgError, np.linalg.LinAlgError, FloatingPointError, ValueError)


# --------------------------------------------------------------------------
# bootstrap


def bootstrap_indices(n: int, B: int, seed) -> np.ndarray:
    """``(B, n)`` row indices of ``B`` resamples drawn with replacement."""
    rng = np.random.default_rng(seed)
    return rng.integers(0, n, size=(B, n))


def _summarize(draws, level, n_dropped, B):
    if n_dropped > MAX_BOOT_DROP * B:
        raise EstimationError(f"{n_dropped} of {B} bootstrap resamples failed", stage="bootstrap")
    draws = np.asarray(draws, dtype=float)
    se = draws.std(axis=0, ddof=1) if draws.shape[0] > 1 else np.full(draws.shape[1:], np.nan)
    q = np.quantile(draws, [(1 - level) / 2, (1 + level) / 2], axis=0)
    return se, q[0], q[1]


def bootstrap_draws(ds: Dataset, estimator, B: int, seed):
    """Estimates on ``B`` resamples; failing resamples are dropped and counted."""
    out, dropped = [], 0
    for idx in bootstrap_indices(ds.n, B, seed):
        try:
            val = np.asarray(estimator(ds.take(idx)), dtype=float)
        except _RECOVERABLE:
            dropped += 1
            continue
        if not np.all(np.isfinite(val)):
            dropped += 1
            continue
        out.append(val)
    return np.array(out), dropped


def bootstrap_ci(ds: Dataset, estimator, B: int = 500, seed=0, level: float = 0.95):
    """Nonparametric bootstrap standard error and percentile interval.

    ``estimator`` maps a Dataset to a scalar or a vector; the results then
    have the same shape.

    Returns
    -------
    se, (lo, hi, level)
    """
    if B < 1:
        raise ConfigurationError("B must be at least 1")
    if not 0 < level < 1:
        raise ConfigurationError("level must lie in (0, 1)")
    draws, dropped = bootstrap_draws(ds, estimator, B, seed)
    if draws.shape[0] == 0:
        raise EstimationError("all bootstrap resamples failed", stage="bootstrap")
    se, lo, hi = _summarize(draws, level, dropped, B)
    if np.ndim(se) == 0:
        return float(se), (float(lo), float(hi), level)
    return se, (lo, hi, level)


def parametric_bootstrap(design: ParametricDesign, B: int, seed, level: float = 0.95):
    """Bootstrap of the five parametric estimators in one batched pass.

    Uses exactly the resamples of :func:`bootstrap_ci` with the same seed,
    expressed as row multiplicities.  If a resample makes a moment matrix
    singular the batch is redone one resample at a time and the failures are
    dropped.
    """
    idx = bootstrap_indices(design.n, B, seed)
    counts = np.stack([np.bincount(i, minlength=design.n) for i in idx]).astype(float)
    try:
        draws = design.estimates(counts)
        dropped = 0
    except _RECOVERABLE:
        keep = []
        for c in counts:
            try:
                keep.append(design.estimates(c[None, :])[0])
            except _RECOVERABLE:
                continue
        draws = np.array(keep)
        dropped = B - len(keep)
    ok = np.all(np.isfinite(draws), axis=1) if draws.size else np.zeros(0, bool)
    dropped += int((~ok).sum())
    draws = draws[ok]
    if draws.shape[0] == 0:
        raise EstimationError("all bootstrap resamples failed", stage="bootstrap")
    return _summarize(draws, level, dropped, B)


# --------------------------------------------------------------------------
# study configuration and metrics


@dataclass(frozen=True)
class StudyConfig:
    scenarios: tuple = (1, 2, 3, 4, 5)
    n: int = 1000
    reps: int = 500
    estimators: tuple = ESTIMATORS
    B: int = 500
    level: float = 0.95
    root_seed: int = 0
    nuisance: str = "parametric"
    threads: int = 1
    folds: int = 5
    n_mc: int = 1_000_000
    spec: ScenarioSpec = field(default_factory=default_spec)
    kernel: KernelConfig = field(default_factory=KernelConfig)

    def __post_init__(self):
        object.__setattr__(self, "scenarios", tuple(int(s) for s in self.scenarios))
        object.__setattr__(self, "estimators", tuple(self.estimators))
        if self.reps < 1:
            raise ConfigurationError("reps must be at least 1")
        if self.B < 1:
            raise ConfigurationError("B must be at least 1")
        if not 0 < self.level < 1:
            raise ConfigurationError("level must lie in (0, 1)")
        if self.n < 2:
            raise ConfigurationError("n must be at least 2")
        if self.nuisance not in ("parametric", "kernel"):
            raise ConfigurationError("nuisance must be 'parametric' or 'kernel'")
        if not self.scenarios:
            raise ConfigurationError("at least one scenario is required")
        for s in self.scenarios:
            MisspecificationMode.for_scenario(s)
        bad = [e for e in self.estimators if e not in STUDY_ESTIMATORS]
        if bad or not self.estimators:
            raise ConfigurationError(f"unknown estimator(s) {bad}; valid are {', '.join(STUDY_ESTIMATORS)}")
        if self.nuisance == "kernel" and set(self.estimators) != {"P-DML"}:
            raise ConfigurationError("kernel nuisances are only used by the P-DML estimator")
        if self.threads < 1:
            raise ConfigurationError("threads must be at least 1")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k not in ("spec", "kernel")}
        d["scenarios"] = list(self.scenarios)
        d["estimators"] = list(self.estimators)
        d["spec"] = self.spec.to_dict()
        k = self.kernel
        d["kernel"] = {"grid_h": list(k.grid_h), "grid_f": list(k.grid_f), "cv_folds": k.cv_folds,
                       "landmark_cap": k.landmark_cap, "hyp_offset": k.hyp_offset, "bandwidths": dict(k.bandwidths)}
        return d


@dataclass
class MetricsRow:
    scenario: int
    estimator: str
    bias: float
    mse: float
    coverage: float
    length: float
    bias_mcse: float
    sd: float
    mean_se: float
    reps: int
    consistent: bool


@dataclass
class MetricsTable:
    rows: list
    psi_true: float
    psi_mc_se: float
    failures: list = field(default_factory=list)
    aborted: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def get(self, scenario, estimator) -> MetricsRow:
        for r in self.rows:
            if r.scenario == scenario and r.estimator == estimator:
                return r
        raise KeyError((scenario, estimator))

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = list(MetricsRow.__dataclass_fields__)
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in self.rows:
            w.writerow([getattr(r, c) for c in cols])
        return buf.getvalue()

    def to_text(self) -> str:
        """Four aligned panels (Bias, MSE, Coverage, Length); ``*`` marks consistent-by-design cells."""
        ests = list(dict.fromkeys(r.estimator for r in self.rows))
        scen = sorted({r.scenario for r in self.rows})
        out = []
        for title, attr, fmt in (("Bias", "bias", "{:+.4f}"), ("MSE", "mse", "{:.4f}"),
                                 ("Coverage", "coverage", "{:.3f}"), ("Length", "length", "{:.4f}")):
            out.append(title)
            out.append("  " + "scenario".ljust(10) + "".join(e.rjust(13) for e in ests))
            for s in scen:
                cells = []
                for e in ests:
                    try:
                        r = self.get(s, e)
                    except KeyError:
                        cells.append("".rjust(13))
                        continue
                    cell = fmt.format(getattr(r, attr)) + ("*" if r.consistent else " ")
                    cells.append(cell.rjust(13))
                out.append("  " + str(s).ljust(10) + "".join(cells))
            out.append("")
        out.append(f"psi_true = {self.psi_true:.6f} (Monte Carlo se {self.psi_mc_se:.2e}); * = consistent by design")
        return "\n".join(out) + "\n"


# --------------------------------------------------------------------------
# replicates


def _kernel_or_parametric_fitter(cfg, maps):
    if cfg.nuisance == "kernel":
        return KernelNuisanceFitter(cfg.kernel)
    return lambda train: fit_all_parametric(train, maps)


def run_replicate(cfg: StudyConfig, scenario: int, rep: int) -> dict:
    """One replicate: ``{estimator: (estimate, se, lo, hi)}`` or ``{"error": ...}``."""
    mode = MisspecificationMode.for_scenario(scenario)
    maps = BridgeMaps.default().corrupted(mode)
    ds = simulate(cfg.spec, cfg.n, seed_stream(cfg.root_seed, scenario, rep, 0))
    out = {"scenario": scenario, "rep": rep}
    try:
        boot = [e for e in cfg.estimators if e in ESTIMATORS]
        if boot:
            design = ParametricDesign(ds, maps)
            est = design.estimates()[0]
            se, lo, hi = parametric_bootstrap(design, cfg.B, seed_stream(cfg.root_seed, scenario, rep, 1), cfg.level)
            for e in boot:
                j = ESTIMATORS.index(e)
                out[e] = (float(est[j]), float(se[j]), float(lo[j]), float(hi[j]))
        if "P-DML" in cfg.estimators:
            fitter = _kernel_or_parametric_fitter(cfg, maps)
            r = dml_estimate(ds, cfg.folds, fitter, seed_stream(cfg.root_seed, scenario, rep, 2), cfg.level)
            out["P-DML"] = (r.psi_hat, r.se, r.ci[0], r.ci[1])
    except _RECOVERABLE as exc:
        stage = getattr(exc, "stage", None)
        return {"scenario": scenario, "rep": rep, "error": str(exc), "stage": stage}
    return out


def _run_keyed(args):
    cfg, s, r = args
    return run_replicate(cfg, s, r)


def aggregate(records, cfg: StudyConfig, psi_true: float, psi_mc_se: float) -> MetricsTable:
    """Order-insensitive reduction of replicate records into a MetricsTable."""
    records = sorted(records, key=lambda d: (d["scenario"], d["rep"]))
    rows, failures, aborted = [], [], []
    for s in cfg.scenarios:
        recs = [d for d in records if d["scenario"] == s]
        fails = [d for d in recs if "error" in d]
        failures.extend(fails)
        if len(fails) > MAX_REP_FAIL * cfg.reps:
            aborted.append(s)
            continue
        good = [d for d in recs if "error" not in d]
        for e in cfg.estimators:
            v = np.array([d[e] for d in good], dtype=float)
            if v.size == 0:
                continue
            err = v[:, 0] - psi_true
            k = v.shape[0]
            rows.append(MetricsRow(
                scenario=s, estimator=e,
                bias=float(err.mean()),
                mse=float(np.mean(err ** 2)),
                coverage=float(np.mean((v[:, 2] <= psi_true) & (psi_true <= v[:, 3]))),
                length=float(np.mean(v[:, 3] - v[:, 2])),
                bias_mcse=float(err.std(ddof=1) / math.sqrt(k)) if k > 1 else float("nan"),
                sd=float(v[:, 0].std(ddof=1)) if k > 1 else float("nan"),
                mean_se=float(np.mean(v[:, 1])),
                reps=k,
                consistent=(e in CONSISTENT[s]) or e == "P-DML",
            ))
    return MetricsTable(rows, psi_true, psi_mc_se, failures, aborted, cfg.to_dict())


def run_study(cfg: StudyConfig, psi_oracle=None) -> MetricsTable:
    """Simulate, estimate and score every (scenario, replicate) pair.

    ``psi_oracle`` may pass a precomputed ``(psi_true, mc_se)``; otherwise the
    Monte Carlo oracle runs with ``cfg.n_mc`` draws on its own seed stream.
    Results do not depend on ``threads`` or on scheduling.
    """
    if psi_oracle is None:
        psi_oracle = oracle_psi(cfg.spec, cfg.n_mc, seed_stream(cfg.root_seed, 10**6))
    psi_true, mc_se = psi_oracle
    jobs = [(cfg, s, r) for s in cfg.scenarios for r in range(cfg.reps)]
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as ex:
            records = list(ex.map(_run_keyed, jobs, chunksize=max(1, len(jobs) // (8 * cfg.threads))))
    else:
        records = [_run_keyed(j) for j in jobs]
    return aggregate(records, cfg, psi_true, mc_se)
