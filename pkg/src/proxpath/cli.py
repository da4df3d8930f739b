"""Command-line interface: simulate, fit-bridges, estimate, study.

Settings resolve as built-in defaults < ``--config`` TOML file < flags.  The
resolved settings are written next to every output as ``<out>.toml`` so a
run can be reproduced from its artifacts alone.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
import tomli_w
import numpy as np

from .bridges.kernel import DEFAULT_GRID, KernelConfig, KernelNuisanceFitter, fit_all_bridges_kernel, fit_ey1_kernel
from .bridges.parametric import BridgeMaps, ParametricDesign, fit_all_parametric
from .crossfit import dml_effects, dml_estimate
from .data import load_csv, write_csv
from .dgp import ScenarioSpec, default_spec, oracle_effects, seed_stream, simulate
from .errors import ConfigurationError, ProxPathError
from .estimators import (ESTIMATORS, BridgeSet, EstimateReport, effect_reports, eif_values, ey1_values,
                         fit_ey1_parametric, psi_quadr)
from .study import StudyConfig, bootstrap_ci, parametric_bootstrap, run_study

ESTIMATOR_NAMES = {"por": "P-OR", "pipw": "P-IPW", "phybrid1": "P-hybrid1", "phybrid2": "P-hybrid2",
                   "quadr": "P-quadR", "dml": "P-DML"}

DEFAULTS = {
    "seed": 0,
    "threads": 1,
    "simulate": {"n": 1000, "n_mc": 1_000_000},
    "estimate": {"estimators": ["quadr"], "nuisance": "parametric", "folds": 5, "bootstrap_B": 500,
                 "level": 0.95, "effects": False, "outcome_kind": "continuous"},
    "study": {"scenarios": [1, 2, 3, 4, 5], "reps": 500, "n": 1000, "n_mc": 1_000_000},
    "kernel": {"grid_h": list(DEFAULT_GRID), "grid_f": list(DEFAULT_GRID), "cv_folds": 3,
               "landmark_cap": 2000, "hyp_offset": 1e3, "bandwidths": {}},
}


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# config resolution


def _merge(base, over):
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _positive_int(name):
    def conv(text):
        try:
            v = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be an integer, got {text!r}")
        if v < 1:
            raise argparse.ArgumentTypeError(f"{name} must be at least 1, got {v}")
        return v
    return conv


def _estimator_list(text):
    names = [t.strip().lower() for t in text.split(",") if t.strip()]
    bad = [t for t in names if t not in ESTIMATOR_NAMES]
    if bad or not names:
        raise argparse.ArgumentTypeError(
            f"unknown estimator(s) {', '.join(bad) or '(none)'}; valid names: {', '.join(ESTIMATOR_NAMES)}")
    return names


def _int_list(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _level(text):
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError("level must lie in (0, 1)")
    return v


def resolve(args) -> dict:
    """Defaults, then the config file, then explicitly given flags."""
    cfg = _merge(DEFAULTS, {})
    if args.command == "study":
        cfg["estimate"]["estimators"] = ["por", "pipw", "phybrid1", "phybrid2", "quadr"]
    if args.config:
        with open(args.config, "rb") as fh:
            doc = tomllib.load(fh)
        # a sidecar written by an earlier run nests its settings under [config]
        if isinstance(doc.get("config"), dict):
            doc = doc["config"]
        doc.pop("command", None)
        cfg = _merge(cfg, doc)
    flag_map = {
        "seed": ("seed",), "threads": ("threads",),
        "n": (args.command if args.command in ("simulate", "study") else "simulate", "n"),
        "n_mc": (args.command if args.command in ("simulate", "study") else "simulate", "n_mc"),
        "estimators": ("estimate", "estimators"), "nuisance": ("estimate", "nuisance"),
        "folds": ("estimate", "folds"), "bootstrap_B": ("estimate", "bootstrap_B"),
        "level": ("estimate", "level"), "effects": ("estimate", "effects"),
        "outcome_kind": ("estimate", "outcome_kind"),
        "scenarios": ("study", "scenarios"), "reps": ("study", "reps"),
        "landmark_cap": ("kernel", "landmark_cap"),
    }
    for attr, path in flag_map.items():
        v = getattr(args, attr, None)
        if v is None:
            continue
        node = cfg
        for p in path[:-1]:
            node = node.setdefault(p, {})
        node[path[-1]] = v
    if getattr(args, "outcome", None):
        cfg.setdefault("scenario", {})["outcome"] = args.outcome
    cfg["command"] = args.command
    for k in ("in", "out"):
        v = getattr(args, k if k != "in" else "inp", None)
        if v is not None:
            cfg[k] = str(v)
    _validate(cfg)
    return cfg


def _validate(cfg):
    for sec in ("simulate", "study"):
        for k in ("n", "n_mc"):
            if cfg[sec].get(k, 1) < 1:
                raise UsageError(f"{sec}.{k} must be at least 1")
    if cfg["study"]["reps"] < 1:
        raise UsageError("study.reps must be at least 1")
    est = cfg["estimate"]
    bad = [e for e in est["estimators"] if e not in ESTIMATOR_NAMES]
    if bad:
        raise UsageError(f"unknown estimator(s) {', '.join(bad)}; valid names: {', '.join(ESTIMATOR_NAMES)}")
    if est["nuisance"] not in ("parametric", "kernel"):
        raise UsageError("nuisance must be 'parametric' or 'kernel'")
    if est["outcome_kind"] not in ("continuous", "binary"):
        raise UsageError("outcome kind must be 'continuous' or 'binary'")
    if not 0 < est["level"] < 1:
        raise UsageError("level must lie in (0, 1)")
    if est["folds"] < 2:
        raise UsageError("folds must be at least 2")


def _spec(cfg) -> ScenarioSpec:
    return ScenarioSpec.from_dict(cfg["scenario"]) if "scenario" in cfg else default_spec()


def _kernel(cfg) -> KernelConfig:
    k = cfg["kernel"]
    return KernelConfig(tuple(k["grid_h"]), tuple(k["grid_f"]), int(k["cv_folds"]), int(k["landmark_cap"]),
                        dict(k.get("bandwidths", {})), float(k.get("hyp_offset", 1e3)))


def _plain(obj):
    """Recursively turn numpy scalars/arrays and tuples into TOML-friendly values, dropping None."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items() if v is not None}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj if v is not None]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _write_sidecar(out: Path, cfg: dict, extra: dict | None = None):
    doc = {"config": _plain(cfg)}
    if extra:
        doc.update(_plain(extra))
    Path(str(out) + ".toml").write_text(tomli_w.dumps(doc))


def _config_comment(cfg) -> str:
    return "".join("# " + line + "\n" for line in tomli_w.dumps({"config": _plain(cfg)}).splitlines())


# --------------------------------------------------------------------------
# commands


def cmd_simulate(cfg) -> int:
    spec = _spec(cfg)
    cfg["scenario"] = spec.to_dict()
    out = Path(cfg["out"])
    seed = cfg["seed"]
    n = cfg["simulate"]["n"]
    ds = simulate(spec, n, seed_stream(seed, 0))
    write_csv(ds, out)
    orc = oracle_effects(spec, cfg["simulate"]["n_mc"], seed_stream(seed, 1))
    oracle = {"psi": orc.psi, "psi_mc_se": orc.psi_se, "ey1": orc.ey1, "ey1_mc_se": orc.ey1_se,
              "pamy": orc.pamy, "pamy_mc_se": orc.pamy_se}
    if orc.ramy is not None:
        oracle.update(ramy=orc.ramy, ramy_mc_se=orc.ramy_se)
    _write_sidecar(out, cfg, {"oracle": oracle})
    print(f"wrote {n} rows to {out}; oracle psi = {orc.psi:.6f} (mc se {orc.psi_se:.2e})")
    return 0


def _maps_for(ds):
    binary = frozenset(c for c in ds.schema.columns()
                       if c not in ("y", "a") and np.isin(_column(ds, c), (0.0, 1.0)).all())
    return BridgeMaps.default(binary)


def _column(ds, name):
    for b in ("d", "m", "z", "w", "x"):
        cols = ds.schema.block_columns(b)
        if name in cols:
            return ds.block(b)[:, cols.index(name)]
    raise KeyError(name)


def cmd_fit_bridges(cfg) -> int:
    ds = load_csv(cfg["in"])
    est = cfg["estimate"]
    if est["nuisance"] == "parametric":
        bridges = fit_all_parametric(ds, _maps_for(ds))
    else:
        bridges = fit_all_bridges_kernel(ds, _kernel(cfg), seed_stream(cfg["seed"], 3))
    out = Path(cfg["out"])
    out.write_text("\n".join(bridges[k].to_text() for k in ("h2", "h1", "h0", "q0", "q1", "q2")))
    _write_sidecar(out, cfg)
    print(f"wrote six {est['nuisance']} bridges to {out}")
    return 0


def _report_table(reports, cfg) -> str:
    head = f"{'estimator':<11}{'estimate':>12}{'se':>12}{'ci_lo':>12}{'ci_hi':>12}"
    lines = [head, "-" * len(head)]
    fmt = lambda v: f"{v:12.6f}" if v is not None and np.isfinite(v) else f"{'-':>12}"
    for r in reports:
        lo, hi = (r.ci[0], r.ci[1]) if r.ci else (None, None)
        lines.append(f"{r.tag:<11}{fmt(r.psi_hat)}{fmt(r.se)}{fmt(lo)}{fmt(hi)}")
    level = cfg["estimate"]["level"]
    lines.append(f"\n{int(round(level * 100))}% intervals; seed {cfg['seed']}")
    return "\n".join(lines) + "\n"


def _reports_csv(reports, cfg) -> str:
    cols = ["estimator", "estimate", "se", "ci_lo", "ci_hi", "level"]
    rows = [",".join(cols)]
    for r in reports:
        d = r.to_row()
        rows.append(",".join("" if d[c] is None else (d[c] if isinstance(d[c], str) else repr(float(d[c])))
                             for c in cols))
    return _config_comment(cfg) + "\n".join(rows) + "\n"


def _full_sample_bridges(ds, cfg, maps):
    if cfg["estimate"]["nuisance"] == "parametric":
        return BridgeSet.from_dict(fit_all_parametric(ds, maps))
    return BridgeSet.from_dict(fit_all_bridges_kernel(ds, _kernel(cfg), seed_stream(cfg["seed"], 3)))


def estimate_reports(ds, cfg) -> list[EstimateReport]:
    est = cfg["estimate"]
    tags = [ESTIMATOR_NAMES[e] for e in est["estimators"]]
    level, B, seed = est["level"], est["bootstrap_B"], cfg["seed"]
    maps = _maps_for(ds)
    reports = []
    plug = [t for t in tags if t in ESTIMATORS]
    if plug and est["nuisance"] == "parametric":
        design = ParametricDesign(ds, maps)
        point = design.estimates()[0]
        se, lo, hi = parametric_bootstrap(design, B, seed_stream(seed, 1), level)
        for t in plug:
            j = ESTIMATORS.index(t)
            reports.append(EstimateReport(t, float(point[j]), float(se[j]), (float(lo[j]), float(hi[j]), level)))
    elif plug:
        kcfg = _kernel(cfg)

        def all_five(d):
            b = BridgeSet.from_dict(fit_all_bridges_kernel(d, kcfg, seed_stream(seed, 3)))
            r = psi_quadr(d, b)
            return [r.diagnostics[k] for k in ESTIMATORS[:4]] + [r.psi_hat]

        point = all_five(ds)
        se, (lo, hi, _) = bootstrap_ci(ds, all_five, B, seed_stream(seed, 1), level)
        for t in plug:
            j = ESTIMATORS.index(t)
            reports.append(EstimateReport(t, float(point[j]), float(se[j]), (float(lo[j]), float(hi[j]), level)))
    if "P-quadR" in plug:
        b = _full_sample_bridges(ds, cfg, maps)
        reports[plug.index("P-quadR")].diagnostics["eif_se"] = psi_quadr(ds, b).diagnostics["eif_se"]

    fitter = (KernelNuisanceFitter(_kernel(cfg)) if est["nuisance"] == "kernel"
              else _ParametricFitter(maps))
    if "P-DML" in tags:
        if est["effects"]:
            reports.extend(dml_effects(ds, est["folds"], fitter, seed_stream(seed, 2), level, est["outcome_kind"]))
        else:
            reports.append(dml_estimate(ds, est["folds"], fitter, seed_stream(seed, 2), level))
    elif est["effects"]:
        # full-sample nuisances; standard errors from the paired influence values
        b = _full_sample_bridges(ds, cfg, maps)
        if est["nuisance"] == "parametric":
            h, q0 = fit_ey1_parametric(ds, maps)
        else:
            h, q0 = fit_ey1_kernel(ds, _kernel(cfg), seed_stream(seed, 4))
        psi_phi = eif_values(ds, b, 0.0)
        reports.extend(effect_reports(ey1_values(ds, h, q0), psi_phi, est["outcome_kind"], level))
    return reports


class _ParametricFitter:
    def __init__(self, maps):
        self.maps = maps

    def __call__(self, ds):
        return fit_all_parametric(ds, self.maps)

    def fit_ey1(self, ds):
        return fit_ey1_parametric(ds, self.maps)


def cmd_estimate(cfg) -> int:
    ds = load_csv(cfg["in"])
    reports = estimate_reports(ds, cfg)
    table = _report_table(reports, cfg)
    print(table, end="")
    if cfg.get("out"):
        out = Path(cfg["out"])
        out.write_text(_reports_csv(reports, cfg))
        Path(str(out) + ".txt").write_text(table)
        _write_sidecar(out, cfg)
    return 0


def cmd_study(cfg) -> int:
    est, st = cfg["estimate"], cfg["study"]
    tags = tuple(ESTIMATOR_NAMES[e] for e in est["estimators"])
    spec = _spec(cfg)
    cfg["scenario"] = spec.to_dict()
    try:
        scfg = StudyConfig(scenarios=tuple(st["scenarios"]), n=st["n"], reps=st["reps"], estimators=tags,
                           B=est["bootstrap_B"], level=est["level"], root_seed=cfg["seed"],
                           nuisance=est["nuisance"], threads=cfg["threads"], folds=est["folds"],
                           n_mc=st["n_mc"], spec=spec, kernel=_kernel(cfg))
    except ConfigurationError as exc:
        raise UsageError(str(exc))
    table = run_study(scfg)
    text = table.to_text()
    print(text, end="")
    for f in table.failures:
        print(f"replicate failed: scenario {f['scenario']} rep {f['rep']}: {f['error']}", file=sys.stderr)
    if cfg.get("out"):
        out = Path(cfg["out"])
        out.write_text(_config_comment(cfg) + table.to_csv())
        Path(str(out) + ".txt").write_text(text)
        _write_sidecar(out, cfg, {"oracle": {"psi": table.psi_true, "psi_mc_se": table.psi_mc_se},
                                  "aborted_scenarios": table.aborted})
    if table.aborted:
        print(f"error: scenario(s) {table.aborted} aborted: more than 5% of replicates failed", file=sys.stderr)
        return 1
    return 0


COMMANDS = {"simulate": cmd_simulate, "fit-bridges": cmd_fit_bridges, "estimate": cmd_estimate, "study": cmd_study}


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--in", dest="inp", metavar="CSV", help="input data file")
    shared.add_argument("--out", help="output file")
    shared.add_argument("--seed", type=int, help="root seed (default 0)")
    shared.add_argument("--threads", type=_positive_int("--threads"), help="worker processes (default 1)")
    shared.add_argument("--config", help="TOML file with default settings")

    estim = argparse.ArgumentParser(add_help=False)
    estim.add_argument("--estimators", type=_estimator_list,
                       help=f"comma-separated subset of {','.join(ESTIMATOR_NAMES)}")
    estim.add_argument("--nuisance", choices=("parametric", "kernel"))
    estim.add_argument("--folds", type=_positive_int("--folds"))
    estim.add_argument("--bootstrap-B", dest="bootstrap_B", type=_positive_int("--bootstrap-B"))
    estim.add_argument("--level", type=_level)
    estim.add_argument("--effects", action="store_true", default=None,
                       help="also report E[Y(1)], P_AMY and (binary outcome) R_AMY")
    estim.add_argument("--outcome-kind", dest="outcome_kind", choices=("continuous", "binary"),
                       help="declare the outcome coding; 'binary' enables R_AMY")
    estim.add_argument("--landmark-cap", dest="landmark_cap", type=_positive_int("--landmark-cap"))

    p = argparse.ArgumentParser(prog="proxpath", description="Proximal estimation of a path-specific effect.")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate", parents=[shared], help="draw a synthetic dataset and its oracle values")
    s.add_argument("--n", type=_positive_int("--n"))
    s.add_argument("--n-mc", dest="n_mc", type=_positive_int("--n-mc"))
    s.add_argument("--outcome", choices=("continuous", "binary"))
    sub.add_parser("fit-bridges", parents=[shared, estim], help="fit the six bridge functions")
    sub.add_parser("estimate", parents=[shared, estim], help="estimate psi and effect summaries")
    st = sub.add_parser("study", parents=[shared, estim], help="run a replicated simulation study")
    st.add_argument("--scenarios", type=_int_list)
    st.add_argument("--reps", type=_positive_int("--reps"))
    st.add_argument("--n", type=_positive_int("--n"))
    st.add_argument("--n-mc", dest="n_mc", type=_positive_int("--n-mc"))
    st.add_argument("--outcome", choices=("continuous", "binary"))
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args)
        if args.command == "simulate" and not cfg.get("out"):
            raise UsageError("simulate requires --out")
        if args.command in ("fit-bridges", "estimate") and not cfg.get("in"):
            raise UsageError(f"{args.command} requires --in")
        if args.command == "fit-bridges" and not cfg.get("out"):
            raise UsageError("fit-bridges requires --out")
    except (UsageError, ConfigurationError, OSError, tomllib.TOMLDecodeError) as exc:
        parser.error(str(exc))
    try:
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        parser.error(str(exc))
    except (ProxPathError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
