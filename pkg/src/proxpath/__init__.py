"""Proximal estimation of a path-specific mediation effect with a recanting witness."""

from .bridges.kernel import KernelBridge, KernelConfig, KernelNuisanceFitter, fit_all_bridges_kernel
from .bridges.parametric import BridgeMaps, LinearBridge, fit_all_parametric, fit_h_chain, fit_q_chain
from .crossfit import dml_effects, dml_estimate, dml_ey1, make_folds
from .data import ColumnSchema, Dataset, FeatureSpec, load_csv, write_csv
from .dgp import (MisspecificationMode, ScenarioSpec, default_spec, oracle_effects, oracle_ey1, oracle_psi,
                  seed_stream, simulate)
from .errors import ConfigurationError, EstimationError, ProxPathError
from .estimators import (BridgeSet, EstimateReport, effect_summaries, eif_values, ey1_proximal, psi_hybrid1,
                         psi_hybrid2, psi_pipw, psi_por, psi_quadr)
from .study import MetricsTable, StudyConfig, bootstrap_ci, run_study

__version__ = "0.1.0"
