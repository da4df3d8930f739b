"""Bridge-function estimators: linear moment chains and kernel minimax fits."""

from .kernel import KernelBridge, KernelConfig, KernelSpec, SaddleProblem, fit_all_bridges_kernel, solve_minimax
from .parametric import BridgeMaps, LinearBridge, MomentProblem, fit_all_parametric, solve_linear_moment
