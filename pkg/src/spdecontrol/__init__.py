"""Partially observed optimal control of 1-D stochastic PDEs.

Galerkin discretization in space, semi-implicit Euler-Maruyama in time, a
bootstrap particle filter for the hidden state, and conditional stochastic
gradient descent driven by single-realization adjoint solves.
"""

__version__ = "0.1.0"

from .basis import BasisOperators, BasisSpec, assemble, inner, norm_l2, project_l2, solve_shifted
from .control import (ControlSchedule, CostReport, RunResult, SgdConfig, evaluate_cost,
                      inner_loop, run_fe_pf_sgd, sgd_step)
from .errors import ConfigError, DegenerateLikelihoodError, DivergenceError, InvalidSpecError
from .filtering import ParticleCloud, posterior_mean, predict, resample, weight
from .forward import ObservationPath, PathRealization, simulate_path, simulate_truth, step_state
from .adjoint import AdjointPath, solve_adjoint_path
from .problems import ProblemSpec, heat_problem, lq_oracle_problem, nagumo_problem
