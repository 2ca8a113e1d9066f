"""Finite-horizon density steering for interacting agent populations.

Grid pipeline: discretize endpoint densities, solve the nonlinear chain
transport problem by proximal linearization with an exact chain inner
solver, recover the feedback field, validate with particles.  Linear
quadratic pipeline: coupled Riccati / covariance / mean trajectories and
affine feedback gains in closed form.
"""

from .grid import (Grid, ProbVector, InteractionPotential, DriftField, StateCost,
                   make_grid, discretize_gaussian, conv_gradw, gradw_matrix)
from .chain import (ChainModel, MarginalSet, NumericalFailure, forward_backward,
                    neg_entropy, log_tensor_factors)
from .sbp import SbpProblem, SbpSolution, InfeasibleMarginal, solve_sbp, sbp_objective
from .costs import (DynamicsSpec, CostFactors, build_cost, build_gradient_correction,
                    expected_cost)
from .proximal import (ProximalConfig, SolveReport, solve_density_control,
                       assemble_effective_problem, kl_divergence)
from .multispecies import (MultiSpec, MultiState, build_cost_multi,
                           build_gradient_correction_multi, solve_multi)
from .lq import (LqSpec, LqSolution, ConvergenceError, solve_covariance, solve_means,
                 solve_lq, lq_policy)
from .policy import PolicyField, recover_policy, eval_policy
from .simulate import (SimConfig, EmpiricalStats, SimResult, simulate_grid,
                       simulate_lq, wasserstein1_1d)

__version__ = "0.1.0"
