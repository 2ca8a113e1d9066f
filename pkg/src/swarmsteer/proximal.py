"""Outer loop for the nonlinear chain transport problem.

The transition cost depends on the path measure through the interaction
drift, so the problem is solved by successive linearization: at each outer
iterate the cost and its measure-gradient correction are frozen, a proximity
penalty against the current iterate is added, and the resulting plain
entropic chain transport problem goes to the inner solver.  The proximity
weight 1/eta joins the entropic weight, so the inner regularization is
``eps + 1/eta``.  With backtracking on the step size the true objective is
non-increasing along accepted iterates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chain import (ChainModel, MarginalSet, NumericalFailure, forward_backward,
                    log_tensor_factors, neg_entropy)
from .costs import DynamicsSpec, build_cost, build_gradient_correction, expected_cost
from .grid import ProbVector
from .sbp import SbpProblem, solve_sbp

__all__ = [
    "ProximalConfig",
    "SolveReport",
    "solve_density_control",
    "assemble_effective_problem",
    "kl_divergence",
]

_SENTINEL_CUTOFF = -1e8


@dataclass(frozen=True)
class ProximalConfig:
    """Outer-loop knobs.

    ``eta`` is the proximal step size, shrunk by ``shrink`` (up to
    ``max_shrinks`` times) whenever a candidate iterate fails to decrease
    the objective and backtracking is enabled.
    """

    eta: float = 1.0
    outer_iters: int = 200
    outer_tol: float = 1e-7
    backtracking: bool = True
    shrink: float = 0.5
    max_shrinks: int = 20
    inner_tol: float = 1e-9
    inner_max_iters: int = 10000

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError(f"step size must be positive, got {self.eta}")
        if not 0 < self.shrink < 1:
            raise ValueError(f"shrink factor must lie in (0, 1), got {self.shrink}")


@dataclass
class SolveReport:
    """Per-iteration diagnostics plus the final iterate."""

    objectives: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    step_sizes: list = field(default_factory=list)
    marginal_changes: list = field(default_factory=list)
    model: ChainModel | None = None
    marg: MarginalSet | None = None
    converged: bool = False
    stalled: bool = False
    iterations: int = 0


def assemble_effective_problem(spec: DynamicsSpec, model_k: ChainModel,
                               marg_k: MarginalSet, mu: ProbVector, nu: ProbVector,
                               eta: float) -> SbpProblem:
    """Linearized subproblem at the iterate ``model_k``.

    Cost factors are the frozen cost plus gradient correction minus
    ``1/eta`` times the iterate's log factors; the regularization becomes
    ``eps + 1/eta``.  The normalizer constant rides along in the slice-0
    node cost and cancels in the argmin.
    """
    factors = build_cost(spec, marg_k)
    phi_k, psi_k = log_tensor_factors(model_k)
    cost_node = factors.node.copy()
    cost_node[:spec.steps] += build_gradient_correction(spec, marg_k)
    cost_node -= phi_k / eta
    cost_edge = factors.edge - psi_k / eta
    return SbpProblem(cost_node=cost_node, cost_edge=cost_edge,
                      eps_eff=spec.eps + 1.0 / eta, mu0=mu, nuT=nu)


def solve_density_control(spec: DynamicsSpec, mu: ProbVector, nu: ProbVector,
                          cfg: ProximalConfig | None = None) -> SolveReport:
    """Steer the population from ``mu`` to ``nu`` with minimum expected effort.

    Parameters
    ----------
    spec : DynamicsSpec
        Interaction kernel, drift, state cost, diffusion intensity and
        number of time steps.
    mu, nu : ProbVector
        Initial and target densities on the same grid, equal total mass.
    cfg : ProximalConfig, optional

    Returns
    -------
    SolveReport
        Final chain model and marginals plus the accepted objective values
        ``<C(M), M> + eps <M, log M>``, endpoint residuals, step sizes and
        inter-iterate marginal movements.  ``stalled`` is set when
        backtracking could not find a decreasing step.
    """
    cfg = cfg or ProximalConfig()
    if mu.grid != nu.grid:
        raise ValueError("endpoint densities live on different grids")
    if abs(mu.total - nu.total) > 1e-10 * max(1.0, mu.total):
        raise ValueError(f"endpoint masses differ: {mu.total} vs {nu.total}")
    mu, nu = mu.normalized(), nu.normalized()

    report = SolveReport()
    model = ChainModel.uniform(mu.grid, spec.steps)
    marg = forward_backward(model)
    obj = expected_cost(spec, marg) + spec.eps * neg_entropy(marg)
    report.objectives.append(obj)
    report.residuals.append(0.0)
    report.step_sizes.append(cfg.eta)
    warm_u0 = warm_uT = None

    for k in range(cfg.outer_iters):
        eta = cfg.eta
        accepted = None
        for _ in range(cfg.max_shrinks + 1):
            problem = assemble_effective_problem(spec, model, marg, mu, nu, eta)
            sol = solve_sbp(problem, tol=cfg.inner_tol, max_iters=cfg.inner_max_iters,
                            log_u0=warm_u0, log_uT=warm_uT)
            obj_new = expected_cost(spec, sol.marg) + spec.eps * neg_entropy(sol.marg)
            if not cfg.backtracking or obj_new <= obj + 1e-10:
                accepted = (sol, obj_new, eta)
                break
            eta *= cfg.shrink
        if accepted is None:
            report.stalled = True
            break

        sol, obj_new, eta = accepted
        change = sol.marg.max_node_tv(marg)
        model, marg, obj = sol.model, sol.marg, obj_new
        warm_u0, warm_uT = sol.log_u0, sol.log_uT
        report.objectives.append(obj)
        report.residuals.append(sol.residual)
        report.step_sizes.append(eta)
        report.marginal_changes.append(change)
        report.iterations = k + 1
        if change < cfg.outer_tol:
            report.converged = True
            break

    report.model = model
    report.marg = marg
    return report


def kl_divergence(marg_a: MarginalSet, model_a: ChainModel,
                  model_b: ChainModel) -> float:
    """KL(M_a || M_b) between two chain distributions via their factors.

    Returns ``inf`` when M_a carries mass on states where M_b vanishes.
    Both models must have fresh normalizers.
    """
    phi_b, psi_b = log_tensor_factors(model_b)
    node_bad = phi_b <= _SENTINEL_CUTOFF
    edge_bad = psi_b <= _SENTINEL_CUTOFF
    if np.any(marg_a.node[node_bad] > 1e-15) or np.any(marg_a.pair[edge_bad] > 1e-15):
        return float("inf")
    pair_eff = np.where(edge_bad, 0.0, marg_a.pair)
    node_eff = np.where(node_bad, 0.0, marg_a.node)
    cross = float(np.einsum("ikl,ikl->", pair_eff, psi_b))
    cross += float(np.einsum("ik,ik->", node_eff, phi_b))
    out = neg_entropy(marg_a) - cross
    if out < -1e-6:
        raise NumericalFailure(f"KL evaluated to {out}, below the rounding floor")
    return max(out, 0.0)
