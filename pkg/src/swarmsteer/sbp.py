"""Entropy-regularized optimal transport on the time chain.

Solves ``min <C, M> + eps * <M, log M>`` over chain-structured tensors M
whose first and last marginals are pinned.  The optimizer factors as the
cost kernel times dual potentials living only on the two constrained
slices, so the whole problem reduces to matrix scaling against the
end-to-end kernel obtained by contracting the chain, followed by one
message-passing sweep to read out all marginals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .chain import ChainModel, MarginalSet, forward_backward, log_matmul, neg_entropy
from .grid import ProbVector

__all__ = ["SbpProblem", "SbpSolution", "InfeasibleMarginal", "solve_sbp", "sbp_objective"]


class InfeasibleMarginal(RuntimeError):
    """A pinned marginal demands mass where the kernel carries none."""

    def __init__(self, node_index: int):
        self.node_index = node_index
        super().__init__(
            f"marginal constraint at node {node_index} is positive where the "
            "cost kernel has no support")


@dataclass
class SbpProblem:
    """Chain-factored cost with marginal constraints at the two endpoints."""

    cost_node: np.ndarray   # (steps+1, D)
    cost_edge: np.ndarray   # (steps, D, D)
    eps_eff: float
    mu0: ProbVector
    nuT: ProbVector

    def __post_init__(self):
        if self.eps_eff <= 0:
            raise ValueError(f"regularization must be positive, got {self.eps_eff}")
        if abs(self.mu0.total - self.nuT.total) > 1e-10 * max(1.0, self.mu0.total):
            raise ValueError(
                f"endpoint masses differ: {self.mu0.total} vs {self.nuT.total}")
        if self.mu0.grid != self.nuT.grid:
            raise ValueError("endpoint marginals live on different grids")
        size = self.mu0.grid.size
        steps = self.cost_edge.shape[0]
        if self.cost_edge.shape != (steps, size, size) \
                or self.cost_node.shape != (steps + 1, size):
            raise ValueError(
                f"cost shapes {self.cost_node.shape} / {self.cost_edge.shape} do not "
                f"form a chain over a {size}-node grid")
        if not (np.all(np.isfinite(self.cost_node)) and np.all(np.isfinite(self.cost_edge))):
            raise ValueError("cost factors must be finite")

    @property
    def steps(self) -> int:
        return self.cost_node.shape[0] - 1


@dataclass
class SbpSolution:
    """Optimal chain model, its marginals and the endpoint dual potentials."""

    model: ChainModel
    marg: MarginalSet
    log_u0: np.ndarray
    log_uT: np.ndarray
    iterations: int
    residual: float
    residual_history: list
    converged: bool
    total: float

    @property
    def dual_u0(self) -> np.ndarray:
        return np.exp(self.log_u0)

    @property
    def dual_uT(self) -> np.ndarray:
        return np.exp(self.log_uT)


def _collapse_chain(phi: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """End-to-end log kernel between slice 0 and slice `steps`.

    Contracts interior slices one at a time with stabilized log-matmuls,
    folding each interior node potential into the preceding edge.
    """
    steps = psi.shape[0]
    out = psi[0] + phi[1][None, :]
    for i in range(1, steps):
        out = log_matmul(out, psi[i] + phi[i + 1][None, :])
    return phi[0][:, None] + out


def solve_sbp(problem: SbpProblem, tol: float = 1e-9,
              max_iters: int = 10000,
              log_u0: np.ndarray | None = None,
              log_uT: np.ndarray | None = None) -> SbpSolution:
    """Match the endpoint marginals by alternating dual updates.

    Parameters
    ----------
    problem : SbpProblem
    tol : float
        Convergence threshold on the larger of the two endpoint residuals,
        measured in total-variation distance between measures.
    max_iters : int
        Sweep budget; on exhaustion the best iterate is returned with
        ``converged=False``.
    log_u0, log_uT : arrays, optional
        Warm-start values for the log dual potentials.

    Raises
    ------
    InfeasibleMarginal
        If a constraint is positive on states the kernel cannot reach.
    """
    if tol <= 0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    eps = problem.eps_eff
    phi = -problem.cost_node / eps
    psi = -problem.cost_edge / eps
    kernel = _collapse_chain(phi, psi)

    with np.errstate(divide="ignore"):
        log_mu = np.log(problem.mu0.mass)
        log_nu = np.log(problem.nuT.mass)
    f = np.zeros_like(log_mu) if log_u0 is None else log_u0.copy()
    g = np.zeros_like(log_nu) if log_uT is None else log_uT.copy()

    def tv(log_proj, target):
        with np.errstate(over="ignore"):
            return float(0.5 * np.abs(np.exp(log_proj) - target).sum())

    history = []
    iterations = 0
    converged = False
    for iterations in range(1, max_iters + 1):
        row = logsumexp(kernel + g[None, :], axis=1)
        _check_feasible(row, log_mu, 0)
        r0 = tv(f + row, problem.mu0.mass)
        f = log_mu - row

        col = logsumexp(kernel + f[:, None], axis=0)
        _check_feasible(col, log_nu, problem.steps)
        rT = tv(g + col, problem.nuT.mass)
        g = log_nu - col

        history.append(max(r0, rT))
        if history[-1] <= tol:
            converged = True
            break

    row = logsumexp(kernel + g[None, :], axis=1)
    col = logsumexp(kernel + f[:, None], axis=0)
    residual = max(tv(f + row, problem.mu0.mass), tv(g + col, problem.nuT.mass))

    node_logpot = phi.copy()
    node_logpot[0] += f
    node_logpot[-1] += g
    model = ChainModel(problem.mu0.grid, node_logpot, psi)
    marg = forward_backward(model)
    return SbpSolution(model=model, marg=marg, log_u0=f, log_uT=g,
                       iterations=iterations, residual=residual,
                       residual_history=history, converged=converged,
                       total=problem.mu0.total)


def _check_feasible(log_proj: np.ndarray, log_target: np.ndarray, node_index: int):
    """Hard zeros of the kernel projection must not carry constraint mass.

    States whose relative log weight sits beyond the zero-probability
    sentinel scale are exact zeros by convention; bridging them with a dual
    potential would silently undo the sentinel semantics.
    """
    charged = log_target > -np.inf
    top = log_proj.max()
    if not np.isfinite(top):
        if np.any(charged):
            raise InfeasibleMarginal(node_index)
        return
    if np.any(((log_proj - top) <= -1e8) & charged):
        raise InfeasibleMarginal(node_index)


def sbp_objective(sol: SbpSolution, problem: SbpProblem) -> float:
    """<cost, M> + eps_eff * <M, log M> of the solution measure.

    Evaluated through the marginal decomposition; the solution measure is
    the normalized chain distribution scaled by the constraint mass.
    """
    w = sol.total
    cost = float(np.einsum("ikl,ikl->", problem.cost_edge, sol.marg.pair))
    cost += float(np.einsum("ik,ik->", problem.cost_node, sol.marg.node))
    xlogx = neg_entropy(sol.marg) + (np.log(w) if w > 0 else 0.0)
    return w * cost + problem.eps_eff * w * xlogx
