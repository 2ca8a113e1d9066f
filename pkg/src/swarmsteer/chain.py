"""Chain-factored path distributions and exact marginal inference.

A path distribution over (steps+1) time slices, each living on a D-node
grid, is stored through node and edge log-potentials of the time chain
x_0 - x_1 - ... - x_steps.  Forward/backward message passing gives exact
node and pairwise marginals in O(D^2 * steps); everything runs in the log
domain so that sharp kernels (small regularization) stay representable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp, xlogy

from .grid import Grid, ProbVector

__all__ = [
    "ChainModel",
    "MarginalSet",
    "NumericalFailure",
    "forward_backward",
    "neg_entropy",
    "log_tensor_factors",
    "log_matmul",
]

# Log factors below this are treated as exact zeros of the distribution.
LOG_ZERO_SENTINEL = -1e9


class NumericalFailure(RuntimeError):
    """Message passing produced non-finite values despite log-domain math."""


@dataclass
class ChainModel:
    """Node/edge log-potentials of a chain-structured path distribution.

    The implied probability tensor is
    ``M(x_0..x_T) = exp(sum_i phi_i(x_i) + sum_i psi_i(x_i, x_{i+1})) / Z``.
    ``log_z`` caches log Z and is ``None`` while stale.
    """

    grid: Grid
    node_logpot: np.ndarray   # (steps+1, D)
    edge_logpot: np.ndarray   # (steps, D, D)
    log_z: float | None = None

    def __post_init__(self):
        self.node_logpot = np.asarray(self.node_logpot, dtype=float)
        self.edge_logpot = np.asarray(self.edge_logpot, dtype=float)
        d = self.grid.size
        steps = self.node_logpot.shape[0] - 1
        if steps < 1 or self.node_logpot.shape != (steps + 1, d):
            raise ValueError(f"node log-potentials have shape {self.node_logpot.shape}")
        if self.edge_logpot.shape != (steps, d, d):
            raise ValueError(
                f"edge log-potentials have shape {self.edge_logpot.shape}, "
                f"expected ({steps}, {d}, {d})")

    @property
    def steps(self) -> int:
        return self.node_logpot.shape[0] - 1

    @classmethod
    def uniform(cls, grid: Grid, steps: int) -> "ChainModel":
        """The uniform path distribution (all-zero log-potentials)."""
        return cls(grid, np.zeros((steps + 1, grid.size)),
                   np.zeros((steps, grid.size, grid.size)))


@dataclass
class MarginalSet:
    """Exact node and pairwise marginals of a normalized chain distribution.

    ``node[i]`` sums to 1, ``pair[i]`` sums to 1, and summing ``pair[i]``
    over its second (first) index recovers ``node[i]`` (``node[i+1]``).
    """

    grid: Grid
    node: np.ndarray   # (steps+1, D)
    pair: np.ndarray   # (steps, D, D)

    @property
    def steps(self) -> int:
        return self.node.shape[0] - 1

    def node_prob(self, i: int, total: float = 1.0) -> ProbVector:
        return ProbVector(self.grid, self.node[i] * total)

    def max_node_tv(self, other: "MarginalSet") -> float:
        """Largest total-variation distance between matching node marginals."""
        return float(0.5 * np.abs(self.node - other.node).sum(axis=1).max())


def forward_backward(model: ChainModel) -> MarginalSet:
    """Exact marginals of the normalized chain distribution; refreshes log_z.

    Raises
    ------
    NumericalFailure
        If a message slice comes out non-finite (NaN / +inf) or the model
        has no mass at all.
    """
    phi, psi = model.node_logpot, model.edge_logpot
    steps, d = model.steps, model.grid.size

    la = np.empty((steps + 1, d))
    la[0] = phi[0]
    for i in range(steps):
        la[i + 1] = logsumexp(la[i][:, None] + psi[i], axis=0) + phi[i + 1]
        if np.isnan(la[i + 1]).any() or np.isposinf(la[i + 1]).any():
            raise NumericalFailure(f"forward message at slice {i + 1} is non-finite")

    lb = np.zeros((steps + 1, d))
    for i in range(steps - 1, -1, -1):
        lb[i] = logsumexp(psi[i] + (phi[i + 1] + lb[i + 1])[None, :], axis=1)
        if np.isnan(lb[i]).any() or np.isposinf(lb[i]).any():
            raise NumericalFailure(f"backward message at slice {i} is non-finite")

    log_z = float(logsumexp(la[steps]))
    if not np.isfinite(log_z):
        raise NumericalFailure("chain has zero total mass (log normalizer diverged)")
    model.log_z = log_z

    pair = np.empty((steps, d, d))
    for i in range(steps):
        lp = la[i][:, None] + psi[i] + (phi[i + 1] + lb[i + 1])[None, :] - log_z
        pair[i] = np.exp(lp)

    node = np.empty((steps + 1, d))
    node[:steps] = pair.sum(axis=2)
    node[steps] = pair[steps - 1].sum(axis=0)
    return MarginalSet(grid=model.grid, node=node, pair=pair)


def neg_entropy(marg: MarginalSet) -> float:
    """<M, log M> of the chain distribution (non-positive), via the chain rule.

    Decomposes as sum_i <pair_i, log pair_i> - sum over interior slices of
    <node_i, log node_i>, with 0 log 0 = 0.
    """
    out = float(xlogy(marg.pair, marg.pair).sum())
    if marg.steps > 1:
        out -= float(xlogy(marg.node[1:marg.steps], marg.node[1:marg.steps]).sum())
    return out


def log_tensor_factors(model: ChainModel) -> tuple[np.ndarray, np.ndarray]:
    """Node/edge factors whose sum reproduces log M exactly on the support.

    log Z is folded into the slice-0 node factor.  Factors at zero-probability
    states are clamped to a large negative sentinel so that downstream
    arithmetic stays finite; exponentiating the sentinel recovers the zeros.
    """
    if model.log_z is None:
        raise ValueError("model normalizer is stale; run forward_backward first")
    phi = model.node_logpot.copy()
    phi[0] -= model.log_z
    psi = model.edge_logpot.copy()
    np.maximum(phi, LOG_ZERO_SENTINEL, out=phi)
    np.maximum(psi, LOG_ZERO_SENTINEL, out=psi)
    return phi, psi


def log_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """log(exp(a) @ exp(b)) with per-row/column max subtraction.

    Rows of `a` (columns of `b`) that are entirely -inf produce -inf output,
    not NaN.
    """
    am = a.max(axis=-1, keepdims=True)
    bm = b.max(axis=-2, keepdims=True)
    am_safe = np.where(np.isfinite(am), am, 0.0)
    bm_safe = np.where(np.isfinite(bm), bm, 0.0)
    prod = np.exp(a - am_safe) @ np.exp(b - bm_safe)
    with np.errstate(divide="ignore"):
        return np.log(prod) + am_safe + bm_safe
