"""Transition-effort cost factors and their variation in the path measure.

The per-path cost of a discretized controlled diffusion splits over the
time chain: each edge carries the squared residual between the actual
increment and the drift the uncontrolled dynamics would produce, each node
carries the running state cost.  Because the drift contains the convolution
of the interaction kernel with the current slice marginals, the cost tensor
depends on the path measure itself; ``gradient_correction`` supplies the
extra node term that makes cost-plus-correction the exact first variation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chain import MarginalSet
from .grid import DriftField, Grid, InteractionPotential, StateCost, conv_gradw, gradw_matrix

__all__ = [
    "DynamicsSpec",
    "CostFactors",
    "build_cost",
    "build_gradient_correction",
    "expected_cost",
]


@dataclass(frozen=True)
class DynamicsSpec:
    """Single-population dynamics: interaction kernel, drift, state cost.

    ``eps`` is the diffusion intensity (0 allowed for the deterministic
    limit), ``steps`` the number of time steps over the unit horizon.
    """

    pot: InteractionPotential
    eps: float
    steps: int
    drift: DriftField | None = None
    state_cost: StateCost | None = None

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"need at least one time step, got {self.steps}")
        if self.eps < 0:
            raise ValueError(f"diffusion intensity must be >= 0, got {self.eps}")

    def drift_values(self, grid: Grid) -> np.ndarray:
        return np.zeros(grid.size) if self.drift is None else self.drift.values(grid)

    def state_cost_values(self, grid: Grid) -> np.ndarray:
        return np.zeros(grid.size) if self.state_cost is None else self.state_cost.values(grid)


@dataclass
class CostFactors:
    """Chain-factored cost arrays: node (steps+1, D) and edge (steps, D, D)."""

    node: np.ndarray
    edge: np.ndarray


def drift_offsets(conv: np.ndarray, drift_vals: np.ndarray, steps: int) -> np.ndarray:
    """Per-slice residual offsets (conv - drift) / steps, shape (steps, D)."""
    return (conv - drift_vals[None, :]) / steps


def cost_factors_from_offsets(grid: Grid, offsets: np.ndarray,
                              v_vals: np.ndarray) -> CostFactors:
    """Assemble cost factors given the per-slice drift offsets.

    edge[i][k, l] = steps/2 * (x_l - x_k + offsets[i][k])^2,
    node[i] = V / steps on all slices but the last, which is free.
    """
    steps = offsets.shape[0]
    x = grid.nodes
    diff = x[None, None, :] - x[None, :, None] + offsets[:, :, None]
    edge = 0.5 * steps * diff ** 2
    node = np.zeros((steps + 1, grid.size))
    node[:steps] = v_vals[None, :] / steps
    return CostFactors(node=node, edge=edge)


def pair_residual_mass(grid: Grid, offsets: np.ndarray, pair: np.ndarray) -> np.ndarray:
    """r[i][k] = sum_l (x_l - x_k + offsets[i][k]) * pair[i][k, l]."""
    x = grid.nodes
    diff = x[None, None, :] - x[None, :, None] + offsets[:, :, None]
    return np.einsum("ikl,ikl->ik", diff, pair)


def interaction_conv(pot: InteractionPotential, grid: Grid,
                     node_marginals: np.ndarray) -> np.ndarray:
    """Convolution of the kernel gradient with each slice marginal, (steps, D)."""
    steps = node_marginals.shape[0] - 1
    if pot.is_zero:
        return np.zeros((steps, grid.size))
    return node_marginals[:steps] @ gradw_matrix(pot, grid).T


def build_cost(spec: DynamicsSpec, marg: MarginalSet) -> CostFactors:
    """Cost factors of the dynamics at the given slice marginals."""
    grid = marg.grid
    conv = interaction_conv(spec.pot, grid, marg.node)
    offsets = drift_offsets(conv, spec.drift_values(grid), spec.steps)
    return cost_factors_from_offsets(grid, offsets, spec.state_cost_values(grid))


def build_gradient_correction(spec: DynamicsSpec, marg: MarginalSet) -> np.ndarray:
    """Node-cost array (steps, D) completing the first variation of the cost.

    For slice i the correction at node y is
    ``sum_{k,l} grad W(x_k - y) * (x_l - x_k + offsets[i][k]) * pair[i][k, l]``;
    it attaches to time node i (the terminal slice carries none).
    """
    grid = marg.grid
    if spec.pot.is_zero:
        return np.zeros((spec.steps, grid.size))
    conv = interaction_conv(spec.pot, grid, marg.node)
    offsets = drift_offsets(conv, spec.drift_values(grid), spec.steps)
    r = pair_residual_mass(grid, offsets, marg.pair)
    return r @ gradw_matrix(spec.pot, grid)


def expected_cost(spec: DynamicsSpec, marg: MarginalSet) -> float:
    """<C(M), M> through the marginal decomposition."""
    factors = build_cost(spec, marg)
    out = float(np.einsum("ikl,ikl->", factors.edge, marg.pair))
    out += float(np.einsum("ik,ik->", factors.node, marg.node))
    return out
