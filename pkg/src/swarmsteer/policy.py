"""Feedback recovery from the solved pairwise marginals.

The optimal chain couples consecutive slices through Gaussian transition
kernels whose mean shift is (interaction drift + base drift + control) over
one time step.  Inverting that relation at every supported grid node turns
the conditional means of the pairwise marginals into a discretized feedback
field, evaluated later by interpolation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chain import MarginalSet
from .costs import DynamicsSpec
from .grid import Grid, conv_gradw

__all__ = ["PolicyField", "recover_policy", "eval_policy"]

SUPPORT_THRESHOLD = 1e-8


@dataclass
class PolicyField:
    """Control values per (time slice, grid node) with a support mask.

    Piecewise constant in time over [i/steps, (i+1)/steps), piecewise
    linear in space; values off the support mask are copied from the
    nearest supported node.
    """

    grid: Grid
    values: np.ndarray          # (steps, D)
    support: np.ndarray         # (steps, D) bool

    @property
    def steps(self) -> int:
        return self.values.shape[0]


def recover_policy(spec: DynamicsSpec, marg: MarginalSet) -> PolicyField:
    """Invert the transition means of the solved chain into a feedback field.

    At slice i and node x the control is
    ``steps * (E[x_next | x] - x) + (grad W * rho_i)(x) - b(x)``,
    defined where the slice marginal carries at least a 1e-8 fraction of
    its mass; elsewhere the nearest supported value is used.
    """
    grid = marg.grid
    steps = marg.steps
    if steps != spec.steps:
        raise ValueError(f"marginals have {steps} steps, dynamics {spec.steps}")
    drift_vals = spec.drift_values(grid)
    values = np.zeros((steps, grid.size))
    support = np.zeros((steps, grid.size), dtype=bool)
    for i in range(steps):
        p = marg.node[i]
        total = p.sum()
        if total <= 0:
            raise ValueError(f"slice {i} has no supported nodes")
        mask = p >= SUPPORT_THRESHOLD * total
        cond_mean = np.zeros(grid.size)
        cond_mean[mask] = (marg.pair[i][mask] @ grid.nodes) / p[mask]
        conv = conv_gradw(spec.pot, grid, marg.node_prob(i))
        xi = steps * (cond_mean - grid.nodes) + conv - drift_vals
        # extend off-support nodes from their nearest supported neighbor
        sup_idx = np.flatnonzero(mask)
        nearest = sup_idx[np.abs(grid.nodes[sup_idx][None, :]
                                 - grid.nodes[:, None]).argmin(axis=1)]
        values[i] = np.where(mask, xi, xi[nearest])
        support[i] = mask
    return PolicyField(grid=grid, values=values, support=support)


def eval_policy(policy: PolicyField, t: float, x) -> np.ndarray:
    """Evaluate the field at time t and positions x (scalar or array).

    Time snaps down to the enclosing control interval; positions are
    clamped to the grid and interpolated linearly between nodes.
    """
    i = min(max(int(np.floor(t * policy.steps)), 0), policy.steps - 1)
    return np.interp(np.asarray(x, dtype=float), policy.grid.nodes, policy.values[i])
