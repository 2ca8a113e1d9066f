"""Uniform 1-D spatial grids, discrete densities and interaction kernels.

Everything downstream (chain solvers, policy recovery, simulation) works on
a fixed uniform grid.  Densities are nonnegative mass vectors over the grid
nodes; interaction forces enter through the discrete convolution of the
pairwise-kernel gradient with a mass vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "Grid",
    "ProbVector",
    "InteractionPotential",
    "DriftField",
    "StateCost",
    "make_grid",
    "discretize_gaussian",
    "conv_gradw",
    "gradw_matrix",
]


@dataclass(frozen=True)
class Grid:
    """Uniform 1-D grid with inclusive endpoints."""

    lo: float
    hi: float
    size: int
    nodes: np.ndarray = field(compare=False, repr=False)
    h: float = 0.0

    def __post_init__(self):
        if self.size < 2:
            raise ValueError(f"grid needs at least 2 nodes, got size={self.size}")
        if not self.lo < self.hi:
            raise ValueError(f"grid endpoints must satisfy lo < hi, got [{self.lo}, {self.hi}]")


def make_grid(lo: float, hi: float, size: int) -> Grid:
    """Build a uniform grid of `size` nodes spanning [lo, hi] inclusively."""
    if size < 2:
        raise ValueError(f"grid needs at least 2 nodes, got size={size}")
    if not lo < hi:
        raise ValueError(f"grid endpoints must satisfy lo < hi, got [{lo}, {hi}]")
    nodes = np.linspace(float(lo), float(hi), int(size))
    h = (float(hi) - float(lo)) / (int(size) - 1)
    return Grid(lo=float(lo), hi=float(hi), size=int(size), nodes=nodes, h=h)


@dataclass(frozen=True)
class ProbVector:
    """Nonnegative mass vector over the nodes of a grid.

    The total mass is not forced to 1: combined multi-species measures carry
    per-species weights.
    """

    grid: Grid
    mass: np.ndarray = field(compare=False, repr=False)

    def __post_init__(self):
        mass = np.asarray(self.mass, dtype=float)
        if mass.shape != (self.grid.size,):
            raise ValueError(
                f"mass vector has shape {mass.shape}, expected ({self.grid.size},)")
        if not np.all(np.isfinite(mass)):
            raise ValueError("mass vector has non-finite entries")
        if np.any(mass < -1e-15):
            raise ValueError("mass vector has negative entries")
        object.__setattr__(self, "mass", np.maximum(mass, 0.0))

    @property
    def total(self) -> float:
        return float(self.mass.sum())

    def normalized(self, total: float = 1.0) -> "ProbVector":
        s = self.mass.sum()
        if s <= 0:
            raise ValueError("cannot normalize a zero-mass vector")
        return ProbVector(self.grid, self.mass * (total / s))

    def mean(self) -> float:
        return float(self.grid.nodes @ self.mass / self.mass.sum())

    def variance(self) -> float:
        m = self.mean()
        return float(((self.grid.nodes - m) ** 2) @ self.mass / self.mass.sum())


@dataclass(frozen=True)
class InteractionPotential:
    """Symmetric pairwise potential; only its gradient is ever evaluated.

    Kinds:
      * ``none``       no interaction, gradient identically zero
      * ``power_law``  beta / (x^2 + delta^2)^(alpha/2), a softened inverse
        power law (delta > 0 keeps the gradient bounded at the origin)
      * ``quadratic``  kappa * x^2 / 2
    """

    kind: str
    alpha: float = 0.0
    beta: float = 0.0
    delta: float = 0.0
    kappa: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "power_law", "quadratic"):
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.kind == "power_law":
            if self.alpha <= 0:
                raise ValueError("power_law potential needs alpha > 0")
            if self.beta < 0:
                raise ValueError("power_law potential needs beta >= 0")
            if self.delta <= 0:
                raise ValueError("power_law potential needs delta > 0")

    @classmethod
    def none(cls) -> "InteractionPotential":
        return cls(kind="none")

    @classmethod
    def power_law(cls, alpha: float, beta: float, delta: float) -> "InteractionPotential":
        return cls(kind="power_law", alpha=float(alpha), beta=float(beta), delta=float(delta))

    @classmethod
    def quadratic(cls, kappa: float) -> "InteractionPotential":
        return cls(kind="quadratic", kappa=float(kappa))

    @property
    def is_zero(self) -> bool:
        return self.kind == "none" or (self.kind == "power_law" and self.beta == 0.0) \
            or (self.kind == "quadratic" and self.kappa == 0.0)

    def grad(self, x):
        """Gradient of the potential, vectorized; odd with grad(0) = 0 exactly."""
        x = np.asarray(x, dtype=float)
        if self.kind == "none":
            return np.zeros_like(x)
        if self.kind == "quadratic":
            return self.kappa * x
        return -self.alpha * self.beta * x * (x * x + self.delta ** 2) ** (-self.alpha / 2 - 1)


@dataclass(frozen=True)
class DriftField:
    """Autonomous drift evaluated pointwise; the callable must be vectorized."""

    fn: Callable = field(compare=False)

    def values(self, grid: Grid) -> np.ndarray:
        return np.asarray(self.fn(grid.nodes), dtype=float) * np.ones(grid.size)

    def __call__(self, x):
        return np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float)


@dataclass(frozen=True)
class StateCost:
    """Running state cost evaluated pointwise; the callable must be vectorized."""

    fn: Callable = field(compare=False)

    def values(self, grid: Grid) -> np.ndarray:
        return np.asarray(self.fn(grid.nodes), dtype=float) * np.ones(grid.size)


def discretize_gaussian(grid: Grid, mean: float, variance: float,
                        total: float = 1.0) -> ProbVector:
    """Gaussian density sampled at the grid nodes and rescaled to `total`.

    Node evaluation plus renormalization; mass outside the grid is dropped,
    so the domain should leave several standard deviations of margin.
    """
    if variance <= 0:
        raise ValueError(f"variance must be positive, got {variance}")
    if total <= 0:
        raise ValueError(f"total must be positive, got {total}")
    z = np.exp(-((grid.nodes - mean) ** 2) / (2.0 * variance))
    s = z.sum()
    if s == 0.0:
        raise ValueError(
            f"gaussian with mean {mean} underflows everywhere on [{grid.lo}, {grid.hi}]")
    return ProbVector(grid, z * (total / s))


def gradw_matrix(pot: InteractionPotential, grid: Grid) -> np.ndarray:
    """Matrix G[k, j] = grad W(nodes[k] - nodes[j]); antisymmetric."""
    return pot.grad(grid.nodes[:, None] - grid.nodes[None, :])


def conv_gradw(pot: InteractionPotential, grid: Grid, p: ProbVector) -> np.ndarray:
    """Discrete convolution out[k] = sum_j grad W(nodes[k] - nodes[j]) * p[j]."""
    if p.grid != grid:
        raise ValueError("mass vector lives on a different grid")
    if pot.is_zero:
        return np.zeros(grid.size)
    return gradw_matrix(pot, grid) @ p.mass
