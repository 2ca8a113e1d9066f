"""Density steering for several interacting populations.

Each species carries its own endpoint densities, drift and state cost;
species couple only through pairwise interaction kernels, with each source
species weighted by its share of the total population.  Within one outer
linearization step the cross-species coupling is frozen inside the cost, so
the inner transport problem separates into independent chains, one per
species, and the outer loop descends the combined objective.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chain import ChainModel, MarginalSet, forward_backward, log_tensor_factors, neg_entropy
from .costs import cost_factors_from_offsets, drift_offsets, pair_residual_mass, CostFactors
from .grid import DriftField, Grid, InteractionPotential, ProbVector, StateCost, gradw_matrix
from .proximal import ProximalConfig, SolveReport
from .sbp import SbpProblem, solve_sbp

__all__ = [
    "MultiSpec",
    "MultiState",
    "build_cost_multi",
    "build_gradient_correction_multi",
    "solve_multi",
]


@dataclass(frozen=True)
class MultiSpec:
    """Species-indexed dynamics with a symmetric kernel table.

    ``pots[l][m]`` is the interaction kernel between species l and m and
    must equal ``pots[m][l]``.  ``weights`` are the species' population
    shares (positive, summing to 1; uniform by default).
    """

    pots: tuple
    eps: float
    steps: int
    weights: tuple | None = None
    drifts: tuple | None = None
    state_costs: tuple | None = None

    def __post_init__(self):
        pots = tuple(tuple(row) for row in self.pots)
        object.__setattr__(self, "pots", pots)
        count = len(pots)
        if count < 1 or any(len(row) != count for row in pots):
            raise ValueError("kernel table must be square")
        for l in range(count):
            for m in range(l + 1, count):
                if pots[l][m] != pots[m][l]:
                    raise ValueError(f"kernel table is asymmetric at ({l}, {m})")
        if self.weights is None:
            object.__setattr__(self, "weights", tuple(1.0 / count for _ in range(count)))
        else:
            object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if len(self.weights) != count or any(w <= 0 for w in self.weights):
            raise ValueError("species weights must be positive, one per species")
        if abs(sum(self.weights) - 1.0) > 1e-10:
            raise ValueError(f"species weights sum to {sum(self.weights)}, expected 1")
        if self.drifts is not None and len(self.drifts) != count:
            raise ValueError("need one drift per species")
        if self.state_costs is not None and len(self.state_costs) != count:
            raise ValueError("need one state cost per species")
        if self.steps < 1:
            raise ValueError(f"need at least one time step, got {self.steps}")
        if self.eps < 0:
            raise ValueError(f"diffusion intensity must be >= 0, got {self.eps}")

    @property
    def count(self) -> int:
        return len(self.pots)

    def drift_values(self, grid: Grid, ell: int) -> np.ndarray:
        if self.drifts is None or self.drifts[ell] is None:
            return np.zeros(grid.size)
        return self.drifts[ell].values(grid)

    def state_cost_values(self, grid: Grid, ell: int) -> np.ndarray:
        if self.state_costs is None or self.state_costs[ell] is None:
            return np.zeros(grid.size)
        return self.state_costs[ell].values(grid)


@dataclass
class MultiState:
    """Per-species chain models and their (normalized) marginals."""

    chains: list
    margs: list


def _kernel_matrices(spec: MultiSpec, grid: Grid) -> dict:
    mats = {}
    for row in spec.pots:
        for pot in row:
            if pot not in mats and not pot.is_zero:
                mats[pot] = gradw_matrix(pot, grid)
    return mats


def _offsets_all(spec: MultiSpec, grid: Grid, margs: list, mats: dict) -> np.ndarray:
    """Residual drift offsets for every species, shape (L, steps, D).

    The interaction drift seen by species l sums the kernel convolutions
    against every species' slice marginal, weighted by that species' share.
    """
    out = np.zeros((spec.count, spec.steps, grid.size))
    for l in range(spec.count):
        conv = np.zeros((spec.steps, grid.size))
        for m in range(spec.count):
            pot = spec.pots[l][m]
            if pot.is_zero:
                continue
            conv += spec.weights[m] * (margs[m].node[:spec.steps] @ mats[pot].T)
        out[l] = drift_offsets(conv, spec.drift_values(grid, l), spec.steps)
    return out


def build_cost_multi(spec: MultiSpec, state: MultiState, ell: int) -> CostFactors:
    """Cost factors for species ``ell`` given every species' marginals."""
    grid = state.margs[0].grid
    mats = _kernel_matrices(spec, grid)
    offsets = _offsets_all(spec, grid, state.margs, mats)
    return cost_factors_from_offsets(grid, offsets[ell], spec.state_cost_values(grid, ell))


def build_gradient_correction_multi(spec: MultiSpec, state: MultiState, ell: int) -> np.ndarray:
    """First-variation node correction (steps, D) for species ``ell``.

    Sums over source species m the kernel between ``ell`` and m applied to
    m's own residual mass (m's bracket against m's pairwise marginal),
    weighted by m's population share.
    """
    grid = state.margs[0].grid
    mats = _kernel_matrices(spec, grid)
    offsets = _offsets_all(spec, grid, state.margs, mats)
    out = np.zeros((spec.steps, grid.size))
    for m in range(spec.count):
        pot = spec.pots[ell][m]
        if pot.is_zero:
            continue
        r = pair_residual_mass(grid, offsets[m], state.margs[m].pair)
        out += spec.weights[m] * (r @ mats[pot])
    return out


def _combined_objective(spec: MultiSpec, grid: Grid, margs: list, mats: dict) -> float:
    """Sum over species of w_l (<C_l, M_l> + eps <M_l, log M_l>).

    Marginals are normalized per species; the species masses scale both the
    cost terms and the entropy (including the w log w constants, kept so the
    value is the exact objective of the combined measure).
    """
    offsets = _offsets_all(spec, grid, margs, mats)
    total = 0.0
    for l in range(spec.count):
        factors = cost_factors_from_offsets(grid, offsets[l], spec.state_cost_values(grid, l))
        cost = float(np.einsum("ikl,ikl->", factors.edge, margs[l].pair))
        cost += float(np.einsum("ik,ik->", factors.node, margs[l].node))
        w = spec.weights[l]
        total += w * (cost + spec.eps * (neg_entropy(margs[l]) + np.log(w)))
    return total


def solve_multi(spec: MultiSpec, mus: list, nus: list,
                cfg: ProximalConfig | None = None) -> list:
    """Steer every species between its endpoint densities jointly.

    ``mus[l]`` and ``nus[l]`` must carry total mass equal to the species
    weight.  Returns one SolveReport per species; the ``objectives`` series
    (shared across the reports) tracks the combined objective of all
    species, which is non-increasing under backtracking.
    """
    cfg = cfg or ProximalConfig()
    count = spec.count
    if len(mus) != count or len(nus) != count:
        raise ValueError(f"need {count} endpoint pairs, got {len(mus)}/{len(nus)}")
    grid = mus[0].grid
    for l in range(count):
        if mus[l].grid != grid or nus[l].grid != grid:
            raise ValueError("all endpoint densities must share one grid")
        for name, vec in (("initial", mus[l]), ("target", nus[l])):
            if abs(vec.total - spec.weights[l]) > 1e-8 * max(1.0, spec.weights[l]):
                raise ValueError(
                    f"{name} density of species {l} carries mass {vec.total}, "
                    f"expected the species weight {spec.weights[l]}")
    mus = [v.normalized() for v in mus]
    nus = [v.normalized() for v in nus]

    mats = _kernel_matrices(spec, grid)
    models = [ChainModel.uniform(grid, spec.steps) for _ in range(count)]
    margs = [forward_backward(m) for m in models]
    obj = _combined_objective(spec, grid, margs, mats)

    objectives = [obj]
    reports = [SolveReport(objectives=objectives) for _ in range(count)]
    for rep in reports:
        rep.residuals.append(0.0)
        rep.step_sizes.append(cfg.eta)
    warm = [(None, None)] * count

    for k in range(cfg.outer_iters):
        offsets = _offsets_all(spec, grid, margs, mats)
        residual_mass = [pair_residual_mass(grid, offsets[m], margs[m].pair)
                         for m in range(count)]
        eta = cfg.eta
        accepted = None
        for _ in range(cfg.max_shrinks + 1):
            candidate = []
            for l in range(count):
                factors = cost_factors_from_offsets(
                    grid, offsets[l], spec.state_cost_values(grid, l))
                correction = np.zeros((spec.steps, grid.size))
                for m in range(count):
                    pot = spec.pots[l][m]
                    if not pot.is_zero:
                        correction += spec.weights[m] * (residual_mass[m] @ mats[pot])
                phi_k, psi_k = log_tensor_factors(models[l])
                cost_node = factors.node.copy()
                cost_node[:spec.steps] += correction
                cost_node -= phi_k / eta
                problem = SbpProblem(cost_node=cost_node,
                                     cost_edge=factors.edge - psi_k / eta,
                                     eps_eff=spec.eps + 1.0 / eta,
                                     mu0=mus[l], nuT=nus[l])
                candidate.append(solve_sbp(problem, tol=cfg.inner_tol,
                                           max_iters=cfg.inner_max_iters,
                                           log_u0=warm[l][0], log_uT=warm[l][1]))
            obj_new = _combined_objective(spec, grid, [s.marg for s in candidate], mats)
            if not cfg.backtracking or obj_new <= obj + 1e-10:
                accepted = (candidate, obj_new, eta)
                break
            eta *= cfg.shrink
        if accepted is None:
            for rep in reports:
                rep.stalled = True
            break

        candidate, obj_new, eta = accepted
        change = max(candidate[l].marg.max_node_tv(margs[l]) for l in range(count))
        models = [s.model for s in candidate]
        margs = [s.marg for s in candidate]
        warm = [(s.log_u0, s.log_uT) for s in candidate]
        obj = obj_new
        objectives.append(obj)
        for l, rep in enumerate(reports):
            rep.residuals.append(candidate[l].residual)
            rep.step_sizes.append(eta)
            rep.marginal_changes.append(change)
            rep.iterations = k + 1
        if change < cfg.outer_tol:
            for rep in reports:
                rep.converged = True
            break

    for l, rep in enumerate(reports):
        rep.model = models[l]
        rep.marg = margs[l]
    return reports
