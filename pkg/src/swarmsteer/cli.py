"""Configuration-driven command line front end.

Subcommands::

    swarmsteer solve <config.json>
    swarmsteer sweep <config.json> --param <dotted.key> --values a,b,c
    swarmsteer simulate <config.json> --policy <policy.csv>

A config is a single self-describing JSON document selecting one of three
modes (``grid_single``, ``grid_multi``, ``lq``) plus the solver and optional
simulation blocks.  Artifacts are CSV files with full round-trip precision
plus a JSON report; exit codes are 0 (converged), 2 (stall or solver
failure; artifacts still written when a result exists), 1 (config error).
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .chain import NumericalFailure
from .costs import DynamicsSpec
from .grid import (DriftField, Grid, InteractionPotential, ProbVector, StateCost,
                   discretize_gaussian, make_grid)
from .lq import (ConvergenceError, LqSpec, identity_gap, lyapunov_residual,
                 mean_residual, riccati_residual, solve_lq)
from .multispecies import MultiSpec, solve_multi
from .policy import PolicyField, recover_policy
from .proximal import ProximalConfig, solve_density_control
from .sbp import InfeasibleMarginal
from .simulate import SimConfig, simulate_grid, simulate_lq

__all__ = ["ConfigError", "ExperimentConfig", "run", "sweep", "main"]


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


def _fmt(value) -> str:
    return format(float(value), ".17g")


def _get(block: dict, key: str, path: str, required: bool = True, default=None):
    if key not in block:
        if required:
            raise ConfigError(f"missing key '{path}{key}'")
        return default
    return block[key]


def _number(block: dict, key: str, path: str, required: bool = True, default=None,
            minimum=None, strict_min=None):
    value = _get(block, key, path, required, default)
    if value is None:
        return None
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(f"key '{path}{key}' must be a number, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"key '{path}{key}' must be >= {minimum}, got {value}")
    if strict_min is not None and value <= strict_min:
        raise ConfigError(f"key '{path}{key}' must be > {strict_min}, got {value}")
    return float(value)


def _integer(block: dict, key: str, path: str, required: bool = True, default=None,
             minimum=None):
    value = _get(block, key, path, required, default)
    if value is None:
        return None
    if not isinstance(value, int) or isinstance(value, bool):
        raise ConfigError(f"key '{path}{key}' must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"key '{path}{key}' must be >= {minimum}, got {value}")
    return int(value)


def _parse_potential(block, path: str, default_delta: float) -> InteractionPotential:
    if block is None:
        return InteractionPotential.none()
    if not isinstance(block, dict):
        raise ConfigError(f"key '{path}' must be an object")
    kind = _get(block, "kind", path + ".")
    if kind == "none":
        return InteractionPotential.none()
    if kind == "power_law":
        alpha = _number(block, "alpha", path + ".", strict_min=0.0)
        beta = _number(block, "beta", path + ".", minimum=0.0)
        delta = _number(block, "delta", path + ".", required=False,
                        default=default_delta, strict_min=0.0)
        return InteractionPotential.power_law(alpha, beta, delta)
    if kind == "quadratic":
        kappa = _number(block, "kappa", path + ".")
        return InteractionPotential.quadratic(kappa)
    raise ConfigError(f"key '{path}.kind' must be one of none/power_law/quadratic, "
                      f"got {kind!r}")


def _parse_density(block, grid: Grid, total: float, path: str) -> ProbVector:
    if not isinstance(block, dict):
        raise ConfigError(f"key '{path}' must be an object")
    kind = _get(block, "kind", path + ".", required=False, default="gaussian")
    if kind != "gaussian":
        raise ConfigError(f"key '{path}.kind' supports only 'gaussian', got {kind!r}")
    mean = _number(block, "mean", path + ".")
    variance = _number(block, "variance", path + ".", strict_min=0.0)
    return discretize_gaussian(grid, mean, variance, total=total)


def _parse_drift(block, path: str) -> DriftField | None:
    if block is None:
        return None
    kind = _get(block, "kind", path + ".")
    if kind == "zero":
        return None
    if kind == "linear":
        coef = _number(block, "coefficient", path + ".")
        return DriftField(lambda x, c=coef: c * x)
    raise ConfigError(f"key '{path}.kind' must be zero or linear, got {kind!r}")


def _parse_state_cost(block, path: str) -> StateCost | None:
    if block is None:
        return None
    kind = _get(block, "kind", path + ".")
    if kind == "zero":
        return None
    if kind == "quadratic":
        coef = _number(block, "coefficient", path + ".", minimum=0.0)
        return StateCost(lambda x, c=coef: 0.5 * c * x * x)
    raise ConfigError(f"key '{path}.kind' must be zero or quadratic, got {kind!r}")


def _parse_solver(block) -> ProximalConfig:
    block = block or {}
    if not isinstance(block, dict):
        raise ConfigError("key 'solver' must be an object")
    kwargs = {}
    for key, parser in (
            ("eta", lambda: _number(block, "eta", "solver.", False, strict_min=0.0)),
            ("outer_iters", lambda: _integer(block, "outer_iters", "solver.", False, minimum=1)),
            ("outer_tol", lambda: _number(block, "outer_tol", "solver.", False, strict_min=0.0)),
            ("inner_tol", lambda: _number(block, "inner_tol", "solver.", False, strict_min=0.0)),
            ("inner_max_iters", lambda: _integer(block, "inner_max_iters", "solver.", False, minimum=1)),
            ("shrink", lambda: _number(block, "shrink", "solver.", False, strict_min=0.0)),
            ("max_shrinks", lambda: _integer(block, "max_shrinks", "solver.", False, minimum=0))):
        value = parser()
        if value is not None:
            kwargs[key] = value
    if "backtracking" in block:
        if not isinstance(block["backtracking"], bool):
            raise ConfigError("key 'solver.backtracking' must be a boolean")
        kwargs["backtracking"] = block["backtracking"]
    try:
        return ProximalConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"solver: {exc}") from exc


@dataclass
class ExperimentConfig:
    """Validated experiment description; fields depend on the mode."""

    mode: str
    output_dir: Path
    raw: dict
    solver: ProximalConfig | None = None
    grid: Grid | None = None
    dyn: DynamicsSpec | None = None
    mu: ProbVector | None = None
    nu: ProbVector | None = None
    multi: MultiSpec | None = None
    mus: list | None = None
    nus: list | None = None
    lq: LqSpec | None = None
    mesh: int = 400
    simulation: dict | None = None

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as handle:
                raw = json.load(handle)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        mode = _get(raw, "mode", "")
        if mode not in ("grid_single", "grid_multi", "lq"):
            raise ConfigError(f"key 'mode' must be grid_single, grid_multi or lq, "
                              f"got {mode!r}")
        out_dir = Path(_get(raw, "output_dir", ""))
        cfg = cls(mode=mode, output_dir=out_dir, raw=raw)
        cfg.simulation = cls._parse_simulation(raw, mode)
        if mode == "lq":
            cfg._parse_lq(raw)
        else:
            cfg._parse_grid_common(raw)
            if mode == "grid_single":
                cfg._parse_grid_single(raw)
            else:
                cfg._parse_grid_multi(raw)
        return cfg

    @staticmethod
    def _parse_simulation(raw: dict, mode: str):
        block = raw.get("simulation")
        if block is None:
            return None
        if mode == "grid_multi":
            raise ConfigError("key 'simulation' is not supported in grid_multi mode")
        agents = _integer(block, "agents", "simulation.", minimum=2)
        seed = _integer(block, "seed", "simulation.")
        steps = _integer(block, "steps", "simulation.", required=False, minimum=1)
        return {"agents": agents, "seed": seed, "steps": steps}

    def _parse_grid_common(self, raw: dict):
        grid_block = _get(raw, "grid", "")
        lo = _number(grid_block, "lo", "grid.")
        hi = _number(grid_block, "hi", "grid.")
        points = _integer(grid_block, "points", "grid.", minimum=2)
        if not lo < hi:
            raise ConfigError(f"key 'grid.lo' must be below 'grid.hi', got {lo} >= {hi}")
        self.grid = make_grid(lo, hi, points)
        self.steps = _integer(raw, "time_steps", "", minimum=1)
        self.eps = _number(raw, "eps", "", minimum=0.0)
        self.solver = _parse_solver(raw.get("solver"))

    def _parse_grid_single(self, raw: dict):
        pot = _parse_potential(raw.get("potential"), "potential", self.grid.h)
        drift = _parse_drift(raw.get("drift"), "drift")
        state_cost = _parse_state_cost(raw.get("state_cost"), "state_cost")
        self.dyn = DynamicsSpec(pot=pot, eps=self.eps, steps=self.steps,
                                drift=drift, state_cost=state_cost)
        self.mu = _parse_density(_get(raw, "mu", ""), self.grid, 1.0, "mu")
        self.nu = _parse_density(_get(raw, "nu", ""), self.grid, 1.0, "nu")

    def _parse_grid_multi(self, raw: dict):
        species = _get(raw, "species", "")
        if not isinstance(species, list) or not species:
            raise ConfigError("key 'species' must be a non-empty list")
        count = len(species)
        pots_block = _get(raw, "potentials", "")
        if (not isinstance(pots_block, list) or len(pots_block) != count
                or any(not isinstance(row, list) or len(row) != count
                       for row in pots_block)):
            raise ConfigError(f"key 'potentials' must be a {count}x{count} table")
        pots = tuple(tuple(_parse_potential(pots_block[l][m], f"potentials[{l}][{m}]",
                                            self.grid.h)
                           for m in range(count)) for l in range(count))
        weights, drifts, costs, mus, nus = [], [], [], [], []
        for l, block in enumerate(species):
            path = f"species[{l}]."
            weights.append(_number(block, "weight", path, required=False,
                                   default=1.0 / count, strict_min=0.0))
            drifts.append(_parse_drift(block.get("drift"), path + "drift"))
            costs.append(_parse_state_cost(block.get("state_cost"), path + "state_cost"))
        if abs(sum(weights) - 1.0) > 1e-10:
            raise ConfigError(f"key 'species[*].weight' values sum to {sum(weights)}, "
                              "expected 1")
        try:
            self.multi = MultiSpec(pots=pots, eps=self.eps, steps=self.steps,
                                   weights=tuple(weights), drifts=tuple(drifts),
                                   state_costs=tuple(costs))
        except ValueError as exc:
            raise ConfigError(f"potentials: {exc}") from exc
        for l, block in enumerate(species):
            path = f"species[{l}]."
            mus.append(_parse_density(_get(block, "mu", path), self.grid,
                                      weights[l], path + "mu"))
            nus.append(_parse_density(_get(block, "nu", path), self.grid,
                                      weights[l], path + "nu"))
        self.mus, self.nus = mus, nus

    def _parse_lq(self, raw: dict):
        species = _get(raw, "species", "")
        if not isinstance(species, list) or not species:
            raise ConfigError("key 'species' must be a non-empty list")
        count = len(species)
        self.eps = _number(raw, "eps", "", strict_min=0.0)
        self.mesh = _integer(raw, "mesh", "", required=False, default=400, minimum=10)
        sigma = np.asarray(_get(raw, "sigma", ""), dtype=float)
        if sigma.ndim != 2:
            raise ConfigError("key 'sigma' must be a matrix (d x p)")
        dim = sigma.shape[0]
        abar_block = _get(raw, "Abar", "")
        if (not isinstance(abar_block, list) or len(abar_block) != count
                or any(not isinstance(row, list) or len(row) != count
                       for row in abar_block)):
            raise ConfigError(f"key 'Abar' must be a {count}x{count} table of matrices")
        mats = {"A": [], "Q": [], "mean0": [], "cov0": [], "mean1": [], "cov1": []}
        for l, block in enumerate(species):
            path = f"species[{l}]."
            for key in mats:
                mats[key].append(np.asarray(_get(block, key, path), dtype=float))
            for key in ("A", "Q", "cov0", "cov1"):
                if mats[key][-1].shape != (dim, dim):
                    raise ConfigError(f"key '{path}{key}' must be {dim}x{dim}")
            for key in ("mean0", "mean1"):
                if mats[key][-1].shape != (dim,):
                    raise ConfigError(f"key '{path}{key}' must have {dim} entries")
        try:
            self.lq = LqSpec(A=np.stack(mats["A"]),
                             Abar=np.asarray(abar_block, dtype=float),
                             sigma=sigma, Q=np.stack(mats["Q"]), eps=self.eps,
                             means0=np.stack(mats["mean0"]), covs0=np.stack(mats["cov0"]),
                             means1=np.stack(mats["mean1"]), covs1=np.stack(mats["cov1"]))
        except ValueError as exc:
            raise ConfigError(f"lq spec: {exc}") from exc


def _write_csv(path: Path, header: list, rows):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)


def _write_density(path: Path, grid: Grid, margs: list, weights: list):
    rows = []
    for species, (marg, weight) in enumerate(zip(margs, weights)):
        for t_index in range(marg.steps + 1):
            for node_index in range(grid.size):
                rows.append((t_index, species, node_index,
                             _fmt(grid.nodes[node_index]),
                             _fmt(weight * marg.node[t_index, node_index])))
    _write_csv(path, ["t_index", "species", "node_index", "x", "mass"], rows)


def _write_policy(path: Path, policies: list):
    rows = []
    for species, policy in enumerate(policies):
        for t_index in range(policy.steps):
            for k in range(policy.grid.size):
                rows.append((t_index, species, _fmt(policy.grid.nodes[k]),
                             _fmt(policy.values[t_index, k])))
    _write_csv(path, ["t_index", "species", "x", "xi"], rows)


def read_policy_csv(path, grid: Grid, steps: int) -> list:
    """Rebuild per-species policy fields from a policy.csv artifact."""
    per_species = {}
    with open(path, newline="") as handle:
        for row in csv.DictReader(handle):
            species = int(row["species"])
            per_species.setdefault(species, {})[
                (int(row["t_index"]), float(row["x"]))] = float(row["xi"])
    policies = []
    for species in sorted(per_species):
        entries = per_species[species]
        values = np.zeros((steps, grid.size))
        for i in range(steps):
            for k, x in enumerate(grid.nodes):
                key = (i, x)
                if key not in entries:
                    raise ConfigError(
                        f"policy file misses slice {i}, node {x} for species {species} "
                        "(grid or time_steps mismatch)")
                values[i, k] = entries[key]
        policies.append(PolicyField(grid=grid, values=values,
                                    support=np.ones((steps, grid.size), dtype=bool)))
    return policies


def _write_trajectories(path: Path, result, dim: int):
    rows = []
    if dim == 1:
        header = ["t", "species", "agent", "x0"]
        for k, t in enumerate(result.times):
            for agent, value in enumerate(result.states[k]):
                rows.append((_fmt(t), 0, agent, _fmt(value)))
    else:
        header = ["t", "species", "agent"] + [f"x{j}" for j in range(dim)]
        for k, t in enumerate(result.times):
            for species in range(result.states.shape[1]):
                for agent in range(result.states.shape[2]):
                    rows.append((_fmt(t), species, agent,
                                 *[_fmt(v) for v in result.states[k, species, agent]]))
    _write_csv(path, header, rows)


def _write_lq_csv(path: Path, sol):
    dim = sol.spec.dim
    header = (["t", "species"]
              + [f"pi_{i}{j}" for i in range(dim) for j in range(dim)]
              + [f"sigma_{i}{j}" for i in range(dim) for j in range(dim)]
              + [f"m_{i}" for i in range(dim)] + [f"n_{i}" for i in range(dim)])
    rows = []
    for species in range(sol.spec.count):
        for k, t in enumerate(sol.ts):
            rows.append((_fmt(t), species,
                         *[_fmt(v) for v in sol.Pi[species, k].ravel()],
                         *[_fmt(v) for v in sol.Sigma[species, k].ravel()],
                         *[_fmt(v) for v in sol.m[species, k]],
                         *[_fmt(v) for v in sol.n[species, k]]))
    _write_csv(path, header, rows)


def _report_dict(rep) -> dict:
    return {
        "converged": rep.converged,
        "stalled": rep.stalled,
        "iterations": rep.iterations,
        "objectives": [float(v) for v in rep.objectives],
        "residuals": [float(v) for v in rep.residuals],
        "step_sizes": [float(v) for v in rep.step_sizes],
        "marginal_changes": [float(v) for v in rep.marginal_changes],
    }


def _run_grid_single(cfg: ExperimentConfig, out: Path) -> int:
    t0 = time.perf_counter()
    rep = solve_density_control(cfg.dyn, cfg.mu, cfg.nu, cfg.solver)
    solve_seconds = time.perf_counter() - t0
    policy = recover_policy(cfg.dyn, rep.marg)
    _write_density(out / "density.csv", cfg.grid, [rep.marg], [1.0])
    _write_policy(out / "policy.csv", [policy])
    report = {"mode": cfg.mode, "species": [_report_dict(rep)],
              "wall_time_seconds": {"solve": solve_seconds}}
    if cfg.simulation is not None:
        sim_cfg = SimConfig(agents=cfg.simulation["agents"],
                            steps=cfg.simulation["steps"] or 10 * cfg.dyn.steps,
                            seed=cfg.simulation["seed"], eps=cfg.dyn.eps)
        t0 = time.perf_counter()
        result = simulate_grid(cfg.dyn, cfg.mu, policy, sim_cfg)
        report["wall_time_seconds"]["simulate"] = time.perf_counter() - t0
        _write_trajectories(out / "trajectories.csv", result, dim=1)
        report["simulation"] = [
            {"t": st.t, "mean": float(st.mean), "variance": float(st.variance)}
            for st in result.stats]
    exit_code = 0 if rep.converged else 2
    report["exit_code"] = exit_code
    with open(out / "report.json", "w") as handle:
        json.dump(report, handle, indent=2)
    return exit_code


def _run_grid_multi(cfg: ExperimentConfig, out: Path) -> int:
    t0 = time.perf_counter()
    reps = solve_multi(cfg.multi, cfg.mus, cfg.nus, cfg.solver)
    solve_seconds = time.perf_counter() - t0
    weights = list(cfg.multi.weights)
    _write_density(out / "density.csv", cfg.grid, [r.marg for r in reps], weights)
    policies = [_recover_policy_multi(cfg.multi, reps, l) for l in range(cfg.multi.count)]
    _write_policy(out / "policy.csv", policies)
    converged = all(r.converged for r in reps)
    report = {"mode": cfg.mode, "species": [_report_dict(r) for r in reps],
              "wall_time_seconds": {"solve": solve_seconds},
              "exit_code": 0 if converged else 2}
    with open(out / "report.json", "w") as handle:
        json.dump(report, handle, indent=2)
    return 0 if converged else 2


def _recover_policy_multi(multi: MultiSpec, reps: list, ell: int) -> PolicyField:
    """Species policy: invert transition means against the full interaction drift."""
    from .grid import conv_gradw

    marg = reps[ell].marg
    grid = marg.grid
    drift = (np.zeros(grid.size) if multi.drifts is None or multi.drifts[ell] is None
             else multi.drifts[ell].values(grid))
    values = np.zeros((multi.steps, grid.size))
    support = np.zeros((multi.steps, grid.size), dtype=bool)
    for i in range(multi.steps):
        p = marg.node[i]
        mask = p >= 1e-8 * p.sum()
        cond_mean = np.zeros(grid.size)
        cond_mean[mask] = (marg.pair[i][mask] @ grid.nodes) / p[mask]
        conv = np.zeros(grid.size)
        for m in range(multi.count):
            pot = multi.pots[ell][m]
            if not pot.is_zero:
                conv += multi.weights[m] * conv_gradw(
                    pot, grid, ProbVector(grid, reps[m].marg.node[i]))
        xi = multi.steps * (cond_mean - grid.nodes) + conv - drift
        sup_idx = np.flatnonzero(mask)
        nearest = sup_idx[np.abs(grid.nodes[sup_idx][None, :]
                                 - grid.nodes[:, None]).argmin(axis=1)]
        values[i] = np.where(mask, xi, xi[nearest])
        support[i] = mask
    return PolicyField(grid=grid, values=values, support=support)


def _run_lq(cfg: ExperimentConfig, out: Path) -> int:
    t0 = time.perf_counter()
    sol = solve_lq(cfg.lq, mesh=cfg.mesh)
    solve_seconds = time.perf_counter() - t0
    _write_lq_csv(out / "lq.csv", sol)
    report = {
        "mode": cfg.mode,
        "wall_time_seconds": {"solve": solve_seconds},
        "boundary_mismatch": [float(v) for v in sol.boundary_mismatch],
        "mean_boundary_error": float(sol.mean_boundary_error),
        "riccati_residual": [float(riccati_residual(sol, l)) for l in range(cfg.lq.count)],
        "lyapunov_residual": [float(lyapunov_residual(sol, l)) for l in range(cfg.lq.count)],
        "mean_residual": float(mean_residual(sol)),
        "identity_gap": [float(identity_gap(sol, l)) for l in range(cfg.lq.count)],
    }
    if cfg.simulation is not None:
        sim_cfg = SimConfig(agents=cfg.simulation["agents"],
                            steps=cfg.simulation["steps"] or 10 * cfg.mesh,
                            seed=cfg.simulation["seed"], eps=cfg.lq.eps)
        t0 = time.perf_counter()
        result = simulate_lq(sol, sim_cfg)
        report["wall_time_seconds"]["simulate"] = time.perf_counter() - t0
        _write_trajectories(out / "trajectories.csv", result, dim=cfg.lq.dim)
        report["simulation"] = [
            {"t": st.t, "mean": st.mean.tolist(), "variance": st.variance.tolist()}
            for st in result.stats]
    report["exit_code"] = 0
    with open(out / "report.json", "w") as handle:
        json.dump(report, handle, indent=2)
    return 0


def run(config_path, override: ExperimentConfig | None = None) -> int:
    """Execute one experiment; returns the process exit code."""
    try:
        cfg = override if override is not None else ExperimentConfig.from_file(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    try:
        if cfg.mode == "grid_single":
            return _run_grid_single(cfg, out)
        if cfg.mode == "grid_multi":
            return _run_grid_multi(cfg, out)
        return _run_lq(cfg, out)
    except (NumericalFailure, InfeasibleMarginal, ConvergenceError) as exc:
        print(f"solver failure in {cfg.mode} run: {exc}", file=sys.stderr)
        return 2


def _set_by_path(raw: dict, dotted: str, value):
    parts = dotted.split(".")
    node = raw
    for part in parts[:-1]:
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"sweep parameter '{dotted}' not found in config")
        node = node[part]
    leaf = parts[-1]
    if not isinstance(node, dict) or leaf not in node:
        raise ConfigError(f"sweep parameter '{dotted}' not found in config")
    if isinstance(node[leaf], bool) or not isinstance(node[leaf], (int, float)):
        raise ConfigError(f"sweep parameter '{dotted}' must address a scalar")
    node[leaf] = value


def _mid_time_variances(cfg: ExperimentConfig, out: Path) -> list:
    """(species, variance) pairs at t = 0.5 from the written density file."""
    per_species = {}
    with open(out / "density.csv", newline="") as handle:
        for row in csv.DictReader(handle):
            per_species.setdefault(int(row["species"]), {}).setdefault(
                int(row["t_index"]), []).append((float(row["x"]), float(row["mass"])))
    results = []
    for species in sorted(per_species):
        slices = per_species[species]
        mid_index = max(slices) // 2
        xs, ms = zip(*slices[mid_index])
        xs, ms = np.array(xs), np.array(ms)
        mean = (xs * ms).sum() / ms.sum()
        results.append((species, float(((xs - mean) ** 2 * ms).sum() / ms.sum())))
    return results


def sweep(config_path, param: str, values: list) -> int:
    """Run the experiment once per parameter value; write summary.csv."""
    try:
        base = ExperimentConfig.from_file(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    if base.mode == "lq":
        print("config error: sweep supports grid modes only", file=sys.stderr)
        return 1
    base_dir = base.output_dir
    summary_rows = []
    worst = 0
    for value in values:
        raw = copy.deepcopy(base.raw)
        try:
            _set_by_path(raw, param, value)
            raw["output_dir"] = str(base_dir / f"{param.replace('.', '_')}_{value:g}")
            cfg = ExperimentConfig.from_dict(raw)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 1
        code = run(None, override=cfg)
        worst = max(worst, code)
        if code == 1:
            return 1
        for species, variance in _mid_time_variances(cfg, cfg.output_dir):
            summary_rows.append((_fmt(value), species, _fmt(variance), code))
    base_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(base_dir / "summary.csv",
               ["value", "species", "mid_time_variance", "exit_code"], summary_rows)
    return worst


def simulate_cmd(config_path, policy_path) -> int:
    """Simulate a grid_single config under a previously exported policy."""
    try:
        cfg = ExperimentConfig.from_file(config_path)
        if cfg.mode != "grid_single":
            raise ConfigError("simulate requires a grid_single config "
                              "(lq runs simulate through 'solve' with a simulation block)")
        if cfg.simulation is None:
            raise ConfigError("missing key 'simulation'")
        policies = read_policy_csv(policy_path, cfg.grid, cfg.dyn.steps)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    sim_cfg = SimConfig(agents=cfg.simulation["agents"],
                        steps=cfg.simulation["steps"] or 10 * cfg.dyn.steps,
                        seed=cfg.simulation["seed"], eps=cfg.dyn.eps)
    result = simulate_grid(cfg.dyn, cfg.mu, policies[0], sim_cfg)
    _write_trajectories(out / "trajectories.csv", result, dim=1)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="swarmsteer",
        description="Density steering for interacting agent populations")
    sub = parser.add_subparsers(dest="command", required=True)
    p_solve = sub.add_parser("solve", help="run one experiment from a JSON config")
    p_solve.add_argument("config")
    p_sweep = sub.add_parser("sweep", help="run the experiment over parameter values")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--param", required=True, help="dotted config key, e.g. potential.beta")
    p_sweep.add_argument("--values", required=True, help="comma-separated numbers")
    p_sim = sub.add_parser("simulate", help="particle run under an exported policy")
    p_sim.add_argument("config")
    p_sim.add_argument("--policy", required=True)
    args = parser.parse_args(argv)

    if args.command == "solve":
        return run(args.config)
    if args.command == "sweep":
        try:
            values = [float(v) for v in args.values.split(",") if v != ""]
        except ValueError:
            print("config error: --values must be comma-separated numbers", file=sys.stderr)
            return 1
        if not values:
            print("config error: --values is empty", file=sys.stderr)
            return 1
        return sweep(args.config, args.param, values)
    return simulate_cmd(args.config, args.policy)


if __name__ == "__main__":
    sys.exit(main())
