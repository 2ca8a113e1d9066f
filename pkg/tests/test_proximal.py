import numpy as np
import pytest

from swarmsteer import (ChainModel, DynamicsSpec, InteractionPotential, ProbVector,
                        ProximalConfig, SbpProblem, assemble_effective_problem,
                        build_cost, discretize_gaussian, expected_cost,
                        forward_backward, kl_divergence, make_grid, neg_entropy,
                        solve_density_control, solve_sbp)
from oracles import (dense_from_logfactors, dense_kl, dense_node_marginal,
                     mirror_descent_entropic)


def gaussian_pair(grid, mean=0.35, var=0.1):
    return (discretize_gaussian(grid, -mean, var), discretize_gaussian(grid, mean, var))


class TestSolveDensityControl:
    def test_free_case_reaches_direct_solution(self):
        grid = make_grid(-1.5, 1.5, 41)
        mu, nu = gaussian_pair(grid)
        spec = DynamicsSpec(pot=InteractionPotential.none(), eps=0.5, steps=6)
        rep = solve_density_control(spec, mu, nu,
                                    ProximalConfig(eta=50.0, outer_tol=1e-12,
                                                   inner_tol=1e-13, outer_iters=300))
        uniform = forward_backward(ChainModel.uniform(grid, 6))
        factors = build_cost(spec, uniform)
        direct = solve_sbp(SbpProblem(factors.node, factors.edge, 0.5,
                                      mu.normalized(), nu.normalized()), tol=1e-13)
        gap_tv = max(0.5 * np.abs(rep.marg.node[i] - direct.marg.node[i]).sum()
                     for i in range(7))
        assert gap_tv < 1e-9
        obj_prox = expected_cost(spec, rep.marg) + 0.5 * neg_entropy(rep.marg)
        obj_direct = expected_cost(spec, direct.marg) + 0.5 * neg_entropy(direct.marg)
        assert abs(obj_prox - obj_direct) < 1e-8

    def test_interacting_descent_and_stationarity(self):
        grid = make_grid(-1.5, 1.5, 31)
        mu, nu = gaussian_pair(grid, var=0.08)
        spec = DynamicsSpec(pot=InteractionPotential.quadratic(0.3), eps=0.5, steps=6)
        rep = solve_density_control(spec, mu, nu, ProximalConfig(outer_iters=80))
        objectives = np.array(rep.objectives)
        assert np.all(np.diff(objectives) <= 1e-9)
        assert rep.converged
        assert rep.marginal_changes[-1] < 1e-6
        assert all(r <= 1e-9 for r in rep.residuals[1:])

    def test_mirror_instance_gives_mirrored_solution(self):
        grid = make_grid(-1.2, 1.2, 33)
        mu = discretize_gaussian(grid, -0.4, 0.06)
        nu = discretize_gaussian(grid, 0.1, 0.1)
        spec = DynamicsSpec(pot=InteractionPotential.power_law(0.3, 0.5, grid.h),
                            eps=0.3, steps=5)
        rep = solve_density_control(spec, mu, nu, ProximalConfig())
        flipped = solve_density_control(
            spec, ProbVector(grid, mu.mass[::-1]), ProbVector(grid, nu.mass[::-1]),
            ProximalConfig())
        for i in range(6):
            np.testing.assert_allclose(rep.marg.node[i], flipped.marg.node[i][::-1],
                                       atol=1e-8)

    def test_fixed_point_stability_free_case(self):
        grid = make_grid(-1, 1, 25)
        mu, nu = gaussian_pair(grid, mean=0.25, var=0.06)
        spec = DynamicsSpec(pot=InteractionPotential.none(), eps=0.4, steps=5)
        cfg = ProximalConfig(eta=20.0, outer_tol=1e-13, inner_tol=1e-13, outer_iters=400)
        rep = solve_density_control(spec, mu, nu, cfg)
        problem = assemble_effective_problem(spec, rep.model, rep.marg,
                                             mu.normalized(), nu.normalized(), 20.0)
        again = solve_sbp(problem, tol=1e-13)
        change = max(0.5 * np.abs(again.marg.node[i] - rep.marg.node[i]).sum()
                     for i in range(6))
        assert change < 1e-8

    def test_stall_returns_best_iterate(self, monkeypatch):
        # force every candidate to look like an objective increase
        calls = [0]

        def rising_objective(spec, marg):
            calls[0] += 1
            return float(calls[0])

        monkeypatch.setattr("swarmsteer.proximal.expected_cost", rising_objective)
        grid = make_grid(-1, 1, 11)
        mu = discretize_gaussian(grid, -0.3, 0.05)
        nu = discretize_gaussian(grid, 0.3, 0.05)
        spec = DynamicsSpec(pot=InteractionPotential.none(), eps=0.3, steps=3)
        rep = solve_density_control(spec, mu, nu,
                                    ProximalConfig(max_shrinks=4, outer_iters=10))
        assert rep.stalled and not rep.converged
        assert rep.iterations == 0          # no candidate was ever accepted
        assert len(rep.objectives) == 1     # only the starting iterate is recorded
        assert rep.marg is not None
        assert calls[0] == 1 + 5            # initial evaluation plus each shrink trial

    def test_repulsive_large_step_recovers_via_floor_acceptance(self):
        # a huge frozen step overshoots at first, then the iterate parks at
        # the objective floor and the stationarity stop fires
        grid = make_grid(-1, 1, 21)
        mu = discretize_gaussian(grid, -0.3, 0.05)
        nu = discretize_gaussian(grid, 0.3, 0.05)
        spec = DynamicsSpec(pot=InteractionPotential.quadratic(-3.0), eps=0.1, steps=6)
        rep = solve_density_control(spec, mu, nu,
                                    ProximalConfig(eta=1e6, max_shrinks=25,
                                                   outer_iters=60))
        assert rep.converged and not rep.stalled
        assert np.all(np.diff(np.array(rep.objectives)) <= 1e-9)

    def test_rejects_mismatched_endpoints(self):
        grid = make_grid(-1, 1, 11)
        spec = DynamicsSpec(pot=InteractionPotential.none(), eps=0.5, steps=3)
        mu = discretize_gaussian(grid, 0, 0.1)
        with pytest.raises(ValueError, match="grids"):
            solve_density_control(spec, mu, discretize_gaussian(make_grid(-2, 2, 11), 0, 0.1))
        with pytest.raises(ValueError, match="masses"):
            solve_density_control(spec, mu, discretize_gaussian(grid, 0, 0.1, total=0.7))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ProximalConfig(eta=0.0)
        with pytest.raises(ValueError):
            ProximalConfig(shrink=1.0)


class TestAssembleEffectiveProblem:
    def setup_method(self):
        self.grid = make_grid(-1, 1, 4)
        self.spec = DynamicsSpec(pot=InteractionPotential.quadratic(0.6), eps=0.5,
                                 steps=3)
        rng = np.random.default_rng(40)
        model = ChainModel(self.grid, rng.normal(size=(4, 4)),
                           rng.normal(size=(3, 4, 4)))
        self.marg = forward_backward(model)
        self.model = model
        self.mu = ProbVector(self.grid, rng.random(4) + 0.1).normalized()
        self.nu = ProbVector(self.grid, rng.random(4) + 0.1).normalized()

    def test_huge_step_recovers_plain_linearization(self):
        from swarmsteer import build_gradient_correction
        problem = assemble_effective_problem(self.spec, self.model, self.marg,
                                             self.mu, self.nu, eta=1e12)
        factors = build_cost(self.spec, self.marg)
        expected_node = factors.node.copy()
        expected_node[:3] += build_gradient_correction(self.spec, self.marg)
        assert problem.eps_eff == pytest.approx(0.5, abs=1e-12)
        np.testing.assert_allclose(problem.cost_node, expected_node, atol=1e-9)
        np.testing.assert_allclose(problem.cost_edge, factors.edge, atol=1e-9)

    def test_uniform_iterate_contributes_only_a_constant(self):
        uniform = ChainModel.uniform(self.grid, 3)
        umarg = forward_backward(uniform)
        with_prox = assemble_effective_problem(self.spec, uniform, umarg,
                                               self.mu, self.nu, eta=2.0)
        sol = solve_sbp(with_prox, tol=1e-12)
        # dropping the iterate term entirely but keeping the regularization
        factors = build_cost(self.spec, umarg)
        from swarmsteer import build_gradient_correction
        node = factors.node.copy()
        node[:3] += build_gradient_correction(self.spec, umarg)
        plain = SbpProblem(node, factors.edge, self.spec.eps + 0.5, self.mu, self.nu)
        sol2 = solve_sbp(plain, tol=1e-12)
        np.testing.assert_allclose(sol.marg.node, sol2.marg.node, atol=1e-9)

    def test_dense_minimizer_agrees(self):
        problem = assemble_effective_problem(self.spec, self.model, self.marg,
                                             self.mu, self.nu, eta=1.5)
        sol = solve_sbp(problem, tol=1e-13)
        cost = np.zeros((4,) * 4)
        for i in range(4):
            shape = [1] * 4
            shape[i] = 4
            cost = cost + problem.cost_node[i].reshape(shape)
        for i in range(3):
            shape = [1] * 4
            shape[i], shape[i + 1] = 4, 4
            cost = cost + problem.cost_edge[i].reshape(shape)
        oracle = mirror_descent_entropic(cost, problem.eps_eff, self.mu.mass,
                                         self.nu.mass, iters=800)
        tensor = dense_from_logfactors(sol.model.node_logpot, sol.model.edge_logpot)
        np.testing.assert_allclose(tensor, oracle, atol=1e-6)

    def test_requires_fresh_normalizer(self):
        stale = ChainModel(self.grid, self.model.node_logpot, self.model.edge_logpot)
        with pytest.raises(ValueError, match="stale"):
            assemble_effective_problem(self.spec, stale, self.marg,
                                       self.mu, self.nu, eta=1.0)


class TestKlDivergence:
    def make(self, seed, scale=1.0):
        rng = np.random.default_rng(seed)
        grid = make_grid(-1, 1, 4)
        model = ChainModel(grid, scale * rng.normal(size=(4, 4)),
                           scale * rng.normal(size=(3, 4, 4)))
        marg = forward_backward(model)
        return model, marg

    def test_identical_models(self):
        model, marg = self.make(50)
        assert kl_divergence(marg, model, model) == pytest.approx(0.0, abs=1e-10)

    def test_matches_dense_oracle(self):
        model_a, marg_a = self.make(51)
        model_b, _ = self.make(52)
        dense_a = dense_from_logfactors(model_a.node_logpot, model_a.edge_logpot)
        dense_b = dense_from_logfactors(model_b.node_logpot, model_b.edge_logpot)
        assert kl_divergence(marg_a, model_a, model_b) == pytest.approx(
            dense_kl(dense_a, dense_b), abs=1e-9)

    def test_uniform_against_point_mass(self):
        grid = make_grid(-1, 1, 4)
        uniform = ChainModel.uniform(grid, 3)
        umarg = forward_backward(uniform)
        phi = np.full((4, 4), -np.inf)
        phi[:, 1] = 0.0
        point = ChainModel(grid, phi, np.zeros((3, 4, 4)))
        pmarg = forward_backward(point)
        assert kl_divergence(pmarg, point, uniform) == pytest.approx(4 * np.log(4),
                                                                     abs=1e-10)

    def test_absolute_continuity_violation(self):
        grid = make_grid(-1, 1, 4)
        uniform = ChainModel.uniform(grid, 3)
        umarg = forward_backward(uniform)
        phi = np.full((4, 4), -np.inf)
        phi[:, 1] = 0.0
        point = ChainModel(grid, phi, np.zeros((3, 4, 4)))
        forward_backward(point)
        assert kl_divergence(umarg, uniform, point) == float("inf")
