import numpy as np
import pytest

from swarmsteer import LqSpec, lq_policy, solve_covariance, solve_lq, solve_means
from swarmsteer.lq import (companion_residual, identity_gap, lyapunov_residual,
                           mean_residual, propagate_covariance, riccati_residual)

I2 = np.eye(2)


def scalar_spec(m0=0.0, s0=1.0, m1=0.0, s1=1.0, eps=1.0, a=0.0, abar=0.0, q=0.0):
    return LqSpec(A=[[[a]]], Abar=[[[[abar]]]], sigma=[[1.0]], Q=[[[q]]], eps=eps,
                  means0=[[m0]], covs0=[[[s0]]], means1=[[m1]], covs1=[[[s1]]])


def single_species_spec():
    return LqSpec(A=[[[0, 1], [0, 0]]], Abar=[[[[0, 0], [0, 0.5]]]],
                  sigma=[[0], [1]], Q=[I2], eps=1.0,
                  means0=[[1, 1]], covs0=[0.25 * I2],
                  means1=[[1.5, 0.8]], covs1=[np.diag([0.5, 0.1])])


def two_species_spec(cross=-0.5):
    abar_self = np.array([[0, 0], [0, 0.5]])
    abar_cross = np.array([[cross, 0], [0, 0]])
    return LqSpec(A=[[[0, 1], [0, 0]], [[0, 1], [0, 0]]],
                  Abar=[[abar_self, abar_cross], [abar_cross, abar_self]],
                  sigma=[[0], [1]], Q=[I2, I2], eps=1.0,
                  means0=[[1, 1], [-2, -2]], covs0=[0.25 * I2, 0.25 * I2],
                  means1=[[1.5, 0.8], [-1, -0.8]],
                  covs1=[np.diag([0.5, 0.1]), np.diag([0.25, 0.1])])


class TestValidation:
    def test_asymmetric_coupling_matrix(self):
        with pytest.raises(ValueError, match="not symmetric"):
            LqSpec(A=[I2], Abar=[[[[0, 1], [0, 0]]]], sigma=[[0], [1]], Q=[I2],
                   eps=1.0, means0=[[0, 0]], covs0=[I2], means1=[[0, 0]], covs1=[I2])

    def test_species_pair_mismatch(self):
        abar = np.zeros((2, 2, 2, 2))
        abar[0, 1] = np.diag([1.0, 0.0])
        abar[1, 0] = np.diag([2.0, 0.0])
        with pytest.raises(ValueError, match="differs"):
            LqSpec(A=[I2, I2], Abar=abar, sigma=[[0], [1]], Q=[I2, I2], eps=1.0,
                   means0=[[0, 0], [0, 0]], covs0=[I2, I2],
                   means1=[[0, 0], [0, 0]], covs1=[I2, I2])

    def test_non_spd_endpoint(self):
        with pytest.raises(ValueError, match="positive definite"):
            scalar_spec(s1=-0.5)

    def test_uncontrollable_pair(self):
        with pytest.raises(ValueError, match="uncontrollable"):
            LqSpec(A=[I2], Abar=[[np.zeros((2, 2))]], sigma=[[0], [0]], Q=[I2],
                   eps=1.0, means0=[[0, 0]], covs0=[I2], means1=[[0, 0]], covs1=[I2])


class TestScalarBridges:
    def test_equal_endpoints_match_closed_form(self):
        s, eps = 1.3, 0.7
        sol = solve_lq(scalar_spec(s0=s, s1=s, eps=eps), mesh=200)
        t = sol.ts
        expected = (1 - 2 * t + 2 * t * t) * s + t * (1 - t) * np.sqrt(4 * s * s + eps * eps)
        np.testing.assert_allclose(sol.Sigma[0, :, 0, 0], expected, atol=1e-8)
        # time reversal swaps the two curvature flows
        np.testing.assert_allclose(sol.Pi[0], sol.H[0][::-1], atol=1e-9)

    def test_distinct_endpoints_match_closed_form(self):
        s0, s1, eps = 0.6, 1.8, 0.9
        sol = solve_lq(scalar_spec(s0=s0, s1=s1, eps=eps), mesh=200)
        t = sol.ts
        expected = ((1 - t) ** 2 * s0 + t ** 2 * s1
                    + t * (1 - t) * np.sqrt(4 * s0 * s1 + eps * eps))
        np.testing.assert_allclose(sol.Sigma[0, :, 0, 0], expected, atol=1e-8)

    def test_small_noise_approaches_deterministic_interpolation(self):
        s0, s1 = 0.8, 1.5
        sol = solve_lq(scalar_spec(s0=s0, s1=s1, eps=1e-3), mesh=200)
        t = sol.ts
        deterministic = ((1 - t) * np.sqrt(s0) + t * np.sqrt(s1)) ** 2
        ratio = sol.Sigma[0, :, 0, 0] / deterministic
        assert np.abs(ratio - 1).max() < 0.02

    def test_straight_line_mean_transport(self):
        sol = solve_lq(scalar_spec(m0=-0.4, m1=0.7, s0=0.5, s1=0.5), mesh=200)
        expected = -0.4 + 1.1 * sol.ts
        np.testing.assert_allclose(sol.m[0, :, 0], expected, atol=1e-6)

    def test_zero_means_stay_zero(self):
        sol = solve_lq(scalar_spec(s0=0.5, s1=1.5, q=0.4, abar=0.3), mesh=200)
        np.testing.assert_allclose(sol.m[0], 0.0, atol=1e-12)
        np.testing.assert_allclose(sol.n[0], 0.0, atol=1e-12)


class TestExperimentInstances:
    def test_single_species_residuals(self):
        sol = solve_lq(single_species_spec(), mesh=400)
        assert sol.boundary_mismatch.max() < 1e-8
        assert sol.mean_boundary_error < 1e-8
        assert riccati_residual(sol, 0) < 1e-6
        assert companion_residual(sol, 0) < 1e-6
        assert lyapunov_residual(sol, 0) < 1e-6
        assert mean_residual(sol) < 1e-6
        assert identity_gap(sol, 0) < 1e-6
        np.testing.assert_allclose(sol.Sigma[0, 0], 0.25 * I2, atol=1e-10)
        np.testing.assert_allclose(sol.Sigma[0, -1], np.diag([0.5, 0.1]), atol=1e-8)

    def test_two_species_coupling_changes_mean_path(self):
        sol_single = solve_lq(single_species_spec(), mesh=200)
        sol_two = solve_lq(two_species_spec(), mesh=200)
        assert sol_two.boundary_mismatch.max() < 1e-8
        assert sol_two.mean_boundary_error < 1e-8
        gap = np.abs(sol_two.m[0] - sol_single.m[0]).max()
        assert gap > 1e-3
        # curvature stage is species-local, so it is untouched by the coupling
        # only through the closed drift; with the cross term the drift differs
        assert np.abs(sol_two.Pi[0, 0] - sol_single.Pi[0, 0]).max() > 1e-3

    def test_zero_cross_coupling_decouples(self):
        sol_two = solve_lq(two_species_spec(cross=0.0), mesh=200)
        first = LqSpec(A=[[[0, 1], [0, 0]]], Abar=[[[[0, 0], [0, 0.5]]]],
                       sigma=[[0], [1]], Q=[I2], eps=1.0,
                       means0=[[1, 1]], covs0=[0.25 * I2],
                       means1=[[1.5, 0.8]], covs1=[np.diag([0.5, 0.1])])
        second = LqSpec(A=[[[0, 1], [0, 0]]], Abar=[[[[0, 0], [0, 0.5]]]],
                        sigma=[[0], [1]], Q=[I2], eps=1.0,
                        means0=[[-2, -2]], covs0=[0.25 * I2],
                        means1=[[-1, -0.8]], covs1=[np.diag([0.25, 0.1])])
        sols = [solve_lq(first, mesh=200), solve_lq(second, mesh=200)]
        for l in range(2):
            assert np.abs(sol_two.Pi[l] - sols[l].Pi[0]).max() < 1e-8
            assert np.abs(sol_two.Sigma[l] - sols[l].Sigma[0]).max() < 1e-8
            assert np.abs(sol_two.m[l] - sols[l].m[0]).max() < 1e-8
            assert np.abs(sol_two.n[l] - sols[l].n[0]).max() < 1e-8

    def test_identity_against_propagated_covariance(self):
        sol = solve_lq(single_species_spec(), mesh=200)
        propagated = propagate_covariance(sol, 0)
        assert np.abs(propagated - sol.Sigma[0]).max() < 1e-8
        assert np.abs(propagated[-1] - np.diag([0.5, 0.1])).max() < 1e-8


class TestStagedApi:
    def test_covariance_stage_alone(self):
        spec = single_species_spec()
        path = solve_covariance(spec, 0, mesh=100)
        assert path.mismatch < 1e-10
        assert path.Pi.shape == (401, 2, 2)
        total = path.Pi[0] + path.H[0]
        np.testing.assert_allclose(total, spec.eps * np.linalg.inv(spec.covs0[0]),
                                   atol=1e-10)

    def test_mean_stage_needs_all_species(self):
        spec = two_species_spec()
        paths = [solve_covariance(spec, l, mesh=100) for l in range(2)]
        n, m, _ = solve_means(spec, paths, mesh=100)
        assert n.shape == (2, 101, 2)
        np.testing.assert_allclose(m[:, 0], spec.means0, atol=1e-12)
        np.testing.assert_allclose(m[:, -1], spec.means1, atol=1e-8)


class TestPolicy:
    def test_zero_bias_at_origin(self):
        sol = solve_lq(scalar_spec(s0=0.5, s1=1.5), mesh=100)
        np.testing.assert_allclose(lq_policy(sol, 0, 0.3, np.zeros(1)),
                                   [sol.n[0][30, 0]], atol=1e-12)
        assert lq_policy(sol, 0, 0.5, np.zeros(1)) == pytest.approx(0.0, abs=1e-12)

    def test_scalar_affine_formula(self):
        sol = solve_lq(scalar_spec(m0=-0.3, m1=0.3, s0=0.4, s1=0.4), mesh=100)
        k = 40
        t = sol.ts[k]
        x = np.array([0.7])
        expected = -sol.Pi[0, k, 0, 0] * 0.7 + sol.n[0, k, 0]
        assert lq_policy(sol, 0, t, x)[0] == pytest.approx(expected, abs=1e-12)

    def test_batched_states(self):
        sol = solve_lq(single_species_spec(), mesh=100)
        xs = np.array([[1.0, 1.0], [0.5, -0.2], [0.0, 0.0]])
        out = lq_policy(sol, 0, 0.25, xs)
        assert out.shape == (3, 1)
        single = lq_policy(sol, 0, 0.25, xs[1])
        np.testing.assert_allclose(out[1], single, atol=1e-14)

    def test_interpolates_between_mesh_points(self):
        sol = solve_lq(scalar_spec(s0=0.5, s1=1.5), mesh=100)
        t = (sol.ts[10] + sol.ts[11]) / 2
        x = np.array([0.4])
        expected = 0.5 * (lq_policy(sol, 0, sol.ts[10], x)
                          + lq_policy(sol, 0, sol.ts[11], x))
        np.testing.assert_allclose(lq_policy(sol, 0, t, x), expected, atol=1e-12)

    def test_rejects_time_outside_horizon(self):
        sol = solve_lq(scalar_spec(), mesh=50)
        with pytest.raises(ValueError):
            lq_policy(sol, 0, -0.01, np.zeros(1))
        with pytest.raises(ValueError):
            lq_policy(sol, 0, 1.01, np.zeros(1))
