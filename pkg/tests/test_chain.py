import numpy as np
import pytest

from swarmsteer import (ChainModel, NumericalFailure, forward_backward,
                        log_tensor_factors, make_grid, neg_entropy)
from oracles import (dense_from_logfactors, dense_node_marginal,
                     dense_pair_marginal, dense_neg_entropy)


def random_model(rng, size=4, steps=3, scale=1.0):
    grid = make_grid(-1, 1, size)
    phi = scale * rng.normal(size=(steps + 1, size))
    psi = scale * rng.normal(size=(steps, size, size))
    return ChainModel(grid, phi, psi)


class TestForwardBackward:
    def test_uniform_model(self):
        grid = make_grid(-1, 1, 3)
        marg = forward_backward(ChainModel.uniform(grid, steps=2))
        np.testing.assert_allclose(marg.node, 1 / 3, atol=1e-15)
        np.testing.assert_allclose(marg.pair, 1 / 9, atol=1e-15)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(10)
        model = random_model(rng)
        marg = forward_backward(model)
        dense = dense_from_logfactors(model.node_logpot, model.edge_logpot)
        for i in range(4):
            np.testing.assert_allclose(marg.node[i], dense_node_marginal(dense, i),
                                       atol=1e-10)
        for i in range(3):
            np.testing.assert_allclose(marg.pair[i], dense_pair_marginal(dense, i),
                                       atol=1e-10)

    def test_identity_coupling(self):
        grid = make_grid(-1, 1, 4)
        rng = np.random.default_rng(11)
        phi = np.zeros((4, 4))
        phi[0] = rng.normal(size=4)
        psi = np.full((3, 4, 4), -np.inf)
        for i in range(3):
            np.fill_diagonal(psi[i], 0.0)
        marg = forward_backward(ChainModel(grid, phi, psi))
        for i in range(1, 4):
            np.testing.assert_allclose(marg.node[i], marg.node[0], atol=1e-12)
        for i in range(3):
            np.testing.assert_allclose(marg.pair[i], np.diag(marg.node[0]), atol=1e-12)

    def test_marginal_consistency_many_seeds(self):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            marg = forward_backward(random_model(rng, size=3, steps=2, scale=2.0))
            for i in range(2):
                np.testing.assert_allclose(marg.pair[i].sum(axis=1), marg.node[i],
                                           atol=1e-10)
                np.testing.assert_allclose(marg.pair[i].sum(axis=0), marg.node[i + 1],
                                           atol=1e-10)

    def test_constant_shift_invariance(self):
        rng = np.random.default_rng(12)
        model = random_model(rng)
        marg = forward_backward(model)
        shifted = ChainModel(model.grid, model.node_logpot.copy(), model.edge_logpot)
        shifted.node_logpot[2] += 7.3
        marg2 = forward_backward(shifted)
        np.testing.assert_allclose(marg.node, marg2.node, atol=1e-10)
        np.testing.assert_allclose(marg.pair, marg2.pair, atol=1e-10)

    def test_refreshes_normalizer(self):
        rng = np.random.default_rng(13)
        model = random_model(rng)
        assert model.log_z is None
        forward_backward(model)
        dense_raw = np.exp(model.node_logpot[0][:, None, None, None]
                           + model.edge_logpot[0][:, :, None, None]
                           + model.node_logpot[1][None, :, None, None]
                           + model.edge_logpot[1][None, :, :, None]
                           + model.node_logpot[2][None, None, :, None]
                           + model.edge_logpot[2][None, None, :, :]
                           + model.node_logpot[3][None, None, None, :])
        assert model.log_z == pytest.approx(np.log(dense_raw.sum()), abs=1e-10)

    def test_reports_nonfinite_slice(self):
        grid = make_grid(-1, 1, 3)
        phi = np.zeros((3, 3))
        psi = np.zeros((2, 3, 3))
        phi[1, 0] = np.inf
        with pytest.raises(NumericalFailure, match="slice 1"):
            forward_backward(ChainModel(grid, phi, psi))

    def test_zero_mass_model_fails(self):
        grid = make_grid(-1, 1, 3)
        phi = np.full((3, 3), -np.inf)
        psi = np.zeros((2, 3, 3))
        with pytest.raises(NumericalFailure):
            forward_backward(ChainModel(grid, phi, psi))


class TestNegEntropy:
    def test_uniform(self):
        grid = make_grid(-1, 1, 3)
        marg = forward_backward(ChainModel.uniform(grid, steps=2))
        assert neg_entropy(marg) == pytest.approx(-np.log(27), abs=1e-12)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(14)
        model = random_model(rng)
        marg = forward_backward(model)
        dense = dense_from_logfactors(model.node_logpot, model.edge_logpot)
        assert neg_entropy(marg) == pytest.approx(dense_neg_entropy(dense), abs=1e-10)

    def test_point_mass_chain(self):
        grid = make_grid(-1, 1, 4)
        phi = np.full((4, 4), -np.inf)
        phi[:, 2] = 0.0
        psi = np.zeros((3, 4, 4))
        marg = forward_backward(ChainModel(grid, phi, psi))
        assert neg_entropy(marg) == pytest.approx(0.0, abs=1e-12)

    def test_bounds(self):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            model = random_model(rng, size=5, steps=4, scale=3.0)
            value = neg_entropy(forward_backward(model))
            assert -(5) * np.log(5) - 1e-9 <= value <= 1e-12


class TestLogTensorFactors:
    def test_requires_fresh_normalizer(self):
        rng = np.random.default_rng(15)
        model = random_model(rng)
        with pytest.raises(ValueError, match="stale"):
            log_tensor_factors(model)

    def test_uniform_factors_sum(self):
        grid = make_grid(-1, 1, 4)
        model = ChainModel.uniform(grid, steps=2)
        forward_backward(model)
        phi, psi = log_tensor_factors(model)
        total = phi[0][:, None, None] + psi[0][:, :, None] + phi[1][None, :, None] \
            + psi[1][None, :, :] + phi[2][None, None, :]
        np.testing.assert_allclose(total, -3 * np.log(4), atol=1e-12)

    def test_reconstructs_log_tensor(self):
        rng = np.random.default_rng(16)
        model = random_model(rng)
        forward_backward(model)
        phi, psi = log_tensor_factors(model)
        dense = dense_from_logfactors(model.node_logpot, model.edge_logpot)
        rebuilt = dense_from_logfactors(phi, psi)
        log_m = phi[0].copy()
        for i in range(3):
            log_m = log_m[..., :, None] + psi[i] + phi[i + 1][None, :]
        mask = dense > 1e-12
        np.testing.assert_allclose(log_m[mask], np.log(dense[mask]), atol=1e-9)
        np.testing.assert_allclose(rebuilt, dense, atol=1e-12)

    def test_exp_reconstruction_normalized(self):
        rng = np.random.default_rng(17)
        model = random_model(rng, scale=2.0)
        forward_backward(model)
        phi, psi = log_tensor_factors(model)
        log_m = phi[0].copy()
        for i in range(3):
            log_m = log_m[..., :, None] + psi[i] + phi[i + 1][None, :]
        assert np.exp(log_m).sum() == pytest.approx(1.0, abs=1e-8)

    def test_sentinel_replaces_minus_infinity(self):
        grid = make_grid(-1, 1, 3)
        phi = np.zeros((3, 3))
        phi[0, 1] = -np.inf
        model = ChainModel(grid, phi, np.zeros((2, 3, 3)))
        forward_backward(model)
        phi_f, psi_f = log_tensor_factors(model)
        assert np.all(np.isfinite(phi_f)) and np.all(np.isfinite(psi_f))
        assert phi_f[0, 1] == -1e9
