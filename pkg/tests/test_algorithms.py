"""Algorithm updates, gossip acceleration, and the parameter calculator."""

import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from decopt import (
    BudgetError,
    GossipAccel,
    NoiseModel,
    RunParams,
    TopologyError,
    acc_gossip,
    agent_streams,
    assign_weights,
    build_topology,
    dnsgd_pd_init,
    dnsgd_pd_step,
    dnsgd_un_init,
    dnsgd_un_step,
    dsgt_init,
    dsgt_step,
    local_grad,
    make_het_quadratic,
    normalize_rows,
    rho_of,
    spectral_profile,
    theorem_params,
)
from decopt.spectral import SpectralProfile

FIXTURES = Path(__file__).parent / "fixtures"


class TestNormalizeRows:
    def test_unit_rows_in_same_direction(self):
        v = np.array([[2.0, 0.0], [0.0, 5.0]])
        out = normalize_rows(v)
        np.testing.assert_allclose(out, [[1.0, 0.0], [0.0, 1.0]])

    def test_zero_row_stays_zero(self):
        out = normalize_rows(np.array([[0.0, 0.0], [3.0, 4.0]]))
        np.testing.assert_array_equal(out[0], [0.0, 0.0])
        np.testing.assert_allclose(out[1], [0.6, 0.8])

    @given(
        arrays(
            np.float64,
            (6, 4),
            elements=st.floats(min_value=-1e6, max_value=1e6, allow_nan=False),
        )
    )
    @settings(max_examples=200, deadline=None)
    def test_output_norms_unit_or_zero(self, v):
        norms = np.linalg.norm(normalize_rows(v), axis=1)
        for value in norms:
            assert value == 0.0 or abs(value - 1.0) <= 1e-12


class TestNormalizationInequality:
    """a.b / ||b|| >= ||a|| - 2 ||a - b|| for b != 0."""

    @given(
        arrays(np.float64, (5,), elements=st.floats(-100, 100)),
        arrays(np.float64, (5,), elements=st.floats(-100, 100)),
    )
    @settings(max_examples=300, deadline=None)
    def test_hypothesis_pairs(self, a, b):
        nb = np.linalg.norm(b)
        if nb < 1e-9:
            return
        lhs = float(a @ b) / nb
        rhs = np.linalg.norm(a) - 2 * np.linalg.norm(a - b)
        assert lhs >= rhs - 1e-9 * (1 + abs(rhs))

    def test_vectorized_sweep(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((10_000, 8)) * rng.lognormal(0, 2, (10_000, 1))
        b = rng.standard_normal((10_000, 8)) * rng.lognormal(0, 2, (10_000, 1))
        nb = np.linalg.norm(b, axis=1)
        lhs = np.sum(a * b, axis=1) / nb
        rhs = np.linalg.norm(a, axis=1) - 2 * np.linalg.norm(a - b, axis=1)
        assert np.all(lhs >= rhs - 1e-9 * (1 + np.abs(rhs)))


@pytest.fixture(scope="module")
def pd_pieces(exp8, exp8_profile, quad_suite, noise_p15):
    params = RunParams(eta=0.05, b=20, K=19, K_hat=19, T=1)
    return exp8, exp8_profile, quad_suite, noise_p15, params


class TestPdInit:
    def test_single_agent_tracker_is_gradient(self):
        a = assign_weights(build_topology("directed_ring", 1), "uniform_out")
        profile = spectral_profile(a)
        suite = make_het_quadratic(n=1, dim=8, rows_per_agent=10, seed=1)
        noise = NoiseModel(p=1.5, sigma=0.0)
        params = RunParams(eta=0.1, b=4, K=3, K_hat=3, T=1)
        state = dnsgd_pd_init(a, profile, suite, noise, params, np.zeros(8), agent_streams(0, 1))
        np.testing.assert_allclose(state.v[0], local_grad(suite, 0, np.zeros(8)))
        assert state.samples == 4
        assert state.comms == 3

    def test_homogeneous_noiseless_rows_track_summed_gradient(self, exp8, exp8_profile):
        # with identical agents, no noise, and long gossip, every tracker row
        # approaches the inverse-diagonal-weighted limit: n times the
        # common gradient (the average direction the analysis compares
        # against n grad f)
        suite = make_het_quadratic(n=8, dim=16, rows_per_agent=20, heterogeneity=0.0, seed=5)
        noise = NoiseModel(p=1.5, sigma=0.0)
        params = RunParams(eta=0.05, b=1, K=200, K_hat=200, T=1)
        state = dnsgd_pd_init(
            exp8, exp8_profile, suite, noise, params, np.zeros(16), agent_streams(0, 8)
        )
        expected = 8 * local_grad(suite, 0, np.zeros(16))
        for row in state.v:
            np.testing.assert_allclose(row, expected, atol=1e-8)

    def test_k_below_threshold_rejected(self, pd_pieces):
        a, profile, suite, noise, _ = pd_pieces
        params = RunParams(eta=0.05, b=20, K=5, K_hat=5, T=1)
        with pytest.raises(ValueError, match="mixing threshold"):
            dnsgd_pd_init(a, profile, suite, noise, params, np.zeros(32), agent_streams(0, 8))

    def test_seeded_tracker_fixture(self, pd_pieces):
        # frozen after validating the weighted tracking identity to 1e-10
        a, profile, suite, noise, params = pd_pieces
        state = dnsgd_pd_init(a, profile, suite, noise, params, np.zeros(32), agent_streams(123, 8))
        expected = np.array(
            [
                [float(v) for v in line.split()]
                for line in (FIXTURES / "pd_init_v_seed123.txt").read_text().splitlines()
            ]
        )
        np.testing.assert_array_equal(state.v, expected)


class TestPdStep:
    def test_consensus_fixed_point_with_zero_step(self, pd_pieces):
        a, profile, suite, _, params = pd_pieces
        quiet = NoiseModel(p=1.5, sigma=0.0)
        frozen = RunParams(eta=0.0, b=1, K=19, K_hat=19, T=1)
        rngs = agent_streams(1, 8)
        state = dnsgd_pd_init(a, profile, suite, quiet, frozen, np.ones(32), rngs)
        stepped = dnsgd_pd_step(state, a, suite, quiet, frozen, rngs)
        np.testing.assert_allclose(stepped.x, state.x, atol=1e-12)
        # the weighted tracking identity is re-established exactly (pi^T V
        # itself shifts slightly as the diagonal scaling drifts toward pi)
        tracked = profile.pi @ stepped.v
        scaled = profile.pi @ (stepped.g / stepped.diag_cur[:, None])
        np.testing.assert_allclose(tracked, scaled, atol=1e-10)

    def test_single_agent_is_normalized_descent(self):
        a = assign_weights(build_topology("directed_ring", 1), "uniform_out")
        profile = spectral_profile(a)
        suite = make_het_quadratic(n=1, dim=8, rows_per_agent=10, seed=1)
        noise = NoiseModel(p=1.5, sigma=0.0)
        params = RunParams(eta=0.1, b=1, K=3, K_hat=3, T=1)
        rngs = agent_streams(0, 1)
        state = dnsgd_pd_init(a, profile, suite, noise, params, np.zeros(8), rngs)
        x = np.zeros(8)
        for _ in range(5):
            g = local_grad(suite, 0, x)
            x = x - 0.1 * g / np.linalg.norm(g)
            state = dnsgd_pd_step(state, a, suite, noise, params, rngs)
            np.testing.assert_allclose(state.x[0], x, atol=1e-12)

    def test_consensus_recursion_with_measured_rho(self, pd_pieces):
        a, profile, suite, noise, params = pd_pieces
        rngs = agent_streams(2, 8)
        rho = rho_of(a, params.K, profile.pi)
        state = dnsgd_pd_init(a, profile, suite, noise, params, np.zeros(32), rngs)
        ones = np.ones(8)
        for _ in range(3):
            before = np.linalg.norm(state.x - np.outer(ones, profile.pi @ state.x))
            state = dnsgd_pd_step(state, a, suite, noise, params, rngs)
            after = np.linalg.norm(state.x - np.outer(ones, profile.pi @ state.x))
            assert after <= rho * (before + 2 * np.sqrt(8) * params.eta) + 1e-9

    def test_counters_advance(self, pd_pieces):
        a, profile, suite, noise, params = pd_pieces
        rngs = agent_streams(3, 8)
        state = dnsgd_pd_init(a, profile, suite, noise, params, np.zeros(32), rngs)
        stepped = dnsgd_pd_step(state, a, suite, noise, params, rngs)
        assert stepped.samples == state.samples + 8 * params.b
        assert stepped.comms == state.comms + params.K
        assert stepped.t == 1


class TestAccGossip:
    def test_consensus_exact_fixed_point(self, ring16_metropolis):
        z = np.tile(np.array([2.0, -1.0]), (16, 1))
        beta = spectral_profile(ring16_metropolis).beta
        out = acc_gossip(z, ring16_metropolis, beta, 7)
        np.testing.assert_allclose(out, z, atol=1e-12)

    def test_zero_rounds_returns_input(self, ring16_metropolis):
        rng = np.random.default_rng(0)
        z = rng.standard_normal((16, 3))
        out = acc_gossip(z, ring16_metropolis, 0.9, 0)
        np.testing.assert_array_equal(out, z)
        assert out is not z

    def test_mean_preserved_and_contraction(self, ring16_metropolis):
        profile = spectral_profile(ring16_metropolis)
        accel = GossipAccel(profile.beta)
        rng = np.random.default_rng(1)
        ones = np.ones(16)
        for _ in range(20):
            z = rng.standard_normal((16, 4))
            mean = z.mean(axis=0)
            for k in (1, 5, 10):
                out = acc_gossip(z, ring16_metropolis, profile.beta, k)
                np.testing.assert_allclose(out.mean(axis=0), mean, atol=1e-10)
                lhs = np.linalg.norm(out - np.outer(ones, mean))
                rhs = accel.contraction(k) * np.linalg.norm(z - np.outer(ones, mean))
                assert lhs <= rhs + 1e-9

    def test_rejects_row_stochastic_matrix(self, exp8):
        with pytest.raises(TopologyError, match="doubly"):
            acc_gossip(np.zeros((8, 2)), exp8, 0.5, 3)

    def test_momentum_constants(self):
        accel = GossipAccel(0.0)
        assert accel.eta_z == 0.0
        accel = GossipAccel(0.6)
        assert accel.eta_z == pytest.approx((1 - 0.8) / (1 + 0.8))
        assert accel.c1 == pytest.approx(math.sqrt(14))
        assert accel.c2 == pytest.approx(1 - 1 / math.sqrt(2))


@pytest.fixture(scope="module")
def un_pieces(ring16_metropolis):
    profile = spectral_profile(ring16_metropolis)
    suite = make_het_quadratic(n=16, dim=16, rows_per_agent=20, heterogeneity=1.0, seed=4)
    noise = NoiseModel(p=1.5, sigma=1.0)
    params = RunParams(eta=0.05, b=8, K=5, K_hat=10, T=1)
    return ring16_metropolis, profile, suite, noise, params


class TestUndirected:
    def test_mean_tracking_holds_over_steps(self, un_pieces):
        a, profile, suite, noise, params = un_pieces
        rngs = agent_streams(5, 16)
        state = dnsgd_un_init(a, profile, suite, noise, params, np.zeros(16), rngs)
        for _ in range(30):
            state = dnsgd_un_step(state, a, profile, suite, noise, params, rngs)
            gap = np.linalg.norm(state.v.mean(axis=0) - state.g.mean(axis=0))
            assert gap <= 1e-8 * (1 + np.linalg.norm(state.g))

    def test_single_agent_is_normalized_descent(self):
        a = assign_weights(build_topology("undirected_ring", 2), "uniform_out")
        profile = spectral_profile(a)
        suite = make_het_quadratic(n=2, dim=8, rows_per_agent=10, heterogeneity=0.0, seed=1)
        noise = NoiseModel(p=1.5, sigma=0.0)
        params = RunParams(eta=0.1, b=1, K=40, K_hat=40, T=1)
        rngs = agent_streams(0, 2)
        state = dnsgd_un_init(a, profile, suite, noise, params, np.zeros(8), rngs)
        # homogeneous noiseless agents at consensus: the mean follows exact
        # normalized gradient descent
        x = np.zeros(8)
        for _ in range(5):
            g = local_grad(suite, 0, x)
            x = x - 0.1 * g / np.linalg.norm(g)
            state = dnsgd_un_step(state, a, profile, suite, noise, params, rngs)
            np.testing.assert_allclose(state.x.mean(axis=0), x, atol=1e-9)

    def test_requires_doubly_stochastic(self, exp8, exp8_profile, quad_suite, noise_p15):
        params = RunParams(eta=0.05, b=4, K=3, K_hat=3, T=1)
        with pytest.raises(TopologyError, match="doubly"):
            dnsgd_un_init(exp8, exp8_profile, quad_suite, noise_p15, params, np.zeros(32), agent_streams(0, 8))


class TestDsgt:
    def test_single_agent_noiseless_is_plain_descent(self):
        a = assign_weights(build_topology("directed_ring", 1), "uniform_out")
        suite = make_het_quadratic(n=1, dim=8, rows_per_agent=10, seed=1)
        noise = NoiseModel(p=1.5, sigma=0.0)
        params = RunParams(eta=0.1, b=1, K=1, K_hat=0, T=1)
        rngs = agent_streams(0, 1)
        state = dsgt_init(a, suite, noise, params, np.zeros(8), rngs)
        x = np.zeros(8)
        for _ in range(5):
            x = x - 0.1 * local_grad(suite, 0, x)
            state = dsgt_step(state, a, suite, noise, params, rngs)
            np.testing.assert_allclose(state.x[0], x, atol=1e-12)

    def test_consensus_mean_follows_descent(self, ring16_metropolis):
        suite = make_het_quadratic(n=16, dim=8, rows_per_agent=10, heterogeneity=0.0, seed=2)
        noise = NoiseModel(p=1.5, sigma=0.0)
        params = RunParams(eta=0.05, b=1, K=1, K_hat=0, T=1)
        rngs = agent_streams(1, 16)
        state = dsgt_init(ring16_metropolis, suite, noise, params, np.zeros(8), rngs)
        x = np.zeros(8)
        for _ in range(4):
            x = x - 0.05 * local_grad(suite, 0, x)
            state = dsgt_step(state, ring16_metropolis, suite, noise, params, rngs)
            np.testing.assert_allclose(state.x.mean(axis=0), x, atol=1e-10)

    def test_mean_tracking_with_noise(self, ring16_metropolis, noise_p15):
        suite = make_het_quadratic(n=16, dim=8, rows_per_agent=10, seed=2)
        params = RunParams(eta=0.02, b=4, K=1, K_hat=0, T=1)
        rngs = agent_streams(2, 16)
        state = dsgt_init(ring16_metropolis, suite, noise_p15, params, np.zeros(8), rngs)
        for _ in range(30):
            state = dsgt_step(state, ring16_metropolis, suite, noise_p15, params, rngs)
            gap = np.linalg.norm(state.v.mean(axis=0) - state.g.mean(axis=0))
            assert gap <= 1e-8 * (1 + np.linalg.norm(state.g))

    def test_column_stochastic_accepted(self, exp8, quad_suite, noise_p15):
        # the exponential circulant is column-stochastic though asymmetric,
        # which is all the tracking identity needs
        params = RunParams(eta=0.02, b=4, K=1, K_hat=0, T=1)
        state = dsgt_init(exp8, quad_suite, noise_p15, params, np.zeros(32), agent_streams(0, 8))
        assert state.comms == 0

    def test_row_only_matrix_rejected(self, quad_suite, noise_p15):
        from decopt import custom_topology

        topo = custom_topology(3, {(0, 1), (1, 0), (1, 2), (2, 0)})
        m = assign_weights(topo, "uniform_out")
        assert not m.is_column_stochastic()
        params = RunParams(eta=0.02, b=4, K=1, K_hat=0, T=1)
        suite = make_het_quadratic(n=3, dim=8, rows_per_agent=10, seed=0)
        with pytest.raises(TopologyError, match="column"):
            dsgt_init(m, suite, noise_p15, params, np.zeros(8), agent_streams(0, 3))


class TestTheoremParams:
    """The calculator must reproduce the closed forms exactly.

    Expected values are hand evaluations of the published settings:
    directed T = ceil(3672 L D / eps^2), eta = eps / (918 L),
    b = ceil((3276 s / eps)^(p/(p-1)) / n); undirected uses 924 / 270 / 288.
    """

    def exp8_profile(self):
        return SpectralProfile(pi=np.full(8, 0.125), beta=0.5, kappa=1.0, theta=16.0, n=8)

    def test_directed_hand_values(self):
        params = theorem_params(
            "directed", 1.0, 1.0, 0.1, 1.0, 2.0, 8, self.exp8_profile(), np.ones(8),
            max_t=10**9, max_b=10**9,
        )
        assert params.T == 367200
        assert params.eta == pytest.approx(0.1 / 918)
        assert params.b == 134152200  # ceil(32760^2 / 8)
        # mixing floor 19 dominates the accuracy form ceil(2.148) = 3
        assert params.K == 19
        # initial-gossip form: ceil(2 ln(1 + 8 eta sqrt(8) (sqrt(8) + 8 / sqrt(b)))) = 1
        assert params.K_hat == 1

    def test_directed_noiseless_unit_batch(self):
        params = theorem_params(
            "directed", 1.0, 1.0, 0.1, 0.0, 2.0, 8, self.exp8_profile(), np.ones(8)
        )
        assert params.b == 1

    def test_single_agent_mixing_floor(self):
        profile = SpectralProfile(pi=np.array([1.0]), beta=0.0, kappa=1.0, theta=2.0, n=1)
        params = theorem_params("directed", 1.0, 1.0, 0.1, 0.0, 2.0, 1, profile, [1.0])
        assert params.K == 3

    def test_undirected_hand_values(self):
        profile = SpectralProfile(pi=np.full(8, 0.125), beta=0.5, kappa=1.0, theta=16.0, n=8)
        params = theorem_params(
            "undirected", 1.0, 1.0, 0.1, 1.0, 2.0, 8, profile, np.ones(8),
            max_t=10**9, max_b=10**9,
        )
        assert params.T == 92400  # ceil(924 / 0.01)
        assert params.eta == pytest.approx(0.1 / 270)
        assert params.b == 1036800  # ceil((2880)^2 / 8)
        # smallest K with sqrt(14) (1 - (1 - 1/sqrt 2) sqrt(1/2))^K <= 8^(-1/2)
        c2 = 1 - 1 / math.sqrt(2)
        per_round = 1 - c2 * math.sqrt(0.5)
        k = math.ceil(math.log(math.sqrt(14) / 8 ** (-0.5)) / -math.log(per_round))
        assert params.K == k

    def test_budget_cap_reported(self):
        with pytest.raises(BudgetError, match="budget"):
            theorem_params(
                "directed", 1.0, 1.0, 1e-6, 1.0, 1.5, 8, self.exp8_profile(), np.ones(8)
            )

    def test_input_validation(self):
        profile = self.exp8_profile()
        with pytest.raises(ValueError):
            theorem_params("sideways", 1.0, 1.0, 0.1, 1.0, 2.0, 8, profile, np.ones(8))
        with pytest.raises(ValueError):
            theorem_params("directed", 1.0, 1.0, 0.1, 1.0, 2.5, 8, profile, np.ones(8))
        with pytest.raises(ValueError):
            theorem_params("directed", -1.0, 1.0, 0.1, 1.0, 2.0, 8, profile, np.ones(8))
