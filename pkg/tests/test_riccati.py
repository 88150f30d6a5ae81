import numpy as np
import pytest

from rhstab.riccati import (
    QuadraticValue, UnstableClosedLoop, finite_horizon_lq_value, riccati_gain,
    solve_lyapunov, synthesize_lq,
)


def lyapunov_series_oracle(Acl, Q, terms=200):
    """Independent oracle: P = sum_k (Acl^k)' Q Acl^k."""
    Acl = np.atleast_2d(np.asarray(Acl, float))
    Q = np.atleast_2d(np.asarray(Q, float))
    P = np.zeros_like(Q)
    M = np.eye(Acl.shape[0])
    for _ in range(terms):
        P = P + M.T @ Q @ M
        M = M @ Acl
    return P


class TestSolveLyapunov:
    def test_zero_closed_loop(self):
        P = solve_lyapunov(np.array([[0.0]]), np.array([[1.0]]))
        assert P[0, 0] == pytest.approx(1.0, abs=1e-12)

    def test_scalar_geometric_series(self):
        # oracle: sum 0.25^k = 4/3
        P = solve_lyapunov(np.array([[0.5]]), np.array([[1.0]]))
        oracle = lyapunov_series_oracle(0.5, 1.0)[0, 0]
        assert oracle == pytest.approx(4.0 / 3.0, abs=1e-12)
        assert P[0, 0] == pytest.approx(oracle, abs=1e-9)

    def test_diagonal_2d(self):
        P = solve_lyapunov(0.9 * np.eye(2), np.eye(2))
        oracle = lyapunov_series_oracle(0.9 * np.eye(2), np.eye(2), terms=800)
        assert np.allclose(P, oracle, atol=1e-7)
        assert P[0, 0] == pytest.approx(1.0 / 0.19, abs=1e-9)

    def test_unstable_rejected(self):
        with pytest.raises(UnstableClosedLoop):
            solve_lyapunov(np.array([[1.0]]), np.array([[1.0]]))

    def test_residual_small_random_stable(self):
        gen = np.random.default_rng(2)
        A = gen.normal(size=(3, 3))
        A *= 0.8 / max(abs(np.linalg.eigvals(A)))
        Q = np.eye(3)
        P = solve_lyapunov(A, Q)
        assert np.linalg.norm(A.T @ P @ A - P + Q) <= 1e-9


class TestRiccatiGain:
    def test_matches_scipy_dare(self):
        import scipy.linalg
        A = np.array([[1.0, 0.1], [0.0, 1.0]])
        B = np.array([[0.0], [1.0]])
        Q = np.eye(2)
        R = np.eye(1)
        K, P = riccati_gain(A, B, Q, R)
        P_ref = scipy.linalg.solve_discrete_are(A, B, Q, R)
        assert np.allclose(P, P_ref, atol=1e-8)
        K_ref = -np.linalg.solve(R + B.T @ P_ref @ B, B.T @ P_ref @ A)
        assert np.allclose(K, K_ref, atol=1e-8)

    def test_scalar_golden_ratio(self):
        K, P = riccati_gain(np.array([[1.0]]), np.array([[1.0]]),
                            np.array([[1.0]]), np.array([[1.0]]))
        assert P[0, 0] == pytest.approx((1 + np.sqrt(5)) / 2, abs=1e-10)

    def test_unstabilizable_diverges(self):
        from rhstab.riccati import RiccatiDivergence
        # uncontrollable unstable mode
        A = np.array([[2.0, 0.0], [0.0, 0.5]])
        B = np.array([[0.0], [1.0]])
        with pytest.raises(RiccatiDivergence):
            riccati_gain(A, B, np.eye(2), np.eye(1), max_iter=3000)


class TestSynthesizeLq:
    def test_scalar_builtin_values_fixed_by_oracle(self):
        # oracle: long riccati iteration plus direct formula evaluation
        synth = synthesize_lq(np.array([[1.0]]), np.array([[1.0]]),
                              np.array([[1.0]]), np.array([[1.0]]), alpha=0.5)
        # converged gain: K = -P/(1+P), P golden ratio
        phi = (1 + np.sqrt(5)) / 2
        K_oracle = -phi / (1 + phi)
        assert synth.K_gain[0, 0] == pytest.approx(K_oracle, abs=1e-9)
        Acl = 1 + K_oracle
        P_oracle = 1.0 / (1 - Acl ** 2)
        assert synth.P[0, 0] == pytest.approx(P_oracle, abs=1e-9)
        lam_oracle = 1.0 - 1.0 / (2.0 * P_oracle)
        assert synth.lambda_circ == pytest.approx(lam_oracle, abs=1e-12)
        level_oracle = 2.0 * P_oracle / lam_oracle
        assert synth.K_set_level == pytest.approx(level_oracle, rel=1e-12)
        beta_oracle = Acl ** 2 * level_oracle + P_oracle
        assert synth.beta == pytest.approx(beta_oracle, rel=1e-10)

    def test_lyapunov_and_partial_order_invariants(self):
        A = np.array([[1.0, 0.2], [0.0, 0.9]])
        B = np.array([[0.0], [1.0]])
        Q = np.diag([1.0, 2.0])
        Sigma = 0.5 * np.eye(2)
        synth = synthesize_lq(A, B, Q, Sigma)
        res = np.linalg.norm(synth.Acl.T @ synth.P @ synth.Acl - synth.P + Q)
        assert res <= 1e-9
        gap = Q - synth.K_gain.T @ synth.R @ synth.K_gain
        assert np.linalg.eigvalsh(0.5 * (gap + gap.T)).min() >= -1e-9
        assert 0.0 <= synth.lambda_circ < 1.0

    def test_zero_system_matrix(self):
        # A = 0: zero gain suffices, P = Q
        synth = synthesize_lq(np.zeros((2, 2)), np.eye(2), np.diag([1.0, 4.0]),
                              np.zeros((2, 2)))
        assert np.allclose(synth.K_gain, 0.0, atol=1e-9)
        assert np.allclose(synth.P, np.diag([1.0, 4.0]), atol=1e-9)
        assert synth.lambda_circ == pytest.approx(1.0 - 1.0 / 8.0)

    def test_zero_noise_collapses_level_and_beta(self):
        synth = synthesize_lq(np.array([[1.0]]), np.array([[1.0]]),
                              np.array([[1.0]]), np.array([[0.0]]))
        assert synth.K_set_level == 0.0
        assert synth.beta == 0.0

    def test_lambda_monotone_in_q_scaling(self):
        synth = synthesize_lq(np.array([[1.0]]), np.array([[1.0]]),
                              np.array([[1.0]]), np.array([[1.0]]))
        smin = np.linalg.svd(synth.Q, compute_uv=False).min()
        smax = np.linalg.svd(synth.P, compute_uv=False).max()
        base = 1.0 - smin / (2 * smax)
        for t in (0.2, 0.5, 0.9, 1.0):
            scaled = 1.0 - t * smin / (2 * smax)
            assert scaled >= base - 1e-15

    def test_drift_compatibility_of_R(self):
        # on the boundary of the sublevel set, the stage-cost drift holds
        synth = synthesize_lq(np.array([[1.0]]), np.array([[1.0]]),
                              np.array([[1.0]]), np.array([[1.0]]), alpha=0.5)
        x = np.sqrt(synth.K_set_level / synth.P[0, 0])
        lhs = synth.alpha * (synth.Q[0, 0] - synth.R[0, 0] * synth.K_gain[0, 0] ** 2) * x ** 2
        assert lhs >= np.trace(synth.P @ synth.Sigma) - 1e-6


class TestFiniteHorizonValue:
    def test_no_state_influence(self):
        # A = 0, zero stage state cost: gain 0, value is the pure noise cost
        P = np.array([[2.0]])
        Sigma = np.array([[0.3]])
        values, policies = finite_horizon_lq_value(
            np.array([[0.0]]), np.array([[1.0]]), np.array([[0.0]]),
            np.array([[1.0]]), P, Sigma, N=1)
        assert np.allclose(policies[0].meta["K"], 0.0)
        assert values[0].offset == pytest.approx(0.6)
        assert values[0](np.array([[3.0]]))[0] == pytest.approx(0.6)

    def test_certainty_equivalence(self):
        A = np.array([[1.0, 0.1], [0.0, 1.0]])
        B = np.array([[0.0], [1.0]])
        Q = np.eye(2) * 0.5
        R = np.eye(1) * 0.25
        P = np.eye(2)
        _, pol_a = finite_horizon_lq_value(A, B, Q, R, P, np.zeros((2, 2)), N=5)
        _, pol_b = finite_horizon_lq_value(A, B, Q, R, P, 3.7 * np.eye(2), N=5)
        for pa, pb in zip(pol_a, pol_b):
            assert np.array_equal(pa.meta["K"], pb.meta["K"])

    def test_offsets_accumulate_trace_terms(self):
        A = np.array([[1.0]])
        B = np.array([[1.0]])
        values, _ = finite_horizon_lq_value(A, B, np.array([[0.5]]),
                                            np.array([[0.5]]), np.array([[1.0]]),
                                            np.array([[1.0]]), N=2)
        # offset_0 = trace(P_1 Sigma) + trace(P_2 Sigma)
        assert values[0].offset == pytest.approx(values[1].P[0, 0] + values[2].P[0, 0])

    def test_monotone_decreasing_from_stabilizer_terminal(self):
        # terminal cost from the Lyapunov synthesis dominates the recursion
        synth = synthesize_lq(np.array([[1.0]]), np.array([[1.0]]),
                              np.array([[1.0]]), np.array([[1.0]]))
        values, _ = finite_horizon_lq_value(
            synth.A, synth.B, (1 - synth.alpha) * synth.Q,
            synth.alpha * synth.R, synth.P, synth.Sigma, N=6)
        ps = [v.P[0, 0] for v in values]
        assert all(ps[k] <= ps[k + 1] + 1e-12 for k in range(len(ps) - 1))


def test_quadratic_value_validation():
    with pytest.raises(ValueError):
        QuadraticValue(np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(ValueError):
        QuadraticValue(np.array([[-1.0]]))
    qv = QuadraticValue(np.array([[2.0]]), offset=0.5)
    assert qv(np.array([[1.0], [2.0]]))[1] == pytest.approx(8.5)
