import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import norm

from rhstab.models import BUILTIN_NAMES, ControlSet, NoiseModel, builtin_scenario
from rhstab.policy import (
    InsufficientControlAuthority, PolicySequence, StagePolicy, concat,
    exp_norm_moment, make_ortho_stabilizer, ortho_control_block,
    reachability_index, reachability_matrix, sat_radial, scalar_sat_policy,
)


class TestSatRadial:
    def test_inside_ball_identity(self):
        assert np.allclose(sat_radial(np.array([3.0, 4.0]), 10.0), [3.0, 4.0])

    def test_outside_ball_unit_direction(self):
        assert np.allclose(sat_radial(np.array([3.0, 4.0]), 1.0), [0.6, 0.8])

    def test_zero_maps_to_zero(self):
        assert np.allclose(sat_radial(np.zeros(2), 1.0), 0.0)

    def test_norm_bounded_and_direction_preserved(self):
        gen = np.random.default_rng(3)
        z = gen.normal(scale=5.0, size=(256, 3))
        out = sat_radial(z, 2.0)
        assert np.all(np.linalg.norm(out, axis=1) <= 2.0 + 1e-12)
        cross = np.linalg.norm(np.cross(out, z), axis=1)
        assert np.all(cross <= 1e-9 * np.linalg.norm(z, axis=1) ** 2)


class TestScalarSatPolicy:
    def test_values(self):
        g = scalar_sat_policy()
        assert g(np.array([0.5]))[0] == pytest.approx(-0.5)
        assert g(np.array([7.0]))[0] == pytest.approx(-1.0)
        assert g(np.array([-7.0]))[0] == pytest.approx(1.0)


class TestConcat:
    def _seq(self, k):
        return PolicySequence(tuple(
            StagePolicy.from_gain(np.array([[-0.5]])) for _ in range(k)))

    def test_lengths_add(self):
        assert len(concat(self._seq(2), self._seq(3))) == 5

    def test_empty_identity(self):
        p = self._seq(3)
        empty = PolicySequence(())
        assert concat(empty, p).stages == p.stages
        assert concat(p, empty).stages == p.stages

    def test_associative(self):
        a, b, c = self._seq(1), self._seq(2), self._seq(3)
        lhs = concat(concat(a, b), c)
        rhs = concat(a, concat(b, c))
        assert lhs.stages == rhs.stages

    def test_tail_plus_stabilizer(self):
        # the (pi_1..pi_{N-1}, g) construction used in the drift argument
        stages = [StagePolicy.from_gain(np.array([[-0.1 * k]])) for k in range(4)]
        tail = PolicySequence(tuple(stages[1:]))
        g = scalar_sat_policy()
        full = concat(tail, PolicySequence.of(g))
        assert len(full) == 4
        assert full.stages[-1] is g
        assert full.stages[0] is stages[1]

    def test_dimension_mismatch_rejected(self):
        p1 = PolicySequence.of(StagePolicy.from_gain(np.array([[-0.5]])))
        p2 = PolicySequence.of(StagePolicy.from_gain(np.array([[0.1, 0.2]])))
        with pytest.raises(Exception, match="dimension"):
            concat(p1, p2)


class TestProjectionSafety:
    def test_policy_outputs_in_control_set(self):
        gen = np.random.default_rng(11)
        cs = ControlSet.box([-1.0], [1.0])
        pols = [
            StagePolicy.from_gain(np.array([[-3.0]]), cs),
            StagePolicy.saturated_linear(np.array([[-1.0]]), 0.7, cs),
            scalar_sat_policy(cs),
        ]
        x = gen.normal(scale=4.0, size=(10_000, 1))
        for p in pols:
            assert np.all(cs.contains(p(x)))


class TestGridPolicy:
    def test_nodes_reproduced_exactly(self):
        nodes = (np.linspace(-2, 2, 9),)
        ctrl = (-0.5 * nodes[0])[:, None]
        p = StagePolicy.from_grid(nodes, ctrl)
        assert np.allclose(p(nodes[0][:, None]), ctrl, atol=0)

    def test_clamp_outside_box(self):
        nodes = (np.linspace(-1, 1, 5),)
        ctrl = nodes[0][:, None] ** 2
        p = StagePolicy.from_grid(nodes, ctrl)
        assert p(np.array([[4.0]]))[0, 0] == pytest.approx(1.0)

    def test_csv_round_trip(self):
        nodes = (np.linspace(-2, 2, 5), np.linspace(-1, 1, 3))
        gen = np.random.default_rng(0)
        ctrl = gen.normal(size=(5, 3, 2))
        p = StagePolicy.from_grid(nodes, ctrl)
        q = StagePolicy.from_csv(p.to_csv())
        x = gen.uniform(-2, 2, size=(64, 2))
        assert np.allclose(p(x), q(x), atol=1e-12)


class TestReachability:
    def test_scalar(self):
        assert reachability_index(np.array([[1.0]]), np.array([[1.0]])) == 1

    def test_rotation_with_single_input(self):
        th = math.pi / 4
        A = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
        B = np.array([[1.0], [0.0]])
        assert reachability_index(A, B) == 2
        R = reachability_matrix(A, B, 2)
        assert R.shape == (2, 2)
        assert np.allclose(R[:, 1:], B)
        assert np.allclose(R[:, :1], A @ B)

    def test_uncontrollable_pair(self):
        A = np.eye(2)
        B = np.array([[1.0], [0.0]])
        with pytest.raises(Exception, match="controllable"):
            reachability_index(A, B)


class TestExpNormMoment:
    def test_scalar_against_adaptive_quadrature(self):
        # oracle: 2 * int_0^inf e^w phi_sigma(w) dw, adaptive on a finite window
        for sigma in (0.5, 1.0, 2.0):
            oracle, err = quad(lambda w: 2 * np.exp(w) * norm.pdf(w, scale=sigma),
                               0.0, 60.0, epsabs=1e-12, epsrel=1e-12)
            val, ci = exp_norm_moment(np.array([[sigma ** 2]]))
            assert ci == 0.0
            assert val == pytest.approx(oracle, abs=1e-6)

    def test_planar_isotropic_against_radial_quadrature(self):
        # ||w|| has density r exp(-r^2/2); oracle by adaptive quadrature
        oracle, _ = quad(lambda r: np.exp(r) * r * np.exp(-r * r / 2), 0, 60,
                         epsabs=1e-12, epsrel=1e-12)
        val, ci = exp_norm_moment(np.eye(2))
        assert ci == 0.0
        assert val == pytest.approx(oracle, abs=1e-6)

    def test_monte_carlo_fallback_covers_high_dim(self):
        val, ci = exp_norm_moment(np.eye(4) * 0.01, mc_samples=200_000, seed=1)
        assert ci > 0
        gen = np.random.default_rng(123)
        ref = np.exp(np.linalg.norm(gen.normal(scale=0.1, size=(200_000, 4)), axis=1)).mean()
        assert val == pytest.approx(ref, abs=5 * ci + 1e-3)


class TestOrthoStabilizer:
    def _noise(self, sigma=1.0, d=1):
        return NoiseModel.gaussian(np.zeros(d), np.eye(d) * sigma ** 2, seed=0)

    def test_scalar_rho_matches_closed_form(self):
        stab = make_ortho_stabilizer(np.array([[1.0]]), np.array([[1.0]]),
                                     self._noise(), 2.0)
        closed = math.log(2 * math.exp(0.5) * norm.cdf(1.0))
        assert stab.rho == pytest.approx(closed, abs=1e-9)
        assert stab.lambda_circ == pytest.approx(math.exp(stab.rho - 2.0))
        assert stab.K_radius == pytest.approx(2 * stab.rho)
        assert stab.rho_first_moment == pytest.approx(math.log(math.sqrt(2 / math.pi)))

    def test_insufficient_authority(self):
        with pytest.raises(InsufficientControlAuthority) as info:
            make_ortho_stabilizer(np.array([[1.0]]), np.array([[1.0]]),
                                  self._noise(), 0.1)
        assert info.value.rho > 1.0

    def test_lambda_in_unit_interval_iff_authority(self):
        stab = make_ortho_stabilizer(np.array([[1.0]]), np.array([[1.0]]),
                                     self._noise(), 1.1)
        assert 0.0 < stab.lambda_circ < 1.0

    def test_planar_rotation_rho(self):
        th = math.pi / 4
        A = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
        stab = make_ortho_stabilizer(A, np.eye(2), self._noise(d=2), 2.5)
        oracle, _ = quad(lambda r: np.exp(r) * r * np.exp(-r * r / 2), 0, 60)
        assert stab.kappa == 1
        assert stab.rho == pytest.approx(math.log(oracle), abs=1e-6)

    def test_pseudoinverse_identities(self):
        th = math.pi / 3
        A = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
        B = np.array([[1.0], [0.0]])
        stab = make_ortho_stabilizer(A, B, self._noise(d=2), 4.0)
        R, Rp = stab.reach_B, stab.reach_pinv
        assert np.linalg.norm(R @ Rp @ R - R) <= 1e-9
        # square invertible case: pseudoinverse equals inverse
        assert np.allclose(Rp, np.linalg.inv(R), atol=1e-9)

    def test_block_controls_scalar_cases(self):
        stab = make_ortho_stabilizer(np.array([[1.0]]), np.array([[1.0]]),
                                     self._noise(), 2.0)
        [u] = ortho_control_block(stab, np.array([5.0]))
        assert u[0] == pytest.approx(-2.0)
        [u] = ortho_control_block(stab, np.array([0.5]))
        assert u[0] == pytest.approx(-0.5)
        [u] = ortho_control_block(stab, np.array([0.0]))
        assert u[0] == 0.0

    def test_block_controls_stack_equation(self):
        # stacked controls equal -pinv(R) sat(A^k x), split in application order
        th = math.pi / 4
        A = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
        B = np.array([[1.0], [0.0]])
        stab = make_ortho_stabilizer(A, B, self._noise(d=2), 4.0)
        assert stab.kappa == 2
        x = np.array([3.0, -1.0])
        blocks = ortho_control_block(stab, x)
        stacked = np.concatenate([b for b in blocks])
        target = sat_radial(np.linalg.matrix_power(A, 2) @ x, 4.0)
        assert np.allclose(stacked, -stab.reach_pinv @ target, atol=1e-12)
        # applying them step by step cancels A^2 x exactly (noise-free)
        z = A @ (A @ x) + A @ (B @ blocks[0]) + B @ blocks[1]
        assert np.allclose(z, np.linalg.matrix_power(A, 2) @ x - target, atol=1e-10)

    def test_orthogonality_required(self):
        with pytest.raises(Exception, match="orthogonal"):
            make_ortho_stabilizer(np.array([[0.5]]), np.array([[1.0]]),
                                  self._noise(), 2.0)

    def test_one_block_drift_by_quadrature(self):
        # conditional contraction of exp(|x|) outside the 2*rho ball,
        # one-step expectation by dense Gauss-Legendre panels
        stab = make_ortho_stabilizer(np.array([[1.0]]), np.array([[1.0]]),
                                     self._noise(), 2.0)
        lam = stab.lambda_circ
        xs = np.linspace(stab.K_radius + 1e-3, 8.0, 200)
        for x in xs[:: 20]:
            a = x - 2.0
            val, err = quad(lambda w: np.exp(abs(a + w)) * norm.pdf(w), -40, 40,
                            points=[-a], limit=200)
            assert val / np.exp(x) <= lam + 1e-6


def test_builtin_policies_stay_admissible():
    # projection safety across every builtin scenario control set
    gen = np.random.default_rng(17)
    for name in BUILTIN_NAMES:
        s = builtin_scenario(name)
        d = s.system.state_dim
        p = StagePolicy.from_gain(-0.5 * np.eye(d)[: s.system.control_dim],
                                  s.controls)
        x = gen.normal(scale=5.0, size=(10_000, d))
        assert np.all(s.controls.contains(p(x)))
