import itertools

import numpy as np
import pytest

from rhstab.dpsolve import Grid, bellman_backup, build_control_grid, extract_rh_policy, solve_horizon
from rhstab.models import (
    ControlSet, CostSpec, NoiseModel, Scenario, SolverHints, SystemModel,
    ValidationError, builtin_scenario,
)
from rhstab.riccati import finite_horizon_lq_value


def toy_scenario():
    """Enumerable instance: 5 integer nodes, 3 controls, N=2, two-point noise.

    Dynamics clip to the node range, so every reachable state is a grid
    node and the grid solution is exact.  All costs are dyadic rationals,
    hence float arithmetic is exact and the comparison needs no tolerance.
    """
    def f(x, u, w):
        return np.clip(x + u + w, -2.0, 2.0)

    def stage(x, u):
        return np.sum(x * x, axis=-1) + 0.5 * np.sum(np.abs(u), axis=-1)

    def terminal(x):
        return np.sum(x * x, axis=-1)

    return Scenario(
        name="toy-enumerable",
        system=SystemModel.general(f, 1, 1, 1),
        noise=NoiseModel.empirical([-1.0, 1.0], seed=0),
        cost=CostSpec(stage, terminal),
        controls=ControlSet.box([-1.0], [1.0]),
        horizon=2,
        hints=SolverHints(grid_min=np.array([-2.0]), grid_max=np.array([2.0]),
                          grid_points=(5,), control_points=(3,)),
    )


def brute_force_toy_values(s):
    """Exhaustive policy enumeration of the expected cost over all noise paths.

    Independent of the solver: evaluates the horizon cost for each of the
    3^(5*2) grid policies over the 4 equally likely noise paths, exactly.
    """
    nodes = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
    controls = np.array([-1.0, 0.0, 1.0])
    noise = np.array([-1.0, 1.0])
    n, m = nodes.size, controls.size

    idx = {v: i for i, v in enumerate(nodes)}
    nxt = np.empty((n, m, 2), dtype=int)          # node, control, noise -> node
    onestep = np.empty((n, m)), np.empty(n)
    for i, x in enumerate(nodes):
        for j, u in enumerate(controls):
            for k, w in enumerate(noise):
                nxt[i, j, k] = idx[float(np.clip(x + u + w, -2, 2))]
    stage = nodes[:, None] ** 2 + 0.5 * np.abs(controls)[None, :]
    term = nodes ** 2

    best = np.full(n, np.inf)
    maps = list(itertools.product(range(m), repeat=n))
    for m1 in maps:                                # stage-1 policy
        m1 = np.array(m1)
        v1 = stage[np.arange(n), m1] + 0.5 * (
            term[nxt[np.arange(n), m1, 0]] + term[nxt[np.arange(n), m1, 1]])
        for m0 in maps:                            # stage-0 policy
            m0 = np.array(m0)
            v0 = stage[np.arange(n), m0] + 0.5 * (
                v1[nxt[np.arange(n), m0, 0]] + v1[nxt[np.arange(n), m0, 1]])
            best = np.minimum(best, v0)
    return best


class TestGrid:
    def test_nodes_strictly_increasing(self):
        with pytest.raises(ValidationError):
            Grid((np.array([0.0, 0.0, 1.0]),))

    def test_interpolation_exact_at_nodes(self):
        g = Grid.regular([-1.0, 0.0], [1.0, 2.0], (5, 7))
        gen = np.random.default_rng(0)
        vals = gen.normal(size=g.shape)
        fn = g.interpolator(vals)
        assert np.allclose(fn(g.points()), vals.ravel(), atol=0)

    def test_clamped_extrapolation(self):
        g = Grid.regular([0.0], [1.0], (3,))
        fn = g.interpolator(np.array([0.0, 1.0, 4.0]))
        assert fn(np.array([[9.0]]))[0] == pytest.approx(4.0)
        assert fn(np.array([[-9.0]]))[0] == pytest.approx(0.0)


class TestBellmanBackup:
    def test_zero_noise_control_cost_only(self):
        def f(x, u, w):
            return x + u + w

        s = Scenario(
            name="t", system=SystemModel.general(f, 1, 1, 1),
            noise=NoiseModel.gaussian([0.0], [[0.0]]),
            cost=CostSpec(lambda x, u: np.sum(u * u, axis=-1),
                          lambda x: np.zeros(np.asarray(x).shape[:-1])),
            controls=ControlSet.box([-1.0], [1.0]), horizon=1,
            hints=SolverHints(control_points=(5,)))
        val, u = bellman_backup(s, lambda x: np.zeros(x.shape[:-1]), [0.3])
        assert val == 0.0
        assert u[0] == 0.0

    def test_indicator_zero_inside(self):
        s = builtin_scenario("integrator-indicator")
        val, _ = bellman_backup(s, lambda x: np.zeros(x.shape[:-1]), [0.0])
        assert val == 0.0

    def test_monotone_in_next_value(self):
        s = builtin_scenario("integrator-indicator")
        grid = build_control_grid(s)
        lo, _ = bellman_backup(s, lambda x: np.abs(x[..., 0]), [1.0], grid)
        hi, _ = bellman_backup(s, lambda x: np.abs(x[..., 0]) + 2.0, [1.0], grid)
        assert lo <= hi
        assert hi == pytest.approx(lo + 2.0)

    def test_tie_break_lowest_control_index(self):
        # constant everything: every control ties; lowest index must win
        def f(x, u, w):
            return x

        s = Scenario(
            name="t", system=SystemModel.general(f, 1, 1, 1),
            noise=NoiseModel.empirical([0.0]),
            cost=CostSpec(lambda x, u: np.ones(np.asarray(x).shape[:-1]),
                          lambda x: np.zeros(np.asarray(x).shape[:-1])),
            controls=ControlSet.box([-1.0], [1.0]), horizon=1,
            hints=SolverHints(control_points=(5,)))
        grid = build_control_grid(s)
        _, u = bellman_backup(s, lambda x: np.zeros(x.shape[:-1]), [0.0], grid)
        assert u[0] == grid[0, 0]


class TestSolveHorizon:
    def test_terminal_stage_exact(self):
        s = builtin_scenario("integrator-indicator", grid_points=41)
        table = solve_horizon(s)
        pts = table.grid.points()
        assert np.array_equal(table.values[-1],
                              s.cost.terminal(pts).reshape(table.grid.shape))

    def test_single_stage_pure_terminal_expectation(self):
        # N = 1 with zero stage cost: V = min_u E[c_F(x + u + w)]
        cfg = builtin_scenario("integrator-indicator", horizon=1, grid_points=41)
        s = Scenario(
            name="n1", system=cfg.system, noise=cfg.noise,
            cost=CostSpec(lambda x, u: np.zeros(np.asarray(x).shape[:-1]),
                          cfg.cost.terminal),
            controls=cfg.controls, horizon=1, hints=cfg.hints)
        table = solve_horizon(s)
        nodes, weights = s.noise.quadrature()
        i = int(np.argmin(np.abs(table.grid.nodes[0] - 1.6)))
        x = table.grid.nodes[0][i:i + 1]
        grid = build_control_grid(s)
        best = min(float(s.cost.terminal(x + u + nodes) @ weights) for u in grid)
        assert table.values[0].ravel()[i] == pytest.approx(best, abs=1e-12)

    def test_enumerable_toy_matches_brute_force_exactly(self):
        s = toy_scenario()
        table = solve_horizon(s)
        oracle = brute_force_toy_values(s)
        assert np.array_equal(table.values[0].ravel(), oracle)

    def test_values_nonnegative(self):
        s = builtin_scenario("integrator-indicator", grid_points=81)
        table = solve_horizon(s)
        assert np.all(table.values >= 0)

    def test_grid_refinement_consistency_lq(self):
        # halving the spacing moves shared-node values by less than the
        # declared tolerance, measured against the closed form
        s_coarse = builtin_scenario("lq", grid_points=201, control_points=301,
                                    horizon=2)
        s_fine = builtin_scenario("lq", grid_points=401, control_points=301,
                                  horizon=2)
        ta, tb = solve_horizon(s_coarse), solve_horizon(s_fine)
        shared = ta.grid.nodes[0]
        interior = np.abs(shared) <= 5.0
        va = ta.values[0][interior]
        vb = tb.value_fn(0)(shared[interior, None])
        assert np.max(np.abs(va - vb)) <= 3e-3

    def test_missing_hints_rejected(self):
        s = toy_scenario()
        bare = Scenario(name=s.name, system=s.system, noise=s.noise, cost=s.cost,
                        controls=s.controls, horizon=s.horizon, hints=SolverHints())
        with pytest.raises(ValidationError, match="hints"):
            solve_horizon(bare)


class TestDpVsRiccati:
    def test_scalar_lq_value_and_policy(self):
        s = builtin_scenario("lq", horizon=2)
        table = solve_horizon(s)
        c = s.constants
        alpha = c["alpha"]
        values, policies = finite_horizon_lq_value(
            np.array([[1.0]]), np.array([[1.0]]),
            (1 - alpha) * np.asarray(c["Q"]), alpha * np.asarray(c["R"]),
            np.asarray(c["P"]), np.asarray(c["Sigma"]), N=2)
        nodes = table.grid.nodes[0]
        interior = np.abs(nodes) <= 5.0
        closed = values[0](nodes[interior, None])
        assert np.max(np.abs(table.values[0][interior] - closed)) <= 1e-3

        K0 = policies[0].meta["K"][0, 0]
        du = table.control_grid[1, 0] - table.control_grid[0, 0]
        pol = table.stage_policy(0)
        gap = np.abs(pol(nodes[interior, None])[:, 0] - K0 * nodes[interior])
        assert np.max(gap) <= du + 1e-9


class TestExtractPolicy:
    def test_indicator_policy_admissible_everywhere(self):
        s = builtin_scenario("integrator-indicator", grid_points=161)
        table = solve_horizon(s)
        rh = extract_rh_policy(table, s.controls)
        gen = np.random.default_rng(4)
        x = gen.uniform(-10, 10, size=(10_000, 1))
        u = rh(x)
        assert np.all((u >= -1.0) & (u <= 1.0))

    def test_symmetric_scenario_antisymmetric_policy(self):
        # even costs, symmetric noise, odd dynamics: u*(-x) = -u*(x) up to ties
        s = builtin_scenario("integrator-exponential", grid_points=201,
                             control_points=41)
        table = solve_horizon(s)
        nodes = table.grid.nodes[0]
        interior = np.abs(nodes) <= 5.0
        pol = table.stage_policy(0)
        u_pos = pol(nodes[interior, None])[:, 0]
        u_neg = pol(-nodes[interior, None])[:, 0]
        du = table.control_grid[1, 0] - table.control_grid[0, 0]
        assert np.max(np.abs(u_pos + u_neg)) <= 1.5 * du

    def test_values_symmetric(self):
        s = builtin_scenario("integrator-exponential", grid_points=201)
        table = solve_horizon(s)
        v = table.values[0]
        assert np.allclose(v, v[::-1], rtol=1e-10)


def test_value_table_csv_round_trip_values():
    s = toy_scenario()
    table = solve_horizon(s)
    text = table.to_csv()
    lines = text.strip().split("\n")
    # header + (N+1) stages x 5 nodes
    assert len(lines) == 1 + 3 * 5
    assert lines[0].startswith("stage,")
    # byte-identical on re-serialization
    assert table.to_csv() == text


def test_overflow_error_names_the_node():
    # exponential terminal cost on an absurdly wide grid overflows
    s = builtin_scenario("integrator-exponential", grid_points=11)
    import dataclasses
    wide = dataclasses.replace(
        s.hints, grid_min=np.array([-800.0]), grid_max=np.array([800.0]))
    s2 = Scenario(name=s.name, system=s.system, noise=s.noise, cost=s.cost,
                  controls=s.controls, horizon=s.horizon, hints=wide)
    with pytest.raises(FloatingPointError, match="node"):
        solve_horizon(s2, check_quadrature=False)
