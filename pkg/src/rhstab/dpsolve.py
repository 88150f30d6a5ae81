"""Gridded finite-horizon stochastic dynamic programming.

Backward induction on a rectilinear grid with multilinear interpolation,
clamped extrapolation, a discretized control set, and noise expectations
by Gauss-Hermite quadrature (Gaussian laws) or exact table sums
(empirical laws).  Ties in the control argmin break toward the lowest
control index so tables are reproducible.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .models import Scenario, ValidationError, broadcast_step
from .policy import RecedingHorizonPolicy, StagePolicy

__all__ = ["Grid", "ValueTable", "build_control_grid", "bellman_backup",
           "solve_horizon", "extract_rh_policy"]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Grid:
    """Rectilinear interpolation grid: strictly increasing nodes per axis."""

    nodes: tuple[np.ndarray, ...]

    def __post_init__(self):
        for i, n in enumerate(self.nodes):
            if n.ndim != 1 or n.size < 2 or np.any(np.diff(n) <= 0):
                raise ValidationError(f"grid axis {i}: nodes must be strictly increasing")

    @staticmethod
    def regular(lo, hi, points) -> "Grid":
        lo = np.atleast_1d(np.asarray(lo, float))
        hi = np.atleast_1d(np.asarray(hi, float))
        pts = (points,) * lo.size if np.ndim(points) == 0 else tuple(points)
        return Grid(tuple(np.linspace(lo[i], hi[i], pts[i]) for i in range(lo.size)))

    @property
    def dim(self) -> int:
        return len(self.nodes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(n) for n in self.nodes)

    @property
    def lower(self) -> np.ndarray:
        return np.array([n[0] for n in self.nodes])

    @property
    def upper(self) -> np.ndarray:
        return np.array([n[-1] for n in self.nodes])

    def points(self) -> np.ndarray:
        """All nodes as an ``(n_nodes, dim)`` array in C order."""
        mesh = np.meshgrid(*self.nodes, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=1)

    def interpolator(self, values: np.ndarray):
        """Multilinear interpolation with clamp-to-box extrapolation."""
        interp = RegularGridInterpolator(self.nodes, values, method="linear")
        lo, hi = self.lower, self.upper

        def fn(x):
            x = np.asarray(x, dtype=float)
            flat = np.clip(x.reshape(-1, self.dim), lo, hi)
            return interp(flat).reshape(x.shape[:-1])

        return fn


def build_control_grid(s: Scenario) -> np.ndarray:
    """Discretize the control set per the solver hints; always includes 0.

    Box sets use their own bounds; norm balls use the bounding box and
    drop points outside the ball; unconstrained sets require
    ``control_min``/``control_max`` hints.
    """
    cs = s.controls
    h = s.hints
    pts = h.control_points or (11,) * cs.dim
    if cs.kind == "box":
        lo, hi = cs.lower, cs.upper
    elif cs.kind == "norm-ball":
        lo = np.full(cs.dim, -cs.radius)
        hi = np.full(cs.dim, cs.radius)
    else:
        if h.control_min is None or h.control_max is None:
            raise ValidationError(
                "unconstrained controls need control_min/control_max solver hints")
        lo, hi = h.control_min, h.control_max
    axes = [np.linspace(lo[i], hi[i], pts[i]) for i in range(cs.dim)]
    grid = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    keep = cs.contains(grid, tol=1e-12)
    grid = grid[keep] if grid.ndim > 1 else grid
    if grid.shape[0] == 0:
        raise ValidationError("discretized control set is empty")
    if not np.any(np.all(grid == 0.0, axis=1)):
        grid = np.vstack([np.zeros((1, cs.dim)), grid])
    return grid


@dataclass
class ValueTable:
    """Backward-induction output: values and argmin controls at every stage.

    ``values[k]`` approximates the optimal cost-to-go with ``N - k``
    stages remaining; ``values[N]`` equals the terminal cost at the
    nodes exactly.  ``controls[k]`` holds the stage-k argmin control at
    each node.
    """

    grid: Grid
    values: np.ndarray          # (N+1, *grid.shape)
    controls: np.ndarray        # (N, *grid.shape, m)
    control_grid: np.ndarray    # (n_u, m)
    scenario_name: str = ""
    quadrature_relerr: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return self.values.shape[0] - 1

    def value_fn(self, k: int = 0):
        return self.grid.interpolator(self.values[k])

    def stage_policy(self, k: int, control_set=None) -> StagePolicy:
        return StagePolicy.from_grid(self.grid.nodes, self.controls[k], control_set)

    def stage_policies(self, control_set=None) -> list[StagePolicy]:
        return [self.stage_policy(k, control_set) for k in range(self.horizon)]

    def to_csv(self) -> str:
        """Rows of (stage, node coordinates, value, argmin control)."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        d = self.grid.dim
        m = self.control_grid.shape[1]
        writer.writerow(["stage", *[f"x{i}" for i in range(d)], "value",
                         *[f"u{j}" for j in range(m)]])
        pts = self.grid.points()
        for k in range(self.horizon + 1):
            vals = self.values[k].ravel()
            if k < self.horizon:
                ctrl = self.controls[k].reshape(-1, m)
            else:
                ctrl = np.full((pts.shape[0], m), np.nan)
            for i in range(pts.shape[0]):
                writer.writerow([k, *[repr(float(v)) for v in pts[i]],
                                 repr(float(vals[i])),
                                 *[repr(float(c)) for c in ctrl[i]]])
        return buf.getvalue()


def _stage_backup(s: Scenario, next_values_fn, states: np.ndarray,
                  control_grid: np.ndarray, noise_nodes: np.ndarray,
                  noise_weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized Bellman backup over a batch of states.

    Returns ``(values, argmin_controls)``; ties break toward the lowest
    control index (strict-improvement update).
    """
    n = states.shape[0]
    best_val = np.full(n, np.inf)
    best_idx = np.zeros(n, dtype=int)
    with np.errstate(over="ignore"):  # non-finite values are rejected below
        for j, u in enumerate(control_grid):
            ub = np.broadcast_to(u, (n, 1, u.size))
            xn = broadcast_step(s.system, states[:, None, :], ub,
                                noise_nodes[None, :, :])
            ev = next_values_fn(xn) @ noise_weights
            total = s.cost.stage(states, np.broadcast_to(u, (n, u.size))) + ev
            improve = total < best_val
            best_val = np.where(improve, total, best_val)
            best_idx = np.where(improve, j, best_idx)
    if not np.all(np.isfinite(best_val)):
        bad = states[~np.isfinite(best_val)][0]
        raise FloatingPointError(
            f"non-finite backed-up value at node {np.array2string(bad)} "
            "(quadrature overflow; shrink the grid or costs)")
    return best_val, control_grid[best_idx]


def bellman_backup(s: Scenario, next_value, x,
                   control_grid: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """One backward step at a single state: minimize ``c(x,u) + E[next_value]``.

    ``next_value`` is any batch-aware map of states to scalars (for
    instance a grid interpolation of the following stage).
    """
    if control_grid is None:
        control_grid = build_control_grid(s)
    if control_grid.shape[0] == 0:
        raise ValidationError("discretized control set is empty")
    nodes, weights = s.noise.quadrature(s.hints.quad_degree)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    vals, ctrls = _stage_backup(s, next_value, x, control_grid, nodes, weights)
    return float(vals[0]), ctrls[0]


def solve_horizon(s: Scenario, check_quadrature: bool = True) -> ValueTable:
    """Solve the N-horizon problem on the scenario's grid.

    Stage-N values equal the terminal cost at the nodes exactly; each
    earlier stage stores backed-up values and argmin controls.  When
    ``check_quadrature`` is set and the noise is Gaussian, the first
    backup is repeated at an escalated quadrature degree on a node
    subsample and the relative gap recorded (warned above 1e-4).
    """
    h = s.hints
    if h.grid_min is None or h.grid_max is None or h.grid_points is None:
        raise ValidationError("scenario lacks grid solver hints")
    grid = Grid.regular(h.grid_min, h.grid_max, h.grid_points)
    control_grid = build_control_grid(s)
    nodes, weights = s.noise.quadrature(h.quad_degree)
    pts = grid.points()
    N = s.horizon
    m = control_grid.shape[1]

    values = np.empty((N + 1,) + grid.shape)
    controls = np.empty((N,) + grid.shape + (m,))
    with np.errstate(over="ignore"):
        values[N] = np.asarray(s.cost.terminal(pts), dtype=float).reshape(grid.shape)
    if not np.all(np.isfinite(values[N])):
        bad = pts[~np.isfinite(values[N].ravel())][0]
        raise FloatingPointError(f"terminal cost not finite at node {bad}")

    relerr = 0.0
    for k in range(N - 1, -1, -1):
        next_fn = grid.interpolator(values[k + 1])
        vals, ctrl = _stage_backup(s, next_fn, pts, control_grid, nodes, weights)
        values[k] = vals.reshape(grid.shape)
        controls[k] = ctrl.reshape(grid.shape + (m,))
        if check_quadrature and k == N - 1 and s.noise.law == "gaussian":
            sub = pts[:: max(1, pts.shape[0] // 32)]
            n2, w2 = s.noise.quadrature(2 * h.quad_degree + 1)
            v_lo, _ = _stage_backup(s, next_fn, sub, control_grid, nodes, weights)
            v_hi, _ = _stage_backup(s, next_fn, sub, control_grid, n2, w2)
            relerr = float(np.max(np.abs(v_hi - v_lo) / np.maximum(np.abs(v_hi), 1e-12)))
            if relerr > 1e-4:
                logger.warning("quadrature degree %d may be insufficient: "
                               "escalation changes values by %.2e relative",
                               h.quad_degree, relerr)

    return ValueTable(grid=grid, values=values, controls=controls,
                      control_grid=control_grid, scenario_name=s.name,
                      quadrature_relerr=relerr,
                      meta={"horizon": N, "quad_degree": h.quad_degree})


def extract_rh_policy(table: ValueTable, control_set=None) -> RecedingHorizonPolicy:
    """Stationary policy interpolating the stage-0 argmin controls."""
    return RecedingHorizonPolicy(table.stage_policy(0, control_set),
                                 provenance=table.scenario_name)

