"""Drift-condition and cost-selection certifiers.

Each check evaluates a drift or boundedness inequality on a finite,
deterministic set of test states and returns a :class:`DriftCertificate`
with the worst margin, the statistical half-width (zero for
quadrature-exact evaluations), and a pass/fail verdict.  Margins are
oriented so that negative means satisfied; a certificate passes iff
``worst_margin + ci_halfwidth <= tolerance``.

Certificates state what was checked ("certified on n points"), never a
proof over an uncountable set.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .dpsolve import Grid, ValueTable, build_control_grid
from .models import Scenario, ValidationError, broadcast_step
from .policy import OrthoStabilizer, StagePolicy

__all__ = [
    "DriftCertificate",
    "IntervalRegion",
    "BallRegion",
    "EllipsoidRegion",
    "Transition",
    "BlockTransition",
    "check_cost_selection",
    "check_geometric_drift",
    "check_constant_drift",
    "check_value_drift",
    "check_sandwich",
    "check_geometric_from_costs",
    "certificates_to_csv",
]

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


# ----------------------------------------------------------------------
# Regions (the excluded set K and sampling around it)
# ----------------------------------------------------------------------


def _directions(n: int, dim: int) -> np.ndarray:
    """Deterministic low-discrepancy unit directions."""
    if dim == 1:
        return (np.where(np.arange(n) % 2 == 0, 1.0, -1.0))[:, None]
    i = np.arange(n, dtype=float)
    if dim == 2:
        theta = 2.0 * math.pi * np.mod(i * _GOLDEN, 1.0)
        return np.stack([np.cos(theta), np.sin(theta)], axis=1)
    if dim == 3:
        z = 1.0 - 2.0 * (i + 0.5) / n
        theta = 2.0 * math.pi * np.mod(i * _GOLDEN, 1.0)
        r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
        return np.stack([r * np.cos(theta), r * np.sin(theta), z], axis=1)
    raise ValidationError("deterministic direction sampling supports dim <= 3")


@dataclass(frozen=True)
class IntervalRegion:
    """K = [lo, hi] on the real line."""

    lo: float
    hi: float

    dim: int = 1

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        v = x[..., 0]
        return (v >= self.lo) & (v <= self.hi)

    def sample_inside(self, n: int) -> np.ndarray:
        return np.linspace(self.lo, self.hi, n)[:, None]

    def sample_shell(self, n: int, outer: float) -> np.ndarray:
        """Points in the annulus strictly outside K, out to |x| = outer."""
        m = (n + 1) // 2
        frac = (np.arange(m) + 1.0) / m
        right = self.hi + frac * (outer - self.hi)
        left = self.lo - frac * (outer + self.lo)
        return np.concatenate([right, left])[:n, None]


@dataclass(frozen=True)
class BallRegion:
    """K = {||x|| <= radius}."""

    radius: float
    dim: int = 1

    def contains(self, x) -> np.ndarray:
        return np.linalg.norm(np.asarray(x, dtype=float), axis=-1) <= self.radius

    def sample_inside(self, n: int) -> np.ndarray:
        dirs = _directions(n, self.dim)
        frac = np.mod((np.arange(n) + 0.5) * _GOLDEN, 1.0)
        radii = self.radius * frac ** (1.0 / self.dim)
        radii[0] = 0.0  # cover the center: suprema often sit there
        return dirs * radii[:, None]

    def sample_shell(self, n: int, outer: float) -> np.ndarray:
        if outer <= self.radius:
            raise ValidationError("shell outer radius must exceed the region radius")
        dirs = _directions(n, self.dim)
        frac = (np.arange(n) + 1.0) / n
        radii = self.radius + frac * (outer - self.radius)
        return dirs * radii[:, None]


@dataclass(frozen=True)
class EllipsoidRegion:
    """K = {x : x' P x <= level}; degenerate when level <= 0 (just the origin)."""

    P: np.ndarray
    level: float

    @property
    def dim(self) -> int:
        return np.asarray(self.P).shape[0]

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        q = np.einsum("...i,ij,...j->...", x, np.asarray(self.P, float), x)
        return q <= max(self.level, 0.0)

    def _boundary_scale(self, dirs: np.ndarray) -> np.ndarray:
        q = np.einsum("ni,ij,nj->n", dirs, np.asarray(self.P, float), dirs)
        return np.sqrt(np.maximum(self.level, 0.0) / q)

    def sample_inside(self, n: int) -> np.ndarray:
        d = self.dim
        if self.level <= 0:
            return np.zeros((n, d))
        dirs = _directions(n, d)
        frac = np.mod((np.arange(n) + 0.5) * _GOLDEN, 1.0) ** (1.0 / d)
        frac[0] = 0.0  # cover the center: suprema often sit there
        return dirs * (self._boundary_scale(dirs) * frac)[:, None]

    def sample_shell(self, n: int, outer: float) -> np.ndarray:
        dirs = _directions(n, self.dim)
        t0 = self._boundary_scale(dirs) if self.level > 0 else np.zeros(n)
        if np.any(t0 >= outer):
            raise ValidationError("shell outer radius must exceed the ellipsoid")
        frac = (np.arange(n) + 1.0) / n
        radii = t0 + frac * (outer - t0)
        return dirs * radii[:, None]


# ----------------------------------------------------------------------
# One-step transition expectations
# ----------------------------------------------------------------------


class Transition:
    """Conditional one-step expectations for a closed loop.

    Quadrature reports a zero half-width: empirical tables sum exactly,
    scalar Gaussian noise uses a kink-robust composite Gauss-Legendre
    rule, and multivariate Gaussian noise a Gauss-Hermite tensor rule of
    degree ``quad_degree``.  Monte Carlo reports per-state standard
    errors instead.
    """

    def __init__(self, scenario: Scenario, policy, method: str = "quadrature",
                 quad_degree: int = 21, mc_samples: int = 20_000, seed: int = 0):
        self.scenario = scenario
        self.policy = policy
        self.method = method
        self.quad_degree = quad_degree
        self.mc_samples = mc_samples
        self.seed = seed

    def _rule(self) -> tuple[np.ndarray, np.ndarray]:
        noise = self.scenario.noise
        if noise.law == "gaussian" and noise.dim == 1:
            return noise.dense_quadrature()
        return noise.quadrature(self.quad_degree)

    def next_states(self, states: np.ndarray, noise: np.ndarray) -> np.ndarray:
        u = np.asarray(self.policy(states), dtype=float)
        return broadcast_step(self.scenario.system, states[:, None, :],
                              u[:, None, :], noise[None, :, :])

    def expectation(self, fn, states) -> tuple[np.ndarray, np.ndarray]:
        """Per-state ``(E[fn(x1) | x], stderr)`` for a batch of states."""
        states = np.atleast_2d(np.asarray(states, dtype=float))
        if self.method == "quadrature":
            nodes, weights = self._rule()
            vals = np.asarray(fn(self.next_states(states, nodes)), dtype=float)
            if not np.all(np.isfinite(vals)):
                raise FloatingPointError("transition expectation is not finite")
            return vals @ weights, np.zeros(states.shape[0])
        gen = self.scenario.noise.rng(stream=101, seed=self.seed)
        total = np.zeros(states.shape[0])
        totalsq = np.zeros(states.shape[0])
        n = self.mc_samples
        chunk = max(1, min(n, 4_000_000 // max(1, states.shape[0])))
        drawn = 0
        while drawn < n:
            take = min(chunk, n - drawn)
            w = self.scenario.noise.sample_with(gen, take)
            vals = np.asarray(fn(self.next_states(states, w)), dtype=float)
            total += vals.sum(axis=1)
            totalsq += (vals ** 2).sum(axis=1)
            drawn += take
        mean = total / n
        var = np.maximum(totalsq / n - mean ** 2, 0.0) * n / max(n - 1, 1)
        return mean, np.sqrt(var / n)


class BlockTransition:
    """Conditional expectations over one κ-step block of the stabilized loop.

    Monte Carlo with common random numbers across states.
    """

    def __init__(self, scenario: Scenario, stabilizer: OrthoStabilizer,
                 mc_samples: int = 40_000, seed: int = 0):
        self.scenario = scenario
        self.stab = stabilizer
        self.mc_samples = mc_samples
        self.seed = seed
        self.method = "monte-carlo"

    def _propagate(self, states: np.ndarray, w: np.ndarray) -> np.ndarray:
        # w: (n_samples, kappa, p); controls fixed by the block-start state
        blocks = self.stab.block_controls(states)          # (n, kappa, m)
        x = np.broadcast_to(states[:, None, :],
                            (states.shape[0], w.shape[0], states.shape[1])).copy()
        for j in range(self.stab.kappa):
            x = broadcast_step(self.scenario.system, x, blocks[:, None, j, :],
                               w[None, :, j, :])
        return x

    def expectation(self, fn, states) -> tuple[np.ndarray, np.ndarray]:
        states = np.atleast_2d(np.asarray(states, dtype=float))
        gen = self.scenario.noise.rng(stream=202, seed=self.seed)
        n = self.mc_samples
        total = np.zeros(states.shape[0])
        totalsq = np.zeros(states.shape[0])
        chunk = max(1, min(n, 2_000_000 // max(1, states.shape[0])))
        drawn = 0
        while drawn < n:
            take = min(chunk, n - drawn)
            w = self.scenario.noise.sample_with(gen, take * self.stab.kappa)
            w = w.reshape(take, self.stab.kappa, -1)
            vals = np.asarray(fn(self._propagate(states, w)), dtype=float)
            total += vals.sum(axis=1)
            totalsq += (vals ** 2).sum(axis=1)
            drawn += take
        mean = total / n
        var = np.maximum(totalsq / n - mean ** 2, 0.0) * n / max(n - 1, 1)
        return mean, np.sqrt(var / n)


# ----------------------------------------------------------------------
# Certificates
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class DriftCertificate:
    """Statistical verdict for one drift/boundedness inequality.

    ``worst_margin`` is the largest violation over the test points
    (negative = satisfied), ``ci_halfwidth`` the statistical half-width
    at that point (0 for quadrature), and the verdict is the pure
    function ``worst_margin + ci_halfwidth <= tolerance``.
    """

    kind: str
    scenario: str
    test_points: int
    worst_margin: float
    ci_halfwidth: float
    tolerance: float
    method: str
    constants: dict = field(default_factory=dict)
    reason: str | None = None
    skipped: int = 0

    @property
    def verdict(self) -> bool:
        return bool(self.worst_margin + self.ci_halfwidth <= self.tolerance)

    def summary(self) -> str:
        status = "pass" if self.verdict else "FAIL"
        extra = f" reason: {self.reason}" if self.reason else ""
        return (f"[{status}] {self.kind} on '{self.scenario}': certified on "
                f"{self.test_points} points, worst margin {self.worst_margin:+.3e} "
                f"+- {self.ci_halfwidth:.1e} (tol {self.tolerance:.1e}, "
                f"{self.method}){extra}")


def certificates_to_csv(certs: list[DriftCertificate]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["scenario", "kind", "method", "test_points", "worst_margin",
                     "ci_halfwidth", "tolerance", "verdict", "reason", "constants"])
    for c in certs:
        consts = ";".join(f"{k}={v:.12g}" if isinstance(v, float) else f"{k}={v}"
                          for k, v in sorted(c.constants.items()))
        writer.writerow([c.scenario, c.kind, c.method, c.test_points,
                         repr(c.worst_margin), repr(c.ci_halfwidth),
                         repr(c.tolerance), "pass" if c.verdict else "fail",
                         c.reason or "", consts])
    return buf.getvalue()


def _worst(margins: np.ndarray, halfwidths: np.ndarray) -> tuple[float, float]:
    scores = margins + halfwidths
    i = int(np.argmax(scores))
    return float(margins[i]), float(halfwidths[i])


def _scale(values: np.ndarray) -> np.ndarray:
    return np.maximum(1.0, np.abs(values))


# ----------------------------------------------------------------------
# Cost-selection condition: boundedness inside K, cost drift outside K
# ----------------------------------------------------------------------


def check_cost_selection(s: Scenario, g: StagePolicy, K, n_inside: int = 513,
                         n_outside: int = 512, outer: float = 10.0,
                         tol: float = 1e-6,
                         quad_degree: int = 201) -> tuple[DriftCertificate, float]:
    """Certify the cost-selection assumption for the feedback ``g``.

    Inside K the certificate records the bound
    ``b = max_z { c(z, g(z)) - c_F(z) + E[c_F(f(z, g(z), w))] }``;
    outside K (a shell out to Euclidean radius ``outer``) it checks
    ``c(z, g(z)) + E[c_F(f(z, g(z), w))] <= c_F(z)``, with margins normalized
    by ``max(1, c_F(z))``.  Returns ``(certificate, b)``.
    """
    tr = Transition(s, g, "quadrature", quad_degree=quad_degree)

    inside = np.atleast_2d(K.sample_inside(n_inside))
    e_in, _ = tr.expectation(s.cost.terminal, inside)
    u_in = np.asarray(g(inside), dtype=float)
    expr_in = s.cost.stage(inside, u_in) - s.cost.terminal(inside) + e_in
    b = float(expr_in.max())

    shell = np.atleast_2d(K.sample_shell(n_outside, outer))
    e_out, _ = tr.expectation(s.cost.terminal, shell)
    u_out = np.asarray(g(shell), dtype=float)
    cf = s.cost.terminal(shell)
    margins = (s.cost.stage(shell, u_out) + e_out - cf) / _scale(cf)
    worst, hw = _worst(margins, np.zeros_like(margins))
    cert = DriftCertificate(
        kind="cost-selection", scenario=s.name,
        test_points=inside.shape[0] + shell.shape[0],
        worst_margin=worst, ci_halfwidth=hw, tolerance=tol, method="quadrature",
        constants={"b": b, "outer": float(outer)})
    return cert, b


# ----------------------------------------------------------------------
# Geometric and constant drift
# ----------------------------------------------------------------------


def check_geometric_drift(transition, V, lambda_circ: float, K, test_states,
                          tol: float = 1e-6, z_factor: float = 3.0,
                          beta_samples: int = 128) -> DriftCertificate:
    """Certify ``E[V(x1) | x] <= lambda_circ V(x)`` at states outside K.

    Margins are relative: ``E[V(x1)|x]/V(x) - lambda_circ``.  States
    inside K are skipped (counted).  The constant ``beta_hat``, the
    largest one-step expectation over a sample of K, is reported for
    use in the decay envelope.
    """
    if not 0.0 <= lambda_circ < 1.0:
        raise ValidationError("lambda_circ must lie in [0, 1)")
    states = np.atleast_2d(np.asarray(test_states, dtype=float))
    keep = ~np.asarray(K.contains(states))
    skipped = int((~keep).sum())
    states = states[keep]
    if states.shape[0] == 0:
        raise ValidationError("no test states outside K")
    ev, se = transition.expectation(V, states)
    vx = np.asarray(V(states), dtype=float)
    margins = ev / vx - lambda_circ
    halfwidths = z_factor * se / vx
    worst, hw = _worst(margins, halfwidths)

    inside = np.atleast_2d(K.sample_inside(beta_samples))
    ev_in, se_in = transition.expectation(V, inside)
    beta_hat = float((ev_in + z_factor * se_in).max())

    scen = getattr(transition, "scenario", None)
    return DriftCertificate(
        kind="geometric-drift", scenario=scen.name if scen is not None else "",
        test_points=states.shape[0], worst_margin=worst, ci_halfwidth=hw,
        tolerance=tol, method=transition.method,
        constants={"lambda_circ": float(lambda_circ), "beta_hat": beta_hat},
        skipped=skipped)


def check_constant_drift(transition, V, beta: float, K, epsilon: float,
                         M: float | None, test_states, tol: float = 1e-6,
                         z_factor: float = 3.0) -> DriftCertificate:
    """Certify constant drift ``E[V(x1)|x] - V(x) <= -beta`` outside K
    plus the conditional jump-moment bound ``E[|V(x1) - V(x)|^(2+eps) | x] <= M``.

    The jump moment is checked on all test states (inside and outside K).
    When ``M`` is None it is estimated from the data (worst moment plus
    its half-width, times 1.05) and fixed in the certificate; the jump
    clause then holds by construction and the verdict reflects the drift.
    """
    if beta <= 0 or epsilon <= 0:
        raise ValidationError("beta and epsilon must be positive")
    states = np.atleast_2d(np.asarray(test_states, dtype=float))
    outside = ~np.asarray(K.contains(states))
    skipped = int((~outside).sum())
    if not outside.any():
        raise ValidationError("no test states outside K")

    vx = np.asarray(V(states), dtype=float)
    ev, se = transition.expectation(V, states)
    drift_m = (ev - vx + beta)[outside]
    drift_h = (z_factor * se)[outside]

    def jump(xn):
        return np.abs(np.asarray(V(xn), float) - vx[:, None]) ** (2.0 + epsilon)

    jm, jse = transition.expectation(jump, states)
    if M is None:
        M = float(1.05 * (jm + z_factor * jse).max())
    jump_m = jm - M
    jump_h = z_factor * jse

    margins = np.concatenate([drift_m, jump_m])
    halfwidths = np.concatenate([drift_h, jump_h])
    worst, hw = _worst(margins, halfwidths)
    scen = getattr(transition, "scenario", None)
    return DriftCertificate(
        kind="constant-drift", scenario=scen.name if scen is not None else "",
        test_points=states.shape[0],
        worst_margin=worst, ci_halfwidth=hw, tolerance=tol,
        method=transition.method,
        constants={"beta": float(beta), "epsilon": float(epsilon), "M": M},
        skipped=skipped)


# ----------------------------------------------------------------------
# Value-function certificates
# ----------------------------------------------------------------------


def _value_and_policy(s: Scenario, v) -> tuple:
    """Normalize the value argument to ``(value_fn, first_stage_policy)``.

    Accepts a :class:`ValueTable` or a ``(value, policy)`` pair where
    ``value`` is any batch-aware callable (e.g. a :class:`QuadraticValue`).
    """
    if isinstance(v, ValueTable):
        return v.value_fn(0), v.stage_policy(0, s.controls)
    if isinstance(v, tuple) and len(v) == 2 and callable(v[0]):
        return v[0], v[1]
    raise ValidationError(
        "value argument must be a ValueTable or a (value, policy) pair")


def check_value_drift(s: Scenario, v, b: float, test_states, tol: float = 1e-6,
                      quad_degree: int = 201) -> DriftCertificate:
    """Certify the value-function drift of the receding-horizon loop:
    ``E[V*(x1) | x] - V*(x) <= -c(x, pi0(x)) + b``.

    Margins are normalized by ``max(1, c_F(x))``.  The constants report
    whether a strictly negative drift region was observed among the test
    states (``c(x, pi0(x)) > b`` somewhere), which the drift bound alone
    does not guarantee for bounded stage costs.
    """
    value_fn, pol = _value_and_policy(s, v)
    states = np.atleast_2d(np.asarray(test_states, dtype=float))
    tr = Transition(s, pol, "quadrature", quad_degree=quad_degree)
    ev, _ = tr.expectation(value_fn, states)
    vx = np.asarray(value_fn(states), dtype=float)
    u = np.asarray(pol(states), dtype=float)
    cost = s.cost.stage(states, u)
    margins = (ev - vx + cost - b) / _scale(s.cost.terminal(states))
    worst, hw = _worst(margins, np.zeros_like(margins))
    return DriftCertificate(
        kind="value-drift", scenario=s.name, test_points=states.shape[0],
        worst_margin=worst, ci_halfwidth=hw, tolerance=tol, method="quadrature",
        constants={"b": float(b),
                   "negative_drift_region": bool((cost > b).any())})


def check_sandwich(s: Scenario, v, b: float, test_states, tol: float = 1e-6,
                   quad_degree: int = 61) -> DriftCertificate:
    """Certify the two-sided value bound
    ``c(x, pi0(x)) + (N-1) inf c + inf E[c_F o f] <= V*(x) <= c_F(x) + N b``.

    The two infima are taken over the solver's grid and control
    discretization and reported in the constants.
    """
    value_fn, pol = _value_and_policy(s, v)
    states = np.atleast_2d(np.asarray(test_states, dtype=float))
    N = s.horizon

    h = s.hints
    grid = Grid.regular(h.grid_min, h.grid_max, h.grid_points)
    pts = grid.points()
    controls = build_control_grid(s)
    nodes, weights = s.noise.quadrature(min(h.quad_degree, 31))
    inf_c = np.inf
    inf_ecf = np.inf
    for u in controls:
        ub = np.broadcast_to(u, (pts.shape[0], u.size))
        inf_c = min(inf_c, float(s.cost.stage(pts, ub).min()))
        xn = broadcast_step(s.system, pts[:, None, :], ub[:, None, :],
                            nodes[None, :, :])
        inf_ecf = min(inf_ecf, float((s.cost.terminal(xn) @ weights).min()))

    vx = np.asarray(value_fn(states), dtype=float)
    u0 = np.asarray(pol(states), dtype=float)
    cf = np.asarray(s.cost.terminal(states), dtype=float)
    lower = s.cost.stage(states, u0) + (N - 1) * inf_c + inf_ecf - vx
    upper = vx - cf - N * b
    margins = np.concatenate([lower, upper]) / np.concatenate([_scale(cf)] * 2)
    worst, hw = _worst(margins, np.zeros_like(margins))
    return DriftCertificate(
        kind="sandwich", scenario=s.name, test_points=states.shape[0],
        worst_margin=worst, ci_halfwidth=hw, tolerance=tol, method="quadrature",
        constants={"b": float(b), "inf_c": inf_c, "inf_EcF": inf_ecf,
                   "horizon": N})


def _radially_unbounded(fn, dim: int, r_lo: float, r_hi: float,
                        n_dirs: int = 16) -> bool:
    """Empirical ray check: net growth from r_lo to r_hi along every direction."""
    dirs = _directions(n_dirs, dim)
    lo = np.asarray(fn(dirs * r_lo), dtype=float)
    hi = np.asarray(fn(dirs * r_hi), dtype=float)
    growth = hi - lo
    return bool(np.all(growth >= np.maximum(3.0, lo)))


def check_geometric_from_costs(s: Scenario, alpha: float, K, v=None,
                               b: float | None = None,
                               test_states=None, tol: float = 1e-6,
                               quad_degree: int = 201,
                               n_hypothesis: int = 256,
                               outer: float | None = None) -> DriftCertificate:
    """Certify the cost-growth route to a geometric value drift.

    Hypotheses (checked empirically): the terminal cost and the state
    part ``c_s`` of the stage cost are radially unbounded along rays,
    and ``c_s >= alpha c_F`` outside K.  When they hold and a value
    function ``v`` plus the cost-drift bound ``b`` are supplied, the
    derived inequality ``E[V*(x1)|x] - V*(x) <= -(alpha/2) V*(x)`` is
    additionally certified at test states with
    ``V*(x) >= 2 (1/alpha + N) b`` (the enlarged exclusion threshold;
    margins relative to ``V*(x)``).  Without ``v`` the certificate
    covers the hypotheses only (``drift_checked`` is False).
    """
    if s.cost.separable is None:
        raise ValidationError("scenario lacks a separable stage-cost decomposition")
    if not 0.0 < alpha < 1.0:
        raise ValidationError("alpha must lie in (0, 1)")
    c_s, _ = s.cost.separable
    d = s.system.state_dim
    h = s.hints
    r_hi = float(outer if outer is not None else
                 (np.min(h.grid_max) if h.grid_max is not None else 10.0))

    consts = {"alpha": float(alpha), "drift_checked": v is not None and b is not None}
    if b is not None:
        consts["b"] = float(b)
        consts["threshold"] = 2.0 * (1.0 / alpha + s.horizon) * b
    if not _radially_unbounded(s.cost.terminal, d, 1.0, r_hi):
        return DriftCertificate(
            kind="geometric-from-costs", scenario=s.name, test_points=0,
            worst_margin=np.inf, ci_halfwidth=0.0, tolerance=tol,
            method="quadrature", constants=consts,
            reason="c_F not radially unbounded")
    if not _radially_unbounded(c_s, d, 1.0, r_hi):
        return DriftCertificate(
            kind="geometric-from-costs", scenario=s.name, test_points=0,
            worst_margin=np.inf, ci_halfwidth=0.0, tolerance=tol,
            method="quadrature", constants=consts,
            reason="c_s not radially unbounded")

    shell = np.atleast_2d(K.sample_shell(n_hypothesis, r_hi))
    cf = np.asarray(s.cost.terminal(shell), dtype=float)
    hyp_margins = (alpha * cf - np.asarray(c_s(shell), float)) / _scale(cf)

    skipped = 0
    drift_margins = np.array([])
    states = np.zeros((0, d))
    if consts["drift_checked"]:
        value_fn, pol = _value_and_policy(s, v)
        if test_states is None:
            test_states = K.sample_shell(256, r_hi)
        states = np.atleast_2d(np.asarray(test_states, dtype=float))
        vx = np.asarray(value_fn(states), dtype=float)
        keep = vx >= consts["threshold"]
        skipped = int((~keep).sum())
        states, vx = states[keep], vx[keep]
        if states.shape[0] > 0:
            tr = Transition(s, pol, "quadrature", quad_degree=quad_degree)
            ev, _ = tr.expectation(value_fn, states)
            drift_margins = (ev - vx + 0.5 * alpha * vx) / vx

    margins = np.concatenate([hyp_margins, drift_margins])
    worst, hw = _worst(margins, np.zeros_like(margins))
    reason = None
    if np.max(hyp_margins) > tol:
        reason = "c_s < alpha c_F outside K"
    return DriftCertificate(
        kind="geometric-from-costs", scenario=s.name,
        test_points=shell.shape[0] + states.shape[0], worst_margin=worst,
        ci_halfwidth=hw, tolerance=tol, method="quadrature",
        constants=consts, reason=reason, skipped=skipped)
