"""Scenario declarations: controlled systems, noise laws, costs, control sets.

A :class:`Scenario` bundles everything a solver or certifier needs: the
transition map ``x+ = f(x, u, w)``, the noise law (with seeded sampling and
a quadrature rule for expectations), the stage/terminal cost pair, the
control set, and the horizon.  Scenarios are immutable after construction
and safe to share across workers.

Batch convention: transitions, costs and policies accept arrays whose last
axis is the state/control/noise dimension and broadcast over leading axes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

__all__ = [
    "ValidationError",
    "SystemModel",
    "NoiseModel",
    "CostSpec",
    "ControlSet",
    "SolverHints",
    "Scenario",
    "build_scenario",
    "builtin_scenario",
    "eval_stage_cost",
    "BUILTIN_NAMES",
]


class ValidationError(ValueError):
    """Raised when a scenario description violates the schema or an invariant."""


def _as_matrix(value, name: str) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"field '{name}': not a numeric matrix") from exc
    if arr.ndim != 2:
        raise ValidationError(f"field '{name}': expected a matrix (array of arrays)")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"field '{name}': contains non-finite entries")
    return arr


def _as_vector(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim != 1:
        raise ValidationError(f"field '{name}': expected a flat array of numbers")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"field '{name}': contains non-finite entries")
    return arr


# ----------------------------------------------------------------------
# System model
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class SystemModel:
    """Transition map of a controlled stochastic system.

    Attributes:
        state_dim: dimension of the state vector.
        control_dim: dimension of the control vector.
        noise_dim: dimension of the noise vector.
        transition: batch-aware map ``(x, u, w) -> x_next``.
        kind: ``"linear-affine"`` (then ``A`` and ``B`` are set) or ``"general"``.
    """

    state_dim: int
    control_dim: int
    noise_dim: int
    transition: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    kind: str = "general"
    A: np.ndarray | None = None
    B: np.ndarray | None = None

    def __post_init__(self):
        for nm in ("state_dim", "control_dim", "noise_dim"):
            if getattr(self, nm) < 1:
                raise ValidationError(f"field '{nm}': must be a positive integer")

    @staticmethod
    def linear_affine(A, B) -> "SystemModel":
        """Build ``x+ = A x + B u + w`` with additive noise of dimension d."""
        A = _as_matrix(A, "system.A")
        B = _as_matrix(B, "system.B")
        d = A.shape[0]
        if A.shape != (d, d):
            raise ValidationError("field 'system.A': must be square")
        if B.shape[0] != d:
            raise ValidationError("field 'system.B': row count must match A")

        def f(x, u, w):
            x = np.asarray(x, dtype=float)
            u = np.asarray(u, dtype=float)
            w = np.asarray(w, dtype=float)
            return x @ A.T + u @ B.T + w

        return SystemModel(d, B.shape[1], d, f, kind="linear-affine", A=A, B=B)

    @staticmethod
    def general(f, state_dim: int, control_dim: int, noise_dim: int) -> "SystemModel":
        return SystemModel(state_dim, control_dim, noise_dim, f, kind="general")

    def step(self, x, u, w) -> np.ndarray:
        return self.transition(np.asarray(x, float), np.asarray(u, float), np.asarray(w, float))


def broadcast_step(system: "SystemModel", x, u, w) -> np.ndarray:
    """Apply a transition after broadcasting all leading axes to a common
    shape, so maps that ignore an argument still produce the full batch."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    lead = np.broadcast_shapes(x.shape[:-1], u.shape[:-1], w.shape[:-1])
    xb = np.broadcast_to(x, lead + x.shape[-1:])
    ub = np.broadcast_to(u, lead + u.shape[-1:])
    wb = np.broadcast_to(w, lead + w.shape[-1:])
    return system.transition(xb, ub, wb)


# ----------------------------------------------------------------------
# Noise model
# ----------------------------------------------------------------------


def _gauss_hermite_1d(degree: int) -> tuple[np.ndarray, np.ndarray]:
    # probabilists' Hermite: exact for polynomials up to degree 2n-1 under N(0,1)
    t, w = np.polynomial.hermite_e.hermegauss(degree)
    return t, w / math.sqrt(2.0 * math.pi)


def _psd_factor(cov: np.ndarray, name: str = "covariance") -> np.ndarray:
    """Symmetric PSD square root; rejects matrices with negative eigenvalues."""
    cov = np.asarray(cov, dtype=float)
    if not np.allclose(cov, cov.T, atol=1e-12):
        raise ValidationError(f"field '{name}': not symmetric")
    vals, vecs = np.linalg.eigh(cov)
    scale = max(abs(vals).max(), 1.0)
    if vals.min() < -1e-10 * scale:
        raise ValidationError(
            f"field '{name}': not positive semidefinite (eigenvalue {vals.min():.3g})"
        )
    return vecs @ np.diag(np.sqrt(np.clip(vals, 0.0, None)))


@dataclass(frozen=True)
class NoiseModel:
    """I.i.d. process-noise law with seeded sampling and a quadrature rule.

    ``law`` is ``"gaussian"`` (mean + covariance; expectations via
    Gauss-Hermite tensor rules) or ``"empirical"`` (a finite sample table;
    expectations are exact equal-weight sums over the table).
    """

    dim: int
    law: str
    mean: np.ndarray | None = None
    covariance: np.ndarray | None = None
    samples: np.ndarray | None = None
    base_seed: int = 0
    _factor: np.ndarray | None = field(default=None, repr=False, compare=False)

    @staticmethod
    def gaussian(mean, covariance, seed: int = 0) -> "NoiseModel":
        mean = _as_vector(mean, "noise.mean")
        cov = _as_matrix(covariance, "noise.covariance")
        if cov.shape != (mean.size, mean.size):
            raise ValidationError("field 'noise.covariance': shape must match mean")
        factor = _psd_factor(cov)
        return NoiseModel(mean.size, "gaussian", mean=mean, covariance=cov,
                          base_seed=int(seed), _factor=factor)

    @staticmethod
    def empirical(samples, seed: int = 0) -> "NoiseModel":
        table = np.asarray(samples, dtype=float)
        if table.ndim == 1:
            table = table[:, None]
        if table.ndim != 2 or table.shape[0] < 1:
            raise ValidationError("field 'noise.samples': expected a non-empty table")
        return NoiseModel(table.shape[1], "empirical", samples=table, base_seed=int(seed))

    # -- sampling ------------------------------------------------------

    def rng(self, stream: int = 0, seed: int | None = None) -> np.random.Generator:
        """Deterministic generator for a worker/path stream.

        Identical ``(seed, stream)`` always yields the identical draw
        sequence, independent of how many other streams exist.
        """
        base = self.base_seed if seed is None else int(seed)
        return np.random.default_rng(np.random.SeedSequence((base, int(stream))))

    def sample(self, n: int, stream: int = 0, seed: int | None = None) -> np.ndarray:
        """Draw ``n`` noise vectors, shape ``(n, dim)``."""
        gen = self.rng(stream=stream, seed=seed)
        return self.sample_with(gen, n)

    def sample_with(self, gen: np.random.Generator, n: int) -> np.ndarray:
        if self.law == "gaussian":
            z = gen.standard_normal((n, self.dim))
            return self.mean[None, :] + z @ self._factor.T
        idx = gen.integers(0, self.samples.shape[0], size=n)
        return self.samples[idx]

    # -- expectations ----------------------------------------------------

    def quadrature(self, degree: int = 9) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights such that ``sum(w_i f(x_i)) ~ E[f(w)]``.

        Gaussian: tensor Gauss-Hermite, exact for polynomials of total
        degree up to ``2*degree - 1`` per axis.  Empirical: the table
        itself with equal weights, which makes the sum exact for the
        discrete law.
        """
        if self.law == "empirical":
            k = self.samples.shape[0]
            return self.samples, np.full(k, 1.0 / k)
        t, w1 = _gauss_hermite_1d(degree)
        if self.dim == 1:
            nodes = self.mean[None, :] + (t * self._factor[0, 0])[:, None]
            return nodes, w1
        axes = np.meshgrid(*([t] * self.dim), indexing="ij")
        z = np.stack([a.ravel() for a in axes], axis=1)
        weights = w1
        for _ in range(self.dim - 1):
            weights = np.multiply.outer(weights, w1)
        nodes = self.mean[None, :] + z @ self._factor.T
        return nodes, weights.ravel()

    def expect(self, fn, degree: int = 9) -> float:
        nodes, weights = self.quadrature(degree)
        return float(np.sum(weights * np.asarray(fn(nodes), dtype=float)))

    def dense_quadrature(self, panels: int = 100, order: int = 8,
                         span: float = 13.0) -> tuple[np.ndarray, np.ndarray]:
        """Certificate-grade rule robust to kinked integrands.

        Scalar Gaussian laws get a composite Gauss-Legendre rule (error
        below ~1e-4 even across saturation/norm kinks, exact when a kink
        lands on a panel edge); empirical tables are already exact; other
        laws fall back to a high-degree Hermite tensor rule.
        """
        if self.law == "empirical":
            return self.quadrature()
        if self.dim != 1:
            return self.quadrature(21)
        sd = float(np.sqrt(self.covariance[0, 0]))
        if sd == 0.0:
            return self.mean[None, :].copy(), np.array([1.0])
        x, w = np.polynomial.legendre.leggauss(order)
        edges = np.linspace(-span * sd, span * sd, panels + 1)
        half = 0.5 * (edges[1:] - edges[:-1])[:, None]
        mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
        nodes = (half * x[None, :] + mid).ravel()
        weights = (half * w[None, :]).ravel()
        pdf = np.exp(-0.5 * (nodes / sd) ** 2) / (sd * math.sqrt(2.0 * math.pi))
        return (self.mean[0] + nodes)[:, None], weights * pdf


# ----------------------------------------------------------------------
# Costs
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class CostSpec:
    """Nonnegative stage cost ``c(x, u)`` and terminal cost ``c_F(x)``.

    ``separable`` optionally exposes the decomposition ``c = c_s + c_c``
    (state part, control part) required by the cost-selection stability
    hypotheses.  ``kind``/``params`` identify named cost families so a
    scenario can round-trip through its config file.
    """

    stage: Callable[[np.ndarray, np.ndarray], np.ndarray]
    terminal: Callable[[np.ndarray], np.ndarray]
    separable: tuple[Callable, Callable] | None = None
    kind: str = "custom"
    params: dict = field(default_factory=dict)


def _quadratic_cost(Q, R, P, alpha: float) -> CostSpec:
    Q = _as_matrix(Q, "cost.Q")
    R = _as_matrix(R, "cost.R")
    P = _as_matrix(P, "cost.P")
    a = float(alpha)
    if not 0.0 <= a <= 1.0:
        raise ValidationError("field 'cost.alpha': must lie in [0, 1]")

    def c_s(x):
        x = np.asarray(x, float)
        return (1.0 - a) * np.einsum("...i,ij,...j->...", x, Q, x)

    def c_c(u):
        u = np.asarray(u, float)
        return a * np.einsum("...i,ij,...j->...", u, R, u)

    def stage(x, u):
        return c_s(x) + c_c(u)

    def terminal(x):
        x = np.asarray(x, float)
        return np.einsum("...i,ij,...j->...", x, P, x)

    return CostSpec(stage, terminal, (c_s, c_c), kind="quadratic",
                    params={"Q": Q.tolist(), "R": R.tolist(), "P": P.tolist(), "alpha": a})


def _indicator_cost(halfwidth: float) -> CostSpec:
    h = float(halfwidth)
    if h <= 0:
        raise ValidationError("field 'cost.halfwidth': must be positive")

    def c_s(x):
        x = np.asarray(x, float)
        return (np.max(np.abs(x), axis=-1) > h).astype(float)

    def c_c(u):
        return np.zeros(np.asarray(u, float).shape[:-1])

    def terminal(x):
        return np.linalg.norm(np.asarray(x, float), axis=-1)

    return CostSpec(lambda x, u: c_s(x), terminal, (c_s, c_c),
                    kind="indicator", params={"halfwidth": h})


def _exponential_cost(lam: float) -> CostSpec:
    lam = float(lam)
    if not 0.0 <= lam < 1.0:
        raise ValidationError("field 'cost.lam': must lie in [0, 1)")

    def c_s(x):
        x = np.asarray(x, float)
        return (1.0 - lam) * np.exp(np.linalg.norm(x, axis=-1))

    def c_c(u):
        return np.zeros(np.asarray(u, float).shape[:-1])

    def terminal(x):
        return np.exp(np.linalg.norm(np.asarray(x, float), axis=-1))

    return CostSpec(lambda x, u: c_s(x), terminal, (c_s, c_c),
                    kind="exponential", params={"lam": lam})


_COST_BUILDERS = {
    "quadratic": lambda p: _quadratic_cost(p["Q"], p["R"], p["P"], p.get("alpha", 0.5)),
    "indicator": lambda p: _indicator_cost(p.get("halfwidth", 2.0)),
    "exponential": lambda p: _exponential_cost(p["lam"]),
}


# ----------------------------------------------------------------------
# Control sets
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class ControlSet:
    """Admissible control set; always contains the zero control.

    Kinds: ``unconstrained``, ``box`` (per-axis bounds), ``norm-ball``
    (Euclidean radius).  ``project`` maps any vector to the nearest
    admissible one; membership agrees with being a fixed point of
    ``project``.
    """

    kind: str
    dim: int
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    radius: float | None = None

    def __post_init__(self):
        z = np.zeros(self.dim)
        if not self.contains(z):
            raise ValidationError("control set must contain the zero control")

    @staticmethod
    def unconstrained(dim: int) -> "ControlSet":
        return ControlSet("unconstrained", dim)

    @staticmethod
    def box(lower, upper) -> "ControlSet":
        lo = _as_vector(lower, "controls.lower")
        hi = _as_vector(upper, "controls.upper")
        if lo.size != hi.size or np.any(lo > hi):
            raise ValidationError("field 'controls': lower/upper bounds inconsistent")
        return ControlSet("box", lo.size, lower=lo, upper=hi)

    @staticmethod
    def norm_ball(radius: float, dim: int) -> "ControlSet":
        r = float(radius)
        if r <= 0:
            raise ValidationError("field 'controls.radius': must be positive")
        return ControlSet("norm-ball", dim, radius=r)

    def project(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.kind == "unconstrained":
            return u
        if self.kind == "box":
            return np.clip(u, self.lower, self.upper)
        norms = np.linalg.norm(u, axis=-1, keepdims=True)
        scale = np.where(norms > self.radius,
                         self.radius / np.maximum(norms, 1e-300), 1.0)
        return u * scale

    def contains(self, u: np.ndarray, tol: float = 1e-9) -> np.ndarray | bool:
        u = np.asarray(u, dtype=float)
        if self.kind == "unconstrained":
            return np.ones(u.shape[:-1], dtype=bool) if u.ndim > 1 else True
        if self.kind == "box":
            ok = np.all((u >= self.lower - tol) & (u <= self.upper + tol), axis=-1)
        else:
            ok = np.linalg.norm(u, axis=-1) <= self.radius * (1.0 + tol) + tol
        return ok if u.ndim > 1 else bool(ok)


# ----------------------------------------------------------------------
# Scenario
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class SolverHints:
    """Grid bounds/resolutions, sample counts and seeds used by the solvers."""

    grid_min: np.ndarray | None = None
    grid_max: np.ndarray | None = None
    grid_points: tuple[int, ...] | None = None
    control_points: tuple[int, ...] | None = None
    control_min: np.ndarray | None = None
    control_max: np.ndarray | None = None
    quad_degree: int = 9
    mc_samples: int = 10_000
    seed: int = 0


@dataclass(frozen=True)
class Scenario:
    """A complete problem instance for the horizon-N optimal control problem."""

    name: str
    system: SystemModel
    noise: NoiseModel
    cost: CostSpec
    controls: ControlSet
    horizon: int
    hints: SolverHints = field(default_factory=SolverHints)
    constants: dict = field(default_factory=dict)
    expected_failures: tuple[str, ...] = ()
    config: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.horizon < 1:
            raise ValidationError("field 'horizon': must be a positive integer")
        if self.noise.dim != self.system.noise_dim:
            raise ValidationError(
                f"dimension mismatch: noise dim {self.noise.dim} "
                f"!= system noise dim {self.system.noise_dim}")
        if self.controls.dim != self.system.control_dim:
            raise ValidationError(
                f"dimension mismatch: control set dim {self.controls.dim} "
                f"!= system control dim {self.system.control_dim}")

    def to_config(self) -> dict:
        """Config dict that rebuilds this scenario (schema-built scenarios only)."""
        if self.config is None:
            raise ValidationError(
                f"scenario '{self.name}' was not built from the config schema")
        return json.loads(json.dumps(self.config))


def eval_stage_cost(s: Scenario, x, u) -> float:
    """Evaluate ``c(x, u)`` with dimension checks."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape[-1] != s.system.state_dim:
        raise ValidationError(f"state dimension {x.shape[-1]} != {s.system.state_dim}")
    if u.shape[-1] != s.system.control_dim:
        raise ValidationError(f"control dimension {u.shape[-1]} != {s.system.control_dim}")
    out = s.cost.stage(x, u)
    return float(out) if np.ndim(out) == 0 else out


# ----------------------------------------------------------------------
# Config files
# ----------------------------------------------------------------------

_TOP_KEYS = {"name", "system", "noise", "cost", "controls", "horizon", "solver"}


def _parse_noise(spec: dict) -> NoiseModel:
    law = spec.get("law")
    if law == "gaussian":
        if "mean" not in spec or "covariance" not in spec:
            raise ValidationError("field 'noise': gaussian law needs 'mean' and 'covariance'")
        return NoiseModel.gaussian(spec["mean"], spec["covariance"], seed=spec.get("seed", 0))
    if law == "empirical":
        if "samples" not in spec:
            raise ValidationError("field 'noise': empirical law needs 'samples'")
        return NoiseModel.empirical(spec["samples"], seed=spec.get("seed", 0))
    raise ValidationError(f"field 'noise.law': unknown law {law!r}")


def _parse_controls(spec: dict, dim: int) -> ControlSet:
    kind = spec.get("kind")
    params = spec.get("params", {})
    if kind == "unconstrained":
        return ControlSet.unconstrained(dim)
    if kind == "box":
        return ControlSet.box(params["lower"], params["upper"])
    if kind == "norm-ball":
        return ControlSet.norm_ball(params["radius"], dim)
    raise ValidationError(f"field 'controls.kind': unknown kind {kind!r}")


def _parse_hints(spec: dict, d: int, m: int) -> SolverHints:
    def vec(key):
        if key not in spec:
            return None
        v = np.asarray(spec[key], dtype=float)
        return np.full(d, float(v)) if v.ndim == 0 else _as_vector(v, f"solver.{key}")

    def points(key, n):
        if key not in spec:
            return None
        v = spec[key]
        return tuple([int(v)] * n) if np.ndim(v) == 0 else tuple(int(t) for t in v)

    return SolverHints(
        grid_min=vec("grid_min"), grid_max=vec("grid_max"),
        grid_points=points("grid_points", d),
        control_points=points("control_points", m),
        control_min=vec("control_min"), control_max=vec("control_max"),
        quad_degree=int(spec.get("quad_degree", 9)),
        mc_samples=int(spec.get("mc_samples", 10_000)),
        seed=int(spec.get("seed", 0)),
    )


def build_scenario(config) -> Scenario:
    """Build a validated :class:`Scenario` from a config document.

    ``config`` may be a dict, a JSON string, or a path to a JSON file
    following the scenario schema (top-level keys ``name``, ``system``,
    ``noise``, ``cost``, ``controls``, ``horizon``, ``solver``).
    """
    if isinstance(config, (str, Path)):
        text = Path(config).read_text(encoding="utf-8") if Path(str(config)).exists() \
            else str(config)
        try:
            config = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"scenario document is not valid JSON: {exc}") from exc
    if not isinstance(config, dict):
        raise ValidationError("scenario document must be a JSON object")

    unknown = set(config) - _TOP_KEYS
    if unknown:
        raise ValidationError(f"unknown top-level field(s): {sorted(unknown)}")
    for key in ("name", "system", "noise", "cost", "controls", "horizon"):
        if key not in config:
            raise ValidationError(f"missing required field '{key}'")

    sysspec = config["system"]
    if sysspec.get("kind") != "linear-affine":
        raise ValidationError("field 'system.kind': config files support 'linear-affine' only")
    system = SystemModel.linear_affine(sysspec["A"], sysspec["B"])

    noise = _parse_noise(config["noise"])
    if noise.dim != system.noise_dim:
        raise ValidationError(
            f"field 'noise': dimension {noise.dim} != system noise dim {system.noise_dim}")

    costspec = config["cost"]
    kind = costspec.get("kind")
    if kind not in _COST_BUILDERS:
        raise ValidationError(f"field 'cost.kind': unknown kind {kind!r}")
    cost = _COST_BUILDERS[kind](costspec.get("params", {}))

    controls = _parse_controls(config["controls"], system.control_dim)
    hints = _parse_hints(config.get("solver", {}), system.state_dim, system.control_dim)

    scenario = Scenario(
        name=str(config["name"]), system=system, noise=noise, cost=cost,
        controls=controls, horizon=int(config["horizon"]), hints=hints,
        config=json.loads(json.dumps(config)),
    )
    _spot_check_nonnegative(scenario)
    return scenario


def _spot_check_nonnegative(s: Scenario, n: int = 64) -> None:
    gen = np.random.default_rng(np.random.SeedSequence((12345, 0)))
    x = gen.normal(scale=3.0, size=(n, s.system.state_dim))
    u = s.controls.project(gen.normal(scale=2.0, size=(n, s.system.control_dim)))
    if np.any(s.cost.stage(x, u) < 0) or np.any(s.cost.terminal(x) < 0):
        raise ValidationError("cost functions must be nonnegative")
    if s.cost.separable is not None:
        c_s, c_c = s.cost.separable
        gap = np.abs(s.cost.stage(x, u) - c_s(x) - c_c(u))
        if gap.max() > 1e-12:
            raise ValidationError("separable decomposition does not reproduce the stage cost")


# ----------------------------------------------------------------------
# Builtin scenarios
# ----------------------------------------------------------------------

BUILTIN_NAMES = ("lq", "integrator-indicator", "integrator-exponential", "ortho-rotation")


def _builtin_lq(alpha: float, sigma: float, horizon: int, hints: SolverHints) -> Scenario:
    from . import riccati  # deferred: riccati is a leaf module

    A = np.array([[1.0]])
    B = np.array([[1.0]])
    Q = np.array([[1.0]])
    Sigma = np.array([[sigma ** 2]])
    synth = riccati.synthesize_lq(A, B, Q, Sigma, alpha=alpha)
    cost = _quadratic_cost(Q, synth.R, synth.P, alpha)
    scenario = Scenario(
        name="lq",
        system=SystemModel.linear_affine(A, B),
        noise=NoiseModel.gaussian([0.0], Sigma, seed=hints.seed),
        cost=cost,
        controls=ControlSet.unconstrained(1),
        horizon=horizon,
        hints=hints,
        constants={
            "alpha": alpha,
            "lambda_circ": synth.lambda_circ,
            "beta": synth.beta,
            "K_set_level": synth.K_set_level,
            "gain": synth.K_gain.tolist(),
            "P": synth.P.tolist(),
            "Q": Q.tolist(),
            "R": synth.R.tolist(),
            "Sigma": Sigma.tolist(),
        },
    )
    return scenario


def _builtin_integrator_indicator(horizon: int, hints: SolverHints) -> Scenario:
    # Bounded zero-mean noise table: the unit-saturation stabilizer then
    # yields drift exactly -1 outside [-2, 2], which unbounded noise cannot.
    table = [-0.75, -0.25, 0.25, 0.75]
    return Scenario(
        name="integrator-indicator",
        system=SystemModel.linear_affine([[1.0]], [[1.0]]),
        noise=NoiseModel.empirical(table, seed=hints.seed),
        cost=_indicator_cost(2.0),
        controls=ControlSet.box([-1.0], [1.0]),
        horizon=horizon,
        hints=hints,
        constants={"K_halfwidth": 2.0},
        expected_failures=("geometric-from-costs",),
    )


def _builtin_integrator_exponential(sigma: float, u_max: float, horizon: int,
                                    hints: SolverHints) -> Scenario:
    from . import policy  # deferred: policy imports models

    noise = NoiseModel.gaussian([0.0], [[sigma ** 2]], seed=hints.seed)
    stab = policy.make_ortho_stabilizer(np.array([[1.0]]), np.array([[1.0]]), noise, u_max)
    lam = stab.lambda_circ
    return Scenario(
        name="integrator-exponential",
        system=SystemModel.linear_affine([[1.0]], [[1.0]]),
        noise=noise,
        cost=_exponential_cost(lam),
        controls=ControlSet.norm_ball(u_max, 1),
        horizon=horizon,
        hints=hints,
        constants={
            "sigma": sigma,
            "U_max": u_max,
            "rho": stab.rho,
            "rho_first_moment": stab.rho_first_moment,
            "lambda_circ": lam,
            "K_radius": stab.K_radius,
        },
    )


def _builtin_ortho_rotation(u_max: float, horizon: int, hints: SolverHints) -> Scenario:
    from . import policy

    theta = math.pi / 4.0
    A = np.array([[math.cos(theta), -math.sin(theta)],
                  [math.sin(theta), math.cos(theta)]])
    B = np.eye(2)
    noise = NoiseModel.gaussian([0.0, 0.0], np.eye(2), seed=hints.seed)
    stab = policy.make_ortho_stabilizer(A, B, noise, u_max)
    return Scenario(
        name="ortho-rotation",
        system=SystemModel.linear_affine(A, B),
        noise=noise,
        cost=_exponential_cost(stab.lambda_circ),
        controls=ControlSet.norm_ball(u_max, 2),
        horizon=horizon,
        hints=hints,
        constants={
            "theta": theta,
            "U_max": u_max,
            "rho": stab.rho,
            "rho_first_moment": stab.rho_first_moment,
            "lambda_circ": stab.lambda_circ,
            "K_radius": stab.K_radius,
        },
    )


def builtin_scenario(name: str, **overrides) -> Scenario:
    """Return one of the packaged scenarios.

    Names: ``lq`` (scalar linear-quadratic), ``integrator-indicator``
    (scalar integrator, indicator stage cost, unit control box),
    ``integrator-exponential`` (scalar integrator, exponential costs,
    saturated controls), ``ortho-rotation`` (planar rotation with
    bounded controls).  Overrides: ``alpha``, ``sigma``, ``U_max``,
    ``horizon``, ``seed``, ``grid_points``, ``control_points``,
    ``quad_degree``, ``mc_samples``.
    """
    if name not in BUILTIN_NAMES:
        raise KeyError(
            f"unknown scenario {name!r}; valid names: {', '.join(BUILTIN_NAMES)}")

    seed = int(overrides.pop("seed", 0))

    def hints(gmin, gmax, gpts, cmin, cmax, cpts):
        d = len(gmin)
        m = len(cmin)
        return SolverHints(
            grid_min=np.array(gmin, float), grid_max=np.array(gmax, float),
            grid_points=tuple([int(overrides.pop("grid_points", gpts))] * d),
            control_points=tuple([int(overrides.pop("control_points", cpts))] * m),
            control_min=np.array(cmin, float), control_max=np.array(cmax, float),
            quad_degree=int(overrides.pop("quad_degree", 9)),
            mc_samples=int(overrides.pop("mc_samples", 10_000)),
            seed=seed,
        )

    if name == "lq":
        alpha = float(overrides.pop("alpha", 0.5))
        sigma = float(overrides.pop("sigma", 1.0))
        horizon = int(overrides.pop("horizon", 8))
        h = hints([-8.0], [8.0], 401, [-6.0], [6.0], 601)
        out = _builtin_lq(alpha, sigma, horizon, h)
    elif name == "integrator-indicator":
        horizon = int(overrides.pop("horizon", 8))
        h = hints([-8.0], [8.0], 321, [-1.0], [1.0], 21)
        out = _builtin_integrator_indicator(horizon, h)
    elif name == "integrator-exponential":
        sigma = float(overrides.pop("sigma", 1.0))
        u_max = float(overrides.pop("U_max", 2.0))
        horizon = int(overrides.pop("horizon", 3))
        overrides.setdefault("quad_degree", 21)  # exp costs strain low degrees
        h = hints([-8.0], [8.0], 401, [-u_max], [u_max], 41)
        out = _builtin_integrator_exponential(sigma, u_max, horizon, h)
    else:
        u_max = float(overrides.pop("U_max", 2.5))
        horizon = int(overrides.pop("horizon", 4))
        h = hints([-6.0, -6.0], [6.0, 6.0], 41, [-u_max, -u_max], [u_max, u_max], 15)
        out = _builtin_ortho_rotation(u_max, horizon, h)

    if overrides:
        raise ValidationError(f"unknown override(s) for '{name}': {sorted(overrides)}")
    return out
