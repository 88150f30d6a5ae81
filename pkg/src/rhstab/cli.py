"""Command-line pipeline: synthesize, solve, certify, simulate, report.

``rhstab run --scenario lq --stages all --seed 7 --out results/`` executes
the full pipeline on a builtin or config-file scenario, writing CSV
tables (byte-identical across reruns of the same manifest), a plain-text
report, and static SVG plots.  The exit status is 0 exactly when every
certificate not annotated as an expected failure passed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import certify, dpsolve, montecarlo, riccati
from .models import (
    BUILTIN_NAMES, Scenario, ValidationError, build_scenario, builtin_scenario,
)
from .policy import (
    OrthoStabilizer, PolicySequence, StagePolicy, make_ortho_stabilizer,
    scalar_sat_policy,
)

STAGES = ("synth", "solve", "certify", "simulate", "perf")

EXIT_OK = 0
EXIT_CERT_FAILED = 1
EXIT_BAD_SCENARIO = 2
EXIT_STAGE_ERROR = 3


@dataclass
class RunManifest:
    """Everything needed to reproduce a pipeline run."""

    scenario: str
    stages: tuple[str, ...] = STAGES
    out_dir: str = "rhstab-out"
    seed: int = 0
    overrides: dict = field(default_factory=dict)
    paths: int = 400
    steps: int = 2000

    def to_json(self) -> str:
        data = {"scenario": self.scenario, "stages": list(self.stages),
                "out_dir": self.out_dir, "seed": self.seed,
                "overrides": self.overrides, "paths": self.paths,
                "steps": self.steps}
        return json.dumps(data, indent=2, sort_keys=True)



# ----------------------------------------------------------------------
# Analysis plans: which stabilizer, region and drift function fit a scenario
# ----------------------------------------------------------------------


@dataclass
class Plan:
    kind: str                       # "lq" | "ortho" | "saturation" | "bare"
    g: StagePolicy | None = None
    region: object | None = None
    drift_V: object | None = None
    lambda_circ: float | None = None
    beta: float | None = None
    synthesis: object | None = None         # LqSynthesis or OrthoStabilizer
    gfc_alpha: float | None = None           # cost-growth certificate ratio
    constant_drift: tuple | None = None      # (beta, epsilon)


def _norm_v():
    return lambda x: np.linalg.norm(np.asarray(x, float), axis=-1)


def _exp_norm_v():
    return lambda x: np.exp(np.linalg.norm(np.asarray(x, float), axis=-1))


def analysis_plan(s: Scenario) -> Plan:
    """Pick the reference stabilizer and drift data for a scenario."""
    kind = s.cost.kind
    if kind == "quadratic":
        import scipy.linalg

        p = s.cost.params
        synth = riccati.synthesize_lq(s.system.A, s.system.B,
                                      np.asarray(p["Q"]), s.noise.covariance,
                                      alpha=p.get("alpha", 0.5))
        # largest ratio with c_s >= ratio * c_F everywhere: a generalized
        # eigenvalue against the scenario's own terminal matrix
        p_cost = np.asarray(p["P"], dtype=float)
        gamma = float(scipy.linalg.eigh(synth.Q, p_cost, eigvals_only=True)[0])
        return Plan(kind="lq", g=synth.policy(s.controls),
                    region=certify.EllipsoidRegion(synth.P, synth.K_set_level),
                    drift_V=synth.value(), lambda_circ=synth.lambda_circ,
                    beta=synth.beta, synthesis=synth,
                    gfc_alpha=min((1 - synth.alpha) * gamma, 0.999))

    d = s.system.state_dim
    A = s.system.A
    orthogonal = (s.system.kind == "linear-affine"
                  and np.linalg.norm(A.T @ A - np.eye(d)) <= 1e-10)
    if kind == "exponential" and orthogonal and s.noise.law == "gaussian":
        u_max = (s.controls.radius if s.controls.kind == "norm-ball"
                 else float(np.min(np.abs(s.controls.upper))))
        stab = make_ortho_stabilizer(A, s.system.B, s.noise, u_max)
        g = stab.feedback(s.controls) if stab.kappa == 1 else None
        return Plan(kind="ortho", g=g,
                    region=certify.BallRegion(stab.K_radius, d),
                    drift_V=_exp_norm_v(), lambda_circ=stab.lambda_circ,
                    synthesis=stab, gfc_alpha=1.0 - stab.lambda_circ)

    if kind == "indicator" and d == 1:
        h = float(s.cost.params.get("halfwidth", 2.0))
        return Plan(kind="saturation", g=scalar_sat_policy(s.controls),
                    region=certify.IntervalRegion(-h, h), drift_V=_norm_v(),
                    constant_drift=(1.0, 2.0), gfc_alpha=0.5)

    return Plan(kind="bare")


# ----------------------------------------------------------------------
# Pipeline stages
# ----------------------------------------------------------------------


def _interior_states(s: Scenario, margin: float = 3.0) -> np.ndarray:
    """Grid nodes at least ``margin`` standard deviations from the boundary."""
    h = s.hints
    if h.grid_min is None:
        return np.linspace(-5, 5, 201)[:, None]
    grid = dpsolve.Grid.regular(h.grid_min, h.grid_max, h.grid_points)
    pts = grid.points()
    if s.noise.law == "gaussian":
        sd = float(np.sqrt(np.max(np.linalg.eigvalsh(s.noise.covariance))))
    else:
        sd = float(np.abs(s.noise.samples).max())
    keep = np.all((pts >= grid.lower + margin * sd)
                  & (pts <= grid.upper - margin * sd), axis=1)
    return pts[keep]


def _stage_synth(ctx: dict) -> None:
    s: Scenario = ctx["scenario"]
    plan: Plan = ctx["plan"]
    rows = []
    if isinstance(plan.synthesis, riccati.LqSynthesis):
        sy = plan.synthesis
        rows.append({
            "scenario": s.name, "kind": "lq",
            "lambda_circ": sy.lambda_circ, "beta": sy.beta,
            "K_set_level": sy.K_set_level,
            "lyapunov_residual": sy.lyapunov_residual,
            "gain": float(sy.K_gain[0, 0]) if sy.K_gain.size == 1 else np.nan,
        })
    elif isinstance(plan.synthesis, OrthoStabilizer):
        st = plan.synthesis
        rows.append({
            "scenario": s.name, "kind": "ortho",
            "lambda_circ": st.lambda_circ, "rho": st.rho,
            "rho_first_moment": st.rho_first_moment,
            "K_radius": st.K_radius, "kappa": st.kappa, "U_max": st.U_max,
        })
    else:
        rows.append({"scenario": s.name, "kind": plan.kind})
    ctx["synthesis_rows"] = rows


def _stage_solve(ctx: dict) -> None:
    s: Scenario = ctx["scenario"]
    if s.hints.grid_min is None:
        raise ValidationError("scenario has no grid hints; cannot run the solver")
    table = dpsolve.solve_horizon(s)
    ctx["table"] = table
    ctx["value"] = table
    ctx["stage_policies"] = PolicySequence(tuple(table.stage_policies(s.controls)))
    ctx["rh_policy"] = dpsolve.extract_rh_policy(table, s.controls)


def _closed_form_value(ctx: dict) -> None:
    # quadratic scenarios admit the exact backward recursion
    s: Scenario = ctx["scenario"]
    plan: Plan = ctx["plan"]
    sy: riccati.LqSynthesis = plan.synthesis
    values, policies = riccati.finite_horizon_lq_value(
        sy.A, sy.B, (1 - sy.alpha) * sy.Q, sy.alpha * sy.R, sy.P, sy.Sigma,
        N=s.horizon)
    ctx["value"] = (values[0], policies[0])
    ctx["lq_values"] = values
    ctx["stage_policies"] = PolicySequence(tuple(policies))
    ctx["rh_policy"] = policies[0]


def _require_value(ctx: dict, optional: bool = False) -> bool:
    if "value" in ctx:
        return True
    if ctx["plan"].kind == "lq":
        _closed_form_value(ctx)
        return True
    if optional:
        return False
    raise ValidationError(
        "no value function available; run the 'solve' stage first")


def _grid_tolerance(plan: Plan, state_dim: int) -> float:
    # quadrature-exact closed forms get the tight tolerance; grid-backed
    # values carry the declared interpolation budget (coarser in 2-D)
    if plan.kind == "lq":
        return 1e-6
    return 5e-3 if state_dim == 1 else 5e-2


def _stage_certify(ctx: dict) -> None:
    s: Scenario = ctx["scenario"]
    plan: Plan = ctx["plan"]
    if plan.kind == "bare":
        raise ValidationError(
            f"no certification plan for scenario '{s.name}' "
            "(unrecognized cost family)")
    certs: list[certify.DriftCertificate] = []
    seed = ctx["manifest"].seed
    d = s.system.state_dim

    outer = float(np.min(np.abs(s.hints.grid_max))) if s.hints.grid_max is not None else 10.0
    if plan.g is not None:
        cert_cs, b = certify.check_cost_selection(s, plan.g, plan.region, outer=outer)
        certs.append(cert_cs)
        ctx["b"] = b

    # value-function certificates need V_N*: closed form for quadratic
    # scenarios, a solved table otherwise
    has_value = _require_value(ctx, optional=True)
    tol = _grid_tolerance(plan, d)
    if has_value and "b" in ctx:
        b = ctx["b"]
        states = (np.linspace(-8, 8, 1001)[:, None] if plan.kind == "lq"
                  else _interior_states(s))
        certs.append(certify.check_value_drift(s, ctx["value"], b, states, tol=tol))
        certs.append(certify.check_sandwich(s, ctx["value"], b, states, tol=tol))
    if s.cost.separable is not None and plan.gfc_alpha is not None and "b" in ctx:
        # hypothesis checks run even without a solved value function
        certs.append(certify.check_geometric_from_costs(
            s, plan.gfc_alpha, plan.region, ctx.get("value"), ctx["b"],
            tol=tol, outer=outer * 0.6))

    if plan.lambda_circ is not None:
        shell_n = 1000 if d == 1 else 200
        shell = plan.region.sample_shell(shell_n, outer)
        if plan.kind == "ortho" and (d > 1 or plan.g is None):
            # conditional Monte Carlo over one control block
            stab: OrthoStabilizer = plan.synthesis
            trb = certify.BlockTransition(s, stab, mc_samples=40_000, seed=seed)
            certs.append(certify.check_geometric_drift(
                trb, plan.drift_V, plan.lambda_circ, plan.region, shell))
        else:
            tr = certify.Transition(s, plan.g, "quadrature")
            certs.append(certify.check_geometric_drift(
                tr, plan.drift_V, plan.lambda_circ, plan.region, shell))

    if plan.constant_drift is not None:
        beta_c, eps = plan.constant_drift
        tr = certify.Transition(s, plan.g, "quadrature")
        shell = plan.region.sample_shell(256, outer)
        certs.append(certify.check_constant_drift(
            tr, plan.drift_V, beta_c, plan.region, eps, None, shell))

    ctx["certificates"] = certs


def _stage_simulate(ctx: dict) -> None:
    s: Scenario = ctx["scenario"]
    plan: Plan = ctx["plan"]
    man: RunManifest = ctx["manifest"]
    has_value = _require_value(ctx, optional=True)
    x0 = np.zeros(s.system.state_dim)

    if has_value:
        ens = montecarlo.simulate(s, ctx["rh_policy"], x0, man.steps,
                                  man.paths, seed=man.seed)
    elif plan.kind == "ortho":
        # no solved policy: simulate the block-stabilized loop instead
        ens = montecarlo.simulate_block(s, plan.synthesis, x0, man.steps,
                                        man.paths, seed=man.seed)
    else:
        raise ValidationError("nothing to simulate; run the 'solve' stage first")
    ctx["ensemble"] = ens

    if has_value:
        value_fn = (ctx["value"].value_fn(0)
                    if isinstance(ctx["value"], dpsolve.ValueTable)
                    else ctx["value"][0])
    else:
        value_fn = plan.drift_V
    seq = montecarlo.expected_lyapunov_sequence(ens, value_fn)
    ctx["sequence"] = seq

    if plan.lambda_circ is not None and plan.beta is not None and plan.g is not None:
        g_ens = montecarlo.simulate(s, plan.g, np.full(s.system.state_dim, 3.0),
                                    min(man.steps, 200), man.paths, seed=man.seed)
        ctx["envelope"] = montecarlo.check_drift_envelope(
            g_ens, plan.drift_V, plan.lambda_circ, plan.beta)

    norms = np.linalg.norm(ens.states[~ens.flagged], axis=-1)
    rmax = float(norms.max())
    radii = np.linspace(max(rmax / 50, 1e-3), rmax * 1.01, 50)
    t_pick = sorted({ens.horizon // 4, ens.horizon // 2, ens.horizon})
    ctx["tails"] = montecarlo.tail_estimate(ens, radii, times=t_pick)


def _stage_perf(ctx: dict) -> None:
    s: Scenario = ctx["scenario"]
    man: RunManifest = ctx["manifest"]
    if "ensemble" not in ctx:
        _stage_simulate(ctx)
    if "b" not in ctx:
        if ctx["plan"].g is None:
            raise ValidationError("no reference stabilizer; cannot bound the cost")
        outer = (float(np.min(np.abs(s.hints.grid_max)))
                 if s.hints.grid_max is not None else 10.0)
        _, ctx["b"] = certify.check_cost_selection(s, ctx["plan"].g, ctx["plan"].region,
                                       outer=outer)
    est = montecarlo.average_cost(ctx["ensemble"], ctx["b"])
    ctx["avg_cost"] = est
    ctx["cesaro"] = montecarlo.check_cesaro_condition(ctx["sequence"])

    plan = ctx["plan"]
    if "stage_policies" in ctx and plan.g is not None:
        value_fn = (ctx["value"].value_fn(0)
                    if isinstance(ctx["value"], dpsolve.ValueTable)
                    else ctx["value"][0])
        qd = 9 if plan.kind == "lq" else 61
        ctx["cost_bound"] = montecarlo.check_accumulated_cost_bound(
            s, value_fn, ctx["rh_policy"], ctx["stage_policies"], plan.g,
            np.zeros(s.system.state_dim), k_max=min(50, man.steps - 1),
            n_outer=min(man.paths, 500), n_inner=32, seed=man.seed,
            quad_degree=qd, b=ctx["b"])


_STAGE_FNS = {"synth": _stage_synth, "solve": _stage_solve,
              "certify": _stage_certify, "simulate": _stage_simulate,
              "perf": _stage_perf}


# ----------------------------------------------------------------------
# Output writers
# ----------------------------------------------------------------------


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    path.write_text(buf.getvalue(), encoding="utf-8")


def _write_outputs(ctx: dict, out: Path) -> None:
    man: RunManifest = ctx["manifest"]
    (out / "manifest.json").write_text(man.to_json() + "\n", encoding="utf-8")

    if "synthesis_rows" in ctx:
        rows = ctx["synthesis_rows"]
        keys = sorted({k for r in rows for k in r})
        _write_csv(out / "synthesis.csv", keys,
                   [[r.get(k, "") for k in keys] for r in rows])

    if "certificates" in ctx:
        s: Scenario = ctx["scenario"]
        buf = [certify.certificates_to_csv(ctx["certificates"]).splitlines()[0]
               + ",expected_failure"]
        body = certify.certificates_to_csv(ctx["certificates"]).splitlines()[1:]
        for line, cert in zip(body, ctx["certificates"]):
            expected = "yes" if cert.kind in s.expected_failures else "no"
            buf.append(line + f",{expected}")
        (out / "certificates.csv").write_text("\n".join(buf) + "\n", encoding="utf-8")

    if isinstance(ctx.get("table"), dpsolve.ValueTable):
        (out / "value_table.csv").write_text(ctx["table"].to_csv(), encoding="utf-8")

    if "sequence" in ctx:
        seq = ctx["sequence"]
        est = ctx.get("avg_cost")
        rows = []
        for i, (t, m, se) in enumerate(seq):
            ces = float(est.cesaro[i - 1]) if (est is not None and 0 < i <= est.cesaro.size) else ""
            rows.append([int(t), float(m), float(se), ces])
        _write_csv(out / "ensemble_summary.csv",
                   ["t", "mean_value", "stderr_value", "cesaro_cost"], rows)

    if "tails" in ctx:
        _write_csv(out / "tails.csv", ["t", "r", "p_hat", "wilson_lo", "wilson_hi"],
                   [[int(r[0]), *map(float, r[1:])] for r in ctx["tails"]])

    _write_report(ctx, out / "report.txt")
    _write_plots(ctx, out)


def _write_report(ctx: dict, path: Path) -> None:
    s: Scenario = ctx["scenario"]
    man: RunManifest = ctx["manifest"]
    lines = [f"scenario: {s.name}", f"seed: {man.seed}",
             f"stages: {','.join(man.stages)}", ""]
    for row in ctx.get("synthesis_rows", []):
        lines.append("synthesis constants:")
        for k, v in sorted(row.items()):
            lines.append(f"  {k} = {v:.12g}" if isinstance(v, float) else f"  {k} = {v}")
        if "rho" in row and "rho_first_moment" in row:
            lines.append(
                "  note: rho (log exponential moment) and rho_first_moment "
                "(log mean norm) differ; the drift constants use rho.")
        lines.append("")
    if "b" in ctx:
        lines.append(f"cost-drift bound b = {ctx['b']:.12g}")
        lines.append("")
    for cert in ctx.get("certificates", []):
        mark = " (expected failure)" if (not cert.verdict and
                                         cert.kind in s.expected_failures) else ""
        lines.append(cert.summary() + mark)
    if "envelope" in ctx:
        env = ctx["envelope"]
        lines.append(f"[{'pass' if env.verdict else 'FAIL'}] decay envelope: "
                     f"worst margin {env.margins.max():+.3e}")
    if "avg_cost" in ctx:
        est = ctx["avg_cost"]
        lines.append(f"[{'pass' if est.verdict else 'FAIL'}] average cost "
                     f"{est.final:.6g} +- {est.stderr:.2g} vs bound {est.bound:.6g} "
                     f"(stationary: {est.stationary})")
    if "cesaro" in ctx:
        ces = ctx["cesaro"]
        lines.append(f"[{'pass' if ces.verdict else 'FAIL'}] value growth slope "
                     f"{ces.slope:.3e} +- {ces.slope_se:.1e}")
    if "cost_bound" in ctx:
        t2 = ctx["cost_bound"]
        lines.append(f"[{'pass' if t2.verdict else 'FAIL'}] per-k cost bound, "
                     f"k <= {int(t2.k[-1])}, worst margin "
                     f"{(t2.margins - 3 * t2.stderr).max():+.3e}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_plots(ctx: dict, out: Path) -> None:
    if "sequence" not in ctx:
        return
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    def save(fig, name):
        fig.savefig(out / name, format="svg", metadata={"Date": None})
        plt.close(fig)

    seq = ctx["sequence"]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(seq.t, seq.mean, lw=1)
    ax.fill_between(seq.t, seq.mean - 3 * seq.stderr, seq.mean + 3 * seq.stderr,
                    alpha=0.3)
    ax.set_xlabel("t")
    ax.set_ylabel("mean value of V(x_t)")
    ax.set_title(f"value sequence under the receding-horizon loop "
                 f"({ctx['scenario'].name})")
    save(fig, "value_sequence.svg")

    if "avg_cost" in ctx:
        est = ctx["avg_cost"]
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(np.arange(1, est.cesaro.size + 1), est.cesaro, lw=1)
        ax.axhline(est.bound, color="tab:red", ls="--", label="bound b")
        ax.set_xlabel("k")
        ax.set_ylabel("running average stage cost")
        ax.legend()
        save(fig, "cesaro.svg")

    if "tails" in ctx:
        rows = ctx["tails"]
        fig, ax = plt.subplots(figsize=(6, 4))
        for t in np.unique(rows[:, 0]):
            sub = rows[rows[:, 0] == t]
            pos = sub[:, 2] > 0
            ax.semilogy(sub[pos, 1], sub[pos, 2], lw=1, label=f"t={int(t)}")
        ax.set_xlabel("r")
        ax.set_ylabel("P(|x_t| > r)")
        ax.legend()
        save(fig, "tails.svg")


# ----------------------------------------------------------------------
# Entry points
# ----------------------------------------------------------------------


def load_scenario(spec: str, seed: int, overrides: dict) -> Scenario:
    if spec in BUILTIN_NAMES:
        return builtin_scenario(spec, seed=seed, **overrides)
    path = Path(spec)
    if not path.exists():
        raise KeyError(
            f"unknown scenario {spec!r}; valid builtin names: "
            f"{', '.join(BUILTIN_NAMES)} (or pass a config file path)")
    cfg = json.loads(path.read_text(encoding="utf-8"))
    if "horizon" in overrides:
        cfg["horizon"] = int(overrides.pop("horizon"))
    solver = cfg.setdefault("solver", {})
    solver["seed"] = seed
    for key in ("grid_points", "control_points", "mc_samples", "quad_degree"):
        if key in overrides:
            solver[key] = overrides.pop(key)
    if overrides:
        raise ValidationError(
            f"overrides {sorted(overrides)} not supported for config files")
    return build_scenario(cfg)


def run(manifest: RunManifest) -> int:
    """Execute the pipeline; returns the process exit status."""
    out = Path(manifest.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    try:
        scenario = load_scenario(manifest.scenario, manifest.seed,
                                 dict(manifest.overrides))
    except KeyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_SCENARIO

    ctx: dict = {"scenario": scenario, "manifest": manifest,
                 "plan": analysis_plan(scenario)}
    requested = [st for st in STAGES if st in manifest.stages]
    if not requested:
        print(f"error: no valid stages in {manifest.stages}", file=sys.stderr)
        return EXIT_BAD_SCENARIO
    for stage in requested:
        try:
            _STAGE_FNS[stage](ctx)
        except Exception as exc:
            print(f"error in stage '{stage}': {exc}", file=sys.stderr)
            _write_outputs(ctx, out)
            return EXIT_STAGE_ERROR

    _write_outputs(ctx, out)

    failed = [c for c in ctx.get("certificates", [])
              if not c.verdict and c.kind not in scenario.expected_failures]
    for key in ("envelope", "avg_cost", "cesaro", "cost_bound"):
        if key in ctx and not ctx[key].verdict:
            failed.append(key)
    if failed:
        names = [getattr(f, "kind", f) for f in failed]
        print(f"failed checks: {names}", file=sys.stderr)
        return EXIT_CERT_FAILED
    return EXIT_OK


def _parse_overrides(pairs: list[str]) -> dict:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise argparse.ArgumentTypeError(f"--set expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        try:
            parsed = int(value)
        except ValueError:
            try:
                parsed = float(value)
            except ValueError:
                parsed = value
        out[key.strip()] = parsed
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rhstab",
        description="Receding-horizon stability and performance toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    runp = sub.add_parser("run", help="run the analysis pipeline")
    runp.add_argument("--scenario", required=True,
                      help=f"builtin name ({', '.join(BUILTIN_NAMES)}) or config path")
    runp.add_argument("--stages", default="all",
                      help="comma list from synth,solve,certify,simulate,perf or 'all'")
    runp.add_argument("--seed", type=int, default=0)
    runp.add_argument("--out", default="rhstab-out")
    runp.add_argument("--set", dest="overrides", action="append", default=[],
                      metavar="KEY=VALUE", help="scenario overrides")
    runp.add_argument("--paths", type=int, default=400,
                      help="simulation path count")
    runp.add_argument("--steps", type=int, default=2000,
                      help="simulation horizon")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    stages = tuple(STAGES) if args.stages == "all" else \
        tuple(t.strip() for t in args.stages.split(","))
    unknown = [t for t in stages if t not in STAGES]
    if unknown:
        print(f"error: unknown stage(s) {unknown}; valid: {', '.join(STAGES)}",
              file=sys.stderr)
        return EXIT_BAD_SCENARIO
    manifest = RunManifest(
        scenario=args.scenario, stages=stages, out_dir=args.out,
        seed=args.seed, overrides=_parse_overrides(args.overrides),
        paths=args.paths, steps=args.steps)
    return run(manifest)


if __name__ == "__main__":
    sys.exit(main())
