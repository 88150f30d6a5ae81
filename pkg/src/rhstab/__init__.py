"""Stochastic receding-horizon control toolkit.

Synthesizes receding-horizon policies from finite-horizon optimal control
problems, certifies closed-loop stability through Markov-chain drift
conditions, and checks long-run expected-average-cost bounds by seeded
Monte Carlo.
"""

from .models import (
    BUILTIN_NAMES,
    ControlSet,
    CostSpec,
    NoiseModel,
    Scenario,
    SolverHints,
    SystemModel,
    ValidationError,
    build_scenario,
    builtin_scenario,
    eval_stage_cost,
)
from .policy import (
    InsufficientControlAuthority,
    OrthoStabilizer,
    PolicySequence,
    RecedingHorizonPolicy,
    StagePolicy,
    concat,
    make_ortho_stabilizer,
    ortho_control_block,
    sat_radial,
    scalar_sat_policy,
)
from .riccati import (
    LqSynthesis,
    QuadraticValue,
    finite_horizon_lq_value,
    solve_lyapunov,
    synthesize_lq,
)
from .dpsolve import Grid, ValueTable, bellman_backup, extract_rh_policy, solve_horizon
from .certify import (
    BallRegion,
    DriftCertificate,
    EllipsoidRegion,
    IntervalRegion,
    Transition,
    BlockTransition,
    check_cost_selection,
    check_constant_drift,
    check_geometric_drift,
    check_geometric_from_costs,
    check_sandwich,
    check_value_drift,
)
from .montecarlo import (
    AverageCostEstimate,
    TrajectoryEnsemble,
    average_cost,
    check_cesaro_condition,
    check_drift_envelope,
    check_accumulated_cost_bound,
    expected_lyapunov_sequence,
    simulate,
    simulate_block,
    tail_estimate,
)

__version__ = "0.1.0"
