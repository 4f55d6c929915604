"""Tube-based shrinking-horizon MPC with time-varying move blocking and
LP-based constraint-set reduction."""

from .blocking import (
    BlockingTransition,
    BlockingVector,
    TransitionKind,
    advance,
    choose_split,
    expand,
    split,
    to_matrix,
    warm_start,
)
from .condense import (
    ApproxSolution,
    AugmentedSystem,
    BlockStage,
    StageCache,
    TemplateSpec,
    block_constraints_exact,
    block_cost,
    block_dynamics,
    build_template,
    inner_approximate,
)
from .geometry import (
    ContainmentCertificate,
    HPolytope,
    Zonotope,
    check_containment,
    erode,
    intersect,
    mc_volume,
    preimage,
    remove_redundancy,
    zonotope_in_zonotope,
)
from .mpc import (
    ControllerState,
    ManeuverProblem,
    QPData,
    QPSolution,
    assemble,
    control,
    initial_state,
    solve,
    step,
)
from .scenarios import HelicopterScenario, helicopter, random_planar_instance
from .sim import (
    ScenarioConfig,
    StudyReport,
    TrajectoryLog,
    example1_study,
    plan_open_loop,
    sample_x0,
    simulate,
)
from .tube import (
    LTISystem,
    TubeDesign,
    compute_rpi,
    dlqr,
    reduced_rpi,
    rpi_certificate,
    tighten,
)

__version__ = "0.1.0"
