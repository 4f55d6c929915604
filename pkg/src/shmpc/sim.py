"""Closed-loop simulator, open-loop benchmark, x0 sampling and the
random-system constraint-reduction study."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import mpc
from .blocking import BlockingVector, expand, lengths_from
from .condense import StageCache, TemplateSpec, build_template, inner_approximate
from .errors import EmptySetError, InfeasibleProblem, SamplingExhausted, \
    UnboundedSetError
from .geometry import HPolytope
from .mpc import ManeuverProblem
from .scenarios import HelicopterScenario, helicopter, random_planar_instance


@dataclass(frozen=True)
class ScenarioConfig:
    """What to simulate and how; the seed is recorded in every output."""

    scenario: str = "heli"
    seed: int = 0
    runs: int = 1
    modes: tuple = ("approx",)
    disturbance_policy: str = "uniform"   # or "vertex"
    scenario_kwargs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.disturbance_policy not in ("uniform", "vertex"):
            raise ValueError("disturbance_policy must be uniform or vertex")
        bad = set(self.modes) - set(mpc.MODES)
        if bad:
            raise ValueError(f"unknown modes: {sorted(bad)}")


@dataclass
class TrajectoryLog:
    """Per-step record of one closed-loop run."""

    mode: str
    seed: int
    run: int
    x_ref: np.ndarray
    steps: list = field(default_factory=list)   # dict per step
    x_final: np.ndarray | None = None
    arrived: bool = False
    violations: int = 0
    J: float = 0.0
    J_objective0: float = 0.0   # QP objective of the k=0 solve

    @property
    def solve_times(self) -> np.ndarray:
        return np.array([s["solve_time"] for s in self.steps])

    def to_rows(self):
        for s in self.steps:
            yield {
                "k": s["k"], "mode": self.mode, "seed": self.seed,
                "run": self.run,
                **{f"x{i}": v for i, v in enumerate(s["x"])},
                **{f"u{i}": v for i, v in enumerate(s["u"])},
                **{f"z{i}": v for i, v in enumerate(s["z0"])},
                "blocking": "-".join(str(v) for v in s["s"]),
                "stage_cost": s["stage_cost"],
                "solve_time": s["solve_time"],
                "status": s["status"],
            }

CSV_HEADER_DOC = """Trajectory CSV columns:
k: time step; mode/seed/run: identifiers; x0..x{n-1}: state; u0..u{m-1}:
applied input; z0..z{n-1}: nominal initial state of the step's plan;
blocking: dash-joined blocking vector; stage_cost: (x-x_r, u)' H (x-x_r, u);
solve_time: wall seconds around the QP setup+solve; status: solver status."""


def write_logs_csv(logs, path):
    path = Path(path)
    rows = [r for log in logs for r in log.to_rows()]
    if not rows:
        raise ValueError("no rows to write")
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def summarize_logs(logs) -> dict:
    out = {}
    for log in logs:
        entry = out.setdefault(log.mode, {"J": [], "solve_times": [],
                                          "arrived": 0, "violations": 0,
                                          "runs": 0})
        entry["J"].append(log.J)
        entry["solve_times"].extend(log.solve_times.tolist())
        entry["arrived"] += int(log.arrived)
        entry["violations"] += log.violations
        entry["runs"] += 1
    for mode, entry in out.items():
        times = np.array(entry.pop("solve_times"))
        entry["J_mean"] = float(np.mean(entry["J"]))
        entry["t_median"] = float(np.median(times))
        entry["t_mean"] = float(np.mean(times))
        entry["J"] = [float(v) for v in entry["J"]]
    return out


def stage_cost(problem: ManeuverProblem, x, u) -> float:
    xi = np.concatenate([np.asarray(x) - problem.x_ref, np.asarray(u)])
    return float(xi @ problem.H @ xi)


def terminal_cost(problem: ManeuverProblem, x) -> float:
    d = np.asarray(x) - problem.x_ref
    return float(d @ problem.tube.P_terminal @ d)


def trajectory_cost(problem: ManeuverProblem, xs, us) -> float:
    """Per-step cost of a realized or planned trajectory, static reference."""
    J = sum(stage_cost(problem, x, u) for x, u in zip(xs, us))
    return J + terminal_cost(problem, xs[-1])


def plan_cost(problem: ManeuverProblem, sol: mpc.QPSolution,
              s: BlockingVector) -> float:
    """Expand a blocked plan to per-step inputs and price it per-step."""
    m = problem.sys.m
    U = expand(sol.V_bar, s, m).reshape(s.horizon, m)
    xs = [sol.z0]
    for u in U:
        xs.append(problem.sys.A @ xs[-1] + problem.sys.B @ u)
    return trajectory_cost(problem, xs, U)


def build_stages(problem: ManeuverProblem, modes, cache_dir=None) -> StageCache:
    """Precompute every BlockStage the blocking dynamics can reach."""
    cache = problem.stage_cache(cache_dir)
    richest = "approx" if "approx" in modes else (
        "minimal" if "minimal" in modes else "raw")
    if any(m != "full" for m in modes):
        cache.build_all(lengths_from(problem.s0, problem.N_max), richest)
    return cache


def sample_x0(problem: ManeuverProblem, box_lower, box_upper,
              cache: StageCache, rng: np.random.Generator,
              mode: str = "approx", max_attempts: int = 1000):
    """Rejection-sample a feasible initial state from the given box.

    Feasibility means the k=0 QP (approx mode by default) solves. Returns
    (x0, acceptance_rate).
    """
    attempts = 0
    while attempts < max_attempts:
        attempts += 1
        x0 = rng.uniform(box_lower, box_upper)
        qp = mpc.assemble(problem, cache, x0, problem.s0, mode)
        try:
            mpc.solve(qp)
        except InfeasibleProblem:
            continue
        return x0, 1.0 / attempts
    raise SamplingExhausted(f"no feasible x0 in {max_attempts} draws")


def _disturbance_sequence(problem: ManeuverProblem, policy: str,
                          rng: np.random.Generator) -> np.ndarray:
    G = problem.W.generators
    N0 = problem.N0
    if G.shape[1] == 0:
        return np.zeros((N0, problem.sys.n))
    if policy == "uniform":
        xi = rng.uniform(-1.0, 1.0, size=(N0, G.shape[1]))
    else:
        xi = rng.choice([-1.0, 1.0], size=(N0, G.shape[1]))
    return xi @ G.T + problem.W.center


def run_closed_loop(problem: ManeuverProblem, cache: StageCache, mode: str,
                    x0, w_seq, seed: int, run: int) -> TrajectoryLog:
    """One maneuver from x0 under a fixed disturbance sequence."""
    log = TrajectoryLog(mode=mode, seed=seed, run=run, x_ref=problem.x_ref)
    state = mpc.initial_state(mode)
    x = np.asarray(x0, dtype=float).copy()
    J = 0.0
    for k in range(problem.N0):
        u, state = mpc.step(problem, cache, state, x)
        sc = stage_cost(problem, x, u)
        J += sc
        if not problem.F.contains(np.concatenate([x, u]), tol=1e-6):
            log.violations += 1
        log.steps.append({
            "k": k, "x": x.copy(), "u": u.copy(), "z0": state.prev.z0.copy(),
            "s": tuple(state.s) if state.s else (), "stage_cost": sc,
            "solve_time": state.prev.solve_time, "status": state.prev.status,
        })
        if k == 0:
            log.J_objective0 = state.prev.cost
        x = problem.sys.A @ x + problem.sys.B @ u + w_seq[k]
    log.x_final = x
    log.arrived = bool(problem.X_T.contains(x, tol=1e-6))
    log.J = J + terminal_cost(problem, x)
    return log


def simulate(config: ScenarioConfig, scenario: HelicopterScenario | None = None,
             cache_dir=None):
    """Closed-loop runs for every mode in the config.

    Every run draws one x0 and one disturbance sequence, shared across modes
    so that per-run comparisons are matched. Returns a list of TrajectoryLog.
    """
    scenario = scenario or helicopter(**config.scenario_kwargs)
    problem = scenario.problem
    cache = build_stages(problem, config.modes, cache_dir)
    logs = []
    for run in range(config.runs):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=config.seed, spawn_key=(run,)))
        x0, _ = sample_x0(problem, scenario.x0_box_lower,
                          scenario.x0_box_upper, cache, rng)
        w_seq = _disturbance_sequence(problem, config.disturbance_policy, rng)
        for mode in config.modes:
            logs.append(run_closed_loop(problem, cache, mode, x0, w_seq,
                                        config.seed, run))
    return logs


def plan_open_loop(config: ScenarioConfig,
                   scenario: HelicopterScenario | None = None,
                   cache_dir=None):
    """Cold k=0 solves per mode per sampled x0; returns per-mode J and t_c
    lists plus the x0 draws."""
    scenario = scenario or helicopter(**config.scenario_kwargs)
    problem = scenario.problem
    cache = build_stages(problem, config.modes, cache_dir)
    results = {mode: {"J": [], "t": [], "J_objective": []}
               for mode in config.modes}
    x0s = []
    for run in range(config.runs):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=config.seed, spawn_key=(run,)))
        x0, _ = sample_x0(problem, scenario.x0_box_lower,
                          scenario.x0_box_upper, cache, rng)
        x0s.append(x0)
        for mode in config.modes:
            s = (BlockingVector((1,) * problem.N0) if mode == "full"
                 else problem.s0)
            qp = mpc.assemble(problem, cache, x0, s, mode)
            sol = mpc.solve(qp)
            results[mode]["J"].append(plan_cost(problem, sol, s))
            results[mode]["J_objective"].append(sol.cost)
            results[mode]["t"].append(sol.solve_time)
    return results, x0s


@dataclass
class StudyReport:
    """Constraint-reduction study rows and aggregates."""

    rows: list = field(default_factory=list)
    seed: int = 0

    def add(self, instance: int, s: int, V_ratio, q_r_over_min, q_r_over_0,
            skipped: str = ""):
        self.rows.append({"instance": instance, "s": s,
                          "V_ratio": V_ratio, "q_r_over_min": q_r_over_min,
                          "q_r_over_0": q_r_over_0, "skipped": skipped})

    def aggregates(self) -> dict:
        out = {}
        svals = sorted({r["s"] for r in self.rows})
        for s in svals:
            ok = [r for r in self.rows if r["s"] == s and not r["skipped"]]
            skipped = [r for r in self.rows if r["s"] == s and r["skipped"]]
            if ok:
                V = np.array([r["V_ratio"] for r in ok])
                qm = np.array([r["q_r_over_min"] for r in ok])
                q0 = np.array([r["q_r_over_0"] for r in ok])
                out[s] = {
                    "count": len(ok), "skipped": len(skipped),
                    "V_ratio_mean": float(V.mean()),
                    "V_ratio_quartiles": [float(v) for v in
                                          np.percentile(V, [25, 50, 75])],
                    "q_r_over_min_mean": float(qm.mean()),
                    "q_r_over_0_mean": float(q0.mean()),
                }
            else:
                out[s] = {"count": 0, "skipped": len(skipped)}
        return out

    def to_csv(self, path):
        with Path(path).open("w", newline="") as fh:
            writer = csv.DictWriter(
                fh, fieldnames=["instance", "s", "V_ratio", "q_r_over_min",
                                "q_r_over_0", "skipped"])
            writer.writeheader()
            writer.writerows(self.rows)


def example1_study(count: int, s_values, seed: int,
                   mc_samples: int = 100_000) -> StudyReport:
    """Constraint reduction on random planar systems.

    Per instance and interval length: build the exact stacked set, its
    minimal representation and the template-scaled inner approximation, then
    record volume retention (shared-sample Monte Carlo) and halfspace ratios.
    Instances with empty sets or failed template LPs are skipped and logged.
    """
    from .condense import AugmentedSystem, block_constraints_exact
    from .geometry import remove_redundancy

    report = StudyReport(seed=seed)
    master = np.random.SeedSequence(entropy=seed)
    for idx, child in enumerate(master.spawn(count)):
        rng = np.random.default_rng(child)
        inst = random_planar_instance(rng)
        aug = AugmentedSystem.from_system(inst.sys)
        for s in s_values:
            try:
                F_raw = block_constraints_exact(inst.F, aug, s)
            except EmptySetError:
                report.add(idx, s, None, None, None, skipped="empty_exact")
                continue
            F_min = remove_redundancy(F_raw)
            try:
                templ = build_template(inst.F, aug, s, TemplateSpec.default(s))
                _, F_approx = inner_approximate(F_min, templ)
            except (EmptySetError, InfeasibleProblem, UnboundedSetError) as exc:
                report.add(idx, s, None, None, None,
                           skipped=type(exc).__name__)
                continue
            lower, upper = F_min.bounding_box()
            pts = rng.uniform(lower, upper, size=(mc_samples, F_min.dim))
            in_min = F_min.contains(pts)
            in_approx = F_approx.contains(pts)
            hits_min = int(np.count_nonzero(in_min))
            hits_approx = int(np.count_nonzero(in_approx & in_min))
            V_ratio = hits_approx / hits_min if hits_min else np.nan
            report.add(idx, s, V_ratio,
                       F_approx.num_halfspaces / F_min.num_halfspaces,
                       F_approx.num_halfspaces / F_raw.num_halfspaces)
    return report
