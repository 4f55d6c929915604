"""Command-line interface.

Subcommands: tube, stages, plan, simulate, study, report. Configuration is a
YAML file (see configs/heli.yaml and the schema in the README); `--config
heli` resolves to the built-in helicopter preset.

Exit codes: 0 success, 1 infeasibility-type failure, 2 bad input.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from .blocking import lengths_from
from .errors import InfeasibleProblem, SamplingExhausted, ShmpcError
from .scenarios import helicopter
from .sim import (
    ScenarioConfig,
    build_stages,
    example1_study,
    plan_open_loop,
    simulate,
    summarize_logs,
    write_logs_csv,
)

CONFIG_SCHEMA = """\
YAML config schema (all keys optional, shown with defaults):
  scenario: heli            # scenario name; only 'heli' is built in
  seed: 0                   # RNG seed, recorded in outputs
  runs: 1                   # closed-loop / open-loop run count
  modes: [approx]           # subset of [full, raw, minimal, approx]
  disturbance_policy: uniform   # uniform | vertex
  scenario_kwargs: {}       # forwarded to the scenario builder, e.g.
                            #   tube_pole: 0.96, tube_head: 60
"""


def load_config(spec: str | None, overrides: dict) -> ScenarioConfig:
    data = {}
    if spec and spec != "heli":
        path = Path(spec)
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {spec}")
        data = yaml.safe_load(path.read_text()) or {}
    data.update({k: v for k, v in overrides.items() if v is not None})
    if "modes" in data and isinstance(data["modes"], str):
        data["modes"] = [m.strip() for m in data["modes"].split(",")]
    data["modes"] = tuple(data.get("modes", ("approx",)))
    return ScenarioConfig(**data)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_tube(args) -> int:
    scenario = helicopter()
    out = _out_dir(args)
    path = out / "tube.json"
    path.write_text(scenario.problem.tube.to_json())
    Z = scenario.problem.tube.Z
    print(f"tube: {Z.order} generators, head {scenario.problem.tube.s_rpi}; "
          f"written to {path}")
    return 0


def cmd_stages(args) -> int:
    config = load_config(args.config, {"modes": args.mode, "seed": args.seed})
    scenario = helicopter(**config.scenario_kwargs)
    out = _out_dir(args)
    cache = build_stages(scenario.problem, config.modes, cache_dir=out)
    lengths = lengths_from(scenario.problem.s0, scenario.problem.N_max)
    print(f"cached {len(lengths)} stage lengths under {out}")
    return 0


def cmd_plan(args) -> int:
    config = load_config(args.config, {
        "modes": args.mode, "seed": args.seed, "runs": args.runs})
    results, x0s = plan_open_loop(config, cache_dir=args.cache)
    out = _out_dir(args)
    summary = {}
    for mode, data in results.items():
        summary[mode] = {
            "J_mean": float(np.mean(data["J"])),
            "t_median": float(np.median(data["t"])),
            "J": data["J"], "t": data["t"],
        }
    if "full" in summary:
        Jf = np.array(results["full"]["J"])
        for mode in summary:
            summary[mode]["J_over_Jfull_mean"] = float(
                np.mean(np.array(results[mode]["J"]) / Jf))
    payload = {"seed": config.seed, "runs": config.runs,
               "x0": [x.tolist() for x in x0s], "modes": summary}
    (out / "open_loop.json").write_text(json.dumps(payload, indent=2))
    for mode, data in summary.items():
        ratio = data.get("J_over_Jfull_mean")
        print(f"{mode:8s} J_mean={data['J_mean']:.2f} "
              f"t_median={data['t_median'] * 1e3:.2f} ms"
              + (f" J/J_full={ratio:.4f}" if ratio else ""))
    return 0


def cmd_simulate(args) -> int:
    config = load_config(args.config, {
        "modes": args.mode, "seed": args.seed, "runs": args.runs})
    logs = simulate(config, cache_dir=args.cache)
    out = _out_dir(args)
    write_logs_csv(logs, out / "trajectories.csv")
    summary = summarize_logs(logs)
    summary["seed"] = config.seed
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    for mode, data in summary.items():
        if mode == "seed":
            continue
        print(f"{mode:8s} arrived {data['arrived']}/{data['runs']} "
              f"violations={data['violations']} J_mean={data['J_mean']:.2f} "
              f"t_median={data['t_median'] * 1e3:.2f} ms")
    bad = [m for m, d in summary.items()
           if m != "seed" and d["arrived"] < d["runs"]]
    return 1 if bad else 0


def cmd_study(args) -> int:
    s_values = [int(v) for v in args.s.split(",")]
    report = example1_study(args.count, s_values, args.seed,
                            mc_samples=args.samples)
    out = _out_dir(args)
    report.to_csv(out / "study.csv")
    agg = report.aggregates()
    (out / "study_summary.json").write_text(json.dumps(
        {"seed": args.seed, "aggregates": {str(k): v for k, v in agg.items()}},
        indent=2))
    for s, data in agg.items():
        if data["count"]:
            print(f"s={s:3d} n={data['count']:3d} skipped={data['skipped']} "
                  f"V_ratio={data['V_ratio_mean']:.3f} "
                  f"q_r/q_min={data['q_r_over_min_mean']:.3f} "
                  f"q_r/q_0={data['q_r_over_0_mean']:.3f}")
        else:
            print(f"s={s:3d} all {data['skipped']} instances skipped")
    return 0


def cmd_report(args) -> int:
    rows = []
    for path in args.inputs:
        with open(path) as fh:
            import csv as _csv
            rows.extend(_csv.DictReader(fh))
    if not rows:
        print("no rows found", file=sys.stderr)
        return 2
    by_mode = {}
    for r in rows:
        entry = by_mode.setdefault(r["mode"], {"J": 0.0, "t": [], "steps": 0})
        entry["t"].append(float(r["solve_time"]))
        entry["J"] += float(r["stage_cost"])
        entry["steps"] += 1
    out = {m: {"stage_cost_sum": d["J"], "steps": d["steps"],
               "t_median": float(np.median(d["t"]))}
           for m, d in by_mode.items()}
    text = json.dumps(out, indent=2)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "report.json").write_text(text)
    print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shmpc",
        description="Tube-based shrinking-horizon MPC with move blocking",
        epilog=CONFIG_SCHEMA,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, runs_default=None):
        p.add_argument("--config", default="heli",
                       help="'heli' or a YAML config path")
        p.add_argument("--mode", default=None,
                       help="comma-separated mode list")
        p.add_argument("--seed", type=int, default=None)
        if runs_default is not None:
            p.add_argument("--runs", type=int, default=runs_default)
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--cache", default=None, help="stage cache directory")

    p = sub.add_parser("tube", help="compute and serialize the tube design")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_tube)

    p = sub.add_parser("stages", help="precompute block-stage caches")
    common(p)
    p.set_defaults(func=cmd_stages)

    p = sub.add_parser("plan", help="open-loop benchmark at k=0")
    common(p, runs_default=5)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="closed-loop simulation")
    common(p, runs_default=3)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("study", help="random-system constraint-reduction study")
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--s", default="10,20,30")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("report", help="aggregate trajectory CSVs")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (InfeasibleProblem, SamplingExhausted) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, ValueError, TypeError) as exc:
        print(f"bad input: {exc}", file=sys.stderr)
        print(CONFIG_SCHEMA, file=sys.stderr)
        return 2
    except ShmpcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
