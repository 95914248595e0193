"""Operator CLI.

Subcommands: physics (power-rate calculator), train (run the configured
experiment), sweep (same with a worker pool), eval (greedy or fixed-epsilon
evaluation of a checkpoint), oracle (exhaustive optimum on a tiny instance),
export (re-derive metrics CSV/summary from persisted episode records).

Data goes to stdout, diagnostics to stderr; exit code 0 on success, 2 on
validation/usage errors, 1 on runtime failures. The DRONEMISSION_OUT
environment variable roots relative output directories.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import dqn, energy, experiments, oracle, world
from .dqn import EpsilonSchedule
from .experiments import ExperimentSpec, Mission, SweepPoint
from .world import Action, GridConfig, RewardCoefs


def _fail(message: str, code: int = 2) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _resolve_out(out_dir: str) -> Path:
    path = Path(out_dir)
    if path.is_absolute():
        return path
    root = os.environ.get("DRONEMISSION_OUT", ".")
    return Path(root) / path


# ---------------------------------------------------------------------------
# physics
# ---------------------------------------------------------------------------

def cmd_physics(args) -> int:
    params = energy.PhysicsParams(
        rotor_diameter_m=args.rotor_diameter,
        drone_mass_kg=args.mass,
        ground_speed_mps=args.speed,
        pitch_angle_rad=args.pitch,
        power_efficiency=args.eta,
        air_density_kgpm3=args.rho,
        rotor_count=args.rotors,
        drag_force_N=args.drag,
        gravity_mps2=args.gravity,
    )
    try:
        params.validate()
        v_s = energy.solve_induced_velocity(params)
        hover = energy.hover_power(params)
        forward = energy.forward_power(params, v_s)
    except (ValueError, energy.SolverError) as err:
        return _fail(str(err))
    scaled = energy.scaled_rates()
    print(f"induced velocity v_s: {v_s:.10f} m/s")
    print(f"physical hover power: {hover:.10f} per time step")
    print(f"physical forward power: {forward:.10f} per time step")
    print(f"scaled rates: hover={scaled.hover:g} forward={scaled.forward:g} "
          f"facilities={scaled.facilities:g}")
    return 0


# ---------------------------------------------------------------------------
# train / sweep
# ---------------------------------------------------------------------------

def _load_effective_config(args) -> config_mod.RunConfig:
    cfg = config_mod.load_config(args.config) if args.config \
        else config_mod.default_config()
    if args.set:
        cfg = config_mod.apply_overrides(cfg, args.set)
    if getattr(args, "out", None):
        cfg = replace(cfg, output_dir=args.out)
    if getattr(args, "episodes", None) is not None:
        cfg = replace(cfg, experiment=replace(cfg.experiment,
                                              episodes=args.episodes))
    if getattr(args, "seeds", None):
        cfg = replace(cfg, experiment=replace(
            cfg.experiment, seeds=tuple(int(s) for s in args.seeds.split(","))))
    return cfg


def _run_training(args, jobs: int) -> int:
    try:
        cfg = _load_effective_config(args)
    except (config_mod.ConfigError, experiments.ExperimentConfigError,
            ValueError) as err:
        return _fail(str(err))
    out_dir = _resolve_out(cfg.output_dir)
    try:
        manifest = config_mod.write_manifest(cfg, out_dir)
        if getattr(args, "resume", None):
            return _resume_training(cfg, out_dir, Path(args.resume))
        experiments.run_experiment(cfg.experiment, out_dir, jobs=jobs)
    except OSError as err:
        return _fail(f"cannot write results: {err}", code=1)
    print(f"manifest: {manifest}")
    print(f"metrics: {out_dir / 'metrics.csv'}")
    print(f"summary: {out_dir / 'summary.json'}")
    return 0


def _resume_training(cfg: config_mod.RunConfig, out_dir: Path,
                     checkpoint: Path) -> int:
    spec = cfg.experiment
    points = experiments.sweep_points(spec)
    if len(points) != 1 or len(spec.seeds) != 1:
        return _fail("--resume needs a config resolving to exactly one "
                     "sweep point and one seed")
    try:
        agents, global_step, schedule = dqn.load_checkpoint(checkpoint)
    except (OSError, ValueError) as err:
        return _fail(f"cannot load checkpoint: {err}")
    if schedule != spec.epsilon:
        print("note: config epsilon schedule differs from checkpoint; "
              "using the checkpoint schedule", file=sys.stderr)
        spec = replace(spec, epsilon=schedule)
    point, seed = points[0], spec.seeds[0]
    result = experiments.run_point(spec, point, seed,
                                   resume=(agents, global_step))
    experiments.write_records(result, out_dir)
    ckpt = out_dir / "checkpoints" / experiments.run_slug(point, seed)
    dqn.save_checkpoint(result.agents, ckpt, result.global_step, spec.epsilon)
    experiments._write_eval_context(spec, point, seed, ckpt)
    payloads = [experiments.read_records(
        out_dir / "records" / f"{experiments.run_slug(point, seed)}.json")]
    experiments.write_metrics_csv(payloads, spec.window,
                                  out_dir / "metrics.csv")
    experiments.write_summary(payloads, spec.window, out_dir / "summary.json")
    print(f"resumed from step {global_step}; metrics: {out_dir / 'metrics.csv'}")
    return 0


def cmd_train(args) -> int:
    return _run_training(args, jobs=1)


def cmd_sweep(args) -> int:
    return _run_training(args, jobs=max(1, args.jobs))


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def cmd_eval(args) -> int:
    if args.episodes < 1:
        return _fail("--episodes must be >= 1")
    if not 0.0 <= args.epsilon <= 1.0:
        return _fail("--epsilon must be in [0, 1]")
    ckpt = Path(args.checkpoint)
    try:
        agents, _, _ = dqn.load_checkpoint(ckpt)
        ctx = json.loads((ckpt / "mission.json").read_text())
    except (OSError, ValueError) as err:
        return _fail(f"cannot load checkpoint: {err}")

    grid = GridConfig(**ctx["grid"])
    coefs = RewardCoefs(**ctx["reward"])
    point = SweepPoint(**ctx["point"])
    spec = ExperimentSpec(
        kind="geometry", grid=grid, reward=coefs, task_count=point.task_count,
        length_mode=point.length_mode, location_mode=point.location_mode,
        fixed_locations=tuple(ctx["fixed_locations"]),
        fixed_length=ctx["fixed_length"], length_low=ctx["length_low"],
        length_high=ctx["length_high"], seeds=(args.seed,),
    )
    fixed_eps = EpsilonSchedule(start=args.epsilon, decrement_per_step=0.0,
                                floor=args.epsilon)
    root = np.random.SeedSequence([args.seed, 7_919])  # distinct from training
    env_ss, *act_ss = root.spawn(1 + len(agents))
    env_rng = np.random.default_rng(env_ss)
    rngs = [np.random.default_rng(ss) for ss in act_ss]

    records = []
    for i in range(args.episodes):
        tasks = experiments.generate_tasks(point, spec, env_rng)
        mission = Mission(grid, energy.scaled_rates(), coefs, tasks)
        records.append(experiments.run_episode(
            mission, agents, rngs, fixed_eps, 0, episode_index=i, learn=False))
    avg = experiments.avg_success_reward(records)
    print(json.dumps({
        "episodes": args.episodes,
        "epsilon": args.epsilon,
        "success_rate": experiments.success_rate(records),
        "avg_success_reward": avg,
        "mean_steps": sum(r.steps_used for r in records) / len(records),
    }, indent=2))
    return 0


# ---------------------------------------------------------------------------
# oracle
# ---------------------------------------------------------------------------

def _parse_tasks(text: str) -> list[tuple[int, int]]:
    tasks = []
    for item in text.split(","):
        loc, _, length = item.partition(":")
        tasks.append((int(loc), int(length or "1")))
    return tasks


def cmd_oracle(args) -> int:
    try:
        tasks = _parse_tasks(args.tasks)
    except ValueError:
        return _fail(f"cannot parse --tasks {args.tasks!r}; "
                     "expected LOC:LEN[,LOC:LEN...]")
    grid = GridConfig(side_points=args.grid_side, base_index=args.base,
                      battery_capacity=args.battery,
                      episode_length=args.episode_length)
    drones = args.drones if args.drones else len(tasks)
    coefs = RewardCoefs(gamma_coef=args.gamma_coef, beta_coef=args.beta_coef)
    try:
        result = oracle.solve_exhaustive(grid, tasks, drones, args.horizon,
                                         coefs)
    except oracle.SearchBudgetError as err:
        return _fail(str(err))
    except world.WorldConfigError as err:
        return _fail(str(err))
    print(json.dumps({
        "best_accumulated_reward": result.best_accumulated_reward,
        "best_action_sequences": [[a.name for a in seq]
                                  for seq in result.best_action_sequences],
        "explored_nodes": result.explored_nodes,
    }, indent=2))
    return 0


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def cmd_export(args) -> int:
    run_dir = Path(args.run)
    rec_dir = run_dir / "records"
    if not rec_dir.is_dir():
        return _fail(f"no records directory under {run_dir}")
    window = args.window
    if window is None:
        manifest = run_dir / "manifest.json"
        if manifest.exists():
            cfg = config_mod.from_json_dict(json.loads(manifest.read_text()))
            window = cfg.experiment.window
        else:
            return _fail("no manifest found; pass --window explicitly")
    try:
        payloads = [experiments.read_records(p)
                    for p in sorted(rec_dir.glob("*.json"))]
    except (OSError, ValueError) as err:
        return _fail(f"cannot read records: {err}", code=1)
    if not payloads:
        return _fail("no record files to export")
    out_csv = Path(args.out) if args.out else run_dir / "metrics.csv"
    experiments.write_metrics_csv(payloads, window, out_csv)
    experiments.write_summary(payloads, window,
                              out_csv.with_name("summary.json"))
    print(f"metrics: {out_csv}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dronemission",
        description="Drone mission simulator and multi-agent DQN trainer")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("physics", help="print power rates from airframe parameters")
    p.add_argument("--rotor-diameter", type=float, default=0.254)
    p.add_argument("--mass", type=float, default=2.07)
    p.add_argument("--speed", type=float, default=10.0)
    p.add_argument("--pitch", type=float, default=0.0139)
    p.add_argument("--eta", type=float, default=0.7)
    p.add_argument("--rho", type=float, default=1.2193)
    p.add_argument("--rotors", type=int, default=4)
    p.add_argument("--drag", type=float, default=0.0)
    p.add_argument("--gravity", type=float, default=9.81)
    p.set_defaults(func=cmd_physics)

    for name, help_text in (("train", "run the configured experiment"),
                            ("sweep", "run the experiment grid with workers")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, help="config or manifest JSON")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--episodes", type=int,
                       help="episode cap per run (overrides config)")
        p.add_argument("--seeds", help="comma-separated seed list")
        p.add_argument("--set", action="append", default=[],
                       metavar="KEY=VALUE", help="dotted-path config override")
        if name == "train":
            p.add_argument("--resume", help="checkpoint directory to resume from")
            p.set_defaults(func=cmd_train)
        else:
            p.add_argument("--jobs", type=int, default=1)
            p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("eval", help="evaluate a checkpoint without learning")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--epsilon", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("oracle", help="exhaustive optimum on a tiny instance")
    p.add_argument("--grid-side", type=int, default=3)
    p.add_argument("--base", type=int, default=0)
    p.add_argument("--battery", type=float, default=1800.0)
    p.add_argument("--episode-length", type=int, default=600)
    p.add_argument("--tasks", required=True, metavar="LOC:LEN[,LOC:LEN...]")
    p.add_argument("--drones", type=int, default=0,
                   help="drone count (defaults to task count)")
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--gamma-coef", type=float, default=1.0)
    p.add_argument("--beta-coef", type=float, default=1.0)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("export", help="re-derive metrics from episode records")
    p.add_argument("--run", required=True, help="run directory")
    p.add_argument("--window", type=int)
    p.add_argument("--out", help="CSV path (default <run>/metrics.csv)")
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
