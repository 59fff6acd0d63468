"""Command-line interface: validate, evolve, replay, aggregate.

Exit codes: 0 on success, 1 on usage errors, 2 on runtime failures.
Configuration may come from a flat key=value file (--config); any key can
be overridden by the same-named command-line flag.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import cmaes, render, tasks
from .control import genome_size, load_genome, save_genome
from .tasks import (MORPHOLOGIES, EpisodeEvaluator, run_episode,
                    run_validation)

LARGE_ABLATION_NOTE = ("# genome length: 1344 for the large morphology "
                       "without pressure control, per the size formula "
                       "(n+1)*(3n+3) + (n+1) = 21*64; the sometimes-quoted "
                       "1334 is inconsistent with that formula and is not "
                       "used")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _read_config(path):
    values = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"malformed config line: {line!r}")
            key, value = line.split("=", 1)
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _merged(args, parser_defaults):
    """Apply config-file values under explicit command-line flags."""
    if not getattr(args, "config", None):
        return args
    config = _read_config(args.config)
    for key, raw in config.items():
        if not hasattr(args, key):
            raise UsageError(f"unknown config key: {key}")
        default = parser_defaults.get(key)
        if getattr(args, key) == default:  # not set on the command line
            current = default
            if isinstance(current, bool) or raw.lower() in ("true", "false"):
                value = raw.lower() == "true"
            elif isinstance(current, int):
                value = int(raw)
            elif isinstance(current, float):
                value = float(raw)
            else:
                value = raw
            setattr(args, key, value)
    return args


def _ensure_out(path):
    os.makedirs(path, exist_ok=True)
    return path


def cmd_validate(args):
    out_dir = _ensure_out(args.out)
    morphologies = [args.morphology] if args.morphology else list(MORPHOLOGIES)
    for name in morphologies:
        series = run_validation(name, duration_s=args.duration)
        path = os.path.join(out_dir, f"validate_{name}.csv")
        with open(path, "w") as fh:
            fh.write("t,rho,p_rel\n")
            for t, rho, p_rel in series:
                fh.write(f"{int(t)},{float(rho)!r},{float(p_rel)!r}\n")
        print(f"{name}: final rho {series[-1, 1]:.4f} -> {path}")
    return 0


def cmd_evolve(args):
    if args.morphology not in MORPHOLOGIES:
        raise UsageError(f"unknown morphology {args.morphology!r}")
    if args.task not in ("locomotion", "escape"):
        raise UsageError(f"unknown task {args.task!r}")
    out_dir = _ensure_out(args.out)
    config = MORPHOLOGIES[args.morphology]
    pressure_enabled = not args.no_pressure_control
    dim = genome_size(config.n_mass, pressure_enabled)
    evaluate = EpisodeEvaluator(args.task, args.morphology, pressure_enabled,
                                args.seed)
    result = cmaes.optimize(evaluate, dim, seed=args.seed, budget=args.budget,
                            parallelism=args.parallelism)
    genome_path = os.path.join(out_dir, "genome.txt")
    save_genome(genome_path, result.best_genome, config.n_mass,
                pressure_enabled)
    log_path = os.path.join(out_dir, "runlog.csv")
    result.log.write_csv(log_path)
    if config.n_mass == 20 and not pressure_enabled:
        with open(log_path) as fh:
            body = fh.read()
        with open(log_path, "w") as fh:
            fh.write(LARGE_ABLATION_NOTE + "\n" + body)
    print(f"best fitness {result.best_fitness!r} -> {genome_path}")
    return 0


def cmd_replay(args):
    theta, n_mass, pressure_enabled = load_genome(args.genome)
    config = MORPHOLOGIES[args.morphology]
    expected = genome_size(config.n_mass, pressure_enabled)
    if n_mass != config.n_mass or theta.size != expected:
        raise UsageError(
            f"genome/morphology mismatch: expected length {expected} for "
            f"{args.morphology} (n_mass {config.n_mass}), found {theta.size} "
            f"(n_mass {n_mass})")
    result = run_episode(args.task, args.morphology, theta, args.seed,
                         pressure_enabled, record_trajectory=True,
                         record_positions=args.render)
    out_dir = _ensure_out(args.out)
    traj_path = os.path.join(out_dir, "trajectory.csv")
    with open(traj_path, "w") as fh:
        fh.write("step,com_x,com_y,pressure,area\n")
        for step, com_x, com_y, pressure, area in result.trajectory:
            fh.write(f"{int(step)},{float(com_x)!r},{float(com_y)!r},"
                     f"{float(pressure)!r},{float(area)!r}\n")
    print(f"fitness {result.fitness!r} elapsed {result.elapsed} "
          f"solved {result.solved}")
    if args.render:
        frame_dir = _ensure_out(os.path.join(out_dir, "frames"))
        n = config.n_mass
        joints = [(i, (i + 1) % n) for i in range(n)]
        half_sides = np.full(n, 0.5)
        # One frame per stride, including the spawn state at step 0.
        for idx, step in enumerate(range(0, result.positions.shape[0],
                                         args.frame_stride)):
            frame_path = os.path.join(frame_dir, f"frame_{idx:05d}.svg")
            render.render_frame(
                frame_path, result.positions[step], half_sides, joints,
                result.segments,
                pressure=result.trajectory[step, 3],
                area=result.trajectory[step, 4])
        print(f"{idx + 1} frames -> {frame_dir}")
    return 0


def cmd_aggregate(args):
    logs = []
    for entry in args.runs:
        path = entry
        if os.path.isdir(path):
            path = os.path.join(path, "runlog.csv")
        logs.append(cmaes.RunLog.read_csv(path))
    if not logs:
        raise UsageError("no run logs given")
    n_gens = min(len(log.rows) for log in logs)
    bests = np.array([[log.rows[g][1] for log in logs] for g in range(n_gens)])
    evals = [logs[0].rows[g][0] for g in range(n_gens)]
    out_dir = _ensure_out(args.out)
    agg_path = os.path.join(out_dir, "aggregate.csv")
    with open(agg_path, "w") as fh:
        fh.write("evaluations,median_best,std_best\n")
        for g in range(n_gens):
            fh.write(f"{evals[g]},{float(np.median(bests[g]))!r},"
                     f"{float(np.std(bests[g]))!r}\n")
    finals_path = os.path.join(out_dir, "final_bests.csv")
    with open(finals_path, "w") as fh:
        fh.write("run,final_best\n")
        for i, log in enumerate(logs):
            fh.write(f"{i},{log.rows[-1][1]!r}\n")
    print(f"{len(logs)} runs -> {agg_path}")
    return 0


def build_parser():
    parser = _Parser(prog="pressoft",
                     description="Pressure-based soft agents: validation, "
                                 "evolution, replay, aggregation.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None,
                       help="flat key=value configuration file")
        p.add_argument("--out", default="out", help="output directory")

    p = sub.add_parser("validate", help="run the fixed inflation check")
    common(p)
    p.add_argument("--morphology", default=None,
                   choices=list(MORPHOLOGIES), help="default: all three")
    p.add_argument("--duration", type=float,
                   default=tasks.VALIDATION_DURATION_S,
                   help="simulated seconds")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("evolve", help="optimize a controller")
    common(p)
    p.add_argument("--task", default="locomotion",
                   choices=("locomotion", "escape"))
    p.add_argument("--morphology", default="small", choices=list(MORPHOLOGIES))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=int, default=cmaes.DEFAULT_BUDGET)
    p.add_argument("--no-pressure-control", action="store_true")
    p.add_argument("--parallelism", type=int, default=1)
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("replay", help="re-simulate a stored genome")
    common(p)
    p.add_argument("--genome", required=True)
    p.add_argument("--task", default="locomotion",
                   choices=("locomotion", "escape"))
    p.add_argument("--morphology", default="small", choices=list(MORPHOLOGIES))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--render", action="store_true")
    p.add_argument("--frame-stride", type=int, default=6)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("aggregate", help="summarize runs across seeds")
    common(p)
    p.add_argument("runs", nargs="+", help="run directories or runlog files")
    p.set_defaults(func=cmd_aggregate)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        defaults = {action.dest: action.default
                    for action in subparser._actions}
        args = _merged(args, defaults)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime/numeric failure
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
