"""Command-line entry points: simulate, sweep, report."""
from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .config import ConfigError, SimConfig, dumps, load_config, resolve
from .engine import World
from .metrics import HEADER, read_csv, summarize, write_csv

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

SWEEP_COLUMNS = ("param", "value", "seed", "episodes", "mean_cum_reward", "final_cum_reward",
                 "final_residual_pct", "throughput_pct", "convergence_episode", "delivered",
                 "dropped", "injected")


class RunError(RuntimeError):
    pass


def _base_config(args) -> SimConfig:
    if args.config:
        cfg = load_config(args.config, args.scenario)
    elif args.scenario:
        cfg = SimConfig(scenario=load_config(args.scenario).scenario)
    else:
        cfg = SimConfig()
    if args.seed is not None:
        cfg = cfg.replace("sim.seed", args.seed)
    if args.episodes is not None:
        cfg = cfg.replace("sim.episodes", args.episodes)
    if args.baseline is not None:
        cfg = cfg.replace("sim.baseline", args.baseline)
    return resolve(cfg)


def run_to_dir(cfg: SimConfig, out_dir: Path) -> dict:
    """Run one simulation and write metrics.csv, summary.json and config.resolved."""
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise RunError(f"cannot create {out_dir}: {exc.strerror}") from None
    world = World(cfg)
    rows = world.run()
    summary = summarize(rows, cfg.sim.num_uavs * cfg.energy.initial_j, world.injected)
    summary["mean_cum_reward"] = sum(r.cum_reward for r in rows) / len(rows)
    summary["seed"] = cfg.sim.seed
    summary["baseline"] = cfg.sim.baseline
    try:
        write_csv(out_dir / "metrics.csv", rows)
        (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        (out_dir / "config.resolved").write_text(dumps(cfg))
    except OSError as exc:
        raise RunError(f"cannot write to {out_dir}: {exc.strerror}") from None
    return summary


def cmd_simulate(args) -> int:
    cfg = _base_config(args)
    out = Path(args.out)
    s = run_to_dir(cfg, out)
    print(f"wrote {out / 'metrics.csv'}: {s['episodes']} episodes, delivered {s['delivered']}/"
          f"{s['injected']}, residual {s['final_residual_pct']:.2f}%, "
          f"convergence episode {s['convergence_episode']}")
    return EXIT_OK


def _cell_name(param: str, value: str, seed: int) -> str:
    return f"{param}={value}/seed={seed}"


def _sweep_cell(job) -> dict:
    cfg, out_dir = job
    return run_to_dir(cfg, Path(out_dir))


def cmd_sweep(args) -> int:
    base = _base_config(args)
    seeds = args.seeds if args.seeds else [base.sim.seed]
    out = Path(args.out)
    # build (and validate) every cell before starting any run
    jobs, labels = [], []
    for value in args.values:
        cfg_v = base.replace(args.param, value)
        for seed in seeds:
            cfg = resolve(cfg_v.replace("sim.seed", seed))
            jobs.append((cfg, str(out / _cell_name(args.param, value, seed))))
            labels.append((value, seed))
    if args.parallelism > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(args.parallelism, len(jobs))) as pool:
            results = list(pool.map(_sweep_cell, jobs))
    else:
        results = [_sweep_cell(j) for j in jobs]
    # merge in job order so the table does not depend on scheduling
    try:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "sweep.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SWEEP_COLUMNS)
            for (value, seed), s in zip(labels, results):
                w.writerow([args.param, value, seed, s["episodes"], repr(s["mean_cum_reward"]),
                            repr(s["final_cum_reward"]), repr(s["final_residual_pct"]),
                            repr(s["throughput_pct"]), s["convergence_episode"], s["delivered"],
                            s["dropped"], s["injected"]])
    except OSError as exc:
        raise RunError(f"cannot write {out / 'sweep.csv'}: {exc.strerror}") from None
    print(f"wrote {out / 'sweep.csv'}: {len(jobs)} runs")
    return EXIT_OK


def _initial_energy(run_dir: Path) -> float:
    resolved = run_dir / "config.resolved"
    if resolved.exists():
        cfg = load_config(resolved)
        return cfg.sim.num_uavs * cfg.energy.initial_j
    return SimConfig().sim.num_uavs * SimConfig().energy.initial_j


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    path = run_dir / "metrics.csv"
    if not path.exists():
        raise RunError(f"{path}: no such file")
    try:
        rows = read_csv(path)
    except ValueError as exc:
        raise RunError(f"corrupt metrics file: {exc}") from None
    if not rows:
        raise RunError(f"{path}: no rows")
    injected = None
    summary_path = run_dir / "summary.json"
    if summary_path.exists():
        try:
            injected = json.loads(summary_path.read_text()).get("injected")
        except json.JSONDecodeError:
            injected = None
    s = summarize(rows, _initial_energy(run_dir), injected)
    print(f"convergence episode: {s['convergence_episode']}")
    print(f"residual energy retention: {s['final_residual_pct']:.2f}%")
    print(f"throughput: {s['throughput_pct']:.2f}%")
    long_path = Path(args.out) if args.out else run_dir / "report.csv"
    try:
        with open(long_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("episode", "metric", "value"))
            for r in rows:
                for name in HEADER[1:]:
                    v = getattr(r, name)
                    w.writerow((r.episode, name, repr(v) if isinstance(v, float) else v))
    except OSError as exc:
        raise RunError(f"cannot write {long_path}: {exc.strerror}") from None
    print(f"wrote {long_path}")
    return EXIT_OK


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML config file (defaults apply for absent keys)")
    p.add_argument("--scenario", help="TOML file whose [[scenario.event]] tables replace the config's")
    p.add_argument("--seed", type=int)
    p.add_argument("--episodes", type=int)
    p.add_argument("--baseline", choices=("iqmr", "plain-q"))
    p.add_argument("--out", default="run", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="iqmr", description="UAV swarm Q-learning routing simulator")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("simulate", help="run one simulation")
    _add_run_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="run a parameter sweep over values x seeds")
    _add_run_flags(p)
    p.add_argument("--param", required=True, help="dotted config key, e.g. rl.epsilon")
    p.add_argument("--values", nargs="+", required=True, help="values to sweep")
    p.add_argument("--seeds", nargs="+", type=int, default=[])
    p.add_argument("--parallelism", "-j", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="summarise a finished run")
    p.add_argument("run_dir")
    p.add_argument("--out", help="long-format CSV path (default RUN_DIR/report.csv)")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RunError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
