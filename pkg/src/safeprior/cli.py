"""Command line entry point: ``safeprior <command> [options]``.

Every command writes its resolved configuration to ``<out>/config.txt``;
``safeprior <command> --config <out>/config.txt`` repeats the run.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

from . import experiments as ex
from .analysis import evaluate_prior, selection_precision, td_error_trace
from .config import ConfigError, ExperimentConfig, load_config, parse_seeds
from .gridworld import COLLISION_REWARD, GOAL_REWARD, MapParseError, load_map, with_goal
from .mdp import load_qtable, save_qtable
from .prior import load_prior_table, save_prior, threshold_bounds

log = logging.getLogger("safeprior")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_CHECK = 0, 1, 2, 3


def _out(cfg: ExperimentConfig, command: str) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(f"# safeprior {command}\n" + cfg.to_text())
    return out


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue())


def _sources_dir(cfg: ExperimentConfig) -> Path:
    return Path(cfg.sources_dir) if cfg.sources_dir else Path(cfg.out) / "sources"


def _load_sources(cfg: ExperimentConfig):
    d = _sources_dir(cfg)
    paths = [d / f"{g}.qtable" for g in cfg.goals]
    missing = [str(p) for p in paths if not p.exists()]
    if missing:
        raise ConfigError(f"missing source tables: {', '.join(missing)} (run train-sources first)")
    if len(paths) < 2:
        raise ConfigError("prior learning needs at least two source goals")
    return [load_qtable(p) for p in paths]


def _prior_path(cfg: ExperimentConfig) -> Path:
    return Path(cfg.prior_path) if cfg.prior_path else Path(cfg.out) / "prior.qtable"


def cmd_train_sources(cfg: ExperimentConfig) -> int:
    env = load_map(cfg.map)
    for g in cfg.goals:
        with_goal(env, g)  # reject bad goals before any training
    out = _out(cfg, "train-sources")
    d = _sources_dir(cfg)
    d.mkdir(parents=True, exist_ok=True)
    tables, logs, ok = ex.train_source_tables(env, cfg.goals, cfg.source_config(),
                                              cfg.source_seed, cfg.jobs)
    rows = []
    for g, q, run, good in zip(cfg.goals, tables, logs, ok):
        save_qtable(q, d / f"{g}.qtable")
        run.save(d / f"{g}.csv")
        rows.append((g, len(run), int(good)))
        log.info("source %s: %d episodes, converged=%s", g, len(run), good)
    _write_csv(out / "sources.csv", ("goal", "episodes", "converged"), rows)
    if not all(ok):
        bad = [g for g, good in zip(cfg.goals, ok) if not good]
        print(f"error: greedy policy misses the goal from some start for: {', '.join(bad)}",
              file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_learn_prior(cfg: ExperimentConfig) -> int:
    env = load_map(cfg.map)
    sources = _load_sources(cfg)
    hi = threshold_bounds(COLLISION_REWARD, GOAL_REWARD)[1]
    if cfg.threshold_t > hi:
        log.warning("threshold_t=%g exceeds the bound %g: no pair can be selected",
                    cfg.threshold_t, hi)
    out = _out(cfg, "learn-prior")
    prior, run = ex.learn_prior(env, sources, cfg)
    path = _prior_path(cfg)
    save_prior(prior, path, [str(_sources_dir(cfg) / f"{g}.qtable") for g in cfg.goals])
    run.save(out / "prior_td.csv")
    report = {"selected_pairs": len(prior.selected_pairs(env.open_states))}
    if cfg.mode == "avoid":
        ev = evaluate_prior(prior.q_p, env)
        precision, _, _ = selection_precision(prior, env)
        report.update(n_FP=ev.counts.n_FP, n_FN=ev.counts.n_FN, n_I=ev.counts.n_I,
                      correctness=ev.correctness, selection_precision=precision)
    (out / "prior_report.json").write_text(json.dumps(report, indent=2) + "\n")
    print(json.dumps(report))
    return EXIT_OK


def cmd_train_target(cfg: ExperimentConfig) -> int:
    path = _prior_path(cfg)
    if not path.exists():
        raise ConfigError(f"prior file not found: {path} (run learn-prior first)")
    q_p, meta = load_prior_table(path)
    env = with_goal(load_map(cfg.map), cfg.target_goal)
    out = _out(cfg, "train-target")
    bias = meta.get("mode", cfg.mode)
    runs = ex.paired_target_runs(env, q_p, cfg, bias=bias)
    summary = []
    for arm, arm_runs in runs.items():
        d = out / arm
        d.mkdir(exist_ok=True)
        for r in arm_runs:
            r.log.save(d / f"seed_{r.seed}.csv")
            summary.append((arm, r.seed, r.log.cumulative_collisions(200),
                            r.log.cumulative_collisions(), sum(r.log.returns[:100]) / 100, r.success))
        (out / f"{arm}_aggregate.csv").write_text(ex.aggregate_csv([r.log for r in arm_runs]))
    (out / "summary.json").write_text(json.dumps(
        [dict(zip(("arm", "seed", "collisions_200", "collisions_total", "return_first100",
                   "greedy_success"), row)) for row in summary], indent=1) + "\n")
    return EXIT_OK


def cmd_verify_theorem(cfg: ExperimentConfig) -> int:
    out = _out(cfg, "verify-theorem")
    rows = ex.theorem_grid(cfg)
    (out / "theorem.csv").write_text(ex.theorem_csv(rows))
    passed = sum(r.passed for r in rows)
    infeasible = sum(not r.feasible for r in rows)
    print(f"{passed}/{len(rows)} grid points within 3 standard errors ({infeasible} infeasible)")
    need = len(rows) - 1
    return EXIT_OK if passed >= need else EXIT_CHECK


def _original_prior(cfg: ExperimentConfig, out: Path):
    """Prior on the unmodified map: reuse ``prior_path`` when it exists, else build it."""
    path = _prior_path(cfg)
    if path.exists():
        return path, None
    env = load_map(cfg.map)
    sources, _, ok = ex.train_source_tables(env, cfg.goals, cfg.source_config(), cfg.source_seed,
                                            cfg.jobs)
    if not all(ok):
        log.warning("some original-map sources did not pass the convergence check")
    prior, _ = ex.learn_prior(env, sources, cfg)
    path = out / "original_prior.qtable"
    save_prior(prior, path, list(cfg.goals))
    return path, sources


def cmd_transfer(cfg: ExperimentConfig) -> int:
    out = _out(cfg, "transfer")
    path, original_sources = _original_prior(cfg, out)
    results = ex.transfer_experiment(cfg, path, original_sources)
    rows = []
    for vt in results:
        for mode, res in vt.results.items():
            d = out / vt.variant / mode
            d.mkdir(parents=True, exist_ok=True)
            for seed, run in zip(res.spec.seeds, res.logs):
                run.save(d / f"seed_{seed}.csv")
            (out / vt.variant / f"{mode}_td.csv").write_text(td_error_trace(res.logs).to_csv())
            rows.append((vt.variant, mode, f"{vt.first_window(mode):.6g}",
                         f"{vt.last_window(mode):.6g}", sum(vt.sources_converged)))
    _write_csv(out / "transfer_summary.csv",
               ("variant", "init_mode", "first100_mean_abs_td", "last100_mean_abs_td",
                "sources_converged"), rows)
    for row in rows:
        print(",".join(str(x) for x in row))
    return EXIT_OK


def cmd_common_reward(cfg: ExperimentConfig) -> int:
    out = _out(cfg, "common-reward")
    res = ex.common_reward_experiment(cfg)
    save_prior(res.prior, out / "seek_prior.qtable", list(cfg.goals))
    env = load_map(cfg.map)
    _write_csv(out / "selected_pairs.csv", ("state", "x", "y", "action", "toward_common"),
               [(s, *env.xy(s), a, int(ex.reduces_distance(env, s, a, env.common_states)))
                for s, a in res.selected])
    for arm, arm_runs in res.runs.items():
        d = out / arm
        d.mkdir(exist_ok=True)
        for r in arm_runs:
            r.log.save(d / f"seed_{r.seed}.csv")
        (out / f"{arm}_aggregate.csv").write_text(ex.aggregate_csv([r.log for r in arm_runs]))
    report = {
        "selected_pairs": len(res.selected),
        "toward_common_fraction": res.toward_fraction,
        "early_return_with_bias": res.early_return("with_prior"),
        "early_return_baseline": res.early_return("baseline"),
    }
    (out / "common_reward_report.json").write_text(json.dumps(report, indent=2) + "\n")
    print(json.dumps(report))
    return EXIT_OK


COMMANDS = {
    "train-sources": (cmd_train_sources, "train one Q-table per source goal"),
    "learn-prior": (cmd_learn_prior, "learn Q_P off-policy from saved source tables"),
    "train-target": (cmd_train_target, "paired with-prior and baseline runs on the target goal"),
    "verify-theorem": (cmd_verify_theorem, "closed-form ratio against Monte-Carlo on a grid"),
    "transfer": (cmd_transfer, "prior learning on variant maps, from_source vs scratch"),
    "common-reward": (cmd_common_reward, "seek-mode prior on the common-reward map"),
}

# applied under the config file, so a file or flag still wins
COMMAND_DEFAULTS = {"common-reward": {"map": "common_reward"}}

# spelled out so --help documents them
_FLAG_HELP = ExperimentConfig()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="safeprior", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    d = _FLAG_HELP
    for name, (_, helptext) in COMMANDS.items():
        p = sub.add_parser(name, help=helptext, description=helptext)
        p.add_argument("--config", help="key = value file; flags below override it")
        p.add_argument("--map", help=f"map file or shipped map name (default {d.map})")
        p.add_argument("--seeds", help="count (10 = seeds 0..9) or list such as 1,4,7 or 0-4")
        p.add_argument("--out", help=f"output directory (default {d.out})")
        p.add_argument("--jobs", type=int, help="worker processes (default 1)")
        p.add_argument("--rho", type=float, help=f"prior-use probability (default {d.rho})")
        p.add_argument("--threshold-t", type=float, dest="threshold_t",
                       help=f"selection threshold t (default {d.threshold_t})")
        p.add_argument("--mode", choices=("avoid", "seek"), help=f"prior mode (default {d.mode})")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override any config key, e.g. --set episodes=500")
        p.add_argument("-v", "--verbose", action="store_true")
    parser.epilog = "config keys and defaults:\n  " + "\n  ".join(d.to_text().splitlines())
    parser.formatter_class = argparse.RawDescriptionHelpFormatter
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        overrides = {"map": args.map, "out": args.out, "jobs": args.jobs, "rho": args.rho,
                     "threshold_t": args.threshold_t, "mode": args.mode}
        if args.seeds is not None:
            overrides["seeds"] = parse_seeds(args.seeds)
        cfg = load_config(args.config, overrides, args.set,
                          base=COMMAND_DEFAULTS.get(args.command))
        return COMMANDS[args.command][0](cfg)
    except (ConfigError, MapParseError, FileNotFoundError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
