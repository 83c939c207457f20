"""Run every experiment end to end through the command line.

    python3 scripts/run_all.py [--out runs] [--jobs N] [--seeds 10] [--quick]

``--quick`` shrinks episode counts and seeds for a smoke run of a few minutes.
Outputs land in one subdirectory per experiment under ``--out``.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from safeprior.cli import main as cli

QUICK = ["--set", "episodes=300", "--set", "prior_episodes=300", "--set", "samples=20000",
         "--set", "source_max_episodes=8000", "--set", "common_source_episodes=2000"]


def run(name: str, args: list[str]) -> int:
    t0 = time.perf_counter()
    code = cli(args)
    print(f"[{name}] exit {code} in {time.perf_counter() - t0:.0f}s", flush=True)
    return code


def main(argv: list[str] | None = None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="runs")
    p.add_argument("--jobs", default="1")
    p.add_argument("--seeds", default=None)
    p.add_argument("--quick", action="store_true")
    a = p.parse_args(argv)
    out = Path(a.out)
    seeds = a.seeds or ("3" if a.quick else "10")
    common = ["--jobs", a.jobs, "--seeds", seeds] + (QUICK if a.quick else [])
    main_dir = str(out / "original")
    codes = {
        "train-sources": run("train-sources", ["train-sources", "--out", main_dir] + common),
        "learn-prior": run("learn-prior", ["learn-prior", "--out", main_dir] + common),
        "train-target": run("train-target", ["train-target", "--out", main_dir] + common),
        "verify-theorem": run("verify-theorem",
                              ["verify-theorem", "--out", str(out / "theorem")] + common),
        "transfer": run("transfer", ["transfer", "--out", str(out / "transfer"), "--set",
                                     f"prior_path={main_dir}/prior.qtable"] + common),
        "common-reward": run("common-reward",
                             ["common-reward", "--out", str(out / "common_reward")] + common),
    }
    bad = {k: v for k, v in codes.items() if v}
    if bad:
        print(f"non-zero exits: {bad}", file=sys.stderr)
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main())
