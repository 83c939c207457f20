"""Print the headline numbers from a ``run_all.py`` output directory.

    python3 scripts/summarize.py [runs]
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path


def mean(xs):
    xs = list(xs)
    return sum(xs) / len(xs) if xs else float("nan")


def main(root: str = "runs") -> int:
    root = Path(root)
    report = root / "original" / "prior_report.json"
    if report.exists():
        print("prior:", json.loads(report.read_text()))
    summary = root / "original" / "summary.json"
    if summary.exists():
        rows = json.loads(summary.read_text())
        for arm in ("with_prior", "baseline"):
            r = [x for x in rows if x["arm"] == arm]
            print(f"{arm}: collisions@200 {mean(x['collisions_200'] for x in r):.1f}, "
                  f"total {mean(x['collisions_total'] for x in r):.1f}, "
                  f"first-100 return {mean(x['return_first100'] for x in r):.3f}, "
                  f"greedy success {mean(x['greedy_success'] for x in r):.3f}")
    theorem = root / "theorem" / "theorem.csv"
    if theorem.exists():
        rows = list(csv.DictReader(theorem.open()))
        print(f"theorem grid: {sum(int(r['pass']) for r in rows)}/{len(rows)} within 3 se")
    transfer = root / "transfer" / "transfer_summary.csv"
    if transfer.exists():
        for r in csv.DictReader(transfer.open()):
            print(f"transfer {r['variant']} {r['init_mode']}: first100 {r['first100_mean_abs_td']}, "
                  f"last100 {r['last100_mean_abs_td']}")
    common = root / "common_reward" / "common_reward_report.json"
    if common.exists():
        print("common reward:", json.loads(common.read_text()))
    return 0


if __name__ == "__main__":
    sys.exit(main(*sys.argv[1:2]))
