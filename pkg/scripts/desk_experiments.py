"""Run the desk-scale experiments through the CLI and print their summaries.

    python3 scripts/desk_experiments.py --out runs/desk
    python3 scripts/desk_experiments.py --only twin-path ergodics

Each experiment lands in its own run directory under --out, exactly as if the
subcommand had been called by hand.
"""

import argparse
import json
import os
import sys
import time
from contextlib import redirect_stdout
from io import StringIO

from girsanovlab.cli import main as cli

EXPERIMENTS = [
    ("check-regime", ["--preset", "ks-desk"]),
    ("check-regime", ["--preset", "ns-desk"]),
    ("girsanov-normalization", ["--preset", "ks-desk"]),
    ("girsanov-importance", ["--preset", "ks-desk"]),
    ("girsanov-importance", ["--preset", "ns-desk"]),
    ("twin-path", ["--preset", "ns-desk"]),
    ("ergodics", ["--preset", "ks-desk"]),
    ("growth-audit", ["--preset", "ks-desk"]),
    ("growth-audit", ["--preset", "ns-desk"]),
]

SKIP = {"command", "spec_hash", "seed", "warnings"}


def main():
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--out", default="runs/desk")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--only", nargs="*", help="subcommands to run (default all)")
    a = p.parse_args()
    failed = 0
    for command, extra in EXPERIMENTS:
        if a.only and command not in a.only:
            continue
        t0 = time.perf_counter()
        buf = StringIO()
        with redirect_stdout(buf):
            code = cli([command, *extra, "--seed", str(a.seed), "--out", a.out])
        label = f"{command} {' '.join(extra)}"
        if code != 0:
            print(f"{label}: exit {code}")
            failed += 1
            continue
        rundir = buf.getvalue().strip().splitlines()[-1]
        with open(os.path.join(rundir, "summary.json")) as fh:
            s = json.load(fh)
        print(f"{label}  ({time.perf_counter() - t0:.0f}s)  {rundir}")
        for k in sorted(s):
            if k not in SKIP:
                print(f"    {k}: {s[k]}")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
