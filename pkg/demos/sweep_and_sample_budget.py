"""Success-rate sweep over problem sizes plus the sample-budget diagnostic.

The sweep runs the full pipeline (synthesize, solve, localize) on freshly
randomized scenes for each (L, K, R) cell and reports the fraction of trials
where every planted shift is recovered to within one grid step.  The
diagnostic prints the theoretical sample-requirement shape for comparison;
its universal constants are unknown, so only ratios are meaningful.
"""

import json
import pathlib
import tempfile

from blindsr import cli

# ---------------------------------------------------------------------------
# A deliberately tiny sweep so this demo finishes in about a minute.
# ---------------------------------------------------------------------------
config = {
    "version": 1,
    "trials": 3,
    "seed": 2026,
    "cells": {"L": [7, 9], "K": [1], "R": [1, 2]},
    "base": {"grid": 250, "threshold": 0.7, "min_sep": 0.25,
             "include_redundant_q": False},
}

out = pathlib.Path(tempfile.mkdtemp(prefix="sweep_demo_"))
rows = cli.phase_sweep(config, out)
print("L   K   R   trials  successes  rate")
for L, K, R, trials, successes, rate in rows:
    print(f"{L:<3d} {K:<3d} {R:<3d} {trials:<7d} {successes:<10d} {rate:.2f}")
print(f"(csv written to {out / 'sweep.csv'})\n")

# ---------------------------------------------------------------------------
# Sample-budget shape: how the required L scales, up to unknown constants
# ---------------------------------------------------------------------------
for L, K, R in [(7, 1, 1), (9, 1, 2), (19, 2, 2), (65, 2, 4)]:
    diag = cli.theorem1_diagnostic(L=L, R=R, K=K)
    print(f"L={L:<3d} K={K} R={R}: shape={diag['shape']:.3e} "
          f"ratio L/shape={diag['ratio']:.3e}")
print()
print(json.dumps(cli.theorem1_diagnostic(L=19, R=2, K=2), indent=2))
