"""The benchmark harness: configs in, CSV traces and JSON summaries out.

Everything the command line does is available as a library call.  The
equivalent shell session is:

    bilevel run --config config.json --out results/
    bilevel fit --trace results/trace.csv --column f_gap --window 10:200
    bilevel selftest
"""

import json
import tempfile
from pathlib import Path

from bilevel import run_experiment

config = {
    "testbed": {"kind": "quadratic", "n": 2, "m": 2, "inner_eigs": [1.0, 2.0],
                "q_eigs": [1.0, 1.0], "p_eigs": [0.5, 0.5], "seed": 11},
    "solver": "ba",
    "convexity_class": "strongly_convex",
    "N": 200,
    "seed": 0,
    "feasible_set": {"kind": "ball", "center": [0.0, 0.0], "radius": 6.0},
    "x0": [2.0, -1.0],
    "flags": {"cold_start": True},
}

with tempfile.TemporaryDirectory() as tmp:
    out = Path(tmp) / "run"
    summary = run_experiment(config, out)
    print("files written:", sorted(p.name for p in out.iterdir()))
    print()
    trace_lines = (out / "trace.csv").read_text().splitlines()
    print("trace.csv head:")
    for line in trace_lines[:4]:
        print("  " + line)
    print(f"  ... ({len(trace_lines) - 1} data rows)")
    print()
    print("summary.json (selected fields):")
    for key in ("solver", "convexity_class", "N", "final", "bound", "slopes"):
        print(f"  {key}: {json.dumps(summary[key])}")
