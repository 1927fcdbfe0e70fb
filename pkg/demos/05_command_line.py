"""
The command-line pipeline
=========================

The ``bayesid`` command runs the same workflow from a YAML file:
``simulate`` writes truth and observations, ``fit`` runs a Bayesian or
least-squares fit, ``predict`` builds the posterior predictive ensemble and
``suite`` runs the landscape, sweep, flop-count and timing studies.  Every
command writes a manifest with the config echo, seeds and file hashes.

This script drives the entry point in-process; the shell equivalent is
``bayesid simulate --config demos/configs/linear_pendulum.yaml``.
"""

import json
import sys
import tempfile
from pathlib import Path

from bayesid.cli import main

config = Path(__file__).with_name("configs") / "linear_pendulum.yaml"
out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="bayesid-"))
common = ["--config", str(config), "--out", str(out), "--force"]

for argv in (["simulate"], ["fit", "--method", "dmd"], ["fit", "--method", "bayes"],
             ["predict"], ["suite", "flops"]):
    code = main(argv + common)
    print(" ".join(argv), "->", "ok" if code == 0 else f"exit {code}")

print("\nfiles in", out)
for path in sorted(out.iterdir()):
    print(f"  {path.name:28s} {path.stat().st_size:8d} bytes")

diag = json.loads((out / "diagnostics.json").read_text())
print("\nchain acceptance:", round(diag["acceptance"], 3))
print("reduction.csv head:")
print("\n".join((out / "reduction.csv").read_text().splitlines()[:4]))
