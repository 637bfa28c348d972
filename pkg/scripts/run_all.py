"""Verification suites followed by all four experiments.

Usage: python scripts/run_all.py [OUT_DIR]
"""

import sys
from pathlib import Path

from _pipeline import ROOT, run, train_pipeline

if __name__ == "__main__":
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else ROOT / "runs"
    for kind in ("convergence", "patch", "gradients"):
        run("verify", kind, "--out", str(out / "verify"))
    for kind in ("uniaxial", "brazilian", "thermal"):
        train_pipeline(kind, out / kind)
    ckpt = out / "brazilian" / "train" / "checkpoints" / "final.json"
    run("zero-shot", "--config", str(ROOT / "configs" / "torsion.json"), "--checkpoint", str(ckpt), "--out", str(out / "torsion"))
