"""Shared helpers for the experiment scripts: thin wrappers over the CLI."""

from __future__ import annotations

import sys
from pathlib import Path

from neurofem.cli import main

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


def run(*argv: str) -> None:
    print("$ neurofem", " ".join(argv), flush=True)
    code = main(list(argv))
    if code != 0:
        sys.exit(code)


def train_pipeline(kind: str, out: Path, seed: int | None = None) -> Path:
    """gen-data, train and eval for one config; returns the final checkpoint."""
    cfg = str(CONFIGS / f"{kind}.json")
    extra = ["--seed", str(seed)] if seed is not None else []
    run("gen-data", "--config", cfg, "--out", str(out / "data"), *extra)
    run("train", "--config", cfg, "--dataset", str(out / "data" / "dataset.json"), "--out", str(out / "train"), *extra)
    ckpt = out / "train" / "checkpoints" / "final.json"
    run("eval", "--config", cfg, "--dataset", str(out / "data" / "dataset.json"), "--checkpoint", str(ckpt), "--out", str(out / "eval"), *extra)
    return ckpt


def out_dir(default: str) -> Path:
    return Path(sys.argv[1]) if len(sys.argv) > 1 else ROOT / "runs" / default
