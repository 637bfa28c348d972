"""Command-line entry point.

Subcommands::

    verify {convergence,gradients,patch}
    gen-data   --config C --out DIR
    train      --config C --dataset D --out DIR
    eval       --config C --dataset D --checkpoint K --out DIR
    zero-shot  --config C --checkpoint K --out DIR

Exit codes: 0 success, 1 verification/acceptance failure, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
import time
from pathlib import Path

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _set_threads(n: int) -> None:
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


class Manifest:
    """Run record: config hash, seed, versions, outputs and timings."""

    def __init__(self, command: str, out: Path, config=None, seed=None, threads: int = 1):
        import numpy
        import scipy

        from . import __version__

        self.out = out
        self.data = {
            "command": command,
            "config_hash": config.hash() if config is not None else None,
            "seed": seed,
            "threads": threads,
            "versions": {"neurofem": __version__, "numpy": numpy.__version__, "scipy": scipy.__version__, "python": platform.python_version()},
            "outputs": [],
            "timings_s": {},
        }
        self._t0 = time.perf_counter()

    def add(self, path: Path) -> Path:
        self.data["outputs"].append(str(Path(path).relative_to(self.out)))
        return path

    def time(self, name: str, seconds: float) -> None:
        self.data["timings_s"][name] = seconds

    def write(self, **extra) -> None:
        self.data.update(extra)
        self.data["timings_s"]["total"] = time.perf_counter() - self._t0
        self.data["finished_at"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
        (self.out / "manifest.json").write_text(json.dumps(self.data, indent=2) + "\n")


def _load_config(args):
    from .experiments import load_config

    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if getattr(args, "checkpoint_epochs", None):
        cfg = cfg.replace(checkpoint_epochs=[int(e) for e in args.checkpoint_epochs.split(",")])
    return cfg


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ----------------------------------------------------------------- commands
def cmd_verify(args) -> int:
    from . import verification as ver

    if args.kind == "convergence":
        report = ver.convergence_study(tolerance=args.tolerance or 0.3, expected_offset=args.order_offset)
        if args.order_threshold is not None:
            for case in report["cases"].values():
                case["expected"] = args.order_threshold
                case["passed"] = abs(case["order"] - args.order_threshold) <= report["tolerance"]
            report["passed"] = all(c["passed"] for c in report["cases"].values())
    elif args.kind == "gradients":
        report = ver.gradient_study(tolerance=args.tolerance or 1e-4)
    else:
        report = ver.patch_test(tolerance=args.tolerance or 1e-9)
    text = json.dumps(report, indent=2)
    print(text)
    if args.out:
        out = _outdir(args)
        (out / f"verify_{args.kind}.json").write_text(text + "\n")
    return EXIT_OK if report["passed"] else EXIT_FAIL


def cmd_gen_data(args) -> int:
    from . import figures
    from .experiments import build_experiment
    from .train import generate_dataset

    cfg = _load_config(args)
    if cfg.kind == "torsion":
        print("gen-data: torsion configs have no dataset (use zero-shot)", file=sys.stderr)
        return EXIT_USAGE
    out = _outdir(args)
    man = Manifest("gen-data", out, cfg, cfg.seed, args.threads)
    t = time.perf_counter()
    exp = build_experiment(cfg)
    ds = generate_dataset(cfg, exp)
    man.time("generate", time.perf_counter() - t)
    ds.save(man.add(out / "dataset.json"))
    for path in figures.dataset_snapshots(exp, ds, out / "fields"):
        man.add(path)
    man.write(records={s: len(ds.observations(s)) for s in ("train", "test")})
    print(json.dumps({"dataset": str(out / "dataset.json"), "train": len(ds.observations("train")), "test": len(ds.observations("test"))}))
    return EXIT_OK


def cmd_train(args) -> int:
    from . import figures
    from .experiments import build_experiment
    from .train import Dataset, load_checkpoint, save_checkpoint, train

    cfg = _load_config(args)
    out = _outdir(args)
    man = Manifest("train", out, cfg, cfg.seed, args.threads)
    exp = build_experiment(cfg)
    ds = Dataset.load(args.dataset)
    if ds.kind != cfg.kind:
        print(f"dataset kind {ds.kind!r} does not match config kind {cfg.kind!r}", file=sys.stderr)
        return EXIT_USAGE
    ckdir = out / "checkpoints"
    ckdir.mkdir(exist_ok=True)
    model, state, start, prior = exp.initial_model(), None, 0, []
    if args.resume:
        ck = load_checkpoint(args.resume)
        model, state, start, prior = ck.model, ck.state, ck.epoch, ck.history
    remaining = cfg.epochs - start
    if remaining < 1:
        print("nothing to do: checkpoint already at the configured epoch count", file=sys.stderr)
        return EXIT_USAGE

    def on_checkpoint(epoch, m, st, hist):
        path = ckdir / f"epoch_{epoch:04d}.json"
        save_checkpoint(path, m, st, epoch, prior + hist, cfg.hash())
        man.add(path)
        for p in figures.training_curves(exp, ds, m, epoch, out / "curves"):
            man.add(p)

    t = time.perf_counter()
    res = train(
        exp, ds, model, remaining, cfg.optimizer, state, start, set(cfg.checkpoint_epochs), on_checkpoint
    )
    man.time("train", time.perf_counter() - t)
    res.history = prior + res.history
    (out / "history.csv").write_text(res.history_csv())
    man.add(out / "history.csv")
    final = ckdir / "final.json"
    save_checkpoint(final, res.model, res.state, cfg.epochs, res.history, cfg.hash())
    man.add(final)
    last = res.history[-1]
    man.write(final_train_loss=last.train_loss, final_test_loss=last.test_loss, initial_loss=res.initial_loss)
    print(json.dumps({"final_train_loss": last.train_loss, "final_test_loss": last.test_loss, "checkpoint": str(final)}))
    return EXIT_OK


def cmd_eval(args) -> int:
    from .experiments import build_experiment
    from .train import Dataset, evaluate, load_checkpoint

    cfg = _load_config(args)
    out = _outdir(args)
    man = Manifest("eval", out, cfg, cfg.seed, args.threads)
    ck = load_checkpoint(args.checkpoint)
    exp = build_experiment(cfg)
    ds = Dataset.load(args.dataset)
    result = {s: evaluate(exp, ck.model, ds, s) for s in ("train", "test")}
    path = out / "evaluation.json"
    path.write_text(json.dumps({"checkpoint": str(args.checkpoint), "epoch": ck.epoch, "loss": result}, indent=2) + "\n")
    man.add(path)
    man.write()
    print(json.dumps(result))
    return EXIT_OK


def cmd_zero_shot(args) -> int:
    from . import constitutive as cm
    from . import figures
    from .experiments import build_experiment
    from .train import load_checkpoint

    cfg = _load_config(args)
    if cfg.kind != "torsion":
        print(f"zero-shot needs a torsion config, got {cfg.kind!r}", file=sys.stderr)
        return EXIT_USAGE
    out = _outdir(args)
    man = Manifest("zero-shot", out, cfg, cfg.seed, args.threads)
    ck = load_checkpoint(args.checkpoint)
    if not isinstance(ck.model, cm.NeuralLame):
        print(f"checkpoint holds {type(ck.model).__name__}, zero-shot needs NeuralLame", file=sys.stderr)
        return EXIT_USAGE
    exp = build_experiment(cfg)
    t = time.perf_counter()
    result = figures.zero_shot(exp, ck.model)
    man.time("solves", time.perf_counter() - t)
    for p in figures.write_zero_shot(exp, result, out):
        man.add(p)
    summary = {"relative_l2_mean_stress": result["relative_l2"], "threshold": args.threshold, "passed": result["relative_l2"] <= args.threshold}
    path = out / "summary.json"
    path.write_text(json.dumps(summary, indent=2) + "\n")
    man.add(path)
    man.write(**summary)
    print(json.dumps(summary))
    return EXIT_OK if summary["passed"] else EXIT_FAIL


# ------------------------------------------------------------------- parser
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="neurofem", description="Differentiable FE solver with learned material laws.")
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True)
        sp.add_argument("--out", required=config)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--threads", type=int, default=1)

    v = sub.add_parser("verify", help="run verification oracles")
    v.add_argument("kind", choices=("convergence", "gradients", "patch"))
    common(v, config=False)
    v.add_argument("--tolerance", type=float, default=None)
    v.add_argument("--order-offset", type=float, default=1.0, help="expected order = degree + offset")
    v.add_argument("--order-threshold", type=float, default=None, help="override the expected convergence order")
    v.set_defaults(func=cmd_verify)

    g = sub.add_parser("gen-data", help="generate a synthetic dataset")
    common(g)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a neural material law")
    common(t)
    t.add_argument("--dataset", required=True)
    t.add_argument("--checkpoint-epochs", default=None, help="comma-separated epochs")
    t.add_argument("--resume", default=None, help="checkpoint to continue from")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    common(e)
    e.add_argument("--dataset", required=True)
    e.add_argument("--checkpoint", required=True)
    e.set_defaults(func=cmd_eval)

    z = sub.add_parser("zero-shot", help="apply a trained Lame model to the torsion problem")
    common(z)
    z.add_argument("--checkpoint", required=True)
    z.add_argument("--threshold", type=float, default=0.10)
    z.set_defaults(func=cmd_zero_shot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    _set_threads(max(1, args.threads))
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING), format="%(message)s")
    from .errors import CheckpointError, InvalidArgumentError

    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"file not found: {exc.filename}", file=sys.stderr)
        return EXIT_USAGE
    except (InvalidArgumentError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
