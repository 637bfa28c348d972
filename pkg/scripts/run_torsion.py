"""Zero-shot transfer: train on the Brazilian disc (if needed), then apply the
learned Lame law to the twisted 3D plate.

Usage: python scripts/run_torsion.py [OUT_DIR]
"""

from _pipeline import CONFIGS, out_dir, run, train_pipeline

if __name__ == "__main__":
    out = out_dir("torsion")
    ckpt = out / "brazilian" / "train" / "checkpoints" / "final.json"
    if not ckpt.exists():
        ckpt = train_pipeline("brazilian", out / "brazilian")
    run("zero-shot", "--config", str(CONFIGS / "torsion.json"), "--checkpoint", str(ckpt), "--out", str(out / "zero_shot"))
