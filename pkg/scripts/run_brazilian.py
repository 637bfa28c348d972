"""Generate data for the brazilian experiment, train, and evaluate.

Usage: python scripts/run_brazilian.py [OUT_DIR]
"""

from _pipeline import out_dir, train_pipeline

if __name__ == "__main__":
    print(train_pipeline("brazilian", out_dir("brazilian")))
