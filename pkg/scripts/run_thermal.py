"""Generate data for the thermal experiment, train, and evaluate.

Usage: python scripts/run_thermal.py [OUT_DIR]
"""

from _pipeline import out_dir, train_pipeline

if __name__ == "__main__":
    print(train_pipeline("thermal", out_dir("thermal")))
