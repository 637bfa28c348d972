"""Generate data for the uniaxial experiment, train, and evaluate.

Usage: python scripts/run_uniaxial.py [OUT_DIR]
"""

from _pipeline import out_dir, train_pipeline

if __name__ == "__main__":
    print(train_pipeline("uniaxial", out_dir("uniaxial")))
