#!/usr/bin/env python3
"""Convert ODDS .mat files (X, y) to the CSV layout read by ssvae.

Output: header ``f0,...,f{d-1},label``, one row per sample, label 1 for
anomalies and 0 for normals.

    python tools/odds_mat_to_csv.py thyroid.mat cardio.mat --out-dir data/
"""

import argparse
import csv
import pathlib
import sys

import numpy as np


def load_mat(path):
    try:
        from scipy.io import loadmat

        mat = loadmat(path)
        return np.asarray(mat["X"], dtype=float), np.asarray(mat["y"]).ravel()
    except NotImplementedError:
        # MATLAB v7.3 files are HDF5 and store arrays transposed.
        import h5py

        with h5py.File(path, "r") as f:
            return np.asarray(f["X"], dtype=float).T, np.asarray(f["y"]).ravel()


def convert(src, dst):
    x, y = load_mat(src)
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"{src}: X has {x.shape[0]} rows but y has {y.shape[0]}")
    labels = (y != 0).astype(int)
    with open(dst, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow([f"f{i}" for i in range(x.shape[1])] + ["label"])
        for row, label in zip(x, labels):
            w.writerow([repr(float(v)) for v in row] + [label])
    return x.shape, int(labels.sum())


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("mat", nargs="+", type=pathlib.Path)
    p.add_argument("--out-dir", type=pathlib.Path, default=pathlib.Path("."))
    args = p.parse_args(argv)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    for src in args.mat:
        dst = args.out_dir / (src.stem + ".csv")
        shape, anomalies = convert(src, dst)
        print(f"{dst}: {shape[0]} rows, {shape[1]} features, {anomalies} anomalies")
    return 0


if __name__ == "__main__":
    sys.exit(main())
