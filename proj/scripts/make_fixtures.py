#!/usr/bin/env python3
"""Regenerate data/: UCI tables from the scikit-learn bundle plus a small
planted-partition graph for the robustness experiments."""
import csv
import gzip
import os
import random
import sys

import sklearn

OUT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "data")
SRC = os.path.join(os.path.dirname(sklearn.__file__), "datasets", "data")


def write(name, rows, labels, edges=None):
    d = os.path.join(OUT, name)
    os.makedirs(d, exist_ok=True)
    with open(os.path.join(d, "features.csv"), "w") as f:
        for r in rows:
            f.write(",".join(r) + "\n")
    with open(os.path.join(d, "labels.txt"), "w") as f:
        f.write("\n".join(str(y) for y in labels) + "\n")
    if edges is not None:
        with open(os.path.join(d, "edges.txt"), "w") as f:
            for i, j in edges:
                f.write(f"{i} {j}\n")
    print(f"{name}: {len(rows)} nodes, {len(rows[0])} features")


def uci(name, filename, header=True):
    opener = gzip.open if filename.endswith(".gz") else open
    with opener(os.path.join(SRC, filename), "rt") as f:
        reader = csv.reader(f)
        if header:
            next(reader)
        table = [r for r in reader if r]
    write(name, [r[:-1] for r in table], [int(float(r[-1])) for r in table])


def planted_partition(n=300, classes=3, dim=20, p_in=0.06, p_out=0.006, seed=7):
    rng = random.Random(seed)
    labels = [i % classes for i in range(n)]
    rows = []
    for y in labels:
        rows.append([f"{rng.gauss(0.6 if j % classes == y else 0.0, 1.0):.6f}" for j in range(dim)])
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < (p_in if labels[i] == labels[j] else p_out):
                edges.append((i, j))
    write("sbm", rows, labels, edges)


if __name__ == "__main__":
    uci("wine", "wine_data.csv")
    uci("cancer", "breast_cancer.csv")
    uci("digits", "digits.csv.gz", header=False)
    planted_partition()
    sys.exit(0)
