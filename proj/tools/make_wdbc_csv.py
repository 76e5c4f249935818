#!/usr/bin/env python3
"""Write the WDBC table in the common `id,diagnosis,...` CSV layout.

Source is the copy bundled with scikit-learn (same row order as the UCI
wdbc.data file). The bundled copy carries no patient ids, so ids are the
1-based row numbers. A trailing empty column is kept to match the widely
distributed `data.csv` variant.
"""
import csv
import os
import sys

import sklearn

NAMES = [
    "radius", "texture", "perimeter", "area", "smoothness", "compactness",
    "concavity", "concave points", "symmetry", "fractal_dimension",
]
HEADER = ["id", "diagnosis"] + [f"{n}_{s}" for s in ("mean", "se", "worst") for n in NAMES] + [""]


def main(out_path):
    src = os.path.join(os.path.dirname(sklearn.__file__), "datasets", "data", "breast_cancer.csv")
    with open(src, newline="") as f:
        rows = list(csv.reader(f))[1:]
    with open(out_path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(HEADER)
        for i, row in enumerate(rows, start=1):
            # sklearn target: 0 = malignant, 1 = benign
            diagnosis = "M" if row[30] == "0" else "B"
            w.writerow([str(i), diagnosis] + row[:30] + [""])


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data/wdbc.csv")
