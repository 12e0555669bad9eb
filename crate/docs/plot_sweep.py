#!/usr/bin/env python3
"""Plot mean RMSE from an `rmc sweep-snr` or `rmc sweep-fraction` run.

    python3 docs/plot_sweep.py out/summary.csv [plot.png]

Needs matplotlib.
"""
import csv
import sys
from collections import defaultdict

import matplotlib.pyplot as plt


def main(summary, target=None):
    with open(summary, newline="") as f:
        reader = csv.DictReader(f)
        axis = reader.fieldnames[1]
        curves = defaultdict(list)
        for row in reader:
            curves[row["method"]].append((float(row[axis]), float(row["mean_rmse"])))

    fig, ax = plt.subplots(figsize=(5, 4))
    for method, points in curves.items():
        points.sort()
        ax.semilogy([p[0] for p in points], [p[1] for p in points], marker="o", label=method)
    ax.set_xlabel({"snr_db": "SNR (dB)", "observe_fraction": "observed fraction"}.get(axis, axis))
    ax.set_ylabel("RMSE")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    if target:
        fig.savefig(target, dpi=150)
    else:
        plt.show()


if __name__ == "__main__":
    if len(sys.argv) not in (2, 3):
        sys.exit(__doc__)
    main(*sys.argv[1:])
