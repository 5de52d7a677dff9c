#!/usr/bin/env python3
"""Quick-look plots for CSV outputs (dev convenience, not part of the API).

Usage:
    python scripts/plot_reports.py sweep OUT/sweep_light_vs_heavy_d4s_linear.csv
    python scripts/plot_reports.py spectrum OUT/cmc/cmc_light_vs_heavy_light_BR_d4s.csv
"""

import csv
import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt


def plot_sweep(path):
    rows = list(csv.DictReader(open(path)))
    sizes = [int(r["size"]) for r in rows]
    mean = [float(r["mean"]) for r in rows]
    std = [float(r["std"]) for r in rows]
    best = [float(r["best_accuracy"]) for r in rows]
    plt.figure(figsize=(6, 4))
    plt.errorbar(sizes, mean, yerr=std, marker="o", label="mean +/- std")
    plt.plot(sizes, best, marker="*", color="red", label="best subset")
    plt.xlabel("number of muscles")
    plt.ylabel("accuracy")
    plt.ylim(0.4, 1.05)
    plt.grid(True)
    plt.legend()
    out = path.rsplit(".", 1)[0] + ".png"
    plt.savefig(out, dpi=150, bbox_inches="tight")
    print(out)


def plot_spectrum(path):
    rows = list(csv.DictReader(open(path)))
    freqs = [float(r["freq_hz"]) for r in rows]
    mean = [float(r["mean"]) for r in rows]
    std = [float(r["std"]) for r in rows]
    plt.figure(figsize=(6, 4))
    plt.plot(freqs, mean, label="mean")
    plt.plot(freqs, std, "--", label="std")
    plt.xlabel("frequency (Hz)")
    plt.xlim(0, 100)
    plt.grid(True)
    plt.legend()
    out = path.rsplit(".", 1)[0] + ".png"
    plt.savefig(out, dpi=150, bbox_inches="tight")
    print(out)


if __name__ == "__main__":
    if len(sys.argv) != 3 or sys.argv[1] not in ("sweep", "spectrum"):
        sys.exit(__doc__)
    (plot_sweep if sys.argv[1] == "sweep" else plot_spectrum)(sys.argv[2])
