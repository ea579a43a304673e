#!/usr/bin/env python3
"""Plot speed and gap traces from a `platoon simulate` CSV.

Usage: plot_sim.py sim.csv [-o out.png]
"""

import argparse
import csv
from collections import defaultdict

import matplotlib.pyplot as plt


def read(path):
    series = defaultdict(lambda: {"t": [], "v": [], "gap": []})
    with open(path, newline="") as f:
        rows = csv.DictReader(line for line in f if not line.startswith("#"))
        for row in rows:
            s = series[int(row["id"])]
            s["t"].append(float(row["t"]))
            s["v"].append(float(row["v"]))
            s["gap"].append(float(row["gap"]) if row["gap"] else float("nan"))
    return series


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("csv")
    parser.add_argument("-o", "--output")
    args = parser.parse_args()

    series = read(args.csv)
    fig, (ax_v, ax_s) = plt.subplots(2, 1, sharex=True, figsize=(10, 6))
    for vid, s in sorted(series.items()):
        ax_v.plot(s["t"], s["v"], lw=0.8, label=str(vid))
        ax_s.plot(s["t"], s["gap"], lw=0.8)
    ax_v.set_ylabel("speed [m/s]")
    ax_s.set_ylabel("gap [m]")
    ax_s.set_xlabel("time [s]")
    ax_v.legend(ncol=6, fontsize="small", title="vehicle")
    fig.tight_layout()
    if args.output:
        fig.savefig(args.output, dpi=150)
    else:
        plt.show()


if __name__ == "__main__":
    main()
