#!/usr/bin/env python3
"""Render figures from scenario CSV outputs (optional; needs matplotlib).

Examples:
    python scripts/plot_results.py workdist out/fig4/*.csv -o fig4.png
    python scripts/plot_results.py characteristic out/fig2/semiclassical_g_beta2e-8.csv
    python scripts/plot_results.py jarzynski out/fig3/jarzynski_sweep.csv
"""

import argparse
import os
import sys

import numpy as np


def read_csv(path):
    rows = []
    header = None
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = line.split(",")
                continue
            rows.append([float(x) for x in line.split(",")])
    return header, np.asarray(rows)


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("kind", choices=["workdist", "characteristic", "jarzynski"])
    ap.add_argument("csv", nargs="+")
    ap.add_argument("-o", "--out", default=None)
    args = ap.parse_args()

    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib is not installed; install it to render figures", file=sys.stderr)
        return 1

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for path in args.csv:
        label = os.path.basename(path).replace(".csv", "")
        header, data = read_csv(path)
        if args.kind == "workdist":
            ax.plot(data[:, 0], data[:, 1], label=label)
            ax.set_xlabel("W")
            ax.set_ylabel("P(W)")
        elif args.kind == "characteristic":
            ax.plot(data[:, 0], np.hypot(data[:, 1], data[:, 2]), label=label)
            ax.set_xlabel("u")
            ax.set_ylabel("|G(u)|")
        else:
            cols = {name: i for i, name in enumerate(header)}
            beta = data[:, cols["beta"]]
            ax.semilogx(1.0 / beta, data[:, cols["delta_f_reference"]], "k-", label="reference")
            ax.errorbar(
                1.0 / beta,
                data[:, cols["delta_f_semiclassical"]],
                yerr=data[:, cols["stderr_semiclassical"]],
                fmt="o",
                label="semiclassical",
            )
            ax.errorbar(
                1.0 / beta,
                data[:, cols["delta_f_classical_mc"]],
                yerr=data[:, cols["stderr_classical_mc"]],
                fmt="s",
                label="classical MC",
            )
            ax.set_xlabel("temperature")
            ax.set_ylabel("free energy difference")
    ax.legend(fontsize=8)
    out = args.out or f"{args.kind}.png"
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
