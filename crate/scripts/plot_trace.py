#!/usr/bin/env python3
"""Plot a quadsafe trace.csv: positions, velocities, barrier values and inputs.

usage: plot_trace.py OUT_DIR [--save FILE.png]
"""

import argparse
from pathlib import Path

import matplotlib.pyplot as plt
import pandas as pd


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out_dir", type=Path, help="directory written by `quadsafe run`")
    ap.add_argument("--save", type=Path, help="write a PNG instead of opening a window")
    args = ap.parse_args()

    df = pd.read_csv(args.out_dir / "trace.csv")
    t = df["t"]
    fig, ax = plt.subplots(4, 1, sharex=True, figsize=(9, 10))

    for c in ("x", "y", "z"):
        ax[0].plot(t, df[c], label=c)
    ax[0].set_ylabel("position [m]")

    for c in ("vx", "vy", "vz"):
        ax[1].plot(t, df[c], label=c)
    ax[1].set_ylabel("velocity [m/s]")

    for c in ("h_alt", "h_altvel", "h_latpos", "h_latvel"):
        if df[c].notna().any():
            ax[2].plot(t, df[c], label=c)
    ax[2].axhline(0.0, color="k", lw=0.8)
    ax[2].set_ylabel("h")

    ax[3].plot(t, df["f_hat"], "--", label="F nominal")
    ax[3].plot(t, df["F_star"], label="F*")
    ax[3].plot(t, df["Mx_star"], label="Mx*")
    ax[3].plot(t, df["My_star"], label="My*")
    ax[3].set_ylabel("input [N, N m]")
    ax[3].set_xlabel("t [s]")

    for a in ax:
        a.grid(True, alpha=0.3)
        a.legend(loc="upper right", fontsize="small")
    fig.tight_layout()
    if args.save:
        fig.savefig(args.save, dpi=120)
    else:
        plt.show()


if __name__ == "__main__":
    main()
