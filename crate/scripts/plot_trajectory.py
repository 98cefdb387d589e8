#!/usr/bin/env python3
"""Render figures from `macgame simulate` trajectory CSVs.

For 2-user / 2-node games the left panel shows the potential level sets
over (p_11, p_21) with the orbits overlaid; the remaining panels show the
potential and (when present) the KL divergence along each trajectory.

Usage:
    plot_trajectory.py traj.csv [traj2.csv ...] --game game.toml -o out.png
"""

import argparse
import csv
import math
import sys

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    tomllib = None
    import toml

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def read_trajectory(path):
    with open(path, newline="") as handle:
        rows = list(csv.DictReader(handle))
    if not rows:
        sys.exit(f"{path}: empty trajectory")
    t = np.array([float(r["t"]) for r in rows])
    phi = np.array([float(r["potential"]) for r in rows])
    res = np.array([float(r["kkt_residual"]) for r in rows])
    kl = None
    if rows[0].get("kl"):
        kl = np.array(
            [math.inf if r["kl"] == "inf" else float(r["kl"]) for r in rows]
        )
    profile_cols = [c for c in rows[0] if c.startswith("p_")]
    profiles = np.array([[float(r[c]) for c in profile_cols] for r in rows])
    return {"t": t, "phi": phi, "res": res, "kl": kl, "profiles": profiles,
            "columns": profile_cols, "name": path}


def read_game(path):
    if tomllib is not None:
        with open(path, "rb") as handle:
            doc = tomllib.load(handle)
    else:
        with open(path) as handle:
            doc = toml.load(handle)
    k, a = doc["num_users"], doc["num_nodes"]
    return {
        "K": k,
        "A": a,
        "gains": np.array(doc["gains"], dtype=float).reshape(k, a),
        "noise": np.array(doc["noise"], dtype=float),
        "bandwidths": np.array(doc["bandwidths"], dtype=float),
        "budgets": np.array(doc["budgets"], dtype=float),
    }


def potential_2x2(game, p11, p21):
    g, s2, b, P = game["gains"], game["noise"], game["bandwidths"], game["budgets"]
    load1 = s2[0] + g[0, 0] * p11 + g[1, 0] * p21
    load2 = s2[1] + g[0, 1] * (P[0] - p11) + g[1, 1] * (P[1] - p21)
    return -(b[0] * np.log(load1) + b[1] * np.log(load2))


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("trajectories", nargs="+")
    parser.add_argument("--game", help="game document for the level-set panel")
    parser.add_argument("-o", "--out", default="trajectory.png")
    args = parser.parse_args()

    runs = [read_trajectory(p) for p in args.trajectories]
    game = read_game(args.game) if args.game else None
    levels_panel = game is not None and game["K"] == 2 and game["A"] == 2

    have_kl = any(r["kl"] is not None for r in runs)
    panels = (1 if levels_panel else 0) + 1 + (1 if have_kl else 0)
    fig, axes = plt.subplots(1, panels, figsize=(5 * panels, 4.2))
    if panels == 1:
        axes = [axes]
    axes = list(np.atleast_1d(axes))

    idx = 0
    if levels_panel:
        ax = axes[idx]
        idx += 1
        P = game["budgets"]
        x = np.linspace(0.0, P[0], 200)
        y = np.linspace(0.0, P[1], 200)
        xx, yy = np.meshgrid(x, y)
        zz = potential_2x2(game, xx, yy)
        contours = ax.contour(xx, yy, zz, levels=18, colors="grey",
                              linestyles="dashed", linewidths=0.7)
        ax.clabel(contours, inline=True, fontsize=6, fmt="%.2f")
        for run in runs:
            cols = run["columns"]
            i11, i21 = cols.index("p_1_1"), cols.index("p_2_1")
            ax.plot(run["profiles"][:, i11], run["profiles"][:, i21], lw=1.5)
            ax.plot(run["profiles"][0, i11], run["profiles"][0, i21], "o", ms=4)
            ax.plot(run["profiles"][-1, i11], run["profiles"][-1, i21], "s", ms=5)
        ax.set_xlabel("$p_{1,1}$")
        ax.set_ylabel("$p_{2,1}$")
        ax.set_title("potential level sets and orbits")

    ax = axes[idx]
    idx += 1
    for run in runs:
        ax.plot(run["t"], run["phi"], label=run["name"])
    ax.set_xlabel("t")
    ax.set_ylabel(r"$\Phi(p(t))$")
    ax.set_title("potential along the flow")
    if len(runs) > 1:
        ax.legend(fontsize=7)

    if have_kl:
        ax = axes[idx]
        for run in runs:
            if run["kl"] is None:
                continue
            finite = np.isfinite(run["kl"])
            ax.semilogy(run["t"][finite], np.maximum(run["kl"][finite], 1e-300))
        ax.set_xlabel("t")
        ax.set_ylabel(r"$H_q(p(t))$")
        ax.set_title("KL divergence to the reference")

    fig.tight_layout()
    fig.savefig(args.out, dpi=160)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
