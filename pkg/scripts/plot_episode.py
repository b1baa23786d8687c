#!/usr/bin/env python3
"""Render a saved episode log: camera-view feature trajectories with the
reference markers, plus the error-norm decay curve."""

import argparse
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from shapeservo.episode import TrajectoryLog

SECTION_COLORS = ["#8e44ad", "#e74c3c", "#ff7eb9", "#2980b9", "#27ae60"]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("log", type=Path, help="episode CSV")
    ap.add_argument("--out", type=Path, default=None, help="output PNG")
    ap.add_argument("--resolution", type=int, nargs=2, default=(1280, 720))
    args = ap.parse_args()

    log = TrajectoryLog.from_csv(args.log)
    n = log.n_sections
    fig, (ax_img, ax_err) = plt.subplots(
        1, 2, figsize=(13, 5), gridspec_kw={"width_ratios": [1.6, 1.0]}
    )

    for j in range(n):
        color = SECTION_COLORS[j % len(SECTION_COLORS)]
        ax_img.plot(
            log.features[:, j, 0],
            log.features[:, j, 1],
            color=color,
            lw=1.6,
            label=f"tip {j + 1} trajectory",
        )
        ax_img.scatter(
            log.reference[-1, j, 0],
            log.reference[-1, j, 1],
            facecolors="none",
            edgecolors="#27ae60",
            s=140,
            lw=2.0,
            zorder=5,
        )
        ax_img.scatter(
            log.features[-1, j, 0],
            log.features[-1, j, 1],
            color=color,
            s=25,
            zorder=6,
        )
    w, h = args.resolution
    ax_img.set_xlim(0, w)
    ax_img.set_ylim(h, 0)  # image coordinates: y grows downward
    ax_img.set_aspect("equal")
    ax_img.set_xlabel("u (px)")
    ax_img.set_ylabel("v (px)")
    ax_img.set_title("feature trajectories (green circles: reference)")
    ax_img.legend(loc="lower right", fontsize=8)

    ax_err.semilogy(log.t, np.maximum(log.err_config, 1e-12), label="configuration")
    ax_err.semilogy(log.t, np.maximum(log.err_task, 1e-12), label="task (EE)")
    for t_switch in log.t[np.nonzero(log.advanced)[0]]:
        ax_err.axvline(t_switch, color="gray", lw=0.8, ls=":")
    ax_err.set_xlabel("time (s)")
    ax_err.set_ylabel("error norm (mixed px / log units)")
    ax_err.set_title("error decay (dotted: reference switches)")
    ax_err.legend()
    fig.tight_layout()

    out = args.out or args.log.with_suffix(".png")
    fig.savefig(out, dpi=130)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
