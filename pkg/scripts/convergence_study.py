#!/usr/bin/env python3
"""Convergence and transient study across robot variants.

Runs K randomized-reference episodes for the two- and three-section robots
(including S-shape references), reports steady-state errors split by task
and configuration space, and rise/settling times under the stringent and
relaxed criteria. Mirrors the layout of the hardware evaluation tables,
with simulation numbers.
"""

import argparse
import json
import warnings
from pathlib import Path

import numpy as np

from shapeservo.batch import run_batch
from shapeservo.camera import default_camera
from shapeservo.configio import default_robot
from shapeservo.control import ControlGains
from shapeservo.errors import SingularityWarning


def fmt(agg, name):
    entry = agg[name]
    if entry["mean"] is None:
        return "not settled"
    return f"{entry['mean']:7.3f} +/- {entry['std']:.3f}"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("-k", type=int, default=6, help="episodes per variant")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--sigma-px", type=float, default=0.0)
    ap.add_argument("--sigma-depth", type=float, default=0.0)
    ap.add_argument("--threshold", type=float, default=5e-4)
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args()

    cam = default_camera()
    results = {}
    warnings.simplefilter("ignore", SingularityWarning)
    for n_sections, criterion in ((2, "stringent"), (2, "relaxed"), (3, "relaxed")):
        gains = ControlGains(err_threshold=args.threshold)
        report = run_batch(
            default_robot(n_sections),
            cam,
            gains,
            k=args.k,
            seed=args.seed,
            sigma_px=args.sigma_px,
            sigma_depth_m=args.sigma_depth,
            criterion=criterion,
            s_shape_count=max(1, args.k // 4),
        )
        results[f"{n_sections}-{criterion}"] = report.as_dict()
        agg = report.aggregate
        print(f"\n=== {n_sections} sections ({criterion} criterion), k={args.k} ===")
        print(f"convergence rate       : {report.convergence_rate:.0%}")
        print(f"task image error  (px) : {fmt(agg, 'task_image_px')}")
        print(f"task depth error  (mm) : {fmt(agg, 'task_depth_mm')}")
        print(f"config image error (px): {fmt(agg, 'config_image_px')}")
        print(f"config depth error (mm): {fmt(agg, 'config_depth_mm')}")
        print(f"rise time          (s) : {fmt(agg, 'rise_time_s')}")
        print(f"settling time      (s) : {fmt(agg, 'settling_time_s')}")

    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(json.dumps(results, indent=2))
        print(f"\nwrote {args.out}")


if __name__ == "__main__":
    main()
