"""Single-path MUSIC error against the true angle across the field of view.

The noiseless argmax lands on the grid point nearest in sine space, so the
error grows past half a grid step towards endfire. Prints the error profile
per angular sector and the fraction of angles within half a step.
"""
from __future__ import annotations

import argparse
import math

import numpy as np

from radiomap.channel import MultipathComponent, RadioConfig, synth_csi
from radiomap.features import DEFAULT_GRID_STEP, local_angle_grid, music_aod
from radiomap.scene import AccessPoint, wrap_angle


def main(argv=None) -> None:
    ap_ = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap_.add_argument("-n", type=int, default=5000)
    ap_.add_argument("--seed", type=int, default=0)
    args = ap_.parse_args(argv)
    rng = np.random.default_rng(args.seed)
    cfg = RadioConfig()
    step = DEFAULT_GRID_STEP
    span = local_angle_grid(step)[-1]
    ap = AccessPoint((0.0, 0.0), 0.0, 8, cfg.wavelength / 2)
    phi = rng.uniform(-span, span, args.n)
    err = np.array([abs(wrap_angle(music_aod(synth_csi([MultipathComponent(1.0, 0.0, p)], ap, cfg), ap, step) - p))
                    for p in phi])
    print(f"{args.n} angles, grid step {math.degrees(step):.2f} deg, bound step/2 = {step / 2:.3e} rad")
    edges = np.radians([0, 30, 60, 75, 85, 89.5])
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (np.abs(phi) >= lo) & (np.abs(phi) < hi)
        if sel.any():
            print(f"|phi| in [{math.degrees(lo):4.1f}, {math.degrees(hi):4.1f}) deg: worst {err[sel].max():.3e} rad, "
                  f"{np.mean(err[sel] <= step / 2):.4f} within step/2")
    print(f"overall: {np.mean(err <= step / 2):.4f} within step/2, worst {err.max():.3e} rad")


if __name__ == "__main__":
    main()
