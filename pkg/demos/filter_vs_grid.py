"""Particle filter against the finite-volume solution of the Zakai equation.

Simulates one path of the shared-jump model, runs the weighted particle
filter and the grid solver on the same observation record, and prints the
L1 distance between the normalized conditional densities at T together with
a coarse text plot.
"""

import numpy as np

from jumpfilter.acceptance import filter_vs_grid
from jumpfilter.filtering import density_estimate
from jumpfilter.models import get_model


def main(seed=0, N=10_000):
    model = get_model("jump-shared-1d")
    dist, run, grid = filter_vs_grid(model, seed, N)
    print(f"L1 distance at T = {run.times[-1]:.2f}: {dist:.4f}")
    x = grid.x
    ref = grid.normalized()
    est = density_estimate(run.final, x[:, None], normalized=True)
    print(f"{'x':>6}  {'particles':>9}  {'grid':>9}")
    for i in range(0, x.size, x.size // 20):
        bar = "#" * int(40 * est[i] / ref.max())
        print(f"{x[i]:6.2f}  {est[i]:9.4f}  {ref[i]:9.4f}  {bar}")


if __name__ == "__main__":
    main()
