"""Cross-check the two solver paths on a problem both can handle.

A quadratic interaction kernel keeps the dynamics linear, so the grid
pipeline (nonlinear chain transport) and the closed-form pipeline (matrix
flows) solve the same problem.  Their slice means and variances should
agree up to discretization; the script prints both side by side.
"""

import pathlib

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from swarmsteer import (DynamicsSpec, InteractionPotential, LqSpec, ProbVector,
                        ProximalConfig, discretize_gaussian, make_grid,
                        solve_density_control, solve_lq)

OUT = pathlib.Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

kappa, eps = 0.3, 0.5
grid = make_grid(-1.8, 1.8, 151)
mu = discretize_gaussian(grid, -0.3, 0.09)
nu = discretize_gaussian(grid, 0.3, 0.09)

print("grid pipeline ...")
spec = DynamicsSpec(pot=InteractionPotential.quadratic(kappa), eps=eps, steps=20)
report = solve_density_control(spec, mu, nu, ProximalConfig())
assert report.converged

print("closed-form pipeline ...")
lq = solve_lq(LqSpec(A=[[[0.0]]], Abar=[[[[kappa]]]], sigma=[[1.0]], Q=[[[0.0]]],
                     eps=eps, means0=[[-0.3]], covs0=[[[0.09]]],
                     means1=[[0.3]], covs1=[[[0.09]]]), mesh=400)

print(f"{'t':>5} {'grid mean':>10} {'exact mean':>11} {'grid var':>9} {'exact var':>10}")
grid_means, grid_vars = [], []
for i in range(21):
    t = i / 20
    slice_density = ProbVector(grid, report.marg.node[i])
    k = int(t * 400)
    grid_means.append(slice_density.mean())
    grid_vars.append(slice_density.variance())
    if i % 5 == 0:
        print(f"{t:5.2f} {slice_density.mean():10.5f} {lq.m[0][k, 0]:11.5f} "
              f"{slice_density.variance():9.5f} {lq.Sigma[0][k, 0, 0]:10.5f}")

fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
ts = np.linspace(0, 1, 21)
ax1.plot(lq.ts, lq.m[0][:, 0], label="closed form", color="k")
ax1.plot(ts, grid_means, "o", label="grid solver", ms=4)
ax1.set_title("slice means")
ax1.legend()
ax2.plot(lq.ts, lq.Sigma[0][:, 0, 0], color="k")
ax2.plot(ts, grid_vars, "o", ms=4)
ax2.set_title("slice variances")
for ax in (ax1, ax2):
    ax.set_xlabel("time")
fig.tight_layout()
fig.savefig(OUT / "grid_vs_closed_form.png", dpi=130)
print(f"wrote {OUT / 'grid_vs_closed_form.png'}")
