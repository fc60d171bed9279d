"""Quenched mixing times across torus size and refresh rate.

Reproduces the desk-scale n^2/mu scaling experiment: median quenched mixing
time to within TV 1/4 of uniform, on the 1/mu evaluation grid, fitted jointly
in log n and log(1/mu).
"""

import math

import numpy as np

from dynaperc.dist import quenched_mixing_time
from dynaperc.dynenv import DynParams, sample_env
from dynaperc.torus import TorusGraph

meds = {}
for n in (8, 16):
    for mu in (0.5, 0.125):
        g = TorusGraph(d=1, n=n)
        params = DynParams(p=0.5, mu=mu, horizon=30 * n * n / mu)
        times = [quenched_mixing_time(
            sample_env(g, params, init="all-closed", seed=555 + 1000 * n + 17 * i),
            0, 0.25) for i in range(15)]
        meds[(n, mu)] = float(np.median(times))
        print(f"n={n:2d} mu={mu:5.3f}: median t_mix = {meds[(n, mu)]:8.1f}"
              f"   (n^2/mu = {n * n / mu:.0f})")

X = np.array([[1.0, math.log(n), math.log(1 / mu)] for (n, mu) in meds])
y = np.array([math.log(t) for t in meds.values()])
coef, *_ = np.linalg.lstsq(X, y, rcond=None)
print(f"\nfitted exponents: n^{coef[1]:.2f} * (1/mu)^{coef[2]:.2f}"
      "   (asymptotic target: n^2 * (1/mu)^1)")
