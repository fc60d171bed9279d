"""The evolving-set process, its Doob transform, and the Z statistic.

For a stochastic kernel K with stationary pi, the evolving set S' keeps every
state y with Q(S, y)/pi(y) above an independent uniform threshold.  pi(S_k)
is a martingale; the Doob transform conditions on survival; and the expected
growth gap psi lower-bounds via the expansion phi:
    psi >= gamma^2 / (2 (1-gamma)^2) * phi^2.
"""

import numpy as np

from dynaperc import evoset as E
from dynaperc.expansion import expansion_phi

rng = np.random.default_rng(3)
pi = np.array([0.1, 0.2, 0.3, 0.4])
# reversible kernel: symmetric flows A scaled so every row keeps positive mass
A = rng.random((4, 4))
A = A + A.T
np.fill_diagonal(A, 0.0)
K = 0.4 * (A / pi[:, None]) / (A.sum(axis=1) / pi).max()
np.fill_diagonal(K, 1.0 - K.sum(axis=1))
assert (np.diag(K) > 0).all()

mask = 0b0011  # S = {0, 1}
law = E.step_law(mask, K, pi)
print(f"pi(S) = {E.set_mass(mask, pi):.3f}, "
      f"E[pi(S')] = {law.mean_mass(pi):.3f} (martingale)")

gamma = min(float(np.diag(K).min()), 0.5)
psi = E.expected_sqrt_ratio(mask, K, pi)
phi = expansion_phi(K, pi, E.mask_members(mask, 4))
print(f"psi = {psi:.4f} >= {gamma ** 2 / (2 * (1 - gamma) ** 2) * phi ** 2:.4f}"
      f"  (gamma = {gamma:.2f}, phi = {phi:.4f})")

# certified chi-square contraction: E-hat[Z_k] decays below sqrt(eps)
eps = 0.1
steps = E.psi_step_count(E.InhomChain(pi=pi, kernels=(K,)), x=0, eps=eps)
chain = E.InhomChain(pi=pi, kernels=(K,) * steps)
rep = E.doob_z_bound_check(chain, x=0, eps=eps)
print(f"\npsi-integral step count: {steps}")
print(f"chi <= E-hat[Z] at every step: {rep.chi_ok}")
print(f"E-hat[Z_{steps}] = {rep.z_at_psi_steps:.3e} <= sqrt(eps) = {eps ** 0.5:.3f}: "
      f"{bool(rep.z_bound_ok)}")
