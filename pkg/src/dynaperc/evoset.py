"""Evolving sets for time-inhomogeneous finite chains.

Subsets are Python int bitmasks over the state space.  The one-step law is
exact: sort the distinct threshold values Q(S, y) / pi(y) and read off the
piecewise-constant map U -> S-tilde (non-strict comparison, so U = 0 yields
the full space).  The Doob transform reweights by pi(S') / pi(S); its
normalization is equivalent to the martingale property of pi(S_k).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import CapabilityError, InputError
from .expansion import ExpansionProfile, profile_from_values, profile_integral

# Exact subset-law propagation caps the state count.
SET_LAW_MAX_STATES = 14
# Mass below this is pruned during propagation and added to the error budget.
PRUNE_EPS = 1e-15


@dataclass(frozen=True)
class InhomChain:
    """A fixed kernel sequence sharing one full-support stationary pi."""

    pi: np.ndarray
    kernels: tuple[np.ndarray, ...]

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=float)
        if pi.ndim != 1 or (pi <= 0).any() or abs(pi.sum() - 1.0) > 1e-10:
            raise InputError("pi must be a strictly positive distribution")
        ks = tuple(np.asarray(K, dtype=float) for K in self.kernels)
        for K in ks:
            if K.shape != (len(pi), len(pi)):
                raise InputError("kernel shape mismatch")
            if np.abs(K.sum(axis=1) - 1.0).max() > 1e-12:
                raise InputError("kernel rows must sum to 1")
            if np.abs(pi @ K - pi).max() > 1e-12:
                raise InputError("pi is not stationary for some kernel")
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "kernels", ks)

    @property
    def n_states(self) -> int:
        return len(self.pi)

    def kernel(self, k: int) -> np.ndarray:
        """Kernel used for the step from time k to k+1 (0-based)."""
        return self.kernels[k]


def mask_members(mask: int, m: int) -> np.ndarray:
    return np.array([(mask >> i) & 1 for i in range(m)], dtype=bool)


def set_mass(mask: int, pi: np.ndarray) -> float:
    return float(pi[mask_members(mask, len(pi))].sum())


def z_statistic(mask: int, pi: np.ndarray) -> float:
    """Z = sqrt(pi(S#)) / pi(S) with S# = S when pi(S) <= 1/2 else S^c."""
    m = len(pi)
    mass = set_mass(mask, pi)
    if mass == 0.0:
        raise InputError("Z is undefined at the empty set")
    # the complement mass can round to -1 ulp when pi sums to just above 1
    sharp = mass if mass <= 0.5 else max(1.0 - mass, 0.0)
    return math.sqrt(sharp) / mass


@dataclass(frozen=True)
class EvoSetState:
    mask: int
    pi_mass: float
    z: Optional[float]  # None at the empty set


@dataclass(frozen=True)
class SetLaw:
    """Exact one-step law: distinct subsets with positive probabilities."""

    entries: tuple[tuple[int, float], ...]

    def __post_init__(self):
        total = sum(p for _, p in self.entries)
        if abs(total - 1.0) > 1e-12:
            raise InputError(f"set law sums to {total}")
        if len({m for m, _ in self.entries}) != len(self.entries):
            raise InputError("duplicate subsets in set law")
        if any(p <= 0 for _, p in self.entries):
            raise InputError("probabilities must be positive")

    def mean_mass(self, pi: np.ndarray) -> float:
        return sum(p * set_mass(m, pi) for m, p in self.entries)


def _ratios(mask: int, K: np.ndarray, pi: np.ndarray) -> np.ndarray:
    """r_y = Q(S, y) / pi(y) for every state y."""
    members = mask_members(mask, len(pi))
    return (pi[members] @ K[members]) / pi


def evolve_step(mask: int, K: np.ndarray, pi: np.ndarray, U: float) -> int:
    """Threshold rule: next set = {y : Q(S, y)/pi(y) >= U} (non-strict)."""
    if not 0.0 <= U <= 1.0:
        raise InputError("U must lie in [0, 1]")
    m = len(pi)
    if mask == 0:
        return 0
    r = _ratios(mask, K, pi)
    out = 0
    for y in range(m):
        if r[y] >= U:
            out |= 1 << y
    return out


def step_law(mask: int, K: np.ndarray, pi: np.ndarray) -> SetLaw:
    """Exact one-step law of the evolving set."""
    m = len(pi)
    if mask == 0:
        return SetLaw(((0, 1.0),))
    r = _ratios(mask, K, pi)
    values = [float(v) for v in np.unique(r)[::-1] if v > 0.0]  # descending
    levels = []
    for v in values:
        s = 0
        for y in range(m):
            if r[y] >= v:
                s |= 1 << y
        levels.append((s, v))
    # P(S-tilde = set at level v_i) = v_i - v_{i+1}; P(empty) = 1 - v_1
    out = []
    if levels:
        if 1.0 - levels[0][1] > 0.0:
            out.append((0, 1.0 - levels[0][1]))
        for i, (s, v) in enumerate(levels):
            nxt = levels[i + 1][1] if i + 1 < len(levels) else 0.0
            p = v - nxt
            if p > 0.0:
                out.append((s, p))
    else:
        out.append((0, 1.0))
    return SetLaw(tuple(out))


def doob_step_law(mask: int, K: np.ndarray, pi: np.ndarray) -> SetLaw:
    """Doob transform: reweight by pi(S') / pi(S); the empty set gets mass 0."""
    if mask == 0:
        raise InputError("Doob transform undefined from the empty set")
    base = step_law(mask, K, pi)
    mass0 = set_mass(mask, pi)
    out = []
    for s, p in base.entries:
        w = set_mass(s, pi) / mass0
        if w > 0.0:
            out.append((s, p * w))
    return SetLaw(tuple(out))


def expected_sqrt_ratio(mask: int, K: np.ndarray, pi: np.ndarray) -> float:
    """psi_p(S) = 1 - E[sqrt(pi(S-tilde) / pi(S))]."""
    if mask == 0:
        raise InputError("S must be nonempty")
    law = step_law(mask, K, pi)
    mass0 = set_mass(mask, pi)
    e = sum(p * math.sqrt(set_mass(s, pi) / mass0) for s, p in law.entries)
    return 1.0 - e


def run_evoset(chain: InhomChain, s0: int, steps: int,
               seed: Optional[int] = None) -> list[EvoSetState]:
    """Ordinary run driven by i.i.d. uniforms; reports absorption states as-is."""
    if steps > len(chain.kernels):
        raise InputError("steps exceed the kernel sequence length")
    rng = np.random.default_rng(seed)
    pi = chain.pi
    states = [_state(s0, pi)]
    mask = s0
    for k in range(steps):
        mask = evolve_step(mask, chain.kernel(k), pi, float(rng.random()))
        states.append(_state(mask, pi))
    return states


def doob_run(chain: InhomChain, s0: int, steps: int,
             seed: Optional[int] = None) -> tuple[list[EvoSetState], list[float]]:
    """Doob-transformed run; never reaches the empty set.  The importance
    weights pi(S_0) / pi(S_k) convert Doob-path averages back to the
    ordinary law."""
    if s0 == 0:
        raise InputError("Doob run cannot start at the empty set")
    if steps > len(chain.kernels):
        raise InputError("steps exceed the kernel sequence length")
    rng = np.random.default_rng(seed)
    pi = chain.pi
    mask = s0
    mass0 = set_mass(s0, pi)
    states = [_state(mask, pi)]
    weights = [1.0]
    for k in range(steps):
        law = doob_step_law(mask, chain.kernel(k), pi)
        probs = np.array([p for _, p in law.entries])
        idx = rng.choice(len(probs), p=probs / probs.sum())
        mask = law.entries[int(idx)][0]
        states.append(_state(mask, pi))
        weights.append(mass0 / set_mass(mask, pi))
    return states, weights


def _state(mask: int, pi: np.ndarray) -> EvoSetState:
    mass = set_mass(mask, pi)
    z = None if mask == 0 else z_statistic(mask, pi)
    return EvoSetState(mask=mask, pi_mass=mass, z=z)


def propagate_set_law(kernels: Sequence[np.ndarray], pi: np.ndarray, s0: int,
                      doob: bool = False,
                      prune: float = PRUNE_EPS) -> tuple[list[dict[int, float]], float]:
    """Exact subset-law propagation: list of {mask: prob} per step, plus the
    total pruned mass (added to the caller's error budget)."""
    m = len(pi)
    if m > SET_LAW_MAX_STATES:
        raise CapabilityError(f"{m} states exceeds the subset-law cap {SET_LAW_MAX_STATES}")
    laws = [{s0: 1.0}]
    pruned = 0.0
    current = {s0: 1.0}
    for K in kernels:
        nxt: dict[int, float] = {}
        for mask, prob in current.items():
            law = doob_step_law(mask, K, pi) if doob else step_law(mask, K, pi)
            for s, p in law.entries:
                nxt[s] = nxt.get(s, 0.0) + prob * p
        if prune > 0.0:
            small = [s for s, p in nxt.items() if p < prune]
            for s in small:
                pruned += nxt.pop(s)
        current = nxt
        laws.append(dict(current))
    return laws, pruned


def marginal_identity_check(chain: InhomChain, x: int, k: int) -> float:
    """Max abs discrepancy between the kernel-product law of X_k and
    pi(y)/pi(x) * P(y in S_k) from the exact subset law started at {x}."""
    pi = chain.pi
    if k > len(chain.kernels):
        raise InputError("k exceeds the kernel sequence length")
    laws, pruned = propagate_set_law(chain.kernels[:k], pi, 1 << x, doob=False,
                                     prune=0.0)
    final = laws[-1]
    m = chain.n_states
    member_prob = np.zeros(m)
    for mask, p in final.items():
        for y in range(m):
            if (mask >> y) & 1:
                member_prob[y] += p
    vec = np.zeros(m)
    vec[x] = 1.0
    for K in chain.kernels[:k]:
        vec = vec @ K
    rhs = pi / pi[x] * member_prob
    return float(np.abs(vec - rhs).max())


def psi_profile_kernels(kernels: Sequence[np.ndarray], pi: np.ndarray) -> ExpansionProfile:
    """Step profile psi(r) = min over kernels and pi(S) <= r of psi_p(S)."""
    m = len(pi)
    if m > SET_LAW_MAX_STATES:
        raise CapabilityError(f"{m} states exceeds the subset-law cap {SET_LAW_MAX_STATES}")
    masses, psis = [], []
    # deduplicate identical kernels to keep the scan cheap for cycled sequences
    uniq = []
    for K in kernels:
        if not any(K is U or (K.shape == U.shape and np.array_equal(K, U)) for U in uniq):
            uniq.append(K)
    for bits in range(1, 1 << m):
        mass = set_mass(bits, pi)
        if mass > 0.5 + 1e-12:
            continue
        masses.append(mass)
        psis.append(min(expected_sqrt_ratio(bits, K, pi) for K in uniq))
    return profile_from_values(masses, psis, "exact-enumerated", float(pi.min()))


def psi_step_count(chain: InhomChain, x: int, eps: float) -> int:
    """Step count from the psi-profile integral: the smallest integer
    n >= integral_{4 pi(x)}^{4/eps} du / (u psi(u))."""
    profile = psi_profile_kernels(chain.kernels, chain.pi)
    integral = profile_integral(profile, 4.0 * float(chain.pi[x]), 4.0 / eps,
                                power=1)
    return max(0, int(math.ceil(integral - 1e-9)))


@dataclass(frozen=True)
class ZBoundReport:
    chi_values: np.ndarray
    z_expectations: np.ndarray
    chi_ok: bool
    psi_steps: Optional[int]
    z_at_psi_steps: Optional[float]
    z_bound_ok: Optional[bool]
    pruned_mass: float


def doob_z_bound_check(chain: InhomChain, x: int, k: Optional[int] = None,
                       eps: Optional[float] = None) -> ZBoundReport:
    """Exact Doob propagation from {x}: checks chi(law of X_j, pi) <= E-hat[Z_j]
    per step, and E-hat[Z_n] <= sqrt(eps) at the psi-integral step count."""
    pi = chain.pi
    if k is None:
        k = len(chain.kernels)
    if k > len(chain.kernels):
        raise InputError("k exceeds the kernel sequence length")
    laws, pruned = propagate_set_law(chain.kernels[:k], pi, 1 << x, doob=True)
    z_exp = np.empty(k + 1)
    chis = np.empty(k + 1)
    vec = np.zeros(chain.n_states)
    vec[x] = 1.0
    for j in range(k + 1):
        z_exp[j] = sum(p * z_statistic(mask, pi) for mask, p in laws[j].items())
        chis[j] = math.sqrt(max(0.0, float(np.sum((vec - pi) ** 2 / pi))))
        if j < k:
            vec = vec @ chain.kernel(j)
    slack = 1e-9 + pruned * 10.0
    chi_ok = bool(np.all(chis <= z_exp + slack))
    psi_steps = None
    z_at = None
    z_ok = None
    if eps is not None:
        psi_steps = psi_step_count(chain, x, eps)
        if psi_steps <= k:
            z_at = float(z_exp[psi_steps])
            z_ok = bool(z_at <= math.sqrt(eps) + slack)
    return ZBoundReport(chi_values=chis, z_expectations=z_exp, chi_ok=chi_ok,
                        psi_steps=psi_steps, z_at_psi_steps=z_at,
                        z_bound_ok=z_ok, pruned_mass=pruned)
