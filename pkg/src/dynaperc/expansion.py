"""Conductance machinery: Q-flows, set expansion, profiles, and the integral
mixing bound for chains in Markovian evolving environments.

Profiles are step functions on the achievable set-mass knots; the mixing-bound
integral is evaluated in closed form per step, so no quadrature error enters a
certified bound.  Certified provenance ("exact-enumerated" or
"analytic-torus-bound") is required by the bound; family-restricted profiles
are diagnostics only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import InputError, UncertifiedProfileError

CERTIFIED_PROVENANCES = ("exact-enumerated", "analytic-torus-bound")
PROVENANCES = CERTIFIED_PROVENANCES + ("family-restricted",)


def q_flow(K: np.ndarray, pi: np.ndarray, A, B) -> float:
    """Q(A, B) = sum_{x in A, y in B} pi(x) K(x, y)."""
    K = np.asarray(K, dtype=float)
    pi = np.asarray(pi, dtype=float)
    A = _as_mask(A, len(pi))
    B = _as_mask(B, len(pi))
    return float(pi[A] @ K[np.ix_(A, B)].sum(axis=1))


def _as_mask(S, n: int) -> np.ndarray:
    S = np.asarray(S)
    if S.dtype == bool:
        if S.shape != (n,):
            raise InputError("mask has wrong length")
        return S
    mask = np.zeros(n, dtype=bool)
    mask[S.astype(int)] = True
    return mask


def expansion_phi(K: np.ndarray, pi: np.ndarray, S) -> float:
    """phi(S) = Q(S, S^c) / pi(S), the stationary one-step escape probability."""
    pi = np.asarray(pi, dtype=float)
    mask = _as_mask(S, len(pi))
    if not mask.any():
        raise InputError("S must be nonempty")
    return q_flow(K, pi, mask, ~mask) / float(pi[mask].sum())


def phi_env(R_row: np.ndarray, kernels: Sequence[np.ndarray], pi: np.ndarray, S) -> float:
    """Environment-averaged expansion: run the environment one step from zeta
    (whose R-row is given) and average phi of the resulting kernel."""
    R_row = np.asarray(R_row, dtype=float)
    total = 0.0
    for w, K in zip(R_row, kernels):
        if w > 0:
            total += w * expansion_phi(K, pi, S)
    return total


def phi_env_mc(sample_kernel: Callable[[int], np.ndarray], pi: np.ndarray, S,
               samples: int = 1000) -> tuple[float, tuple[float, float]]:
    """Monte Carlo E[phi_{K_1}(S)] when the one-step kernel can only be sampled."""
    if samples < 2:
        raise InputError("need at least 2 samples")
    vals = np.array([expansion_phi(sample_kernel(i), pi, S) for i in range(samples)])
    se = vals.std(ddof=1) / math.sqrt(samples)
    m = float(vals.mean())
    return m, (m - 1.96 * se, m + 1.96 * se)


@dataclass(frozen=True)
class ExpansionProfile:
    """Nonincreasing step function r -> phi(r), constant at phi(1/2) for r >= 1/2.

    `knots` are increasing mass values; `values[i]` holds on
    [knots[i], knots[i+1]).  `pi_star` is the smallest stationary mass.
    """

    knots: np.ndarray
    values: np.ndarray
    provenance: str
    pi_star: float

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise InputError(f"unknown provenance {self.provenance!r}")
        k = np.asarray(self.knots, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if k.shape != v.shape or k.ndim != 1 or len(k) == 0:
            raise InputError("knots and values must be matching nonempty 1-d arrays")
        if np.any(np.diff(k) <= 0):
            raise InputError("knots must be strictly increasing")
        if np.any(np.diff(v) > 1e-12):
            raise InputError("profile must be nonincreasing")
        object.__setattr__(self, "knots", k)
        object.__setattr__(self, "values", v)

    @property
    def certified(self) -> bool:
        return self.provenance in CERTIFIED_PROVENANCES

    def value(self, u: float) -> float:
        u = min(u, 0.5)  # phi(r) = phi(1/2) above 1/2
        u = max(u, float(self.knots[0]))
        i = int(np.searchsorted(self.knots, u, side="right")) - 1
        return float(self.values[i])

    def serialize(self) -> str:
        head = f"# dynaperc-profile-v1 provenance={self.provenance} pi_star={self.pi_star!r}\n"
        body = "".join(f"{float(k)!r} {float(v)!r}\n"
                       for k, v in zip(self.knots, self.values))
        return head + body

    @classmethod
    def deserialize(cls, text: str) -> "ExpansionProfile":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        head = lines[0]
        if not head.startswith("# dynaperc-profile-v1"):
            raise InputError("not a dynaperc profile")
        fields = dict(tok.split("=", 1) for tok in head.split()[2:])
        pairs = [tuple(float(t) for t in ln.split()) for ln in lines[1:]]
        ks, vs = zip(*pairs)
        return cls(np.array(ks), np.array(vs), fields["provenance"],
                   float(fields["pi_star"]))


def profile_from_values(masses: Sequence[float], phis: Sequence[float],
                        provenance: str, pi_star: float) -> ExpansionProfile:
    """Build the running-infimum step profile from per-set (mass, phi) pairs.

    Only masses <= 1/2 contribute; phi(r) for r between knots equals the
    infimum over all sets of mass at most the previous knot.
    """
    masses = np.asarray(masses, dtype=float)
    phis = np.asarray(phis, dtype=float)
    keep = masses <= 0.5 + 1e-12
    masses, phis = masses[keep], phis[keep]
    if len(masses) == 0:
        raise InputError("no sets of mass <= 1/2")
    order = np.argsort(masses, kind="stable")
    masses, phis = masses[order], phis[order]
    knots, values = [], []
    running = math.inf
    for m, f in zip(masses, phis):
        running = min(running, f)
        if knots and abs(m - knots[-1]) < 1e-15:
            values[-1] = running
        else:
            knots.append(float(m))
            values.append(running)
    # collapse runs where the infimum did not move (keeps profiles small)
    ks, vs = [knots[0]], [values[0]]
    for k, v in zip(knots[1:], values[1:]):
        if v < vs[-1] - 0.0:
            ks.append(k)
            vs.append(v)
    return ExpansionProfile(np.array(ks), np.array(vs), provenance, pi_star)


def profile_phi_env(R: np.ndarray, kernels: Sequence[np.ndarray],
                    pi: np.ndarray, max_states: int = 24) -> ExpansionProfile:
    """Exact profile phi(r) = inf over env states and pi(S) <= r of phi(zeta, S)."""
    pi = np.asarray(pi, dtype=float)
    m = len(pi)
    if m > max_states:
        raise InputError(f"{m} states exceeds the enumeration cap {max_states}")
    masses, phis = [], []
    for bits in range(1, 1 << m):
        mask = np.array([(bits >> i) & 1 for i in range(m)], dtype=bool)
        mass = float(pi[mask].sum())
        if mass > 0.5 + 1e-12:
            continue
        val = min(phi_env(R[z], kernels, pi, mask) for z in range(len(R)))
        masses.append(mass)
        phis.append(val)
    return profile_from_values(masses, phis, "exact-enumerated", float(pi.min()))


def profile_phi_kernels(kernels: Sequence[np.ndarray], pi: np.ndarray,
                        max_states: int = 24) -> ExpansionProfile:
    """Exact profile over a fixed kernel collection (quenched sequences):
    phi(r) = min over kernels and pi(S) <= r of phi_p(S)."""
    pi = np.asarray(pi, dtype=float)
    m = len(pi)
    if m > max_states:
        raise InputError(f"{m} states exceeds the enumeration cap {max_states}")
    masses, phis = [], []
    for bits in range(1, 1 << m):
        mask = np.array([(bits >> i) & 1 for i in range(m)], dtype=bool)
        mass = float(pi[mask].sum())
        if mass > 0.5 + 1e-12:
            continue
        masses.append(mass)
        phis.append(min(expansion_phi(K, pi, mask) for K in kernels))
    return profile_from_values(masses, phis, "exact-enumerated", float(pi.min()))


def profile_family(masses: Sequence[float], phis: Sequence[float],
                   pi_star: float) -> ExpansionProfile:
    """Upper envelope over a documented candidate family; diagnostics only."""
    return profile_from_values(masses, phis, "family-restricted", pi_star)


def torus_analytic_profile(d: int, n: int, mu: float, c: float,
                           knots_per_decade: int = 16) -> ExpansionProfile:
    """Discretized analytic lower-bound profile r -> c mu^2 / (n r^(1/d)).

    The unit-block environment averaging contributes one factor of mu through
    the binomial open-edge bound and one through its probability, hence mu^2.
    Each step takes the value at its right endpoint, so the step profile is a
    pointwise lower bound on the analytic curve.
    """
    pi_star = 1.0 / n ** d
    lo = math.log10(pi_star)
    count = max(2, int(-lo * knots_per_decade) + 1)
    knots = np.logspace(lo, math.log10(0.5), count)
    knots[0] = pi_star
    knots[-1] = 0.5
    rights = np.append(knots[1:], 0.5)
    values = c * mu ** 2 / (n * rights ** (1.0 / d))
    return ExpansionProfile(knots, values, "analytic-torus-bound", pi_star)


def profile_integral(profile: ExpansionProfile, lo: float, hi: float,
                     power: int = 2) -> float:
    """Closed-form integral of du / (u * phi(u)^power) over [lo, hi]."""
    if hi <= lo:
        return 0.0
    total = 0.0
    # breakpoints: profile knots within (lo, hi), plus the constant tail
    points = [lo] + [float(k) for k in profile.knots if lo < k < hi] + [hi]
    for a, b in zip(points[:-1], points[1:]):
        v = profile.value(a)
        if v <= 0.0:
            raise InputError("profile vanishes; the integral diverges")
        total += math.log(b / a) / v ** power
    return total


def integral_mixing_bound(profile: ExpansionProfile, gamma: float,
                          pi_x: float, eps: float) -> int:
    """Smallest step count n >= 1 + (2(1-gamma)^2/gamma^2) *
    integral_{4 pi(x)}^{4/eps} du / (u phi^2(u))."""
    if not 0.0 < gamma <= 0.5:
        raise InputError(f"gamma must be in (0, 1/2], got {gamma}")
    if not pi_x > 0.0:
        raise InputError("pi(x) must be positive")
    if not 0.0 < eps < 1.0:
        raise InputError("eps must be in (0, 1)")
    if not profile.certified:
        raise UncertifiedProfileError(
            "family-restricted profiles give upper envelopes only; "
            "the certified bound needs exact-enumerated or analytic-torus-bound")
    integral = profile_integral(profile, 4.0 * pi_x, 4.0 / eps, power=2)
    factor = 2.0 * (1.0 - gamma) ** 2 / gamma ** 2
    raw = 1.0 + factor * integral
    return max(1, int(math.ceil(raw - 1e-9)))


@dataclass(frozen=True)
class PhiLowerBoundRecord:
    phi: float
    beta: float
    pi_S: float
    ratio: Optional[float]   # phi * n * pi(S)^(1/d) / beta, None when beta == 0
    vacuous: bool


def torus_phi_lower_bound_check(env, S, interval: Optional[tuple[float, float]] = None,
                                laziness: str = "plain") -> PhiLowerBoundRecord:
    """Measure phi of a window kernel against the boundary-opening fraction.

    beta is the fraction of boundary edges open throughout the second half of
    the window; the record carries the witness ratio
    phi * n * pi(S)^(1/d) / beta.
    """
    from .dynenv import count_open_throughout
    from .torus import edge_boundary
    from .walk import window_kernel

    g = env.graph
    if S.pi_mass > 0.5 + 1e-12:
        raise InputError("need pi(S) <= 1/2")
    if interval is None:
        interval = (0.0, 1.0)
    a, b = interval
    boundary = edge_boundary(g, S)
    open_cnt = count_open_throughout(env, boundary, (a + b) / 2.0, b)
    beta = open_cnt / len(boundary)
    K = window_kernel(env, (a, b), laziness=laziness)
    pi = np.full(g.n_vertices, 1.0 / g.n_vertices)
    phi = expansion_phi(K.matrix, pi, S.mask)
    if beta == 0.0:
        return PhiLowerBoundRecord(phi=phi, beta=0.0, pi_S=S.pi_mass,
                                   ratio=None, vacuous=True)
    ratio = phi * g.n * S.pi_mass ** (1.0 / g.d) / beta
    return PhiLowerBoundRecord(phi=phi, beta=beta, pi_S=S.pi_mass,
                               ratio=ratio, vacuous=False)
