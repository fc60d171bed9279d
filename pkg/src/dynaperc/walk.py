"""The quenched random walker.

Monte Carlo paths use attempted-jump thinning: a rate-1 Poisson clock of
attempts, a uniform direction among the 2d neighbours, and a move iff the
chosen edge is open at the attempt instant.  Exact distribution evolution runs
uniformization over the piecewise-constant jump generator between environment
flips, with a certified truncation budget.  All positions are reported right
continuously.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dynenv import EnvTrajectory
from .errors import CapabilityError, HorizonError, InputError
from .torus import TorusGraph, neighbors

# Exact evolution refuses state spaces larger than this by default.
EXACT_STATE_BUDGET = 4096
# Uniformization segments longer than this are split to avoid exp underflow.
_MAX_SEGMENT = 32.0


@dataclass(frozen=True)
class WalkPath:
    """A realized walk: start, realized jumps, and positions at query times."""

    start: int
    jump_times: np.ndarray
    jump_targets: np.ndarray
    query_times: np.ndarray
    query_positions: np.ndarray

    def position_at(self, t: float) -> int:
        k = int(np.searchsorted(self.jump_times, t, side="right"))
        return self.start if k == 0 else int(self.jump_targets[k - 1])


@dataclass(frozen=True)
class WalkKernel:
    """Stochastic matrix of the walk across one environment window."""

    window: tuple[float, float]
    matrix: np.ndarray
    laziness: str = "plain"  # "plain" | "half-lazy"

    def __post_init__(self):
        if self.laziness not in ("plain", "half-lazy"):
            raise InputError(f"unknown laziness tag {self.laziness!r}")

    @property
    def n_states(self) -> int:
        return self.matrix.shape[0]

    def to_text(self) -> str:
        """Dense row-major text dump for debugging."""
        return "\n".join(" ".join(repr(float(x)) for x in row) for row in self.matrix)


def _edge_of_direction(g: TorusGraph, v: int, direction: int) -> tuple[int, int]:
    """(target vertex, edge id) for direction k in [0, 2d): axis k//2, sign by parity."""
    axis, parity = divmod(direction, 2)
    if parity == 0:
        u = g.shift(v, axis, +1)
        return u, g.edge_id(v, axis)
    u = g.shift(v, axis, -1)
    return u, g.edge_id(u, axis)


def simulate_walk(env: EnvTrajectory, x0: int, horizon: float,
                  seed: Optional[int] = None,
                  query_times: Sequence[float] = ()) -> WalkPath:
    """One walk realization through a fixed environment."""
    g = env.graph
    g._check_vertex(x0)
    if horizon > env.horizon:
        raise HorizonError(f"walk horizon {horizon} past env horizon {env.horizon}")
    rng = np.random.default_rng(seed)
    t = 0.0
    v = x0
    jt: list[float] = []
    jv: list[int] = []
    while True:
        t += rng.exponential(1.0)
        if t > horizon:
            break
        u, e = _edge_of_direction(g, v, int(rng.integers(2 * g.d)))
        if env.edges[e].state_at(t) == 1:
            v = u
            jt.append(t)
            jv.append(v)
    q = np.asarray(sorted(query_times), dtype=float)
    jt_arr = np.asarray(jt)
    jv_arr = np.asarray(jv, dtype=np.int64)
    pos = np.empty(len(q), dtype=np.int64)
    for i, tq in enumerate(q):
        k = int(np.searchsorted(jt_arr, tq, side="right"))
        pos[i] = x0 if k == 0 else jv_arr[k - 1]
    return WalkPath(x0, jt_arr, jv_arr, q, pos)


def simulate_positions(env: EnvTrajectory, x0: int, t: float, n_replicas: int,
                       seed: Optional[int] = None) -> np.ndarray:
    """Vectorized ensemble of walk positions at time t through one fixed env."""
    g = env.graph
    g._check_vertex(x0)
    if t > env.horizon:
        raise HorizonError("past horizon")
    rng = np.random.default_rng(seed)
    counts = rng.poisson(t, size=n_replicas)
    kmax = int(counts.max()) if n_replicas else 0
    pos = np.full(n_replicas, x0, dtype=np.int64)
    # attempt j happens at the j-th order statistic of count uniforms
    for j in range(kmax):
        active = np.nonzero(counts > j)[0]
        if len(active) == 0:
            break
        # conditional on the Poisson count, attempt times are sorted uniforms;
        # generating per-attempt fresh uniform order statistics sequentially via
        # beta increments keeps everything vectorized
        if j == 0:
            times = np.zeros(n_replicas)
        times_active = times[active] + (t - times[active]) * (
            1.0 - rng.random(len(active)) ** (1.0 / (counts[active] - j)))
        times[active] = times_active
        dirs = rng.integers(2 * g.d, size=len(active))
        for a, tm, dr in zip(active, times_active, dirs):
            u, e = _edge_of_direction(g, int(pos[a]), int(dr))
            if env.edges[e].state_at(float(tm)) == 1:
                pos[a] = u
    return pos


def replay_is_legal(env: EnvTrajectory, path: WalkPath) -> bool:
    """Every jump of the path crossed an edge open at its jump instant."""
    g = env.graph
    v = path.start
    for t, u in zip(path.jump_times, path.jump_targets):
        e = None
        for w, eid in neighbors(g, v):
            if w == u:
                e = eid
                break
        if e is None or env.edges[e].state_at(float(t)) != 1:
            return False
        v = int(u)
    return True


# ---------------------------------------------------------------------------
# Exact evolution
# ---------------------------------------------------------------------------

def step_matrix(g: TorusGraph, open_mask: np.ndarray) -> np.ndarray:
    """P = I + Q for the frozen configuration; Q jumps across open edges at rate 1/(2d)."""
    N = g.n_vertices
    P = np.eye(N)
    rate = 1.0 / (2 * g.d)
    uv = g.edge_uv[open_mask]
    if len(uv):
        np.add.at(P, (uv[:, 0], uv[:, 1]), rate)
        np.add.at(P, (uv[:, 1], uv[:, 0]), rate)
        np.subtract.at(P, (uv[:, 0], uv[:, 0]), rate)
        np.subtract.at(P, (uv[:, 1], uv[:, 1]), rate)
    return P


def _apply_uniformized(mat: np.ndarray, P: np.ndarray, s: float, tol: float) -> np.ndarray:
    """mat @ expm((P - I) s) as a Poisson-weighted series, tail mass < tol."""
    if s == 0.0:
        return mat
    w = math.exp(-s)
    cum = w
    acc = w * mat
    term = mat
    k = 0
    while cum < 1.0 - tol:
        k += 1
        term = term @ P
        w *= s / k
        acc = acc + w * term
        cum += w
        if w == 0.0:  # weights underflowed; the series is numerically complete
            break
    return acc


class _Evolver:
    """Walks a distribution (or matrix of rows) through env flip segments."""

    def __init__(self, env: EnvTrajectory, t0: float, tol_total: float = 1e-10):
        self.env = env
        self.g = env.graph
        self.t = t0
        self.open_mask = env.open_mask_at(t0)
        self.P = step_matrix(self.g, self.open_mask)
        self.tol_total = tol_total
        self.spent = 0.0

    def _segment_tol(self, n_segments: int) -> float:
        # floor at 1e-15 so the series always terminates; total drift stays
        # below ~1e-15 per segment even on very long horizons
        return max((self.tol_total - self.spent) / (4 * max(n_segments, 1)),
                   1e-15)

    def advance(self, mat: np.ndarray, t1: float) -> np.ndarray:
        """Evolve mat from the current time to t1."""
        if t1 < self.t:
            raise InputError("cannot evolve backwards")
        times, eids = self.env.flip_events(self.t, t1)
        n_seg = len(times) + 1 + int((t1 - self.t) / _MAX_SEGMENT)
        tol = self._segment_tol(n_seg)
        prev = self.t
        for tm, e in zip(times, eids):
            mat = self._run_segment(mat, tm - prev, tol)
            prev = tm
            self.open_mask[e] = not self.open_mask[e]
            self.P = step_matrix(self.g, self.open_mask)
        mat = self._run_segment(mat, t1 - prev, tol)
        self.t = t1
        return mat

    def _run_segment(self, mat: np.ndarray, s: float, tol: float) -> np.ndarray:
        if s <= 0.0:
            return mat
        if not self.open_mask.any():
            # frozen walker: P = I
            return mat
        while s > _MAX_SEGMENT:
            mat = _apply_uniformized(mat, self.P, _MAX_SEGMENT, tol)
            self.spent += tol
            s -= _MAX_SEGMENT
        mat = _apply_uniformized(mat, self.P, s, tol)
        self.spent += tol
        return mat


def _check_budget(g: TorusGraph, budget: int) -> None:
    if g.n_vertices > budget:
        raise CapabilityError(
            f"{g.n_vertices} states exceeds the exact-mode budget {budget}; "
            "use the Monte Carlo estimators")


def exact_quenched_distribution(env: EnvTrajectory, x0: int, t: float,
                                tol: float = 1e-10,
                                budget: int = EXACT_STATE_BUDGET) -> np.ndarray:
    """The quenched law of the walk at time t, exact up to `tol` total variation."""
    g = env.graph
    g._check_vertex(x0)
    if t > env.horizon:
        raise HorizonError("past horizon")
    _check_budget(g, budget)
    vec = np.zeros(g.n_vertices)
    vec[x0] = 1.0
    ev = _Evolver(env, 0.0, tol)
    vec = ev.advance(vec[None, :], t)[0]
    return vec


def window_kernel(env: EnvTrajectory, window: tuple[float, float],
                  laziness: str = "plain", tol: float = 1e-10,
                  budget: int = EXACT_STATE_BUDGET) -> WalkKernel:
    """Exact stochastic matrix of the walk across [a, b] of the environment."""
    a, b = window
    if not 0 <= a <= b <= env.horizon:
        raise HorizonError(f"window {window} outside [0, {env.horizon}]")
    g = env.graph
    _check_budget(g, budget)
    ev = _Evolver(env, a, tol)
    K = ev.advance(np.eye(g.n_vertices), b)
    if laziness == "half-lazy":
        K = 0.5 * (K + np.eye(g.n_vertices))
    return WalkKernel(window=(a, b), matrix=K, laziness=laziness)


def block_chain(env: EnvTrajectory, block_length: float,
                laziness: str = "plain", tol: float = 1e-10,
                budget: int = EXACT_STATE_BUDGET) -> list[WalkKernel]:
    """Kernels of consecutive blocks [0, L], [L, 2L], ... up to the horizon.

    A horizon that is not a multiple of the block length is truncated (the
    trailing partial block is dropped).
    """
    if block_length <= 0:
        raise InputError("block length must be positive")
    g = env.graph
    _check_budget(g, budget)
    n_blocks = int(math.floor(env.horizon / block_length + 1e-9))
    kernels = []
    for k in range(n_blocks):
        a = k * block_length
        b = min((k + 1) * block_length, env.horizon)
        kernels.append(window_kernel(env, (a, b), laziness=laziness, tol=tol,
                                     budget=budget))
    return kernels


def quenched_tv_curve(env: EnvTrajectory, x0: int, grid: Sequence[float],
                      tol: float = 1e-10, stop_below: Optional[float] = None,
                      budget: int = EXACT_STATE_BUDGET) -> np.ndarray:
    """TV distance to uniform at each grid time, evolving incrementally.

    With `stop_below`, evolution stops at the first grid time whose TV is at or
    below the threshold; later entries are NaN.
    """
    g = env.graph
    g._check_vertex(x0)
    _check_budget(g, budget)
    grid = np.asarray(grid, dtype=float)
    if len(grid) and grid[-1] > env.horizon:
        raise HorizonError("grid reaches past horizon")
    N = g.n_vertices
    uniform = np.full(N, 1.0 / N)
    vec = np.zeros(N)
    vec[x0] = 1.0
    ev = _Evolver(env, 0.0, tol)
    out = np.full(len(grid), np.nan)
    for i, t in enumerate(grid):
        vec = ev.advance(vec[None, :], float(t))[0]
        out[i] = 0.5 * np.abs(vec - uniform).sum()
        if stop_below is not None and out[i] <= stop_below:
            break
    return out


def exact_hitting_profile(env: EnvTrajectory, A_mask: np.ndarray,
                          horizon: float, tol: float = 1e-10,
                          budget: int = EXACT_STATE_BUDGET) -> tuple[np.ndarray, np.ndarray]:
    """Quenched expected hitting times of A from every start, by absorbed evolution.

    Returns (expected_times, censored_mass): for each start x, the accumulated
    E[min(tau_A, horizon)] and the unabsorbed mass left at the horizon.  For
    x in A both are (0, 0).
    """
    g = env.graph
    _check_budget(g, budget)
    if horizon > env.horizon:
        raise HorizonError("past horizon")
    N = g.n_vertices
    A_mask = np.asarray(A_mask, dtype=bool)
    free = ~A_mask
    mat = np.eye(N)
    expected = np.zeros(N)
    t_prev = 0.0
    # walk flips manually so each constant segment can accumulate time mass
    times, eids = env.flip_events(0.0, horizon)
    seg_bounds = list(zip(times, eids)) + [(horizon, -1)]
    open_mask = env.open_mask_at(0.0)
    P = step_matrix(g, open_mask)
    Pa = P.copy()
    Pa[A_mask] = 0.0
    Pa[A_mask, A_mask] = 1.0
    tol_seg = max(tol / (4 * (len(seg_bounds) + int(horizon / _MAX_SEGMENT) + 1)),
                  1e-15)
    for t_next, e in seg_bounds:
        s_total = float(t_next) - t_prev
        while s_total > 1e-15:
            s = min(s_total, _MAX_SEGMENT)
            mat, dt = _absorbed_segment(mat, Pa, s, free, tol_seg)
            expected += dt
            s_total -= s
        t_prev = float(t_next)
        if mat[:, free].sum(axis=1).max() < 1e-14:
            break  # everything is absorbed; later segments contribute nothing
        if e >= 0:
            open_mask[e] = not open_mask[e]
            P = step_matrix(g, open_mask)
            Pa = P.copy()
            Pa[A_mask] = 0.0
            Pa[A_mask, A_mask] = 1.0
    censored = mat[:, free].sum(axis=1)
    expected[A_mask] = 0.0
    censored[A_mask] = 0.0
    return expected, censored


def _absorbed_segment(mat: np.ndarray, Pa: np.ndarray, s: float, free: np.ndarray,
                      tol: float) -> tuple[np.ndarray, np.ndarray]:
    """One uniformization segment of the absorbed chain plus the time integral
    of the unabsorbed mass: int_0^s (mass outside A at t) dt per start."""
    if s == 0.0:
        return mat, np.zeros(mat.shape[0])
    w = math.exp(-s)
    cum = w
    c = 1.0 - w  # int_0^s e^{-t} t^0/0! dt
    acc = w * mat
    term = mat
    dt = c * term[:, free].sum(axis=1)
    k = 0
    while cum < 1.0 - tol:
        k += 1
        term = term @ Pa
        w *= s / k
        acc = acc + w * term
        cum += w
        c = c - w  # int e^{-t} t^k/k! dt = previous - Poisson weight
        dt += c * term[:, free].sum(axis=1)
        if w == 0.0:  # weights underflowed; the series is numerically complete
            break
    return acc, dt
