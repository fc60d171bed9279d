"""Total variation / chi-square distances and mixing / hitting time statistics.

Mixing times are reported on an explicit evaluation grid (default: block
boundaries of the 1/mu discretization).  "Not mixed by horizon" is the
explicit outcome ``NOT_MIXED`` (math.inf), propagated through statistics as
censoring, never a guess.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import walk as walkmod
from .dynenv import DynParams, EnvTrajectory, sample_env
from .errors import InputError
from .torus import TorusGraph, VertexSet

NOT_MIXED = math.inf

CSV_SCHEMA_VERSION = 1
CSV_COLUMNS = ("d", "n", "p", "mu", "eps", "env_seed", "x", "statistic",
               "value", "ci_lo", "ci_hi", "method", "censored_frac")


def as_dist(a, tol: float = 1e-10) -> np.ndarray:
    """Validate a nonnegative weight vector summing to 1."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 1 or (a < -tol).any():
        raise InputError("distribution must be a nonnegative 1-d vector")
    if abs(a.sum() - 1.0) > tol:
        raise InputError(f"distribution sums to {a.sum()}, not 1")
    return a


def tv(a, b) -> float:
    """Total variation distance, half the L1 distance."""
    a = as_dist(a)
    b = as_dist(b)
    if a.shape != b.shape:
        raise InputError("distributions live on different supports")
    return float(0.5 * np.abs(a - b).sum())


def chi(a, b) -> float:
    """chi(a, b) = sqrt(sum_y b(y) (a(y)/b(y) - 1)^2); requires b > 0 where a > 0."""
    a = as_dist(a)
    b = as_dist(b)
    if a.shape != b.shape:
        raise InputError("distributions live on different supports")
    if ((b == 0) & (a > 0)).any():
        raise InputError("chi undefined: second argument vanishes where first is positive")
    good = b > 0
    return float(math.sqrt(np.sum(b[good] * (a[good] / b[good] - 1.0) ** 2)))


def default_grid(params: DynParams, horizon: Optional[float] = None) -> np.ndarray:
    """Block boundaries of the 1/mu discretization up to the horizon."""
    T = params.horizon if horizon is None else horizon
    step = 1.0 / params.mu
    n = int(math.floor(T / step + 1e-9))
    return step * np.arange(1, n + 1)


def quenched_mixing_time(env: EnvTrajectory, x: int, eps: float,
                         grid: Optional[Sequence[float]] = None,
                         mode: str = "exact") -> float:
    """First grid time with TV(quenched law, uniform) <= eps, or NOT_MIXED.

    TV along the grid is checked to be nonincreasing (uniform is stationary
    for every environment realization).
    """
    if eps >= 1.0:
        return 0.0
    if mode != "exact":
        raise InputError("only exact mode is implemented; use Monte Carlo helpers directly")
    if grid is None:
        grid = default_grid(env.params)
    grid = np.asarray(grid, dtype=float)
    tvs = walkmod.quenched_tv_curve(env, x, grid, stop_below=eps)
    seen = tvs[~np.isnan(tvs)]
    if len(seen) > 1 and np.any(np.diff(seen) > 1e-8):
        raise AssertionError("quenched TV to uniform increased along the grid")
    hit = np.nonzero(seen <= eps)[0]
    if len(hit) == 0:
        return NOT_MIXED
    return float(grid[hit[0]])


@dataclass(frozen=True)
class TailReport:
    fraction: float
    ci: tuple[float, float]
    threshold: float
    n_envs: int
    times: np.ndarray


def _wilson(k: int, n: int, z: float = 1.96) -> tuple[float, float]:
    if n == 0:
        return (0.0, 1.0)
    phat = k / n
    denom = 1.0 + z * z / n
    centre = phat + z * z / (2 * n)
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n))
    return ((centre - half) / denom, (centre + half) / denom)


def quenched_tail(g: TorusGraph, params: DynParams, x: int, eps: float,
                  threshold: float, env_samples: int,
                  seed: Optional[int] = None, init="all-closed",
                  grid: Optional[Sequence[float]] = None) -> TailReport:
    """Empirical P(t_mix(eps, x, eta) >= threshold) across sampled environments.

    The worst-case initial environment (all-closed) is the default.
    """
    if env_samples < 30:
        raise InputError("need >= 30 environment samples for a confidence interval")
    times = np.empty(env_samples)
    for i in range(env_samples):
        env = sample_env(g, params, init=init,
                         seed=None if seed is None else seed + i)
        times[i] = quenched_mixing_time(env, x, eps, grid=grid)
    k = int(np.sum(times >= threshold))
    return TailReport(fraction=k / env_samples, ci=_wilson(k, env_samples),
                      threshold=threshold, n_envs=env_samples, times=times)


@dataclass(frozen=True)
class AnnealedMixReport:
    time: float
    ci: tuple[float, float]
    grid: np.ndarray
    annealed_tvs: np.ndarray
    mean_quenched_tvs: np.ndarray
    n_envs: int


def annealed_mixing_time(g: TorusGraph, params: DynParams, x: int, eps: float,
                         env_samples: int, seed: Optional[int] = None,
                         mode: str = "exact",
                         grid: Optional[Sequence[float]] = None,
                         bootstrap: int = 200) -> AnnealedMixReport:
    """First grid time where TV of the eta-averaged law to uniform is <= eps.

    Environments start stationary.  Convexity (annealed TV <= mean quenched TV)
    is asserted per grid time.  The CI is a bootstrap over environment samples.
    """
    if mode != "exact":
        raise InputError("only exact mode is implemented here")
    if grid is None:
        grid = default_grid(params)
    grid = np.asarray(grid, dtype=float)
    if eps >= 1.0:
        return AnnealedMixReport(0.0, (0.0, 0.0), grid, np.empty(0), np.empty(0), env_samples)
    N = g.n_vertices
    uniform = np.full(N, 1.0 / N)
    laws = np.empty((env_samples, len(grid), N))
    for i in range(env_samples):
        env = sample_env(g, params, init="stationary",
                         seed=None if seed is None else seed + i)
        ev = walkmod._Evolver(env, 0.0)
        vec = np.zeros(N)
        vec[x] = 1.0
        for j, t in enumerate(grid):
            vec = ev.advance(vec[None, :], float(t))[0]
            laws[i, j] = vec
    mean_law = laws.mean(axis=0)
    annealed_tvs = 0.5 * np.abs(mean_law - uniform).sum(axis=1)
    quenched_tvs = 0.5 * np.abs(laws - uniform).sum(axis=2)
    mean_q = quenched_tvs.mean(axis=0)
    if np.any(annealed_tvs > mean_q + 1e-9):
        raise AssertionError("convexity violated: annealed TV above mean quenched TV")

    def first_time(law_stack: np.ndarray) -> float:
        tvs = 0.5 * np.abs(law_stack.mean(axis=0) - uniform).sum(axis=1)
        hit = np.nonzero(tvs <= eps)[0]
        return float(grid[hit[0]]) if len(hit) else NOT_MIXED

    t_hat = first_time(laws)
    rng = np.random.default_rng(None if seed is None else seed + 10 ** 6)
    boots = [first_time(laws[rng.integers(env_samples, size=env_samples)])
             for _ in range(bootstrap)]
    finite = [b for b in boots if math.isfinite(b)]
    if finite:
        ci = (float(np.percentile(finite, 2.5)), float(np.percentile(finite, 97.5)))
    else:
        ci = (NOT_MIXED, NOT_MIXED)
    return AnnealedMixReport(time=t_hat, ci=ci, grid=grid,
                             annealed_tvs=annealed_tvs,
                             mean_quenched_tvs=mean_q, n_envs=env_samples)


@dataclass(frozen=True)
class HittingReport:
    quenched_means: np.ndarray   # (n_envs, n_states) E[min(tau, horizon)] per start
    annealed_means: np.ndarray   # (n_states,) averaged over envs
    censored_frac: np.ndarray    # (n_states,) mean unabsorbed mass at horizon
    horizon: float
    usable: bool


def hitting_time_stats(g: TorusGraph, params: DynParams, A: VertexSet,
                       env_samples: int = 10, horizon: Optional[float] = None,
                       seed: Optional[int] = None, init="stationary",
                       allow_small: bool = False,
                       envs: Optional[Sequence[EnvTrajectory]] = None) -> HittingReport:
    """Quenched and annealed E[tau_A] estimates via exact absorbed evolution.

    For theorem-scope experiments |A| >= n^d / 2 is required; pass
    `allow_small=True` to probe smaller targets.
    """
    if A.size == 0:
        raise InputError("A must be nonempty")
    if not allow_small and 2 * A.size < g.n_vertices:
        raise InputError("|A| < n^d / 2; pass allow_small=True to override")
    if horizon is None:
        horizon = params.horizon
    if envs is None:
        envs = [sample_env(g, params, init=init,
                           seed=None if seed is None else seed + i)
                for i in range(env_samples)]
    q_means = []
    censored = []
    for env in envs:
        exp_t, cens = walkmod.exact_hitting_profile(env, A.mask, horizon)
        q_means.append(exp_t)
        censored.append(cens)
    q_means = np.asarray(q_means)
    censored_frac = np.asarray(censored).mean(axis=0)
    usable = bool((censored_frac < 1.0 - 1e-12).all())
    return HittingReport(quenched_means=q_means,
                         annealed_means=q_means.mean(axis=0),
                         censored_frac=censored_frac,
                         horizon=horizon, usable=usable)


@dataclass(frozen=True)
class LowerBoundReport:
    tvs: Optional[np.ndarray]             # TV at beta n^2 / mu per environment
    tv_time: Optional[float]
    isolated_frequency: Optional[float]
    isolated_ci: Optional[tuple[float, float]]
    beta: float
    n_envs: int


def quenched_lower_bound_experiment(g: TorusGraph, params: DynParams, beta: float,
                                    env_samples: int, seed: Optional[int] = None,
                                    x: int = 0,
                                    run_tv: bool = True,
                                    run_isolated: bool = True) -> LowerBoundReport:
    """Empirics behind the quenched lower bounds.

    (i) distribution of TV(quenched law at beta n^2/mu, uniform) across
    stationary environments; (ii) frequency of an isolated vertex on
    [0, beta/mu].
    """
    from .dynenv import isolated_vertex_exists

    tvs = None
    t_eval = None
    if run_tv:
        t_eval = beta * g.n ** 2 / params.mu
        if t_eval > params.horizon:
            raise InputError("horizon too short for the TV evaluation time")
        tvs = np.empty(env_samples)
        uniform = np.full(g.n_vertices, 1.0 / g.n_vertices)
        for i in range(env_samples):
            env = sample_env(g, params, init="stationary",
                             seed=None if seed is None else seed + i)
            law = walkmod.exact_quenched_distribution(env, x, t_eval)
            tvs[i] = tv(law, uniform)
    freq = None
    ci = None
    if run_isolated:
        L = beta / params.mu
        if L > params.horizon:
            raise InputError("horizon too short for the isolation interval")
        hits = 0
        for i in range(env_samples):
            env = sample_env(g, params, init="stationary",
                             seed=None if seed is None else 7 ** 5 + seed + i)
            ok, _ = isolated_vertex_exists(env, L)
            hits += ok
        freq = hits / env_samples
        ci = _wilson(hits, env_samples)
    return LowerBoundReport(tvs=tvs, tv_time=t_eval, isolated_frequency=freq,
                            isolated_ci=ci, beta=beta, n_envs=env_samples)


def format_csv_rows(rows: Iterable[dict]) -> str:
    """Render result records against the versioned column schema."""
    lines = ["# schema=dynaperc-results-v%d" % CSV_SCHEMA_VERSION,
             ",".join(CSV_COLUMNS)]
    for row in rows:
        lines.append(",".join(_fmt(row.get(c)) for c in CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)
