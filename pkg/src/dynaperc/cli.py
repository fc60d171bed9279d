"""Command-line experiment runner.

Every run is driven by an INI config plus flags, emits CSV rows against the
shared result schema, and records a JSON-lines manifest with the config hash
and per-cell status.  Re-running with an identical config and seed reproduces
the CSV byte for byte.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import configparser
import hashlib
import io
import json
import math
import os
import sys
import time
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__, dist, dynenv, envlab, evoset, expansion
from . import walk as walkmod
from .dynenv import DynParams, sample_env
from .errors import InputError
from .torus import TorusGraph, VertexSet

DEFAULTS = {
    "d": "1", "n": "8", "p": "0.5", "mu": "0.25", "eps": "0.25",
    "horizon": "", "x": "0", "env_samples": "30", "beta": "0.1",
    "scenario": "", "init": "stationary", "sigma": "1.0",
    "n_grid": "8,16,32", "mu_grid": "0.5,0.125", "profile": "",
}


def _load_config(path: Optional[str], overrides: dict) -> dict:
    cfg = dict(DEFAULTS)
    if path:
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise InputError(f"config file not found: {path}")
        for section in parser.sections():
            cfg.update(parser[section])
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    return cfg


def _config_hash(cfg: dict, subcommand: str, seed: int, mode: str) -> str:
    blob = json.dumps({"cmd": subcommand, "seed": seed, "mode": mode,
                       "cfg": dict(sorted(cfg.items()))}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _params(cfg: dict) -> tuple[TorusGraph, DynParams]:
    d, n = int(cfg["d"]), int(cfg["n"])
    p, mu = float(cfg["p"]), float(cfg["mu"])
    horizon = float(cfg["horizon"]) if cfg["horizon"] else 20.0 * n * n / mu
    g = TorusGraph(d=d, n=n)
    return g, DynParams(p=p, mu=mu, horizon=horizon)


def _base_row(cfg: dict, **kw) -> dict:
    row = {"d": int(cfg["d"]), "n": int(cfg["n"]), "p": float(cfg["p"]),
           "mu": float(cfg["mu"]), "eps": float(cfg["eps"]),
           "env_seed": None, "x": int(cfg["x"]), "statistic": "",
           "value": None, "ci_lo": None, "ci_hi": None,
           "method": "exact", "censored_frac": 0.0}
    row.update(kw)
    return row


class Runner:
    """Shared plumbing: artifact directory, manifest, budget accounting."""

    def __init__(self, args):
        self.args = args
        self.cfg = _load_config(args.config, {
            k: getattr(args, k, None) for k in ("scenario",)})
        self.seed = args.seed
        self.mode = args.mode
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.hash = _config_hash(self.cfg, args.subcommand, args.seed, args.mode)
        self.budget = args.budget
        self.t0 = time.monotonic()
        self.cells: list[dict] = []
        self.rows: list[dict] = []
        self.failed = False

    def over_budget(self) -> bool:
        return self.budget is not None and time.monotonic() - self.t0 > self.budget

    def cell(self, name: str, fn: Callable[[], list[dict]]) -> None:
        """Run one cell; budget overruns are recorded as censored, errors as
        failures, and the run continues either way."""
        if self.over_budget():
            self.cells.append({"cell": name, "status": "censored", "wall": 0.0})
            return
        t = time.monotonic()
        try:
            rows = fn()
        except Exception as exc:  # per-cell failure must not kill the run
            self.cells.append({"cell": name, "status": f"error: {exc}",
                               "wall": time.monotonic() - t})
            self.failed = True
            return
        self.cells.append({"cell": name, "status": "ok",
                           "wall": time.monotonic() - t})
        for r in rows:
            r.setdefault("method", self.mode)
        self.rows.extend(rows)

    def finish(self, csv_name: str) -> int:
        csv_path = self.out / csv_name
        text = dist.format_csv_rows(
            [dict(r, statistic=f"{self.hash}:{r.pop('cell_id', 'cell0')}:{r['statistic']}")
             for r in self.rows])
        csv_path.write_text(text)
        digest = hashlib.sha256(text.encode()).hexdigest()
        manifest = self.out / "manifest.jsonl"
        with manifest.open("a") as fh:
            for c in self.cells:
                fh.write(json.dumps({
                    "config_hash": self.hash, "version": __version__,
                    "cell": c["cell"], "status": c["status"],
                    "wall_clock": round(c["wall"], 3),
                    "outputs": {csv_name: digest}}) + "\n")
        bad = [c for c in self.cells if c["status"].startswith("error")]
        for c in bad:
            print(f"FAIL {c['cell']}: {c['status']}", file=sys.stderr)
        return 1 if (bad or self.failed) else 0


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("DYNAPERC_WORKERS", "1")))
    except ValueError:
        return 1


# --------------------------------------------------------------------------
# subcommand bodies
# --------------------------------------------------------------------------

def cmd_env_sim(run: Runner) -> int:
    g, params = _params(run.cfg)

    def body():
        env = sample_env(g, params, init=run.cfg["init"], seed=run.seed)
        with (run.out / "env.bin").open("wb") as fh:
            dynenv.dump_env(env, fh)
        n_flips = sum(len(e.flip_times) for e in env.edges)
        return [_base_row(run.cfg, env_seed=run.seed, statistic="env_flip_count",
                          value=float(n_flips), method="mc")]

    run.cell("env-sim", body)
    return run.finish("env_sim.csv")


def cmd_walk_sim(run: Runner) -> int:
    g, params = _params(run.cfg)

    def body():
        env = sample_env(g, params, init=run.cfg["init"], seed=run.seed)
        horizon = min(params.horizon, 10.0 / params.mu)
        path = walkmod.simulate_walk(env, int(run.cfg["x"]), horizon,
                                     seed=None if run.seed is None else run.seed + 1)
        lines = [f"# dynaperc-walk-v1 start={path.start} horizon={horizon!r}"]
        lines += [f"{t!r} {v}" for t, v in zip(path.jump_times, path.jump_targets)]
        (run.out / "walk.txt").write_text("\n".join(lines) + "\n")
        assert walkmod.replay_is_legal(env, path)
        return [_base_row(run.cfg, env_seed=run.seed, statistic="walk_jump_count",
                          value=float(len(path.jump_times)), method="mc")]

    run.cell("walk-sim", body)
    return run.finish("walk_sim.csv")


def cmd_mix(run: Runner) -> int:
    g, params = _params(run.cfg)
    eps = float(run.cfg["eps"])
    x = int(run.cfg["x"])
    samples = int(run.cfg["env_samples"])

    def quenched():
        rows = []
        times = []
        for i in range(samples):
            env = sample_env(g, params, init=run.cfg["init"],
                             seed=None if run.seed is None else run.seed + i)
            t = dist.quenched_mixing_time(env, x, eps)
            times.append(t)
            rows.append(_base_row(run.cfg, env_seed=(None if run.seed is None else run.seed + i),
                                  statistic="t_mix_quenched", value=t,
                                  censored_frac=float(not math.isfinite(t))))
        finite = [t for t in times if math.isfinite(t)]
        med = float(np.median(finite)) if finite else dist.NOT_MIXED
        rows.append(_base_row(run.cfg, statistic="t_mix_quenched_median", value=med,
                              censored_frac=1.0 - len(finite) / max(len(times), 1)))
        return rows

    def annealed():
        rep = dist.annealed_mixing_time(g, params, x, eps, samples, seed=run.seed)
        return [_base_row(run.cfg, statistic="t_mix_annealed", value=rep.time,
                          ci_lo=rep.ci[0], ci_hi=rep.ci[1])]

    run.cell("quenched", quenched)
    run.cell("annealed", annealed)
    return run.finish("mix.csv")


def _arc_target(g: TorusGraph, rng: np.random.Generator) -> VertexSet:
    """Contiguous axis-0 slab of half the vertices, at a random offset."""
    n = g.n
    offset = int(rng.integers(n))
    half = n // 2
    mask = np.zeros(g.n_vertices, dtype=bool)
    for v in range(g.n_vertices):
        if (g.coords(v)[0] - offset) % n < half:
            mask[v] = True
    return VertexSet(g, mask)


def cmd_hit(run: Runner) -> int:
    g, params = _params(run.cfg)
    samples = int(run.cfg["env_samples"])

    def body():
        rng = np.random.default_rng(run.seed)
        A = _arc_target(g, rng)
        rep = dist.hitting_time_stats(g, params, A, env_samples=samples,
                                      seed=run.seed)
        worst = int(np.argmax(rep.annealed_means))
        return [_base_row(run.cfg, x=worst, statistic="hit_time_annealed_max",
                          value=float(rep.annealed_means[worst]),
                          censored_frac=float(rep.censored_frac[worst]))]

    run.cell("hit", body)
    return run.finish("hit.csv")


def cmd_evoset(run: Runner) -> int:
    def body():
        rng = np.random.default_rng(run.seed if run.seed is not None else 0)
        from .evoset import InhomChain, doob_z_bound_check, psi_step_count
        rows = []
        for i in range(10):
            pi, kernels = _random_chain(rng, n_states=4, n_kernels=1)
            steps = psi_step_count(InhomChain(pi=pi, kernels=kernels), x=0,
                                   eps=float(run.cfg["eps"]))
            chain = InhomChain(pi=pi, kernels=kernels * max(steps, 1))
            rep = doob_z_bound_check(chain, x=0, eps=float(run.cfg["eps"]))
            ok = rep.chi_ok and bool(rep.z_bound_ok)
            rows.append(_base_row(run.cfg, statistic="evoset_z_bound_ok",
                                  value=float(ok), env_seed=i))
            if not ok:
                raise AssertionError("evolving-set Z bound violated")
        return rows

    run.cell("evoset", body)
    return run.finish("evoset.csv")


def _random_chain(rng: np.random.Generator, n_states: int, n_kernels: int):
    pi = rng.random(n_states) + 0.2
    pi /= pi.sum()
    kernels = []
    for _ in range(n_kernels):
        A = rng.random((n_states, n_states))
        A = A + A.T
        # scale symmetric flow so K = lazy + c A / pi has rows <= 1
        c = 0.4 / max((A.sum(axis=1) / pi).max(), 1e-12)
        K = c * A / pi[:, None]
        K[np.diag_indices(n_states)] += 1.0 - K.sum(axis=1)
        kernels.append(K)
    return pi, tuple(kernels)


def cmd_expansion(run: Runner) -> int:
    g, params = _params(run.cfg)
    samples = int(run.cfg["env_samples"])

    def body():
        half = VertexSet(g, np.arange(g.n_vertices) < g.n_vertices // 2)
        ratios = []
        for i in range(samples):
            env = sample_env(g, params, init="stationary",
                             seed=None if run.seed is None else run.seed + i)
            rec = expansion.torus_phi_lower_bound_check(env, half)
            if rec.ratio is not None:
                ratios.append(rec.ratio)
        c = float(min(ratios)) if ratios else 0.0
        kernels = []
        for i in range(min(samples, 8)):
            env = sample_env(g, params, init="stationary",
                             seed=None if run.seed is None else 10 ** 4 + run.seed + i)
            kernels.append(walkmod.window_kernel(env, (0.0, 1.0 / params.mu)).matrix)
        if g.n_vertices <= 12:
            prof = expansion.profile_phi_kernels(kernels, np.full(g.n_vertices, 1.0 / g.n_vertices))
            (run.out / "profile.txt").write_text(prof.serialize())
        return [_base_row(run.cfg, statistic="phi_lower_bound_witness_c", value=c)]

    run.cell("expansion", body)
    return run.finish("expansion.csv")


def cmd_bound(run: Runner) -> int:
    g, params = _params(run.cfg)
    eps = float(run.cfg["eps"])

    def body():
        if run.cfg["profile"]:
            prof = expansion.ExpansionProfile.deserialize(
                Path(run.cfg["profile"]).read_text())
        else:
            prof = expansion.torus_analytic_profile(g.d, g.n, params.mu, c=0.1)
        n_steps = expansion.integral_mixing_bound(prof, gamma=0.5,
                                                  pi_x=1.0 / g.n_vertices, eps=eps)
        return [_base_row(run.cfg, statistic="integral_bound_steps",
                          value=float(n_steps))]

    run.cell("bound", body)
    return run.finish("bound.csv")


def cmd_lab(run: Runner) -> int:
    scenario = run.cfg["scenario"] or "counterexample"

    def counterexample():
        chain = envlab.counterexample_chain()
        ann = envlab.annealed_kernel(chain)
        S = chain.n_states
        vec = np.zeros(ann.matrix.shape[0])
        # start (zeta=0, x=0) and average over the stationary env marginal
        vec[ann.index(0, 0)] = 0.5
        vec[ann.index(1, 0)] = 0.5
        law = (vec @ ann.matrix).reshape(chain.n_env, S).sum(axis=0)
        ann_tv = dist.tv(law, chain.pi)
        rng = np.random.default_rng(run.seed)
        q_tvs = []
        for _ in range(1000):
            path = envlab.sample_env_path(chain, int(rng.integers(2)), 1, rng)
            q = envlab.quenched_law(chain, path, 0)
            q_tvs.append(dist.tv(q, chain.pi))
        assert ann_tv == 0.0
        assert all(t == 0.5 for t in q_tvs)
        return [_base_row(run.cfg, statistic="counterexample_annealed_tv", value=ann_tv),
                _base_row(run.cfg, statistic="counterexample_quenched_tv",
                          value=float(np.mean(q_tvs)), method="mc")]

    def theorem():
        chain = envlab.variant_chain(_lazy_demo_chain())
        rep = envlab.theorem_2_1_check(chain, x=0, eps=float(run.cfg["eps"]),
                                       mode="certificate")
        if not rep.passed:
            raise AssertionError("quenched tail bound certificate failed")
        return [_base_row(run.cfg, statistic="theorem_tail_certificate_ok",
                          value=float(rep.passed))]

    bodies = {"counterexample": counterexample, "theorem": theorem}
    if scenario not in bodies:
        print(f"unknown lab scenario {scenario!r}; choose from {sorted(bodies)}",
              file=sys.stderr)
        return 2
    run.cell(scenario, bodies[scenario])
    return run.finish("lab.csv")


def _lazy_demo_chain() -> envlab.FiniteEnvChain:
    """Small two-environment chain with strictly lazy kernels."""
    pi = np.array([0.25, 0.25, 0.25, 0.25])
    ring = np.array([[0.5, 0.25, 0.0, 0.25],
                     [0.25, 0.5, 0.25, 0.0],
                     [0.0, 0.25, 0.5, 0.25],
                     [0.25, 0.0, 0.25, 0.5]])
    slow = 0.5 * ring + 0.5 * np.eye(4)
    R = np.array([[0.5, 0.5], [0.5, 0.5]])
    return envlab.FiniteEnvChain(R=R, kernels=(ring, slow), pi=pi)


def cmd_sweep(run: Runner) -> int:
    scenario = run.cfg["scenario"] or "subcritical-mixing"
    ns = [int(t) for t in str(run.cfg["n_grid"]).split(",") if t]
    mus = [float(t) for t in str(run.cfg["mu_grid"]).split(",") if t]
    eps = float(run.cfg["eps"])
    samples = int(run.cfg["env_samples"])
    p = float(run.cfg["p"])
    d = int(run.cfg["d"])
    cells = [(n, mu) for n in ns for mu in mus]

    def mixing_cell(n: int, mu: float) -> list[dict]:
        g = TorusGraph(d=d, n=n)
        params = DynParams(p=p, mu=mu, horizon=20.0 * n * n / mu)
        times = []
        base = 0 if run.seed is None else run.seed
        for i in range(samples):
            env = sample_env(g, params, init="stationary",
                             seed=base + 1000 * n + i)
            times.append(dist.quenched_mixing_time(env, 0, eps))
        finite = [t for t in times if math.isfinite(t)]
        med = float(np.median(finite)) if finite else dist.NOT_MIXED
        cfg = dict(run.cfg, n=n, mu=mu)
        return [_base_row(cfg, statistic="t_mix_quenched_median", value=med,
                          cell_id=f"n{n}mu{mu}",
                          censored_frac=1.0 - len(finite) / len(times))]

    def hitting_cell(n: int, mu: float) -> list[dict]:
        g = TorusGraph(d=d, n=n)
        params = DynParams(p=p, mu=mu, horizon=50.0 * n * n / mu)
        base = 0 if run.seed is None else run.seed
        rng = np.random.default_rng(base + n)
        A = _arc_target(g, rng)
        rep = dist.hitting_time_stats(g, params, A, env_samples=samples,
                                      seed=base + 1000 * n)
        worst = float(rep.annealed_means.max())
        cfg = dict(run.cfg, n=n, mu=mu)
        return [_base_row(cfg, statistic="hit_time_annealed_max", value=worst,
                          cell_id=f"n{n}mu{mu}",
                          censored_frac=float(rep.censored_frac.max()))]

    bodies = {"subcritical-mixing": mixing_cell, "hitting": hitting_cell}
    if scenario not in bodies:
        print(f"unknown sweep scenario {scenario!r}; choose from {sorted(bodies)}",
              file=sys.stderr)
        return 2
    body = bodies[scenario]
    workers = _workers()
    if workers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as ex:
            futs = {(n, mu): ex.submit(body, n, mu) for n, mu in cells}
        for (n, mu) in cells:  # deterministic merge order
            run.cell(f"n={n},mu={mu}", futs[(n, mu)].result)
    else:
        for n, mu in cells:
            run.cell(f"n={n},mu={mu}", lambda n=n, mu=mu: body(n, mu))
    return run.finish("sweep.csv")


# --------------------------------------------------------------------------

COMMANDS = {
    "env-sim": cmd_env_sim, "walk-sim": cmd_walk_sim, "mix": cmd_mix,
    "hit": cmd_hit, "evoset": cmd_evoset, "expansion": cmd_expansion,
    "bound": cmd_bound, "lab": cmd_lab, "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dynaperc",
                                     description="dynamical-percolation walk experiments")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=None, help="INI config file")
        sp.add_argument("--seed", type=int, default=0, help="base RNG seed (u64)")
        sp.add_argument("--mode", choices=("exact", "mc"), default="exact")
        sp.add_argument("--budget", type=float, default=None,
                        help="wall-clock cap in seconds; overruns are censored")
        sp.add_argument("--out", default="out", help="artifact directory")
        sp.add_argument("--scenario", default=None)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run = Runner(args)
    except InputError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return COMMANDS[args.subcommand](run)


if __name__ == "__main__":
    sys.exit(main())
