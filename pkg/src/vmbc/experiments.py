"""Experiment drivers behind the command line.

Each driver takes an :class:`~vmbc.config.ExperimentConfig` and returns a
:class:`Table`.  Replica ``r`` of grid point ``g`` always uses the stream
``make_rng(seed, g, r)``, and results are merged in ``(g, r)`` order, so
output does not depend on the number of worker processes.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache, partial

import numpy as np

from . import clusters, coupling, meanfield
from .config import ConfigError, ExperimentConfig
from .engine import InitSpec, StopCondition, make_rng, run
from .graphs import build_complete_kernels, build_torus_kernels, helper_mass_excess, validate_kernels
from .rates import ModelParams


@dataclass
class Table:
    header: list[str]
    rows: list[list]
    failed: bool = False


@lru_cache(maxsize=16)
def _kernels(kind: str, d: int, L: int, N: int, variant: str):
    if kind == "torus":
        return build_torus_kernels(d, L, variant)
    return build_complete_kernels(N, variant)


def build_kernels(cfg: ExperimentConfig, variant: str | None = None):
    try:
        return _kernels(cfg["graph.kind"], cfg["graph.d"], cfg["graph.L"], cfg["graph.N"],
                        variant or cfg["model.variant"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_params(cfg: ExperimentConfig) -> ModelParams:
    try:
        return ModelParams(cfg["model.variant"], cfg["model.alpha"], cfg["model.gamma"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_init(cfg: ExperimentConfig) -> InitSpec:
    kind = cfg["init.kind"]
    try:
        if kind == "bernoulli":
            return InitSpec.bernoulli(cfg["init.p"])
        if kind in ("finite_cooperators", "finite_defectors"):
            return InitSpec(kind, sites=tuple(cfg["init.sites"]))
        if kind == "explicit":
            return InitSpec.explicit([int(c) for c in cfg["init.bits"]])
    except ValueError as exc:
        raise ConfigError(f"init: {exc}") from exc
    raise ConfigError(f"unknown init.kind {kind!r}")


def build_stop(cfg: ExperimentConfig) -> StopCondition:
    try:
        return StopCondition(cfg["stop.max_events"], cfg["stop.max_time"], cfg["stop.stop_on_absorption"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def map_tasks(fn, tasks, parallel: int | None):
    """``[fn(*t) for t in tasks]``, optionally across processes (order kept)."""
    tasks = list(tasks)
    workers = parallel or os.cpu_count() or 1
    if workers <= 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as ex:
        return list(ex.map(fn, *zip(*tasks)))


def _absorption(freq: float) -> str:
    return "all0" if freq == 0.0 else "all1" if freq == 1.0 else "none"


def simulate_replica(cfg: ExperimentConfig, grid: int, rep: int) -> list[list]:
    """Snapshot rows ``[replica, event_count, time, frequency, interface, patterns..., absorption]``."""
    params = build_params(cfg)
    kernels = build_kernels(cfg)
    traj = run(params, kernels, build_init(cfg), build_stop(cfg), make_rng(cfg["run.seed"], grid, rep),
               snapshot_every=cfg["observe.snapshot_every"] or None,
               patterns=tuple(cfg["observe.patterns"]), record_events=False)
    rows = []
    for s in traj.snapshots:
        pats = [s.patterns.get(p, math.nan) for p in cfg["observe.patterns"]]
        rows.append([rep, s.event_count, s.time, s.cooperator_frequency, s.interface_density,
                     *pats, _absorption(s.cooperator_frequency)])
    return rows


def simulate(cfg: ExperimentConfig, parallel: int | None = 1) -> Table:
    build_params(cfg), build_kernels(cfg), build_init(cfg), build_stop(cfg)
    header = ["replica", "event_count", "sim_time", "cooperator_frequency", "interface_density",
              *[f"p{p}" for p in cfg["observe.patterns"]], "absorption"]
    per_rep = map_tasks(partial(simulate_replica, cfg), [(0, r) for r in range(cfg["run.replicas"])], parallel)
    return Table(header, [row for rows in per_rep for row in rows])


def _final_frequency(cfg: ExperimentConfig, grid: int, rep: int) -> float:
    traj = run(build_params(cfg), build_kernels(cfg), build_init(cfg), build_stop(cfg),
               make_rng(cfg["run.seed"], grid, rep), record_events=False)
    return float(traj.final_state.mean())


def sweep_values(cfg: ExperimentConfig, parallel: int | None = 1) -> tuple[list[float], np.ndarray]:
    """Final cooperator frequencies, shape ``(grid points, replicas)``."""
    key = cfg["sweep.param"]
    if not key:
        raise ConfigError("sweep needs sweep.param and sweep.values")
    values = cfg["sweep.values"]
    cfgs = [cfg.with_value(key, v) for v in values]
    for c in cfgs:
        build_params(c), build_init(c)
    reps = cfg["run.replicas"]
    tasks = [(cfgs[g], g, r) for g in range(len(values)) for r in range(reps)]
    out = map_tasks(_final_frequency, tasks, parallel)
    return values, np.array(out).reshape(len(values), reps)


def sweep(cfg: ExperimentConfig, parallel: int | None = 1) -> Table:
    values, finals = sweep_values(cfg, parallel)
    reps = finals.shape[1]
    name = cfg["sweep.param"].split(".")[-1]
    rows = []
    for v, f in sorted(zip(values, finals), key=lambda p: p[0]):
        se = float(f.std(ddof=1) / math.sqrt(reps)) if reps > 1 else math.nan
        rows.append([v, float(f.mean()), se, reps])
    return Table([name, "mean_final_frequency", "std_error", "replicas"], rows)


def crossing(values, means, level: float = 0.5) -> float:
    """First ``x`` where the piecewise-linear curve reaches ``level``; ``inf`` if never."""
    v = np.asarray(values, dtype=float)
    m = np.asarray(means, dtype=float)
    for i in range(len(v)):
        if m[i] >= level:
            if i == 0:
                return float(v[0])
            return float(v[i - 1] + (level - m[i - 1]) * (v[i] - v[i - 1]) / (m[i] - m[i - 1]))
    return math.inf


def _meanfield_point(cfg: ExperimentConfig, i: int, j: int):
    N = cfg["meanfield.N"][i]
    g = cfg["meanfield.gamma"][j]
    return meanfield.deviation_from_logistic(N, cfg["meanfield.s0"], cfg["model.alpha"], g, cfg["meanfield.T"],
                                             cfg["run.replicas"], cfg["run.seed"], cfg["meanfield.grid_step"],
                                             key=(i, j))


def meanfield_table(cfg: ExperimentConfig, parallel: int | None = 1) -> Table:
    Ns, gs = cfg["meanfield.N"], cfg["meanfield.gamma"]
    if min(Ns) < 3:
        raise ConfigError("meanfield.N entries must be >= 3")
    tasks = [(cfg, i, j) for i in range(len(Ns)) for j in range(len(gs))]
    results = map_tasks(_meanfield_point, tasks, parallel)
    rows = []
    for (_, i, j), d in zip(tasks, results):
        rows.append([Ns[i], cfg["model.alpha"], gs[j], d.replicas, d.mean_path, d.mean_path_se,
                     d.per_path, d.per_path_se])
    header = ["N", "alpha", "gamma", "replicas", "mean_path_sup_dev", "mean_path_se",
              "per_path_sup_dev", "per_path_se"]
    return Table(header, rows)


def jump_table(cfg: ExperimentConfig) -> Table:
    kind = cfg["jump.kind"]
    seed = cfg["run.seed"]
    runs = cfg["jump.runs"]
    if kind == "constant":
        l1, l2, mu, c0 = cfg["jump.lambda1"], cfg["jump.lambda2"], cfg["jump.mu"], cfg["jump.c0"]
        try:
            clusters.JumpProcessSpec(mu=mu, lambda1=l1, lambda2=l2)
            _, a_c = clusters.supermartingale_exponent(l1, l2, mu)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        est = clusters.escape_monte_carlo(l1, l2, mu, c0, runs, seed, cfg["jump.escape_level"])
        oracle = clusters.escape_probability_oracle(l1, l2, mu, c0)
        closed = clusters.escape_probability_closed(l1, l2, mu, c0)
        header = ["lambda1", "lambda2", "mu", "c0", "runs", "escape_estimate", "escape_se",
                  "escape_oracle", "escape_closed_form", "a_c"]
        return Table(header, [[l1, l2, mu, c0, runs, est.estimate, est.se, oracle, closed, a_c]])
    try:
        spec = clusters.BirthDeathSpec(kind, cfg["model.alpha"], cfg["model.gamma"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    est = clusters.birth_death_monte_carlo(spec, runs, seed, cfg["jump.max_jumps"], cfg["jump.escape_level"])
    br = clusters.birth_death_extinction_probability(spec)
    header = ["kind", "alpha", "gamma", "runs", "extinction_estimate", "extinction_se", "censored",
              "oracle", "oracle_width", "closed_form"]
    return Table(header, [[kind, spec.alpha, spec.gamma, runs, est.estimate, est.se, est.censored,
                           br.probability, br.width, clusters.extinction_closed_form(spec)]])


def _couple_replica(cfg: ExperimentConfig, grid: int, rep: int):
    kind = cfg["couple.kind"]
    kernels = build_kernels(cfg, variant=kind.split("_")[0])
    max_events = cfg["stop.max_events"]
    return coupling.coupled_replica(kind, cfg["model.alpha"], cfg["model.gamma"], kernels, cfg["run.seed"],
                                    (grid, rep), max_events, cfg["couple.p_lower"], cfg["couple.p_extra"],
                                    cfg["couple.check_every"])


def couple_table(cfg: ExperimentConfig, parallel: int | None = 1) -> Table:
    kind = cfg["couple.kind"]
    if kind not in coupling.COUPLINGS:
        raise ConfigError(f"couple.kind must be one of {coupling.COUPLINGS}")
    if cfg["graph.kind"] != "torus":
        raise ConfigError("coupled runs need graph.kind = torus")
    if not cfg["stop.max_events"]:
        raise ConfigError("couple needs stop.max_events")
    _, upper = coupling.dominating_params(kind, cfg["model.alpha"], cfg["model.gamma"], cfg["graph.d"])
    reports = map_tasks(partial(_couple_replica, cfg), [(0, r) for r in range(cfg["run.replicas"])], parallel)
    header = ["replica", "coupling", "alpha", "gamma", "beta", "delta", "events", "order_violations",
              "rate_violations", *[f"z_{d}" for d in coupling.DIRECTIONS]]
    rows = []
    failed = False
    for r, rep in enumerate(reports):
        failed |= rep.order_violations > 0 or rep.rate_violations > 0
        rows.append([r, kind, cfg["model.alpha"], cfg["model.gamma"], upper.beta, upper.delta, rep.events,
                     rep.order_violations, rep.rate_violations, *rep.zscores.tolist()])
    return Table(header, rows, failed)


def _parse_graph(spec: str):
    parts = spec.split(":")
    try:
        if parts[0] == "torus" and len(parts) == 3:
            return "torus", int(parts[1]), int(parts[2])
        if parts[0] == "complete" and len(parts) == 2:
            return "complete", int(parts[1]), None
    except ValueError:
        pass
    raise ConfigError(f"bad graph spec {spec!r}; use torus:d:L or complete:N")


def validate_table(cfg: ExperimentConfig) -> Table:
    header = ["graph", "variant", "size", "max_row_dev_a", "max_row_dev_b", "max_col_sum_a",
              "max_col_sum_b", "helper_mass_excess", "ok"]
    rows = []
    failed = False
    for g in cfg["validate.graphs"]:
        kind, x, y = _parse_graph(g)
        for variant in cfg["validate.variants"]:
            try:
                k = build_torus_kernels(x, y, variant) if kind == "torus" else build_complete_kernels(x, variant)
            except ValueError as exc:
                raise ConfigError(f"{g}: {exc}") from exc
            rep = validate_kernels(k)
            excess = helper_mass_excess(k)
            col_b = float(rep.col_sum_b.max()) if rep.col_sum_b is not None else 0.0
            ok = rep.ok and (variant != "cvmbc" or excess <= 1e-12)
            failed |= not ok
            rows.append([g, variant, k.size, rep.max_row_dev_a, rep.max_row_dev_b, float(rep.col_sum_a.max()),
                         col_b, excess if np.isfinite(excess) else "", ok])
    return Table(header, rows, failed)
