"""Unstructured populations: the cooperator frequency on the complete graph.

On the complete graph with ``N`` sites the frequency ``S = k/N`` is itself a
birth-death chain with jumps of ``+-1/N``.  As ``N`` grows it approaches the
logistic equation ``dS/dt = -alpha S (1 - S)``, whatever the value of gamma:
the cooperation terms add the same amount to both jump rates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._backend import core
from .engine import make_rng


@dataclass
class FrequencyPath:
    """Piecewise-constant (finite ``N``) or sampled (``N = inf``) frequency path."""

    times: np.ndarray
    values: np.ndarray
    N: float

    def at(self, grid) -> np.ndarray:
        """Value at each grid time (right-continuous for jump paths)."""
        idx = np.searchsorted(self.times, np.asarray(grid, dtype=np.float64), side="right") - 1
        return self.values[np.clip(idx, 0, None)]


def logistic_solution(s0, alpha: float, t):
    """Closed-form solution ``s0 e^{-alpha t} / (1 - s0 + s0 e^{-alpha t})``."""
    e = np.exp(-alpha * np.asarray(t, dtype=np.float64))
    out = s0 * e / (1.0 - s0 + s0 * e)
    return float(out) if np.ndim(out) == 0 else out


def integrate_logistic(s0: float, alpha: float, T: float, dt: float) -> FrequencyPath:
    """Classical fourth-order Runge-Kutta integration on ``[0, T]``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    n = int(math.ceil(T / dt - 1e-9))
    times = np.minimum(np.arange(n + 1) * dt, T)
    s = np.empty(n + 1)
    s[0] = s0
    f = lambda x: -alpha * x * (1.0 - x)
    for i in range(n):
        h = times[i + 1] - times[i]
        x = s[i]
        k1 = f(x)
        k2 = f(x + 0.5 * h * k1)
        k3 = f(x + 0.5 * h * k2)
        k4 = f(x + h * k3)
        s[i + 1] = x + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
    return FrequencyPath(times, s, math.inf)


def _check_lattice(N: int, s) -> int:
    k = s * N
    if abs(k - round(k)) > 1e-9 * max(1, N) or not 0 <= round(k) <= N:
        raise ValueError(f"frequency {s} is not a multiple of 1/{N} in [0, 1]")
    return int(round(k))


def frequency_generator_rates(N: int, s, alpha, gamma):
    """Total rates ``(up, down)`` of the jumps ``s -> s +- 1/N``.

    Written term by term as in the generator of the frequency chain; with
    fraction inputs the result is exact.
    """
    if N < 3:
        raise ValueError("N must be >= 3")
    _check_lattice(N, s)
    one = s - s + 1
    inv = one / N
    mix = N * s * (1 - s) / (1 - inv)
    coop = gamma * N * s * (s - inv) * (1 - s) / ((1 - inv) * (1 - 2 * inv))
    up = mix + coop
    down = (1 + alpha) * N * (1 - s) * s / (1 - inv) + gamma * N * s * (1 - s) * (s - inv) / ((1 - inv) * (1 - 2 * inv))
    return up, down


def run_frequency_process(N: int, s0: float, alpha: float, gamma: float, T: float, seed) -> FrequencyPath:
    """Exact simulation of the frequency chain on ``[0, T]``."""
    k0 = _check_lattice(N, s0)
    times, ks = core.frequency_process(N, k0, float(alpha), float(gamma), float(T), make_rng(seed))
    return FrequencyPath(np.asarray(times), np.asarray(ks) / N, N)


@dataclass
class DeviationEstimate:
    """Sup-norm distances to the logistic solution on a time grid.

    ``mean_path`` is ``sup_t |mean_r S_r(t) - S(t)|`` with its jackknife
    standard error; ``per_path`` is ``mean_r sup_t |S_r(t) - S(t)|`` with
    the usual standard error of a mean.
    """

    mean_path: float
    mean_path_se: float
    per_path: float
    per_path_se: float
    replicas: int


def _sup_dev(paths: np.ndarray, ref: np.ndarray) -> float:
    return float(np.max(np.abs(paths.mean(axis=0) - ref)))


def deviation_from_logistic(N: int, s0: float, alpha: float, gamma: float, T: float,
                            replicas: int, seed: int, grid_step: float = 0.01,
                            key: tuple = ()) -> DeviationEstimate:
    """Replica ``r`` uses the stream ``make_rng(seed, *key, r)``."""
    grid = np.linspace(0.0, T, int(round(T / grid_step)) + 1)
    ref = logistic_solution(s0, alpha, grid)
    paths = np.array([run_frequency_process(N, s0, alpha, gamma, T, make_rng(seed, *key, r)).at(grid)
                      for r in range(replicas)])
    sup_each = np.max(np.abs(paths - ref), axis=1)
    full = _sup_dev(paths, ref)
    if replicas > 1:
        loo = np.array([_sup_dev(np.delete(paths, r, axis=0), ref) for r in range(replicas)])
        jk_se = math.sqrt((replicas - 1) / replicas * np.sum((loo - loo.mean()) ** 2))
        se_each = float(sup_each.std(ddof=1) / math.sqrt(replicas))
    else:
        jk_se = se_each = math.nan
    return DeviationEstimate(full, jk_se, float(sup_each.mean()), se_each, replicas)
