"""Spatial-average estimators of type frequencies and local patterns.

On a translation-invariant torus the spatial average of an indicator is an
unbiased estimator of the corresponding single-site probability, so one
configuration already gives an estimate of ``p_t(i0 ... ik)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphs import Torus


def _bits(pattern) -> np.ndarray:
    if isinstance(pattern, str):
        if not pattern or set(pattern) - {"0", "1"}:
            raise ValueError(f"pattern must be a nonempty 0/1 string, got {pattern!r}")
        return np.array([int(c) for c in pattern], dtype=np.uint8)
    return np.asarray(pattern, dtype=np.uint8)


def type_frequency(X) -> float:
    """Fraction of cooperators (1s)."""
    return float(np.mean(X))


def pattern_frequency(X, pattern) -> float:
    """Fraction of sites ``i`` with ``X[i + j] == pattern[j]`` for all ``j`` (indices mod L).

    Examples
    --------
    >>> pattern_frequency([1, 1, 0, 0], "10")
    0.25
    """
    x = np.asarray(X, dtype=np.uint8)
    p = _bits(pattern)
    if len(p) > len(x):
        raise ValueError("pattern longer than the configuration")
    hit = np.ones(len(x), dtype=bool)
    for j, b in enumerate(p):
        hit &= np.roll(x, -j) == b
    return float(hit.mean())


def interface_density(X) -> float:
    """Fraction of adjacent pairs ``(i, i+1)`` with different types; equals p(10) + p(01)."""
    x = np.asarray(X, dtype=np.uint8)
    return float(np.mean(x != np.roll(x, -1)))


def disagreement_density(X, nbr) -> float:
    """Fraction of ordered nearest-neighbor pairs with different types (any dimension)."""
    x = np.asarray(X, dtype=np.uint8)
    return float(np.mean(x[:, None] != x[nbr]))


def same_type(X, u: int, v: int) -> bool:
    return bool(X[u] == X[v])


@dataclass
class ClusteringEstimate:
    """Replica means and standard errors of each statistic at each snapshot.

    ``mean[name]`` and ``se[name]`` are arrays aligned with ``event_counts``.
    ``same_pair`` is the fixed-pair estimator of ``P(X(u) = X(v))`` and
    ``same_adjacent`` its spatial-average counterpart ``1 - interface_density``.
    """

    event_counts: np.ndarray
    mean: dict
    se: dict
    replicas: int


def _summarize(samples: np.ndarray):
    n = samples.shape[0]
    mean = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.full_like(mean, np.nan)
    return mean, se


def clustering_diagnostic(params, kernels, init, snapshot_every: int, n_snapshots: int,
                          replicas: int, seed: int, patterns=("10", "01", "101", "010"),
                          pair=(0, 1)) -> ClusteringEstimate:
    """Replica averages of pattern frequencies at event counts ``0, K, 2K, ...``.

    Replica ``r`` uses the stream ``make_rng(seed, 0, r)``.  A replica that
    is absorbed early keeps its absorbed configuration for the remaining
    snapshots.
    """
    from .engine import StopCondition, make_rng, run

    if not isinstance(kernels.vertex_set, Torus) or kernels.d != 1:
        raise ValueError("clustering diagnostic needs a one-dimensional torus")
    names = ["interface_density", "cooperator_frequency", "same_pair", "same_adjacent",
             *[f"p{p}" for p in patterns]]
    stop = StopCondition(max_events=snapshot_every * n_snapshots)
    data = np.zeros((replicas, n_snapshots + 1, len(names)))
    for r in range(replicas):
        traj = run(params, kernels, init, stop, make_rng(seed, 0, r),
                   snapshot_every=snapshot_every, record_events=True)
        x = traj.initial_state.copy()
        marks = [k * snapshot_every for k in range(n_snapshots + 1)]
        done = 0
        for j, m in enumerate(marks):
            upto = min(m, traj.n_events)
            flips = np.bincount(traj.event_sites[done:upto], minlength=len(x)) & 1
            x ^= flips.astype(np.uint8)
            done = upto
            iface = interface_density(x)
            row = [iface, type_frequency(x), float(same_type(x, *pair)), 1.0 - iface]
            row += [pattern_frequency(x, p) for p in patterns]
            data[r, j] = row
    mean, se = _summarize(data)
    return ClusteringEstimate(
        event_counts=np.array([k * snapshot_every for k in range(n_snapshots + 1)]),
        mean={name: mean[:, i] for i, name in enumerate(names)},
        se={name: se[:, i] for i, name in enumerate(names)},
        replicas=replicas,
    )
