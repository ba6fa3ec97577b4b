"""One-dimensional cluster machinery.

A cluster is a maximal run of cooperators on the ring.  Its two flanking
defectors and the sites just beyond them decide how fast it grows:

* case A ``00 1..1 00``: grows by one at rate ``1+gamma``;
* case B ``10 1..1 01``: merges (grows by two or more) at rate ``2+gamma``;
* case C, one side of each kind.

The cluster loses an end cooperator at rate ``1+alpha`` plus ``gamma/2``
for every side whose far site is a cooperator.  These triples feed an
integer jump process with jumps ``-1, +1, +2`` whose escape probability is
controlled by the exponent ``a_c`` of the supermartingale ``exp(-a C_t)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import solve_banded
from scipy.optimize import brentq

from ._backend import core
from .engine import make_rng
from .rates import ModelParams, flip_rate_fast

CASES = ("A", "B", "C")


@dataclass(frozen=True)
class Cluster:
    """Run of 1s at sites ``left, ..., left+length-1`` (mod L).

    ``far_left``/``far_right`` are the states at distance two outside the run.
    """

    left: int
    length: int
    flank_case: str
    far_left: int
    far_right: int

    def sites(self, L: int) -> list[int]:
        return [(self.left + i) % L for i in range(self.length)]


def _runs(x: np.ndarray, value: int) -> list[tuple[int, int]]:
    """``(start, length)`` of the maximal runs of ``value`` on the ring."""
    L = len(x)
    other = np.flatnonzero(x != value)
    if other.size == 0:
        raise ValueError(f"configuration is constant {value}: a single wrap-around run with no flanks")
    start0 = int(other[0]) + 1
    runs = []
    i = 0
    while i < L:
        s = (start0 + i) % L
        if x[s] == value:
            n = 0
            while n < L and x[(s + n) % L] == value:
                n += 1
            runs.append((s, n))
            i += n
        else:
            i += 1
    return runs


def extract_clusters(X) -> list[Cluster]:
    """Cooperator clusters of a ring configuration, with their flank case.

    Raises ``ValueError`` on the all-ones configuration.

    Examples
    --------
    >>> [(c.left, c.length, c.flank_case) for c in extract_clusters([0, 1, 1, 0, 1, 0])]
    [(1, 2, 'C'), (4, 1, 'singleton')]
    """
    x = np.asarray(X, dtype=np.uint8)
    L = len(x)
    if L < 5:
        raise ValueError("ring must have at least 5 sites")
    if not x.any():
        return []
    out = []
    for s, n in _runs(x, 1):
        fl = int(x[(s - 2) % L])
        fr = int(x[(s + n + 1) % L])
        if n == 1:
            case = "singleton"
        elif fl == fr == 0:
            case = "A"
        elif fl == fr == 1:
            case = "B"
        else:
            case = "C"
        out.append(Cluster(s, n, case, fl, fr))
    return sorted(out, key=lambda c: c.left)


def side_rates(far_is_one: bool, alpha: float, gamma: float) -> tuple[float, float, float]:
    """Contribution ``(lambda1, lambda2, mu)`` of one side of a cluster of length >= 2."""
    if far_is_one:
        return 0.0, 1.0 + gamma / 2, (1.0 + alpha + gamma) / 2
    return (1.0 + gamma) / 2, 0.0, (1.0 + alpha) / 2


def case_rates(case: str, alpha: float, gamma: float) -> tuple[float, float, float]:
    """Comparison rates ``(lambda1, lambda2, mu)`` of a non-singleton cluster.

    Growth rates are lower bounds (a merge may add more than two sites and a
    far cooperator may itself have helpers); the loss rate is exact.
    """
    sides = {"A": (False, False), "B": (True, True), "C": (False, True)}
    if case not in sides:
        raise ValueError(f"case must be one of {CASES}; singletons follow the birth-death chain")
    a = side_rates(sides[case][0], alpha, gamma)
    b = side_rates(sides[case][1], alpha, gamma)
    return a[0] + b[0], a[1] + b[1], a[2] + b[2]


@dataclass(frozen=True)
class DriftReport:
    margins: dict
    holds: dict

    @property
    def epsilon(self) -> float:
        return min(self.margins.values())

    @property
    def all_hold(self) -> bool:
        return all(self.holds.values())


def drift_condition_holds(alpha: float, gamma: float) -> DriftReport:
    """``lambda1 + 2 lambda2 - mu`` per case and whether it is positive."""
    margins = {}
    for c in CASES:
        l1, l2, mu = case_rates(c, alpha, gamma)
        margins[c] = l1 + 2 * l2 - mu
    return DriftReport(margins, {c: m > 0 for c, m in margins.items()})


@dataclass(frozen=True)
class PiecewiseConstant:
    """``values[i]`` on ``[breaks[i-1], breaks[i])`` with ``breaks[-1] = 0``, last value to infinity."""

    breaks: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.values) != len(self.breaks) + 1:
            raise ValueError("need one more value than breakpoints")
        if any(b <= a for a, b in zip(self.breaks, self.breaks[1:])) or (self.breaks and self.breaks[0] <= 0):
            raise ValueError("breakpoints must be positive and increasing")

    def __call__(self, t: float, c: int = 0) -> float:
        return self.values[int(np.searchsorted(self.breaks, t, side="right"))]


def _as_schedule(r):
    if callable(r):
        return r
    v = float(r)
    return lambda t, c=0: v


def _breaks(r) -> tuple[float, ...]:
    return r.breaks if isinstance(r, PiecewiseConstant) else ()


@dataclass
class JumpProcessSpec:
    """Rates of the jumps ``-1`` (``mu``), ``+1`` (``lambda1``) and ``+2`` (``lambda2``).

    Each rate is a constant, a :class:`PiecewiseConstant`, or a callable
    ``f(t, c)``.  Constant and piecewise schedules are checked against
    ``lambda1 + 2 lambda2 - mu > epsilon`` and ``lambda1 + lambda2 + mu <
    C_bound`` at construction; callables are checked at every evaluation.
    """

    mu: object
    lambda1: object
    lambda2: object = 0.0
    epsilon: float = 0.0
    C_bound: float | None = None
    _fns: tuple = field(init=False, repr=False)

    def __post_init__(self):
        self._fns = tuple(_as_schedule(r) for r in (self.lambda1, self.lambda2, self.mu))
        has_callable = any(callable(r) and not isinstance(r, PiecewiseConstant)
                           for r in (self.mu, self.lambda1, self.lambda2))
        if has_callable and self.C_bound is None:
            raise ValueError("state-fed rate callbacks need an explicit C_bound")
        if not has_callable:
            times = sorted({0.0, *_breaks(self.mu), *_breaks(self.lambda1), *_breaks(self.lambda2)})
            totals = [self._check(t, 0, bound=math.inf) for t in times]
            if self.C_bound is None:
                self.C_bound = max(totals) * (1 + 1e-12) if max(totals) > 0 else 1.0
            for t in times:
                self._check(t, 0)

    @property
    def is_constant(self) -> bool:
        return all(not callable(r) for r in (self.mu, self.lambda1, self.lambda2))

    def _check(self, t, c, bound=None) -> float:
        l1, l2, mu = (f(t, c) for f in self._fns)
        bound = self.C_bound if bound is None else bound
        if min(l1, l2, mu) < 0:
            raise ValueError(f"negative rate at t={t}")
        if not l1 + 2 * l2 - mu > self.epsilon:
            raise ValueError(f"drift lambda1 + 2 lambda2 - mu = {l1 + 2 * l2 - mu} not above {self.epsilon} at t={t}")
        total = l1 + l2 + mu
        if not total < bound:
            raise ValueError(f"total rate {total} not below C_bound {bound} at t={t}")
        return total

    def rates(self, t: float, c: int) -> tuple[float, float, float]:
        l1, l2, mu = (f(t, c) for f in self._fns)
        return l1, l2, mu


@dataclass
class JumpPath:
    times: np.ndarray
    values: np.ndarray
    t1: float
    censored: bool


def simulate_jump_process(spec: JumpProcessSpec, c0: int, horizon: float, rng,
                          stop_at_one: bool = True, max_level: int | None = None) -> JumpPath:
    """Thinning simulation at proposal rate ``C_bound``.

    Stops at the first visit to 1 (if ``stop_at_one``), at ``max_level`` or at
    ``horizon``; ``t1`` is the hitting time of 1 or ``inf`` if censored.
    """
    if c0 < 1:
        raise ValueError("c0 must be >= 1")
    C = spec.C_bound
    t = 0.0
    c = int(c0)
    times = [0.0]
    values = [c]
    check = not spec.is_constant
    while not (stop_at_one and c <= 1) and (max_level is None or c < max_level):
        t += rng.exponential(1.0 / C)
        if t > horizon:
            break
        if check:
            spec._check(t, c)
        l1, l2, mu = spec.rates(t, c)
        target = rng.random() * C
        if target < mu:
            c -= 1
        elif target < mu + l1:
            c += 1
        elif target < mu + l1 + l2:
            c += 2
        else:
            continue
        times.append(t)
        values.append(c)
    hit = stop_at_one and c <= 1
    return JumpPath(np.array(times), np.array(values, dtype=np.int64), t if hit else math.inf, not hit)


def supermartingale_exponent(lambda1: float, lambda2: float, mu: float) -> tuple[Callable, float]:
    """``(g, a_c)`` for ``g(a) = l1 e^{-a} + l2 e^{-2a} + mu e^{a} - 1`` with normalized rates.

    Rates are divided by their sum first (a time change).  ``a_c`` is the
    positive root of ``g``; it is ``inf`` when ``mu = 0``.  Raises
    ``ValueError`` if the drift ``l1 + 2 l2 - mu`` is not positive.
    """
    total = lambda1 + lambda2 + mu
    if total <= 0:
        raise ValueError("rates must not all vanish")
    l1, l2, m = lambda1 / total, lambda2 / total, mu / total
    if not l1 + 2 * l2 - m > 0:
        raise ValueError("drift condition fails: no positive exponent")

    def g(a):
        return l1 * np.expm1(-a) + l2 * np.expm1(-2 * a) + m * np.expm1(a)

    if m == 0:
        return g, math.inf
    hi = 1.0
    while g(hi) <= 0:
        hi *= 2
    return g, brentq(g, 1e-300, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def escape_probability_closed(lambda1: float, lambda2: float, mu: float, c0: int) -> float:
    """``P(T1 = inf) = 1 - exp(-a_c (c0 - 1))`` for constant rates."""
    _, a_c = supermartingale_exponent(lambda1, lambda2, mu)
    return -math.expm1(-a_c * (c0 - 1))


def _hit_one_truncated(l1, l2, mu, c0, K):
    """P(hit 1 before reaching K or above) by solving the banded first-step system."""
    n = K - 2  # unknowns h(2), ..., h(K-1)
    total = l1 + l2 + mu
    ab = np.zeros((4, n))  # one sub-diagonal, two super-diagonals
    ab[2, :] = total
    ab[1, 1:] = -l1
    ab[0, 2:] = -l2
    ab[3, :-1] = -mu
    rhs = np.zeros(n)
    rhs[0] = mu
    h = solve_banded((1, 2), ab, rhs)
    return float(h[c0 - 2])


def escape_probability_oracle(lambda1: float, lambda2: float, mu: float, c0: int,
                              tol: float = 1e-12, K0: int = 64, K_max: int = 2 ** 22) -> float:
    """Escape probability from truncated first-step equations, doubling ``K`` to convergence.

    Each truncation counts reaching ``K`` as escape, so the hitting
    probability increases with ``K``; the loop stops once doubling changes
    it by less than ``tol``.
    """
    if c0 <= 1:
        return 0.0
    K = max(K0, c0 + 2)
    prev = _hit_one_truncated(lambda1, lambda2, mu, c0, K)
    while K < K_max:
        K *= 2
        cur = _hit_one_truncated(lambda1, lambda2, mu, c0, K)
        if abs(cur - prev) < tol:
            return 1.0 - cur
        prev = cur
    raise RuntimeError(f"escape oracle did not converge by K={K}")


@dataclass(frozen=True)
class MonteCarloEstimate:
    estimate: float
    se: float
    runs: int
    censored: int = 0


def escape_monte_carlo(lambda1, lambda2, mu, c0, runs, seed, escape_level=64,
                       t_max=math.inf, key=()) -> MonteCarloEstimate:
    """Fraction of runs that reach ``escape_level`` before 1 (constant rates)."""
    hit, _, final = core.jump_escape_batch(float(lambda1), float(lambda2), float(mu), int(c0),
                                           float(t_max), int(escape_level), int(runs), make_rng(seed, *key))
    p = 1.0 - float(np.mean(hit))
    censored = int(np.sum(~hit & (final < escape_level)))
    return MonteCarloEstimate(p, math.sqrt(p * (1 - p) / runs), runs, censored)


@dataclass(frozen=True)
class SupermartingaleCheck:
    grid: np.ndarray
    means: np.ndarray
    exact: np.ndarray
    increment_z: np.ndarray

    @property
    def holds(self) -> bool:
        """No increase of ``E[exp(-a C_t)]`` beyond 3 standard errors."""
        return bool(np.all(self.increment_z <= 3.0))


def supermartingale_check(lambda1, lambda2, mu, c0, a, grid, runs, seed, key=()) -> SupermartingaleCheck:
    """Monte Carlo means of ``exp(-a C_t)`` for the free process on a time grid.

    ``increment_z[j]`` is the paired z-score of the mean increment between
    grid points ``j`` and ``j+1``.  ``exact`` is ``exp(-a c0 + t G(a))``
    with ``G`` the unnormalized exponent.
    """
    grid = np.asarray(grid, dtype=np.float64)
    vals = core.jump_values_batch(float(lambda1), float(lambda2), float(mu), int(c0), grid,
                                  int(runs), make_rng(seed, *key))
    e = np.exp(-a * vals)
    inc = np.diff(e, axis=1)
    se = inc.std(axis=0, ddof=1) / math.sqrt(runs)
    z = np.where(se > 0, inc.mean(axis=0) / np.where(se > 0, se, 1.0), 0.0)
    G = lambda1 * math.expm1(-a) + lambda2 * math.expm1(-2 * a) + mu * math.expm1(a)
    return SupermartingaleCheck(grid, e.mean(axis=0), np.exp(-a * c0 + grid * G), z)


@dataclass(frozen=True)
class BirthDeathSpec:
    """Size of a lone cooperator cluster or a lone defector gap on the line.

    single_cooperator: up ``1 + gamma 1{C >= 2}``, down ``1 + alpha``.
    single_defector: up ``1 + alpha + gamma 1{D = 1}``, down ``1 + gamma``.
    Both start at 1 and are absorbed at 0.
    """

    kind: str
    alpha: float
    gamma: float

    def __post_init__(self):
        if self.kind not in ("single_cooperator", "single_defector"):
            raise ValueError(f"unknown birth-death kind {self.kind!r}")
        if self.alpha < 0 or self.gamma < 0:
            raise ValueError("alpha and gamma must be nonnegative")

    @property
    def up_one(self) -> float:
        return 1.0 if self.kind == "single_cooperator" else 1.0 + self.alpha + self.gamma

    @property
    def up_rest(self) -> float:
        return 1.0 + self.gamma if self.kind == "single_cooperator" else 1.0 + self.alpha

    @property
    def down(self) -> float:
        return 1.0 + self.alpha if self.kind == "single_cooperator" else 1.0 + self.gamma

    def rates(self, c: int) -> tuple[float, float]:
        if c <= 0:
            return 0.0, 0.0
        return (self.up_one if c == 1 else self.up_rest), self.down


@dataclass(frozen=True)
class ExtinctionBracket:
    probability: float
    lower: float
    upper: float
    K: int

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def converged(self) -> bool:
        return self.width < 1e-6


def _extinction_truncated(spec: BirthDeathSpec, K: int, top: float) -> float:
    """Extinction probability from 1 with ``e(0) = 1`` and ``e(K) = top``."""
    n = K - 1  # unknowns e(1), ..., e(K-1)
    ups = np.full(n, spec.up_rest)
    ups[0] = spec.up_one
    ab = np.zeros((3, n))
    ab[1, :] = ups + spec.down
    ab[0, 1:] = -ups[:-1]
    ab[2, :-1] = -spec.down
    rhs = np.zeros(n)
    rhs[0] = spec.down
    rhs[-1] += ups[-1] * top
    return float(solve_banded((1, 1), ab, rhs)[0])


def birth_death_extinction_probability(spec: BirthDeathSpec, K: int = 128, tol: float = 1e-6,
                                       K_max: int = 2 ** 22) -> ExtinctionBracket:
    """Bracket the extinction probability by truncating the chain at ``K``.

    The lower end treats level ``K`` as survival.  The upper end replaces
    the unknown value at ``K`` by the gambler's-ruin probability
    ``min(1, down/up)^(K-1)`` of ever coming back to level 1 from ``K``.
    ``K`` doubles until the bracket is narrower than ``tol`` or reaches
    ``K_max``; check :attr:`ExtinctionBracket.converged`.
    """
    if K < 100:
        raise ValueError("truncation level must be >= 100")
    rho = min(1.0, spec.down / spec.up_rest)
    while True:
        lo = _extinction_truncated(spec, K, 0.0)
        hi = _extinction_truncated(spec, K, rho ** (K - 1))
        if hi - lo < tol or K >= K_max:
            return ExtinctionBracket((lo + hi) / 2, lo, hi, K)
        K *= 2


def extinction_closed_form(spec: BirthDeathSpec) -> float:
    """First-step analysis: ``e = p_down / (1 - p_up h)`` with ``h = min(1, down/up)``."""
    h = min(1.0, spec.down / spec.up_rest)
    tot = spec.up_one + spec.down
    return (spec.down / tot) / (1.0 - spec.up_one / tot * h)


def birth_death_monte_carlo(spec: BirthDeathSpec, runs: int, seed, max_jumps: int = 10 ** 5,
                            escape_level: int = 0, key=()) -> MonteCarloEstimate:
    """Extinction frequency of the embedded jump chain.

    Runs that reach ``escape_level`` (if positive) or ``max_jumps`` count as
    survivors; ``censored`` is the number stopped by ``max_jumps``.
    """
    absorbed, jumps = core.birth_death_batch(spec.up_one, spec.up_rest, spec.down, 1, int(max_jumps),
                                             int(escape_level), int(runs), make_rng(seed, *key))
    p = float(np.mean(absorbed))
    censored = int(np.sum(~absorbed & (jumps >= max_jumps)))
    return MonteCarloEstimate(p, math.sqrt(p * (1 - p) / runs), runs, censored)


def _finite_type(x: np.ndarray) -> int:
    return 1 if 2 * int(x.sum()) <= len(x) else 0


def cluster_count(X) -> int:
    """``2k - 1`` for ``k`` runs of the finite type (runs plus the gaps between them), else 0.

    On a ring the two types have equally many runs, so this is the number
    of interfaces minus one.
    """
    x = np.asarray(X, dtype=np.uint8)
    iface = int(np.sum(x != np.roll(x, -1)))
    return iface - 1 if iface else 0


def finite_cluster_runs(X) -> int:
    """Number ``k`` of runs of the finite (minority) type on the ring."""
    x = np.asarray(X, dtype=np.uint8)
    return int(np.sum(x != np.roll(x, -1))) // 2


@dataclass
class ClusterCountPath:
    times: np.ndarray
    counts: np.ndarray
    violations: int
    finite_type: int
    final_sizes: list[int]

    @property
    def monotone(self) -> bool:
        return self.violations == 0


def track_cluster_counts(traj, finite_type: int | None = None) -> ClusterCountPath:
    """Replay a ring trajectory and record the finite-cluster count after every event.

    The count is ``2k - 1`` where ``k`` is the number of runs of the finite
    type; the infinite background run is not counted.  An increase is
    recorded as a violation.
    """
    x = np.array(traj.initial_state, dtype=np.uint8)
    L = len(x)
    ft = _finite_type(x) if finite_type is None else finite_type
    iface = int(np.sum(x != np.roll(x, -1)))
    counts = np.empty(traj.n_events + 1, dtype=np.int64)
    counts[0] = max(iface - 1, 0)
    xs = x.tolist()
    bad = 0
    for i, u in enumerate(traj.event_sites.tolist()):
        left = xs[u - 1]
        right = xs[(u + 1) % L]
        before = (xs[u] != left) + (xs[u] != right)
        xs[u] ^= 1
        iface += (xs[u] != left) + (xs[u] != right) - before
        n = iface - 1 if iface else 0
        if n > counts[i]:
            bad += 1
        counts[i + 1] = n
    final = np.array(xs, dtype=np.uint8)
    sizes = [n for _, n in _runs(final, ft)] if 0 < final.sum() < L else []
    return ClusterCountPath(np.concatenate([[0.0], traj.event_times]), counts, bad, ft, sizes)


def tracked_cluster(X, origin: int = 0) -> Cluster | None:
    """Cluster of length >= 2 closest to ``origin``; ties go to the positive side."""
    x = np.asarray(X, dtype=np.uint8)
    L = len(x)
    best = None
    for c in extract_clusters(x):
        if c.length < 2:
            continue
        offs = [((s - origin + L // 2) % L) - L // 2 for s in c.sites(L)]
        dist = min(abs(o) for o in offs)
        side = 1 if any(o == dist for o in offs) else -1
        key = (dist, -side)
        if best is None or key < best[0]:
            best = (key, c)
    return None if best is None else best[1]


def boundary_rates(params: ModelParams, kernels, X, cluster: Cluster) -> tuple[float, float, float]:
    """Actual ``(grow by 1, grow by >= 2, shrink by 1)`` rates of a cluster of length >= 2."""
    if cluster.length < 2:
        raise ValueError("boundary rates are defined for clusters of length >= 2")
    L = len(X)
    s, n = cluster.left, cluster.length
    up1 = up2 = down = 0.0
    for flank, far in (((s - 1) % L, cluster.far_left), ((s + n) % L, cluster.far_right)):
        r = float(flip_rate_fast(params, kernels, X, flank))
        if far:
            up2 += r
        else:
            up1 += r
    for end in (s, (s + n - 1) % L):
        down += float(flip_rate_fast(params, kernels, X, end))
    return up1, up2, down


def comparison_holds(params: ModelParams, kernels, X, cluster: Cluster, tol: float = 1e-12) -> bool:
    """Actual growth rates at least the case rates, actual loss rate at most the case rate."""
    l1, l2, mu = case_rates(cluster.flank_case, params.alpha, params.gamma)
    up1, up2, down = boundary_rates(params, kernels, X, cluster)
    return up1 >= l1 - tol and up2 >= l2 - tol and down <= mu + tol
