"""Exact event-driven simulation of the spin-flip chain.

A :class:`Configuration` couples the spin states with a per-site rate
cache held in a sum tree: the next event time is exponential with the
total rate, the flipping site is drawn proportionally to its rate, and
after the flip only the dependency set of that site is re-evaluated.

Tori run on the compiled kernel when it is available; complete graphs and
hand-built kernels use the Python systems defined here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import observables
from ._backend import core
from ._pycore import ABSORBED, EVENTS, TIME, SumTree
from .graphs import ALTRUISTIC, COOPERATIVE, CompleteKernels, KernelPair, Torus, TorusKernels
from .rates import ModelParams, dependency_csr, dependency_set, flip_rate_bruteforce, rate_coefficients

STATUS_NAMES = {EVENTS: "events", TIME: "time", ABSORBED: "absorbed"}


class AbsorbedError(RuntimeError):
    """Raised by :meth:`Configuration.step` when the total flip rate is zero."""


def make_rng(seed, *key: int) -> np.random.Generator:
    """PCG64 stream for ``(seed, *key)``; independent of call order and workers."""
    if isinstance(seed, np.random.Generator):
        return seed
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def cached_dependency_csr(kernels: KernelPair):
    csr = getattr(kernels, "_dep_csr", None)
    if csr is None:
        csr = dependency_csr(kernels)
        kernels._dep_csr = csr
    return csr


def check_compatible(params: ModelParams, kernels: KernelPair) -> None:
    allowed = {
        "cvmbc": (COOPERATIVE, "custom"),
        "avmbc": (ALTRUISTIC, "custom"),
        "kin": (COOPERATIVE, ALTRUISTIC, "custom"),
    }.get(params.variant)
    if allowed is not None and kernels.b_kind not in allowed:
        raise ValueError(
            f"variant {params.variant!r} needs a cooperation kernel of kind {allowed[0]!r}, "
            f"got {kernels.b_kind!r}"
        )


@dataclass(frozen=True)
class Event:
    dt: float
    site: int
    new_state: int


class CompleteSystem:
    """Complete-graph chain: all defectors share one rate, all cooperators another.

    A flip is drawn by picking the state class proportionally to its summed
    rate and then a uniform member of the class.
    """

    def __init__(self, states, n, coefs, self_help):
        self.n = n
        self.x = [int(s) for s in states]
        self.a0, self.g0, self.a1, self.g1 = (float(c) for c in coefs)
        self.self_help = int(self_help)
        self.members = ([], [])
        self.pos = [0] * n
        for u, s in enumerate(self.x):
            self.pos[u] = len(self.members[s])
            self.members[s].append(u)
        self.time = 0.0
        self.n_events = 0

    @property
    def n_ones(self):
        return len(self.members[1])

    def _class_rates(self):
        k = self.n_ones
        n = self.n
        r0 = self.a0 * k + self.g0 * (k * (k - 1))
        r1 = self.a1 * (n - k) + self.g1 * ((n - k) * (k - 1 + self.self_help))
        return r0, r1

    def compute_rate(self, u):
        return self._class_rates()[self.x[u]]

    rate = compute_rate

    @property
    def total_rate(self):
        r0, r1 = self._class_rates()
        return (self.n - self.n_ones) * r0 + self.n_ones * r1

    def rates(self):
        r0, r1 = self._class_rates()
        return np.where(np.array(self.x) == 0, r0, r1).astype(np.float64)

    def states(self):
        return np.array(self.x, dtype=np.uint8)

    def refresh_all(self):
        pass

    def flip(self, u):
        s = self.x[u]
        src = self.members[s]
        last = src[-1]
        src[self.pos[u]] = last
        self.pos[last] = self.pos[u]
        src.pop()
        self.x[u] = 1 - s
        self.pos[u] = len(self.members[1 - s])
        self.members[1 - s].append(u)

    def _draw(self, rng):
        r0, r1 = self._class_rates()
        k = self.n_ones
        w0 = (self.n - k) * r0
        total = w0 + k * r1
        if total <= 0.0:
            return None
        u1 = rng.random()
        u2 = rng.random()
        u3 = rng.random()
        cls = 0 if u1 * total < w0 else 1
        group = self.members[cls]
        site = group[min(int(u3 * len(group)), len(group) - 1)]
        return site, -math.log(1.0 - u2) / total

    def step(self, rng):
        drawn = self._draw(rng)
        if drawn is None:
            return None
        site, dt = drawn
        self.time += dt
        self.flip(site)
        self.n_events += 1
        return dt, site, self.x[site]

    def advance(self, rng, max_events, max_time=math.inf, stop_on_absorption=False,
                out_time=None, out_site=None, out_state=None):
        done = 0
        while done < max_events:
            drawn = self._draw(rng)
            if drawn is None:
                return done, ABSORBED
            site, dt = drawn
            if self.time + dt > max_time:
                self.time = max_time
                return done, TIME
            self.time += dt
            self.flip(site)
            if out_time is not None:
                out_time[done] = self.time
                out_site[done] = site
                out_state[done] = self.x[site]
            done += 1
            self.n_events += 1
            if stop_on_absorption and self.n_ones in (0, self.n):
                return done, ABSORBED
        return done, EVENTS


class GenericSystem:
    """Brute-force rates over arbitrary kernels, indexed by a sum tree."""

    def __init__(self, states, params, kernels):
        self.params = params
        self.kernels = kernels
        self.n = kernels.size
        self.x = [int(s) for s in states]
        self.deps = [dependency_set(kernels, u) for u in range(self.n)]
        self.tree = SumTree(self.n)
        self.time = 0.0
        self.n_events = 0
        self.refresh_all()

    @property
    def n_ones(self):
        return sum(self.x)

    def compute_rate(self, u):
        return float(flip_rate_bruteforce(self.params, self.kernels, self.x, u))

    def rate(self, u):
        return self.tree.leaf(u)

    @property
    def total_rate(self):
        return self.tree.total

    def rates(self):
        return np.array([self.tree.leaf(u) for u in range(self.n)], dtype=np.float64)

    def states(self):
        return np.array(self.x, dtype=np.uint8)

    def refresh_all(self):
        self.tree.set_all([self.compute_rate(u) for u in range(self.n)])

    def flip(self, u):
        self.x[u] ^= 1
        for s in self.deps[u]:
            self.tree.update(s, self.compute_rate(s))

    def step(self, rng):
        total = self.tree.total
        if total <= 0.0:
            return None
        u1 = rng.random()
        u2 = rng.random()
        site = self.tree.sample(u1 * total)
        dt = -math.log(1.0 - u2) / total
        self.time += dt
        self.flip(site)
        self.n_events += 1
        return dt, site, self.x[site]

    def advance(self, rng, max_events, max_time=math.inf, stop_on_absorption=False,
                out_time=None, out_site=None, out_state=None):
        done = 0
        while done < max_events:
            total = self.tree.total
            if total <= 0.0:
                return done, ABSORBED
            u1 = rng.random()
            u2 = rng.random()
            site = self.tree.sample(u1 * total)
            dt = -math.log(1.0 - u2) / total
            if self.time + dt > max_time:
                self.time = max_time
                return done, TIME
            self.time += dt
            self.flip(site)
            if out_time is not None:
                out_time[done] = self.time
                out_site[done] = site
                out_state[done] = self.x[site]
            done += 1
            self.n_events += 1
            if stop_on_absorption and sum(self.x) in (0, self.n):
                return done, ABSORBED
        return done, EVENTS


class Configuration:
    """Spin states plus the cached flip rate of every site.

    Parameters
    ----------
    params : ModelParams
    kernels : KernelPair
    states : array of 0/1, one entry per site
    backend : module, optional
        Event kernel module for tori (``vmbc._core`` or ``vmbc._pycore``);
        defaults to the one selected at import.
    """

    def __init__(self, params: ModelParams, kernels: KernelPair, states, backend=None):
        check_compatible(params, kernels)
        states = np.asarray(states, dtype=np.uint8)
        if states.shape != (kernels.size,):
            raise ValueError(f"expected {kernels.size} states, got shape {states.shape}")
        if np.any(states > 1):
            raise ValueError("states must be 0 or 1")
        self.params = params
        self.kernels = kernels
        if isinstance(kernels, TorusKernels) and not kernels.exact:
            coefs, self_help = rate_coefficients(params, kernels)
            ptr, idx = cached_dependency_csr(kernels)
            mod = backend or core
            self._sys = mod.TorusSystem(states, kernels.nbr, ptr, idx, coefs, self_help)
        elif isinstance(kernels, CompleteKernels) and not kernels.exact:
            coefs, self_help = rate_coefficients(params, kernels)
            self._sys = CompleteSystem(states, kernels.N, coefs, self_help)
        else:
            self._sys = GenericSystem(states, params, kernels)

    @property
    def size(self) -> int:
        return self.kernels.size

    @property
    def states(self) -> np.ndarray:
        return self._sys.states()

    @property
    def rates(self) -> np.ndarray:
        return self._sys.rates()

    @property
    def total_rate(self) -> float:
        return self._sys.total_rate

    @property
    def time(self) -> float:
        return self._sys.time

    @property
    def n_events(self) -> int:
        return self._sys.n_events

    @property
    def n_ones(self) -> int:
        return int(self._sys.n_ones)

    def absorption(self) -> str:
        k = self.n_ones
        if k == 0:
            return "all0"
        if k == self.size:
            return "all1"
        return "none"

    def step(self, rng) -> Event:
        """Apply one event; raises :class:`AbsorbedError` if nothing can flip."""
        out = self._sys.step(rng)
        if out is None:
            raise AbsorbedError("total flip rate is zero")
        dt, site, new = out
        return Event(float(dt), int(site), int(new))

    def flip(self, u: int) -> None:
        """Flip ``u`` without advancing time (rate cache refreshed)."""
        self._sys.flip(u)

    def advance(self, rng, max_events, max_time=math.inf, stop_on_absorption=False,
                out_time=None, out_site=None, out_state=None):
        return self._sys.advance(rng, max_events, max_time, stop_on_absorption,
                                 out_time, out_site, out_state)

    def recompute_cache_full(self) -> "Configuration":
        self._sys.refresh_all()
        return self

    def cache_error(self) -> float:
        """Largest ``|cached rate - brute-force rate|`` over all sites."""
        x = self.states
        cached = self.rates
        brute = np.array([float(flip_rate_bruteforce(self.params, self.kernels, x, u))
                          for u in range(self.size)])
        return float(np.max(np.abs(cached - brute))) if self.size else 0.0


@dataclass(frozen=True)
class StopCondition:
    max_events: int | None = None
    max_time: float | None = None
    stop_on_absorption: bool = False

    def __post_init__(self):
        if self.max_events is None and self.max_time is None and not self.stop_on_absorption:
            raise ValueError("stop condition needs max_events, max_time or stop_on_absorption")
        if self.max_events is not None and self.max_events < 0:
            raise ValueError("max_events must be >= 0")


@dataclass(frozen=True)
class InitSpec:
    """Initial law: ``bernoulli``, ``finite_cooperators``, ``finite_defectors`` or ``explicit``."""

    kind: str
    p: float = 0.5
    sites: tuple[int, ...] = ()
    bits: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind == "bernoulli":
            if not 0.0 <= self.p <= 1.0:
                raise ValueError(f"bernoulli probability must be in [0, 1], got {self.p}")
        elif self.kind in ("finite_cooperators", "finite_defectors"):
            if not self.sites:
                raise ValueError(f"{self.kind} needs a nonempty site set")
        elif self.kind == "explicit":
            if not self.bits:
                raise ValueError("explicit init needs bits")
        else:
            raise ValueError(f"unknown init kind {self.kind!r}")

    @classmethod
    def bernoulli(cls, p: float) -> "InitSpec":
        return cls("bernoulli", p=p)

    @classmethod
    def finite_cooperators(cls, sites) -> "InitSpec":
        return cls("finite_cooperators", sites=tuple(int(s) for s in sites))

    @classmethod
    def finite_defectors(cls, sites) -> "InitSpec":
        return cls("finite_defectors", sites=tuple(int(s) for s in sites))

    @classmethod
    def explicit(cls, bits) -> "InitSpec":
        return cls("explicit", bits=tuple(int(b) for b in bits))


def sample_states(spec: InitSpec, size: int, rng) -> np.ndarray:
    if spec.kind == "bernoulli":
        return (rng.random(size) < spec.p).astype(np.uint8)
    if spec.kind == "explicit":
        if len(spec.bits) != size:
            raise ValueError(f"explicit init has {len(spec.bits)} bits for {size} sites")
        return np.array(spec.bits, dtype=np.uint8)
    bad = [s for s in spec.sites if not 0 <= s < size]
    if bad:
        raise ValueError(f"init sites out of range: {bad}")
    x = np.zeros(size, dtype=np.uint8)
    x[list(spec.sites)] = 1
    return x if spec.kind == "finite_cooperators" else 1 - x


def sample_initial(spec: InitSpec, params: ModelParams, kernels: KernelPair, rng) -> Configuration:
    return Configuration(params, kernels, sample_states(spec, kernels.size, rng))


@dataclass
class Snapshot:
    event_count: int
    time: float
    cooperator_frequency: float
    interface_density: float
    patterns: dict[str, float] = field(default_factory=dict)


@dataclass
class Trajectory:
    event_times: np.ndarray
    event_sites: np.ndarray
    event_states: np.ndarray
    snapshots: list[Snapshot]
    initial_state: np.ndarray
    final_state: np.ndarray
    absorption: str
    n_events: int
    time: float
    status: str

    @property
    def events(self):
        """``(time, site, new_state)`` tuples."""
        return list(zip(self.event_times.tolist(), self.event_sites.tolist(),
                        self.event_states.tolist()))


def _snapshot(conf: Configuration, patterns) -> Snapshot:
    x = conf.states
    vs = conf.kernels.vertex_set
    if isinstance(vs, Torus) and vs.d == 1:
        iface = observables.interface_density(x)
        pats = {p: observables.pattern_frequency(x, p) for p in patterns}
    elif isinstance(vs, Torus):
        iface = observables.disagreement_density(x, conf.kernels.nbr)
        pats = {}
    else:
        iface = float("nan")
        pats = {}
    return Snapshot(conf.n_events, conf.time, observables.type_frequency(x), iface, pats)


def run(params: ModelParams, kernels: KernelPair, init: InitSpec, stop: StopCondition, seed,
        snapshot_every: int | None = None, patterns=(), record_events: bool = True,
        backend=None) -> Trajectory:
    """Simulate one replica until ``stop`` is met.

    ``seed`` is an int, or a ready :class:`numpy.random.Generator`.  The
    initial configuration is drawn from the same stream before the
    dynamics start, so ``(seed, params, init)`` determine the trajectory.
    Snapshots are taken at event 0, every ``snapshot_every`` events and at
    the end.
    """
    rng = make_rng(seed)
    conf = Configuration(params, kernels, sample_states(init, kernels.size, rng), backend=backend)
    initial = conf.states
    max_events = stop.max_events if stop.max_events is not None else math.inf
    max_time = stop.max_time if stop.max_time is not None else math.inf
    chunk = snapshot_every if snapshot_every else 100_000
    snaps = [_snapshot(conf, patterns)]
    times, sites, states = [], [], []
    status = EVENTS
    if stop.stop_on_absorption and conf.absorption() != "none":
        status = ABSORBED
    while status == EVENTS and conf.n_events < max_events:
        n = int(min(chunk, max_events - conf.n_events))
        if record_events:
            bt = np.empty(n, dtype=np.float64)
            bs = np.empty(n, dtype=np.int64)
            bx = np.empty(n, dtype=np.uint8)
        else:
            bt = bs = bx = None
        done, status = conf.advance(rng, n, max_time, stop.stop_on_absorption, bt, bs, bx)
        if record_events:
            times.append(bt[:done])
            sites.append(bs[:done])
            states.append(bx[:done])
        if snapshot_every and done == n:
            snaps.append(_snapshot(conf, patterns))
    if snaps[-1].event_count != conf.n_events or snaps[-1].time != conf.time:
        snaps.append(_snapshot(conf, patterns))
    cat = lambda parts, dt: np.concatenate(parts) if parts else np.empty(0, dtype=dt)
    return Trajectory(
        event_times=cat(times, np.float64),
        event_sites=cat(sites, np.int64),
        event_states=cat(states, np.uint8),
        snapshots=snaps,
        initial_state=initial,
        final_state=conf.states,
        absorption=conf.absorption(),
        n_events=conf.n_events,
        time=conf.time,
        status=STATUS_NAMES[status],
    )
