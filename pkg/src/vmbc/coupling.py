"""Monotone coupling of a cooperation model below a biased voter model.

The dominating biased voter model gets bias ``beta`` on 0-sites and
``delta`` on 1-sites.  For the cooperative model ``(beta, delta) =
(gamma, alpha)``; for the altruistic model on a ``d``-dimensional torus
``(gamma (2d-1)/(2d), alpha + gamma/(2d))``.  Both components are driven by
one event stream (joint move table in :class:`vmbc._pycore.CoupledTorusSystem`);
each marginal is exact, and a failed rate inequality surfaces as an order
violation instead of being hidden.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._backend import core
from .engine import cached_dependency_csr, check_compatible, make_rng
from .graphs import TorusKernels, helper_mass_excess
from .rates import ModelParams, flip_rates_all, rate_coefficients

COUPLINGS = ("cvmbc_vs_bvm", "avmbc_vs_bvm")
DIRECTIONS = ("lower_up", "lower_down", "upper_up", "upper_down")


class CouplingViolation(RuntimeError):
    """Lower component exceeded the upper one at some site."""

    def __init__(self, message, site=None, lower_rate=None, upper_rate=None):
        super().__init__(message)
        self.site = site
        self.lower_rate = lower_rate
        self.upper_rate = upper_rate


def dominating_params(coupling: str, alpha: float, gamma: float, d: int = 1) -> tuple[ModelParams, ModelParams]:
    """``(lower, upper)`` model parameters for a coupling name."""
    if coupling == "cvmbc_vs_bvm":
        return ModelParams("cvmbc", alpha, gamma), ModelParams.biased_voter(gamma, alpha)
    if coupling == "avmbc_vs_bvm":
        deg = 2 * d
        upper = ModelParams.biased_voter(gamma * (deg - 1) / deg, alpha + gamma / deg)
        return ModelParams("avmbc", alpha, gamma), upper
    raise ValueError(f"unknown coupling {coupling!r}; expected one of {COUPLINGS}")


@dataclass
class CoupledState:
    lower_params: ModelParams
    upper_params: ModelParams
    kernels: TorusKernels
    system: object
    coupling: str

    @property
    def lower(self) -> np.ndarray:
        return self.system.lower_states()

    @property
    def upper(self) -> np.ndarray:
        return self.system.upper_states()

    @property
    def time(self) -> float:
        return self.system.time

    @property
    def n_events(self) -> int:
        return self.system.n_events

    @property
    def counts(self) -> np.ndarray:
        """Marginal flip counts in the order of :data:`DIRECTIONS`."""
        return np.asarray(self.system.counts, dtype=np.int64)

    @property
    def compensators(self) -> np.ndarray:
        """Integrated marginal rates in the order of :data:`DIRECTIONS`."""
        return np.asarray(self.system.compensators, dtype=np.float64)

    def first_disorder(self):
        bad = np.flatnonzero(self.lower > self.upper)
        return int(bad[0]) if bad.size else None


def make_coupled(coupling: str, alpha: float, gamma: float, kernels: TorusKernels, init,
                 rng=None, backend=None, tol: float = 1e-12) -> CoupledState:
    """Build a coupled pair.

    Parameters
    ----------
    init : InitSpec or (lower, upper) pair of arrays
        An InitSpec is sampled once and used for both components.
    rng : Generator, optional
        Needed only when ``init`` is an InitSpec.
    """
    from .engine import InitSpec, sample_states

    if not isinstance(kernels, TorusKernels) or kernels.exact:
        raise ValueError("coupled runs need float torus kernels")
    lower_p, upper_p = dominating_params(coupling, alpha, gamma, kernels.d)
    check_compatible(lower_p, kernels)
    if coupling == "cvmbc_vs_bvm":
        excess = getattr(kernels, "_helper_excess", None)
        if excess is None:
            excess = kernels._helper_excess = helper_mass_excess(kernels)
        if excess > tol:
            raise ValueError(f"helper mass exceeds the reproduction kernel by {excess:.3g}")
    if isinstance(init, InitSpec):
        lo = sample_states(init, kernels.size, rng)
        up = lo.copy()
    else:
        lo, up = (np.asarray(s, dtype=np.uint8) for s in init)
    if lo.shape != (kernels.size,) or up.shape != (kernels.size,):
        raise ValueError("initial configurations have the wrong size")
    if np.any(lo > up):
        raise ValueError(f"initial lower configuration exceeds upper at site {int(np.argmax(lo > up))}")
    low_coefs, low_self = rate_coefficients(lower_p, kernels)
    up_coefs, up_self = rate_coefficients(upper_p, kernels)
    ptr, idx = cached_dependency_csr(kernels)
    mod = backend or core
    system = mod.CoupledTorusSystem(lo, up, kernels.nbr, ptr, idx,
                                    low_coefs, low_self, up_coefs, up_self, tol)
    return CoupledState(lower_p, upper_p, kernels, system, coupling)


def _raise_if_violated(cs: CoupledState):
    sys = cs.system
    site = cs.first_disorder()
    if site is None and not sys.order_violations and not sys.rate_violations:
        return
    if sys.rate_violations:
        u, state, cl, cu = sys.first_violation
        raise CouplingViolation(
            f"rate inequality failed at site {u} (both components {state}): "
            f"lower rate {cl}, upper rate {cu}; order broken at site {site}",
            site=u, lower_rate=cl, upper_rate=cu,
        )
    raise CouplingViolation(
        f"order violated at site {site} after {cs.n_events} events",
        site=site,
        lower_rate=None if site is None else float(sys.lower_rates()[site]),
        upper_rate=None if site is None else float(sys.upper_rates()[site]),
    )


def coupled_step(cs: CoupledState, rng):
    """One joint event ``(dt, site, lower_state, upper_state)``; None if both are frozen.

    Order is checked after the event; a violation raises :class:`CouplingViolation`.
    """
    out = cs.system.step(rng)
    _raise_if_violated(cs)
    return out


@dataclass
class CouplingReport:
    events: int
    time: float
    order_violations: int
    rate_violations: int
    counts: np.ndarray
    compensators: np.ndarray
    status: str

    @property
    def zscores(self) -> np.ndarray:
        return marginal_zscores(self.counts, self.compensators)


def marginal_zscores(counts, compensators) -> np.ndarray:
    """``(N - Lambda) / sqrt(Lambda)`` per direction.

    ``N - Lambda`` is a martingale with quadratic variation ``N``, so each
    entry is approximately standard normal when the marginal is correct.
    Entries with zero compensator are 0 if no flip happened, else inf.
    """
    counts = np.asarray(counts, dtype=np.float64)
    comp = np.asarray(compensators, dtype=np.float64)
    z = np.zeros_like(comp)
    pos = comp > 0
    z[pos] = (counts[pos] - comp[pos]) / np.sqrt(comp[pos])
    z[~pos & (counts > 0)] = np.inf
    return z


def run_coupled(cs: CoupledState, rng, max_events: int, max_time: float = math.inf,
                check_every: int = 1000, strict: bool = True) -> CouplingReport:
    """Advance until ``max_events``, ``max_time`` or absorption of both components.

    Order is checked every ``check_every`` events (1 = after every event).
    With ``strict`` a violation raises, otherwise it is only counted.
    """
    if check_every < 1:
        raise ValueError("check_every must be >= 1")
    status_names = {0: "events", 1: "time", 2: "absorbed"}
    sys = cs.system
    status = 0
    while sys.n_events < max_events and status == 0:
        n = min(max_events - sys.n_events, check_every * 100)
        _, status = sys.advance(rng, n, max_time, check_every)
        if strict:
            _raise_if_violated(cs)
    if sys.n_events % check_every:
        sys.order_violations += sys.check_order()
    if strict:
        _raise_if_violated(cs)
    return CouplingReport(sys.n_events, sys.time, int(sys.order_violations), int(sys.rate_violations),
                          cs.counts, cs.compensators, status_names[status])


@dataclass
class InequalityReport:
    pairs: int
    checks: int
    violations: int
    worst_margin: float


def verify_rate_inequalities(lower: ModelParams, upper: ModelParams, kernels, pairs) -> InequalityReport:
    """Check the coupling rate inequalities on ordered pairs ``X <= Y``.

    Where ``X(u) = Y(u) = 0`` the lower rate must not exceed the upper one;
    where ``X(u) = Y(u) = 1`` the upper rate must not exceed the lower one.
    ``worst_margin`` is the smallest slack over all checked sites (negative
    means a violation).
    """
    n_pairs = checks = bad = 0
    worst = math.inf
    for X, Y in pairs:
        X = np.asarray(X, dtype=np.int64)
        Y = np.asarray(Y, dtype=np.int64)
        if np.any(X > Y):
            raise ValueError("pairs must satisfy X <= Y")
        cx = flip_rates_all(lower, kernels, X)
        cy = flip_rates_all(upper, kernels, Y)
        both0 = (X == 0) & (Y == 0)
        both1 = (X == 1) & (Y == 1)
        slack = np.concatenate([(cy - cx)[both0], (cx - cy)[both1]])
        n_pairs += 1
        checks += slack.size
        if slack.size:
            worst = min(worst, float(slack.min()))
            bad += int(np.sum(slack < -1e-12))
    return InequalityReport(n_pairs, checks, bad, worst)


def random_ordered_pairs(size: int, n: int, rng, p_lower: float = 0.4, p_extra: float = 0.3):
    """``n`` random pairs ``X <= Y``: X Bernoulli, Y adds independent extra 1s."""
    for _ in range(n):
        X = (rng.random(size) < p_lower).astype(np.uint8)
        Y = X | (rng.random(size) < p_extra).astype(np.uint8)
        yield X, Y


def coupled_replica(coupling: str, alpha: float, gamma: float, kernels: TorusKernels,
                    seed: int, key: tuple, max_events: int, p_lower: float = 0.5,
                    p_extra: float = 0.0, check_every: int = 1000) -> CouplingReport:
    """Non-strict coupled run of ``max_events`` events from random ordered starts.

    Small tori absorb long before ``max_events``; each time both components
    freeze, a fresh ordered pair is drawn and the run continues.  Counts,
    compensators and violations are summed over these segments.  The stream
    is ``make_rng(seed, *key)``.
    """
    rng = make_rng(seed, *key)
    total = CouplingReport(0, 0.0, 0, 0, np.zeros(4, dtype=np.int64), np.zeros(4), "events")
    while total.events < max_events:
        lo = (rng.random(kernels.size) < p_lower).astype(np.uint8)
        up = lo | (rng.random(kernels.size) < p_extra).astype(np.uint8)
        cs = make_coupled(coupling, alpha, gamma, kernels, (lo, up))
        rep = run_coupled(cs, rng, max_events - total.events, check_every=check_every, strict=False)
        total.events += rep.events
        total.time += rep.time
        total.order_violations += rep.order_violations
        total.rate_violations += rep.rate_violations
        total.counts += rep.counts
        total.compensators += rep.compensators
        total.status = rep.status
    return total
