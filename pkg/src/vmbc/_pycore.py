"""Pure-Python event kernels.

Reference implementation of everything in ``_core.pyx``.  Both modules
draw uniforms from the same numpy bit generator in the same order and do
the same floating point operations in the same order, so for a given seed
they produce identical trajectories.  Keep them in lockstep.
"""
import math

import numpy as np

EVENTS = 0
TIME = 1
ABSORBED = 2


class SumTree:
    """Binary sum tree over ``n`` nonnegative leaves.

    Internal nodes are always recomputed as ``left + right``, so the tree is
    a pure function of its leaves and never accumulates drift.
    """

    def __init__(self, n):
        size = 1
        while size < n:
            size *= 2
        self.n = n
        self.size = size
        self.tree = [0.0] * (2 * size)

    def set_all(self, values):
        t = self.tree
        size = self.size
        for i, v in enumerate(values):
            t[size + i] = v
        for i in range(size - 1, 0, -1):
            t[i] = t[2 * i] + t[2 * i + 1]

    def update(self, i, value):
        t = self.tree
        i += self.size
        t[i] = value
        i //= 2
        while i:
            t[i] = t[2 * i] + t[2 * i + 1]
            i //= 2

    @property
    def total(self):
        return self.tree[1]

    def leaf(self, i):
        return self.tree[self.size + i]

    def sample(self, target):
        """Leaf index holding ``target`` in the cumulative order; never a zero leaf."""
        t = self.tree
        i = 1
        size = self.size
        while i < size:
            left = t[2 * i]
            if target < left or t[2 * i + 1] == 0.0:
                i = 2 * i
            else:
                target -= left
                i = 2 * i + 1
        return i - size


class TorusSystem:
    """Spin configuration on a torus with a cached, tree-indexed rate per site."""

    def __init__(self, states, nbr, dep_ptr, dep_idx, coefs, self_help):
        n = len(states)
        self.n = n
        self.x = [int(s) for s in states]
        self.nbr = [[int(v) for v in row] for row in nbr]
        self.deps = [[int(s) for s in dep_idx[dep_ptr[i]:dep_ptr[i + 1]]] for i in range(n)]
        self.a0, self.g0, self.a1, self.g1 = (float(c) for c in coefs)
        self.self_help = int(self_help)
        self.n_ones = sum(self.x)
        self.time = 0.0
        self.n_events = 0
        self.tree = SumTree(n)
        self.refresh_all()

    def compute_rate(self, u):
        x = self.x
        xu = x[u]
        n = 0
        h = 0
        for v in self.nbr[u]:
            if x[v] != xu:
                n += 1
                h += self.self_help * xu
                for w in self.nbr[v]:
                    if w != u and x[w]:
                        h += 1
        if xu == 0:
            return self.a0 * n + self.g0 * h
        return self.a1 * n + self.g1 * h

    def refresh_all(self):
        self.tree.set_all([self.compute_rate(u) for u in range(self.n)])

    def rate(self, u):
        return self.tree.leaf(u)

    @property
    def total_rate(self):
        return self.tree.total

    def rates(self):
        return np.array([self.tree.leaf(u) for u in range(self.n)], dtype=np.float64)

    def states(self):
        return np.array(self.x, dtype=np.uint8)

    def flip(self, u):
        x = self.x
        x[u] ^= 1
        self.n_ones += 1 if x[u] else -1
        update = self.tree.update
        for s in self.deps[u]:
            update(s, self.compute_rate(s))

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
        """Run up to ``max_events`` events; returns ``(events_done, status)``."""
        tree = self.tree
        n = self.n
        done = 0
        record = out_time is not None
        while done < max_events:
            total = tree.total
            if total <= 0.0:
                return done, ABSORBED
            u1 = rng.random()
            u2 = rng.random()
            site = tree.sample(u1 * total)
            dt = -math.log(1.0 - u2) / total
            if self.time + dt > max_time:
                self.time = max_time
                return done, TIME
            self.time += dt
            self.flip(site)
            if record:
                out_time[done] = self.time
                out_site[done] = site
                out_state[done] = self.x[site]
            done += 1
            self.n_events += 1
            if stop_on_absorption and (self.n_ones == 0 or self.n_ones == n):
                return done, ABSORBED
        return done, EVENTS


class CoupledTorusSystem:
    """Two torus configurations ``lower <= upper`` driven by one joint event stream.

    Per site, with ``cl``/``cu`` the marginal rates of lower/upper:

    * both 0: both flip up at ``cl``, upper alone at ``cu - cl``;
    * both 1: both flip down at ``cu``, lower alone at ``cl - cu``;
    * lower 0, upper 1: lower flips up at ``cl``, upper flips down at ``cu``.

    Marginals stay exact even if a rate inequality fails: the larger rate
    then belongs to the wrong component, its lone flip breaks the order and
    shows up in ``order_violations``; the failed inequality itself is
    counted in ``rate_violations``.  ``counts`` and ``compensators``
    hold, in the order (lower up, lower down, upper up, upper down), the
    number of marginal flips and the integrated marginal rates.
    """

    def __init__(self, lower, upper, nbr, dep_ptr, dep_idx,
                 low_coefs, low_self, up_coefs, up_self, tol=1e-12):
        n = len(lower)
        self.n = n
        self.lo = [int(s) for s in lower]
        self.up = [int(s) for s in upper]
        self.nbr = [[int(v) for v in row] for row in nbr]
        self.deps = [[int(s) for s in dep_idx[dep_ptr[i]:dep_ptr[i + 1]]] for i in range(n)]
        self.low_coefs = tuple(float(c) for c in low_coefs)
        self.low_self = int(low_self)
        self.up_coefs = tuple(float(c) for c in up_coefs)
        self.up_self = int(up_self)
        self.tol = float(tol)
        self.time = 0.0
        self.n_events = 0
        self.rate_violations = 0
        self.order_violations = 0
        self.first_violation = None
        self.counts = [0, 0, 0, 0]
        self.compensators = [0.0, 0.0, 0.0, 0.0]
        self.cl = [0.0] * n
        self.cu = [0.0] * n
        self.joint = SumTree(n)
        self.trees = [SumTree(n) for _ in range(4)]
        self.refresh_all()

    @staticmethod
    def _rate(x, nbr, u, coefs, self_help):
        xu = x[u]
        n = 0
        h = 0
        for v in nbr[u]:
            if x[v] != xu:
                n += 1
                h += self_help * xu
                for w in nbr[v]:
                    if w != u and x[w]:
                        h += 1
        if xu == 0:
            return coefs[0] * n + coefs[1] * h
        return coefs[2] * n + coefs[3] * h

    def _joint_rate(self, u, cl, cu):
        lo = self.lo[u]
        if lo != self.up[u]:
            return cl + cu
        # the marginal that should be larger: upper on 0-sites, lower on 1-sites
        short = cl - cu if lo == 0 else cu - cl
        if short > self.tol * (1.0 + cl + cu):
            self.rate_violations += 1
            if self.first_violation is None:
                self.first_violation = (u, lo, cl, cu)
        return cu if cu >= cl else cl

    def _refresh(self, u):
        cl = self._rate(self.lo, self.nbr, u, self.low_coefs, self.low_self)
        cu = self._rate(self.up, self.nbr, u, self.up_coefs, self.up_self)
        self.cl[u] = cl
        self.cu[u] = cu
        lo = self.lo[u]
        up = self.up[u]
        self.trees[0].update(u, cl if lo == 0 else 0.0)
        self.trees[1].update(u, cl if lo == 1 else 0.0)
        self.trees[2].update(u, cu if up == 0 else 0.0)
        self.trees[3].update(u, cu if up == 1 else 0.0)
        self.joint.update(u, self._joint_rate(u, cl, cu))

    def refresh_all(self):
        for u in range(self.n):
            self._refresh(u)

    @property
    def total_rate(self):
        return self.joint.total

    def lower_states(self):
        return np.array(self.lo, dtype=np.uint8)

    def upper_states(self):
        return np.array(self.up, dtype=np.uint8)

    def lower_rates(self):
        return np.array(self.cl, dtype=np.float64)

    def upper_rates(self):
        return np.array(self.cu, dtype=np.float64)

    def check_order(self):
        bad = 0
        for a, b in zip(self.lo, self.up):
            if a > b:
                bad += 1
        return bad

    def _apply(self, u, u3):
        lo = self.lo[u]
        up = self.up[u]
        cl = self.cl[u]
        cu = self.cu[u]
        flip_lo = 0
        flip_up = 0
        if lo == up:
            big = cu if cu >= cl else cl
            small = cl if cu >= cl else cu
            if u3 * big < small:
                flip_lo = 1
                flip_up = 1
            elif cu >= cl:
                flip_up = 1
            else:
                flip_lo = 1
        elif u3 * (cl + cu) < cl:
            flip_lo = 1
        else:
            flip_up = 1
        if flip_lo:
            self.counts[0 if lo == 0 else 1] += 1
            self.lo[u] = lo ^ 1
        if flip_up:
            self.counts[2 if up == 0 else 3] += 1
            self.up[u] = up ^ 1
        for s in self.deps[u]:
            self._refresh(s)
        return self.lo[u], self.up[u]

    def _accumulate(self, dt):
        comp = self.compensators
        for i in range(4):
            comp[i] += dt * self.trees[i].total

    def step(self, rng):
        total = self.joint.total
        if total <= 0.0:
            return None
        u1 = rng.random()
        u2 = rng.random()
        u3 = rng.random()
        site = self.joint.sample(u1 * total)
        dt = -math.log(1.0 - u2) / total
        self._accumulate(dt)
        self.time += dt
        lo, up = self._apply(site, u3)
        self.n_events += 1
        return dt, site, lo, up

    def advance(self, rng, max_events, max_time=math.inf, check_every=1000):
        done = 0
        while done < max_events:
            total = self.joint.total
            if total <= 0.0:
                return done, ABSORBED
            u1 = rng.random()
            u2 = rng.random()
            u3 = rng.random()
            site = self.joint.sample(u1 * total)
            dt = -math.log(1.0 - u2) / total
            if self.time + dt > max_time:
                self._accumulate(max_time - self.time)
                self.time = max_time
                return done, TIME
            self._accumulate(dt)
            self.time += dt
            self._apply(site, u3)
            done += 1
            self.n_events += 1
            if check_every > 0 and self.n_events % check_every == 0:
                self.order_violations += self.check_order()
        return done, EVENTS


def frequency_process(n, k0, alpha, gamma, t_max, rng):
    """Number of cooperators on the complete graph, as a birth-death chain.

    Returns ``(times, counts)`` with one entry per jump, starting at
    ``(0, k0)``.
    """
    times = [0.0]
    ks = [k0]
    k = k0
    t = 0.0
    nm1 = n - 1.0
    nm12 = (n - 1.0) * (n - 2.0)
    while 0 < k < n:
        kf = float(k)
        mix = kf * (n - kf) / nm1
        coop = gamma * kf * (kf - 1.0) * (n - kf) / nm12
        up = mix + coop
        down = (1.0 + alpha) * mix + coop
        total = up + down
        u1 = rng.random()
        u2 = rng.random()
        t += -math.log(1.0 - u2) / total
        if t > t_max:
            break
        k += 1 if u1 * total < up else -1
        times.append(t)
        ks.append(k)
    return np.array(times), np.array(ks, dtype=np.int64)


def jump_escape_batch(lam1, lam2, mu, c0, t_max, escape_level, n_runs, rng):
    """Jump process with constant rates, started at ``c0`` and stopped at 1.

    Jumps are -1 at ``mu``, +1 at ``lam1``, +2 at ``lam2``.  Returns
    ``(hit, hit_time, final)``; a run that reaches ``escape_level`` or
    ``t_max`` first is censored (``hit`` False).
    """
    total = lam1 + lam2 + mu
    hit = np.zeros(n_runs, dtype=bool)
    hit_time = np.full(n_runs, np.inf)
    final = np.zeros(n_runs, dtype=np.int64)
    for r in range(n_runs):
        c = c0
        t = 0.0
        while c > 1 and c < escape_level:
            u1 = rng.random()
            u2 = rng.random()
            dt = -math.log(1.0 - u2) / total
            if t + dt > t_max:
                break
            t += dt
            target = u1 * total
            if target < mu:
                c -= 1
            elif target < mu + lam1:
                c += 1
            else:
                c += 2
        if c <= 1:
            hit[r] = True
            hit_time[r] = t
        final[r] = c
    return hit, hit_time, final


def jump_values_batch(lam1, lam2, mu, c0, grid, n_runs, rng):
    """Values of the free (unstopped) constant-rate jump process at sorted times."""
    total = lam1 + lam2 + mu
    m = len(grid)
    out = np.zeros((n_runs, m), dtype=np.int64)
    for r in range(n_runs):
        c = c0
        t = 0.0
        j = 0
        while j < m:
            u1 = rng.random()
            u2 = rng.random()
            t += -math.log(1.0 - u2) / total
            while j < m and grid[j] < t:
                out[r, j] = c
                j += 1
            target = u1 * total
            if target < mu:
                c -= 1
            elif target < mu + lam1:
                c += 1
            else:
                c += 2
    return out


def birth_death_batch(up_one, up_rest, down, start, max_jumps, escape_level, n_runs, rng):
    """Embedded jump chain of a birth-death process absorbed at 0.

    Up rate is ``up_one`` in state 1 and ``up_rest`` above; down rate is
    ``down``.  Returns ``(absorbed, jumps)``; runs reaching ``escape_level``
    (if positive) or ``max_jumps`` are censored.
    """
    absorbed = np.zeros(n_runs, dtype=bool)
    jumps = np.zeros(n_runs, dtype=np.int64)
    p1 = up_one / (up_one + down)
    pr = up_rest / (up_rest + down)
    for r in range(n_runs):
        c = start
        j = 0
        while c > 0 and j < max_jumps and (escape_level <= 0 or c < escape_level):
            u = rng.random()
            p = p1 if c == 1 else pr
            c += 1 if u < p else -1
            j += 1
        absorbed[r] = c == 0
        jumps[r] = j
    return absorbed, jumps
