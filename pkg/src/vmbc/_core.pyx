# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled event kernels; same interface and arithmetic as ``_pycore``."""
import math

import numpy as np

cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport log, INFINITY
from libc.stdint cimport int64_t, uint8_t
from numpy.random cimport bitgen_t

cnp.import_array()

EVENTS = 0
TIME = 1
ABSORBED = 2


cdef inline bitgen_t* _bitgen(object rng) except NULL:
    return <bitgen_t*> PyCapsule_GetPointer(rng.bit_generator.capsule, "BitGenerator")


cdef inline double _uniform(bitgen_t* bg) noexcept nogil:
    return bg.next_double(bg.state)


cdef class SumTree:
    cdef public Py_ssize_t n, size
    cdef double[::1] tree

    def __init__(self, Py_ssize_t n):
        cdef Py_ssize_t size = 1
        while size < n:
            size *= 2
        self.n = n
        self.size = size
        self.tree = np.zeros(2 * size, dtype=np.float64)

    cdef inline void update(self, Py_ssize_t i, double value) noexcept nogil:
        i += self.size
        self.tree[i] = value
        i //= 2
        while i:
            self.tree[i] = self.tree[2 * i] + self.tree[2 * i + 1]
            i //= 2

    cdef void rebuild(self) noexcept nogil:
        cdef Py_ssize_t i
        for i in range(self.size - 1, 0, -1):
            self.tree[i] = self.tree[2 * i] + self.tree[2 * i + 1]

    cdef inline Py_ssize_t sample(self, double target) noexcept nogil:
        cdef Py_ssize_t i = 1
        cdef double left
        while i < self.size:
            left = self.tree[2 * i]
            if target < left or self.tree[2 * i + 1] == 0.0:
                i = 2 * i
            else:
                target -= left
                i = 2 * i + 1
        return i - self.size

    @property
    def total(self):
        return self.tree[1]

    def leaf(self, Py_ssize_t i):
        return self.tree[self.size + i]


cdef inline double _site_rate(const uint8_t* x, const int64_t* nbr, Py_ssize_t k,
                              Py_ssize_t u, double a0, double g0, double a1, double g1,
                              int self_help) noexcept nogil:
    cdef uint8_t xu = x[u]
    cdef int64_t n = 0, h = 0
    cdef Py_ssize_t j, i
    cdef int64_t v, w
    for j in range(k):
        v = nbr[u * k + j]
        if x[v] != xu:
            n += 1
            h += self_help * xu
            for i in range(k):
                w = nbr[v * k + i]
                if w != u and x[w]:
                    h += 1
    if xu == 0:
        return a0 * <double> n + g0 * <double> h
    return a1 * <double> n + g1 * <double> h


cdef class TorusSystem:
    cdef public Py_ssize_t n, k
    cdef public double time
    cdef public int64_t n_events, n_ones
    cdef public double a0, g0, a1, g1
    cdef public int self_help
    cdef uint8_t[::1] x
    cdef int64_t[::1] nbr
    cdef int64_t[::1] dep_ptr
    cdef int64_t[::1] dep_idx
    cdef SumTree tree

    def __init__(self, states, nbr, dep_ptr, dep_idx, coefs, self_help):
        self.x = np.ascontiguousarray(states, dtype=np.uint8).copy()
        nbr_arr = np.ascontiguousarray(nbr, dtype=np.int64)
        self.n = self.x.shape[0]
        self.k = nbr_arr.shape[1]
        self.nbr = nbr_arr.ravel().copy()
        self.dep_ptr = np.ascontiguousarray(dep_ptr, dtype=np.int64).copy()
        self.dep_idx = np.ascontiguousarray(dep_idx, dtype=np.int64).copy()
        self.a0, self.g0, self.a1, self.g1 = (float(c) for c in coefs)
        self.self_help = int(self_help)
        self.n_ones = int(np.asarray(self.x).sum())
        self.time = 0.0
        self.n_events = 0
        self.tree = SumTree(self.n)
        self.refresh_all()

    cdef inline double _rate(self, Py_ssize_t u) noexcept nogil:
        return _site_rate(&self.x[0], &self.nbr[0], self.k, u,
                          self.a0, self.g0, self.a1, self.g1, self.self_help)

    def compute_rate(self, Py_ssize_t u):
        return self._rate(u)

    def refresh_all(self):
        cdef Py_ssize_t u
        for u in range(self.n):
            self.tree.tree[self.tree.size + u] = self._rate(u)
        self.tree.rebuild()

    def rate(self, Py_ssize_t u):
        return self.tree.tree[self.tree.size + u]

    @property
    def total_rate(self):
        return self.tree.tree[1]

    def rates(self):
        return np.asarray(self.tree.tree[self.tree.size:self.tree.size + self.n]).copy()

    def states(self):
        return np.asarray(self.x).copy()

    cdef inline void _flip(self, Py_ssize_t u) noexcept nogil:
        cdef Py_ssize_t j
        cdef int64_t s
        self.x[u] ^= 1
        if self.x[u]:
            self.n_ones += 1
        else:
            self.n_ones -= 1
        for j in range(self.dep_ptr[u], self.dep_ptr[u + 1]):
            s = self.dep_idx[j]
            self.tree.update(s, self._rate(s))

    def flip(self, Py_ssize_t u):
        self._flip(u)

    def step(self, rng):
        cdef bitgen_t* bg = _bitgen(rng)
        cdef double total = self.tree.tree[1]
        cdef double u1, u2, dt
        cdef Py_ssize_t site
        if total <= 0.0:
            return None
        with rng.bit_generator.lock:
            u1 = _uniform(bg)
            u2 = _uniform(bg)
        site = self.tree.sample(u1 * total)
        dt = -log(1.0 - u2) / total
        self.time += dt
        self._flip(site)
        self.n_events += 1
        return dt, site, self.x[site]

    def advance(self, rng, int64_t max_events, double max_time=INFINITY,
                bint stop_on_absorption=False, out_time=None, out_site=None, out_state=None):
        cdef bitgen_t* bg = _bitgen(rng)
        cdef int64_t done = 0
        cdef double total, u1, u2, dt
        cdef Py_ssize_t site
        cdef bint record = out_time is not None
        cdef double[::1] ot
        cdef int64_t[::1] os_
        cdef uint8_t[::1] ox
        cdef int status = EVENTS
        if record:
            ot = out_time
            os_ = out_site
            ox = out_state
        with rng.bit_generator.lock:
            while done < max_events:
                total = self.tree.tree[1]
                if total <= 0.0:
                    status = ABSORBED
                    break
                u1 = _uniform(bg)
                u2 = _uniform(bg)
                site = self.tree.sample(u1 * total)
                dt = -log(1.0 - u2) / total
                if self.time + dt > max_time:
                    self.time = max_time
                    status = TIME
                    break
                self.time += dt
                self._flip(site)
                if record:
                    ot[done] = self.time
                    os_[done] = site
                    ox[done] = self.x[site]
                done += 1
                self.n_events += 1
                if stop_on_absorption and (self.n_ones == 0 or self.n_ones == self.n):
                    status = ABSORBED
                    break
        return done, status


cdef class CoupledTorusSystem:
    cdef public Py_ssize_t n, k
    cdef public double time, tol
    cdef public int64_t n_events, rate_violations, order_violations
    cdef public object first_violation
    cdef double lc[4]
    cdef double uc[4]
    cdef int low_self, up_self
    cdef uint8_t[::1] lo
    cdef uint8_t[::1] up
    cdef double[::1] cl
    cdef double[::1] cu
    cdef int64_t[::1] nbr
    cdef int64_t[::1] dep_ptr
    cdef int64_t[::1] dep_idx
    cdef int64_t[::1] _counts
    cdef double[::1] _comp
    cdef SumTree joint, t0, t1, t2, t3

    def __init__(self, lower, upper, nbr, dep_ptr, dep_idx,
                 low_coefs, low_self, up_coefs, up_self, tol=1e-12):
        cdef int i
        self.lo = np.ascontiguousarray(lower, dtype=np.uint8).copy()
        self.up = np.ascontiguousarray(upper, dtype=np.uint8).copy()
        nbr_arr = np.ascontiguousarray(nbr, dtype=np.int64)
        self.n = self.lo.shape[0]
        self.k = nbr_arr.shape[1]
        self.nbr = nbr_arr.ravel().copy()
        self.dep_ptr = np.ascontiguousarray(dep_ptr, dtype=np.int64).copy()
        self.dep_idx = np.ascontiguousarray(dep_idx, dtype=np.int64).copy()
        for i in range(4):
            self.lc[i] = float(low_coefs[i])
            self.uc[i] = float(up_coefs[i])
        self.low_self = int(low_self)
        self.up_self = int(up_self)
        self.tol = float(tol)
        self.time = 0.0
        self.n_events = 0
        self.rate_violations = 0
        self.order_violations = 0
        self.first_violation = None
        self._counts = np.zeros(4, dtype=np.int64)
        self._comp = np.zeros(4, dtype=np.float64)
        self.cl = np.zeros(self.n, dtype=np.float64)
        self.cu = np.zeros(self.n, dtype=np.float64)
        self.joint = SumTree(self.n)
        self.t0 = SumTree(self.n)
        self.t1 = SumTree(self.n)
        self.t2 = SumTree(self.n)
        self.t3 = SumTree(self.n)
        self.refresh_all()

    @property
    def counts(self):
        return [int(c) for c in self._counts]

    @property
    def compensators(self):
        return [float(c) for c in self._comp]

    cdef double _joint_rate(self, Py_ssize_t u, double cl, double cu):
        cdef uint8_t lo = self.lo[u]
        cdef double short
        if lo != self.up[u]:
            return cl + cu
        if lo == 0:
            short = cl - cu
        else:
            short = cu - cl
        if short > self.tol * (1.0 + cl + cu):
            self.rate_violations += 1
            if self.first_violation is None:
                self.first_violation = (u, lo, cl, cu)
        return cu if cu >= cl else cl

    cdef void _refresh(self, Py_ssize_t u):
        cdef double cl = _site_rate(&self.lo[0], &self.nbr[0], self.k, u,
                                    self.lc[0], self.lc[1], self.lc[2], self.lc[3], self.low_self)
        cdef double cu = _site_rate(&self.up[0], &self.nbr[0], self.k, u,
                                    self.uc[0], self.uc[1], self.uc[2], self.uc[3], self.up_self)
        cdef uint8_t lo = self.lo[u]
        cdef uint8_t up = self.up[u]
        self.cl[u] = cl
        self.cu[u] = cu
        self.t0.update(u, cl if lo == 0 else 0.0)
        self.t1.update(u, cl if lo == 1 else 0.0)
        self.t2.update(u, cu if up == 0 else 0.0)
        self.t3.update(u, cu if up == 1 else 0.0)
        self.joint.update(u, self._joint_rate(u, cl, cu))

    def refresh_all(self):
        cdef Py_ssize_t u
        for u in range(self.n):
            self._refresh(u)

    @property
    def total_rate(self):
        return self.joint.tree[1]

    def lower_states(self):
        return np.asarray(self.lo).copy()

    def upper_states(self):
        return np.asarray(self.up).copy()

    def lower_rates(self):
        return np.asarray(self.cl).copy()

    def upper_rates(self):
        return np.asarray(self.cu).copy()

    cdef int64_t _check_order(self):
        cdef int64_t bad = 0
        cdef Py_ssize_t u
        for u in range(self.n):
            if self.lo[u] > self.up[u]:
                bad += 1
        return bad

    def check_order(self):
        return self._check_order()

    cdef void _apply(self, Py_ssize_t u, double u3):
        cdef uint8_t lo = self.lo[u]
        cdef uint8_t up = self.up[u]
        cdef double cl = self.cl[u]
        cdef double cu = self.cu[u]
        cdef double big, small
        cdef int flip_lo = 0, flip_up = 0
        cdef Py_ssize_t j
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
            self._counts[0 if lo == 0 else 1] += 1
            self.lo[u] = lo ^ 1
        if flip_up:
            self._counts[2 if up == 0 else 3] += 1
            self.up[u] = up ^ 1
        for j in range(self.dep_ptr[u], self.dep_ptr[u + 1]):
            self._refresh(self.dep_idx[j])

    cdef inline void _accumulate(self, double dt):
        self._comp[0] += dt * self.t0.tree[1]
        self._comp[1] += dt * self.t1.tree[1]
        self._comp[2] += dt * self.t2.tree[1]
        self._comp[3] += dt * self.t3.tree[1]

    def step(self, rng):
        cdef bitgen_t* bg = _bitgen(rng)
        cdef double total = self.joint.tree[1]
        cdef double u1, u2, u3, dt
        cdef Py_ssize_t site
        if total <= 0.0:
            return None
        with rng.bit_generator.lock:
            u1 = _uniform(bg)
            u2 = _uniform(bg)
            u3 = _uniform(bg)
        site = self.joint.sample(u1 * total)
        dt = -log(1.0 - u2) / total
        self._accumulate(dt)
        self.time += dt
        self._apply(site, u3)
        self.n_events += 1
        return dt, site, self.lo[site], self.up[site]

    def advance(self, rng, int64_t max_events, double max_time=INFINITY, int64_t check_every=1000):
        cdef bitgen_t* bg = _bitgen(rng)
        cdef int64_t done = 0
        cdef double total, u1, u2, u3, dt
        cdef Py_ssize_t site
        cdef int status = EVENTS
        with rng.bit_generator.lock:
            while done < max_events:
                total = self.joint.tree[1]
                if total <= 0.0:
                    status = ABSORBED
                    break
                u1 = _uniform(bg)
                u2 = _uniform(bg)
                u3 = _uniform(bg)
                site = self.joint.sample(u1 * total)
                dt = -log(1.0 - u2) / total
                if self.time + dt > max_time:
                    self._accumulate(max_time - self.time)
                    self.time = max_time
                    status = TIME
                    break
                self._accumulate(dt)
                self.time += dt
                self._apply(site, u3)
                done += 1
                self.n_events += 1
                if check_every > 0 and self.n_events % check_every == 0:
                    self.order_violations += self._check_order()
        return done, status


def frequency_process(int64_t n, int64_t k0, double alpha, double gamma, double t_max, rng):
    cdef bitgen_t* bg = _bitgen(rng)
    cdef int64_t k = k0
    cdef double t = 0.0, kf, mix, coop, up, down, total, u1, u2
    cdef double nm1 = n - 1.0
    cdef double nm12 = (n - 1.0) * (n - 2.0)
    times = [0.0]
    ks = [k0]
    with rng.bit_generator.lock:
        while 0 < k < n:
            kf = <double> k
            mix = kf * (n - kf) / nm1
            coop = gamma * kf * (kf - 1.0) * (n - kf) / nm12
            up = mix + coop
            down = (1.0 + alpha) * mix + coop
            total = up + down
            u1 = _uniform(bg)
            u2 = _uniform(bg)
            t += -log(1.0 - u2) / total
            if t > t_max:
                break
            if u1 * total < up:
                k += 1
            else:
                k -= 1
            times.append(t)
            ks.append(k)
    return np.array(times), np.array(ks, dtype=np.int64)


def jump_escape_batch(double lam1, double lam2, double mu, int64_t c0, double t_max,
                      int64_t escape_level, Py_ssize_t n_runs, rng):
    cdef bitgen_t* bg = _bitgen(rng)
    cdef double total = lam1 + lam2 + mu
    cdef double t, dt, u1, u2, target
    cdef int64_t c
    cdef Py_ssize_t r
    hit_arr = np.zeros(n_runs, dtype=np.uint8)
    time_arr = np.full(n_runs, np.inf)
    final_arr = np.zeros(n_runs, dtype=np.int64)
    cdef uint8_t[::1] hit = hit_arr
    cdef double[::1] hit_time = time_arr
    cdef int64_t[::1] final = final_arr
    with rng.bit_generator.lock:
        for r in range(n_runs):
            c = c0
            t = 0.0
            while c > 1 and c < escape_level:
                u1 = _uniform(bg)
                u2 = _uniform(bg)
                dt = -log(1.0 - u2) / total
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
                hit[r] = 1
                hit_time[r] = t
            final[r] = c
    return hit_arr.view(bool), time_arr, final_arr


def jump_values_batch(double lam1, double lam2, double mu, int64_t c0, grid,
                      Py_ssize_t n_runs, rng):
    cdef bitgen_t* bg = _bitgen(rng)
    cdef double total = lam1 + lam2 + mu
    cdef double[::1] g = np.ascontiguousarray(grid, dtype=np.float64)
    cdef Py_ssize_t m = g.shape[0]
    out_arr = np.zeros((n_runs, m), dtype=np.int64)
    cdef int64_t[:, ::1] out = out_arr
    cdef Py_ssize_t r, j
    cdef int64_t c
    cdef double t, u1, u2, target
    with rng.bit_generator.lock:
        for r in range(n_runs):
            c = c0
            t = 0.0
            j = 0
            while j < m:
                u1 = _uniform(bg)
                u2 = _uniform(bg)
                t += -log(1.0 - u2) / total
                while j < m and g[j] < t:
                    out[r, j] = c
                    j += 1
                target = u1 * total
                if target < mu:
                    c -= 1
                elif target < mu + lam1:
                    c += 1
                else:
                    c += 2
    return out_arr


def birth_death_batch(double up_one, double up_rest, double down, int64_t start,
                      int64_t max_jumps, int64_t escape_level, Py_ssize_t n_runs, rng):
    cdef bitgen_t* bg = _bitgen(rng)
    cdef double p1 = up_one / (up_one + down)
    cdef double pr = up_rest / (up_rest + down)
    cdef double u, p
    cdef int64_t c, j
    cdef Py_ssize_t r
    absorbed_arr = np.zeros(n_runs, dtype=np.uint8)
    jumps_arr = np.zeros(n_runs, dtype=np.int64)
    cdef uint8_t[::1] absorbed = absorbed_arr
    cdef int64_t[::1] jumps = jumps_arr
    with rng.bit_generator.lock:
        for r in range(n_runs):
            c = start
            j = 0
            while c > 0 and j < max_jumps and (escape_level <= 0 or c < escape_level):
                u = _uniform(bg)
                p = p1 if c == 1 else pr
                if u < p:
                    c += 1
                else:
                    c -= 1
                j += 1
            absorbed[r] = c == 0
            jumps[r] = j
    return absorbed_arr.view(bool), jumps_arr
