"""Finite vertex sets and the reproduction/cooperation kernels on them.

Two kernels drive every model in this package: the reproduction kernel
``a(u, v)`` and the cooperation kernel ``b(u, (v, w))`` (a cooperator at
``u`` helps ``v`` reproduce onto ``w``).  Kernels are stored sparsely.  Torus
kernels are generated from a neighbor table, complete-graph kernels are
evaluated analytically, and :class:`DenseKernels` holds arbitrary hand-built
arrays (used for small counterexamples).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product

import numpy as np

ALTRUISTIC = "altruistic"
COOPERATIVE = "cooperative"

#: which cooperation kernel each model variant uses; None means b is unused
VARIANT_B_KIND = {
    "avmbc": ALTRUISTIC,
    "cvmbc": COOPERATIVE,
    "kin": COOPERATIVE,
    "bvm": None,
}


@dataclass(frozen=True)
class Torus:
    """Periodic ``L x ... x L`` lattice in dimension ``d``."""

    d: int
    L: int

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"torus dimension must be 1, 2 or 3, got {self.d}")
        if self.L < 3:
            raise ValueError(f"torus side length must be >= 3, got {self.L}")

    kind = "torus"

    @property
    def size(self) -> int:
        return self.L**self.d

    @property
    def degree(self) -> int:
        return 2 * self.d

    def coords(self, u: int) -> tuple[int, ...]:
        return tuple(int(c) for c in np.unravel_index(u, (self.L,) * self.d))

    def index(self, coords) -> int:
        c = tuple(int(x) % self.L for x in coords)
        return int(np.ravel_multi_index(c, (self.L,) * self.d))

    def neighbor_table(self) -> np.ndarray:
        """(size, 2d) array; column ``2i`` is the +1 step along axis i, ``2i+1`` the -1 step."""
        shape = (self.L,) * self.d
        idx = np.arange(self.size).reshape(shape)
        cols = []
        for axis in range(self.d):
            cols.append(np.roll(idx, -1, axis=axis).ravel())
            cols.append(np.roll(idx, 1, axis=axis).ravel())
        return np.stack(cols, axis=1).astype(np.int64)


@dataclass(frozen=True)
class Complete:
    """Complete graph on ``N`` sites (unstructured population)."""

    N: int

    def __post_init__(self):
        if self.N < 3:
            raise ValueError(f"complete graph needs N >= 3 sites, got {self.N}")

    kind = "complete"

    @property
    def size(self) -> int:
        return self.N


@dataclass(frozen=True)
class Custom:
    """Unstructured finite vertex set for hand-built kernels."""

    N: int
    kind = "custom"

    @property
    def size(self) -> int:
        return self.N


class KernelPair:
    """Common read interface for a pair of kernels ``(a, b)``.

    Subclasses provide point evaluation plus the sparse incoming/outgoing
    lists used by the brute-force rate evaluator and the validator.
    ``b_kind`` is ``"altruistic"``, ``"cooperative"``, ``None`` (no
    cooperation kernel) or ``"custom"``.
    """

    vertex_set: Torus | Complete | Custom
    b_kind: str | None

    @property
    def size(self) -> int:
        return self.vertex_set.size

    @property
    def has_b(self) -> bool:
        return self.b_kind is not None

    def a(self, u, v):
        raise NotImplementedError

    def b(self, u, v, w):
        raise NotImplementedError

    def a_in(self, u):
        """``[(v, a(v, u))]`` over all ``v`` with ``a(v, u) > 0``."""
        raise NotImplementedError

    def b_in(self, u):
        """``[(w, v, b(w, (v, u)))]`` over all helper/parent pairs targeting ``u``."""
        raise NotImplementedError

    def a_out(self, u):
        raise NotImplementedError

    def b_out(self, u):
        """``[(v, w, b(u, (v, w)))]`` over the support of row ``u``."""
        raise NotImplementedError


class TorusKernels(KernelPair):
    """Nearest-neighbor kernels on a periodic lattice.

    ``a(u, v) = 1/(2d)`` for lattice neighbors.  The altruistic cooperation
    kernel is the two-step walk ``1/(2d)^2``; the cooperative one forbids
    returning to the helper, ``1/(2d(2d-1))`` with ``w != u``.
    """

    def __init__(self, torus: Torus, b_kind: str | None, exact: bool = False):
        if b_kind not in (ALTRUISTIC, COOPERATIVE, None):
            raise ValueError(f"unknown cooperation kernel kind {b_kind!r}")
        self.vertex_set = torus
        self.b_kind = b_kind
        self.exact = exact
        self.nbr = torus.neighbor_table()
        self.nbr.setflags(write=False)
        self._nbr_lists = [tuple(int(x) for x in row) for row in self.nbr]
        deg = torus.degree
        one = Fraction(1) if exact else 1.0
        self.a_weight = one / deg
        if b_kind == ALTRUISTIC:
            self.b_weight = one / (deg * deg)
        elif b_kind == COOPERATIVE:
            self.b_weight = one / (deg * (deg - 1))
        else:
            self.b_weight = 0 * one

    @property
    def d(self) -> int:
        return self.vertex_set.d

    @property
    def L(self) -> int:
        return self.vertex_set.L

    def neighbors(self, u):
        return self._nbr_lists[u]

    def a(self, u, v):
        return self.a_weight if v in self._nbr_lists[u] else 0 * self.a_weight

    def b(self, u, v, w):
        if self.b_kind is None:
            return 0 * self.a_weight
        if v not in self._nbr_lists[u] or w not in self._nbr_lists[v]:
            return 0 * self.a_weight
        if self.b_kind == COOPERATIVE and w == u:
            return 0 * self.a_weight
        return self.b_weight

    def a_in(self, u):
        return [(v, self.a_weight) for v in self._nbr_lists[u]]

    a_out = a_in

    def b_in(self, u):
        if self.b_kind is None:
            return []
        skip = self.b_kind == COOPERATIVE
        return [
            (w, v, self.b_weight)
            for v in self._nbr_lists[u]
            for w in self._nbr_lists[v]
            if not (skip and w == u)
        ]

    def b_out(self, u):
        if self.b_kind is None:
            return []
        skip = self.b_kind == COOPERATIVE
        return [
            (v, w, self.b_weight)
            for v in self._nbr_lists[u]
            for w in self._nbr_lists[v]
            if not (skip and w == u)
        ]


class CompleteKernels(KernelPair):
    """Uniform kernels on the complete graph, evaluated from counts.

    Nothing is materialized: ``a_in``/``b_in`` enumerate on demand, so they
    are only meant for small ``N`` (brute-force checks).
    """

    def __init__(self, graph: Complete, b_kind: str | None = COOPERATIVE, exact: bool = False):
        if b_kind not in (ALTRUISTIC, COOPERATIVE, None):
            raise ValueError(f"unknown cooperation kernel kind {b_kind!r}")
        self.vertex_set = graph
        self.b_kind = b_kind
        self.exact = exact
        n = graph.N
        one = Fraction(1) if exact else 1.0
        self.a_weight = one / (n - 1)
        if b_kind == ALTRUISTIC:
            self.b_weight = one / ((n - 1) * (n - 1))
        elif b_kind == COOPERATIVE:
            self.b_weight = one / ((n - 1) * (n - 2))
        else:
            self.b_weight = 0 * one

    @property
    def N(self) -> int:
        return self.vertex_set.N

    def a(self, u, v):
        return self.a_weight if u != v else 0 * self.a_weight

    def b(self, u, v, w):
        if self.b_kind is None or u == v or v == w:
            return 0 * self.a_weight
        if self.b_kind == COOPERATIVE and w == u:
            return 0 * self.a_weight
        return self.b_weight

    def a_in(self, u):
        return [(v, self.a_weight) for v in range(self.N) if v != u]

    a_out = a_in

    def b_in(self, u):
        if self.b_kind is None:
            return []
        skip = self.b_kind == COOPERATIVE
        return [
            (w, v, self.b_weight)
            for v in range(self.N)
            if v != u
            for w in range(self.N)
            if w != v and not (skip and w == u)
        ]

    def b_out(self, u):
        if self.b_kind is None:
            return []
        skip = self.b_kind == COOPERATIVE
        return [
            (v, w, self.b_weight)
            for v in range(self.N)
            if v != u
            for w in range(self.N)
            if w != v and not (skip and w == u)
        ]


class DenseKernels(KernelPair):
    """Arbitrary nonnegative kernels given as arrays ``a[u, v]``, ``b[u, v, w]``.

    Neither array has to be stochastic; :func:`validate_kernels` reports
    whether they are.
    """

    def __init__(self, a, b=None):
        a = np.asarray(a, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("a must be a square matrix")
        if np.any(a < 0):
            raise ValueError("kernel weights must be nonnegative")
        n = a.shape[0]
        self.vertex_set = Custom(n)
        self.a_matrix = a
        if b is None:
            self.b_tensor = np.zeros((n, n, n))
            self.b_kind = None
        else:
            b = np.asarray(b, dtype=float)
            if b.shape != (n, n, n):
                raise ValueError(f"b must have shape {(n, n, n)}, got {b.shape}")
            if np.any(b < 0):
                raise ValueError("kernel weights must be nonnegative")
            self.b_tensor = b
            self.b_kind = "custom"

    @classmethod
    def altruistic(cls, a):
        """``b(u, (v, w)) = a(u, v) a(v, w)``."""
        a = np.asarray(a, dtype=float)
        return cls(a, a[:, :, None] * a[None, :, :])

    @classmethod
    def cooperative(cls, a):
        """Two-step self-avoiding walk: the second step never returns to ``u``."""
        a = np.asarray(a, dtype=float)
        n = a.shape[0]
        b = np.zeros((n, n, n))
        for u, v in product(range(n), range(n)):
            if a[u, v] == 0 or a[v, u] >= 1:
                continue
            norm = sum(a[v, w] for w in range(n) if w != u)
            for w in range(n):
                if w != u:
                    b[u, v, w] = a[u, v] * a[v, w] / norm
        return cls(a, b)

    def a(self, u, v):
        return float(self.a_matrix[u, v])

    def b(self, u, v, w):
        return float(self.b_tensor[u, v, w])

    def a_in(self, u):
        col = self.a_matrix[:, u]
        return [(int(v), float(col[v])) for v in np.flatnonzero(col)]

    def a_out(self, u):
        row = self.a_matrix[u]
        return [(int(v), float(row[v])) for v in np.flatnonzero(row)]

    def b_in(self, u):
        sl = self.b_tensor[:, :, u]
        return [(int(w), int(v), float(sl[w, v])) for w, v in zip(*np.nonzero(sl))]

    def b_out(self, u):
        sl = self.b_tensor[u]
        return [(int(v), int(w), float(sl[v, w])) for v, w in zip(*np.nonzero(sl))]


def build_torus_kernels(d: int, L: int, variant: str, exact: bool = False) -> TorusKernels:
    """Nearest-neighbor kernels on the ``d``-dimensional torus of side ``L``.

    ``variant`` is one of ``cvmbc``, ``avmbc``, ``kin`` or ``bvm``; it only
    selects the cooperation kernel (``kin`` shares the cooperative kernel,
    ``bvm`` has none).  ``exact=True`` stores weights as fractions.
    """
    if variant not in VARIANT_B_KIND:
        raise ValueError(f"unknown model variant {variant!r}")
    return TorusKernels(Torus(d, L), VARIANT_B_KIND[variant], exact=exact)


def build_complete_kernels(N: int, variant: str = "cvmbc", exact: bool = False) -> CompleteKernels:
    """Uniform kernels on ``N`` sites: ``a = 1/(N-1)``, ``b = 1/((N-1)(N-2))`` on distinct triples."""
    if variant not in VARIANT_B_KIND:
        raise ValueError(f"unknown model variant {variant!r}")
    return CompleteKernels(Complete(N), VARIANT_B_KIND[variant], exact=exact)


@dataclass
class KernelReport:
    """Row-sum deviations and summability sums of a kernel pair."""

    row_dev_a: np.ndarray
    row_dev_b: np.ndarray | None
    col_sum_a: np.ndarray
    col_sum_b: np.ndarray | None
    tol: float = 1e-12
    failures: list[str] = field(default_factory=list)

    @property
    def max_row_dev_a(self) -> float:
        return float(self.row_dev_a.max())

    @property
    def max_row_dev_b(self) -> float:
        return float(self.row_dev_b.max()) if self.row_dev_b is not None else 0.0

    @property
    def ok(self) -> bool:
        return not self.failures


def validate_kernels(k: KernelPair, tol: float = 1e-12) -> KernelReport:
    """Check row-stochasticity of ``a`` and ``b`` and report the column sums.

    ``col_sum_a[v] = sum_u a(u, v)`` and ``col_sum_b[w] = sum_{u,v} b(u, (v, w))``
    must be finite; on a finite vertex set they always are, but non-finite
    weights are caught.  Rows deviating from 1 by more than ``tol`` are
    listed in ``failures``.
    """
    n = k.size
    row_a = np.zeros(n)
    col_a = np.zeros(n)
    for u in range(n):
        for v, wt in k.a_out(u):
            row_a[u] += wt
            col_a[v] += wt
    report = KernelReport(np.abs(row_a - 1.0), None, col_a, None, tol=tol)
    if k.has_b:
        row_b = np.zeros(n)
        col_b = np.zeros(n)
        for u in range(n):
            for _, w, wt in k.b_out(u):
                row_b[u] += wt
                col_b[w] += wt
        report.row_dev_b = np.abs(row_b - 1.0)
        report.col_sum_b = col_b
        bad = np.flatnonzero(report.row_dev_b > tol)
        if bad.size:
            report.failures.append(f"b rows not stochastic at {bad[:10].tolist()}")
        if not np.all(np.isfinite(col_b)):
            report.failures.append("b column sums not finite")
    bad = np.flatnonzero(report.row_dev_a > tol)
    if bad.size:
        report.failures.append(f"a rows not stochastic at {bad[:10].tolist()}")
    if not np.all(np.isfinite(col_a)):
        report.failures.append("a column sums not finite")
    return report


def helper_mass_excess(k: KernelPair) -> float:
    """``max_{v,w} (sum_u b(u, (v, w)) - a(v, w))``.

    Nonpositive (up to rounding) exactly when the cooperation kernel never
    puts more helping mass on a reproduction step than the step itself
    carries, the hypothesis needed to dominate the cooperative model by a
    biased voter model.
    """
    mass: dict[tuple[int, int], float] = {}
    for u in range(k.size):
        for v, w, wt in k.b_out(u):
            mass[v, w] = mass.get((v, w), 0.0) + wt
    if not mass:
        return float("-inf")
    return max(float(m - k.a(v, w)) for (v, w), m in mass.items())
