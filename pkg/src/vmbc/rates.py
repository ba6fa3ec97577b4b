"""Flip rates of the voter model with bias and cooperation and its relatives.

Every variant shares one rate shape.  For a defector site ``u``::

    c(u, X) = A0 * n1 + G0 * H1

and for a cooperator site::

    c(u, X) = A1 * n0 + G1 * H0

where ``n1``/``n0`` count cooperator/defector parents ``v`` of ``u`` and the
``H`` terms count (parent, helper) pairs with a cooperating helper.  The
coefficients come from :func:`rate_coefficients`.  The brute-force evaluator
sums the kernel terms literally and is the oracle for the count formulas.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .graphs import ALTRUISTIC, CompleteKernels, KernelPair, TorusKernels

VARIANTS = ("cvmbc", "avmbc", "kin", "bvm")


@dataclass(frozen=True)
class ModelParams:
    """Model variant and its two rate parameters.

    For ``variant="bvm"`` (biased voter model) ``alpha`` holds the bias
    ``delta`` of the 1-sites and ``gamma`` the bias ``beta`` of the 0-sites;
    use :meth:`biased_voter` to build one without thinking about that.
    """

    variant: str
    alpha: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.variant == "bvm":
            if self.alpha <= -1 or self.gamma <= -1:
                raise ValueError("biased voter biases must be > -1")
        elif self.alpha < 0 or self.gamma < 0:
            raise ValueError("alpha and gamma must be nonnegative")

    @classmethod
    def biased_voter(cls, beta: float, delta: float) -> "ModelParams":
        return cls("bvm", alpha=delta, gamma=beta)

    @property
    def beta(self) -> float:
        return self.gamma

    @property
    def delta(self) -> float:
        return self.alpha


def rate_coefficients(params: ModelParams, kernels) -> tuple[tuple[float, float, float, float], int]:
    """``((A0, G0, A1, G1), self_help)`` for homogeneous kernels.

    ``self_help`` is 1 when a cooperator can help a neighbor replace it
    (altruistic kernel), in which case every defecting parent of a
    cooperator contributes one extra helper pair.
    """
    a = kernels.a_weight
    bw = kernels.b_weight
    al, ga = params.alpha, params.gamma
    if params.variant == "bvm":
        return ((1 + ga) * a, 0 * a, (1 + al) * a, 0 * a), 0
    self_help = 1 if kernels.b_kind == ALTRUISTIC else 0
    g = ga * bw
    if params.variant == "kin":
        return (a, g, (1 + al) * a, 0 * a), self_help
    return (a, g, (1 + al) * a, g), self_help


def flip_rate_bruteforce(params: ModelParams, kernels: KernelPair, X, u: int):
    """Rate at which site ``u`` flips, summed term by term over the kernels.

    Works for any nonnegative kernels, stochastic or not.  With fraction
    kernel weights and fraction parameters the result is exact.
    """
    x = X[u]
    if params.variant == "bvm":
        if x == 0:
            return (1 + params.beta) * sum(wt * X[v] for v, wt in kernels.a_in(u))
        return (1 + params.delta) * sum(wt * (1 - X[v]) for v, wt in kernels.a_in(u))
    if x == 0:
        voter = sum(wt * X[v] for v, wt in kernels.a_in(u))
        helped = sum(X[v] * X[w] * wt for w, v, wt in kernels.b_in(u))
        return voter + params.gamma * helped
    voter = (1 + params.alpha) * sum(wt * (1 - X[v]) for v, wt in kernels.a_in(u))
    if params.variant == "kin":
        return voter
    helped = sum((1 - X[v]) * X[w] * wt for w, v, wt in kernels.b_in(u))
    return voter + params.gamma * helped


def _support_arrays(kernels: KernelPair):
    """Kernel supports as flat arrays, cached on the kernel object."""
    cached = getattr(kernels, "_support", None)
    if cached is not None:
        return cached
    a_rows = [(v, u, float(wt)) for u in range(kernels.size) for v, wt in kernels.a_in(u)]
    b_rows = [(w, v, u, float(wt)) for u in range(kernels.size) for w, v, wt in kernels.b_in(u)]
    a_arr = tuple(np.array(c) for c in zip(*a_rows)) if a_rows else (np.zeros(0, int),) * 2 + (np.zeros(0),)
    b_arr = tuple(np.array(c) for c in zip(*b_rows)) if b_rows else (np.zeros(0, int),) * 3 + (np.zeros(0),)
    kernels._support = (a_arr, b_arr)
    return kernels._support


def flip_rates_literal(params: ModelParams, kernels: KernelPair, X) -> np.ndarray:
    """All flip rates by summing kernel weights over their support (float64).

    Same sums as :func:`flip_rate_bruteforce`, vectorized; it never uses
    the count formulas and serves as their oracle on large instances.
    """
    X = np.asarray(X, dtype=np.float64)
    n = kernels.size
    (av, au, aw), (bw_, bv, bu, bwt) = _support_arrays(kernels)
    from_ones = np.bincount(au, weights=aw * X[av], minlength=n)
    from_zeros = np.bincount(au, weights=aw * (1 - X[av]), minlength=n)
    if params.variant == "bvm":
        return np.where(X == 0, (1 + params.beta) * from_ones, (1 + params.delta) * from_zeros)
    help_ones = np.bincount(bu, weights=bwt * X[bv] * X[bw_], minlength=n)
    help_zeros = np.bincount(bu, weights=bwt * (1 - X[bv]) * X[bw_], minlength=n)
    r0 = from_ones + params.gamma * help_ones
    r1 = (1 + params.alpha) * from_zeros
    if params.variant != "kin":
        r1 = r1 + params.gamma * help_zeros
    return np.where(X == 0, r0, r1)


def _torus_counts(kernels: TorusKernels, X, u: int, self_help: int) -> tuple[int, int]:
    xu = X[u]
    n = h = 0
    for v in kernels.neighbors(u):
        if X[v] != xu:
            n += 1
            h += self_help * xu
            for w in kernels.neighbors(v):
                if w != u and X[w]:
                    h += 1
    return n, h


def flip_rate_fast(params: ModelParams, kernels: KernelPair, X, u: int):
    """Count-formula rate; falls back to brute force for hand-built kernels."""
    if isinstance(kernels, TorusKernels):
        (a0, g0, a1, g1), self_help = rate_coefficients(params, kernels)
        n, h = _torus_counts(kernels, X, u, self_help)
        if X[u] == 0:
            return a0 * n + g0 * h
        return a1 * n + g1 * h
    if isinstance(kernels, CompleteKernels):
        (a0, g0, a1, g1), self_help = rate_coefficients(params, kernels)
        k = int(sum(int(x) for x in X))
        N = kernels.N
        if X[u] == 0:
            return a0 * k + g0 * (k * (k - 1))
        return a1 * (N - k) + g1 * ((N - k) * (k - 1 + self_help))
    return flip_rate_bruteforce(params, kernels, X, u)


def flip_rates_all(params: ModelParams, kernels: KernelPair, X) -> np.ndarray:
    """Vectorized flip rates of every site (float64)."""
    X = np.asarray(X, dtype=np.int64)
    if isinstance(kernels, TorusKernels):
        (a0, g0, a1, g1), self_help = rate_coefficients(params, kernels)
        nbr = kernels.nbr
        n1 = X[nbr].sum(axis=1)
        # cooperating helpers next to each parent, excluding the target u
        helpers = n1[nbr] - X[:, None]
        xv = X[nbr]
        h1 = (xv * helpers).sum(axis=1)
        h0 = ((1 - xv) * (helpers + self_help)).sum(axis=1)
        n0 = nbr.shape[1] - n1
        r0 = float(a0) * n1 + float(g0) * h1
        r1 = float(a1) * n0 + float(g1) * h0
        return np.where(X == 0, r0, r1)
    if isinstance(kernels, CompleteKernels):
        return np.array([float(flip_rate_fast(params, kernels, X, u)) for u in range(len(X))])
    return np.array([float(flip_rate_bruteforce(params, kernels, X, u)) for u in range(len(X))])


def dependency_set(kernels: KernelPair, u: int) -> list[int]:
    """Sites whose flip rate reads ``X(u)``, including ``u`` itself (sorted).

    On a torus this is the graph ball of radius 2; on the complete graph it
    is everything.
    """
    if isinstance(kernels, TorusKernels):
        seen = {u}
        frontier = deque([(u, 0)])
        while frontier:
            s, dist = frontier.popleft()
            if dist == 2:
                continue
            for t in kernels.neighbors(s):
                if t not in seen:
                    seen.add(t)
                    frontier.append((t, dist + 1))
        return sorted(seen)
    if isinstance(kernels, CompleteKernels):
        return list(range(kernels.N))
    out = {u}
    out.update(s for s, wt in kernels.a_out(u) if wt > 0)
    for s in range(kernels.size):
        for w, v, wt in kernels.b_in(s):
            if wt > 0 and u in (w, v):
                out.add(s)
                break
    return sorted(out)


def dependency_csr(kernels: KernelPair) -> tuple[np.ndarray, np.ndarray]:
    """All dependency sets packed as ``(indptr, indices)`` int64 arrays."""
    sets = [dependency_set(kernels, u) for u in range(kernels.size)]
    indptr = np.zeros(len(sets) + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([len(s) for s in sets])
    indices = np.fromiter((s for group in sets for s in group), dtype=np.int64, count=int(indptr[-1]))
    return indptr, indices
