from fractions import Fraction as F

import numpy as np
import pytest

from vmbc.graphs import DenseKernels, build_complete_kernels, build_torus_kernels
from vmbc.rates import (
    ModelParams,
    dependency_csr,
    dependency_set,
    flip_rate_bruteforce,
    flip_rate_fast,
    flip_rates_all,
    flip_rates_literal,
)

RNG = np.random.default_rng(7)


def ring(L, variant="cvmbc", exact=False):
    return build_torus_kernels(1, L, variant, exact=exact)


def test_helped_defector_example():
    k = ring(6, exact=True)
    X = [1, 1, 0, 0, 0, 0]
    p = ModelParams("cvmbc", 0, F(1))
    assert flip_rate_bruteforce(p, k, X, 2) == 1
    assert flip_rate_fast(p, ring(6), X, 2) == 1.0


def test_isolated_cooperator_example():
    k = ring(6, exact=True)
    X = [0, 0, 1, 0, 0, 0]
    assert flip_rate_bruteforce(ModelParams("cvmbc", F(1, 2), F(3)), k, X, 2) == F(3, 2)


@pytest.mark.parametrize("variant", ["cvmbc", "avmbc", "kin", "bvm"])
def test_absorbing_states_have_zero_rate(variant):
    k = ring(8, "cvmbc" if variant == "bvm" else variant)
    p = ModelParams(variant, 0.5, 0.75)
    for X in (np.zeros(8, int), np.ones(8, int)):
        assert not flip_rates_all(p, k, X).any()
        assert all(flip_rate_bruteforce(p, k, X, u) == 0 for u in range(8))


def test_altruistic_equals_shifted_cooperative_exact():
    L = 9
    ka, kc = ring(L, "avmbc", exact=True), ring(L, "cvmbc", exact=True)
    al, ga = F(3, 8), F(5, 4)
    pa = ModelParams("avmbc", al, ga)
    pc = ModelParams("cvmbc", al + ga / 2, ga / 2)
    for _ in range(50):
        X = RNG.integers(0, 2, L)
        for u in range(L):
            assert flip_rate_bruteforce(pa, ka, X, u) == flip_rate_bruteforce(pc, kc, X, u)


@pytest.mark.parametrize("d,L", [(1, 40), (2, 8)])
def test_fast_matches_bruteforce(d, L):
    for i in range(500):
        variant = ("cvmbc", "avmbc", "kin", "bvm")[i % 4]
        k = build_torus_kernels(d, L, "avmbc" if variant == "avmbc" else "cvmbc")
        p = ModelParams(variant, *RNG.uniform(0, 2, 2))
        X = (RNG.random(k.size) < RNG.random()).astype(int)
        u = int(RNG.integers(k.size))
        assert flip_rate_fast(p, k, X, u) == pytest.approx(flip_rate_bruteforce(p, k, X, u), abs=1e-12)


def test_fast_example_ring_100():
    k = ring(100)
    p = ModelParams("cvmbc", 0.3, 0.7)
    X = RNG.integers(0, 2, 100)
    brute = np.array([flip_rate_bruteforce(p, k, X, u) for u in range(100)])
    np.testing.assert_allclose(flip_rates_all(p, k, X), brute, rtol=0, atol=1e-12)


@pytest.mark.parametrize("variant", ["cvmbc", "avmbc", "kin", "bvm"])
@pytest.mark.parametrize("make", [
    lambda v: build_torus_kernels(1, 30, v),
    lambda v: build_torus_kernels(2, 6, v),
    lambda v: build_torus_kernels(3, 4, v),
    lambda v: build_complete_kernels(12, v),
])
def test_all_sites_agree_with_literal_sums(variant, make):
    k = make("avmbc" if variant == "avmbc" else "cvmbc")
    p = ModelParams(variant, 0.625, 1.25)
    for _ in range(20):
        X = (RNG.random(k.size) < RNG.random()).astype(int)
        lit = flip_rates_literal(p, k, X)
        np.testing.assert_allclose(flip_rates_all(p, k, X), lit, rtol=0, atol=1e-12)
        if getattr(k, "d", None) == 1:
            np.testing.assert_array_equal(flip_rates_all(p, k, X), lit)


def test_complete_graph_formula():
    N = 50
    k = build_complete_kernels(N)
    ke = build_complete_kernels(N, exact=True)
    ga = F(3, 4)
    p = ModelParams("cvmbc", F(1, 4), ga)
    for kk in (0, 1, 2, 17, 49):
        X = np.zeros(N, int)
        X[:kk] = 1
        expect = F(kk, N - 1) + ga * F(kk * (kk - 1), (N - 1) * (N - 2))
        assert flip_rate_bruteforce(p, ke, X, N - 1) == expect
        assert flip_rate_fast(ModelParams("cvmbc", 0.25, 0.75), k, X, N - 1) == pytest.approx(float(expect), abs=1e-12)


def test_all_ones_cooperator_rate_zero():
    k = ring(10)
    X = np.ones(10, int)
    assert flip_rate_fast(ModelParams("cvmbc", 1, 1), k, X, 3) == 0


def test_dependency_sets():
    assert dependency_set(ring(10), 0) == [0, 1, 2, 8, 9]
    assert len(dependency_set(build_torus_kernels(2, 7, "cvmbc"), 0)) == 13
    assert dependency_set(build_complete_kernels(6), 2) == list(range(6))
    indptr, indices = dependency_csr(ring(7))
    assert list(indices[indptr[3]:indptr[4]]) == [1, 2, 3, 4, 5]


@pytest.mark.parametrize("variant", ["cvmbc", "avmbc"])
def test_dependency_set_covers_rate_changes(variant):
    k = build_torus_kernels(2, 6, variant)
    p = ModelParams(variant, 0.5, 1.5)
    for _ in range(30):
        X = RNG.integers(0, 2, k.size)
        u = int(RNG.integers(k.size))
        before = flip_rates_all(p, k, X)
        X[u] ^= 1
        changed = np.flatnonzero(flip_rates_all(p, k, X) != before)
        assert set(changed) <= set(dependency_set(k, u))


def test_non_attractiveness_witness():
    a = np.zeros((3, 3))
    a[0, 1] = a[1, 2] = a[2, 0] = 1
    k = DenseKernels.altruistic(a)
    al, ga = 0.5, 2.0
    p = ModelParams("cvmbc", al, ga)
    X, Y = [0, 0, 1], [1, 0, 1]
    assert flip_rate_bruteforce(p, k, X, 2) == 1 + al
    assert flip_rate_bruteforce(p, k, Y, 2) == 1 + al + ga
    # X <= Y and both have a 1 at w, yet w dies faster under Y
    assert flip_rate_bruteforce(p, k, X, 2) < flip_rate_bruteforce(p, k, Y, 2)


def test_kin_dominates_cooperative():
    k = ring(20)
    pc, pk = ModelParams("cvmbc", 0.5, 1.0), ModelParams("kin", 0.5, 1.0)
    for _ in range(100):
        X = RNG.integers(0, 2, 20)
        rc, rk = flip_rates_all(pc, k, X), flip_rates_all(pk, k, X)
        np.testing.assert_array_equal(rk[X == 0], rc[X == 0])
        assert np.all(rk[X == 1] <= rc[X == 1])


def test_biased_voter_rates():
    k = ring(6, exact=True)
    p = ModelParams.biased_voter(beta=F(1, 2), delta=F(1))
    assert (p.beta, p.delta) == (F(1, 2), 1)
    X = [1, 0, 0, 1, 1, 0]
    assert flip_rate_bruteforce(p, k, X, 1) == F(3, 4)
    assert flip_rate_bruteforce(p, k, X, 3) == 1
    assert flip_rate_bruteforce(p, k, X, 0) == 2


@pytest.mark.parametrize("args", [("cvmbc", -0.1, 0), ("cvmbc", 0, -1), ("bvm", -1, 0), ("xyz", 0, 0)])
def test_params_rejected(args):
    with pytest.raises(ValueError):
        ModelParams(*args)
