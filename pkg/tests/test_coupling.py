import numpy as np
import pytest

from vmbc._backend import core
from vmbc.coupling import (
    CoupledState,
    CouplingViolation,
    coupled_replica,
    coupled_step,
    dominating_params,
    make_coupled,
    marginal_zscores,
    random_ordered_pairs,
    run_coupled,
    verify_rate_inequalities,
)
from vmbc.engine import InitSpec, cached_dependency_csr, make_rng
from vmbc.graphs import build_torus_kernels
from vmbc.rates import ModelParams, flip_rates_all, rate_coefficients


def test_dominating_parameters():
    lo, up = dominating_params("cvmbc_vs_bvm", 1.0, 0.5)
    assert (up.beta, up.delta) == (0.5, 1.0)
    assert lo == ModelParams("cvmbc", 1.0, 0.5)
    _, up = dominating_params("avmbc_vs_bvm", 0.25, 1.0, d=1)
    assert (up.beta, up.delta) == (0.5, 0.75)
    _, up = dominating_params("avmbc_vs_bvm", 0.25, 1.0, d=2)
    assert (up.beta, up.delta) == (0.75, 0.5)
    with pytest.raises(ValueError):
        dominating_params("kin_vs_bvm", 0, 0)


def test_initial_order():
    k = build_torus_kernels(1, 20, "cvmbc")
    cs = make_coupled("cvmbc_vs_bvm", 0.5, 0.5, k, InitSpec.bernoulli(0.5), rng=make_rng(0))
    np.testing.assert_array_equal(cs.lower, cs.upper)
    x = np.zeros(20)
    y = np.zeros(20)
    x[3] = 1
    with pytest.raises(ValueError):
        make_coupled("cvmbc_vs_bvm", 0.5, 0.5, k, (x, y))


def test_rejects_unsuitable_kernels():
    with pytest.raises(ValueError):
        make_coupled("cvmbc_vs_bvm", 0.5, 0.5, build_torus_kernels(1, 8, "cvmbc", exact=True),
                     InitSpec.bernoulli(0.5), rng=make_rng(0))
    with pytest.raises(ValueError):
        make_coupled("cvmbc_vs_bvm", 0.5, 0.5, build_torus_kernels(1, 8, "avmbc"),
                     InitSpec.bernoulli(0.5), rng=make_rng(0))


def test_discordant_site_flips_keep_order():
    k = build_torus_kernels(1, 10, "cvmbc")
    lo = np.zeros(10)
    up = np.zeros(10)
    up[4:7] = 1
    lo[5] = 1
    rng = make_rng(1)
    for _ in range(200):
        cs = make_coupled("cvmbc_vs_bvm", 0.5, 1.0, k, (lo, up))
        coupled_step(cs, rng)
        assert np.all(cs.lower <= cs.upper)


@pytest.mark.parametrize("coupling", ["cvmbc_vs_bvm", "avmbc_vs_bvm"])
def test_cached_rates_match_marginals(coupling):
    k = build_torus_kernels(2, 6, "cvmbc" if coupling.startswith("c") else "avmbc")
    rng = make_rng(4)
    lo, up = next(random_ordered_pairs(k.size, 1, rng))
    cs = make_coupled(coupling, 0.5, 0.75, k, (lo, up))
    run_coupled(cs, rng, max_events=500, check_every=1)
    np.testing.assert_allclose(cs.system.lower_rates(), flip_rates_all(cs.lower_params, k, cs.lower), atol=1e-12)
    np.testing.assert_allclose(cs.system.upper_rates(), flip_rates_all(cs.upper_params, k, cs.upper), atol=1e-12)


@pytest.mark.parametrize("coupling", ["cvmbc_vs_bvm", "avmbc_vs_bvm"])
def test_no_violations_and_correct_marginals(coupling):
    k = build_torus_kernels(1, 200, "cvmbc" if coupling.startswith("c") else "avmbc")
    rep = coupled_replica(coupling, 0.8, 0.3, k, seed=5, key=(0,), max_events=100_000, p_extra=0.2)
    assert rep.events == 100_000
    assert rep.order_violations == 0 and rep.rate_violations == 0
    assert np.all(np.abs(rep.zscores) <= 4)


@pytest.mark.parametrize("coupling,lower,upper", [
    ("cvmbc", ModelParams("cvmbc", 0.5, 1.5), ModelParams.biased_voter(1.5, 0.5)),
    ("avmbc", ModelParams("avmbc", 0.5, 1.5), ModelParams.biased_voter(0.75, 1.25)),
])
def test_rate_inequalities_on_random_pairs(coupling, lower, upper):
    k = build_torus_kernels(1, 50, coupling)
    rep = verify_rate_inequalities(lower, upper, k, random_ordered_pairs(50, 1000, make_rng(6)))
    assert rep.pairs == 1000 and rep.checks > 0
    assert rep.violations == 0 and rep.worst_margin >= -1e-12


def test_rate_inequalities_detect_too_weak_upper():
    k = build_torus_kernels(1, 50, "cvmbc")
    rep = verify_rate_inequalities(ModelParams("cvmbc", 0.5, 1.5), ModelParams.biased_voter(0.0, 0.5), k,
                                   random_ordered_pairs(50, 100, make_rng(6)))
    assert rep.violations > 0 and rep.worst_margin < 0


def test_all_ones_pair_has_equal_rates():
    k = build_torus_kernels(1, 12, "cvmbc")
    p = ModelParams.biased_voter(0.3, 0.7)
    rep = verify_rate_inequalities(p, p, k, [(np.ones(12), np.ones(12))])
    assert rep.violations == 0 and rep.worst_margin == 0


def test_broken_coupling_is_caught():
    # the plain voter model does not dominate a cooperating model
    k = build_torus_kernels(1, 40, "cvmbc")
    lower = ModelParams("cvmbc", 0.2, 2.0)
    upper = ModelParams.biased_voter(0.0, 0.2)
    lc, ls = rate_coefficients(lower, k)
    uc, us = rate_coefficients(upper, k)
    ptr, idx = cached_dependency_csr(k)
    x = (make_rng(2).random(40) < 0.5).astype(np.uint8)
    system = core.CoupledTorusSystem(x, x.copy(), k.nbr, ptr, idx, lc, ls, uc, us, 1e-12)
    cs = CoupledState(lower, upper, k, system, "cvmbc_vs_bvm")
    with pytest.raises(CouplingViolation) as err:
        run_coupled(cs, make_rng(3), max_events=10_000, check_every=1)
    assert err.value.lower_rate > err.value.upper_rate


def test_zscores():
    z = marginal_zscores([10, 0, 5, 0], [10.0, 0.0, 1.0, 4.0])
    np.testing.assert_allclose(z, [0, 0, 4, -2])
    assert np.isinf(marginal_zscores([1], [0.0])[0])


def test_defector_bias_kills_both_components():
    k = build_torus_kernels(1, 30, "cvmbc")
    for i in range(20):
        rng = make_rng(7, i)
        cs = make_coupled("cvmbc_vs_bvm", 1.0, 0.25, k, InitSpec.bernoulli(0.5), rng=rng)
        rep = run_coupled(cs, rng, max_events=10**6, check_every=1)
        assert rep.status == "absorbed"
        if not cs.upper.any():
            assert not cs.lower.any()
