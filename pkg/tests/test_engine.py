import numpy as np
import pytest

from vmbc.engine import (
    AbsorbedError,
    Configuration,
    InitSpec,
    StopCondition,
    make_rng,
    run,
    sample_initial,
    sample_states,
)
from vmbc.graphs import DenseKernels, build_complete_kernels, build_torus_kernels
from vmbc.rates import ModelParams, flip_rates_all, flip_rates_literal

CV = ModelParams("cvmbc", 1.0, 0.5)


def ring(L, variant="cvmbc"):
    return build_torus_kernels(1, L, variant)


def test_sampling_examples():
    rng = make_rng(1)
    assert sample_states(InitSpec.bernoulli(1.0), 10, rng).all()
    x = sample_states(InitSpec.finite_cooperators({3, 4}), 10, rng)
    assert list(np.flatnonzero(x)) == [3, 4]
    y = sample_states(InitSpec.finite_defectors([0]), 5, rng)
    assert list(y) == [0, 1, 1, 1, 1]
    freqs = [sample_states(InitSpec.bernoulli(0.5), 1000, make_rng(1, i)).mean() for i in range(200)]
    assert all(0.45 <= f <= 0.55 for f in freqs)


def test_sampling_rejects_out_of_range_sites():
    with pytest.raises(ValueError):
        sample_states(InitSpec.finite_cooperators([10]), 10, make_rng(0))
    with pytest.raises(ValueError):
        InitSpec.bernoulli(1.5)
    with pytest.raises(ValueError):
        StopCondition()


def test_sample_initial_fills_cache():
    conf = sample_initial(InitSpec.bernoulli(0.5), CV, ring(30), make_rng(3))
    np.testing.assert_array_equal(conf.rates, flip_rates_all(CV, ring(30), conf.states))
    assert conf.total_rate == pytest.approx(conf.rates.sum())


def test_absorbed_signal():
    conf = Configuration(CV, ring(10), np.zeros(10))
    assert conf.total_rate == 0
    with pytest.raises(AbsorbedError):
        conf.step(make_rng(0))


def test_first_flip_distribution(backend):
    p = ModelParams("cvmbc", 1.0, 3.0)
    conf = Configuration(p, ring(5), [0, 1, 0, 0, 0], backend=backend)
    np.testing.assert_array_equal(conf.rates, [0.5, 2, 0.5, 0, 0])
    assert conf.total_rate == 3
    rng = make_rng(11)
    n = 100_000
    hits = 0
    dts = np.empty(n)
    for i in range(n):
        ev = conf.step(rng)
        hits += ev.site == 1
        dts[i] = ev.dt
        conf.flip(ev.site)
    assert abs(hits / n - 2 / 3) < 0.01
    assert dts.mean() == pytest.approx(1 / 3, rel=0.02)


def test_determinism():
    stop = StopCondition(max_events=2000)
    a = run(CV, ring(50), InitSpec.bernoulli(0.5), stop, seed=5)
    b = run(CV, ring(50), InitSpec.bernoulli(0.5), stop, seed=5)
    c = run(CV, ring(50), InitSpec.bernoulli(0.5), stop, seed=6)
    assert a.events == b.events
    assert a.events != c.events


def test_defector_favoured_absorbs_to_all0():
    p = ModelParams("cvmbc", 1.0, 0.0)
    k = ring(20)
    stop = StopCondition(stop_on_absorption=True)
    results = [run(p, k, InitSpec.bernoulli(0.5), stop, seed=make_rng(42, i), record_events=False).absorption
               for i in range(1000)]
    assert "none" not in results
    assert results.count("all0") >= 990


def test_all_ones_start_is_absorbed_immediately():
    traj = run(CV, ring(8), InitSpec.explicit([1] * 8), StopCondition(stop_on_absorption=True), seed=0)
    assert traj.absorption == "all1"
    assert traj.n_events == 0 and traj.status == "absorbed"


@pytest.mark.parametrize("variant", ["cvmbc", "avmbc", "kin", "bvm"])
def test_cache_exact_after_events(variant, backend):
    k = ring(50, "avmbc" if variant == "avmbc" else "cvmbc")
    p = ModelParams(variant, 0.375, 1.25)
    conf = sample_initial(InitSpec.bernoulli(0.5), p, k, make_rng(9))
    conf = Configuration(p, k, conf.states, backend=backend)
    rng = make_rng(10)
    for _ in range(10_000):
        if conf.total_rate == 0:
            break
        conf.step(rng)
    np.testing.assert_array_equal(conf.rates, flip_rates_literal(p, k, conf.states))
    assert conf.cache_error() == 0
    assert conf.recompute_cache_full().total_rate == pytest.approx(conf.rates.sum(), rel=1e-12)


def test_all_zero_total_rate():
    assert Configuration(CV, ring(7), np.zeros(7)).recompute_cache_full().total_rate == 0


def test_single_defector_rates():
    al, ga = 0.5, 0.75
    p = ModelParams("cvmbc", al, ga)
    x = np.ones(9)
    x[4] = 0
    r = Configuration(p, ring(9), x).rates
    assert r[4] == 1 + ga
    assert r[3] == r[5] == (1 + al) / 2 + ga / 2
    assert np.count_nonzero(r) == 3


def test_trajectory_invariants():
    k = ring(1000)
    p = ModelParams("cvmbc", 0.5, 0.5)
    traj = run(p, k, InitSpec.bernoulli(0.5), StopCondition(max_events=5000), seed=3,
               snapshot_every=1000, patterns=("10",))
    assert traj.n_events == 5000 == len(traj.event_times)
    assert np.all(np.diff(traj.event_times) > 0)
    assert traj.time == traj.event_times[-1]
    x = traj.initial_state.copy()
    for s, new in zip(traj.event_sites, traj.event_states):
        assert x[s] != new
        x[s] = new
    np.testing.assert_array_equal(x, traj.final_state)
    assert [s.event_count for s in traj.snapshots] == [0, 1000, 2000, 3000, 4000, 5000]
    assert traj.snapshots[-1].cooperator_frequency == traj.final_state.mean()
    bound = k.size * (1 + p.alpha + p.gamma)
    conf = Configuration(p, k, traj.final_state)
    assert conf.total_rate <= bound


def test_max_time_stop():
    traj = run(CV, ring(200), InitSpec.bernoulli(0.5), StopCondition(max_time=2.0), seed=1)
    assert traj.status == "time"
    assert traj.event_times[-1] <= 2.0


@pytest.mark.parametrize("kernels", [
    build_complete_kernels(12),
    build_torus_kernels(1, 9, "cvmbc", exact=True),
    DenseKernels.cooperative(np.full((6, 6), 0.2) - 0.2 * np.eye(6)),
])
def test_other_systems_keep_cache(kernels):
    p = ModelParams("cvmbc", 0.5, 1.0)
    conf = sample_initial(InitSpec.bernoulli(0.5), p, kernels, make_rng(4))
    rng = make_rng(5)
    for _ in range(300):
        if conf.total_rate == 0:
            break
        before = conf.states
        ev = conf.step(rng)
        assert before[ev.site] != ev.new_state
    assert conf.cache_error() <= 1e-12


def test_complete_graph_is_exchangeable():
    p = ModelParams("cvmbc", 0.0, 0.0)
    k = build_complete_kernels(10)
    x = np.zeros(10)
    x[0] = 1
    counts = np.zeros(10)
    rng = make_rng(2)
    for _ in range(20_000):
        conf = Configuration(p, k, x)
        counts[conf.step(rng).site] += 1
    # the single cooperator and each of the nine defectors flip at rate 1 and 1/9
    assert counts[0] / 20_000 == pytest.approx(0.5, abs=0.015)
    assert counts[1:].std() / counts[1:].mean() < 0.1
