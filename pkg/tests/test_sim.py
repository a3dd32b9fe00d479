import numpy as np
import pytest

from persuade import BiasInterval, MixedHorizons, Scheme
from persuade import fixtures
from persuade.binary import two_point_scheme
from persuade.oracle import brute_opt_general
from persuade.sim import (
    Environment,
    aggregate,
    benchmark_value,
    default_grid,
    make_rng,
    run_trial,
    run_trials,
)

B = fixtures.BINARY


def test_step_uninformative(binary_inst):
    env = Environment(binary_inst, 0.7, 50)
    s = Scheme.single(binary_inst.prior, 0)
    for _ in range(50):
        rec = env.step(s)
        assert rec.atom == 0 and rec.action == 0
    with pytest.raises(RuntimeError):
        env.step(s)


def test_step_frequencies(binary_inst):
    n = 10**5
    env = Environment(binary_inst, 0.7, n, seed=(5, 0))
    s = two_point_scheme(0.7, B)
    atoms = np.empty(n, dtype=int)
    states = np.empty(n, dtype=int)
    for t in range(n):
        rec = env.step(s)
        atoms[t], states[t] = rec.atom, rec.state
    assert abs(atoms.mean() - 1 / 3) < 0.01
    freq = np.bincount(states, minlength=2) / n
    assert np.all(np.abs(freq - binary_inst.prior) < 0.01)
    # the receiver follows both recommendations of the optimal scheme
    assert env.trace.final_regret() == pytest.approx(0.0, abs=1e-9)


def test_play_until_matches_repeated_steps(binary_inst):
    s = two_point_scheme(0.7, B)
    waits = [Environment(binary_inst, 0.7, 10**4, seed=(6, i)).play_until(s, (1,)).rounds for i in range(4000)]
    # geometric with success probability 1/3
    assert np.mean(waits) == pytest.approx(3.0, rel=0.05)


def test_benchmark(binary_inst, fig2):
    assert benchmark_value(binary_inst, 0.7) == pytest.approx(1 / 3, abs=1e-9)
    assert benchmark_value(binary_inst, 0.3) == pytest.approx(0.0, abs=1e-12)
    for a in (0.55, 0.85):
        assert benchmark_value(fig2, a) == pytest.approx(brute_opt_general(fig2, a), abs=1e-7)


def test_trial_basics():
    for algo in ("bs", "se", "sej", "gse"):
        s = run_trial(algo, 10**4, B, 0.3, (1, 0))
        assert s.final == 0.0 and np.all(s.values == 0.0)
    empty = run_trial("se", 0, B, 0.7, (1, 0))
    assert len(empty) == 0 and empty.values.shape == (0,) and empty.final == 0.0
    a = run_trial("gse", 5000, fixtures.fig2_instance(), 0.85, (3, 1))
    b = run_trial("gse", 5000, fixtures.fig2_instance(), 0.85, (3, 1))
    np.testing.assert_array_equal(a.values, b.values)
    with pytest.raises(ValueError):
        run_trial("se", 100, fixtures.fig2_instance(), 0.85)
    with pytest.raises(ValueError):
        run_trial("nope", 100, B, 0.7)


def test_streams_are_independent():
    a = make_rng(1, 2, 0).random(5)
    b = make_rng(1, 2, 1).random(5)
    c = make_rng(1, 3, 0).random(5)
    assert not np.allclose(a, b) and not np.allclose(a, c)


def test_realized_form(binary_inst):
    s = run_trial("se", 5000, B, 0.7, (2, 0), regret_form="realized")
    e = run_trial("se", 5000, B, 0.7, (2, 0))
    assert len(s.values) == 5000
    # same decisions: both forms share every random stream the learner sees
    assert s.trace.interval_history == e.trace.interval_history
    many = [run_trial("bs", 2000, B, 0.7, (3, i), regret_form="realized").final for i in range(200)]
    exp = [run_trial("bs", 2000, B, 0.7, (3, i)).final for i in range(200)]
    assert np.mean(many) == pytest.approx(np.mean(exp), abs=4 * np.std(many) / np.sqrt(200))


def test_compaction_keeps_grid_exact():
    full = run_trials("se", 10**4, B, 0.7, 3, keep_blocks=True)
    grid = default_grid(10**4)
    comp = run_trials("se", 10**4, B, 0.7, 3, grid=grid)
    for f, c in zip(full, comp):
        np.testing.assert_allclose(f.at(grid), c.at(grid), atol=1e-9)
        assert c.trace.flags["compacted"]


def test_parallel_matches_serial():
    a = run_trials("bs", 3000, B, 0.7, 4, threads=1)
    b = run_trials("bs", 3000, B, 0.7, 4, threads=2)
    assert [s.final for s in a] == [s.final for s in b]


def test_aggregate():
    s = run_trials("se", 1000, B, 0.7, 1)
    ag = aggregate(s)
    np.testing.assert_allclose(ag.mean, s[0].values)
    np.testing.assert_allclose(ag.ci_hi - ag.ci_lo, 0.0)
    ag = aggregate([np.array([1.0]), np.array([3.0])])
    assert ag.mean[0] == 2.0
    half = 1.959963984540054 * np.std([1.0, 3.0], ddof=1) / np.sqrt(2)
    assert ag.ci_hi[0] - 2.0 == pytest.approx(half)
    with pytest.raises(MixedHorizons):
        aggregate(run_trials("se", 100, B, 0.7, 1) + run_trials("se", 200, B, 0.7, 1))


def test_mean_curve_is_monotone():
    series = run_trials("se", 10**4, B, 0.7, 200)
    ag = aggregate(series, default_grid(10**4))
    assert np.all(np.diff(ag.mean) >= -1e-12)


def test_environment_allowed_set(fig2):
    env = Environment(fig2, 0.55, 10)
    assert 1 not in env.allowed
    assert Environment(fig2, 0.85, 10).allowed == (0, 1, 2)


def test_trace_records(binary_inst):
    env = Environment(binary_inst, 0.7, 100, seed=(1, 1))
    env.play_until(two_point_scheme(0.7, B), (1,))
    recs = list(env.trace.records())
    assert len(recs) == 1 and recs[0][3] == 1 and recs[0][4] == 1
    assert env.trace.interval_history == []
    assert BiasInterval(0.6, 0.8).contains(env.alpha)
