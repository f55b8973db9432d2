from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mkv_picard import benchmark
from mkv_picard.linear_flow import PiecewisePair
from mkv_picard.model import (
    ConfigurationError,
    ConstantATrigB,
    LevyTriplet,
    Problem,
    laplace_law,
    stable_law,
    trig_spectral,
)
from mkv_picard.picard import (
    PicardConfig,
    PicardError,
    default_iterations,
    discretize,
    initial_pair,
    iterate,
    weighted_norm,
)


def gaussian_problem():
    return benchmark.gaussian_1d().problem()


# --- iteration count ----------------------------------------------------------------

@pytest.mark.parametrize("n, m", [(1, 1), (2, 1), (3, 2), (16, 4), (17, 5), (256, 8)])
def test_default_iterations(n, m):
    assert default_iterations(n) == m
    assert PicardConfig(n_steps=n).iterations == m


@pytest.mark.parametrize("kw", [dict(n_steps=0), dict(n_steps=4, max_iters=0), dict(n_steps=4, lam=-1.0),
                                dict(n_steps=4, psi_path="x"), dict(n_steps=4, stop_tol=0.0),
                                dict(n_steps=2.5)])
def test_config_rejects_bad_values(kw):
    with pytest.raises(ValueError):
        PicardConfig(**kw)


# --- discretize ------------------------------------------------------------------------

def test_discretize_constant():
    pair = discretize(lambda t: ([[2.0]], [3.0]), 1.0, 5)
    ref = PiecewisePair.constant(1.0, 5, [[2.0]], [3.0])
    assert np.array_equal(pair.alpha_vals, ref.alpha_vals) and np.array_equal(pair.beta_vals, ref.beta_vals)


def test_discretize_identity_function():
    pair = discretize(lambda t: ([[t]], [t]), 1.0, 2)
    assert np.allclose(pair.beta_vals[:, 0], [0.5, 1.0])
    assert np.allclose(pair.alpha_vals[:, 0, 0], [0.5, 1.0])
    assert pair.value_at(0.25)[1][0] == 0.5 and pair.value_at(0.75)[1][0] == 1.0


@settings(max_examples=30)
@given(st.integers(1, 40), st.integers(0, 1000))
def test_discretize_idempotent(n, seed):
    rng = np.random.default_rng(seed)
    coeffs = rng.normal(size=3)
    once = discretize(lambda t: ([[np.sin(coeffs[0] * t)]], [coeffs[1] * t**2 + coeffs[2]]), 2.0, n)
    twice = discretize(once, 2.0, n)
    assert np.array_equal(once.alpha_vals, twice.alpha_vals)
    assert np.array_equal(once.beta_vals, twice.beta_vals)


def test_discretize_errors():
    with pytest.raises(ValueError):
        discretize(lambda t: ([[0.0]], [0.0]), 1.0, 0)
    with pytest.raises(ValueError):
        discretize(PiecewisePair.constant(1.0, 2, [[0.0]], [0.0]), 2.0, 2)


# --- weighted norm ------------------------------------------------------------------------

def _pair(values_a, values_b, horizon=1.0):
    a = np.asarray(values_a, dtype=float)[:, None, None]
    b = np.asarray(values_b, dtype=float)[:, None]
    return PiecewisePair(horizon, a, b)


def test_weighted_norm_identical_pairs():
    p = _pair([1, 2, 3], [4, 5, 6])
    assert weighted_norm(p, p, 3.0) == 0.0


def test_weighted_norm_lambda_zero_is_sup():
    p = _pair([1, 2, 3, 4], [0, 0, 0, 0])
    q = _pair([1, 0.5, 3, 4.2], [0, 0, 0.7, 0])
    assert weighted_norm(p, q, 0.0) == pytest.approx(1.5)


@pytest.mark.parametrize("i", [0, 1, 2, 3])
def test_weighted_norm_single_difference(i):
    lam, delta = 2.5, 0.3
    base = np.zeros(4)
    bumped = base.copy()
    bumped[i] = delta
    p, q = _pair(base, base), _pair(base, bumped)
    t_i = (i + 1) / 4
    assert weighted_norm(p, q, lam) == pytest.approx(np.exp(-lam * t_i) * delta, rel=1e-14)


@settings(max_examples=50)
@given(st.integers(0, 10_000), st.floats(0, 50), st.floats(0, 50))
def test_weighted_norm_monotone_in_lambda(seed, l1, l2):
    rng = np.random.default_rng(seed)
    p = PiecewisePair(1.0, rng.normal(size=(6, 2, 2)), rng.normal(size=(6, 2)))
    q = PiecewisePair(1.0, rng.normal(size=(6, 2, 2)), rng.normal(size=(6, 2)))
    lo, hi = sorted((l1, l2))
    assert weighted_norm(p, q, hi) <= weighted_norm(p, q, lo)
    assert weighted_norm(p, q, lo) == pytest.approx(weighted_norm(q, p, lo))


def test_weighted_norm_grid_mismatch():
    with pytest.raises(ValueError):
        weighted_norm(_pair([1, 2], [1, 2]), _pair([1, 2, 3], [1, 2, 3]))


# --- initial pair ------------------------------------------------------------------------

def test_initial_pair_ball_check():
    prob = gaussian_problem()
    assert initial_pair(prob, PicardConfig(n_steps=4)).sup_norm() == 0.0
    with pytest.raises(ConfigurationError):
        initial_pair(prob, PicardConfig(n_steps=4, gamma0=([[5.0]], [0.0])))
    with pytest.raises(ConfigurationError):
        initial_pair(prob, PicardConfig(n_steps=4, gamma0=(np.eye(2), [0.0, 0.0])))


# --- iterate -------------------------------------------------------------------------------

def test_zero_drift_fixed_point_after_one_sweep():
    drift = ConstantATrigB(np.zeros((2, 2)), [1.0, 1.0], [0.0, 0.0])
    prob = Problem(LevyTriplet(np.eye(2)), stable_law(2), drift, 1.0)
    res = iterate(prob, PicardConfig(n_steps=8, max_iters=3))
    assert res.increments[0] == 0.0
    for pair in res.iterates:
        assert pair.sup_norm() == 0.0


def test_gaussian_increment_ratios():
    res = iterate(gaussian_problem(), PicardConfig(n_steps=16, max_iters=4))
    inc = res.increments
    assert len(inc) == 4 and res.sweeps == 4
    for m in range(1, len(inc) - 1):
        assert inc[m + 1] / inc[m] <= 0.75


def test_gaussian_n16_error_magnitude():
    case = benchmark.gaussian_1d()
    run = benchmark.run_case(case, 16, 4)
    # first-order rate: E(16) is a few percent of the O(1) coefficient scale
    assert 1e-4 < run.max_error < 5e-2


def test_iterates_stay_in_ball():
    prob = benchmark.kou_1d().problem()
    res = iterate(prob, PicardConfig(n_steps=32, max_iters=6))
    for pair in res.iterates:
        assert pair.sup_norm() <= prob.ball_radius + 1e-12


def test_result_bookkeeping():
    res = iterate(gaussian_problem(), PicardConfig(n_steps=8))
    assert len(res.iterates) == res.sweeps + 1 == 4
    assert len(res.wall_times) == len(res.node_values) == 3
    a, b = res.final_nodes()
    assert a.shape == (9, 1, 1) and b.shape == (9, 1)
    assert np.array_equal(b[1:], res.final.beta_vals)


def test_stop_tol_stops_early():
    res = iterate(gaussian_problem(), PicardConfig(n_steps=8, max_iters=40, stop_tol=1e-10))
    assert res.stopped_early and res.sweeps < 40
    assert res.increments[-1] <= 1e-10


def test_invalid_problem_rejected():
    drift = ConstantATrigB([[1.0]], [1.0], [1.0])
    prob = Problem(LevyTriplet([[0.0]]), laplace_law(), drift, 1.0)
    with pytest.raises(ConfigurationError):
        iterate(prob, PicardConfig(n_steps=4))


def test_psi_failure_carries_partial_result():
    drift = ConstantATrigB([[400.0]], [1.0], [1.0])
    prob = Problem(LevyTriplet([[1.0]]), laplace_law(), drift, 10.0)
    with pytest.raises(PicardError) as info, np.errstate(all="ignore"):
        iterate(prob, PicardConfig(n_steps=4, max_iters=3))
    assert info.value.result.sweeps >= 1


def test_exception_in_psi_is_wrapped():
    # an undamped spectral drift on the damped path fails inside Psi and surfaces as PicardError
    drift = trig_spectral(ConstantATrigB([[0.5]], [1.0], [1.0]))
    prob = Problem(LevyTriplet([[1.0]]), laplace_law(), drift, 1.0)
    with pytest.raises(PicardError) as info:
        iterate(prob, PicardConfig(n_steps=4, psi_path="damped"))
    assert info.value.result.sweeps == 0


def test_fourier_iteration_matches_trig():
    base = ConstantATrigB([[0.25]], [1.0], [1.0])
    trig = Problem(LevyTriplet([[1.0]]), laplace_law(), base, 1.0)
    four = Problem(LevyTriplet([[1.0]]), laplace_law(), trig_spectral(base), 1.0)
    r1 = iterate(trig, PicardConfig(n_steps=8))
    r2 = iterate(four, PicardConfig(n_steps=8, psi_path="fourier"))
    assert np.max(np.abs(r1.final.beta_vals - r2.final.beta_vals)) < 1e-12
