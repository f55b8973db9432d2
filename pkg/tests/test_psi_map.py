from __future__ import annotations

import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.stats import norm

from mkv_picard import benchmark
from mkv_picard.linear_flow import LinearFlow, PiecewisePair
from mkv_picard.model import (
    ConfigurationError,
    ConstantATrigB,
    DoubleExponentialJumps,
    LevyTriplet,
    Problem,
    SpectralPair,
    gaussian_law,
    laplace_law,
    point_mass_law,
    stable_law,
    trig_spectral,
)
from mkv_picard.psi_map import (
    DampingSpec,
    QuadratureSpec,
    QuadratureWarning,
    choose_radius,
    psi_damped,
    psi_fourier,
    psi_on_grid,
    psi_trig,
)

KOU = DoubleExponentialJumps(0.8, 0.5, 0.6, 0.35)


def gaussian_case_problem(drift=None, law=None, jump=None, sigma=0.8, A=1.5):
    drift = ConstantATrigB([[A]], [1.0], [1.0]) if drift is None else drift
    return Problem(LevyTriplet([[sigma]], jump), laplace_law() if law is None else law, drift, 1.0)


def random_pair(seed, d=1, n=8, scale=0.5):
    rng = np.random.default_rng(seed)
    return PiecewisePair(1.0, scale * rng.normal(size=(n, d, d)), scale * rng.normal(size=(n, d)))


def gaussian_moments(problem, pair, t, law_mean, law_var):
    fl = LinearFlow(pair, problem.triplet)
    phi = fl.phi0(t)[0, 0]
    return phi * law_mean + fl.mean(t)[0], phi**2 * law_var + fl.cov(t)[0, 0]


# --- trigonometric path ---------------------------------------------------------

def test_trig_at_time_zero_laplace():
    prob = gaussian_case_problem()
    pair = PiecewisePair.constant(1.0, 4, [[1.5]], [0.3])
    A, b = psi_trig(prob, pair, 0.0)
    assert A[0, 0] == 1.5
    assert b[0] == pytest.approx(0.5, abs=1e-15)


def test_trig_deterministic_origin():
    drift = ConstantATrigB(np.zeros((2, 2)), [1.0, -2.0], [0.3, 0.4])
    prob = Problem(LevyTriplet(np.zeros((2, 2))), point_mass_law([0.0, 0.0]), drift, 1.0)
    pair = PiecewisePair.constant(1.0, 3, np.zeros((2, 2)), np.zeros(2))
    _, b = psi_trig(prob, pair, 0.7)
    assert np.allclose(b, [0.3, 0.4], atol=1e-15)


def test_trig_matches_benchmark_at_fixed_point():
    case = benchmark.gaussian_1d()
    n = 4096
    mid = (np.arange(n) + 0.5) / n
    pair = PiecewisePair(1.0, np.full((n, 1, 1), case.a), benchmark.benchmark_beta(case, mid)[:, None])
    _, b = psi_trig(case.problem(), pair, 1.0)
    assert abs(b[0] - benchmark.benchmark_beta(case, [1.0])[0]) < 1e-6


def test_trig_rejects_spectral_drift():
    prob = gaussian_case_problem(drift=trig_spectral(ConstantATrigB([[1.0]], [1.0], [1.0])))
    with pytest.raises(TypeError):
        psi_trig(prob, PiecewisePair.constant(1.0, 2, [[0.0]], [0.0]), 0.5)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 1), st.integers(1, 3))
def test_trig_bounded(seed, t, d):
    rng = np.random.default_rng(seed)
    drift = ConstantATrigB(rng.normal(size=(d, d)), rng.normal(size=d), rng.normal(size=d))
    prob = Problem(LevyTriplet(rng.normal(size=(d, d))), gaussian_law(np.zeros(d), np.eye(d)), drift, 1.0)
    A, b = psi_trig(prob, random_pair(seed, d), t)
    assert np.linalg.norm(A, 2) <= drift.a_sup * (1 + 1e-12)
    assert np.linalg.norm(b) <= drift.b_sup * (1 + 1e-12)


def test_trig_nodes_match_pointwise():
    prob = gaussian_case_problem(jump=KOU)
    pair = random_pair(3)
    a, b = psi_on_grid(prob, pair, "trig")
    for k, t in enumerate(pair.grid):
        _, bk = psi_trig(prob, pair, t)
        assert b[k, 0] == pytest.approx(bk[0], abs=1e-14)
    assert np.all(a == 1.5)


# --- plain Fourier path -----------------------------------------------------------

def test_fourier_atoms_equal_trig():
    base = ConstantATrigB([[1.5]], [1.0], [1.0])
    for jump in (None, KOU):
        pair = random_pair(4)
        trig = gaussian_case_problem(drift=base, jump=jump)
        four = gaussian_case_problem(drift=trig_spectral(base), jump=jump)
        for t in (0.1, 0.5, 1.0):
            a1, b1 = psi_trig(trig, pair, t)
            a2, b2 = psi_fourier(four, pair, t)
            assert abs(a1[0, 0] - a2[0, 0]) < 1e-10 and abs(b1[0] - b2[0]) < 1e-10


@pytest.mark.parametrize("t", [0.2, 0.6, 1.0])
def test_fourier_gaussian_hat_closed_form(t):
    # a_hat = e^{-eta^2/2} M  <=>  a(x) = M e^{-x^2/2} / sqrt(2 pi); E a(X) for X ~ N(mu, v) in closed form
    M = 0.8
    drift = SpectralPair(1, a_hat=lambda eta: M * np.exp(-0.5 * eta[..., 0] ** 2)[..., None, None],
                         a_sup=M / np.sqrt(2 * np.pi), b_sup=0.0)
    prob = Problem(LevyTriplet([[0.7]]), gaussian_law([0.4], [[0.3]]), drift, 1.0)
    pair = random_pair(5)
    mu, var = gaussian_moments(prob, pair, t, 0.4, 0.3)
    expected = M * np.exp(-0.5 * mu**2 / (1 + var)) / np.sqrt(2 * np.pi * (1 + var))
    A, b = psi_fourier(prob, pair, t)
    assert abs(A[0, 0] - expected) < 1e-6
    assert np.all(b == 0)


def test_fourier_gaussian_hat_2d():
    M = np.array([[1.0, 0.2], [0.0, 0.5]])
    drift = SpectralPair(2, a_hat=lambda eta: np.exp(-0.5 * (eta**2).sum(-1))[..., None, None] * M,
                         a_sup=np.linalg.norm(M, 2) / (2 * np.pi), b_sup=0.0)
    sigma = np.array([[0.8, 0.1], [0.2, 0.6]])
    prob = Problem(LevyTriplet(sigma), point_mass_law([0.3, -0.2]), drift, 1.0)
    pair = random_pair(6, d=2, n=4)
    t = 0.8
    fl = LinearFlow(pair, prob.triplet)
    mu = fl.phi0(t) @ np.array([0.3, -0.2]) + fl.mean(t)
    S = np.eye(2) + fl.cov(t)
    dens = np.exp(-0.5 * mu @ np.linalg.solve(S, mu)) / (2 * np.pi * np.sqrt(np.linalg.det(S)))
    A, _ = psi_fourier(prob, pair, t)
    assert np.max(np.abs(A - M * dens)) < 1e-6


def test_fourier_zero_b_hat():
    drift = SpectralPair(1, a_hat=lambda e: np.exp(-e[..., 0] ** 2)[..., None, None], a_sup=1.0, b_sup=0.0)
    prob = Problem(LevyTriplet([[1.0]]), laplace_law(), drift, 1.0)
    _, b = psi_fourier(prob, random_pair(0), 0.5)
    assert np.array_equal(b, np.zeros(1))


def test_fourier_rejects_time_zero_and_budget():
    prob = gaussian_case_problem(drift=trig_spectral(ConstantATrigB([[1.0]], [1.0], [1.0])))
    pair = random_pair(0)
    with pytest.raises(ValueError):
        psi_fourier(prob, pair, 0.0)
    drift = SpectralPair(2, a_hat=lambda e: np.ones(e.shape[:-1] + (2, 2)), a_sup=1.0, b_sup=0.0)
    prob2 = Problem(LevyTriplet(np.eye(2)), point_mass_law([0.0, 0.0]), drift, 1.0)
    with pytest.raises(ConfigurationError):
        psi_fourier(prob2, random_pair(0, d=2), 0.5, QuadratureSpec(nodes_per_axis=5000, budget=1 << 20))


def test_fourier_dimension_cap():
    drift = SpectralPair(4, a_sup=1.0, b_sup=1.0)
    prob = Problem(LevyTriplet(np.eye(4)), point_mass_law(np.zeros(4)), drift, 1.0)
    with pytest.raises(ConfigurationError):
        psi_fourier(prob, random_pair(0, d=4, n=2), 0.5)


def test_fourier_flags_imaginary_residue():
    # an odd real transform corresponds to a purely imaginary coefficient
    drift = SpectralPair(1, a_hat=lambda e: (e[..., 0] * np.exp(-e[..., 0] ** 2))[..., None, None],
                         a_sup=1.0, b_sup=0.0)
    prob = Problem(LevyTriplet([[1.0]]), gaussian_law([1.0], [[0.2]]), drift, 1.0)
    with pytest.warns(QuadratureWarning):
        psi_fourier(prob, random_pair(0), 0.5)


# --- damped path ---------------------------------------------------------------------

def _damped_gaussian_problem(law_mean=0.5, law_var=0.25, jump=None):
    # a_bar(x) = a(x)/(1+x^2) with transform e^{-eta^2/2}: a_bar(x) = phi(x), the standard normal density
    drift = SpectralPair(1, damped=True,
                         damped_a_hat=lambda e: np.exp(-0.5 * e[..., 0] ** 2)[..., None, None],
                         a_sup=1.0, b_sup=0.0)
    return Problem(LevyTriplet([[0.8]], jump), gaussian_law([law_mean], [[law_var]]), drift, 1.0)


@pytest.mark.parametrize("t", [0.25, 0.5, 1.0])
def test_damped_matches_density_quadrature(t):
    prob = _damped_gaussian_problem()
    pair = random_pair(7)
    mu, var = gaussian_moments(prob, pair, t, 0.5, 0.25)
    ref = quad(lambda x: norm.pdf(x) * (1 + x * x) * norm.pdf(x, mu, np.sqrt(var)), -np.inf, np.inf,
               epsabs=1e-14, epsrel=1e-13)[0]
    A, _ = psi_damped(prob, pair, t)
    assert abs(A[0, 0] - ref) < 1e-6


def test_damped_constant_coefficient_reproduced():
    drift = trig_spectral(ConstantATrigB([[-0.7]], [1.0], [0.0]), damped=True)
    prob = Problem(LevyTriplet([[0.8]]), gaussian_law([0.2], [[0.5]]), drift, 1.0)
    A, b = psi_damped(prob, random_pair(8), 0.6)
    assert A[0, 0] == pytest.approx(-0.7, abs=1e-10)
    assert abs(b[0]) < 1e-12


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_damped_finite_difference_agrees_with_analytic(seed):
    rng = np.random.default_rng(seed)
    jump = KOU if seed == 2 else None
    drift = trig_spectral(ConstantATrigB([[rng.normal()]], [rng.uniform(0.5, 2)], [rng.normal()]), damped=True)
    prob = Problem(LevyTriplet([[rng.uniform(0.5, 1.2)]], jump), laplace_law(), drift, 1.0)
    pair = random_pair(seed)
    t = rng.uniform(0.3, 1.0)
    a1, b1 = psi_damped(prob, pair, t, damp=DampingSpec(2, "analytic_leibniz"))
    a2, b2 = psi_damped(prob, pair, t, damp=DampingSpec(2, "finite_difference"))
    assert abs(a1[0, 0] - a2[0, 0]) < 1e-4 and abs(b1[0] - b2[0]) < 1e-4


def test_damped_requires_derivative_data():
    drift = trig_spectral(ConstantATrigB([[1.0]], [1.0], [1.0]), damped=True)
    prob = Problem(LevyTriplet([[1.0]]), stable_law(1), drift, 1.0)
    with pytest.raises(ConfigurationError):
        psi_damped(prob, random_pair(0), 0.5)


def test_damped_rejects_wrong_order_and_flag():
    drift = trig_spectral(ConstantATrigB([[1.0]], [1.0], [1.0]), damped=True)
    prob = Problem(LevyTriplet([[1.0]]), laplace_law(), drift, 1.0)
    with pytest.raises(ConfigurationError):
        psi_damped(prob, random_pair(0), 0.5, damp=DampingSpec(4))
    with pytest.raises(ConfigurationError):
        psi_fourier(prob, random_pair(0), 0.5)


def test_damping_spec_validation():
    with pytest.raises(ValueError):
        DampingSpec(3)
    with pytest.raises(ValueError):
        DampingSpec(2, mode="spline")
    assert DampingSpec.for_dim(5).q == 6


# --- cross-path agreement -----------------------------------------------------------------

@pytest.mark.parametrize("law_name", ["laplace", "gaussian"])
@pytest.mark.parametrize("jump", [None, KOU], ids=["nojump", "kou"])
def test_cross_path_trig_fourier_damped(law_name, jump):
    law = laplace_law() if law_name == "laplace" else gaussian_law([0.5], [[0.25]])
    base = ConstantATrigB([[0.4]], [1.0], [1.0])
    pair = random_pair(9, scale=0.3)
    trig = Problem(LevyTriplet([[0.9]], jump), law, base, 1.0)
    four = Problem(LevyTriplet([[0.9]], jump), law, trig_spectral(base), 1.0)
    damp = Problem(LevyTriplet([[0.9]], jump), law, trig_spectral(base, damped=True), 1.0)
    _, b_t = psi_on_grid(trig, pair, "trig")
    a_f, b_f = psi_on_grid(four, pair, "fourier")
    a_d, b_d = psi_on_grid(damp, pair, "damped")
    assert np.all(np.isnan(b_f[0])) and np.all(np.isnan(a_d[0]))
    assert np.max(np.abs(b_t[1:] - b_f[1:])) <= 1e-5
    assert np.max(np.abs(b_t[1:] - b_d[1:])) <= 1e-5
    assert np.max(np.abs(a_d[1:] - 0.4)) <= 1e-5


def test_cross_path_trapezoid_is_coarser_but_consistent():
    base = ConstantATrigB([[0.4]], [1.0], [1.0])
    pair = random_pair(10, scale=0.3)
    trig = Problem(LevyTriplet([[0.9]]), laplace_law(), base, 1.0)
    damp = Problem(LevyTriplet([[0.9]]), laplace_law(), trig_spectral(base, damped=True), 1.0)
    _, b_t = psi_on_grid(trig, pair, "trig")
    _, b_d = psi_on_grid(damp, pair, "damped", QuadratureSpec(rule="trapezoid", nodes_per_axis=8193))
    assert np.max(np.abs(b_t[1:] - b_d[1:])) <= 1e-5


def test_psi_on_grid_rejects_unknown_path():
    with pytest.raises(ValueError):
        psi_on_grid(gaussian_case_problem(), random_pair(0), "spline")


def test_psi_on_grid_without_origin():
    prob = gaussian_case_problem()
    pair = random_pair(0)
    a, b = psi_on_grid(prob, pair, include_origin=False)
    assert b.shape == (pair.n_steps, 1)


# --- radius ------------------------------------------------------------------------------------

def test_choose_radius_reference_value():
    prob = Problem(LevyTriplet([[1.0]]), laplace_law(), ConstantATrigB([[0.0]], [1.0], [1.0]), 1.0)
    pair = PiecewisePair.constant(1.0, 4, [[0.0]], [0.0])
    R = choose_radius(prob, pair, 1.0, 1e-12)
    assert R == pytest.approx(np.sqrt(2 * np.log(1e12)), rel=1e-14)
    assert R == pytest.approx(7.43, abs=5e-3)


@settings(max_examples=50)
@given(st.floats(1e-3, 1.0), st.floats(1e-3, 1.0), st.floats(1e-15, 1e-2))
def test_choose_radius_monotone(t1, t2, tol):
    prob = gaussian_case_problem()
    pair = random_pair(0)
    lo, hi = sorted((t1, t2))
    assert choose_radius(prob, pair, hi, tol) <= choose_radius(prob, pair, lo, tol)
    assert choose_radius(prob, pair, lo, min(2 * tol, 0.5)) < choose_radius(prob, pair, lo, tol)


def test_choose_radius_errors():
    prob = gaussian_case_problem(sigma=0.0)
    with pytest.raises(ConfigurationError):
        choose_radius(prob, random_pair(0), 0.5)
    with pytest.raises(ValueError):
        choose_radius(gaussian_case_problem(), random_pair(0), 0.0)


def test_quadrature_spec_validation_and_panels():
    with pytest.raises(ValueError):
        QuadratureSpec(rule="simpson")
    with pytest.raises(ValueError):
        QuadratureSpec(radius=-1.0)
    x, w = QuadratureSpec(nodes_per_axis=64).rule_1d(3.0, 1, breakpoints=(0.5, 7.0))
    assert w.sum() == pytest.approx(6.0, rel=1e-14)
    # a kink at a breakpoint is integrated exactly
    assert np.sum(w * np.abs(x - 0.5)) == pytest.approx((3.5**2 + 2.5**2) / 2, rel=1e-13)
    xt, wt = QuadratureSpec(nodes_per_axis=5, rule="trapezoid").rule_1d(1.0, 1)
    assert np.allclose(xt, [-1, -0.5, 0, 0.5, 1]) and wt.sum() == pytest.approx(2.0)


# --- time regularity ---------------------------------------------------------------------------

def test_psi_time_lipschitz():
    case = benchmark.gaussian_1d()
    n = 256
    t = np.arange(1, n + 1) / n
    pair = PiecewisePair(1.0, np.full((n, 1, 1), case.a), benchmark.benchmark_beta(case, t)[:, None])
    _, b = psi_on_grid(case.problem(), pair)
    K = np.max(np.abs(np.diff(b[:, 0]))) * n
    _, b_half = psi_on_grid(case.problem(), PiecewisePair(1.0, pair.alpha_vals[::2], pair.beta_vals[1::2]))
    K_half = np.max(np.abs(np.diff(b_half[:, 0]))) * (n // 2)
    assert np.isfinite(K) and K < 5.0
    assert abs(K - K_half) < 0.1 * K


def test_psi_time_lipschitz_any_pair():
    prob = gaussian_case_problem(jump=KOU)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        _, b = psi_on_grid(prob, random_pair(11, n=512))
    assert np.max(np.abs(np.diff(b[:, 0]))) * 512 < 10.0
