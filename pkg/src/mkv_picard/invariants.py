"""Numerical invariant checks shared by the test-suite and the ``invariants`` command.

Each check returns a ``CheckResult`` with the worst observed violation
measure, so failures carry numbers rather than just a flag.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import exp, inf
from typing import Callable

import numpy as np
from scipy.integrate import quad

from . import benchmark
from .linear_flow import LinearFlow, PiecewisePair
from .model import (
    CustomExponent,
    DoubleExponentialJumps,
    LevyTriplet,
    NoJumps,
    gaussian_law,
    laplace_law,
    levy_exponent,
    point_mass_law,
    product_laplace_law,
    spectral_norm,
    stable_law,
)
from .picard import PicardConfig, iterate, weighted_norm
from .psi_map import psi_on_grid

_REL = 1e-12  # roundoff slack on the analytic bounds


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    worst: float
    tol: float
    detail: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.name}: worst={self.worst:.3e} tol={self.tol:.1e} {self.detail}".rstrip()


def _result(name, worst, tol, detail="", le=True) -> CheckResult:
    passed = bool(worst <= tol) if le else bool(worst >= tol)
    return CheckResult(name, passed, float(worst), float(tol), detail)


def builtin_laws() -> dict:
    return {
        "laplace": laplace_law(),
        "product_laplace_3": product_laplace_law(3),
        "stable_2": stable_law(2),
        "gaussian_2": gaussian_law([0.3, -1.0], [[1.0, 0.4], [0.4, 0.5]]),
        "point_mass_2": point_mass_law([0.7, -0.2]),
    }


def check_cf_properties(samples: int = 1000, seed: int = 0, tol: float = 1e-12) -> CheckResult:
    """``cf(0) = 1``, ``|cf| <= 1``, ``cf(-eta) = conj cf(eta)`` for every built-in law."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for law in builtin_laws().values():
        eta = rng.normal(scale=3.0, size=(samples, law.dim))
        v = law(eta)
        worst = max(worst,
                    abs(law(np.zeros(law.dim)) - 1.0),
                    float(np.max(np.abs(v) - 1.0, initial=0.0)),
                    float(np.max(np.abs(law(-eta) - np.conj(v)))))
    return _result("cf normalization/modulus/symmetry", worst, tol)


def check_laplace_cf(tol: float = 1e-10) -> CheckResult:
    law = laplace_law()
    worst = 0.0
    for eta in np.linspace(-10, 10, 41):
        # (1/2) int e^{-|y|} e^{i eta y} dy = int_0^inf e^{-y} cos(eta y) dy
        ref = quad(lambda y: exp(-y), 0, inf, weight="cos", wvar=eta)[0]
        worst = max(worst, abs(law(np.array([eta])) - ref))
    return _result("laplace cf vs quadrature", worst, tol)


def double_exp_quadrature(jump: DoubleExponentialJumps, xi: float) -> complex:
    """``lambda int (e^{i xi y} - 1) chi(dy)`` by adaptive quadrature."""
    lam, p, l1, l2 = jump.intensity, jump.p, jump.lambda1, jump.lambda2
    re = quad(lambda y: p * l1 * exp(-l1 * y), 0, inf, weight="cos", wvar=xi)[0] \
        + quad(lambda y: (1 - p) * l2 * exp(-l2 * y), 0, inf, weight="cos", wvar=xi)[0]
    im = quad(lambda y: p * l1 * exp(-l1 * y), 0, inf, weight="sin", wvar=xi)[0] \
        - quad(lambda y: (1 - p) * l2 * exp(-l2 * y), 0, inf, weight="sin", wvar=xi)[0]
    return lam * (re - 1.0 + 1j * im)


def check_levy_exponent(tol: float = 1e-8) -> CheckResult:
    jump = DoubleExponentialJumps(1.0, 2.0, 3.0, 0.5)
    trip = LevyTriplet([[1.0]], jump)
    worst = 0.0
    for xi in np.linspace(-20, 20, 81):
        worst = max(worst, abs(levy_exponent(trip, [xi])[()] - double_exp_quadrature(jump, xi)))
    for spec in (NoJumps(), jump, CustomExponent(lambda x: -np.sum(x**2, axis=-1) / 2, (0.0, 0.0))):
        worst = max(worst, abs(spec.exponent(np.zeros((1, 1)))[0]))
    return _result("levy exponent vs quadrature, f(0)=0", worst, tol)


def random_pair(rng, d: int, n: int, horizon: float = 1.0, scale: float = 1.0) -> PiecewisePair:
    return PiecewisePair(horizon, scale * rng.normal(size=(n, d, d)), scale * rng.normal(size=(n, d)))


def check_flow_composition(instances: int = 50, seed: int = 1, tol: float = 1e-10) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        d = int(rng.integers(1, 4))
        pair = random_pair(rng, d, int(rng.integers(1, 9)), scale=0.7)
        flow = LinearFlow(pair, LevyTriplet(np.eye(d)))
        s, u, t = np.sort(rng.uniform(0, 1, 3))
        lhs = flow.phi(s, t)
        worst = max(worst, float(np.max(np.abs(lhs - flow.phi(u, t) @ flow.phi(s, u)))),
                    float(np.max(np.abs(flow.phi(s, s) - np.eye(d)))))
    return _result("flow composition", worst, tol)


def _random_triplet(rng, d: int, jumps: bool) -> LevyTriplet:
    sigma = rng.normal(size=(d, d)) + 0.5 * np.eye(d)
    if jumps and d == 1:
        jump = DoubleExponentialJumps(rng.uniform(0.1, 2.0), rng.uniform(0.3, 3.0), rng.uniform(0.3, 3.0),
                                      rng.uniform(), compensated=True)
        return LevyTriplet(sigma, jump)
    return LevyTriplet(sigma)


def _jump_bound_terms(jump, delta: float) -> tuple[float, float]:
    if isinstance(jump, DoubleExponentialJumps):
        return jump.truncated_moment(2, 0.0, delta), jump.truncated_moment(0, delta, inf)
    return 0.0, 0.0


def check_a_priori_bounds(instances: int = 100, seed: int = 2, delta: float = 0.5) -> CheckResult:
    """Flow, covariance, mean, jump-exponent and quadratic-form bounds; reports the largest ratio to the bound."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(instances):
        d = 1 if k % 2 == 0 else int(rng.integers(2, 4))
        pair = random_pair(rng, d, int(rng.integers(1, 7)), horizon=float(rng.uniform(0.5, 2.0)), scale=0.6)
        trip = _random_triplet(rng, d, jumps=(d == 1))
        flow = LinearFlow(pair, trip)
        T, na, nb = pair.horizon, pair.alpha_sup, pair.beta_sup
        theta = spectral_norm(trip.theta)
        s, t = np.sort(rng.uniform(0, T, 2))
        eta = rng.normal(scale=2.0, size=d)
        P = flow.phi(s, t)
        small, large = _jump_bound_terms(trip.jump, delta)
        e = np.linalg.norm(eta)
        ratios = [
            spectral_norm(P) / exp(T * na),
            spectral_norm(np.linalg.inv(P)) / exp(T * na),
            spectral_norm(flow.cov(t)) / max(t * theta * exp(2 * T * na), 1e-300),
            np.linalg.norm(flow.mean(t)) / max(t * exp(T * na) * nb, 1e-300),
            trip.lambda_min * exp(-2 * T * na) * t * e**2 / max(eta @ flow.cov(t) @ eta, 1e-300),
        ]
        if not isinstance(trip.jump, NoJumps):
            bound = 2 * t * exp(2 * T * na) * (e**2 * small + (e + 1) * large)
            ratios.append(abs(flow.jump_exponent(t, eta)) / max(bound, 1e-300))
        worst = max(worst, max(ratios))
    return _result("a priori bounds (max ratio to bound)", worst, 1.0 + _REL)


def check_time_increment_bounds(instances: int = 100, seed: int = 3) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(instances):
        d = 1 if k % 2 == 0 else int(rng.integers(2, 4))
        pair = random_pair(rng, d, int(rng.integers(1, 7)), horizon=float(rng.uniform(0.5, 2.0)), scale=0.6)
        trip = _random_triplet(rng, d, jumps=(d == 1))
        flow = LinearFlow(pair, trip)
        T, na, nb = pair.horizon, pair.alpha_sup, pair.beta_sup
        theta = spectral_norm(trip.theta)
        s, t, t2 = np.sort(rng.uniform(0, T, 3))
        dt = max(t2 - t, 1e-300)
        eta = rng.normal(scale=2.0, size=d)
        e = np.linalg.norm(eta)
        ratios = [
            spectral_norm(flow.phi(s, t2) - flow.phi(s, t)) / max(dt * na * exp(T * na), 1e-300),
            spectral_norm(flow.cov(t2) - flow.cov(t)) / (dt * theta * exp(4 * T * na)),
            np.linalg.norm(flow.mean(t2) - flow.mean(t)) / max(dt * nb * exp(2 * T * na), 1e-300),
        ]
        if not isinstance(trip.jump, NoJumps):
            nbar = trip.jump.moments(2)[0]
            bound = 2 * dt * exp(3 * T * na) * (e**2 + e + 1) * nbar
            ratios.append(abs(flow.jump_exponent(t2, eta) - flow.jump_exponent(t, eta)) / bound)
        worst = max(worst, max(ratios))
    return _result("time-increment bounds (max ratio to bound)", worst, 1.0 + _REL)


def check_char_fn_normalization(instances: int = 30, seed: int = 4, tol: float = 1e-12) -> CheckResult:
    rng = np.random.default_rng(seed)
    laws = builtin_laws()
    worst = 0.0
    for k in range(instances):
        law = list(laws.values())[k % len(laws)]
        d = law.dim
        pair = random_pair(rng, d, 4, scale=0.5)
        flow = LinearFlow(pair, _random_triplet(rng, d, jumps=(d == 1)))
        t = float(rng.uniform(0, 1))
        eta = rng.normal(scale=2.0, size=(200, d))
        v = flow.char_fn(t, eta, law)
        worst = max(worst, abs(flow.char_fn(t, np.zeros(d), law) - 1.0),
                    float(np.max(np.abs(v) - 1.0, initial=0.0)),
                    float(np.max(np.abs(flow.char_fn(t, -eta, law) - np.conj(v)))))
    return _result("char_fn normalization/modulus/symmetry", worst, tol)


def check_ball_preservation(n: int = 32, tol: float = 1e-12) -> CheckResult:
    worst = -np.inf
    for case in (benchmark.gaussian_1d(), benchmark.kou_1d(), benchmark.multidim(2), benchmark.stable_init(2)):
        problem = case.problem()
        res = iterate(problem, PicardConfig(n_steps=n))
        radius = problem.ball_radius
        worst = max(worst, max(p.sup_norm() - radius for p in res.iterates))
    return _result("Picard iterates stay in the ball (max excess)", worst, tol)


def contraction_ratios(n: int = 32, lam: float = 50.0, pairs: int = 20, seed: int = 5) -> np.ndarray:
    """``|Psi(g) - Psi(g')|_lam / |g - g'|_lam`` for random step pairs in the ball of the Gaussian case."""
    case = benchmark.gaussian_1d()
    problem = case.problem()
    radius = problem.ball_radius
    rng = np.random.default_rng(seed)

    def draw():
        return PiecewisePair(case.horizon, rng.uniform(-radius, radius, (n, 1, 1)), rng.uniform(-radius, radius, (n, 1)))

    def psi(pair):
        a, b = psi_on_grid(problem, pair, "trig")
        return PiecewisePair(case.horizon, a[1:], b[1:])

    out = []
    for _ in range(pairs):
        g, h = draw(), draw()
        out.append(weighted_norm(psi(g), psi(h), lam) / weighted_norm(g, h, lam))
    return np.array(out)


def check_contraction(lam: float = 50.0) -> CheckResult:
    ratios = contraction_ratios(lam=lam)
    return _result(f"contraction ratio at lambda={lam:g}", float(ratios.max()), 1.0 - 1e-15)


def check_rk4_order(min_order: float = 3.9) -> CheckResult:
    orders = [benchmark.rk4_observed_order(c) for c in
              (benchmark.gaussian_1d(), benchmark.kou_1d(), benchmark.multidim(2), benchmark.stable_init(2))]
    return _result("benchmark RK4 observed order (min)", min(orders), min_order, le=False)


ALL_CHECKS: tuple[Callable[[], CheckResult], ...] = (
    check_cf_properties,
    check_laplace_cf,
    check_levy_exponent,
    check_flow_composition,
    check_a_priori_bounds,
    check_time_increment_bounds,
    check_char_fn_normalization,
    check_ball_preservation,
    check_contraction,
    check_rk4_order,
)


def run_all() -> list[CheckResult]:
    return [check() for check in ALL_CHECKS]
