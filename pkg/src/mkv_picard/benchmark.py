"""Reference solutions for the four built-in experiments and convergence-rate reports.

In every case the fixed point has ``alpha = a I`` and ``beta = beta~_t 1`` where
the common mean ``m~`` of the components solves the scalar ODE
``m~' = a m~ + beta~(t, m~)``. The ODE is integrated with classical RK4 on a
fine grid; the Picard error is measured against ``beta~`` along that solution.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .model import (
    ConstantATrigB,
    DoubleExponentialJumps,
    LevyTriplet,
    Problem,
    product_laplace_law,
    stable_law,
)
from .parallel import pmap
from .picard import PicardConfig, default_iterations, iterate

ODE_STEPS = 1 << 16
DEFAULT_N = tuple(2**k for k in range(4, 9))
KINDS = ("gaussian_1d", "kou_1d", "multidim", "stable_init")
SIGMA_SEED = 20240611


def random_sigma(d: int, seed: int = SIGMA_SEED) -> np.ndarray:
    """Seeded Gaussian matrix scaled by ``1/sqrt(d)`` so that ``theta`` has O(1) entries."""
    return np.random.default_rng(seed + d).standard_normal((d, d)) / math.sqrt(d)


def _freeze(matrix) -> tuple:
    return tuple(tuple(float(x) for x in row) for row in np.atleast_2d(matrix))


@dataclass(frozen=True)
class BenchmarkCase:
    kind: str
    dim: int
    a: float
    sigma: tuple
    horizon: float = 1.0
    jumps: Optional[tuple] = None  # (intensity, lambda1, lambda2, p)
    ode_steps: int = ODE_STEPS

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown benchmark kind {self.kind!r}")
        object.__setattr__(self, "sigma", _freeze(self.sigma))
        if np.asarray(self.sigma).shape[0] != self.dim:
            raise ValueError("sigma must have dim rows")
        if self.kind in ("gaussian_1d", "kou_1d") and self.dim != 1:
            raise ValueError(f"{self.kind} is one-dimensional")
        if (self.kind == "kou_1d") != (self.jumps is not None):
            raise ValueError("jump parameters go with kou_1d only")

    @property
    def case_id(self) -> str:
        return self.kind if self.kind in ("gaussian_1d", "kou_1d") else f"{self.kind}_{self.dim}"

    @property
    def sigma_matrix(self) -> np.ndarray:
        return np.array(self.sigma)

    @property
    def theta(self) -> np.ndarray:
        s = self.sigma_matrix
        return s @ s.T

    @property
    def one_theta_one(self) -> float:
        return float(self.theta.sum())

    def jump_spec(self):
        if self.jumps is None:
            return None
        return DoubleExponentialJumps(*self.jumps)

    def problem(self) -> Problem:
        d = self.dim
        triplet = LevyTriplet(self.sigma_matrix, self.jump_spec())
        law = stable_law(d, shift=1.0) if self.kind == "stable_init" else product_laplace_law(d)
        drift = ConstantATrigB(self.a * np.eye(d), np.ones(d), np.ones(d))
        return Problem(triplet, law, drift, self.horizon)

    def with_overrides(self, **kw) -> "BenchmarkCase":
        fields = dict(kind=self.kind, dim=self.dim, a=self.a, sigma=self.sigma, horizon=self.horizon,
                      jumps=self.jumps, ode_steps=self.ode_steps)
        fields.update(kw)
        return BenchmarkCase(**fields)


def gaussian_1d(a: float = 1.5, sigma: float = 0.8, horizon: float = 1.0) -> BenchmarkCase:
    return BenchmarkCase("gaussian_1d", 1, a, [[sigma]], horizon)


def kou_1d(a: float = 0.25, sigma: float = 1.0, horizon: float = 1.0, intensity: float = 0.8,
           lambda1: float = 0.5, lambda2: float = 0.6, p: float = 0.35) -> BenchmarkCase:
    return BenchmarkCase("kou_1d", 1, a, [[sigma]], horizon, (intensity, lambda1, lambda2, p))


def multidim(d: int = 2, a: float = 0.25, sigma=None, horizon: float = 1.0) -> BenchmarkCase:
    sigma = random_sigma(d) if sigma is None else sigma
    return BenchmarkCase("multidim", d, a, sigma, horizon)


def stable_init(d: int = 2, a: float = 0.25, sigma=None, horizon: float = 1.0) -> BenchmarkCase:
    sigma = random_sigma(d) if sigma is None else sigma
    return BenchmarkCase("stable_init", d, a, sigma, horizon)


def case_from_id(case_id: str) -> BenchmarkCase:
    """``gaussian_1d``, ``kou_1d``, ``multidim_<d>``, ``stable_init_<d>`` (bare names use d=2)."""
    if case_id == "gaussian_1d":
        return gaussian_1d()
    if case_id == "kou_1d":
        return kou_1d()
    for kind, builder in (("multidim", multidim), ("stable_init", stable_init)):
        if case_id == kind:
            return builder(2)
        if case_id.startswith(kind + "_"):
            suffix = case_id[len(kind) + 1:]
            if suffix.isdigit() and int(suffix) >= 1:
                return builder(int(suffix))
    raise ValueError(f"unknown benchmark case {case_id!r}")


# ---------------------------------------------------------------------------
# Semi-explicit benchmark
# ---------------------------------------------------------------------------

def _growth(a: float, t: float) -> float:
    """``(e^{2at} - 1) / (2a)``."""
    return t if a == 0.0 else math.expm1(2.0 * a * t) / (2.0 * a)


def beta_tilde(case: BenchmarkCase, t: float, m: float) -> float:
    """``E[cos(<1, X_t>)]`` at the fixed point, given the component mean ``m``."""
    a, d = case.a, case.dim
    var = case.one_theta_one * _growth(a, t)
    e = math.exp(a * t)
    if case.kind == "stable_init":
        return math.exp(-0.5 * var - d * e) * math.cos(d * (e + m))
    base = math.exp(-0.5 * var) / (1.0 + e * e) ** d
    if case.kind != "kou_1d":
        return base * math.cos(d * m)
    lam, l1, l2, p = case.jumps
    if a == 0.0:
        # limit a -> 0 of the attenuation and phase
        att = math.exp(-lam * t * (p / (1 + l1 * l1) + (1 - p) / (1 + l2 * l2)))
        phase = lam * t * (p * l1 / (1 + l1 * l1) - (1 - p) * l2 / (1 + l2 * l2))
        return base * att * math.cos(m + phase)
    att = ((1 + l1 * l1) / (e * e + l1 * l1)) ** (p * lam / (2 * a)) \
        * ((1 + l2 * l2) / (e * e + l2 * l2)) ** ((1 - p) * lam / (2 * a))
    th1, th1p = math.atan(-1.0 / l1), math.atan(-e / l1)
    th2, th2p = math.atan(1.0 / l2), math.atan(e / l2)
    phase = p * lam / a * (th1 - th1p) + (1 - p) * lam / a * (th2 - th2p)
    return base * att * math.cos(m + phase)


def _rhs(case: BenchmarkCase, t: float, m: float) -> float:
    return case.a * m + beta_tilde(case, t, m)


def rk4_solve(case: BenchmarkCase, steps: int) -> tuple[np.ndarray, np.ndarray]:
    """Classical RK4 for ``m~`` on a uniform grid of ``steps`` intervals: ``(t, m~)``."""
    h = case.horizon / steps
    ms = np.empty(steps + 1)
    m = 0.0
    ms[0] = m
    for k in range(steps):
        t = k * h
        k1 = _rhs(case, t, m)
        k2 = _rhs(case, t + 0.5 * h, m + 0.5 * h * k1)
        k3 = _rhs(case, t + 0.5 * h, m + 0.5 * h * k2)
        k4 = _rhs(case, t + h, m + h * k3)
        m = m + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        ms[k + 1] = m
    return case.horizon * np.arange(steps + 1) / steps, ms


@lru_cache(maxsize=32)
def _reference(case: BenchmarkCase) -> CubicHermiteSpline:
    t, m = rk4_solve(case, case.ode_steps)
    dm = np.array([_rhs(case, ti, mi) for ti, mi in zip(t, m)])
    return CubicHermiteSpline(t, m, dm)


def ode_mean(case: BenchmarkCase, times) -> np.ndarray:
    """``m~_t`` from the fine RK4 solution (cubic Hermite between grid points)."""
    times = np.asarray(times, dtype=float)
    if np.any(times < 0) or np.any(times > case.horizon * (1 + 1e-12)):
        raise ValueError("times outside [0, T]")
    return _reference(case)(np.clip(times, 0.0, case.horizon))


def benchmark_beta(case: BenchmarkCase, times) -> np.ndarray:
    times = np.atleast_1d(np.asarray(times, dtype=float))
    m = ode_mean(case, times)
    return np.array([beta_tilde(case, t, mi) for t, mi in zip(times, m)])


def rk4_observed_order(case: BenchmarkCase, steps: Sequence[int] = (32, 64, 128)) -> float:
    """``log2`` of the successive-difference ratio of ``m~_T`` over three resolutions."""
    coarse, mid, fine = (rk4_solve(case, s)[1][-1] for s in steps)
    return math.log2(abs(coarse - mid) / abs(mid - fine))


# ---------------------------------------------------------------------------
# Error reports
# ---------------------------------------------------------------------------

def fit_slope(n_values, errors) -> tuple[float, float]:
    """Least-squares ``log2 E = s log2 n + c``; returns ``(s, c)``."""
    x = np.log2(np.asarray(n_values, dtype=float))
    y = np.log2(np.asarray(errors, dtype=float))
    s, c = np.polyfit(x, y, 1)
    return float(s), float(c)


@dataclass(frozen=True)
class RunOutcome:
    n: int
    m: int
    max_error: float
    wall_ms: float
    times: np.ndarray = field(repr=False)
    beta_approx: np.ndarray = field(repr=False)
    beta_benchmark: np.ndarray = field(repr=False)
    increments: tuple = ()


@dataclass(frozen=True)
class ExperimentReport:
    case_id: str
    runs: tuple

    @property
    def n_values(self) -> list[int]:
        return [r.n for r in self.runs]

    @property
    def errors(self) -> list[float]:
        return [r.max_error for r in self.runs]

    @property
    def wall_ms(self) -> list[float]:
        return [r.wall_ms for r in self.runs]

    @property
    def slope(self) -> float:
        return fit_slope(self.n_values, self.errors)[0]

    @property
    def intercept(self) -> float:
        return fit_slope(self.n_values, self.errors)[1]

    def running_slopes(self) -> list[Optional[float]]:
        out: list[Optional[float]] = [None]
        for k in range(2, len(self.runs) + 1):
            out.append(fit_slope(self.n_values[:k], self.errors[:k])[0])
        return out

    def to_csv(self, timings: bool = False) -> str:
        """Error table; ``wall_ms`` is left blank unless ``timings`` is set (keeps output reproducible)."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["case_id", "n", "m", "max_error", "slope_running", "wall_ms"])
        for run, s in zip(self.runs, self.running_slopes()):
            writer.writerow([self.case_id, run.n, run.m, repr(run.max_error),
                             "" if s is None else repr(s), f"{run.wall_ms:.3f}" if timings else ""])
        return buf.getvalue()

    def trajectory_csv(self, n: Optional[int] = None) -> str:
        """Per-node ``beta`` against the benchmark, for one ``n`` (all runs when None)."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["case_id", "t", "beta_approx", "beta_benchmark", "abs_err"])
        for run in self.runs:
            if n is not None and run.n != n:
                continue
            for t, x, y in zip(run.times, run.beta_approx, run.beta_benchmark):
                writer.writerow([self.case_id, repr(float(t)), repr(float(x)), repr(float(y)),
                                 repr(float(abs(x - y)))])
        return buf.getvalue()


def run_case(case: BenchmarkCase, n: int, m: Optional[int] = None) -> RunOutcome:
    m = default_iterations(n) if m is None else m
    problem = case.problem()
    start = time.perf_counter()
    result = iterate(problem, PicardConfig(n_steps=n, max_iters=m))
    wall_ms = 1e3 * (time.perf_counter() - start)
    _, b_nodes = result.final_nodes()
    times = case.horizon * np.arange(n + 1) / n
    bench = benchmark_beta(case, times)
    # all components of beta coincide; the sup over components is the scalar error
    approx = b_nodes[:, 0]
    err = float(np.max(np.abs(b_nodes - bench[:, None])))
    return RunOutcome(n, m, err, wall_ms, times, approx, bench, tuple(result.increments))


def error_report(case: BenchmarkCase, n_list: Sequence[int] = DEFAULT_N, m_rule=None,
                 workers: Optional[int] = None) -> ExperimentReport:
    """Run the Picard scheme for each ``n`` (concurrently up to ``MKV_THREADS``) and collect ``E(n)``.

    ``m_rule`` maps n to the number of sweeps; default ``ceil(log2 n)``.
    """
    _reference(case)  # build the shared ODE solution once, before any fan-out
    m_rule = default_iterations if m_rule is None else m_rule
    runs = pmap(lambda n: run_case(case, int(n), m_rule(int(n))), list(n_list), workers)
    return ExperimentReport(case.case_id, tuple(runs))


def self_convergence_report(problem, config_for, n_list: Sequence[int], case_id: str = "custom",
                            ref_factor: int = 4, workers: Optional[int] = None) -> ExperimentReport:
    """``E(n)`` against the same scheme run with ``ref_factor * max(n)`` steps.

    Used when no semi-explicit benchmark exists. ``config_for(n)`` returns the
    ``PicardConfig`` for n steps; the reference is read at each coarse node
    (linear interpolation when the grids do not nest).
    """
    n_list = [int(n) for n in n_list]
    n_ref = ref_factor * max(n_list)

    def solve(n):
        start = time.perf_counter()
        result = iterate(problem, config_for(n))
        return result, 1e3 * (time.perf_counter() - start)

    ref, _ = solve(n_ref)
    _, ref_b = ref.final_nodes()
    ref_t = problem.horizon * np.arange(n_ref + 1) / n_ref

    def one(n):
        result, wall_ms = solve(n)
        _, b = result.final_nodes()
        times = problem.horizon * np.arange(n + 1) / n
        bench = np.stack([np.interp(times, ref_t, ref_b[:, j]) for j in range(b.shape[1])], axis=1)
        # the Fourier paths leave t_0 undefined
        valid = np.all(np.isfinite(b), axis=1)
        err = float(np.max(np.abs(b[valid] - bench[valid])))
        return RunOutcome(n, result.sweeps, err, wall_ms, times, b[:, 0], bench[:, 0], tuple(result.increments))

    return ExperimentReport(case_id, tuple(pmap(one, n_list, workers)))
