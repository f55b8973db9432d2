"""Discretized Picard iteration on the coefficient pair gamma = (alpha, beta)."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from math import ceil, log2
from typing import Callable, Optional, Union

import numpy as np

from .linear_flow import PiecewisePair
from .model import ConfigurationError, Problem, spectral_norm, validate_problem
from .psi_map import PATHS, DampingSpec, QuadratureSpec, psi_on_grid

_BALL_SLACK = 1e-12


def default_iterations(n: int) -> int:
    """``m = ceil(log2 n)``, at least one sweep."""
    return max(1, ceil(log2(n))) if n > 1 else 1


@dataclass(frozen=True)
class PicardConfig:
    n_steps: int
    max_iters: Optional[int] = None  # None: ceil(log2 n)
    gamma0: Optional[tuple] = None  # (A0, b0); None: zeros
    lam: float = 0.0
    psi_path: str = "trig"
    quad: QuadratureSpec = field(default_factory=QuadratureSpec)
    damp: Optional[DampingSpec] = None
    stop_tol: Optional[float] = None

    def __post_init__(self):
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError("n_steps must be a positive integer")
        if self.max_iters is not None and self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if self.psi_path not in PATHS:
            raise ValueError(f"psi_path must be one of {PATHS}")
        if self.stop_tol is not None and not self.stop_tol > 0:
            raise ValueError("stop_tol must be positive")

    @property
    def iterations(self) -> int:
        return self.max_iters if self.max_iters is not None else default_iterations(self.n_steps)


@dataclass
class PicardResult:
    """Iterates ``gamma^{0,n}, gamma^{1,n}, ...`` and per-sweep diagnostics.

    ``node_values[k]`` holds Psi evaluated at ``t_0..t_n`` during sweep
    ``k + 1``; the pair ``iterates[k + 1]`` is its restriction to ``t_1..t_n``.
    """

    iterates: list = field(default_factory=list)
    increments: list = field(default_factory=list)
    wall_times: list = field(default_factory=list)
    node_values: list = field(default_factory=list)
    stopped_early: bool = False

    @property
    def final(self) -> PiecewisePair:
        return self.iterates[-1]

    @property
    def sweeps(self) -> int:
        return len(self.iterates) - 1

    def final_nodes(self) -> tuple[np.ndarray, np.ndarray]:
        return self.node_values[-1]


class PicardError(RuntimeError):
    """Psi evaluation failed; ``result`` holds the sweeps completed so far."""

    def __init__(self, message: str, result: PicardResult):
        super().__init__(message)
        self.result = result


GammaLike = Union[PiecewisePair, Callable[[float], tuple]]


def discretize(gamma: GammaLike, horizon: float, n: int) -> PiecewisePair:
    """Sample ``gamma`` at ``t_i = i T / n`` (i = 1..n) and hold on ``[t_{i-1}, t_i)``.

    A callable returns ``(A, b)`` at time t. A step pair is read through its
    left limits, so resampling on its own grid returns the same pair.
    """
    if n < 1:
        raise ValueError("n must be positive")
    times = horizon * np.arange(1, n + 1) / n
    if isinstance(gamma, PiecewisePair):
        if not np.isclose(gamma.horizon, horizon):
            raise ValueError("horizon mismatch")
        idx = np.ceil(times / gamma.dt - 1e-9).astype(int) - 1
        idx = np.clip(idx, 0, gamma.n_steps - 1)
        return PiecewisePair(horizon, gamma.alpha_vals[idx], gamma.beta_vals[idx])
    samples = [gamma(t) for t in times]
    alpha = np.array([np.atleast_2d(np.asarray(a, dtype=float)) for a, _ in samples])
    beta = np.array([np.atleast_1d(np.asarray(b, dtype=float)) for _, b in samples])
    return PiecewisePair(horizon, alpha, beta)


def weighted_norm(pair: PiecewisePair, other: PiecewisePair, lam: float = 0.0) -> float:
    """``max_i e^{-lam t_i} max(|A_i - A'_i|, |b_i - b'_i|)`` with ``t_i`` the right endpoints."""
    if pair.n_steps != other.n_steps or pair.dim != other.dim or not np.isclose(pair.horizon, other.horizon):
        raise ValueError("weighted_norm needs pairs on the same grid")
    da = pair.alpha_vals - other.alpha_vals
    db = pair.beta_vals - other.beta_vals
    a_norm = np.linalg.norm(da, ord=2, axis=(1, 2)) if pair.dim > 1 else np.abs(da[:, 0, 0])
    b_norm = np.linalg.norm(db, axis=1)
    weights = np.exp(-lam * pair.grid[1:])
    return float(np.max(weights * np.maximum(a_norm, b_norm)))


def initial_pair(problem: Problem, config: PicardConfig) -> PiecewisePair:
    d = problem.dim
    if config.gamma0 is None:
        A0, b0 = np.zeros((d, d)), np.zeros(d)
    else:
        A0 = np.atleast_2d(np.asarray(config.gamma0[0], dtype=float))
        b0 = np.atleast_1d(np.asarray(config.gamma0[1], dtype=float))
        if A0.shape != (d, d) or b0.shape != (d,):
            raise ConfigurationError(f"gamma0 must be a {d}x{d} matrix and a length-{d} vector")
    radius = problem.ball_radius
    if max(spectral_norm(A0), float(np.linalg.norm(b0))) > radius + _BALL_SLACK:
        raise ConfigurationError(f"gamma0 lies outside the invariant ball of radius {radius:.6g}")
    return PiecewisePair.constant(problem.horizon, config.n_steps, A0, b0)


def iterate(problem: Problem, config: PicardConfig, check: bool = True) -> PicardResult:
    """Run ``gamma^{m,n} = Psi^{(n)}(gamma^{m-1,n})`` for the configured number of sweeps."""
    if check:
        report = validate_problem(problem.triplet, problem.law, problem.drift, problem.horizon)
        if not report.ok:
            raise ConfigurationError(f"problem failed validation: {report.as_dict()}")
    current = initial_pair(problem, config)
    result = PicardResult(iterates=[current])
    for sweep in range(1, config.iterations + 1):
        start = time.perf_counter()
        try:
            a, b = psi_on_grid(problem, current, config.psi_path, config.quad, config.damp)
        except Exception as exc:  # noqa: BLE001
            raise PicardError(f"Psi evaluation failed in sweep {sweep}: {exc}", result) from exc
        if not (np.all(np.isfinite(a[1:])) and np.all(np.isfinite(b[1:]))):
            raise PicardError(f"non-finite Psi values in sweep {sweep}", result)
        nxt = PiecewisePair(problem.horizon, a[1:], b[1:])
        result.wall_times.append(time.perf_counter() - start)
        result.increments.append(weighted_norm(nxt, current, config.lam))
        result.iterates.append(nxt)
        result.node_values.append((a, b))
        current = nxt
        if config.stop_tol is not None and result.increments[-1] <= config.stop_tol:
            result.stopped_early = sweep < config.iterations
            break
    return result
