"""The map Psi_t(alpha, beta) = (E[a(X_t)], E[b(X_t)]).

Three evaluation paths:

* ``psi_trig``: constant ``a`` and ``b(x) = cos(<w, x>) v``; exact through the
  characteristic function at ``w``.
* ``psi_fourier``: Parseval against the Fourier data ``a_hat, b_hat``.
* ``psi_damped``: same against the transforms of ``a / (1 + sum x_j^q)``,
  with ``1 + i^q sum_j d^q/d eta_j^q`` applied to the characteristic function.

Fourier convention: ``g_hat(eta) = int e^{i<eta,x>} g(x) dx``, hence
``E[g(X)] = (2 pi)^-d int g_hat(eta) H(eta) d eta`` with
``H(eta) = E[e^{-i<eta,X>}]``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from math import factorial, log, pi, sqrt
from typing import Optional

import numpy as np

from . import series
from .linear_flow import LinearFlow, PiecewisePair, get_flow
from .model import ConfigurationError, ConstantATrigB, NoJumps, Problem, SpectralPair, damping_order
from .parallel import pmap

IMAG_TOL = 1e-8
MAX_QUAD_DIM = 3
_DEFAULT_NODES = {1: 2048, 2: 192, 3: 80}
GL_PANEL = 16
_EVAL_CHUNK = 1 << 16


class QuadratureWarning(UserWarning):
    """A Fourier integral left a non-negligible imaginary part."""


@dataclass(frozen=True)
class QuadratureSpec:
    """Tensor grid on ``[-R, R]^d``.

    ``radius=None`` picks R with ``choose_radius`` at the requested ``tol``;
    ``nodes_per_axis=None`` uses a dimension-dependent default.
    """

    radius: Optional[float] = None
    nodes_per_axis: Optional[int] = None
    rule: str = "gauss_legendre"
    tol: float = 1e-12
    budget: int = 1 << 24

    def __post_init__(self):
        if self.rule not in ("trapezoid", "gauss_legendre"):
            raise ValueError(f"unknown quadrature rule {self.rule!r}")
        if self.radius is not None and not self.radius > 0:
            raise ValueError("radius must be positive")
        if self.nodes_per_axis is not None and self.nodes_per_axis < 2:
            raise ValueError("nodes_per_axis must be at least 2")
        if not 0 < self.tol < 1:
            raise ValueError("tol must lie in (0, 1)")

    def nodes(self, d: int) -> int:
        return self.nodes_per_axis if self.nodes_per_axis is not None else _DEFAULT_NODES.get(d, 41)

    def rule_1d(self, radius: float, d: int, breakpoints=()) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights on ``[-R, R]``.

        ``gauss_legendre`` is composite: panels of ``GL_PANEL`` points whose
        edges include every breakpoint (where the transforms have kinks).
        """
        n = self.nodes(d)
        if self.rule == "trapezoid":
            x = np.linspace(-radius, radius, n)
            w = np.full(n, x[1] - x[0])
            w[[0, -1]] *= 0.5
            return x, w
        per = min(n, GL_PANEL)
        edges = np.linspace(-radius, radius, max(1, n // per) + 1)
        inner = [b for b in breakpoints if -radius < b < radius]
        edges = np.unique(np.concatenate([edges, inner]))
        gx, gw = np.polynomial.legendre.leggauss(per)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        x = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
        w = (half[:, None] * gw[None, :]).ravel()
        return x, w


@dataclass(frozen=True)
class DampingSpec:
    q: int
    mode: str = "analytic_leibniz"
    h: float = 1e-2

    def __post_init__(self):
        if self.q <= 0 or self.q % 2:
            raise ValueError(f"q must be a positive even integer, got {self.q}")
        if self.mode not in ("analytic_leibniz", "finite_difference"):
            raise ValueError(f"unknown damping mode {self.mode!r}")
        if not self.h > 0:
            raise ValueError("finite-difference step must be positive")

    @classmethod
    def for_dim(cls, d: int, mode: str = "analytic_leibniz", h: float = 1e-2) -> "DampingSpec":
        return cls(damping_order(d), mode, h)


# ---------------------------------------------------------------------------
# Radius selection
# ---------------------------------------------------------------------------

def decay_rate(problem: Problem, pair: PiecewisePair) -> float:
    """Lower bound ``kappa`` with ``<eta, C_t eta> >= kappa t |eta|^2``."""
    return problem.triplet.lambda_min * np.exp(-2.0 * problem.horizon * pair.alpha_sup)


def choose_radius(problem: Problem, pair: PiecewisePair, t: float, tol: float = 1e-12) -> float:
    """Half-width R beyond which the Gaussian envelope ``exp(-kappa t R^2 / 2)`` is below ``tol``.

    Any Lévy exponent has non-positive real part and ``|mu_Y_hat| <= 1``, so
    no linear term or law envelope enters the bound.
    """
    if not t > 0:
        raise ValueError("choose_radius needs t > 0")
    if not 0 < tol < 1:
        raise ValueError("tol must lie in (0, 1)")
    kappa = decay_rate(problem, pair)
    if not kappa > 0:
        raise ConfigurationError("diffusion matrix is singular; no Gaussian decay in frequency")
    return sqrt(2.0 * log(1.0 / tol) / (kappa * t))


# ---------------------------------------------------------------------------
# Trigonometric path
# ---------------------------------------------------------------------------

def _require_trig(problem: Problem) -> ConstantATrigB:
    if not isinstance(problem.drift, ConstantATrigB):
        raise TypeError("psi_trig needs a ConstantATrigB drift")
    return problem.drift


def psi_trig(problem: Problem, pair: PiecewisePair, t: float) -> tuple[np.ndarray, np.ndarray]:
    drift = _require_trig(problem)
    flow = get_flow(pair, problem.triplet)
    phi = flow.char_fn(t, drift.w, problem.law)
    return np.array(drift.A), drift.v * float(np.real(phi))


def psi_trig_nodes(problem: Problem, flow: LinearFlow) -> tuple[np.ndarray, np.ndarray]:
    """``psi_trig`` at every grid node ``t_0 .. t_n``: shapes ``(n+1, d, d)`` and ``(n+1, d)``."""
    drift = _require_trig(problem)
    w = drift.w
    C, m, P = flow.cov_nodes, flow.mean_nodes, flow.phi_nodes
    gauss = -0.5 * np.einsum("i,kij,j->k", w, C, w) + 1j * m @ w
    jumps = np.array([flow.jump_exponent(t, w) for t in flow.pair.grid])
    law = problem.law(np.einsum("i,kij->kj", w, P))
    re = np.real(np.exp(gauss + jumps) * law)
    b = re[:, None] * drift.v[None, :]
    a = np.broadcast_to(drift.A, (flow.n + 1,) + drift.A.shape).copy()
    return a, b


# ---------------------------------------------------------------------------
# Fourier paths
# ---------------------------------------------------------------------------

def _require_spectral(problem: Problem, damped: bool) -> SpectralPair:
    drift = problem.drift
    if not isinstance(drift, SpectralPair):
        raise TypeError("Fourier paths need a SpectralPair drift")
    if damped and not drift.damped:
        raise ConfigurationError("psi_damped needs a SpectralPair with damped=True")
    if not damped and drift.damped:
        raise ConfigurationError("drift is declared damped; use psi_damped")
    if problem.dim > MAX_QUAD_DIM:
        raise ConfigurationError(f"Fourier quadrature supports d <= {MAX_QUAD_DIM}, got d={problem.dim}")
    return drift


def _grid(problem: Problem, pair: PiecewisePair, t: float, quad: QuadratureSpec):
    d = problem.dim
    radius = quad.radius if quad.radius is not None else choose_radius(problem, pair, t, quad.tol)
    x, w = quad.rule_1d(radius, d, getattr(problem.drift, "breakpoints", ()))
    n = x.size
    if n**d > quad.budget:
        raise ConfigurationError(f"quadrature needs {n}^{d} = {n**d} nodes, budget is {quad.budget}")
    mesh = np.meshgrid(*([x] * d), indexing="ij")
    eta = np.stack([g.ravel() for g in mesh], axis=-1)
    weights = np.ones(eta.shape[0])
    for wg in np.meshgrid(*([w] * d), indexing="ij"):
        weights = weights * wg.ravel()
    return eta, weights


def _H(flow: LinearFlow, law, t: float, eta: np.ndarray) -> np.ndarray:
    """``E[exp(-i <eta, X_t>)]``."""
    return flow.char_fn(t, -eta, law)


def _LH_analytic(flow: LinearFlow, law, t: float, eta: np.ndarray, q: int) -> np.ndarray:
    """``(1 + i^q sum_j d^q_j) H`` from truncated Taylor series of the characteristic function.

    ``q`` is even, so ``d^q_j H(eta) = (d^q_j mu_hat)(-eta)``.
    """
    if law.cf_series is None:
        raise ConfigurationError(f"initial law {law.name!r} has no derivative data; damped path unavailable")
    xi = -np.asarray(eta, dtype=float)
    d = flow.d
    C, m, P = flow.cov(t), flow.mean(t), flow.phi0(t)
    g0 = flow.log_char_gaussian(t, xi)
    y_arg = xi @ P
    Cxi = xi @ C
    out = np.zeros(xi.shape[:-1], dtype=complex)
    base = None
    for j in range(d):
        e = np.zeros(d)
        e[j] = 1.0
        n_ser = flow.jump_series(t, xi, e, q)
        g = n_ser.copy()
        g[0] = g[0] + g0
        g[1] = g[1] - Cxi[..., j] + 1j * m[j]
        if q >= 2:
            g[2] = g[2] - 0.5 * C[j, j]
        h = series.mul(series.exp(g), law.cf_series(y_arg, P[j], q))
        if base is None:
            base = h[0]
        out = out + factorial(q) * h[q]
    return base + (1j**q).real * out


def _fd_weights(q: int) -> tuple[np.ndarray, np.ndarray]:
    k = np.arange(q + 1)
    coeffs = np.array([(-1) ** i * factorial(q) / (factorial(i) * factorial(q - i)) for i in k], dtype=float)
    return q / 2 - k, coeffs


def _LH_finite_difference(flow: LinearFlow, law, t: float, eta: np.ndarray, q: int, h: float) -> np.ndarray:
    """Central q-th differences with one Richardson step."""
    eta = np.asarray(eta, dtype=float)
    offsets, coeffs = _fd_weights(q)
    base = _H(flow, law, t, eta)

    def central(j, step):
        e = np.zeros(flow.d)
        e[j] = step
        acc = np.zeros(eta.shape[:-1], dtype=complex)
        for off, c in zip(offsets, coeffs):
            acc = acc + c * (base if off == 0 else _H(flow, law, t, eta + off * e))
        return acc / step**q

    total = np.zeros(eta.shape[:-1], dtype=complex)
    for j in range(flow.d):
        total = total + (4.0 * central(j, h / 2) - central(j, h)) / 3.0
    return base + (1j**q).real * total


def _apply_hat(hat, eta: np.ndarray, shape: tuple) -> Optional[np.ndarray]:
    if hat is None:
        return None
    vals = np.asarray(hat(eta), dtype=complex)
    return vals.reshape(eta.shape[:1] + shape)


def _atom_sum(atoms, kernel, shape: tuple) -> np.ndarray:
    total = np.zeros(shape, dtype=complex)
    for freq, coef in atoms:
        freq = np.atleast_1d(np.asarray(freq, dtype=float))
        total = total + np.asarray(coef, dtype=complex).reshape(shape) * kernel(freq[None])[0]
    return total


def _finish(value: np.ndarray, what: str, scale: float = 1.0) -> np.ndarray:
    resid = float(np.max(np.abs(np.imag(value)), initial=0.0))
    if resid > IMAG_TOL * max(1.0, scale):
        warnings.warn(f"{what}: imaginary residue {resid:.2e} exceeds {IMAG_TOL:g}", QuadratureWarning, stacklevel=3)
    return np.real(value).copy()


def _fourier_eval(problem: Problem, flow: LinearFlow, t: float, quad: QuadratureSpec, kernel,
                  hats: tuple, atoms: tuple) -> tuple[np.ndarray, np.ndarray]:
    if not t > 0:
        raise ValueError("Fourier representation needs t > 0 (no Gaussian decay at t = 0)")
    d = problem.dim
    eta, weights = _grid(problem, flow.pair, t, quad)
    a_hat, b_hat = hats
    a_acc = np.zeros((d, d), dtype=complex)
    b_acc = np.zeros(d, dtype=complex)
    if a_hat is not None or b_hat is not None:
        for lo in range(0, eta.shape[0], _EVAL_CHUNK):
            block = eta[lo: lo + _EVAL_CHUNK]
            wk = weights[lo: lo + _EVAL_CHUNK] * kernel(block)
            av = _apply_hat(a_hat, block, (d, d))
            bv = _apply_hat(b_hat, block, (d,))
            if av is not None:
                a_acc = a_acc + np.einsum("n,nij->ij", wk, av)
            if bv is not None:
                b_acc = b_acc + np.einsum("n,ni->i", wk, bv)
    norm = (2.0 * pi) ** (-d)
    a_val = norm * a_acc + _atom_sum(atoms[0], kernel, (d, d))
    b_val = norm * b_acc + _atom_sum(atoms[1], kernel, (d,))
    return a_val, b_val


def psi_fourier(problem: Problem, pair: PiecewisePair, t: float,
                quad: QuadratureSpec = QuadratureSpec()) -> tuple[np.ndarray, np.ndarray]:
    drift = _require_spectral(problem, damped=False)
    flow = get_flow(pair, problem.triplet)
    return _psi_fourier_flow(problem, drift, flow, t, quad)


def _psi_fourier_flow(problem, drift, flow, t, quad):
    def kernel(eta):
        return _H(flow, problem.law, t, eta)

    a_val, b_val = _fourier_eval(problem, flow, t, quad, kernel, (drift.a_hat, drift.b_hat),
                                 (drift.a_atoms, drift.b_atoms))
    return _finish(a_val, "psi_fourier a"), _finish(b_val, "psi_fourier b")


def psi_damped(problem: Problem, pair: PiecewisePair, t: float,
               quad: QuadratureSpec = QuadratureSpec(),
               damp: Optional[DampingSpec] = None) -> tuple[np.ndarray, np.ndarray]:
    drift = _require_spectral(problem, damped=True)
    damp = damp if damp is not None else DampingSpec.for_dim(problem.dim)
    if damp.q != problem.q:
        raise ConfigurationError(f"damping order {damp.q} != 2*ceil((d+1)/2) = {problem.q}")
    flow = get_flow(pair, problem.triplet)
    return _psi_damped_flow(problem, drift, flow, t, quad, damp)


def _psi_damped_flow(problem, drift, flow, t, quad, damp):
    if problem.law.cf_series is None:
        raise ConfigurationError(f"initial law {problem.law.name!r} has no derivative data; damped path unavailable")
    if damp.mode == "analytic_leibniz":
        def kernel(eta):
            return _LH_analytic(flow, problem.law, t, eta, damp.q)
    else:
        def kernel(eta):
            return _LH_finite_difference(flow, problem.law, t, eta, damp.q, damp.h)

    a_val, b_val = _fourier_eval(problem, flow, t, quad, kernel, (drift.damped_a_hat, drift.damped_b_hat),
                                 (drift.a_atoms, drift.b_atoms))
    return _finish(a_val, "psi_damped a"), _finish(b_val, "psi_damped b")


# ---------------------------------------------------------------------------
# Grid evaluation used by the Picard sweep
# ---------------------------------------------------------------------------

PATHS = ("trig", "fourier", "damped")


def psi_on_grid(problem: Problem, pair: PiecewisePair, path: str = "trig",
                quad: QuadratureSpec = QuadratureSpec(), damp: Optional[DampingSpec] = None,
                include_origin: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Psi at the grid nodes ``t_0..t_n`` of ``pair`` (``t_1..t_n`` if ``include_origin`` is false).

    The Fourier paths cannot evaluate ``t_0 = 0``; there the returned row is NaN.
    """
    if path not in PATHS:
        raise ValueError(f"unknown psi path {path!r}; expected one of {PATHS}")
    flow = LinearFlow(pair, problem.triplet)
    if path == "trig":
        a, b = psi_trig_nodes(problem, flow)
    else:
        d, n = problem.dim, pair.n_steps
        a = np.full((n + 1, d, d), np.nan)
        b = np.full((n + 1, d), np.nan)
        if path == "fourier":
            drift = _require_spectral(problem, damped=False)
            step = lambda t: _psi_fourier_flow(problem, drift, flow, t, quad)  # noqa: E731
        else:
            drift = _require_spectral(problem, damped=True)
            dspec = damp if damp is not None else DampingSpec.for_dim(d)
            step = lambda t: _psi_damped_flow(problem, drift, flow, t, quad, dspec)  # noqa: E731
        if not isinstance(problem.triplet.jump, NoJumps):
            flow._node_flows(0)  # build the shared cache before fanning out
        for k, (ak, bk) in enumerate(pmap(step, pair.grid[1:]), start=1):
            a[k], b[k] = ak, bk
    if include_origin:
        return a, b
    return a[1:], b[1:]
