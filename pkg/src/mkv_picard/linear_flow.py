"""Characteristic function of the linear SDE with piecewise-constant coefficients.

For ``dX = (alpha_t X + beta_t) dt + dL_t`` with step functions ``alpha, beta``
on the uniform grid ``t_i = i T / n``, everything in the characteristic
function is explicit per interval:

* ``Phi_{s,t}`` is an ordered product of matrix exponentials,
* ``C_t`` and ``m_t`` follow exact one-step recursions,
* ``n_t(eta) = int_0^t f(Phi_{s,t}^T eta) ds`` is integrated interval by
  interval (closed form for 1-D double-exponential jumps, 16-point
  Gauss-Legendre otherwise).
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import expm as _scipy_expm

from .model import DoubleExponentialJumps, InitialLaw, LevyTriplet, NoJumps, spectral_norm

GL_ORDER = 16
_GL_X, _GL_W = np.polynomial.legendre.leggauss(GL_ORDER)
_PHI1_SERIES_CUTOFF = 1e-2
_PHI1_SERIES_TERMS = 10
_NODE_TOL = 1e-10


def expm(a: np.ndarray) -> np.ndarray:
    """Batched matrix exponential over leading axes; identical matrices are computed once."""
    a = np.asarray(a, dtype=float)
    d = a.shape[-1]
    if d == 1:
        return np.exp(a)
    if a.ndim == 2:
        return _scipy_expm(a)
    flat = a.reshape(-1, d, d)
    uniq, inverse = np.unique(flat.reshape(flat.shape[0], -1), axis=0, return_inverse=True)
    out = _scipy_expm(uniq.reshape(-1, d, d))
    return out[inverse.ravel()].reshape(a.shape)


def phi1(z: np.ndarray) -> np.ndarray:
    """``sum_k z^k / (k+1)!`` = ``z^{-1}(e^z - I)`` without inverting z."""
    z = np.asarray(z, dtype=float)
    d = z.shape[-1]
    batch = z.shape[:-2]
    flat = z.reshape(-1, d, d)
    out = np.empty_like(flat)
    norms = np.linalg.norm(flat, ord=2, axis=(1, 2)) if d > 1 else np.abs(flat[:, 0, 0])
    small = norms < _PHI1_SERIES_CUTOFF
    if small.any():
        zs = flat[small]
        term = np.broadcast_to(np.eye(d), zs.shape).copy()
        acc = term.copy()
        for k in range(1, _PHI1_SERIES_TERMS):
            term = term @ zs / (k + 1)
            acc += term
        out[small] = acc
    if (~small).any():
        zb = flat[~small]
        block = np.zeros((zb.shape[0], 2 * d, 2 * d))
        block[:, :d, :d] = zb
        block[:, :d, d:] = np.eye(d)
        out[~small] = expm(block)[:, :d, d:]
    return out.reshape(batch + (d, d))


@dataclass(frozen=True, eq=False)
class PiecewisePair:
    """Step coefficients: ``(A_i, b_i)`` on ``[t_{i-1}, t_i)``, ``t_i = i T / n``."""

    horizon: float
    alpha_vals: np.ndarray
    beta_vals: np.ndarray

    def __post_init__(self):
        alpha = np.asarray(self.alpha_vals, dtype=float)
        beta = np.asarray(self.beta_vals, dtype=float)
        if alpha.ndim == 1:
            alpha = alpha[:, None, None]
        if beta.ndim == 1:
            beta = beta[:, None]
        n, d = beta.shape
        if alpha.shape != (n, d, d):
            raise ValueError(f"alpha_vals shape {alpha.shape} incompatible with beta_vals {beta.shape}")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        alpha.setflags(write=False)
        beta.setflags(write=False)
        object.__setattr__(self, "alpha_vals", alpha)
        object.__setattr__(self, "beta_vals", beta)

    @classmethod
    def constant(cls, horizon: float, n: int, A, b) -> "PiecewisePair":
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float))
        return cls(horizon, np.broadcast_to(A, (n,) + A.shape).copy(), np.broadcast_to(b, (n,) + b.shape).copy())

    @property
    def n_steps(self) -> int:
        return self.beta_vals.shape[0]

    @property
    def dim(self) -> int:
        return self.beta_vals.shape[1]

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def grid(self) -> np.ndarray:
        return self.horizon * np.arange(self.n_steps + 1) / self.n_steps

    @property
    def alpha_sup(self) -> float:
        return float(max(spectral_norm(a) for a in self.alpha_vals))

    @property
    def beta_sup(self) -> float:
        return float(np.linalg.norm(self.beta_vals, axis=1).max())

    def sup_norm(self) -> float:
        """``||gamma||_{T,0}``."""
        return max(self.alpha_sup, self.beta_sup)

    def value_at(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        i = min(int(np.floor(t / self.dt + _NODE_TOL)), self.n_steps - 1)
        return self.alpha_vals[i], self.beta_vals[i]


class LinearFlow:
    """Flow, covariance, mean and jump exponent of ``X^{(alpha, beta)}``.

    Node quantities are built eagerly; the all-pairs flow cache used by the
    jump integral is built on first use. Read-only afterwards.
    """

    def __init__(self, pair: PiecewisePair, triplet: LevyTriplet, jump_method: str = "auto"):
        if pair.dim != triplet.dim:
            raise ValueError(f"pair dimension {pair.dim} != triplet dimension {triplet.dim}")
        if jump_method not in ("auto", "quadrature"):
            raise ValueError("jump_method must be 'auto' or 'quadrature'")
        self.pair = pair
        self.triplet = triplet
        self.jump_method = jump_method
        n, d, h = pair.n_steps, pair.dim, pair.dt
        self.n, self.d, self.h = n, d, h
        self.theta = triplet.theta
        alpha, beta = pair.alpha_vals, pair.beta_vals

        self._E = expm(alpha * h)
        self._u = 0.5 * h * (_GL_X + 1.0)
        self._wq = 0.5 * h * _GL_W
        self._G = expm(alpha[:, None] * self._u[None, :, None, None])  # (n, 16, d, d)
        Q = np.einsum("g,ngij,jk,ngmk->nim", self._wq, self._G, self.theta, self._G)
        mu = h * np.einsum("nij,nj->ni", phi1(alpha * h), beta)

        self.phi_nodes = np.empty((n + 1, d, d))
        self.cov_nodes = np.empty((n + 1, d, d))
        self.mean_nodes = np.empty((n + 1, d))
        self.phi_nodes[0] = np.eye(d)
        self.cov_nodes[0] = 0.0
        self.mean_nodes[0] = 0.0
        for i in range(n):
            E = self._E[i]
            self.phi_nodes[i + 1] = E @ self.phi_nodes[i]
            C = E @ self.cov_nodes[i] @ E.T + Q[i]
            self.cov_nodes[i + 1] = 0.5 * (C + C.T)
            self.mean_nodes[i + 1] = E @ self.mean_nodes[i] + mu[i]
        self._pairs_cache: Optional[list[np.ndarray]] = None

    # -- time bookkeeping ---------------------------------------------------

    def _check_time(self, t: float) -> float:
        T = self.pair.horizon
        if not (-_NODE_TOL * T <= t <= T * (1 + _NODE_TOL)):
            raise ValueError(f"time {t} outside [0, {T}]")
        return min(max(float(t), 0.0), T)

    def _snap(self, t: float) -> float:
        r = t / self.h
        k = round(r)
        return k * self.h if abs(r - k) < _NODE_TOL else t

    def locate(self, t: float) -> tuple[int, float]:
        """``t`` in ``(t_{k-1}, t_k]`` as ``(k, t - t_{k-1})``; ``(0, 0)`` at t=0."""
        t = self._check_time(t)
        r = t / self.h
        if t == 0.0:
            return 0, 0.0
        k = int(round(r))
        # never snap onto t=0: C(t) ~ theta t there, so snapping loses all of it
        if k > 0 and abs(r - k) < _NODE_TOL:
            return k, self.h
        k = int(np.floor(r)) + 1
        return k, t - (k - 1) * self.h

    # -- flow ---------------------------------------------------------------

    def _between_nodes(self, j: int, i: int) -> np.ndarray:
        """``Phi_{t_j, t_i}`` for ``j <= i``."""
        out = np.eye(self.d)
        for k in range(j, i):
            out = self._E[k] @ out
        return out

    def phi(self, s: float, t: float) -> np.ndarray:
        s = self._check_time(s)
        t = self._check_time(t)
        if s > t + _NODE_TOL * self.pair.horizon:
            raise ValueError(f"flow needs s <= t, got s={s}, t={t}")
        s, t = self._snap(s), self._snap(t)
        if s >= t:
            return np.eye(self.d)
        k, tau = self.locate(t)
        # s in [t_{j-1}, t_j): interval j, remaining length t_j - s
        r = s / self.h
        j = int(round(r))
        if abs(r - j) < _NODE_TOL:
            j += 1
        else:
            j = int(np.floor(r)) + 1
        rest = j * self.h - s
        if j == k:
            return expm(self.pair.alpha_vals[k - 1] * (t - s))
        left = self._E[k - 1] if tau == self.h else expm(self.pair.alpha_vals[k - 1] * tau)
        right = self._E[j - 1] if abs(rest - self.h) < _NODE_TOL * self.h else expm(self.pair.alpha_vals[j - 1] * rest)
        return left @ self._between_nodes(j, k - 1) @ right

    def phi0(self, t: float) -> np.ndarray:
        k, tau = self.locate(t)
        if k == 0:
            return np.eye(self.d)
        if tau == self.h:
            return self.phi_nodes[k]
        return expm(self.pair.alpha_vals[k - 1] * tau) @ self.phi_nodes[k - 1]

    # -- covariance and mean -------------------------------------------------

    def _partial_cov(self, A: np.ndarray, tau: float) -> np.ndarray:
        u = 0.5 * tau * (_GL_X + 1.0)
        G = expm(A[None] * u[:, None, None])
        return np.einsum("g,gij,jk,gmk->im", 0.5 * tau * _GL_W, G, self.theta, G)

    def cov(self, t: float) -> np.ndarray:
        k, tau = self.locate(t)
        if tau == self.h or k == 0:
            return self.cov_nodes[k]
        A = self.pair.alpha_vals[k - 1]
        M = expm(A * tau)
        C = M @ self.cov_nodes[k - 1] @ M.T + self._partial_cov(A, tau)
        return 0.5 * (C + C.T)

    def mean(self, t: float) -> np.ndarray:
        k, tau = self.locate(t)
        if tau == self.h or k == 0:
            return self.mean_nodes[k]
        A = self.pair.alpha_vals[k - 1]
        return expm(A * tau) @ self.mean_nodes[k - 1] + tau * phi1(A * tau) @ self.pair.beta_vals[k - 1]

    # -- jump exponent --------------------------------------------------------

    def _node_flows(self, i: int) -> np.ndarray:
        """``[Phi_{t_j, t_i} for j = 1..i]``, shape ``(i, d, d)``."""
        if self._pairs_cache is None:
            cache = [np.eye(self.d)[None]]
            for k in range(self.n):
                cache.append(np.concatenate([self._E[k] @ cache[-1], np.eye(self.d)[None]]))
            self._pairs_cache = cache
        return self._pairs_cache[i][1:]

    def _segments(self, t: float):
        """Intervals contributing to ``int_0^t``: alpha values, lengths, GL flow factors, left factors.

        For ``s`` in segment j, ``Phi_{s,t} = M_j expm(A_j u)`` with
        ``u = (right end of segment j) - s``.
        """
        k, tau = self.locate(t)
        if k == 0:
            return None
        alpha = self.pair.alpha_vals[:k]
        lengths = np.full(k, self.h)
        lengths[-1] = tau
        if tau == self.h:
            M = self._node_flows(k)
            G = self._G[:k]
        else:
            M = expm(alpha[-1] * tau) @ self._node_flows(k - 1) if k > 1 else np.zeros((0, self.d, self.d))
            M = np.concatenate([M, np.eye(self.d)[None]])
            u = 0.5 * tau * (_GL_X + 1.0)
            G = np.concatenate([self._G[: k - 1], expm(alpha[-1][None] * u[:, None, None])[None]])
        return alpha, lengths, M, G

    def jump_exponent(self, t: float, eta) -> np.ndarray:
        """``n_t(eta)``; ``eta`` has shape ``(..., d)``."""
        eta = np.asarray(eta, dtype=float)
        jump = self.triplet.jump
        if isinstance(jump, NoJumps):
            return np.zeros(eta.shape[:-1], dtype=complex)
        seg = self._segments(t)
        if seg is None:
            return np.zeros(eta.shape[:-1], dtype=complex)
        alpha, lengths, M, G = seg
        flat = eta.reshape(-1, self.d)
        if isinstance(jump, DoubleExponentialJumps) and self.jump_method == "auto":
            xi = M[:, 0, 0][:, None] * flat[None, :, 0]
            out = _double_exp_interval_integral(jump, alpha[:, 0, 0][:, None], lengths[:, None], xi).sum(axis=0)
            return out.reshape(eta.shape[:-1])
        weights = 0.5 * lengths[:, None] * _GL_W[None, :]
        Q = np.einsum("sij,sgjk->sgik", M, G)
        out = np.zeros(flat.shape[0], dtype=complex)
        for lo in range(0, flat.shape[0], _chunk(Q.shape[0])):
            chunk = flat[lo: lo + _chunk(Q.shape[0])]
            x = np.einsum("sgji,nj->sgni", Q, chunk)
            out[lo: lo + chunk.shape[0]] = np.einsum("sg,sgn->n", weights, jump.exponent(x))
        return out.reshape(eta.shape[:-1])

    def jump_series(self, t: float, eta, direction, order: int) -> np.ndarray:
        """Taylor coefficients of ``s -> n_t(eta + s * direction)``, shape ``(order + 1, ...)``."""
        eta = np.asarray(eta, dtype=float)
        direction = np.asarray(direction, dtype=float)
        jump = self.triplet.jump
        out_shape = (order + 1,) + eta.shape[:-1]
        seg = None if isinstance(jump, NoJumps) else self._segments(t)
        if seg is None:
            return np.zeros(out_shape, dtype=complex)
        alpha, lengths, M, G = seg
        weights = 0.5 * lengths[:, None] * _GL_W[None, :]
        Q = np.einsum("sij,sgjk->sgik", M, G)
        u = np.einsum("sgji,j->sgi", Q, direction)[:, :, None, :]
        flat = eta.reshape(-1, self.d)
        out = np.zeros((order + 1, flat.shape[0]), dtype=complex)
        step = _chunk(Q.shape[0])
        for lo in range(0, flat.shape[0], step):
            chunk = flat[lo: lo + step]
            x = np.einsum("sgji,nj->sgni", Q, chunk)
            coeffs = jump.series(x, u, order)
            out[:, lo: lo + chunk.shape[0]] = np.einsum("sg,ksgn->kn", weights, coeffs)
        return out.reshape(out_shape)

    # -- characteristic function ---------------------------------------------

    def log_char_gaussian(self, t: float, eta) -> np.ndarray:
        eta = np.asarray(eta, dtype=float)
        C, m = self.cov(t), self.mean(t)
        return -0.5 * np.einsum("...i,ij,...j->...", eta, C, eta) + 1j * eta @ m

    def char_fn(self, t: float, eta, law: InitialLaw) -> np.ndarray:
        eta = np.asarray(eta, dtype=float)
        expo = self.log_char_gaussian(t, eta) + self.jump_exponent(t, eta)
        return np.exp(expo) * law(eta @ self.phi0(t))


def _chunk(segments: int) -> int:
    return max(1, (1 << 21) // (segments * GL_ORDER))


def _log1p_over(z: np.ndarray) -> np.ndarray:
    """``log(1+z)/z`` with the removable singularity at 0."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 1e-4
    safe = np.where(small, 1.0, z)
    big = np.log1p(safe) / safe
    series = 1 - z / 2 + z**2 / 3 - z**3 / 4
    return np.where(small, series, big)


def _double_exp_interval_integral(jump: DoubleExponentialJumps, a, length, xi) -> np.ndarray:
    """``int_0^length f(e^{a u} xi) du`` in closed form for scalar ``a``."""
    a = np.asarray(a, dtype=float)
    al = a * length
    growth = np.where(a == 0.0, length, np.expm1(al) / np.where(a == 0.0, 1.0, a))
    lam, p, l1, l2 = jump.intensity, jump.p, jump.lambda1, jump.lambda2
    z1 = -1j * xi * growth / (l1 - 1j * xi)
    z2 = 1j * xi * growth / (l2 + 1j * xi)
    out = -p * lam * z1 * _log1p_over(a * z1) - (1 - p) * lam * z2 * _log1p_over(a * z2)
    if jump.compensated:
        out = out - 1j * jump.small_jump_drift * xi * growth
    return out


# ---------------------------------------------------------------------------
# Functional interface with a per-(pair, triplet) flow cache
# ---------------------------------------------------------------------------

_FLOWS: "weakref.WeakKeyDictionary[PiecewisePair, list]" = weakref.WeakKeyDictionary()


def get_flow(pair: PiecewisePair, triplet: LevyTriplet) -> LinearFlow:
    entries = _FLOWS.setdefault(pair, [])
    for trip, flow_obj in entries:
        if trip is triplet:
            return flow_obj
    flow_obj = LinearFlow(pair, triplet)
    entries.append((triplet, flow_obj))
    return flow_obj


_NOISELESS: dict[int, LevyTriplet] = {}


def _drift_only(pair: PiecewisePair) -> LevyTriplet:
    if pair.dim not in _NOISELESS:
        _NOISELESS[pair.dim] = LevyTriplet(np.zeros((pair.dim, pair.dim)))
    return _NOISELESS[pair.dim]


def flow(pair: PiecewisePair, s: float, t: float) -> np.ndarray:
    """``Phi_{s,t}``: solution of ``dPhi/dt = alpha_t Phi``, ``Phi_{s,s} = I``."""
    return get_flow(pair, _drift_only(pair)).phi(s, t)


def covariance(pair: PiecewisePair, triplet: LevyTriplet, t: float) -> np.ndarray:
    return get_flow(pair, triplet).cov(t)


def mean(pair: PiecewisePair, t: float) -> np.ndarray:
    return get_flow(pair, _drift_only(pair)).mean(t)


def jump_exponent(pair: PiecewisePair, triplet: LevyTriplet, t: float, eta) -> np.ndarray:
    return get_flow(pair, triplet).jump_exponent(t, eta)


def char_fn(pair: PiecewisePair, triplet: LevyTriplet, law: InitialLaw, t: float, eta) -> np.ndarray:
    """Characteristic function of ``X_t^{(alpha, beta)}`` at ``eta``."""
    return get_flow(pair, triplet).char_fn(t, eta, law)
