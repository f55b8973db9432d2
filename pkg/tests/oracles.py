"""Independent reference computations used only by the tests."""

from __future__ import annotations

import numpy as np


def rk4(f, y0, t0: float, t1: float, steps: int):
    """Classical RK4 for ``y' = f(t, y)``; returns y(t1)."""
    h = (t1 - t0) / steps
    y = np.array(y0, dtype=float)
    t = t0
    for _ in range(steps):
        k1 = f(t, y)
        k2 = f(t + h / 2, y + h / 2 * k1)
        k3 = f(t + h / 2, y + h / 2 * k2)
        k4 = f(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t0 + (_ + 1) * h
    return y


def _pair_at(pair, t):
    k = min(int(np.floor(t / pair.dt + 1e-12)), pair.n_steps - 1)
    return pair.alpha_vals[k], pair.beta_vals[k]


def rk4_on_pair(pair, rhs, y0, s: float, t: float, steps_per_interval: int = 2000):
    """Integrate interval by interval so that RK4 never straddles a coefficient jump."""
    y = np.array(y0, dtype=float)
    edges = pair.grid
    cuts = [s] + [e for e in edges if s < e < t] + [t]
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        A, b = _pair_at(pair, 0.5 * (lo + hi))
        y = rk4(lambda _t, z: rhs(A, b, z), y, lo, hi, steps_per_interval)
    return y


def flow_rk4(pair, s, t, steps=2000):
    d = pair.dim
    out = rk4_on_pair(pair, lambda A, b, z: (A @ z.reshape(d, d)).ravel(), np.eye(d).ravel(), s, t, steps)
    return out.reshape(d, d)


def cov_rk4(pair, theta, t, steps=2000):
    d = pair.dim
    def rhs(A, b, z):
        C = z.reshape(d, d)
        return (A @ C + C @ A.T + theta).ravel()
    return rk4_on_pair(pair, rhs, np.zeros(d * d), 0.0, t, steps).reshape(d, d)


def mean_rk4(pair, t, steps=2000):
    return rk4_on_pair(pair, lambda A, b, z: A @ z + b, np.zeros(pair.dim), 0.0, t, steps)


def euler_cf_1d(pair, sigma: float, x0, times, etas, jumps=None, seed: int = 0, chunk: int = 250_000):
    """Euler-Maruyama estimate of ``E[exp(i eta X_t)]`` for the 1-D linear SDE driven by ``pair``.

    ``x0`` is an array of initial samples; the Euler grid is the pair's grid.
    ``jumps = (intensity, l1, l2, p)`` adds double-exponential compound
    Poisson jumps with no compensator. Returns (mean, standard error) arrays
    indexed like ``[(t, eta) for t in times for eta in etas]``.
    """
    rng = np.random.default_rng(seed)
    n = pair.n_steps
    dt = pair.dt
    want = {int(round(t / dt)): t for t in times}
    sums = {}
    sq = {}
    total = 0
    x0 = np.asarray(x0, dtype=float)
    for start in range(0, x0.size, chunk):
        x = x0[start:start + chunk].copy()
        m = x.size
        total += m
        for k in range(n + 1):
            if k in want:
                for eta in etas:
                    z = np.exp(1j * eta * x)
                    key = (want[k], eta)
                    sums[key] = sums.get(key, 0) + z.sum()
                    sq[key] = sq.get(key, 0) + (np.abs(z - 0) ** 2).sum()
            if k == n:
                break
            a = pair.alpha_vals[k, 0, 0]
            b = pair.beta_vals[k, 0]
            x = x + (a * x + b) * dt + sigma * np.sqrt(dt) * rng.standard_normal(m)
            if jumps is not None:
                lam, l1, l2, p = jumps
                counts = rng.poisson(lam * dt, m)
                hit = np.nonzero(counts)[0]
                for _ in range(int(counts.max(initial=0))):
                    active = hit[counts[hit] > 0]
                    up = rng.random(active.size) < p
                    size = np.where(up, rng.exponential(1 / l1, active.size), -rng.exponential(1 / l2, active.size))
                    x[active] += size
                    counts[active] -= 1
    means, ses = [], []
    for t in times:
        for eta in etas:
            mu = sums[(t, eta)] / total
            var = sq[(t, eta)] / total - abs(mu) ** 2
            means.append(mu)
            ses.append(np.sqrt(var / total))
    return np.array(means), np.array(ses)


def scalar_flow(pair, s: float, t: float) -> float:
    """``exp(int_s^t alpha)`` for a 1-D step pair, by exact overlap sums."""
    lo = pair.grid[:-1]
    hi = pair.grid[1:]
    overlap = np.clip(np.minimum(hi, t) - np.maximum(lo, s), 0.0, None)
    return float(np.exp(np.sum(pair.alpha_vals[:, 0, 0] * overlap)))


def jump_time_quadrature(pair, jump, t: float, eta: float, nodes: int = 64) -> complex:
    """``n_t(eta) = int_0^t f(Phi_{s,t} eta) ds`` with ``nodes`` Gauss-Legendre points per coefficient interval."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    edges = [e for e in pair.grid if e < t] + [t]
    total = 0j
    for lo, hi in zip(edges[:-1], edges[1:]):
        s = 0.5 * (hi - lo) * (x + 1) + lo
        phis = np.array([scalar_flow(pair, si, t) for si in s])
        total += 0.5 * (hi - lo) * np.sum(w * jump.exponent((phis * eta)[:, None]))
    return total
