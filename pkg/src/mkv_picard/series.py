"""Truncated univariate Taylor series arithmetic.

A series is an array ``c`` of shape ``(K + 1, ...)`` holding the coefficients
of ``s**0 .. s**K``; trailing axes broadcast elementwise. This is how the
damped Fourier path gets q-th directional derivatives of the characteristic
function without symbolic Bell polynomials.
"""

from __future__ import annotations

from math import factorial

import numpy as np


def mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cauchy product truncated to the shorter order."""
    order = min(a.shape[0], b.shape[0]) - 1
    shape = np.broadcast_shapes(a.shape[1:], b.shape[1:])
    out = np.zeros((order + 1,) + shape, dtype=np.result_type(a, b, complex))
    for k in range(order + 1):
        for j in range(k + 1):
            out[k] += a[j] * b[k - j]
    return out


def exp(a: np.ndarray) -> np.ndarray:
    """Series of ``exp(a(s))`` via the recurrence ``k b_k = sum_j j a_j b_{k-j}``."""
    order = a.shape[0] - 1
    out = np.zeros(a.shape, dtype=np.result_type(a, complex))
    out[0] = np.exp(a[0])
    for k in range(1, order + 1):
        acc = np.zeros(a.shape[1:], dtype=out.dtype)
        for j in range(1, k + 1):
            acc = acc + j * a[j] * out[k - j]
        out[k] = acc / k
    return out


def reciprocal_linear(c: np.ndarray, u: np.ndarray, order: int) -> np.ndarray:
    """Series of ``1 / (c + u s)``."""
    c = np.asarray(c, dtype=complex)
    ratio = -np.asarray(u) / c
    powers = [np.ones(np.broadcast_shapes(c.shape, ratio.shape), dtype=complex)]
    for _ in range(order):
        powers.append(powers[-1] * ratio)
    return np.stack(powers) / c


def derivative(coeffs: np.ndarray, m: int) -> np.ndarray:
    """m-th derivative at s=0 from the Taylor coefficients."""
    return factorial(m) * coeffs[m]
