"""Problem data: Lévy triplet, initial law, drift coefficients, and assumption checks."""

from __future__ import annotations

from dataclasses import dataclass, field
from math import ceil, factorial, gamma as gamma_fn, inf, isfinite
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.special import gammainc

from . import series


def damping_order(d: int) -> int:
    """Smallest even integer >= d + 1."""
    return 2 * ceil((d + 1) / 2)


def _as_matrix(x, name: str) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(x, dtype=float))
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a matrix, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def _as_vector(x, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a vector, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def spectral_norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(np.atleast_2d(a), 2))


# ---------------------------------------------------------------------------
# Jump measures
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoJumps:
    """Empty Lévy measure; the exponent vanishes identically."""

    def exponent(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1], dtype=complex)

    def series(self, x: np.ndarray, u: np.ndarray, order: int) -> np.ndarray:
        shape = np.broadcast_shapes(np.shape(x)[:-1], np.shape(u)[:-1])
        return np.zeros((order + 1,) + shape, dtype=complex)

    def moments(self, q: int) -> tuple[float, float]:
        return 0.0, 0.0

    @property
    def nonpositive_real_part(self) -> bool:
        return True


@dataclass(frozen=True)
class DoubleExponentialJumps:
    """Compound Poisson jumps in d=1 with asymmetric double-exponential sizes.

    Jump sizes have density ``p l1 e^{-l1 y}`` on y>0 and ``(1-p) l2 e^{l2 y}``
    on y<0. By default the exponent is the non-compensated one,
    ``intensity * (chi_hat(x) - 1)``; ``compensated=True`` subtracts the
    small-jump drift ``i x * int_{|y|<1} y nu(dy)`` (the canonical truncation).
    """

    intensity: float
    lambda1: float
    lambda2: float
    p: float
    compensated: bool = False

    def __post_init__(self):
        if not (self.intensity >= 0 and self.lambda1 > 0 and self.lambda2 > 0):
            raise ValueError("need intensity >= 0 and lambda1, lambda2 > 0")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")

    def _one_sided(self, rate: float, k: int, lo: float, hi: float) -> float:
        # int_lo^hi y^k rate e^{-rate y} dy
        upper = 1.0 if hi == inf else float(gammainc(k + 1, rate * hi))
        lower = float(gammainc(k + 1, rate * lo))
        return factorial(k) / rate**k * (upper - lower)

    def truncated_moment(self, k: int, lo: float = 0.0, hi: float = inf) -> float:
        """``int_{lo <= |y| < hi} |y|^k nu(dy)``."""
        up = self.p * self._one_sided(self.lambda1, k, lo, hi)
        down = (1 - self.p) * self._one_sided(self.lambda2, k, lo, hi)
        return self.intensity * (up + down)

    @property
    def small_jump_drift(self) -> float:
        up = self.p * self._one_sided(self.lambda1, 1, 0.0, 1.0)
        down = (1 - self.p) * self._one_sided(self.lambda2, 1, 0.0, 1.0)
        return self.intensity * (up - down)

    def moments(self, q: int) -> tuple[float, float]:
        nbar = self.truncated_moment(2, 0.0, 1.0) + self.truncated_moment(1, 1.0, inf)
        return nbar, self.truncated_moment(q + 1, 1.0, inf)

    def exponent(self, x: np.ndarray) -> np.ndarray:
        xi = np.asarray(x, dtype=float)[..., 0]
        p, l1, l2 = self.p, self.lambda1, self.lambda2
        out = 1j * self.intensity * xi * (p / (l1 - 1j * xi) - (1 - p) / (l2 + 1j * xi))
        if self.compensated:
            out = out - 1j * xi * self.small_jump_drift
        return out

    def series(self, x: np.ndarray, u: np.ndarray, order: int) -> np.ndarray:
        """Taylor coefficients of ``s -> f(x + s u)``."""
        xi = np.asarray(x, dtype=float)[..., 0]
        du = np.asarray(u, dtype=float)[..., 0]
        up = self.lambda1 * series.reciprocal_linear(self.lambda1 - 1j * xi, -1j * du, order)
        down = self.lambda2 * series.reciprocal_linear(self.lambda2 + 1j * xi, 1j * du, order)
        out = self.intensity * (self.p * up + (1 - self.p) * down)
        out[0] -= self.intensity
        if self.compensated and order >= 1:
            out[1] = out[1] - 1j * du * self.small_jump_drift
        return out

    @property
    def nonpositive_real_part(self) -> bool:
        return True


@dataclass(frozen=True)
class CustomExponent:
    """User-supplied Lévy exponent ``f`` with declared moment bounds.

    ``f`` maps arrays of shape ``(..., d)`` to complex arrays of shape ``(...)``
    and must be pure. ``series_fn(x, u, order)``, when given, returns the
    Taylor coefficients of ``s -> f(x + s u)``; the damped Fourier path with
    jumps needs it.
    """

    f: Callable[[np.ndarray], np.ndarray]
    moment_bounds: tuple[float, float] = (inf, inf)
    series_fn: Optional[Callable[[np.ndarray, np.ndarray, int], np.ndarray]] = None

    def exponent(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.f(np.asarray(x, dtype=float)), dtype=complex)

    def series(self, x: np.ndarray, u: np.ndarray, order: int) -> np.ndarray:
        if self.series_fn is None:
            raise ConfigurationError("custom exponent has no series_fn; derivative data unavailable")
        return np.asarray(self.series_fn(x, u, order), dtype=complex)

    def moments(self, q: int) -> tuple[float, float]:
        return tuple(float(m) for m in self.moment_bounds)

    @property
    def nonpositive_real_part(self) -> bool:
        # true for every genuine Lévy exponent: exp(t f) is a characteristic function
        return True


JumpSpec = Union[NoJumps, DoubleExponentialJumps, CustomExponent]


class ConfigurationError(ValueError):
    """Missing or inconsistent problem data for the requested computation."""


@dataclass(frozen=True)
class LevyTriplet:
    """Triplet (0, sigma sigma^T, nu) of the driving Lévy process."""

    sigma: np.ndarray
    jump: JumpSpec = field(default_factory=NoJumps)

    def __post_init__(self):
        object.__setattr__(self, "sigma", _as_matrix(self.sigma, "sigma"))
        if self.jump is None:
            object.__setattr__(self, "jump", NoJumps())
        if isinstance(self.jump, DoubleExponentialJumps) and self.dim != 1:
            raise ValueError("double-exponential jumps are one-dimensional")

    @property
    def dim(self) -> int:
        return self.sigma.shape[0]

    @property
    def theta(self) -> np.ndarray:
        return self.sigma @ self.sigma.T

    @property
    def lambda_min(self) -> float:
        return float(np.linalg.eigvalsh(self.theta)[0])


def levy_exponent(triplet: LevyTriplet, x) -> np.ndarray:
    """``f(x) = int (e^{i<x,y>} - 1 - 1_{|y|<1} i<x,y>) nu(dy)`` (see DoubleExponentialJumps for its convention)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x[None]
    return triplet.jump.exponent(x)


# ---------------------------------------------------------------------------
# Initial laws
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InitialLaw:
    """Law of X_0 through its characteristic function.

    ``cf`` acts on arrays of shape ``(..., d)``. ``cf_series(eta, u, order)``
    returns the Taylor coefficients of ``s -> cf(eta + s u)``, shape
    ``(order + 1, ...)``. ``abs_moments[k-1]`` is (an upper bound for)
    ``E|Y|^k``, possibly ``inf``.
    """

    dim: int
    cf: Callable[[np.ndarray], np.ndarray]
    cf_series: Optional[Callable[[np.ndarray, np.ndarray, int], np.ndarray]] = None
    abs_moments: tuple[float, ...] = ()
    name: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    def __call__(self, eta) -> np.ndarray:
        return np.asarray(self.cf(np.asarray(eta, dtype=float)), dtype=complex)

    def cf_derivs(self, j: int, m: int, eta) -> np.ndarray:
        """``d^m/d eta_j^m`` of the characteristic function."""
        if self.cf_series is None:
            raise ConfigurationError(f"initial law {self.name!r} has no derivative data")
        eta = np.asarray(eta, dtype=float)
        u = np.zeros(self.dim)
        u[j] = 1.0
        return series.derivative(self.cf_series(eta, u, m), m)

    def moment(self, k: int) -> float:
        if k <= 0:
            return 1.0
        if k > len(self.abs_moments):
            return inf
        return self.abs_moments[k - 1]


def _laplace_factor_series(x, u, order):
    # 1/(1+x^2) = (i/2) (1/(x+i) - 1/(x-i))
    x = np.asarray(x, dtype=float)
    return 0.5j * (series.reciprocal_linear(x + 1j, u, order)
                   - series.reciprocal_linear(x - 1j, u, order))


def product_laplace_law(d: int = 1) -> InitialLaw:
    """Independent standard Laplace components, density ``2^-d exp(-sum|y_i|)``."""

    def cf(eta):
        return np.prod(1.0 / (1.0 + eta**2), axis=-1).astype(complex)

    def cf_series(eta, u, order):
        eta = np.asarray(eta, dtype=float)
        u = np.broadcast_to(np.asarray(u, dtype=float), eta.shape)
        out = _laplace_factor_series(eta[..., 0], u[..., 0], order)
        for k in range(1, d):
            out = series.mul(out, _laplace_factor_series(eta[..., k], u[..., k], order))
        return out

    q = damping_order(d)
    # |Y| <= sum|Y_i| ~ Gamma(d, 1); exact for d = 1
    moments = tuple(gamma_fn(d + k) / gamma_fn(d) for k in range(1, q + 2))
    return InitialLaw(d, cf, cf_series, moments, name="laplace" if d == 1 else "product_laplace",
                      params={"dimension": d})


def laplace_law() -> InitialLaw:
    return product_laplace_law(1)


def stable_law(d: int, shift=1.0, scale: float = 1.0) -> InitialLaw:
    """Independent symmetric 1-stable (Cauchy) components with a location shift.

    No moments and no derivative data: the characteristic function is not
    differentiable on the coordinate hyperplanes.
    """
    shift_vec = np.broadcast_to(np.asarray(shift, dtype=float), (d,)).copy()

    def cf(eta):
        return np.exp(1j * eta @ shift_vec - scale * np.abs(eta).sum(axis=-1))

    q = damping_order(d)
    return InitialLaw(d, cf, None, tuple([inf] * (q + 1)), name="stable",
                      params={"dimension": d, "shift": shift_vec.tolist(), "scale": scale})


def gaussian_law(mean, cov) -> InitialLaw:
    mean = _as_vector(mean, "mean")
    cov = _as_matrix(cov, "cov")
    d = mean.size

    def cf(eta):
        return np.exp(1j * eta @ mean - 0.5 * np.einsum("...i,ij,...j->...", eta, cov, eta))

    def cf_series(eta, u, order):
        eta = np.asarray(eta, dtype=float)
        u = np.broadcast_to(np.asarray(u, dtype=float), eta.shape)
        g = np.zeros((order + 1,) + eta.shape[:-1], dtype=complex)
        g[0] = 1j * eta @ mean - 0.5 * np.einsum("...i,ij,...j->...", eta, cov, eta)
        if order >= 1:
            g[1] = 1j * u @ mean - np.einsum("...i,ij,...j->...", u, cov, eta)
        if order >= 2:
            g[2] = -0.5 * np.einsum("...i,ij,...j->...", u, cov, u)
        return series.exp(g)

    q = damping_order(d)
    scale = np.sqrt(spectral_norm(cov))
    chi = [2 ** (k / 2) * gamma_fn((d + k) / 2) / gamma_fn(d / 2) for k in range(1, q + 2)]
    # Minkowski bound on E|mean + cov^{1/2} Z|^k
    moments = tuple((np.linalg.norm(mean) + scale * c ** (1 / k)) ** k for k, c in enumerate(chi, 1))
    return InitialLaw(d, cf, cf_series, moments, name="gaussian",
                      params={"mean": mean.tolist(), "cov": cov.tolist()})


def point_mass_law(point) -> InitialLaw:
    point = _as_vector(point, "point")
    d = point.size

    def cf(eta):
        return np.exp(1j * eta @ point)

    def cf_series(eta, u, order):
        eta = np.asarray(eta, dtype=float)
        u = np.broadcast_to(np.asarray(u, dtype=float), eta.shape)
        g = np.zeros((order + 1,) + eta.shape[:-1], dtype=complex)
        g[0] = 1j * eta @ point
        if order >= 1:
            g[1] = 1j * u @ point
        return series.exp(g)

    r = float(np.linalg.norm(point))
    q = damping_order(d)
    return InitialLaw(d, cf, cf_series, tuple(r**k for k in range(1, q + 2)), name="point_mass",
                      params={"point": point.tolist()})


# ---------------------------------------------------------------------------
# Drift coefficients
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConstantATrigB:
    """``a(x) = A`` and ``b(x) = cos(<w, x>) v``."""

    A: np.ndarray
    w: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "A", _as_matrix(self.A, "A"))
        object.__setattr__(self, "w", _as_vector(self.w, "w"))
        object.__setattr__(self, "v", _as_vector(self.v, "v"))
        d = self.A.shape[0]
        if self.A.shape != (d, d) or self.w.size != d or self.v.size != d:
            raise ValueError("A must be d x d and w, v of length d")

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    @property
    def a_sup(self) -> float:
        return spectral_norm(self.A)

    @property
    def b_sup(self) -> float:
        return float(np.linalg.norm(self.v))


Atom = tuple  # (frequency: R^d, coefficient: d x d matrix or R^d vector)


@dataclass(frozen=True)
class SpectralPair:
    """Drift given through Fourier data.

    With the convention ``g(x) = (2 pi)^-d int e^{-i<eta,x>} g_hat(eta) d eta``
    the coefficients are ``a(x) = [inverse transform of a_hat] + sum_k C_k e^{-i<eta_k, x>}``
    over ``a_atoms = [(eta_k, C_k), ...]`` and likewise for ``b``. When
    ``damped`` is set, ``a_hat``/``b_hat`` are ignored by the damped path,
    which uses ``damped_a_hat``/``damped_b_hat``: the transforms of
    ``a(x) / (1 + sum_j x_j^q)`` minus atoms. ``None`` means zero.
    ``breakpoints`` lists per-axis frequencies where the transforms are not
    smooth; panel quadrature splits there.
    """

    dim: int
    a_hat: Optional[Callable] = None
    b_hat: Optional[Callable] = None
    damped: bool = False
    damped_a_hat: Optional[Callable] = None
    damped_b_hat: Optional[Callable] = None
    a_atoms: Sequence[Atom] = ()
    b_atoms: Sequence[Atom] = ()
    a_sup: float = inf
    b_sup: float = inf
    breakpoints: tuple = ()


DriftSpec = Union[ConstantATrigB, SpectralPair]


def trig_spectral(drift: ConstantATrigB, damped: bool = False) -> SpectralPair:
    """Fourier data of a ``ConstantATrigB`` drift.

    Undamped: pure atoms (a constant is an atom at 0, a cosine two atoms at
    ``-w`` and ``w``). Damped, d=1 only: ``1/(1+x^2)`` has transform
    ``pi e^{-|eta|}``, and the cosine shifts it to ``+-w``.
    """
    A, w, v = drift.A, drift.w, drift.v
    d = drift.dim
    if not damped:
        return SpectralPair(d, a_atoms=((np.zeros(d), A),), b_atoms=((w, 0.5 * v), (-w, 0.5 * v)),
                            a_sup=drift.a_sup, b_sup=drift.b_sup)
    if d != 1:
        raise ConfigurationError("closed-form damped transforms of trigonometric drifts exist for d=1 only")

    def a_hat(eta):
        return np.pi * np.exp(-np.abs(eta[..., 0]))[..., None, None] * A

    def b_hat(eta):
        x = eta[..., 0]
        return 0.5 * np.pi * (np.exp(-np.abs(x + w[0])) + np.exp(-np.abs(x - w[0])))[..., None] * v

    kinks = tuple(sorted({0.0, float(w[0]), -float(w[0])}))
    return SpectralPair(d, damped=True, damped_a_hat=a_hat, damped_b_hat=b_hat,
                        a_sup=drift.a_sup, b_sup=drift.b_sup, breakpoints=kinks)


@dataclass(frozen=True)
class Problem:
    triplet: LevyTriplet
    law: InitialLaw
    drift: DriftSpec
    horizon: float

    @property
    def dim(self) -> int:
        return self.triplet.dim

    @property
    def q(self) -> int:
        return damping_order(self.dim)

    @property
    def ball_radius(self) -> float:
        """``||a||_inf + ||b||_inf``, radius of the invariant ball."""
        return self.drift.a_sup + self.drift.b_sup


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AssumptionCheck:
    key: str
    description: str
    status: str  # "pass" | "fail" | "not-checkable"
    blocking: bool = False
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    q: int
    checks: tuple[AssumptionCheck, ...]
    errors: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.errors and not any(c.blocking and c.status == "fail" for c in self.checks)

    @property
    def warnings(self) -> list[AssumptionCheck]:
        return [c for c in self.checks if c.status == "fail" and not c.blocking]

    def status(self, key: str) -> str:
        return next(c.status for c in self.checks if c.key == key)

    def as_dict(self) -> dict:
        return {
            "ok": self.ok,
            "q": self.q,
            "errors": list(self.errors),
            "checks": [c.__dict__ for c in self.checks],
        }


def validate_problem(triplet, law, drift, horizon) -> ValidationReport:
    """Check the standing assumptions; never raises on bad input."""
    errors: list[str] = []
    checks: list[AssumptionCheck] = []
    try:
        d = int(triplet.dim)
    except Exception as exc:  # noqa: BLE001
        return ValidationReport(0, (), (f"invalid triplet: {exc}",))
    q = damping_order(d)

    try:
        if not (isfinite(float(horizon)) and float(horizon) > 0):
            errors.append(f"horizon must be a positive finite number, got {horizon!r}")
    except (TypeError, ValueError):
        errors.append(f"horizon must be a number, got {horizon!r}")
    if getattr(law, "dim", None) != d:
        errors.append(f"initial law dimension {getattr(law, 'dim', None)} != {d}")
    if getattr(drift, "dim", None) != d:
        errors.append(f"drift dimension {getattr(drift, 'dim', None)} != {d}")
    if not np.all(np.isfinite(triplet.sigma)):
        errors.append("sigma has non-finite entries")
    if errors:
        return ValidationReport(q, tuple(checks), tuple(errors))

    lam_min = triplet.lambda_min
    checks.append(AssumptionCheck(
        "ellipticity", "theta = sigma sigma^T positive definite",
        "pass" if lam_min > 0 else "fail", blocking=True, detail=f"lambda_min={lam_min:.3e}"))

    bounded = isfinite(drift.a_sup) and isfinite(drift.b_sup)
    checks.append(AssumptionCheck(
        "bounded_coefficients", "a, b bounded",
        "pass" if bounded else "not-checkable",
        detail=f"|a|={drift.a_sup:.3g}, |b|={drift.b_sup:.3g}"))
    if isinstance(drift, ConstantATrigB):
        checks.append(AssumptionCheck(
            "integrable_coefficients", "a, b in L1 (undamped representation)", "fail",
            detail="constant/trigonometric coefficients are not integrable; damped or trigonometric path applies"))
    else:
        checks.append(AssumptionCheck(
            "integrable_coefficients", "a, b in L1 (undamped representation)", "not-checkable"))

    nbar, nbar_q = triplet.jump.moments(q)
    m1 = law.moment(1)
    first_ok = isfinite(nbar) and isfinite(m1)
    checks.append(AssumptionCheck(
        "first_moments", "int |y|(1 ^ |y|) nu(dy) < inf and E|Y| < inf",
        "pass" if first_ok else "fail",
        detail=f"nbar={nbar:.3g}, E|Y|={m1:.3g}"))

    mq = law.moment(q + 1)
    damped = isinstance(drift, SpectralPair) and drift.damped
    higher_ok = isfinite(nbar_q) and isfinite(mq)
    checks.append(AssumptionCheck(
        "higher_moments", f"int_|y|>=1 |y|^{q + 1} nu(dy) < inf and E|Y|^{q + 1} < inf",
        "pass" if higher_ok else "fail", blocking=damped,
        detail=f"nbar_q={nbar_q:.3g}, E|Y|^{q + 1}={mq:.3g}"))
    if damped and law.cf_series is None:
        errors.append("damped representation needs derivative data for the initial law")

    return ValidationReport(q, tuple(checks), tuple(errors))
