"""Model configuration and equilibrium profiles.

A model fixes the Poisson coupling ``(beta - Laplacian) U + h(U) = density``
through the screening constant ``beta >= 0`` and the nonlinearity ``h`` given
as a power series ``h(y) = sum_{n>=2} a_n y^n``. An equilibrium fixes the
spatially homogeneous background through the Fourier transform of its velocity
profile, ``mu_hat``, together with a certified exponential decay rate used by
quadrature tail bounds.

Fourier convention: arrays and evaluators hold exponential-basis coefficients,
``rho(x) = sum_k c_k exp(ikx)`` and ``mu_hat(eta) = integral mu(v) exp(-i eta v) dv``,
so a unit-mass profile has ``mu_hat(0) = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import ConfigError

__all__ = [
    "ModelConfig",
    "Equilibrium",
    "make_preset",
    "maxwellian",
    "two_stream",
    "bump_on_tail",
    "H1Report",
    "check_H1",
    "check_H3",
]


@dataclass(frozen=True)
class ModelConfig:
    """Coupling constants of the field equation.

    ``h_coeffs[n]`` is the coefficient ``a_n``; the series starts at n = 2
    (``a_0 = a_1 = 0``). ``h_radius`` is the convergence radius used to reject
    field amplitudes outside the series' domain, and ``h_tail`` optionally
    bounds the truncation remainder ``|sum_{n > N} a_n y^n|``.
    """

    beta: float
    h_coeffs: tuple[float, ...] = ()
    h_radius: float = math.inf
    dimension: int = 1
    label: str = "custom"
    h_tail: Optional[Callable[[float], float]] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.beta < 0:
            raise ConfigError("beta must be >= 0")
        if self.dimension != 1:
            raise ConfigError("only dimension = 1 grids are implemented")
        if len(self.h_coeffs) >= 1 and any(c != 0.0 for c in self.h_coeffs[:2]):
            raise ConfigError("h series must start at quadratic order (a_0 = a_1 = 0)")
        if self.beta == 0.0 and self.has_h:
            raise ConfigError("beta = 0 with a nonlinear h is not a supported preset")

    @property
    def has_h(self) -> bool:
        return any(c != 0.0 for c in self.h_coeffs)

    def h(self, y):
        """Evaluate the truncated series h(y)."""
        if not self.h_coeffs:
            return np.zeros_like(np.asarray(y, dtype=float))
        return npoly.polyval(y, np.asarray(self.h_coeffs))

    def h_tail_bound(self, y: float) -> float:
        if self.h_tail is None:
            return 0.0
        return self.h_tail(abs(y))

    def poisson_prefactor(self, k) -> np.ndarray:
        """|k|^2 / (beta + |k|^2), the Volterra kernel prefactor."""
        k2 = np.square(np.asarray(k, dtype=float))
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(k2 > 0, k2 / (self.beta + k2), 0.0)
        return out


def make_preset(name: str, n_h: int = 12) -> ModelConfig:
    """Built-in couplings: ``vp`` (beta 0, h = 0), ``screened`` (beta 1, h = 0),
    ``vpme`` (beta 1, h(y) = e^y - 1 - y truncated at degree ``n_h``)."""
    key = name.strip().lower()
    if key == "vp":
        return ModelConfig(beta=0.0, label="vp")
    if key == "screened":
        return ModelConfig(beta=1.0, label="screened")
    if key == "vpme":
        if n_h < 2:
            raise ConfigError("vpme needs at least the quadratic term (n_h >= 2)")
        coeffs = tuple(0.0 if n < 2 else 1.0 / math.factorial(n) for n in range(n_h + 1))

        def exp_tail(y: float, _n: int = n_h) -> float:
            # remainder of the exponential series: |y|^(N+1) e^|y| / (N+1)!
            return abs(y) ** (_n + 1) * math.exp(abs(y)) / math.factorial(_n + 1)

        return ModelConfig(beta=1.0, h_coeffs=coeffs, h_radius=math.inf,
                           label="vpme", h_tail=exp_tail)
    raise ConfigError(f"unknown model preset {name!r} (choose vp, screened, vpme)")


def _exp_quadratic_derivs(a: complex, b: complex, eta: np.ndarray, order: int) -> np.ndarray:
    """Derivatives of exp(a eta^2 + b eta) of the given order, evaluated at eta.

    Uses the polynomial recurrence H_{n+1} = H_n' + (2 a eta + b) H_n with
    d^n f = H_n f, which stays exact for the Gaussian-type profiles here.
    """
    coeffs = np.array([1.0 + 0.0j])
    lin = np.array([b, 2.0 * a])
    for _ in range(order):
        coeffs = npoly.polyadd(npoly.polyder(coeffs), npoly.polymul(lin, coeffs))
    eta = np.asarray(eta, dtype=float)
    return npoly.polyval(eta, coeffs) * np.exp(a * eta**2 + b * eta)


@dataclass(frozen=True)
class Equilibrium:
    """Homogeneous background described by its velocity-Fourier profile.

    ``lambda_analytic`` is a rate for which ``|mu_hat(eta)| <= C exp(-lambda_analytic |eta|)``
    is certified; solvers must keep every Gevrey radius they use strictly below
    half of it. ``mu_hat_deriv(eta, order)`` returns the order-th eta derivative
    when an analytic formula exists; otherwise derivative checks fall back to
    centered differences.
    """

    label: str
    mu_hat: Callable[[np.ndarray], np.ndarray]
    lambda_analytic: float
    mu_hat_deriv: Optional[Callable[[np.ndarray, int], np.ndarray]] = None

    def deriv(self, eta, order: int):
        eta = np.asarray(eta, dtype=float)
        if order == 0:
            return np.asarray(self.mu_hat(eta), dtype=complex)
        if self.mu_hat_deriv is not None:
            return np.asarray(self.mu_hat_deriv(eta, order), dtype=complex)
        # single binomial central-difference stencil; step balances the
        # O(h^2) truncation against the eps/h^order roundoff amplification
        h = np.sqrt(1.0 + eta**2) * 1e-16 ** (1.0 / (order + 2))
        acc = np.zeros(np.broadcast(eta, h).shape, dtype=complex)
        for i in range(order + 1):
            shift = (order / 2.0 - i) * h
            acc += ((-1) ** i * math.comb(order, i)
                    * np.asarray(self.mu_hat(eta + shift), dtype=complex))
        return acc / h**order


def maxwellian() -> Equilibrium:
    """Unit Maxwellian, mu_hat(eta) = exp(-eta^2 / 2)."""

    def mh(eta):
        return np.exp(-np.square(np.asarray(eta, dtype=float)) / 2.0)

    def mh_deriv(eta, order):
        return _exp_quadratic_derivs(-0.5, 0.0, eta, order)

    return Equilibrium("maxwellian", mh, lambda_analytic=1.0, mu_hat_deriv=mh_deriv)


def two_stream(v0: float, width: float = 0.5) -> Equilibrium:
    """Symmetric counter-streaming pair of Gaussians at +-v0 with the given width.

    mu_hat(eta) = exp(-(width eta)^2 / 2) cos(v0 eta).
    """
    if v0 <= 0 or width <= 0:
        raise ConfigError("two_stream needs v0 > 0 and width > 0")
    w2 = width * width

    def mh(eta):
        eta = np.asarray(eta, dtype=float)
        return np.exp(-w2 * eta**2 / 2.0) * np.cos(v0 * eta)

    def mh_deriv(eta, order):
        plus = _exp_quadratic_derivs(-w2 / 2.0, 1j * v0, eta, order)
        minus = _exp_quadratic_derivs(-w2 / 2.0, -1j * v0, eta, order)
        return 0.5 * (plus + minus)

    return Equilibrium(f"two_stream(v0={v0:g},w={width:g})", mh,
                       lambda_analytic=1.0, mu_hat_deriv=mh_deriv)


def bump_on_tail(alpha: float = 0.1, v0: float = 4.0, width: float = 0.5) -> Equilibrium:
    """Maxwellian bulk with a drifting Gaussian bump of mass alpha at v0."""
    if not 0 < alpha < 1:
        raise ConfigError("bump_on_tail needs 0 < alpha < 1")
    if width <= 0:
        raise ConfigError("bump_on_tail needs width > 0")
    w2 = width * width

    def mh(eta):
        eta = np.asarray(eta, dtype=float)
        return ((1 - alpha) * np.exp(-eta**2 / 2.0)
                + alpha * np.exp(-w2 * eta**2 / 2.0 - 1j * v0 * eta))

    def mh_deriv(eta, order):
        bulk = (1 - alpha) * _exp_quadratic_derivs(-0.5, 0.0, eta, order)
        bump = alpha * _exp_quadratic_derivs(-w2 / 2.0, -1j * v0, eta, order)
        return bulk + bump

    return Equilibrium(f"bump_on_tail(a={alpha:g},v0={v0:g},w={width:g})", mh,
                       lambda_analytic=1.0, mu_hat_deriv=mh_deriv)


@dataclass(frozen=True)
class H1Report:
    """Result of the weighted-derivative boundedness check."""

    value: float
    eta_argmax: float
    order_argmax: int
    interior: bool
    lam: float
    m_max: int
    eta_max: float

    @property
    def bounded(self) -> bool:
        # a maximum attained on the sampling boundary signals divergence
        return self.interior and math.isfinite(self.value)


def check_H1(eq: Equilibrium, lam: float, m_max: int, eta_max: float,
             n_samples: int = 4001) -> H1Report:
    """Sampled maximization of exp(lam <eta>) |d^j mu_hat(eta)| for |j| <= m_max.

    Symmetry of real profiles makes |d^j mu_hat| even, so only eta >= 0 is
    sampled. The report flags whether the maximum sat in the interior of the
    sampling window; a boundary maximum means the product is still growing at
    eta_max and the check is inconclusive at best.
    """
    if lam < 0:
        raise ConfigError("lambda must be >= 0")
    if eta_max <= 0 or n_samples < 16:
        raise ConfigError("need eta_max > 0 and a sensible sample count")
    eta = np.linspace(0.0, eta_max, n_samples)
    bracket = np.sqrt(1.0 + eta**2)
    log_weight = lam * bracket
    best = (-math.inf, 0.0, 0)
    boundary_hit = False
    for order in range(m_max + 1):
        vals = np.abs(eq.deriv(eta, order))
        with np.errstate(divide="ignore"):
            logs = log_weight + np.log(vals, out=np.full_like(vals, -np.inf),
                                       where=vals > 0)
        i = int(np.argmax(logs))
        if logs[i] > best[0]:
            best = (float(logs[i]), float(eta[i]), order)
            boundary_hit = i >= n_samples - 2
    value = math.exp(best[0]) if math.isfinite(best[0]) else 0.0
    return H1Report(value=value, eta_argmax=best[1], order_argmax=best[2],
                    interior=not boundary_hit, lam=lam, m_max=m_max, eta_max=eta_max)


def check_H3(eq: Equilibrium, tol: float = 1e-12) -> bool:
    """Unit-mass normalization: |mu_hat(0) - 1| <= tol."""
    return bool(abs(complex(np.asarray(eq.mu_hat(0.0)).item()) - 1.0) <= tol)
