"""Model and equilibrium checks against velocity-space quadrature oracles."""

import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import minimize_scalar

from vpscatter.errors import ConfigError
from vpscatter.model import (
    Equilibrium,
    ModelConfig,
    bump_on_tail,
    check_H1,
    check_H3,
    make_preset,
    maxwellian,
    two_stream,
)

# frozen oracle values (independent quadrature / closed-form evaluation)
MAXW_AT_1_3 = 0.4295573582107391
TWO_STREAM_W05_V1_AT_2 = -0.2524058153082637
BUMP_AT_1_5 = 0.36466467632419813 + 0.02109138834500374j
MAXW_D3_AT_0_7 = 1.375211873690962
H1_MAXW_LAM02_M0 = 1.2214027581601699  # exp(0.2), attained at eta = 0


def fourier_oracle(mu, eta, span=60.0, points=None):
    """Direct velocity-space transform, independent of the closed forms."""
    kw = {"limit": 400}
    if points is not None:
        kw["points"] = points
    re = quad(lambda v: mu(v) * math.cos(eta * v), -span, span, **kw)[0]
    im = quad(lambda v: -mu(v) * math.sin(eta * v), -span, span, **kw)[0]
    return complex(re, im)


def test_maxwellian_matches_quadrature():
    eq = maxwellian()
    c = 1.0 / math.sqrt(2 * math.pi)
    val = fourier_oracle(lambda v: c * math.exp(-v * v / 2), 1.3)
    assert abs(complex(eq.mu_hat(1.3)) - val) < 1e-12
    assert abs(complex(eq.mu_hat(1.3)) - MAXW_AT_1_3) < 1e-14


def test_two_stream_matches_quadrature():
    eq = two_stream(v0=1.0, width=0.5)
    c = 1.0 / math.sqrt(2 * math.pi)

    def mu(v):
        return 0.5 * (c / 0.5) * (math.exp(-((v - 1) ** 2) / (2 * 0.25))
                                  + math.exp(-((v + 1) ** 2) / (2 * 0.25)))

    val = fourier_oracle(mu, 2.0, points=[-1.0, 0.0, 1.0])
    assert abs(complex(eq.mu_hat(2.0)) - val) < 1e-12
    assert abs(complex(eq.mu_hat(2.0)) - TWO_STREAM_W05_V1_AT_2) < 1e-14


def test_bump_on_tail_matches_quadrature():
    eq = bump_on_tail(alpha=0.1, v0=4.0, width=0.5)
    c = 1.0 / math.sqrt(2 * math.pi)

    def mu(v):
        return (0.9 * c * math.exp(-v * v / 2)
                + 0.1 * (c / 0.5) * math.exp(-((v - 4) ** 2) / (2 * 0.25)))

    # force subdivision at the off-center bump, adaptive quad misses it otherwise
    val = fourier_oracle(mu, 1.5, points=[0.0, 4.0])
    assert abs(complex(eq.mu_hat(1.5)) - val) < 1e-10
    assert abs(complex(eq.mu_hat(1.5)) - BUMP_AT_1_5) < 1e-14


def test_conjugate_symmetry_of_presets():
    rng = np.random.default_rng(7)
    eta = rng.uniform(-8, 8, size=64)
    for eq in (maxwellian(), two_stream(1.0), bump_on_tail()):
        lhs = np.asarray(eq.mu_hat(-eta), dtype=complex)
        rhs = np.conj(np.asarray(eq.mu_hat(eta), dtype=complex))
        assert np.max(np.abs(lhs - rhs)) < 1e-14, eq.label


def test_analytic_derivatives_match_finite_differences():
    rng = np.random.default_rng(11)
    eta = rng.uniform(-4, 4, size=16)
    # the stencil is O(h^2) with h tuned per order; headroom degrades with order
    tol = {1: 1e-9, 2: 1e-6, 3: 1e-4}
    for eq in (maxwellian(), two_stream(1.0), bump_on_tail()):
        fallback = Equilibrium(eq.label, eq.mu_hat, eq.lambda_analytic, None)
        for order in (1, 2, 3):
            exact = eq.deriv(eta, order)
            approx = fallback.deriv(eta, order)
            assert np.max(np.abs(exact - approx)) < tol[order], (eq.label, order)
    assert abs(maxwellian().deriv(0.7, 3) - MAXW_D3_AT_0_7) < 1e-13


def test_h3_normalization():
    assert check_H3(maxwellian())
    assert check_H3(two_stream(2.0))
    assert check_H3(bump_on_tail())


def test_h1_maxwellian_against_scalar_minimizer():
    eq = maxwellian()
    rep = check_H1(eq, lam=0.2, m_max=0, eta_max=12.0, n_samples=8001)
    res = minimize_scalar(
        lambda e: -math.exp(0.2 * math.sqrt(1 + e * e)) * math.exp(-e * e / 2),
        bounds=(0.0, 12.0), method="bounded", options={"xatol": 1e-12},
    )
    assert rep.interior and rep.bounded
    assert abs(rep.value - (-res.fun)) < 1e-6
    assert abs(rep.value - H1_MAXW_LAM02_M0) < 1e-6
    assert rep.order_argmax == 0


def test_h1_flags_boundary_growth():
    # a profile that grows past the window must be reported as inconclusive
    grower = Equilibrium("grower", lambda e: np.cosh(0.5 * np.asarray(e)), 0.1)
    rep = check_H1(grower, lam=0.1, m_max=0, eta_max=6.0)
    assert not rep.interior and not rep.bounded


def test_vpme_series_matches_exponential_remainder():
    cfg = make_preset("vpme")
    for y in (0.05, 0.3, -0.4, 1.0):
        exact = math.exp(y) - 1.0 - y
        assert abs(float(cfg.h(y)) - exact) <= cfg.h_tail_bound(y) + 1e-15
    assert cfg.h_tail_bound(0.3) < 1e-16


def test_preset_couplings():
    vp = make_preset("vp")
    assert vp.beta == 0.0 and not vp.has_h
    sc = make_preset("screened")
    assert sc.beta == 1.0 and not sc.has_h
    me = make_preset("vpme")
    assert me.beta == 1.0 and me.has_h
    assert me.h_coeffs[2] == 0.5 and me.h_coeffs[3] == pytest.approx(1 / 6)
    # h(0) = h'(0) = 0: quadratic contact with zero
    assert float(me.h(0.0)) == 0.0
    assert abs(float(me.h(1e-8))) < 1e-15


def test_poisson_prefactor():
    vp = make_preset("vp")
    sc = make_preset("screened")
    k = np.array([-2, -1, 0, 1, 2])
    assert np.allclose(vp.poisson_prefactor(k), [1, 1, 0, 1, 1])
    assert np.allclose(sc.poisson_prefactor(k), [0.8, 0.5, 0, 0.5, 0.8])


def test_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(beta=-1.0)
    with pytest.raises(ConfigError):
        ModelConfig(beta=1.0, h_coeffs=(0.0, 1.0, 0.5))  # linear term forbidden
    with pytest.raises(ConfigError):
        ModelConfig(beta=0.0, h_coeffs=(0.0, 0.0, 0.5))  # unscreened nonlinearity
    with pytest.raises(ConfigError):
        ModelConfig(beta=1.0, dimension=2)
    with pytest.raises(ConfigError):
        make_preset("landau")
    with pytest.raises(ConfigError):
        two_stream(v0=-1.0)
    with pytest.raises(ConfigError):
        bump_on_tail(alpha=1.5)
