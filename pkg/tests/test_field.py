"""Spectral convolution, coupling series, and the density fixed point."""

import math

import numpy as np
import pytest

from vpscatter.errors import ConfigError, DivergenceError, NoContractionError
from vpscatter.field import (FieldSnapshot, electric_from_density, h_of_field,
                             poisson_fixed_point, spectral_convolve,
                             weighted_density_norm)
from vpscatter.gevrey import GevreyWeight
from vpscatter.model import ModelConfig, make_preset

SQUARE = ModelConfig(beta=1.0, h_coeffs=(0.0, 0.0, 1.0), label="sq")


def lattice(k_max):
    return np.arange(-k_max, k_max + 1)


def pair_slice(k_max, k, value):
    """Real slice with conjugate-symmetric entries at modes +-k."""
    out = np.zeros(2 * k_max + 1, dtype=complex)
    out[k_max + k] = value
    out[k_max - k] = value
    return out


def manufactured(model, k, u_hat):
    """Density and slice for which u_hat solves the truncated balance."""
    rho = (model.beta + k.astype(float) ** 2) * u_hat
    rho[k == 0] = 0.0
    q = rho + h_of_field(model, k, u_hat).values
    return rho, q


class TestSpectralConvolve:
    def test_matches_double_sum(self):
        rng = np.random.default_rng(3)
        a = rng.normal(size=9) + 1j * rng.normal(size=9)
        b = rng.normal(size=9) + 1j * rng.normal(size=9)
        direct = np.zeros(9, dtype=complex)
        for i in range(9):
            for j in range(9):
                m = i + j - 4  # output index of the mode sum
                if 0 <= m < 9:
                    direct[m] += a[i] * b[j]
        assert np.max(np.abs(spectral_convolve(a, b) - direct)) <= 1e-12

    def test_symmetry(self):
        rng = np.random.default_rng(11)
        a = rng.normal(size=7) + 1j * rng.normal(size=7)
        b = rng.normal(size=7) + 1j * rng.normal(size=7)
        defect = np.max(np.abs(spectral_convolve(a, b) - spectral_convolve(b, a)))
        assert defect <= 1e-12

    def test_bilinearity(self):
        rng = np.random.default_rng(19)
        a, b, c = (rng.normal(size=5) + 1j * rng.normal(size=5) for _ in range(3))
        lhs = spectral_convolve(a, b + c)
        rhs = spectral_convolve(a, b) + spectral_convolve(a, c)
        assert np.max(np.abs(lhs - rhs)) <= 1e-12

    def test_rejects_mismatched_slices(self):
        with pytest.raises(ConfigError, match="odd-length"):
            spectral_convolve(np.zeros(4), np.zeros(4))
        with pytest.raises(ConfigError, match="equal"):
            spectral_convolve(np.zeros(5), np.zeros(7))


class TestHSeries:
    def test_square_of_cosine(self):
        # u = cos x has u_hat(+-1) = 1/2, so u^2 = (1 + cos 2x)/2
        k = lattice(2)
        out = h_of_field(SQUARE, k, pair_slice(2, 1, 0.5))
        assert np.allclose(out.values, [0.25, 0.0, 0.5, 0.0, 0.25], atol=1e-15)
        assert out.tail_bound == 0.0

    def test_zero_potential(self):
        out = h_of_field(make_preset("vpme"), lattice(3), np.zeros(7, dtype=complex))
        assert np.all(out.values == 0.0)
        assert out.tail_bound == 0.0

    def test_no_series_returns_zero(self):
        out = h_of_field(make_preset("screened"), lattice(2), pair_slice(2, 1, 0.3))
        assert np.all(out.values == 0.0)
        assert out.tail_bound == 0.0

    def test_amplitude_halving_is_quadratic(self):
        # leading term is quadratic, so halving the slice quarters the output
        k = lattice(4)
        rng = np.random.default_rng(7)
        u = (rng.normal(size=9) * 1e-2).astype(complex)
        u = (u + u[::-1]) / 2
        full = h_of_field(make_preset("vpme"), k, u).values
        half = h_of_field(make_preset("vpme"), k, u / 2).values
        ratio = np.linalg.norm(full) / np.linalg.norm(half)
        assert 3.9 < ratio < 4.1

    def test_truncation_tail_bounds_dropped_terms(self):
        k = lattice(4)
        u = pair_slice(4, 1, 0.05)
        amp = float(np.sum(np.abs(u)))
        full = h_of_field(make_preset("vpme"), k, u)
        cut = h_of_field(make_preset("vpme"), k, u, n_h=4)
        dropped = sum(amp**n / math.factorial(n) for n in range(5, 13))
        remainder = amp**13 * math.exp(amp) / math.factorial(13)
        assert cut.tail_bound == pytest.approx(dropped + remainder, rel=1e-12)
        assert full.tail_bound < cut.tail_bound
        assert np.max(np.abs(full.values - cut.values)) <= cut.tail_bound

    def test_radius_margin_rejects_large_slice(self):
        tight = ModelConfig(beta=1.0, h_coeffs=(0.0, 0.0, 1.0), h_radius=1.0,
                            label="tight")
        with pytest.raises(DivergenceError, match="radius"):
            h_of_field(tight, lattice(2), pair_slice(2, 1, 0.475))

    def test_truncation_must_keep_quadratic(self):
        with pytest.raises(ConfigError, match="quadratic"):
            h_of_field(make_preset("vpme"), lattice(2), pair_slice(2, 1, 0.1), n_h=1)


class TestElectricFromDensity:
    def test_unscreened_unit_mode(self):
        snap = electric_from_density(make_preset("vp"), lattice(2),
                                     pair_slice(2, 1, 1.0))
        assert snap.u_hat[snap.index_of(1)] == 1.0 + 0.0j
        assert snap.e_hat[snap.index_of(1)] == -1.0j

    def test_screened_unit_mode(self):
        snap = electric_from_density(make_preset("screened"), lattice(2),
                                     pair_slice(2, 2, 1.0))
        assert snap.u_hat[snap.index_of(2)] == 0.2 + 0.0j
        assert snap.e_hat[snap.index_of(2)] == -0.4j

    def test_mean_mode_is_gauged_away(self):
        rho = pair_slice(2, 1, 0.3)
        rho[2] = 0.7  # screened model tolerates a mean component
        snap = electric_from_density(make_preset("screened"), lattice(2), rho)
        assert snap.u_hat[snap.index_of(0)] == 0.0
        assert snap.e_hat[snap.index_of(0)] == 0.0
        assert np.array_equal(snap.rho_hat, rho)

    def test_unscreened_mean_is_ill_posed(self):
        rho = pair_slice(2, 1, 0.3)
        rho[2] = 1e-6
        with pytest.raises(ConfigError, match="ill-posed"):
            electric_from_density(make_preset("vp"), lattice(2), rho)

    def test_gradient_and_reality(self):
        rng = np.random.default_rng(23)
        rho = rng.normal(size=9) + 1j * rng.normal(size=9)
        rho = (rho + np.conj(rho[::-1])) / 2
        rho[4] = 0.0
        snap = electric_from_density(make_preset("screened"), lattice(4), rho)
        assert np.array_equal(snap.e_hat, -1j * snap.k_values * snap.u_hat)
        assert snap.reality_defect() <= 1e-12


class TestWeightedNorm:
    def test_hand_value_at_unit_modes(self):
        # exp(0.15 * 2^(1/4)) * 2^6 per mode, two modes in quadrature
        w = GevreyWeight()
        got = weighted_density_norm(w, 0.0, lattice(4), pair_slice(4, 1, 1.0))
        want = math.exp(0.15 * 2.0**0.25) * 2.0**6 * math.sqrt(2.0)
        assert got == pytest.approx(want, rel=1e-12)
        assert got == pytest.approx(108.18446083442119, rel=1e-13)

    def test_zero_slice(self):
        w = GevreyWeight()
        assert weighted_density_norm(w, 3.0, lattice(2), np.zeros(5)) == 0.0


class TestPoissonFixedPoint:
    W = GevreyWeight()

    def manufactured_run(self, scale=1.0, **kw):
        model = make_preset("vpme")
        k = lattice(4)
        u = pair_slice(4, 1, scale * 5e-3)
        rho, q = manufactured(model, k, u)
        snap = poisson_fixed_point(model, k, q, self.W, 0.0, eps_ball=2.0, **kw)
        return model, k, rho, q, snap

    def test_recovers_manufactured_density(self):
        model, k, rho, q, snap = self.manufactured_run()
        err = np.linalg.norm(snap.rho_hat - rho) / np.linalg.norm(rho)
        assert err <= 1e-8
        assert snap.iters <= 50
        assert snap.residual <= 1e-12
        # reapplying the balance map must not move the returned density
        reapplied = q - h_of_field(model, k, snap.u_hat).values
        defect = weighted_density_norm(self.W, 0.0, k, reapplied - snap.rho_hat)
        assert defect <= 1e-12
        assert snap.reality_defect() <= 1e-12

    def test_contraction_ratios_shrink_with_amplitude(self):
        *_, snap = self.manufactured_run()
        *_, snap_half = self.manufactured_run(scale=0.5)
        assert snap.ratios and all(r < 1.0 for r in snap.ratios)
        quotient = snap.ratios[0] / snap_half.ratios[0]
        assert 1.9 < quotient < 2.1

    def test_no_series_is_exactly_linear(self):
        model = make_preset("screened")
        k = lattice(3)
        rng = np.random.default_rng(5)
        q1 = rng.normal(size=7) * 1e-3
        q2 = rng.normal(size=7) * 1e-3
        s1 = poisson_fixed_point(model, k, q1, self.W, 1.0)
        s2 = poisson_fixed_point(model, k, q2, self.W, 1.0)
        s12 = poisson_fixed_point(model, k, q1 + q2, self.W, 1.0)
        assert s1.iters == 1 and s1.residual == 0.0
        assert np.array_equal(s1.rho_hat, q1.astype(complex))
        assert np.array_equal(s12.rho_hat, s1.rho_hat + s2.rho_hat)

    def test_smallness_gate_rejects_default(self):
        model = make_preset("vpme")
        k = lattice(4)
        _, q = manufactured(model, k, pair_slice(4, 1, 5e-3))
        with pytest.raises(NoContractionError, match="smallness gate"):
            poisson_fixed_point(model, k, q, self.W, 0.0)

    def test_ball_exit_aborts(self):
        # quadratic coupling at order-one amplitude overshoots immediately
        with pytest.raises(NoContractionError, match="ball"):
            poisson_fixed_point(SQUARE, lattice(2), pair_slice(2, 1, 1.5),
                                self.W, 0.0, eps_ball=200.0)

    def test_iteration_budget_aborts(self):
        model = make_preset("vpme")
        k = lattice(4)
        _, q = manufactured(model, k, pair_slice(4, 1, 5e-3))
        with pytest.raises(NoContractionError, match="iterations"):
            poisson_fixed_point(model, k, q, self.W, 0.0, tol=1e-30,
                                eps_ball=2.0, max_iters=3)

    def test_mean_mode_stays_zero(self):
        *_, snap = self.manufactured_run()
        assert snap.u_hat[snap.index_of(0)] == 0.0
        assert snap.e_hat[snap.index_of(0)] == 0.0


class TestFieldSnapshot:
    def test_arrays_are_write_protected(self):
        snap = electric_from_density(make_preset("screened"), lattice(1),
                                     np.array([0.1, 0.0, 0.1]))
        with pytest.raises(ValueError):
            snap.u_hat[0] = 1.0

    def test_lattice_validation(self):
        with pytest.raises(ConfigError, match="integer"):
            FieldSnapshot(k_values=np.array([0.5, 1.5]),
                          u_hat=np.zeros(2), e_hat=np.zeros(2),
                          rho_hat=np.zeros(2))
        with pytest.raises(ConfigError, match="shape"):
            FieldSnapshot(k_values=lattice(1), u_hat=np.zeros(2),
                          e_hat=np.zeros(3), rho_hat=np.zeros(3))

    def test_index_of_missing_mode(self):
        snap = electric_from_density(make_preset("screened"), lattice(1),
                                     np.zeros(3))
        with pytest.raises(ConfigError, match="lattice"):
            snap.index_of(5)
