"""Nonlinear elliptic coupling between density and potential on the k-lattice.

The density equals a prescribed slice minus the coupling series applied to
the screened potential.  :func:`poisson_fixed_point` resolves that balance by
Picard iteration inside a weighted amplitude ball, :func:`h_of_field`
evaluates the series by repeated anti-aliased spectral convolution, and
:func:`electric_from_density` recovers potential and electric field.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .errors import ConfigError, DivergenceError, NoContractionError, WeightOverflowError
from .gevrey import GevreyWeight, log_weight_A
from .model import ModelConfig

__all__ = [
    "FieldSnapshot",
    "HSeriesSlice",
    "spectral_convolve",
    "weighted_density_norm",
    "h_of_field",
    "electric_from_density",
    "poisson_fixed_point",
]

MEAN_MODE_TOL = 1e-10
# fraction of the series radius at which evaluation is refused
RADIUS_MARGIN = 0.9


def _frozen(values, dtype) -> np.ndarray:
    out = np.array(values, dtype=dtype)
    out.setflags(write=False)
    return out


def _validate_lattice(k_values) -> np.ndarray:
    k_raw = np.asarray(k_values)
    k_int = np.asarray(np.rint(k_raw), dtype=int)
    if k_raw.ndim != 1 or np.max(np.abs(k_raw - k_int), initial=0.0) > 0:
        raise ConfigError("mode labels must be a 1-d integer array")
    if np.unique(k_int).size != k_int.size:
        raise ConfigError("mode labels must be distinct")
    return k_int


@dataclasses.dataclass(frozen=True, eq=False)
class FieldSnapshot:
    """Potential, electric field, and density of one time slice.

    ``u_hat[j]`` is the potential coefficient of mode ``k_values[j]``;
    ``e_hat`` is its spectral gradient with flipped sign.  ``residual`` is
    the weighted fixed-point defect at exit and ``iters`` the number of map
    applications (both zero for directly constructed snapshots).  ``ratios``
    holds the successive contraction quotients observed by the solver.
    """

    k_values: np.ndarray
    u_hat: np.ndarray
    e_hat: np.ndarray
    rho_hat: np.ndarray
    residual: float = 0.0
    iters: int = 0
    ratios: tuple = ()

    def __post_init__(self) -> None:
        k_int = _validate_lattice(self.k_values)
        object.__setattr__(self, "k_values", _frozen(k_int, int))
        for name in ("u_hat", "e_hat", "rho_hat"):
            arr = np.asarray(getattr(self, name))
            if arr.shape != k_int.shape:
                raise ConfigError(f"{name} must match the mode lattice shape")
            object.__setattr__(self, name, _frozen(arr, complex))

    def index_of(self, k: int) -> int:
        hits = np.nonzero(self.k_values == k)[0]
        if hits.size == 0:
            raise ConfigError(f"mode k={k} is not on the lattice")
        return int(hits[0])

    def reality_defect(self) -> float:
        worst = 0.0
        for arr in (self.u_hat, self.e_hat, self.rho_hat):
            for j, k in enumerate(self.k_values):
                if k < 0 or -k not in self.k_values:
                    continue
                mirror = np.nonzero(self.k_values == -int(k))[0][0]
                worst = max(worst, abs(arr[mirror] - np.conj(arr[j])))
        return worst


@dataclasses.dataclass(frozen=True)
class HSeriesSlice:
    """Coupling series of a potential slice plus its truncation remainder."""

    values: np.ndarray
    tail_bound: float


def spectral_convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Coefficient convolution of two slices on the same symmetric lattice.

    The product's support is twice as wide; modes outside the input lattice
    are dropped.  A transform at doubled length keeps the circular wrap away
    from the retained window.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape or a.ndim != 1 or a.size % 2 == 0:
        raise ConfigError("convolution needs two equal odd-length mode slices")
    n = a.size
    half = n // 2
    fa = np.fft.fft(a, 2 * n)
    fb = np.fft.fft(b, 2 * n)
    full = np.fft.ifft(fa * fb)[: 2 * n - 1]
    return full[half:half + n]


def weighted_density_norm(w: GevreyWeight, t: float, k_values,
                          values) -> float:
    """Amplitude of one density slice under the time-t Gevrey weight."""
    k = np.asarray(_validate_lattice(k_values), dtype=float)
    vals = np.asarray(values, dtype=complex)
    if vals.shape != k.shape:
        raise ConfigError("values must match the mode lattice shape")
    weights = np.exp(log_weight_A(w, t, k, k * t))
    total = float(np.sqrt(np.sum((weights * np.abs(vals)) ** 2)))
    if not math.isfinite(total):
        raise WeightOverflowError(
            "weighted slice norm overflowed; reduce lambda_inf or sigma")
    return total


def h_of_field(model: ModelConfig, k_values, u_hat,
               n_h: int | None = None) -> HSeriesSlice:
    """Evaluate the coupling series of a potential slice mode by mode.

    Powers of the slice are built by repeated :func:`spectral_convolve`, so
    every term lives on the truncated lattice.  The reported tail combines
    the dropped polynomial terms with the model's own series remainder,
    both evaluated at the slice's l1 amplitude (a sup-norm bound).
    """
    k_int = _validate_lattice(k_values)
    u = np.asarray(u_hat, dtype=complex)
    if u.shape != k_int.shape:
        raise ConfigError("u_hat must match the mode lattice shape")
    out = np.zeros_like(u)
    if not model.has_h:
        return HSeriesSlice(values=out, tail_bound=0.0)
    coeffs = np.asarray(model.h_coeffs, dtype=float)
    max_degree = coeffs.size - 1
    if n_h is None:
        n_h = max_degree
    if n_h < 2:
        raise ConfigError("series truncation must keep at least the quadratic term")
    amplitude = float(np.sum(np.abs(u)))
    if math.isfinite(model.h_radius) and amplitude >= RADIUS_MARGIN * model.h_radius:
        raise DivergenceError(
            f"slice amplitude {amplitude:.3e} reaches the margin of the "
            f"series radius {model.h_radius:.3e}")
    top = min(n_h, max_degree)
    power = u.copy()
    for degree in range(2, top + 1):
        power = spectral_convolve(power, u)
        if coeffs[degree] != 0.0:
            out = out + coeffs[degree] * power
    tail = float(model.h_tail_bound(amplitude))
    for degree in range(top + 1, max_degree + 1):
        tail += abs(coeffs[degree]) * amplitude**degree
    return HSeriesSlice(values=out, tail_bound=tail)


def electric_from_density(model: ModelConfig, k_values,
                          rho_hat) -> FieldSnapshot:
    """Potential and electric field of a density slice.

    The potential divides each mode by beta + k^2 with a silent mean (the
    potential is fixed up to a constant and the mean gauge is zero); the
    field is the spectral derivative with flipped sign.
    """
    k_int = _validate_lattice(k_values)
    rho = np.asarray(rho_hat, dtype=complex)
    if rho.shape != k_int.shape:
        raise ConfigError("rho_hat must match the mode lattice shape")
    if model.beta == 0.0:
        zero = np.nonzero(k_int == 0)[0]
        if zero.size and abs(rho[zero[0]]) > MEAN_MODE_TOL:
            raise ConfigError(
                "mean density component makes the beta = 0 potential ill-posed")
    denom = model.beta + k_int.astype(float) ** 2
    u_hat = np.where(k_int == 0, 0.0j, rho / np.where(denom == 0.0, 1.0, denom))
    e_hat = -1j * k_int * u_hat
    return FieldSnapshot(k_values=k_int, u_hat=u_hat, e_hat=e_hat, rho_hat=rho)


def poisson_fixed_point(model: ModelConfig, k_values, q_hat, w: GevreyWeight,
                        t: float, tol: float = 1e-12, max_iters: int = 50,
                        eps_ball: float | None = None,
                        n_h: int | None = None) -> FieldSnapshot:
    """Resolve density = slice - series(potential) by Picard iteration.

    Starts from the slice itself and reapplies the map until the weighted
    distance between successive iterates drops to ``tol``.  The input
    amplitude must clear the smallness gate ``eps_ball`` (for models with a
    finite series radius the default is five percent of it), and every
    iterate must stay inside the ball of twice the input amplitude; leaving
    it, or exhausting ``max_iters``, aborts rather than returning a value
    outside the contraction regime.
    """
    k_int = _validate_lattice(k_values)
    q = np.asarray(q_hat, dtype=complex)
    if q.shape != k_int.shape:
        raise ConfigError("q_hat must match the mode lattice shape")
    if tol <= 0.0 or max_iters < 1:
        raise ConfigError("need tol > 0 and at least one iteration")
    if not model.has_h:
        # the balance is linear: the slice itself is the density
        snap = electric_from_density(model, k_int, q)
        return FieldSnapshot(k_values=k_int, u_hat=snap.u_hat, e_hat=snap.e_hat,
                             rho_hat=q, residual=0.0, iters=1, ratios=())
    if eps_ball is None:
        eps_ball = 0.05 * model.h_radius if math.isfinite(model.h_radius) else 0.05
    eps = weighted_density_norm(w, t, k_int, q)
    if eps > eps_ball:
        raise NoContractionError(
            f"weighted slice amplitude {eps:.3e} exceeds the smallness gate "
            f"{eps_ball:.3e}; the perturbative regime does not apply")
    ball = 2.0 * eps
    rho = q.copy()
    ratios: list[float] = []
    prev_dist = None
    residual = 0.0
    for itn in range(1, max_iters + 1):
        u_hat = electric_from_density(model, k_int, rho).u_hat
        series = h_of_field(model, k_int, u_hat, n_h=n_h)
        nxt = q - series.values
        dist = weighted_density_norm(w, t, k_int, nxt - rho)
        if prev_dist is not None and prev_dist > 0.0:
            ratios.append(dist / prev_dist)
        prev_dist = dist
        rho = nxt
        if weighted_density_norm(w, t, k_int, rho) > ball and eps > 0.0:
            raise NoContractionError(
                f"iterate left the contraction ball of radius {ball:.3e} "
                f"after {itn} steps")
        if dist <= tol:
            residual = dist
            snap = electric_from_density(model, k_int, rho)
            return FieldSnapshot(k_values=k_int, u_hat=snap.u_hat,
                                 e_hat=snap.e_hat, rho_hat=rho,
                                 residual=residual, iters=itn,
                                 ratios=tuple(ratios))
    raise NoContractionError(
        f"no convergence to {tol:.1e} within {max_iters} iterations; "
        f"last step moved {prev_dist:.3e}")
