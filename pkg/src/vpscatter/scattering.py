"""Fixed-point construction of solutions with a prescribed late-time profile.

The driver iterates a linearizing map: given the previous iterate, it slices
out that iterate's density and potential, assembles the backward source,
reconstructs the new density through the resolvent route, and transports the
asymptotic datum backward with the new field in the linear term and the old
field in the shear term.  Contraction is measured between consecutive
iterates in a norm whose regularity radius is scaled to 0.9 of the working
one; the working radius keeps enough margin that the map stays a contraction
there.  The converged trajectory yields the t = 0 state (the wave-operator
image of the datum), the weighted electric-field decay series, and a forward
round-trip check that re-runs the self-consistent dynamics from t = 0 and
compares against the datum in physical space.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigError, DivergenceError, NoContractionError
from .model import Equilibrium, ModelConfig
from .gevrey import (GevreyWeight, WeightedNormReport, bracket, lambda_of_t,
                     n1_at_time, norm_N2, weighted_norm_report)
from .fitting import DecayFit, peak_decay_fit, stretched_exponential_fit
from .volterra import (DensityHistory, DiscreteResolvent, SourceHistory,
                       SpectralHistory, build_discrete_resolvent,
                       solve_resolvent)
from .field import poisson_fixed_point
from .kinetic import (AsymptoticDatum, HistoryFieldProvider, IntegrationResult,
                      PhaseGrid, SelfConsistentFieldProvider, SpectralState,
                      TimeGrid, TruncationCounter, assemble_source_history,
                      density_trace, gaussian_datum, integrate)

__all__ = [
    "RunGrids",
    "MapResult",
    "IterateRecord",
    "ScatteringRun",
    "RoundTripReport",
    "LinearDecayReport",
    "free_extension",
    "build_resolvent_tables",
    "apply_map_F",
    "iterate_distance",
    "fixed_point_drive",
    "efield_weighted_norms",
    "state_to_physical",
    "roundtrip_check",
    "landau_linear_run",
]

# radius reduction used for the contraction metric and the field-decay weight
RADIUS_REDUCTION = 0.9
# ball radius for accepted iterates, in units of the starting profile norm
BALL_FACTOR = 10.0


@dataclasses.dataclass(frozen=True)
class RunGrids:
    """Phase lattice plus time grid for one construction run."""

    phase: PhaseGrid
    time: TimeGrid

    def validate_for(self, datum: AsymptoticDatum) -> None:
        self.phase.validate_horizon(self.time.t_final, datum.width)


@dataclasses.dataclass(frozen=True)
class MapResult:
    """One application of the construction map.

    ``states`` is the new iterate (ascending time), ``density`` and
    ``potentials`` its reconstructed density and potential histories,
    ``source`` the assembled backward source, ``report`` the weighted norms
    of the new iterate, and ``integration`` the raw transport diagnostics.
    """

    states: tuple
    density: DensityHistory
    potentials: SpectralHistory
    source: SourceHistory
    report: WeightedNormReport
    integration: IntegrationResult


@dataclasses.dataclass(frozen=True)
class IterateRecord:
    """Per-iterate diagnostics retained by the driver.

    Full state histories are dropped once the next iterate is formed; a run
    at desk scale would otherwise hold hundreds of megabytes of spectra.
    """

    density: DensityHistory
    report: WeightedNormReport


@dataclasses.dataclass(frozen=True)
class ScatteringRun:
    """Outcome of the fixed-point drive."""

    datum: AsymptoticDatum
    iterates: tuple
    distances: tuple
    contraction_ratios: tuple
    g0: SpectralState
    states: tuple
    potentials: SpectralHistory
    efield_decay: tuple
    converged: bool
    decay_fit: Optional[DecayFit]
    ball_bound: float
    tolerance: float

    @property
    def fitted_decay(self) -> Optional[tuple[float, float]]:
        """(amplitude, rate) of the stretched-exponential envelope fit."""
        if self.decay_fit is None:
            return None
        return math.exp(self.decay_fit.log_amplitude), self.decay_fit.rate


@dataclasses.dataclass(frozen=True)
class RoundTripReport:
    """Forward re-simulation from the constructed t = 0 state.

    ``profile_errors[i]`` is the physical-space sup distance between the
    transported perturbation at ``times[i]`` and the target profile;
    ``sup_error`` is its value at the horizon.  ``richardson_dt`` and
    ``richardson_eta`` estimate the forward discretization error per axis by
    comparing against half-resolution runs (0 when skipped);
    ``richardson_estimate`` is their sum.
    """

    sup_error: float
    times: np.ndarray
    profile_errors: np.ndarray
    richardson_dt: float
    richardson_eta: float
    forward: IntegrationResult

    @property
    def richardson_estimate(self) -> float:
        return self.richardson_dt + self.richardson_eta


@dataclasses.dataclass(frozen=True)
class LinearDecayReport:
    """Forward small-amplitude run with the envelope fit of one field mode."""

    mode: int
    times: np.ndarray
    field_abs: np.ndarray
    fit: DecayFit
    integration: IntegrationResult


def free_extension(ginf: AsymptoticDatum, grids: RunGrids) -> tuple:
    """Starting iterate: the datum held fixed at every grid time."""
    return tuple(ginf.sample(grids.phase, float(t)) for t in grids.time.times)


def build_resolvent_tables(model: ModelConfig, eq: Equilibrium,
                           grids: RunGrids) -> dict[int, DiscreteResolvent]:
    """Discrete resolvent tables for every nonzero lattice mode."""
    tg = grids.time
    return {int(k): build_discrete_resolvent(model, eq, int(k), tg.dt, tg.n_steps)
            for k in grids.phase.k_values if k != 0}


def _zero_history(times: np.ndarray, k_values: np.ndarray) -> SpectralHistory:
    return SpectralHistory(times, k_values,
                           np.zeros((times.size, k_values.size), dtype=complex))


def _slice_fields(model: ModelConfig, states: Sequence[SpectralState],
                  w: GevreyWeight, tol: float, max_iters: int,
                  eps_ball: Optional[float], n_h: Optional[int],
                  counter: Optional[TruncationCounter],
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Per-slice density and potential of an iterate via the elliptic balance."""
    k = states[0].grid.k_values
    rho = np.zeros((len(states), k.size), dtype=complex)
    u = np.zeros_like(rho)
    for i, state in enumerate(states):
        q = density_trace(state, counter)
        snap = poisson_fixed_point(model, k, q, w, state.time, tol=tol,
                                   max_iters=max_iters, eps_ball=eps_ball,
                                   n_h=n_h)
        rho[i] = snap.rho_hat
        u[i] = snap.u_hat
    return rho, u


def apply_map_F(phi_states: Sequence[SpectralState], ginf: AsymptoticDatum,
                model: ModelConfig, eq: Equilibrium, w: GevreyWeight,
                grids: RunGrids, *, tables: Optional[Mapping[int, object]] = None,
                linearized: bool = False, ball_n1: Optional[float] = None,
                poisson_tol: float = 1e-12, poisson_iters: int = 50,
                eps_ball: Optional[float] = None, n_h: Optional[int] = None,
                counter: Optional[TruncationCounter] = None) -> MapResult:
    """One pass of the construction map: previous iterate in, new iterate out.

    Five stages: slice the incoming iterate's density and potential, assemble
    the backward source, reconstruct the new density through the resolvent
    tables, form its potential, then transport the datum backward from the
    horizon with the new field driving the equilibrium gradient and the old
    field driving the shear term.  With ``linearized`` the incoming fields
    are replaced by zero, so the output is exactly linear in the datum.

    ``ball_n1`` is an optional acceptance bound: a new iterate whose sup-in-
    time distribution norm exceeds it aborts with a no-contraction error, the
    executable sign that the datum amplitude is too large.
    """
    grid, tg = grids.phase, grids.time
    times = tg.times
    if len(phi_states) != times.size:
        raise ConfigError(f"iterate holds {len(phi_states)} states, "
                          f"the time grid has {times.size}")
    if counter is None:
        counter = TruncationCounter()
    k = grid.k_values
    if linearized:
        rho_phi = np.zeros((times.size, k.size), dtype=complex)
        u_phi = np.zeros_like(rho_phi)
    else:
        rho_phi, u_phi = _slice_fields(model, phi_states, w, poisson_tol,
                                       poisson_iters, eps_ball, n_h, counter)
    rho_hist = DensityHistory(times, k, rho_phi)
    u_hist = SpectralHistory(times, k, u_phi)
    source = assemble_source_history(model, phi_states, rho_hist, u_hist,
                                     ginf, n_h=n_h, counter=counter)
    if tables is None:
        tables = build_resolvent_tables(model, eq, grids)
    density = solve_resolvent(model, eq, source, tables)
    # the new potential responds linearly; the series correction lives in the
    # source term of the next pass
    screened = np.where(k == 0, 1.0, model.beta + k.astype(float) ** 2)
    u_psi = np.where(k[None, :] == 0, 0.0j, density.values / screened[None, :])
    u_psi_hist = SpectralHistory(times, k, u_psi)
    shear_hist = _zero_history(times, k) if linearized else u_hist
    provider = HistoryFieldProvider(model, u_psi_hist, shear_hist)
    terminal = ginf.sample(grid, tg.t_final)
    integration = integrate(terminal, provider, tg, eq, direction="backward",
                            counter=counter)
    report = weighted_norm_report(integration.states, density, w)
    if ball_n1 is not None and report.n1 > ball_n1:
        raise NoContractionError(
            f"new iterate left the acceptance ball: N1 = {report.n1:.6e} "
            f"exceeds {ball_n1:.6e}; shrink the datum amplitude, or run the "
            f"boundary stability scan: an unstable background amplifies the "
            f"response past any ball regardless of amplitude")
    return MapResult(states=integration.states, density=density,
                     potentials=u_psi_hist, source=source, report=report,
                     integration=integration)


def iterate_distance(states_a: Sequence[SpectralState],
                     states_b: Sequence[SpectralState],
                     density_a: DensityHistory, density_b: DensityHistory,
                     w: GevreyWeight) -> float:
    """Combined norm of the difference between two iterates.

    Sup over times of the weighted distribution norm of the state difference
    plus the time-integrated norm of the density difference, both in ``w``.
    """
    if len(states_a) != len(states_b):
        raise ConfigError("iterates hold different numbers of states")
    grid = states_a[0].grid
    n1 = 0.0
    for sa, sb in zip(states_a, states_b):
        diff = SpectralState(sa.time, grid, sa.values - sb.values)
        n1 = max(n1, n1_at_time(diff, w))
    diff_density = DensityHistory(density_a.times, density_a.k_values,
                                  density_a.values - density_b.values)
    return n1 + norm_N2(diff_density, w)


def efield_weighted_norms(w: GevreyWeight, potentials: SpectralHistory,
                          lam_bar: Optional[float] = None,
                          ) -> tuple[np.ndarray, np.ndarray]:
    """Weighted electric-field norms along the density line, per grid time.

    The weight uses a constant regularity radius, by default 0.9 of the
    working radius at t = 0 so it stays below the time-dependent one.
    """
    if lam_bar is None:
        lam_bar = RADIUS_REDUCTION * lambda_of_t(w, 0.0)
    times = potentials.times
    k = potentials.k_values.astype(float)
    e_hat = -1j * k[None, :] * potentials.values
    br = bracket(k[None, :], k[None, :] * times[:, None])
    log_w = lam_bar * br ** w.gamma + w.sigma * np.log(br)
    weighted = np.exp(log_w) * np.abs(e_hat)
    return times.copy(), np.sqrt(np.sum(weighted * weighted, axis=1))


def fixed_point_drive(ginf: AsymptoticDatum, model: ModelConfig,
                      eq: Equilibrium, w: GevreyWeight, grids: RunGrids,
                      tol: float = 1e-9, max_iters: int = 25, *,
                      initial_states: Optional[Sequence[SpectralState]] = None,
                      tables: Optional[Mapping[int, object]] = None,
                      lam_bar: Optional[float] = None,
                      fit_window: Optional[tuple[float, float]] = None,
                      poisson_tol: float = 1e-12, poisson_iters: int = 50,
                      eps_ball: Optional[float] = None,
                      n_h: Optional[int] = None,
                      counter: Optional[TruncationCounter] = None,
                      ) -> ScatteringRun:
    """Iterate the construction map until consecutive iterates agree.

    Starts from the free extension of the datum (or ``initial_states``),
    measures the distance between consecutive iterates in the radius-reduced
    norm, and stops once it falls to ``tol``.  Three consecutive distance
    ratios at or above one abort with a divergence error.  Accepted iterates
    must keep their distribution norm within ``BALL_FACTOR`` times the
    starting profile's.

    The returned run carries per-iterate densities and norm reports, the
    converged trajectory and its t = 0 state, the weighted field-decay
    series of the last iterate, and a stretched-exponential envelope fit
    over ``fit_window`` (default the middle half of the horizon).
    """
    grids.validate_for(ginf)
    if max_iters < 1:
        raise ConfigError("max_iters must be at least 1")
    if counter is None:
        counter = TruncationCounter()
    if tables is None:
        tables = build_resolvent_tables(model, eq, grids)
    times = grids.time.times
    k = grids.phase.k_values
    free0 = free_extension(ginf, grids)
    if initial_states is None:
        start_states = free0
    else:
        start_states = tuple(initial_states)
        if len(start_states) != times.size:
            raise ConfigError("initial iterate does not match the time grid")
    rho0, _ = _slice_fields(model, start_states, w, poisson_tol,
                            poisson_iters, eps_ball, n_h, counter)
    density0 = DensityHistory(times, k, rho0)
    report0 = weighted_norm_report(start_states, density0, w)
    if initial_states is None:
        ball = BALL_FACTOR * report0.n_total
    else:
        # the acceptance ball is anchored to the datum, not to the start
        fr_rho, _ = _slice_fields(model, free0, w, poisson_tol, poisson_iters,
                                  eps_ball, n_h, counter)
        fr_report = weighted_norm_report(
            free0, DensityHistory(times, k, fr_rho), w)
        ball = BALL_FACTOR * fr_report.n_total
    records = [IterateRecord(density=density0, report=report0)]
    w_dist = w.scaled(RADIUS_REDUCTION)
    distances: list[float] = []
    ratios: list[float] = []
    bad_streak = 0
    converged = False
    prev_states, prev_density = start_states, density0
    last: Optional[MapResult] = None
    for _ in range(max_iters):
        result = apply_map_F(prev_states, ginf, model, eq, w, grids,
                             tables=tables, ball_n1=ball,
                             poisson_tol=poisson_tol,
                             poisson_iters=poisson_iters, eps_ball=eps_ball,
                             n_h=n_h, counter=counter)
        dist = iterate_distance(result.states, prev_states, result.density,
                                prev_density, w_dist)
        distances.append(dist)
        if len(distances) >= 2:
            prev_dist = distances[-2]
            ratio = dist / prev_dist if prev_dist > 0 else 0.0
            ratios.append(ratio)
            bad_streak = bad_streak + 1 if ratio >= 1.0 else 0
            if bad_streak >= 3:
                raise DivergenceError(
                    f"no contraction: distance ratio {ratio:.3f} stayed at "
                    f"or above 1 for three consecutive passes; the datum "
                    f"amplitude {ginf.amplitude:.3e} is too large for this "
                    "equilibrium, or the equilibrium fails the stability "
                    "scan")
        records.append(IterateRecord(density=result.density,
                                     report=result.report))
        prev_states, prev_density = result.states, result.density
        last = result
        if dist <= tol:
            converged = True
            break
    e_times, e_norms = efield_weighted_norms(w, last.potentials, lam_bar)
    lo, hi = fit_window if fit_window is not None else (
        0.25 * grids.time.t_final, 0.75 * grids.time.t_final)
    window = (e_times >= lo) & (e_times <= hi)
    decay_fit = None
    if np.count_nonzero(e_norms[window] > 0.0) >= 3:
        decay_fit = stretched_exponential_fit(e_times[window],
                                              e_norms[window], w.gamma)
    return ScatteringRun(datum=ginf, iterates=tuple(records),
                         distances=tuple(distances),
                         contraction_ratios=tuple(ratios),
                         g0=prev_states[0].copy(), states=prev_states,
                         potentials=last.potentials,
                         efield_decay=tuple(zip(e_times.tolist(),
                                                e_norms.tolist())),
                         converged=converged, decay_fit=decay_fit,
                         ball_bound=ball, tolerance=tol)


def state_to_physical(state: SpectralState, n_x: Optional[int] = None,
                      ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Reconstruct the perturbation on a physical (x, v) tensor grid.

    The frequency axis is inverted by a discrete transform onto the conjugate
    velocity grid v in [-pi/delta_eta, pi/delta_eta); the spatial axis is
    summed directly over the mode lattice.  Returns (x, v, values) with
    ``values[j, m]`` the perturbation at ``(x[j], v[m])``.
    """
    grid = state.grid
    if n_x is None:
        n_x = max(8 * grid.k_max, 16)
    eta = grid.eta
    n = eta.size
    v_raw = 2.0 * np.pi * np.fft.fftfreq(n, d=grid.delta_eta)
    # sum_q g_q exp(i v eta_q) = exp(i v eta_0) * (DFT+ of the row)
    rows = n * np.fft.ifft(state.values, axis=1)
    rows *= np.exp(1j * v_raw * eta[0]) * (grid.delta_eta / (2.0 * np.pi))
    order = np.argsort(v_raw)
    v = v_raw[order]
    rows = rows[:, order]
    x = 2.0 * np.pi * np.arange(n_x) / n_x
    phases = np.exp(1j * np.outer(x, grid.k_values.astype(float)))
    return x, v, (phases @ rows).real


def _physical_at(state: SpectralState, x: np.ndarray,
                 v: np.ndarray) -> np.ndarray:
    """Direct (non-FFT) reconstruction at arbitrary velocity points."""
    grid = state.grid
    quad = np.exp(1j * np.outer(v, grid.eta)) * (grid.delta_eta / (2.0 * np.pi))
    rows = state.values @ quad.T
    phases = np.exp(1j * np.outer(x, grid.k_values.astype(float)))
    return (phases @ rows).real


def roundtrip_check(run: ScatteringRun, model: ModelConfig, eq: Equilibrium,
                    w: GevreyWeight, grids: RunGrids, *,
                    poisson_tol: float = 1e-12, poisson_iters: int = 50,
                    eps_ball: Optional[float] = None,
                    n_h: Optional[int] = None, richardson: bool = True,
                    counter: Optional[TruncationCounter] = None,
                    ) -> RoundTripReport:
    """Forward re-simulation of a converged run against its target profile.

    Integrates the t = 0 state forward under the self-consistent field (both
    transport fields wired to the stage state itself) and reports the
    physical-space sup distance to the datum at every time, its value at the
    horizon, and a step-halving estimate of the forward discretization error.
    """
    if not run.converged:
        raise ConfigError("round trip needs a converged run")
    provider = SelfConsistentFieldProvider(model, w, tol=poisson_tol,
                                           max_iters=poisson_iters,
                                           eps_ball=eps_ball, n_h=n_h,
                                           counter=counter)
    forward = integrate(run.g0.copy(), provider, grids.time, eq,
                        direction="forward", counter=counter)
    target = state_to_physical(run.datum.sample(grids.phase, 0.0))[2]
    errors = np.array([
        float(np.max(np.abs(state_to_physical(state)[2] - target)))
        for state in forward.states])
    est_dt = 0.0
    est_eta = 0.0
    if richardson:
        # both comparisons are fourth order: |fine - half-resolution| / (2^4 - 1)
        fine = forward.states[-1]
        if grids.time.n_steps % 2 == 0:
            coarse_grid = TimeGrid(grids.time.t_final, 2.0 * grids.time.dt)
            coarse = integrate(run.g0.copy(), provider, coarse_grid, eq,
                               direction="forward", counter=counter)
            fine_end = state_to_physical(fine)[2]
            coarse_end = state_to_physical(coarse.states[-1])[2]
            est_dt = float(np.max(np.abs(fine_end - coarse_end))) / 15.0
        phase = grids.phase
        if (phase.n_eta - 1) % 4 == 0:
            wide = PhaseGrid(phase.k_max, phase.eta_max, 2.0 * phase.delta_eta)
            start = SpectralState(0.0, wide, run.g0.values[:, ::2].copy())
            sparse = integrate(start, provider, grids.time, eq,
                               direction="forward", counter=counter)
            x = 2.0 * np.pi * np.arange(max(8 * phase.k_max, 16)) / \
                max(8 * phase.k_max, 16)
            _, v, sparse_end = state_to_physical(sparse.states[-1], x.size)
            fine_at = _physical_at(fine, x, v)
            est_eta = float(np.max(np.abs(fine_at - sparse_end))) / 15.0
    return RoundTripReport(sup_error=float(errors[-1]),
                           times=grids.time.times.copy(),
                           profile_errors=errors,
                           richardson_dt=est_dt, richardson_eta=est_eta,
                           forward=forward)


def landau_linear_run(model: ModelConfig, eq: Equilibrium, w: GevreyWeight,
                      grids: RunGrids, amplitude: float, mode: int = 1,
                      fit_window: tuple[float, float] = (5.0, 25.0), *,
                      poisson_tol: float = 1e-12, poisson_iters: int = 50,
                      eps_ball: Optional[float] = None,
                      n_h: Optional[int] = None,
                      counter: Optional[TruncationCounter] = None,
                      ) -> LinearDecayReport:
    """Forward run of a small single-mode datum with a field-envelope fit.

    Starts the self-consistent dynamics from the datum profile at t = 0 and
    fits the exponential envelope of one field mode's magnitude over
    ``fit_window``; in the small-amplitude regime the rate reproduces the
    linear-theory root of the dispersion function.
    """
    datum = gaussian_datum({int(mode): amplitude})
    grids.validate_for(datum)
    provider = SelfConsistentFieldProvider(model, w, tol=poisson_tol,
                                           max_iters=poisson_iters,
                                           eps_ball=eps_ball, n_h=n_h,
                                           counter=counter)
    initial = datum.sample(grids.phase, 0.0)
    result = integrate(initial, provider, grids.time, eq,
                       direction="forward", counter=counter)
    idx = grids.phase.index_of(int(mode))
    field_abs = np.array([abs(provider(state)[0].e_hat[idx])
                          for state in result.states])
    times = grids.time.times
    lo, hi = fit_window
    window = (times >= lo) & (times <= hi)
    fit = peak_decay_fit(times[window], field_abs[window])
    return LinearDecayReport(mode=int(mode), times=times.copy(),
                             field_abs=field_abs, fit=fit,
                             integration=result)
