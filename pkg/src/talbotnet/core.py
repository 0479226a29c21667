"""Physics kernel: time/frequency grids, pulse trains, temporal phase steps,
and dispersive (quadratic spectral phase) propagation.

All fields are complex envelopes sampled on a uniform time grid of
``num_periods`` pulse-repetition periods, ``samples_per_period`` points each.
Propagation uses the DFT, so the grid is circular; callers keep enough
zero-amplitude padding periods around their signal to make wraparound
negligible (see :func:`wraparound_leakage`).

Every operation is a pure function of its inputs and never mutates a field.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as _sfft

TWO_PI = 2.0 * math.pi
SPEED_OF_LIGHT = 299792458.0  # m/s


class ValidationError(ValueError):
    """An operation input violates a documented precondition."""


class PulseTruncationWarning(UserWarning):
    """The pulse is so wide that its truncated tails carry non-negligible energy."""


# ---------------------------------------------------------------------------
# Grids and value types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid of ``num_periods`` repetition periods.

    ``period`` is stored; the sample spacing ``dt = period / samples_per_period``
    is derived, so ``dt * samples_per_period == period`` holds exactly.
    """

    period: float             # pulse repetition period T (s)
    samples_per_period: int   # points per period (even, >= 8)
    num_periods: int

    @property
    def dt(self) -> float:
        return self.period / self.samples_per_period

    @property
    def total_samples(self) -> int:
        return self.samples_per_period * self.num_periods

    def time_axis(self) -> np.ndarray:
        """t_n = n * dt, n = 0 .. N-1 (s)."""
        return np.arange(self.total_samples) * self.dt

    def freq_axis(self) -> np.ndarray:
        """Centered angular frequencies, monotonic from -pi/dt up to the
        single Nyquist bin (rad/s); bin spacing 2*pi/(N*dt)."""
        n = self.total_samples
        dw = TWO_PI / (n * self.dt)
        return (np.arange(n) - n // 2) * dw

    def freq_axis_fft_order(self) -> np.ndarray:
        """Same bins as :meth:`freq_axis` but in DFT storage order."""
        return np.fft.ifftshift(self.freq_axis())


def make_grid(f_rep: float, samples_per_period: int, num_periods: int) -> TimeGrid:
    """Build the grid for a pulse train of repetition rate ``f_rep`` (Hz)."""
    if not f_rep > 0:
        raise ValidationError(f"f_rep must be positive, got {f_rep}")
    if samples_per_period < 8 or samples_per_period % 2 != 0:
        raise ValidationError(
            f"samples_per_period must be an even integer >= 8, got {samples_per_period}")
    if num_periods < 1:
        raise ValidationError(f"num_periods must be >= 1, got {num_periods}")
    return TimeGrid(period=1.0 / f_rep,
                    samples_per_period=int(samples_per_period),
                    num_periods=int(num_periods))


@dataclass(frozen=True)
class PulseShape:
    """Gaussian envelope exp(-(t - T/2)^2 / (2 c_lw^2)) with constant phase phi0.

    The amplitude is truncated to zero outside |t| <= T around each pulse's
    own period, so one pulse never reaches past its nearest neighbours.
    """

    c_lw: float          # temporal-linewidth parameter (s)
    phi0: float = 0.0    # constant initial phase (rad)

    def __post_init__(self):
        if not self.c_lw > 0:
            raise ValidationError(f"c_lw must be positive, got {self.c_lw}")


def default_pulse_shape(period: float) -> PulseShape:
    """Default width: 1/e amplitude half-width is 5% of the period."""
    return PulseShape(c_lw=period / 20.0)


@dataclass
class ComplexField:
    """Complex optical envelope sampled on a :class:`TimeGrid`."""

    grid: TimeGrid
    samples: np.ndarray   # complex128, shape (grid.total_samples,)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        if self.samples.shape != (self.grid.total_samples,):
            raise ValidationError(
                f"field has {self.samples.shape} samples, grid expects "
                f"({self.grid.total_samples},)")
        if not np.all(np.isfinite(self.samples)):
            raise ValidationError("field contains non-finite samples")

    def intensity(self) -> np.ndarray:
        """|E|^2, computed as re^2 + im^2."""
        return self.samples.real ** 2 + self.samples.imag ** 2


@dataclass(frozen=True)
class GddValue:
    """Signed total group-delay dispersion phi2 (s^2/rad).

    The sign selects normal vs anomalous dispersion; the spectral transfer
    function applied is exp(j * phi2 * w^2 / 2).
    """

    phi2: float

    def __post_init__(self):
        if not math.isfinite(self.phi2):
            raise ValidationError(f"phi2 must be finite, got {self.phi2}")


def talbot_gdd(f_rep: float, s: int, sign: int = 1) -> GddValue:
    """Dispersion of the s-th integer self-imaging condition: |phi2| = s/(2*pi*f_rep^2)."""
    if not f_rep > 0:
        raise ValidationError(f"f_rep must be positive, got {f_rep}")
    if int(s) != s or s < 1:
        raise ValidationError(f"self-imaging order s must be a positive integer, got {s}")
    if sign not in (1, -1):
        raise ValidationError(f"sign must be +1 or -1, got {sign}")
    return GddValue(phi2=sign * s / (TWO_PI * f_rep ** 2))


def gdd_to_ps_per_nm(gdd: GddValue, wavelength: float) -> float:
    """Engineering-units dispersion D*L in ps/nm at the given carrier wavelength (m).

    D*L = -(2*pi*c / lambda^2) * phi2.
    """
    if not wavelength > 0:
        raise ValidationError(f"wavelength must be positive, got {wavelength}")
    d_l = -(TWO_PI * SPEED_OF_LIGHT / wavelength ** 2) * gdd.phi2  # s/m
    return d_l * 1e3  # (1e12 ps/s) / (1e9 nm/m)


# ---------------------------------------------------------------------------
# Pulse-train synthesis and object encoding
# ---------------------------------------------------------------------------

def _pulse_window(grid: TimeGrid, shape: PulseShape) -> np.ndarray:
    """One truncated pulse sampled on tau in [-T, T): peak at tau = T/2."""
    n = grid.samples_per_period
    tau = (np.arange(2 * n) - n) * grid.dt
    amp = np.exp(-((tau - 0.5 * grid.period) ** 2) / (2.0 * shape.c_lw ** 2))
    amp[np.abs(tau) > grid.period] = 0.0
    return amp


def truncated_energy_fraction(grid: TimeGrid, shape: PulseShape) -> float:
    """Fraction of a single pulse's energy lost to the |t| <= T truncation."""
    t_half = grid.period
    c = shape.c_lw
    # integral of exp(-(t - T/2)^2 / c^2) over [-T, T], relative to the full line
    kept = 0.5 * (math.erf(0.5 * t_half / c) + math.erf(1.5 * t_half / c))
    return max(0.0, 1.0 - kept)


def _warn_if_clipped(grid: TimeGrid, shape: PulseShape) -> None:
    frac = truncated_energy_fraction(grid, shape)
    if frac > 1e-6:
        warnings.warn(
            f"pulse truncation clips {frac:.3e} of the single-pulse energy; "
            f"reduce c_lw (= {shape.c_lw:.3e} s) relative to the period",
            PulseTruncationWarning, stacklevel=2)


def synth_pulse_train(grid: TimeGrid, shape: PulseShape) -> ComplexField:
    """Pulse train E(t) = sum_i E_p(t - i T) * exp(-j phi0), one pulse per period.

    Peaks sit at t = i*T + T/2, i.e. sample index N_pp/2 within each period.
    """
    _warn_if_clipped(grid, shape)
    n = grid.samples_per_period
    p = grid.num_periods
    win = _pulse_window(grid, shape)
    # each pulse's tau in [0, T) lands in its own period; the tau in [-T, 0)
    # tail of pulse i+1 lands in period i (pulse 0's tail falls off the grid)
    out = np.tile(win[n:], p).astype(np.complex128)
    if p > 1:
        out[: (p - 1) * n] += np.tile(win[:n], p - 1)
    out *= np.exp(-1j * shape.phi0)
    return ComplexField(grid=grid, samples=out)


def synth_single_pulse(grid: TimeGrid, shape: PulseShape, period_index: int) -> ComplexField:
    """A single unit pulse occupying period ``period_index`` (peak at (i + 1/2) T)."""
    if not 0 <= period_index < grid.num_periods:
        raise ValidationError(
            f"period_index {period_index} outside grid of {grid.num_periods} periods")
    _warn_if_clipped(grid, shape)
    n = grid.samples_per_period
    win = _pulse_window(grid, shape) * np.exp(-1j * shape.phi0)
    out = np.zeros(grid.total_samples, dtype=np.complex128)
    lo = (period_index - 1) * n
    src0 = max(0, -lo)
    hi = min(grid.total_samples, lo + 2 * n)
    out[lo + src0:hi] = win[src0:src0 + (hi - lo - src0)]
    return ComplexField(grid=grid, samples=out)


def sample_object(train: ComplexField, slot_amplitudes) -> ComplexField:
    """Multiply the train by a piecewise-constant, one-value-per-period amplitude."""
    amps = np.asarray(slot_amplitudes, dtype=np.float64)
    grid = train.grid
    if amps.shape != (grid.num_periods,):
        raise ValidationError(
            f"slot_amplitudes has shape {amps.shape}, expected ({grid.num_periods},)")
    if np.any(amps < 0):
        raise ValidationError("slot amplitudes must be non-negative")
    mod = np.repeat(amps, grid.samples_per_period)
    return ComplexField(grid=grid, samples=train.samples * mod)


# ---------------------------------------------------------------------------
# Phase-step modulation
# ---------------------------------------------------------------------------

def level_shift(grid: TimeGrid, levels_per_period: int,
                half_period_offset: bool) -> int:
    """Circular sample shift that places every pulse peak (at mid-period) in
    the middle of a level; the offset flag adds a further half pulse period."""
    if levels_per_period not in (1, 2):
        raise ValidationError(
            f"levels_per_period must be 1 or 2, got {levels_per_period}")
    npp = grid.samples_per_period
    if npp % (2 * levels_per_period) != 0:
        raise ValidationError(
            f"samples_per_period {npp} not divisible by "
            f"{2 * levels_per_period} as the level grid needs")
    size = npp // levels_per_period
    base = (npp // 2 - size // 2) % size
    return base + (npp // 2 if half_period_offset else 0)


def expand_levels(grid: TimeGrid, values: np.ndarray, levels_per_period: int,
                  half_period_offset: bool) -> np.ndarray:
    """Expand per-level values (any dtype) to a per-sample step profile.

    Each level spans T / levels_per_period, aligned so pulse peaks sit at
    level centres; ``half_period_offset`` rotates the profile by half a pulse
    period (for stages whose self-image arrives shifted by T/2).
    """
    shift = level_shift(grid, levels_per_period, half_period_offset)
    n_levels = grid.num_periods * levels_per_period
    if values.shape != (n_levels,):
        raise ValidationError(
            f"step values have shape {values.shape}, expected ({n_levels},)")
    prof = np.repeat(values, grid.samples_per_period // levels_per_period)
    if shift:
        prof = np.roll(prof, shift)
    return prof


def step_profile(grid: TimeGrid, step_values, levels_per_period: int,
                 half_period_offset: bool) -> np.ndarray:
    """Per-sample piecewise-constant profile from real per-level values."""
    values = np.asarray(step_values, dtype=np.float64)
    return expand_levels(grid, values, levels_per_period, half_period_offset)


def apply_phase_steps(field: ComplexField, step_values, levels_per_period: int = 1,
                      half_period_offset: bool = False) -> ComplexField:
    """Apply E -> E * exp(-j phi(t)) with phi(t) a per-level step profile."""
    prof = step_profile(field.grid, step_values, levels_per_period, half_period_offset)
    return ComplexField(grid=field.grid, samples=field.samples * np.exp(-1j * prof))


# ---------------------------------------------------------------------------
# Dispersive propagation
# ---------------------------------------------------------------------------

def transfer_function(grid: TimeGrid, gdd: GddValue) -> np.ndarray:
    """H(w) = exp(j * phi2 * w^2 / 2) over the grid's bins, in DFT storage order."""
    w = grid.freq_axis_fft_order()
    return np.exp(0.5j * gdd.phi2 * w * w)


def disperse_samples(samples: np.ndarray, transfer: np.ndarray) -> np.ndarray:
    """ifft(H * fft(x)) along the last axis; broadcasts over leading axes."""
    return _sfft.ifft(transfer * _sfft.fft(samples, axis=-1), axis=-1)


def propagate_gdd(field: ComplexField, gdd: GddValue) -> ComplexField:
    """Propagate through a purely dispersive medium (unitary, energy preserving)."""
    out = disperse_samples(field.samples, transfer_function(field.grid, gdd))
    return ComplexField(grid=field.grid, samples=out)


def propagate_gdd_sign_trick(field: ComplexField, gdd: GddValue) -> ComplexField:
    """Equivalent dispersion using the alternating-sign time-domain construction.

    Inverting every other time sample circularly shifts the raw DFT spectrum
    by half the band, so the transfer evaluated on a monotonic centered axis
    by raw bin index matches what :func:`propagate_gdd` does with a genuinely
    centered axis. Kept as a tested equivalence, not used in the hot path.
    """
    grid = field.grid
    n = grid.total_samples
    flip = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    w = (np.arange(n) - n // 2) * (TWO_PI / (n * grid.dt))
    h_raw = np.exp(0.5j * gdd.phi2 * w * w)
    out = flip * _sfft.ifft(h_raw * _sfft.fft(flip * field.samples))
    return ComplexField(grid=grid, samples=out)


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------

def energy(f: ComplexField) -> float:
    """Total energy sum(|E_n|^2) * dt."""
    return float(np.sum(f.intensity()) * f.grid.dt)


def wraparound_leakage(f: ComplexField) -> float:
    """Fraction of total energy sitting in the outermost (first + last) periods.

    Circular propagation wraps anything that reaches the grid edge, so a
    non-negligible value means the zero-padding is too short for the
    dispersion in use.
    """
    n = f.grid.samples_per_period
    inten = f.intensity()
    total = float(np.sum(inten))
    if total == 0.0:
        return 0.0
    edges = float(np.sum(inten[:n]) + np.sum(inten[-n:]))
    if f.grid.num_periods == 1:
        edges = total
    return edges / total
