"""Physics kernel tests: grids, pulse trains, modulation, dispersion."""

import math

import numpy as np
import pytest

from talbotnet.core import (
    ComplexField,
    GddValue,
    PulseShape,
    PulseTruncationWarning,
    ValidationError,
    apply_phase_steps,
    default_pulse_shape,
    energy,
    expand_levels,
    gdd_to_ps_per_nm,
    level_shift,
    make_grid,
    propagate_gdd,
    propagate_gdd_sign_trick,
    sample_object,
    step_profile,
    synth_pulse_train,
    synth_single_pulse,
    talbot_gdd,
    truncated_energy_fraction,
    wraparound_leakage,
)

F_REP = 5e9


def train_31():
    grid = make_grid(F_REP, 1024, 31)
    return grid, synth_pulse_train(grid, default_pulse_shape(grid.period))


# ---------------------------------------------------------------------------
# Grids
# ---------------------------------------------------------------------------

class TestMakeGrid:
    def test_5ghz_analog_grid(self):
        grid = make_grid(F_REP, 1024, 31)
        assert grid.total_samples == 31744
        assert grid.dt == pytest.approx(200e-12 / 1024, rel=1e-15)
        assert grid.dt * grid.samples_per_period == grid.period

    def test_digital_grid(self):
        assert make_grid(F_REP, 1024, 24).total_samples == 24576

    def test_minimal_grid(self):
        grid = make_grid(1.0, 8, 1)
        assert grid.dt == 0.125
        assert grid.total_samples == 8

    def test_freq_axis_centered(self):
        grid = make_grid(F_REP, 64, 3)
        w = grid.freq_axis()
        assert w[0] == pytest.approx(-math.pi / grid.dt)
        # symmetric about zero except the single Nyquist bin
        assert np.allclose(w + w[::-1], w[0] + w[-1])
        assert np.count_nonzero(w == 0.0) == 1
        dw = np.diff(w)
        assert np.allclose(dw, 2 * math.pi / (grid.total_samples * grid.dt))

    @pytest.mark.parametrize("args", [(-1.0, 64, 3), (5e9, 7, 3), (5e9, 4, 3),
                                      (5e9, 64, 0)])
    def test_rejects_bad_arguments(self, args):
        with pytest.raises(ValidationError):
            make_grid(*args)


# ---------------------------------------------------------------------------
# Pulse trains
# ---------------------------------------------------------------------------

class TestPulseTrain:
    def test_zero_phase_is_real_nonnegative(self):
        _, train = train_31()
        assert np.all(train.samples.imag == 0)
        assert np.all(train.samples.real >= 0)

    def test_peak_at_period_center(self):
        grid, train = train_31()
        inten = train.intensity()
        npp = grid.samples_per_period
        for i in range(grid.num_periods):
            seg = inten[i * npp:(i + 1) * npp]
            assert np.argmax(seg) == npp // 2

    def test_train_energy_is_p_times_single_pulse(self):
        # oracle: quadrature of the truncated Gaussian intensity
        grid, train = train_31()
        c = default_pulse_shape(grid.period).c_lw
        t_half = grid.period
        single = 0.5 * c * math.sqrt(math.pi) * (
            math.erf(0.5 * t_half / c) + math.erf(1.5 * t_half / c))
        expect = grid.num_periods * single
        assert energy(train) == pytest.approx(expect, rel=1e-9)

    def test_global_phase_constant(self):
        grid = make_grid(F_REP, 256, 3)
        shape = PulseShape(c_lw=grid.period / 20, phi0=0.7)
        train = synth_pulse_train(grid, shape)
        ref = synth_pulse_train(grid, PulseShape(c_lw=grid.period / 20))
        assert np.allclose(train.samples, ref.samples * np.exp(-0.7j))

    def test_wide_pulse_warns(self):
        grid = make_grid(F_REP, 256, 3)
        with pytest.warns(PulseTruncationWarning):
            synth_pulse_train(grid, PulseShape(c_lw=grid.period))

    def test_truncated_fraction_negligible_at_default_width(self):
        grid = make_grid(F_REP, 256, 3)
        assert truncated_energy_fraction(grid, default_pulse_shape(grid.period)) < 1e-9

    def test_single_pulse_occupies_one_period(self):
        grid = make_grid(F_REP, 256, 5)
        f = synth_single_pulse(grid, default_pulse_shape(grid.period), 2)
        inten = f.intensity()
        npp = grid.samples_per_period
        assert np.argmax(inten) == 2 * npp + npp // 2
        assert inten[:npp].sum() == 0.0

    def test_single_pulse_bad_index(self):
        grid = make_grid(F_REP, 256, 5)
        with pytest.raises(ValidationError):
            synth_single_pulse(grid, default_pulse_shape(grid.period), 5)


# ---------------------------------------------------------------------------
# Object encoding
# ---------------------------------------------------------------------------

class TestSampleObject:
    def test_all_ones_is_identity(self):
        grid, train = train_31()
        out = sample_object(train, np.ones(grid.num_periods))
        assert np.array_equal(out.samples, train.samples)

    def test_alternating_extinction(self):
        grid, train = train_31()
        amps = np.zeros(grid.num_periods)
        amps[::2] = 1.0
        out = sample_object(train, amps)
        inten = out.intensity()
        npp = grid.samples_per_period
        for i in range(1, grid.num_periods, 2):
            assert inten[i * npp:(i + 1) * npp].sum() == 0.0

    def test_one_slot_energy_scales_quadratically(self):
        grid, train = train_31()
        npp = grid.samples_per_period
        amps = np.ones(grid.num_periods)
        amps[10] = 0.5
        out = sample_object(train, amps)
        e_ref = train.intensity()[10 * npp:11 * npp].sum()
        e_mod = out.intensity()[10 * npp:11 * npp].sum()
        assert e_mod == pytest.approx(0.25 * e_ref, rel=1e-12)
        # other slots untouched
        assert out.intensity()[:npp].sum() == pytest.approx(
            train.intensity()[:npp].sum(), rel=1e-12)

    def test_length_mismatch_rejected(self):
        grid, train = train_31()
        with pytest.raises(ValidationError):
            sample_object(train, np.ones(grid.num_periods - 1))
        with pytest.raises(ValidationError):
            sample_object(train, -np.ones(grid.num_periods))


# ---------------------------------------------------------------------------
# Phase steps
# ---------------------------------------------------------------------------

class TestPhaseSteps:
    def test_zero_steps_identity(self):
        grid, train = train_31()
        out = apply_phase_steps(train, np.zeros(grid.num_periods), 1, False)
        assert np.array_equal(out.samples, train.samples)

    def test_intensity_preserved_pointwise(self):
        grid, train = train_31()
        rng = np.random.default_rng(3)
        steps = rng.uniform(0, 2 * math.pi, size=2 * grid.num_periods)
        out = apply_phase_steps(train, steps, 2, True)
        assert np.allclose(np.abs(out.samples), np.abs(train.samples),
                           rtol=0, atol=1e-15)

    def test_constant_step_is_global_phase(self):
        grid, train = train_31()
        c = 1.234
        out = apply_phase_steps(train, np.full(grid.num_periods, c), 1, False)
        assert np.allclose(out.samples, train.samples * np.exp(-1j * c))

    def test_profile_expansion_and_offset(self):
        # spp=8, two levels per period: level size 4, base shift (4-2)%4 = 2,
        # offset adds half a pulse period (4 samples)
        grid = make_grid(F_REP, 8, 2)
        prof = step_profile(grid, [1.0, 2.0, 3.0, 4.0], 2, False)
        assert np.array_equal(prof, np.roll(np.repeat([1.0, 2.0, 3.0, 4.0], 4), 2))
        rolled = step_profile(grid, [1.0, 2.0, 3.0, 4.0], 2, True)
        assert np.array_equal(rolled, np.roll(prof, 4))

    @pytest.mark.parametrize("lpp", [1, 2])
    @pytest.mark.parametrize("offset", [False, True])
    def test_pulse_peaks_sit_mid_level(self, lpp, offset):
        # peaks sit at period midpoints; a layer flagged with the offset sees
        # a train already shifted by half a period, so its levels must centre
        # on those shifted positions instead
        grid = make_grid(F_REP, 16, 3)
        values = np.arange(grid.num_periods * lpp, dtype=float)
        prof = expand_levels(grid, values, lpp, offset)
        size = grid.samples_per_period // lpp
        half = grid.samples_per_period // 2
        for i in range(grid.num_periods):
            peak = i * grid.samples_per_period + half
            if offset:
                peak = (peak + half) % grid.total_samples
            block = prof[(peak - size // 2 + np.arange(size)) % grid.total_samples]
            assert np.all(block == prof[peak])

    def test_level_shift_values(self):
        grid = make_grid(F_REP, 8, 2)
        assert level_shift(grid, 1, False) == 0
        assert level_shift(grid, 1, True) == 4
        assert level_shift(grid, 2, False) == 2
        assert level_shift(grid, 2, True) == 6

    def test_expand_levels_validates(self):
        grid = make_grid(F_REP, 8, 2)
        with pytest.raises(ValidationError):
            expand_levels(grid, np.ones(3), 2, False)
        with pytest.raises(ValidationError):
            expand_levels(grid, np.ones(6), 3, False)
        # two levels per period need samples_per_period divisible by 4
        with pytest.raises(ValidationError):
            expand_levels(make_grid(F_REP, 6, 2), np.ones(4), 2, False)


# ---------------------------------------------------------------------------
# Dispersion
# ---------------------------------------------------------------------------

def random_field(grid, rng):
    z = rng.normal(size=grid.total_samples) + 1j * rng.normal(size=grid.total_samples)
    return ComplexField(grid=grid, samples=z)


class TestDispersion:
    def test_zero_gdd_identity(self):
        grid, train = train_31()
        out = propagate_gdd(train, GddValue(phi2=0.0))
        err = np.max(np.abs(out.samples - train.samples)) / np.max(np.abs(train.samples))
        assert err < 1e-12

    def test_unitarity_random_fields(self):
        rng = np.random.default_rng(11)
        grid = make_grid(F_REP, 256, 7)
        for _ in range(25):
            f = random_field(grid, rng)
            gdd = GddValue(phi2=rng.uniform(-5, 5) / (2 * math.pi * F_REP ** 2))
            rel = abs(energy(propagate_gdd(f, gdd)) - energy(f)) / energy(f)
            assert rel < 1e-12

    def test_parseval(self):
        rng = np.random.default_rng(12)
        grid = make_grid(F_REP, 256, 7)
        f = random_field(grid, rng)
        spec = np.fft.fft(f.samples)
        e_time = np.sum(np.abs(f.samples) ** 2)
        e_freq = np.sum(np.abs(spec) ** 2) / grid.total_samples
        assert abs(e_time - e_freq) / e_time < 1e-12

    def test_composition_inverse(self):
        rng = np.random.default_rng(13)
        grid = make_grid(F_REP, 256, 7)
        f = random_field(grid, rng)
        gdd = talbot_gdd(F_REP, 2)
        back = propagate_gdd(propagate_gdd(f, gdd), GddValue(phi2=-gdd.phi2))
        rel = np.linalg.norm(back.samples - f.samples) / np.linalg.norm(f.samples)
        assert rel < 1e-10

    def test_talbot_self_image_shifted_half_period(self):
        grid, train = train_31()
        out = propagate_gdd(train, talbot_gdd(F_REP, 1))
        i_in = train.intensity()
        i_out = out.intensity()
        shifted = np.roll(i_in, grid.samples_per_period // 2)
        corr = np.dot(i_out, shifted) / (
            np.linalg.norm(i_out) * np.linalg.norm(shifted))
        assert corr >= 0.999

    def test_gaussian_broadening_matches_analytic_width(self):
        # oracle: a chirp-free Gaussian of amplitude-width parameter c leaves
        # phi2 of dispersion with intensity ~ exp(-t^2 / c_out^2) where
        # c_out = c*sqrt(1 + (phi2/c^2)^2); variance of that profile is
        # c_out^2/2, measured here by discrete moments
        grid = make_grid(F_REP, 2048, 33)
        c = grid.period / 40
        f = synth_single_pulse(grid, PulseShape(c_lw=c), 16)
        phi2 = 1.5 * c * c
        out = propagate_gdd(f, GddValue(phi2=phi2)).intensity()
        t = grid.time_axis()
        w = out / out.sum()
        mean = np.sum(w * t)
        var = np.sum(w * (t - mean) ** 2)
        c_out = c * math.sqrt(1 + (phi2 / c ** 2) ** 2)
        assert math.sqrt(2 * var) == pytest.approx(c_out, rel=1e-3)

    def test_sign_trick_equivalence(self):
        rng = np.random.default_rng(14)
        grid = make_grid(F_REP, 512, 8)
        f = random_field(grid, rng)
        gdd = talbot_gdd(F_REP, 1)
        a = propagate_gdd(f, gdd).samples
        b = propagate_gdd_sign_trick(f, gdd).samples
        assert np.max(np.abs(a - b)) < 1e-10


# ---------------------------------------------------------------------------
# Dispersion constants and units
# ---------------------------------------------------------------------------

class TestTalbotGdd:
    def test_first_order_value_at_5ghz(self):
        assert talbot_gdd(F_REP, 1).phi2 == pytest.approx(6.3662e-21, rel=1e-4)

    def test_linear_in_s(self):
        assert talbot_gdd(F_REP, 2).phi2 == pytest.approx(
            2 * talbot_gdd(F_REP, 1).phi2, rel=1e-15)

    def test_value_at_experiment_rate(self):
        g = talbot_gdd(12.056099998950e9, 1, -1)
        assert g.phi2 == pytest.approx(-1.0949e-21, rel=1e-4)

    def test_rejects_bad_order(self):
        with pytest.raises(ValidationError):
            talbot_gdd(F_REP, 0)
        with pytest.raises(ValidationError):
            talbot_gdd(F_REP, 1, sign=2)

    def test_ps_per_nm_conversion(self):
        assert gdd_to_ps_per_nm(GddValue(phi2=0.0), 1550e-9) == 0.0
        val = gdd_to_ps_per_nm(GddValue(phi2=1.0949e-21), 1550e-9)
        assert abs(val) == pytest.approx(859, abs=2)
        flipped = gdd_to_ps_per_nm(GddValue(phi2=-1.0949e-21), 1550e-9)
        assert flipped == -val


# ---------------------------------------------------------------------------
# Energy and diagnostics
# ---------------------------------------------------------------------------

class TestEnergy:
    def test_zero_field(self):
        grid = make_grid(F_REP, 64, 2)
        f = ComplexField(grid=grid, samples=np.zeros(grid.total_samples))
        assert energy(f) == 0.0

    def test_invariant_under_phase_steps(self):
        grid, train = train_31()
        out = apply_phase_steps(train, np.linspace(0, 6, grid.num_periods), 1,
                                False)
        assert energy(out) == pytest.approx(energy(train), rel=1e-12)

    def test_wraparound_leakage_detects_spill(self):
        grid = make_grid(F_REP, 256, 17)
        shape = default_pulse_shape(grid.period)
        amps = np.zeros(grid.num_periods)
        amps[8] = 1.0
        f = sample_object(synth_pulse_train(grid, shape), amps)
        assert wraparound_leakage(f) == 0.0
        # enormous dispersion spreads the pulse into the edge periods
        spread = propagate_gdd(f, talbot_gdd(F_REP, 40))
        assert wraparound_leakage(spread) > 1e-3
