"""Classification rule, accuracy, and experiment harnesses.

The decision rule reads the output intensity's global peak: the predicted
class is the one whose label-pulse position is nearest, and the verdict
counts as correct when the peak lies within half a period of the true
class's label position.

Harness functions that need training import the train module lazily, so the
train module itself can use the primitives here.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .core import TimeGrid, ValidationError, default_pulse_shape, make_grid, \
    propagate_gdd, synth_pulse_train, talbot_gdd
from .data import Dataset, DatasetSpec, gen_dataset, label_peak_index
from .network import CompiledNetwork, ModFactor, NetworkSpec, ParamSet, \
    carrier_train, expand_modulation, map_params

MARGIN_CAP = 1e9


@dataclass
class Verdict:
    predicted_class: int | None
    peak_time: float
    correct: bool
    margin: float
    ambiguous: bool = False
    no_signal: bool = False


# ---------------------------------------------------------------------------
# Decision rule
# ---------------------------------------------------------------------------

def class_peak_indices(classes, samples_per_period: int,
                       pad_periods_each_side: int) -> np.ndarray:
    return np.array([label_peak_index(c, samples_per_period,
                                      pad_periods_each_side)
                     for c in classes], dtype=int)


def classify(i_out: np.ndarray, classes, grid: TimeGrid,
             pad_periods_each_side: int, true_class: int | None = None) -> Verdict:
    """Verdict for one output intensity waveform."""
    if len(classes) < 2:
        raise ValidationError("classification needs at least 2 classes")
    i_out = np.asarray(i_out, dtype=np.float64)
    if i_out.shape != (grid.total_samples,):
        raise ValidationError("intensity length does not match grid")
    if not np.any(i_out > 0):
        return Verdict(predicted_class=None, peak_time=0.0, correct=False,
                       margin=0.0, no_signal=True)

    npp = grid.samples_per_period
    peak_idx = int(np.argmax(i_out))
    peak_time = peak_idx * grid.dt

    order = sorted(classes, key=lambda c: c.label_slot)
    peaks = class_peak_indices(order, npp, pad_periods_each_side)
    dist = np.abs(peaks - peak_idx)
    nearest = int(np.argmin(dist))   # ties resolve to the lower label slot
    ambiguous = bool(np.sum(dist == dist[nearest]) > 1)
    predicted = order[nearest].class_id

    # margin: tallest vs second-tallest intensity over the label periods
    slot_heights = []
    for p in peaks:
        lo = (p // npp) * npp
        slot_heights.append(float(np.max(i_out[lo:lo + npp])))
    top2 = sorted(slot_heights, reverse=True)[:2]
    margin = MARGIN_CAP if top2[1] <= 0 else min(top2[0] / top2[1], MARGIN_CAP)

    correct = False
    if true_class is not None:
        true_peak = label_peak_index(
            next(c for c in classes if c.class_id == true_class),
            npp, pad_periods_each_side)
        correct = bool(abs(peak_idx - true_peak) <= npp // 2)
    return Verdict(predicted_class=predicted, peak_time=peak_time,
                   correct=correct, margin=margin, ambiguous=ambiguous)


def correct_flags(intensities: np.ndarray, true_peak_indices: np.ndarray,
                  samples_per_period: int) -> np.ndarray:
    """Vectorized correctness: output peak within half a period of the true
    label peak, one flag per row."""
    peak_idx = np.argmax(intensities, axis=-1)
    return np.abs(peak_idx - true_peak_indices) <= samples_per_period // 2


# ---------------------------------------------------------------------------
# Batched forward evaluation over datasets
# ---------------------------------------------------------------------------

def build_input_rows(carrier_samples: np.ndarray, amp_matrix: np.ndarray,
                     samples_per_period: int) -> np.ndarray:
    """(rows, periods) amplitudes -> (rows, N) input fields."""
    expanded = np.repeat(amp_matrix, samples_per_period, axis=1)
    return expanded * carrier_samples[None, :]


def batch_intensities(net: CompiledNetwork, factors, carrier_samples: np.ndarray,
                      amp_matrix: np.ndarray, chunk: int = 64) -> np.ndarray:
    npp = net.grid.samples_per_period
    outs = []
    for lo in range(0, amp_matrix.shape[0], chunk):
        rows = build_input_rows(carrier_samples, amp_matrix[lo:lo + chunk], npp)
        out, _ = net.run_with_factors(rows, factors)
        outs.append(out.real ** 2 + out.imag ** 2)
    return np.concatenate(outs, axis=0)


def split_accuracy(net: CompiledNetwork, factors, carrier_samples: np.ndarray,
                   dataset: Dataset, indices, peaks_by_class: np.ndarray) -> float:
    amp = dataset.amplitude_matrix(indices)
    inten = batch_intensities(net, factors, carrier_samples, amp)
    true_peaks = peaks_by_class[dataset.class_ids(indices)]
    return float(np.mean(correct_flags(inten, true_peaks,
                                       net.grid.samples_per_period)))


def accuracy(spec: NetworkSpec, theta: ParamSet, dataset: Dataset,
             which: str = "test") -> float:
    """Fraction of correct verdicts over one split of the dataset."""
    if dataset.num_periods != spec.num_periods:
        raise ValidationError("dataset period count does not match network")
    indices = {"train": dataset.train_idx, "test": dataset.test_idx}[which]
    if len(indices) == 0:
        raise ValidationError(f"empty {which} split")
    net = CompiledNetwork(spec)
    factors = net.modulation_factors(theta)
    carrier = carrier_train(spec).samples
    peaks = class_peak_indices(
        sorted(dataset.spec.classes, key=lambda c: c.class_id),
        spec.samples_per_period, dataset.pad_periods_each_side)
    return split_accuracy(net, factors, carrier, dataset, indices, peaks)


# ---------------------------------------------------------------------------
# Self-imaging check
# ---------------------------------------------------------------------------

@dataclass
class TalbotReport:
    f_rep: float
    s: int
    phi2: float
    correlation_best: float
    best_shift_samples: int
    best_shift_fraction_of_period: float
    correlation_at_half_period: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def talbot_check(f_rep: float, s: int, samples_per_period: int = 1024,
                 num_periods: int = 31, gdd_scale: float = 1.0) -> TalbotReport:
    """Propagate the unmodulated train by the s-th self-imaging dispersion and
    report how well the output intensity matches a circularly shifted input."""
    grid = make_grid(f_rep, samples_per_period, num_periods)
    train = synth_pulse_train(grid, default_pulse_shape(grid.period))
    gdd = talbot_gdd(f_rep, s)
    if gdd_scale != 1.0:
        gdd = dataclasses.replace(gdd, phi2=gdd.phi2 * gdd_scale)
    out = propagate_gdd(train, gdd)

    i_in = train.intensity()
    i_out = out.intensity()
    # correlation against every circular shift at once
    corr = np.fft.irfft(np.fft.rfft(i_out) * np.conj(np.fft.rfft(i_in)),
                        n=i_in.size)
    norm = math.sqrt(float(np.dot(i_in, i_in)) * float(np.dot(i_out, i_out)))
    corr = corr / norm
    # fold shifts to one period: the train is periodic, shifts alias mod N_pp
    best = int(np.argmax(corr))
    half = samples_per_period // 2
    return TalbotReport(
        f_rep=f_rep, s=s, phi2=gdd.phi2,
        correlation_best=float(corr[best]),
        best_shift_samples=best % samples_per_period,
        best_shift_fraction_of_period=(best % samples_per_period)
        / samples_per_period,
        correlation_at_half_period=float(corr[half]))


# ---------------------------------------------------------------------------
# Consecutive-pattern runs
# ---------------------------------------------------------------------------

def consecutive_run(spec: NetworkSpec, theta: ParamSet, patterns,
                    gap_periods: int, classes, true_ids=None):
    """Classify several patterns riding one long pulse train.

    ``patterns`` is a list of pattern-local amplitude vectors. Each pattern
    carries its own copy of the trained modulation window; the windows tile
    the long grid at the patterns' positions, later windows overwriting
    earlier ones where they overlap. Returns one Verdict per pattern.
    """
    if len(patterns) < 1:
        raise ValidationError("need at least one pattern")
    if gap_periods < 0:
        raise ValidationError("gap_periods must be >= 0")
    pp = spec.pattern_periods
    pad = spec.pad_periods_each_side
    npp = spec.samples_per_period
    win_periods = spec.num_periods
    k = len(patterns)

    pattern_starts = [pad + i * (pp + gap_periods) for i in range(k)]
    window_starts = [q - pad for q in pattern_starts]
    long_periods = window_starts[-1] + win_periods
    grid = make_grid(spec.f_rep, npp, long_periods)

    amps = np.zeros(long_periods)
    for q, pat in zip(pattern_starts, patterns):
        pat = np.asarray(pat, dtype=np.float64)
        if pat.shape != (pp,):
            raise ValidationError(
                f"each pattern must have {pp} amplitudes, got {pat.shape}")
        amps[q:q + pp] = pat
    carrier = synth_pulse_train(grid, spec.pulse_shape)
    field = carrier.samples * np.repeat(amps, npp)

    # tile each layer's trained modulation window onto the long grid
    mods = map_params(spec, theta)
    factors = []
    for layer, mod in zip(spec.layers, mods):
        if mod is None:
            factors.append(None)
            continue
        win = expand_modulation(spec.grid, layer, mod).factor
        long_factor = np.ones(grid.total_samples, dtype=win.dtype)
        for w in window_starts:
            long_factor[w * npp:w * npp + win.size] = win
        factors.append(ModFactor(factor=long_factor, phase_factor=None))

    net = CompiledNetwork(spec, grid=grid)
    out, _ = net.run_with_factors(field[None, :], factors)
    inten = (out.real ** 2 + out.imag ** 2)[0]

    order = sorted(classes, key=lambda c: c.label_slot)
    verdicts = []
    for i, (q, w) in enumerate(zip(pattern_starts, window_starts)):
        lo = w * npp
        hi = min((w + win_periods) * npp, grid.total_samples)
        local_peak = int(np.argmax(inten[lo:hi]))
        peak_idx = lo + local_peak
        peaks = np.array([(q + c.label_slot) * npp + npp // 2 for c in order])
        dist = np.abs(peaks - peak_idx)
        nearest = int(np.argmin(dist))
        correct = False
        if true_ids is not None:
            true_cls = next(c for c in classes if c.class_id == true_ids[i])
            true_peak = (q + true_cls.label_slot) * npp + npp // 2
            correct = bool(abs(peak_idx - true_peak) <= npp // 2)
        slot_heights = []
        for p in peaks:
            slo = (p // npp) * npp
            slot_heights.append(float(np.max(inten[slo:slo + npp])))
        top2 = sorted(slot_heights, reverse=True)[:2]
        margin = MARGIN_CAP if top2[1] <= 0 else min(top2[0] / top2[1], MARGIN_CAP)
        verdicts.append(Verdict(
            predicted_class=order[nearest].class_id,
            peak_time=peak_idx * grid.dt,
            correct=correct,
            margin=margin,
            ambiguous=bool(np.sum(dist == dist[nearest]) > 1)))
    return verdicts


# ---------------------------------------------------------------------------
# Training-based harnesses (lazy train import)
# ---------------------------------------------------------------------------

@dataclass
class SweepPoint:
    ivr_db: float
    accuracy: float
    best_epoch: int | None = None


@dataclass
class IvrSweepResult:
    mode: str
    points: list

    def to_rows(self):
        return [(p.ivr_db, p.accuracy) for p in self.points]


def ivr_sweep(spec: NetworkSpec, dspec: DatasetSpec, ivr_list, config,
              mode: str = "train", theta: ParamSet | None = None) -> IvrSweepResult:
    """Accuracy vs noise level, either retraining at each level or
    re-evaluating one trained parameter set on regenerated test sets."""
    if not ivr_list:
        raise ValidationError("ivr_list must be non-empty")
    from .train import fit

    points = []
    if mode == "train":
        for ivr in ivr_list:
            ds = gen_dataset(dataclasses.replace(dspec, ivr_db=float(ivr)),
                             spec.f_rep, spec.pad_periods_each_side)
            res = fit(spec, ds, config)
            points.append(SweepPoint(ivr_db=float(ivr), accuracy=res.best_test_acc,
                                     best_epoch=res.best_epoch))
    elif mode == "reeval":
        if theta is None:
            ds = gen_dataset(dspec, spec.f_rep, spec.pad_periods_each_side)
            theta = fit(spec, ds, config).best_theta
        for ivr in ivr_list:
            ds = gen_dataset(dataclasses.replace(dspec, ivr_db=float(ivr)),
                             spec.f_rep, spec.pad_periods_each_side)
            points.append(SweepPoint(ivr_db=float(ivr),
                                     accuracy=accuracy(spec, theta, ds)))
    else:
        raise ValidationError(f"unknown sweep mode {mode!r}")
    return IvrSweepResult(mode=mode, points=points)


@dataclass
class OffTalbotReport:
    deviation_fraction: float
    baseline_accuracy: float
    deviated_accuracy: float


def off_talbot_study(spec: NetworkSpec, deviation_fraction: float,
                     dataset: Dataset, config,
                     baseline_accuracy: float | None = None) -> OffTalbotReport:
    """Train with every layer's dispersion scaled off the self-imaging value
    and compare against the on-condition baseline."""
    from .train import fit

    if baseline_accuracy is None:
        baseline_accuracy = fit(spec, dataset, config).best_test_acc
    if deviation_fraction == 0.0:
        return OffTalbotReport(0.0, baseline_accuracy, baseline_accuracy)
    detuned = spec.with_gdd_scale(1.0 + deviation_fraction)
    res = fit(detuned, dataset, config)
    return OffTalbotReport(deviation_fraction=deviation_fraction,
                           baseline_accuracy=baseline_accuracy,
                           deviated_accuracy=res.best_test_acc)


@dataclass
class ModeRun:
    mode: str
    seed: int
    accuracy: float
    mean_peak_height: float


@dataclass
class ModComparisonReport:
    runs: list

    def median_accuracy(self, mode: str) -> float:
        return float(np.median([r.accuracy for r in self.runs if r.mode == mode]))

    def median_peak(self, mode: str) -> float:
        return float(np.median([r.mean_peak_height for r in self.runs
                                if r.mode == mode]))

    def peak_ratio_db(self, mode_a: str = "phase", mode_b: str = "amplitude") -> float:
        return 10.0 * math.log10(self.median_peak(mode_a)
                                 / self.median_peak(mode_b))


def modulation_comparison(spec: NetworkSpec, dataset: Dataset, config,
                          modes=("phase", "amplitude"),
                          seeds=(0, 1, 2)) -> ModComparisonReport:
    """Train once per (modulation mode, seed); report accuracies and the mean
    output main-peak height per run."""
    from .train import fit

    runs = []
    for mode in modes:
        mspec = spec.with_modulation_mode(mode)
        for seed in seeds:
            cfg = dataclasses.replace(config, seed=int(seed))
            res = fit(mspec, dataset, cfg)
            runs.append(ModeRun(mode=mode, seed=int(seed),
                                accuracy=res.best_test_acc,
                                mean_peak_height=mean_peak_height(
                                    mspec, res.best_theta, dataset)))
    return ModComparisonReport(runs=runs)


def mean_peak_height(spec: NetworkSpec, theta: ParamSet, dataset: Dataset,
                     which: str = "test") -> float:
    """Mean over the split of the output waveform's global maximum."""
    indices = {"train": dataset.train_idx, "test": dataset.test_idx}[which]
    net = CompiledNetwork(spec)
    factors = net.modulation_factors(theta)
    carrier = carrier_train(spec).samples
    inten = batch_intensities(net, factors, carrier,
                              dataset.amplitude_matrix(indices))
    return float(np.mean(np.max(inten, axis=-1)))
