"""Dataset generation and persistence.

A sample is one amplitude per period: the pattern occupies the central
periods, padding periods stay exactly zero. Class identity is carried by a
label waveform, a single unit pulse whose period index encodes the class.
Per-pulse amplitude noise is controlled by a variance rate in dB
(sigma = 10^(-rate/10) on a unit nominal peak).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .core import PulseShape, TimeGrid, ValidationError, synth_single_pulse

FORMAT_VERSION = 1

ANALOG_PATTERN_PERIODS = 15
DIGITAL_PATTERN_PERIODS = 8


class DatasetFormatError(ValueError):
    """A dataset file failed structural validation."""


@dataclass(frozen=True)
class PatternClass:
    class_id: int
    name: str
    label_slot: int            # pattern-local period index of the target peak
    base_amplitudes: tuple     # canonical noise-free pattern amplitudes

    def __post_init__(self):
        if not 0 <= self.label_slot < len(self.base_amplitudes):
            raise ValidationError(
                f"label_slot {self.label_slot} outside pattern of "
                f"{len(self.base_amplitudes)} periods")
        if any(a < 0 for a in self.base_amplitudes):
            raise ValidationError("base amplitudes must be non-negative")


@dataclass
class Sample:
    class_id: int
    slot_amplitudes: np.ndarray   # length num_periods, zeros in padding
    noisy: bool = False


@dataclass(frozen=True)
class DatasetSpec:
    kind: str                     # "analog" | "digital"
    classes: tuple
    n_per_class: int = 100
    ivr_db: float = 30.0
    train_fraction: float = 0.7
    seed: int = 0
    noise_on_zero_slots: bool = True

    def __post_init__(self):
        if not self.classes:
            raise ValidationError("dataset needs at least one class")
        slots = [c.label_slot for c in self.classes]
        if len(set(slots)) != len(slots):
            raise ValidationError("classes must have distinct label slots")
        lengths = {len(c.base_amplitudes) for c in self.classes}
        if len(lengths) != 1:
            raise ValidationError("classes must share one pattern length")
        if not 0 < self.train_fraction < 1:
            raise ValidationError(
                f"train_fraction must be in (0, 1), got {self.train_fraction}")
        if self.n_per_class < 1:
            raise ValidationError("n_per_class must be >= 1")

    @property
    def pattern_periods(self) -> int:
        return len(self.classes[0].base_amplitudes)


@dataclass
class Dataset:
    spec: DatasetSpec
    f_rep: float
    pad_periods_each_side: int
    samples: list
    train_idx: np.ndarray
    test_idx: np.ndarray

    @property
    def pattern_periods(self) -> int:
        return self.spec.pattern_periods

    @property
    def num_periods(self) -> int:
        return self.pattern_periods + 2 * self.pad_periods_each_side

    def amplitude_matrix(self, indices) -> np.ndarray:
        return np.stack([self.samples[i].slot_amplitudes for i in indices])

    def class_ids(self, indices) -> np.ndarray:
        return np.array([self.samples[i].class_id for i in indices], dtype=int)


# ---------------------------------------------------------------------------
# Canonical pattern classes
# ---------------------------------------------------------------------------

def analog_classes(label_slots=(2, 6, 10, 14)) -> tuple:
    """Four periodic 15-slot waveforms, amplitudes normalized to [0, 1]."""
    i = np.arange(ANALOG_PATTERN_PERIODS)
    shapes = (
        ("sine", 0.5 + 0.5 * np.sin(2.0 * np.pi * i / 15)),
        ("square", np.where(i < 8, 1.0, 0.0)),
        ("rev_triangle", np.abs(1.0 - 2.0 * i / 15)),
        ("sawtooth", i / 15),
    )
    return tuple(
        PatternClass(class_id=k, name=name, label_slot=slot,
                     base_amplitudes=tuple(float(v) for v in vals))
        for k, ((name, vals), slot) in enumerate(zip(shapes, label_slots)))


def ascii_bits(char: str) -> tuple:
    """8-bit code of one ASCII character, most significant bit first."""
    if len(char) != 1 or not 0 <= ord(char) < 128:
        raise ValidationError(f"need a single ASCII character, got {char!r}")
    code = ord(char)
    return tuple((code >> (7 - b)) & 1 for b in range(8))


def digital_classes(chars=("u", "c", "a", "s"), label_slots=(1, 3, 5, 7)) -> tuple:
    """One class per character; bit value = field amplitude of that slot."""
    if len(chars) != len(label_slots):
        raise ValidationError("chars and label_slots must have equal length")
    return tuple(
        PatternClass(class_id=k, name=c, label_slot=s,
                     base_amplitudes=tuple(float(b) for b in ascii_bits(c)))
        for k, (c, s) in enumerate(zip(chars, label_slots)))


def analog_spec(**kw) -> DatasetSpec:
    return DatasetSpec(kind="analog", classes=analog_classes(), **kw)


def digital_spec(chars=("u", "c", "a", "s"), label_slots=(1, 3, 5, 7), **kw) -> DatasetSpec:
    return DatasetSpec(kind="digital",
                       classes=digital_classes(chars, label_slots), **kw)


# ---------------------------------------------------------------------------
# Noise model and generation
# ---------------------------------------------------------------------------

def ivr_sigma(ivr_db: float) -> float:
    """Additive-noise standard deviation for a unit nominal peak amplitude."""
    if math.isnan(ivr_db):
        raise ValidationError("ivr_db must not be NaN")
    return 10.0 ** (-ivr_db / 10.0)


def apply_ivr(amplitudes: np.ndarray, ivr_db: float, rng: np.random.Generator,
              pattern_start: int, pattern_periods: int,
              noise_on_zero_slots: bool = True) -> np.ndarray:
    """Independent additive Gaussian draws on pattern slots, clamped at 0."""
    out = np.array(amplitudes, dtype=np.float64)
    sigma = ivr_sigma(ivr_db)
    if sigma == 0.0:
        return out
    lo, hi = pattern_start, pattern_start + pattern_periods
    noise = rng.normal(0.0, sigma, size=pattern_periods)
    if not noise_on_zero_slots:
        noise = np.where(out[lo:hi] > 0, noise, 0.0)
    out[lo:hi] = np.maximum(out[lo:hi] + noise, 0.0)
    return out


def gen_dataset(spec: DatasetSpec, f_rep: float,
                pad_periods_each_side: int = 8) -> Dataset:
    """All samples for a dataset spec: class-major order, one RNG stream,
    then a stratified split drawn from a second stream derived from the
    seed."""
    pp = spec.pattern_periods
    pad = pad_periods_each_side
    num_periods = pp + 2 * pad
    rng = np.random.default_rng(spec.seed)
    noisy = ivr_sigma(spec.ivr_db) > 0.0

    samples = []
    for cls in spec.classes:
        base = np.zeros(num_periods)
        base[pad:pad + pp] = cls.base_amplitudes
        for _ in range(spec.n_per_class):
            amps = apply_ivr(base, spec.ivr_db, rng, pad, pp,
                             spec.noise_on_zero_slots)
            samples.append(Sample(class_id=cls.class_id, slot_amplitudes=amps,
                                  noisy=noisy))

    train_idx, test_idx = _stratified_split(
        [s.class_id for s in samples], spec.train_fraction,
        np.random.default_rng([spec.seed, 1]))
    return Dataset(spec=spec, f_rep=f_rep, pad_periods_each_side=pad,
                   samples=samples, train_idx=train_idx, test_idx=test_idx)


def gen_analog(spec: DatasetSpec, f_rep: float = 5e9,
               pad_periods_each_side: int = 8) -> Dataset:
    if spec.pattern_periods != ANALOG_PATTERN_PERIODS:
        raise ValidationError(
            f"analog patterns span {ANALOG_PATTERN_PERIODS} periods, "
            f"spec has {spec.pattern_periods}")
    return gen_dataset(spec, f_rep, pad_periods_each_side)


def gen_digital(spec: DatasetSpec, f_rep: float = 5e9,
                pad_periods_each_side: int = 8) -> Dataset:
    if spec.pattern_periods != DIGITAL_PATTERN_PERIODS:
        raise ValidationError(
            f"digital patterns span {DIGITAL_PATTERN_PERIODS} periods, "
            f"spec has {spec.pattern_periods}")
    return gen_dataset(spec, f_rep, pad_periods_each_side)


def _stratified_split(class_ids, train_fraction, rng):
    by_class = {}
    for i, cid in enumerate(class_ids):
        by_class.setdefault(cid, []).append(i)
    train, test = [], []
    for cid in sorted(by_class):
        idx = np.array(by_class[cid])
        rng.shuffle(idx)
        n_train = int(round(train_fraction * idx.size))
        if idx.size >= 2:
            n_train = min(max(n_train, 1), idx.size - 1)
        train.extend(idx[:n_train])
        test.extend(idx[n_train:])
    return np.array(sorted(train), dtype=int), np.array(sorted(test), dtype=int)


# ---------------------------------------------------------------------------
# Labels
# ---------------------------------------------------------------------------

def make_label(cls: PatternClass, grid: TimeGrid, pulse_shape: PulseShape,
               pad_periods_each_side: int) -> np.ndarray:
    """Target intensity: one unit pulse in the class's label period."""
    period_index = pad_periods_each_side + cls.label_slot
    return synth_single_pulse(grid, pulse_shape, period_index).intensity()


def label_peak_index(cls: PatternClass, samples_per_period: int,
                     pad_periods_each_side: int) -> int:
    """Sample index of the label pulse's peak on the full grid."""
    period_index = pad_periods_each_side + cls.label_slot
    return period_index * samples_per_period + samples_per_period // 2


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def dataset_to_dict(ds: Dataset) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "kind": ds.spec.kind,
        "f_rep": ds.f_rep,
        "pattern_periods": ds.pattern_periods,
        "pad": ds.pad_periods_each_side,
        "ivr_db": ds.spec.ivr_db,
        "noise_on_zero_slots": ds.spec.noise_on_zero_slots,
        "train_fraction": ds.spec.train_fraction,
        "seed": ds.spec.seed,
        "classes": [
            {"id": c.class_id, "name": c.name, "label_slot": c.label_slot,
             "base_amplitudes": list(c.base_amplitudes)}
            for c in ds.spec.classes
        ],
        "samples": [
            {"class_id": s.class_id,
             "amplitudes": [float(a) for a in s.slot_amplitudes]}
            for s in ds.samples
        ],
    }


def dataset_from_dict(d: dict) -> Dataset:
    try:
        version = d["format_version"]
        if version != FORMAT_VERSION:
            raise DatasetFormatError(
                f"unsupported dataset format_version {version}")
        classes = tuple(
            PatternClass(class_id=int(c["id"]), name=str(c["name"]),
                         label_slot=int(c["label_slot"]),
                         base_amplitudes=tuple(float(a)
                                               for a in c["base_amplitudes"]))
            for c in d["classes"])
        spec = DatasetSpec(kind=str(d["kind"]), classes=classes,
                           n_per_class=max(1, len(d["samples"]) // len(classes)),
                           ivr_db=float(d["ivr_db"]),
                           train_fraction=float(d["train_fraction"]),
                           seed=int(d["seed"]),
                           noise_on_zero_slots=bool(d["noise_on_zero_slots"]))
        pad = int(d["pad"])
        pp = int(d["pattern_periods"])
        if pp != spec.pattern_periods:
            raise DatasetFormatError(
                f"pattern_periods field {pp} does not match class tables "
                f"({spec.pattern_periods})")
        num_periods = pp + 2 * pad
        samples = []
        for k, s in enumerate(d["samples"]):
            amps = np.array([float(a) for a in s["amplitudes"]])
            if amps.shape != (num_periods,):
                raise DatasetFormatError(
                    f"sample {k} has {amps.size} amplitudes, expected {num_periods}")
            if np.any(amps < 0):
                raise DatasetFormatError(f"sample {k} has negative amplitudes")
            samples.append(Sample(class_id=int(s["class_id"]),
                                  slot_amplitudes=amps,
                                  noisy=ivr_sigma(spec.ivr_db) > 0.0))
        train_idx, test_idx = _stratified_split(
            [s.class_id for s in samples], spec.train_fraction,
            np.random.default_rng([spec.seed, 1]))
        return Dataset(spec=spec, f_rep=float(d["f_rep"]),
                       pad_periods_each_side=pad, samples=samples,
                       train_idx=train_idx, test_idx=test_idx)
    except KeyError as exc:
        raise DatasetFormatError(f"dataset dict missing field: {exc}") from exc


def save_dataset(ds: Dataset, path) -> None:
    with open(path, "w") as fh:
        json.dump(dataset_to_dict(ds), fh, indent=1)
        fh.write("\n")


def load_dataset(path) -> Dataset:
    with open(path) as fh:
        text = fh.read()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(
            f"invalid JSON at offset {exc.pos}: {exc.msg}") from exc
    if not isinstance(d, dict):
        raise DatasetFormatError("dataset file must hold a JSON object")
    return dataset_from_dict(d)
