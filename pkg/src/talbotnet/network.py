"""Layer stacks and the forward model.

A network is an ordered list of layers; each layer optionally multiplies the
field by a trainable piecewise-constant temporal profile (phase and/or
amplitude), then propagates it through a fixed amount of group-delay
dispersion. Trainable parameters are unconstrained reals squashed through a
sigmoid onto the physical ranges, so optimizer steps can never leave the
feasible set.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .core import (
    TWO_PI,
    ComplexField,
    GddValue,
    PulseShape,
    TimeGrid,
    ValidationError,
    default_pulse_shape,
    disperse_samples,
    expand_levels,
    make_grid,
    synth_pulse_train,
    talbot_gdd,
    transfer_function,
)

MODULATION_MODES = ("phase", "amplitude", "complex")

PRESET_NAMES = ("analog4", "digital4", "pseudo3", "twolayer")


@dataclass(frozen=True)
class LayerSpec:
    """One stage: optional trainable modulation followed by fixed dispersion."""

    gdd: GddValue
    has_modulation: bool = True
    modulation_mode: str = "phase"
    levels_per_period: int = 1
    half_period_offset: bool = False

    def __post_init__(self):
        if self.modulation_mode not in MODULATION_MODES:
            raise ValidationError(
                f"modulation_mode must be one of {MODULATION_MODES}, "
                f"got {self.modulation_mode!r}")
        if self.levels_per_period not in (1, 2):
            raise ValidationError(
                f"levels_per_period must be 1 or 2, got {self.levels_per_period}")


@dataclass(frozen=True)
class NetworkSpec:
    """Network geometry: repetition rate, pattern/padding periods, layer list.

    The time grid is derived; the signal occupies the central
    ``pattern_periods`` periods with ``pad_periods_each_side`` empty periods
    on either side to keep circular-propagation wraparound negligible.
    """

    f_rep: float
    pattern_periods: int
    layers: tuple
    pad_periods_each_side: int = 8
    samples_per_period: int = 1024
    pulse_shape: PulseShape | None = None

    def __post_init__(self):
        if not self.f_rep > 0:
            raise ValidationError(f"f_rep must be positive, got {self.f_rep}")
        if self.pattern_periods < 1:
            raise ValidationError("pattern_periods must be >= 1")
        if self.pad_periods_each_side < 0:
            raise ValidationError("pad_periods_each_side must be >= 0")
        if not self.layers:
            raise ValidationError("network needs at least one layer")
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.pulse_shape is None:
            object.__setattr__(
                self, "pulse_shape", default_pulse_shape(1.0 / self.f_rep))

    @property
    def num_periods(self) -> int:
        return self.pattern_periods + 2 * self.pad_periods_each_side

    @property
    def grid(self) -> TimeGrid:
        return make_grid(self.f_rep, self.samples_per_period, self.num_periods)

    @property
    def modulated_indices(self) -> tuple:
        return tuple(i for i, l in enumerate(self.layers) if l.has_modulation)

    def levels_in_layer(self, index: int) -> int:
        return self.num_periods * self.layers[index].levels_per_period

    def num_params(self) -> int:
        total = 0
        for i in self.modulated_indices:
            arrays = 2 if self.layers[i].modulation_mode == "complex" else 1
            total += arrays * self.levels_in_layer(i)
        return total

    def with_samples_per_period(self, samples_per_period: int) -> "NetworkSpec":
        return dataclasses.replace(self, samples_per_period=samples_per_period)

    def with_gdd_scale(self, factor: float) -> "NetworkSpec":
        """Rescale every layer's dispersion (off-self-imaging studies)."""
        layers = tuple(
            dataclasses.replace(l, gdd=GddValue(phi2=l.gdd.phi2 * factor))
            for l in self.layers)
        return dataclasses.replace(self, layers=layers)

    def with_modulation_mode(self, mode: str) -> "NetworkSpec":
        layers = tuple(
            dataclasses.replace(l, modulation_mode=mode) if l.has_modulation else l
            for l in self.layers)
        return dataclasses.replace(self, layers=layers)


def carrier_train(spec: NetworkSpec) -> ComplexField:
    """The unmodulated pulse train the network operates on."""
    return synth_pulse_train(spec.grid, spec.pulse_shape)


# ---------------------------------------------------------------------------
# Trainable parameters and their physical mapping
# ---------------------------------------------------------------------------

@dataclass
class LayerParams:
    """Unconstrained parameters of one modulated layer (None = absent part)."""

    phase: np.ndarray | None = None
    amplitude: np.ndarray | None = None

    def arrays(self):
        out = []
        if self.phase is not None:
            out.append(("phase", self.phase))
        if self.amplitude is not None:
            out.append(("amplitude", self.amplitude))
        return out


@dataclass
class ParamSet:
    """One LayerParams per modulated layer, in stack order."""

    layers: list

    @staticmethod
    def _layer_template(spec: NetworkSpec, index: int):
        mode = spec.layers[index].modulation_mode
        n = spec.levels_in_layer(index)
        want_phase = mode in ("phase", "complex")
        want_amp = mode in ("amplitude", "complex")
        return n, want_phase, want_amp

    @classmethod
    def build(cls, spec: NetworkSpec, fill) -> "ParamSet":
        layers = []
        for i in spec.modulated_indices:
            n, want_phase, want_amp = cls._layer_template(spec, i)
            layers.append(LayerParams(
                phase=fill(n) if want_phase else None,
                amplitude=fill(n) if want_amp else None))
        return cls(layers=layers)

    @classmethod
    def zeros(cls, spec: NetworkSpec) -> "ParamSet":
        return cls.build(spec, lambda n: np.zeros(n))

    @classmethod
    def random(cls, spec: NetworkSpec, rng: np.random.Generator,
               scale: float = 1.0) -> "ParamSet":
        return cls.build(spec, lambda n: rng.uniform(-scale, scale, size=n))

    def to_vector(self) -> np.ndarray:
        parts = [arr for lp in self.layers for _, arr in lp.arrays()]
        if not parts:
            return np.zeros(0)
        return np.concatenate(parts)

    @classmethod
    def from_vector(cls, spec: NetworkSpec, vec: np.ndarray) -> "ParamSet":
        vec = np.asarray(vec, dtype=np.float64)
        pos = 0
        layers = []
        for i in spec.modulated_indices:
            n, want_phase, want_amp = cls._layer_template(spec, i)
            lp = LayerParams()
            if want_phase:
                lp.phase = vec[pos:pos + n].copy()
                pos += n
            if want_amp:
                lp.amplitude = vec[pos:pos + n].copy()
                pos += n
            layers.append(lp)
        if pos != vec.size:
            raise ValidationError(
                f"parameter vector has {vec.size} entries, spec expects {pos}")
        return cls(layers=layers)

    def validate_for(self, spec: NetworkSpec) -> None:
        if len(self.layers) != len(spec.modulated_indices):
            raise ValidationError(
                f"ParamSet has {len(self.layers)} layers, spec has "
                f"{len(spec.modulated_indices)} modulated layers")
        for lp, i in zip(self.layers, spec.modulated_indices):
            n, want_phase, want_amp = self._layer_template(spec, i)
            for name, want in (("phase", want_phase), ("amplitude", want_amp)):
                arr = getattr(lp, name)
                if want:
                    if arr is None or arr.shape != (n,):
                        raise ValidationError(
                            f"layer {i}: {name} params must have shape ({n},)")
                    if not np.all(np.isfinite(arr)):
                        raise ValidationError(f"layer {i}: non-finite {name} params")
                elif arr is not None:
                    raise ValidationError(
                        f"layer {i}: unexpected {name} params for mode "
                        f"{spec.layers[i].modulation_mode!r}")


def map_phase(theta: np.ndarray) -> np.ndarray:
    """theta -> phase in (0, 2*pi)."""
    return TWO_PI * expit(theta)


def map_amplitude(theta: np.ndarray) -> np.ndarray:
    """theta -> transmission amplitude in (0, 1)."""
    return expit(theta)


@dataclass
class LayerModulation:
    """Physical per-level modulation values of one layer."""

    phase_levels: np.ndarray | None = None
    amplitude_levels: np.ndarray | None = None


def map_params(spec: NetworkSpec, theta: ParamSet) -> list:
    """Physical modulation values per layer (None for unmodulated layers)."""
    theta.validate_for(spec)
    out = [None] * len(spec.layers)
    for lp, i in zip(theta.layers, spec.modulated_indices):
        out[i] = LayerModulation(
            phase_levels=None if lp.phase is None else map_phase(lp.phase),
            amplitude_levels=(None if lp.amplitude is None
                              else map_amplitude(lp.amplitude)))
    return out


# ---------------------------------------------------------------------------
# Forward engine
# ---------------------------------------------------------------------------

@dataclass
class ModFactor:
    """Per-sample modulation arrays of one layer on a concrete grid.

    ``factor`` is what multiplies the field; ``phase_factor`` keeps the pure
    exp(-j*phi(t)) part separately for gradient use (ones when mode has no
    phase part).
    """

    factor: np.ndarray
    phase_factor: np.ndarray | None


def expand_modulation(grid: TimeGrid, layer: LayerSpec,
                      mod: LayerModulation) -> ModFactor:
    # exp() runs at level resolution; expansion is a repeat, which commutes
    # with any elementwise function of the level values
    phase_factor = None
    factor = None
    if mod.phase_levels is not None:
        phase_factor = expand_levels(grid, np.exp(-1j * mod.phase_levels),
                                     layer.levels_per_period,
                                     layer.half_period_offset)
        factor = phase_factor
    if mod.amplitude_levels is not None:
        amp = expand_levels(grid, np.asarray(mod.amplitude_levels, dtype=np.float64),
                            layer.levels_per_period, layer.half_period_offset)
        factor = amp if factor is None else factor * amp
    return ModFactor(factor=factor, phase_factor=phase_factor)


class CompiledNetwork:
    """Per-grid precomputation: dispersion transfer arrays, batched execution.

    ``run`` works on sample arrays of shape (..., N); leading axes are batch
    dimensions. The instance is read-only after construction and safe to
    share across workers.
    """

    def __init__(self, spec: NetworkSpec, grid: TimeGrid | None = None):
        self.spec = spec
        self.grid = spec.grid if grid is None else grid
        self.transfers = [transfer_function(self.grid, l.gdd) for l in spec.layers]

    def modulation_factors(self, theta: ParamSet) -> list:
        mods = map_params(self.spec, theta)
        return [None if m is None else expand_modulation(self.grid, l, m)
                for l, m in zip(self.spec.layers, mods)]

    def run_with_factors(self, samples: np.ndarray, factors: list,
                         keep_intermediates: bool = False):
        """Returns (output samples, per-layer (entering, modulated) pairs)."""
        a = np.asarray(samples, dtype=np.complex128)
        stages = []
        for f, h in zip(factors, self.transfers):
            b = a if f is None else a * f.factor
            if keep_intermediates:
                stages.append((a, b))
            a = disperse_samples(b, h)
        return a, stages

    def run(self, samples: np.ndarray, theta: ParamSet,
            keep_intermediates: bool = False):
        return self.run_with_factors(samples, self.modulation_factors(theta),
                                     keep_intermediates)


@dataclass
class ForwardResult:
    intensity: np.ndarray
    output: ComplexField
    layer_inputs: list | None = None
    layer_modulated: list | None = None


def forward(spec: NetworkSpec, theta: ParamSet, input_field: ComplexField,
            keep_intermediates: bool = False) -> ForwardResult:
    """Run the full stack on one field; returns output intensity |E_L|^2."""
    if input_field.grid != spec.grid:
        raise ValidationError("input field grid does not match network spec")
    net = CompiledNetwork(spec)
    out, stages = net.run(input_field.samples, theta, keep_intermediates)
    field = ComplexField(grid=spec.grid, samples=out)
    res = ForwardResult(intensity=field.intensity(), output=field)
    if keep_intermediates:
        res.layer_inputs = [s[0] for s in stages]
        res.layer_modulated = [s[1] for s in stages]
    return res


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------

# repetition rate of the short-period (non-5-GHz) configurations
F_REP_HIGH = 12.056099998950e9


def preset(name: str, samples_per_period: int = 1024) -> NetworkSpec:
    """Named network configurations used by the shipped experiments.

    analog4   4 phase-modulated layers at 5 GHz, dispersion +2/-2/+2/-2 D_T,
              15 pattern periods, 2 levels per period, boundary offset on
              layers 2 and 4.
    digital4  as analog4 but 8 pattern periods and +3/-3/+3/-3 D_T.
    pseudo3   3 layers at 12.0561 GHz, all +D_T; layer 1 dispersion-only,
              layers 2-3 phase-modulated with 1 level per period.
    twolayer  pseudo3 without its dispersion-only first layer.
    """
    if name == "analog4":
        f_rep = 5e9
        layers = _alternating_stack(f_rep, s=2, n_layers=4)
        return NetworkSpec(f_rep=f_rep, pattern_periods=15, layers=layers,
                           samples_per_period=samples_per_period)
    if name == "digital4":
        f_rep = 5e9
        layers = _alternating_stack(f_rep, s=3, n_layers=4)
        return NetworkSpec(f_rep=f_rep, pattern_periods=8, layers=layers,
                           samples_per_period=samples_per_period)
    if name == "pseudo3":
        f_rep = F_REP_HIGH
        gdd = talbot_gdd(f_rep, 1, +1)
        layers = (
            LayerSpec(gdd=gdd, has_modulation=False),
            LayerSpec(gdd=gdd, levels_per_period=1, half_period_offset=True),
            LayerSpec(gdd=gdd, levels_per_period=1),
        )
        return NetworkSpec(f_rep=f_rep, pattern_periods=8, layers=layers,
                           samples_per_period=samples_per_period)
    if name == "twolayer":
        base = preset("pseudo3", samples_per_period)
        return dataclasses.replace(base, layers=base.layers[1:])
    raise ValidationError(f"unknown preset {name!r}; choose from {PRESET_NAMES}")


def _alternating_stack(f_rep: float, s: int, n_layers: int) -> tuple:
    layers = []
    for i in range(n_layers):
        sign = +1 if i % 2 == 0 else -1
        layers.append(LayerSpec(
            gdd=talbot_gdd(f_rep, s, sign),
            levels_per_period=2,
            half_period_offset=(i % 2 == 1)))
    return tuple(layers)


# ---------------------------------------------------------------------------
# Serialization (dict level; file I/O lives in the cli module)
# ---------------------------------------------------------------------------

def spec_to_dict(spec: NetworkSpec) -> dict:
    return {
        "f_rep": spec.f_rep,
        "pattern_periods": spec.pattern_periods,
        "pad_periods_each_side": spec.pad_periods_each_side,
        "samples_per_period": spec.samples_per_period,
        "pulse": {"c_lw": spec.pulse_shape.c_lw, "phi0": spec.pulse_shape.phi0},
        "layers": [
            {
                "phi2": l.gdd.phi2,
                "has_modulation": l.has_modulation,
                "modulation_mode": l.modulation_mode,
                "levels_per_period": l.levels_per_period,
                "half_period_offset": l.half_period_offset,
            }
            for l in spec.layers
        ],
    }


def params_to_list(theta: ParamSet) -> list:
    return [
        {"phase": None if lp.phase is None else [float(v) for v in lp.phase],
         "amplitude": None if lp.amplitude is None
         else [float(v) for v in lp.amplitude]}
        for lp in theta.layers
    ]


def params_from_list(spec: NetworkSpec, data: list) -> ParamSet:
    layers = []
    for entry in data:
        layers.append(LayerParams(
            phase=None if entry.get("phase") is None
            else np.asarray(entry["phase"], dtype=np.float64),
            amplitude=None if entry.get("amplitude") is None
            else np.asarray(entry["amplitude"], dtype=np.float64)))
    theta = ParamSet(layers=layers)
    theta.validate_for(spec)
    return theta


def spec_from_dict(d: dict) -> NetworkSpec:
    try:
        layers = tuple(
            LayerSpec(
                gdd=GddValue(phi2=float(l["phi2"])),
                has_modulation=bool(l["has_modulation"]),
                modulation_mode=str(l["modulation_mode"]),
                levels_per_period=int(l["levels_per_period"]),
                half_period_offset=bool(l["half_period_offset"]),
            )
            for l in d["layers"])
        pulse = PulseShape(c_lw=float(d["pulse"]["c_lw"]),
                           phi0=float(d["pulse"]["phi0"]))
        return NetworkSpec(
            f_rep=float(d["f_rep"]),
            pattern_periods=int(d["pattern_periods"]),
            layers=layers,
            pad_periods_each_side=int(d["pad_periods_each_side"]),
            samples_per_period=int(d["samples_per_period"]),
            pulse_shape=pulse,
        )
    except KeyError as exc:
        raise ValidationError(f"network dict missing field: {exc}") from exc
