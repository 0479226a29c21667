"""Loss and exact reverse-mode gradients.

The loss compares square-root intensities (field magnitudes) of the network
output against a label waveform. The backward pass propagates an adjoint
field through the stack in reverse: dispersion's adjoint is dispersion with
the conjugate transfer, modulation's adjoint is multiplication by the
conjugate factor, and per-level parameter gradients fall out of the adjoint
at each modulation stage before the sigmoid chain rule.

Adjoint convention: for real loss e and complex array X, the adjoint X~ is
de/dRe(X) + j*de/dIm(X), so linear stages back-propagate via their conjugate
transpose under the real inner product Re(sum(conj(u)*v)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft as _sfft
from scipy.special import expit

from .core import TWO_PI, ComplexField, TimeGrid, ValidationError, level_shift
from .network import CompiledNetwork, NetworkSpec, ParamSet, forward

# below this field magnitude the sqrt-intensity derivative is left at 0
ZERO_FIELD_GUARD = 1e-15


@dataclass
class LossValue:
    mse: float


def loss_mse(i_out: np.ndarray, i_label: np.ndarray,
             grid: TimeGrid | None = None) -> LossValue:
    """Mean over samples of (sqrt(I_out) - sqrt(I_label))^2."""
    i_out = np.asarray(i_out, dtype=np.float64)
    i_label = np.asarray(i_label, dtype=np.float64)
    if i_out.shape != i_label.shape:
        raise ValidationError(
            f"intensity shapes differ: {i_out.shape} vs {i_label.shape}")
    if grid is not None and i_out.shape[-1] != grid.total_samples:
        raise ValidationError("intensity length does not match grid")
    if np.any(i_out < 0) or np.any(i_label < 0):
        raise ValidationError("intensities must be non-negative")
    r = np.sqrt(i_out)
    c = np.sqrt(i_label)
    return LossValue(mse=float(np.mean((r - c) ** 2)))


@dataclass
class BatchResult:
    """Joint forward/backward result over a batch of input rows."""

    loss: float                 # mean per-row loss
    grad: ParamSet              # batch-mean gradient w.r.t. theta
    intensity: np.ndarray       # (rows, N) output intensities


def _reduce_to_levels(g_time: np.ndarray, grid: TimeGrid, levels_per_period: int,
                      half_period_offset: bool) -> np.ndarray:
    """Sum a per-time-sample gradient into per-level sums, undoing the
    circular alignment shift used when the profile was expanded."""
    shift = level_shift(grid, levels_per_period, half_period_offset)
    if shift:
        g_time = np.roll(g_time, -shift, axis=-1)
    size = grid.samples_per_period // levels_per_period
    rows = g_time.shape[0]
    n_levels = g_time.shape[-1] // size
    return g_time.reshape(rows, n_levels, size).sum(axis=-1)


def backward_batch(net: CompiledNetwork, theta: ParamSet, samples: np.ndarray,
                   sqrt_labels: np.ndarray) -> BatchResult:
    """Loss, gradient, and output intensities for a (rows, N) input batch.

    ``sqrt_labels`` are the square roots of the label intensities, one row
    per input row. The returned gradient is the mean of per-row gradients.
    """
    spec = net.spec
    grid = net.grid
    samples = np.atleast_2d(np.asarray(samples, dtype=np.complex128))
    sqrt_labels = np.atleast_2d(np.asarray(sqrt_labels, dtype=np.float64))
    if sqrt_labels.shape != samples.shape:
        raise ValidationError(
            f"label batch shape {sqrt_labels.shape} does not match input "
            f"batch shape {samples.shape}")

    factors = net.modulation_factors(theta)
    out, stages = net.run_with_factors(samples, factors, keep_intermediates=True)

    intensity = out.real ** 2 + out.imag ** 2
    r = np.sqrt(intensity)
    diff = r - sqrt_labels
    per_row = np.mean(diff ** 2, axis=-1)
    n_time = samples.shape[-1]

    # adjoint seed of e = mean_t (r - c)^2 w.r.t. the output field
    weight = np.where(r > ZERO_FIELD_GUARD,
                      diff / np.maximum(r, ZERO_FIELD_GUARD), 0.0)
    lam = (2.0 / n_time) * weight * out

    grads_by_layer = {}
    for l in reversed(range(len(spec.layers))):
        h = net.transfers[l]
        lam = _sfft.ifft(np.conj(h) * _sfft.fft(lam, axis=-1), axis=-1)
        f = factors[l]
        if f is not None:
            layer = spec.layers[l]
            entering, modulated = stages[l]
            g_phase = g_amp = None
            if f.phase_factor is not None:
                g_phase = np.imag(np.conj(lam) * modulated)
            if layer.modulation_mode in ("amplitude", "complex"):
                pre_amp = entering if f.phase_factor is None \
                    else entering * f.phase_factor
                g_amp = np.real(np.conj(lam) * pre_amp)
            grads_by_layer[l] = tuple(
                None if g is None else _reduce_to_levels(
                    g, grid, layer.levels_per_period, layer.half_period_offset)
                for g in (g_phase, g_amp))
            lam = lam * np.conj(f.factor)

    # sigmoid chain rule, then batch mean
    grad_layers = []
    for lp, i in zip(theta.layers, spec.modulated_indices):
        g_phase_lv, g_amp_lv = grads_by_layer[i]
        out_phase = out_amp = None
        if lp.phase is not None:
            s = expit(lp.phase)
            out_phase = g_phase_lv.mean(axis=0) * (TWO_PI * s * (1.0 - s))
        if lp.amplitude is not None:
            s = expit(lp.amplitude)
            out_amp = g_amp_lv.mean(axis=0) * (s * (1.0 - s))
        grad_layers.append(type(lp)(phase=out_phase, amplitude=out_amp))

    return BatchResult(loss=float(np.mean(per_row)),
                       grad=ParamSet(layers=grad_layers),
                       intensity=intensity)


def backward(spec: NetworkSpec, theta: ParamSet, input_field: ComplexField,
             i_label: np.ndarray):
    """Loss and exact gradient for a single sample.

    The loss equals loss_mse over the forward output exactly (one shared
    forward pass).
    """
    net = CompiledNetwork(spec)
    sqrt_label = np.sqrt(np.asarray(i_label, dtype=np.float64))
    res = backward_batch(net, theta, input_field.samples[None, :],
                         sqrt_label[None, :])
    loss = loss_mse(res.intensity[0], i_label)
    return loss, res.grad


def fd_gradient(spec: NetworkSpec, theta: ParamSet, input_field: ComplexField,
                i_label: np.ndarray, h: float = 1e-6) -> ParamSet:
    """Central-difference gradient, the oracle backward is checked against."""
    if not h > 0:
        raise ValidationError(f"step h must be positive, got {h}")
    vec = theta.to_vector()
    out = np.zeros_like(vec)
    for k in range(vec.size):
        probe = vec.copy()
        probe[k] = vec[k] + h
        e_plus = _loss_at(spec, probe, input_field, i_label)
        probe[k] = vec[k] - h
        e_minus = _loss_at(spec, probe, input_field, i_label)
        out[k] = (e_plus - e_minus) / (2.0 * h)
    return ParamSet.from_vector(spec, out)


def _loss_at(spec, vec, input_field, i_label) -> float:
    res = forward(spec, ParamSet.from_vector(spec, vec), input_field)
    return loss_mse(res.intensity, i_label).mse
