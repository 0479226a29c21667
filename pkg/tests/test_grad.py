"""Loss and adjoint-gradient tests, including the finite-difference oracle."""

import numpy as np
import pytest

from talbotnet.core import ComplexField, ValidationError, talbot_gdd, sample_object
from talbotnet.grad import backward, backward_batch, fd_gradient, loss_mse
from talbotnet.network import (
    CompiledNetwork,
    LayerSpec,
    NetworkSpec,
    ParamSet,
    carrier_train,
    forward,
)


def build_spec(f_rep, pattern_periods, pad, spp, layer_plan):
    """layer_plan: list of (s_sign, mode_or_None, lpp, offset)."""
    layers = []
    for s, mode, lpp, off in layer_plan:
        layers.append(LayerSpec(
            gdd=talbot_gdd(f_rep, abs(s), +1 if s > 0 else -1),
            has_modulation=mode is not None,
            modulation_mode=mode or "phase",
            levels_per_period=lpp,
            half_period_offset=off))
    return NetworkSpec(f_rep=f_rep, pattern_periods=pattern_periods,
                       layers=tuple(layers), pad_periods_each_side=pad,
                       samples_per_period=spp)


def random_case(rng, spec):
    theta = ParamSet.random(spec, rng, scale=1.5)
    amps = rng.uniform(0.0, 1.0, size=spec.num_periods)
    field = sample_object(carrier_train(spec), amps)
    label_amp = rng.normal(size=spec.grid.total_samples) \
        + 1j * rng.normal(size=spec.grid.total_samples)
    i_label = 0.01 * (label_amp.real ** 2 + label_amp.imag ** 2)
    return theta, field, i_label


def rel_inf_error(grad, fd):
    g = grad.to_vector()
    f = fd.to_vector()
    return np.max(np.abs(g - f)) / max(np.max(np.abs(f)), 1e-30)


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------

def test_loss_zero_when_equal():
    i = np.array([0.0, 1.0, 4.0])
    assert loss_mse(i, i).mse == 0.0


def test_loss_known_value():
    # sqrt diffs are [1, 0]; mean of squares is 0.5
    assert loss_mse(np.array([4.0, 1.0]), np.array([1.0, 1.0])).mse == pytest.approx(0.5)


def test_loss_constant_against_zero_label():
    # zero label, constant intensity c: every sqrt diff is sqrt(c), mean c
    c = 2.7
    assert loss_mse(np.full(8, c), np.zeros(8)).mse == pytest.approx(c)


def test_loss_matches_direct_summation():
    rng = np.random.default_rng(5)
    i_out = rng.uniform(0, 3, size=64)
    i_label = rng.uniform(0, 3, size=64)
    direct = sum((np.sqrt(a) - np.sqrt(b)) ** 2
                 for a, b in zip(i_out, i_label)) / 64
    assert loss_mse(i_out, i_label).mse == pytest.approx(direct, rel=1e-12)


def test_loss_validation():
    with pytest.raises(ValidationError):
        loss_mse(np.zeros(4), np.zeros(5))
    with pytest.raises(ValidationError):
        loss_mse(np.array([-1.0]), np.array([1.0]))
    spec = build_spec(5e9, 2, 1, 16, [(1, "phase", 1, False)])
    with pytest.raises(ValidationError):
        loss_mse(np.zeros(3), np.zeros(3), spec.grid)


def test_backward_loss_bit_exact_with_forward_loss():
    rng = np.random.default_rng(0)
    spec = build_spec(5e9, 3, 2, 32, [(2, "phase", 2, False), (-2, "phase", 2, True)])
    theta, field, i_label = random_case(rng, spec)
    loss, _ = backward(spec, theta, field, i_label)
    ref = loss_mse(forward(spec, theta, field).intensity, i_label)
    assert loss.mse == ref.mse


# ---------------------------------------------------------------------------
# Gradient vs central finite differences
# ---------------------------------------------------------------------------

def gradient_cases():
    plans = [
        [(1, "phase", 1, False)],
        [(1, "phase", 1, True)],
        [(-1, "phase", 2, False)],
        [(1, "phase", 2, True)],
        [(2, "amplitude", 1, False)],
        [(-2, "amplitude", 2, True)],
        [(1, "complex", 1, False)],
        [(3, "complex", 2, True)],
        [(1, "phase", 1, False), (-1, "phase", 1, False)],
        [(1, "phase", 2, True), (-1, "phase", 2, False)],
        [(2, "phase", 2, False), (-2, "amplitude", 2, True)],
        [(1, None, 1, False), (1, "phase", 1, True)],
        [(1, "complex", 1, False), (-1, "complex", 1, True)],
        [(1, "phase", 1, False), (-1, "phase", 1, True), (1, "phase", 1, False)],
        [(2, "phase", 2, False), (-2, "phase", 2, True), (2, "phase", 2, False)],
        [(1, None, 1, False), (1, "phase", 1, True), (1, "phase", 1, False)],
        [(3, "amplitude", 1, False), (-3, "phase", 1, False)],
        [(1, "complex", 2, False)],
        [(-1, "phase", 1, True), (1, "amplitude", 1, False)],
        [(2, "phase", 1, False), (-2, "phase", 1, False), (2, "phase", 1, True)],
    ]
    cases = []
    for k, plan in enumerate(plans):
        f_rep = 5e9 if k % 2 == 0 else 12.056099998950e9
        spp = 16 if k % 3 else 32
        pp = 2 + (k % 2)
        cases.append((k, f_rep, pp, 1 + (k % 2), spp, plan))
    return cases


@pytest.mark.parametrize("k,f_rep,pp,pad,spp,plan", gradient_cases())
def test_gradient_matches_finite_differences(k, f_rep, pp, pad, spp, plan):
    rng = np.random.default_rng(100 + k)
    spec = build_spec(f_rep, pp, pad, spp, plan)
    theta, field, i_label = random_case(rng, spec)
    _, grad = backward(spec, theta, field, i_label)
    fd = fd_gradient(spec, theta, field, i_label, h=1e-6)
    assert rel_inf_error(grad, fd) < 1e-5


def test_gradient_zero_at_global_minimum():
    # label the network's own output: sqrt diffs vanish, so the adjoint
    # seed and every parameter gradient are exactly zero
    rng = np.random.default_rng(8)
    spec = build_spec(5e9, 2, 1, 32, [(1, "phase", 2, False), (-1, "phase", 2, True)])
    theta, field, _ = random_case(rng, spec)
    i_label = forward(spec, theta, field).intensity
    loss, grad = backward(spec, theta, field, i_label)
    assert loss.mse == 0.0
    assert np.all(grad.to_vector() == 0.0)


def test_gradient_zero_for_zero_input():
    spec = build_spec(5e9, 2, 1, 16, [(1, "phase", 1, False)])
    theta = ParamSet.zeros(spec)
    zero = ComplexField(grid=spec.grid,
                        samples=np.zeros(spec.grid.total_samples, np.complex128))
    label = np.ones(spec.grid.total_samples)
    loss, grad = backward(spec, theta, zero, label)
    assert np.isfinite(loss.mse)
    assert np.all(grad.to_vector() == 0.0)


def test_gradient_only_for_modulated_layers():
    spec = build_spec(5e9, 2, 1, 16, [(1, None, 1, False), (1, "phase", 1, False)])
    rng = np.random.default_rng(1)
    theta, field, i_label = random_case(rng, spec)
    _, grad = backward(spec, theta, field, i_label)
    assert len(grad.layers) == 1
    assert grad.layers[0].amplitude is None
    assert grad.layers[0].phase.shape == (spec.levels_in_layer(1),)


def test_descent_step_reduces_loss():
    rng = np.random.default_rng(2)
    spec = build_spec(5e9, 3, 1, 32, [(2, "phase", 2, False), (-2, "phase", 2, True)])
    theta, field, i_label = random_case(rng, spec)
    loss0, grad = backward(spec, theta, field, i_label)
    vec = theta.to_vector() - 0.5 * grad.to_vector()
    loss1 = loss_mse(forward(spec, ParamSet.from_vector(spec, vec), field).intensity,
                     i_label)
    assert loss1.mse < loss0.mse


# ---------------------------------------------------------------------------
# Batched backward
# ---------------------------------------------------------------------------

def test_batch_of_identical_rows_matches_single():
    rng = np.random.default_rng(3)
    spec = build_spec(5e9, 2, 1, 32, [(1, "phase", 2, True), (-1, "phase", 2, False)])
    theta, field, i_label = random_case(rng, spec)
    net = CompiledNetwork(spec)
    sqrt_label = np.sqrt(i_label)
    single = backward_batch(net, theta, field.samples[None, :],
                            sqrt_label[None, :])
    double = backward_batch(net, theta,
                            np.stack([field.samples, field.samples]),
                            np.stack([sqrt_label, sqrt_label]))
    assert double.loss == pytest.approx(single.loss, rel=1e-15)
    np.testing.assert_allclose(double.grad.to_vector(), single.grad.to_vector(),
                               rtol=1e-12, atol=0)


def test_batch_loss_and_grad_are_row_means():
    rng = np.random.default_rng(4)
    spec = build_spec(5e9, 2, 1, 32, [(1, "phase", 1, False)])
    theta, field_a, label_a = random_case(rng, spec)
    _, field_b, label_b = random_case(rng, spec)
    net = CompiledNetwork(spec)
    ra = backward_batch(net, theta, field_a.samples[None, :],
                        np.sqrt(label_a)[None, :])
    rb = backward_batch(net, theta, field_b.samples[None, :],
                        np.sqrt(label_b)[None, :])
    both = backward_batch(net, theta,
                          np.stack([field_a.samples, field_b.samples]),
                          np.sqrt(np.stack([label_a, label_b])))
    assert both.loss == pytest.approx(0.5 * (ra.loss + rb.loss), rel=1e-14)
    np.testing.assert_allclose(
        both.grad.to_vector(),
        0.5 * (ra.grad.to_vector() + rb.grad.to_vector()),
        rtol=1e-12, atol=1e-18)


def test_batch_shape_mismatch_rejected():
    spec = build_spec(5e9, 2, 1, 16, [(1, "phase", 1, False)])
    theta = ParamSet.zeros(spec)
    net = CompiledNetwork(spec)
    n = spec.grid.total_samples
    with pytest.raises(ValidationError):
        backward_batch(net, theta, np.zeros((2, n), np.complex128),
                       np.zeros((3, n)))


def test_fd_gradient_rejects_bad_step():
    spec = build_spec(5e9, 2, 1, 16, [(1, "phase", 1, False)])
    rng = np.random.default_rng(5)
    theta, field, i_label = random_case(rng, spec)
    with pytest.raises(ValidationError):
        fd_gradient(spec, theta, field, i_label, h=0.0)
