"""Optimizers and the training loop.

Training minimizes the sqrt-intensity loss over shuffled mini-batches with
either plain gradient descent or Adam, a step-decay learning-rate schedule,
and several independently initialized restarts. The returned parameters are
the snapshot with the best test accuracy seen at any epoch of any restart
(cost breaks ties), matching an outcome-checked model-selection procedure.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .core import ValidationError
from .data import Dataset, make_label
from .evaluate import (
    batch_intensities,
    build_input_rows,
    class_peak_indices,
    correct_flags,
)
from .grad import backward_batch
from .network import CompiledNetwork, NetworkSpec, ParamSet, carrier_train

OPTIMIZERS = ("sgd", "adam")


class NumericFailure(RuntimeError):
    """Every restart aborted on non-finite loss."""


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"
    lr0: float = 0.01
    decay_factor: float = 0.3
    decay_every: int = 200
    batch_size: int = 6
    epochs: int = 1000
    restarts: int = 3
    seed: int = 0
    init_scale: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ValidationError(
                f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if not self.lr0 > 0:
            raise ValidationError(f"lr0 must be positive, got {self.lr0}")
        if not 0 < self.decay_factor <= 1:
            raise ValidationError(
                f"decay_factor must be in (0, 1], got {self.decay_factor}")
        if self.decay_every < 1 or self.batch_size < 1 or self.epochs < 1 \
                or self.restarts < 1:
            raise ValidationError(
                "decay_every, batch_size, epochs, restarts must all be >= 1")

    def lr_at(self, epoch: int) -> float:
        return self.lr0 * self.decay_factor ** (epoch // self.decay_every)


@dataclass
class TrainState:
    """Optimizer state over the flat parameter vector."""

    theta: np.ndarray
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def fresh(cls, theta: np.ndarray) -> "TrainState":
        return cls(theta=np.asarray(theta, dtype=np.float64),
                   m=np.zeros(theta.size), v=np.zeros(theta.size))


def sgd_step(state: TrainState, grad: np.ndarray, lr: float) -> TrainState:
    return TrainState(theta=state.theta - lr * grad, m=state.m, v=state.v,
                      step=state.step + 1)


def adam_step(state: TrainState, grad: np.ndarray, lr: float,
              beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> TrainState:
    k = state.step + 1
    m = beta1 * state.m + (1.0 - beta1) * grad
    v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** k)
    v_hat = v / (1.0 - beta2 ** k)
    theta = state.theta - lr * m_hat / (np.sqrt(v_hat) + eps)
    return TrainState(theta=theta, m=m, v=v, step=k)


@dataclass
class LogEntry:
    restart: int
    epoch: int
    cost: float
    train_acc: float
    test_acc: float
    lr: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class FitResult:
    best_theta: ParamSet
    best_restart: int
    best_epoch: int
    best_test_acc: float
    best_cost: float
    log: list
    aborted_restarts: list = field(default_factory=list)


def fit(spec: NetworkSpec, dataset: Dataset, config: TrainConfig) -> FitResult:
    """Multi-restart mini-batch training; returns the best-epoch snapshot.

    A restart whose loss turns non-finite is abandoned (logged in
    aborted_restarts) and the remaining restarts still run; if every restart
    aborts, NumericFailure is raised.
    """
    if dataset.num_periods != spec.num_periods:
        raise ValidationError(
            f"dataset spans {dataset.num_periods} periods, network expects "
            f"{spec.num_periods}")
    if len(dataset.train_idx) == 0 or len(dataset.test_idx) == 0:
        raise ValidationError("dataset has an empty split")

    net = CompiledNetwork(spec)
    grid = spec.grid
    npp = grid.samples_per_period
    carrier = carrier_train(spec).samples

    train_amps = dataset.amplitude_matrix(dataset.train_idx)
    test_amps = dataset.amplitude_matrix(dataset.test_idx)
    train_ids = dataset.class_ids(dataset.train_idx)
    test_ids = dataset.class_ids(dataset.test_idx)

    classes = sorted(dataset.spec.classes, key=lambda c: c.class_id)
    if [c.class_id for c in classes] != list(range(len(classes))):
        raise ValidationError("class ids must be 0..n_classes-1")
    sqrt_labels = np.stack([
        np.sqrt(make_label(c, grid, spec.pulse_shape,
                           dataset.pad_periods_each_side))
        for c in classes])
    peaks = class_peak_indices(classes, npp, dataset.pad_periods_each_side)
    train_peaks = peaks[train_ids]
    test_peaks = peaks[test_ids]

    n_train = train_amps.shape[0]
    step_fn = adam_step if config.optimizer == "adam" else None
    best = None   # (test_acc, -cost, theta copy, epoch, restart)
    log = []
    aborted = []

    for restart in range(config.restarts):
        rng = np.random.default_rng([config.seed, restart])
        state = TrainState.fresh(
            rng.uniform(-config.init_scale, config.init_scale,
                        size=spec.num_params()))
        failed = False
        for epoch in range(config.epochs):
            lr = config.lr_at(epoch)
            perm = rng.permutation(n_train)
            cost_sum = 0.0
            n_correct = 0
            for lo in range(0, n_train, config.batch_size):
                sel = perm[lo:lo + config.batch_size]
                rows = build_input_rows(carrier, train_amps[sel], npp)
                theta = ParamSet.from_vector(spec, state.theta)
                res = backward_batch(net, theta, rows, sqrt_labels[train_ids[sel]])
                if not np.isfinite(res.loss):
                    aborted.append((restart, epoch,
                                    f"non-finite loss {res.loss!r}"))
                    failed = True
                    break
                cost_sum += res.loss * sel.size
                n_correct += int(np.sum(correct_flags(
                    res.intensity, train_peaks[sel], npp)))
                g = res.grad.to_vector()
                if step_fn is adam_step:
                    state = adam_step(state, g, lr, config.beta1, config.beta2,
                                      config.eps)
                else:
                    state = sgd_step(state, g, lr)
            if failed:
                break

            theta = ParamSet.from_vector(spec, state.theta)
            factors = net.modulation_factors(theta)
            test_inten = batch_intensities(net, factors, carrier, test_amps)
            test_acc = float(np.mean(correct_flags(test_inten, test_peaks, npp)))
            entry = LogEntry(restart=restart, epoch=epoch,
                             cost=cost_sum / n_train,
                             train_acc=n_correct / n_train,
                             test_acc=test_acc, lr=lr)
            log.append(entry)
            key = (entry.test_acc, -entry.cost)
            if best is None or key > best[0]:
                best = (key, state.theta.copy(), epoch, restart)

    if best is None:
        raise NumericFailure(
            f"all {config.restarts} restarts aborted: {aborted}")
    key, theta_vec, epoch, restart = best
    return FitResult(best_theta=ParamSet.from_vector(spec, theta_vec),
                     best_restart=restart, best_epoch=epoch,
                     best_test_acc=key[0], best_cost=-key[1],
                     log=log, aborted_restarts=aborted)
