"""MSE loss, Adam, the training loop with best-weight checkpointing, and a
finite-difference gradient checker."""

from __future__ import annotations

import csv
import dataclasses
import io
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NumericError, ParameterError, ShapeError, StateError
from .nn import ModelSpec, forward, init_params, model_backward
from .seeding import stream

_MAX_STEPS = 2**53


def _as_ntd(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 2:
        a = a[None]
    if a.ndim != 3:
        raise ShapeError(f"expected [N, T, D] or [T, D], got {a.shape}")
    return a


def mse_loss(y_hat, y) -> tuple[float, np.ndarray]:
    """Squared error summed over output variables, averaged over samples and steps."""
    if np.shape(y_hat) != np.shape(y):
        raise ShapeError(f"shape mismatch {np.shape(y_hat)} vs {np.shape(y)}")
    yh, yt = _as_ntd(y_hat), _as_ntd(y)
    N, T, _ = yh.shape
    diff = yh - yt
    loss = float(np.sum(diff * diff) / (T * N))
    grad = (2.0 / (T * N)) * diff
    return loss, grad.reshape(np.shape(y_hat))


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ParameterError("beta1 and beta2 must lie in [0, 1)")
        if self.lr <= 0:
            raise ParameterError("learning rate must be positive")


def adam_step(params: dict, grads: dict, state: AdamState) -> tuple[dict, AdamState]:
    """One Adam update. Returns fresh parameter arrays; ``state`` is advanced in place.

    The update divides by sqrt(v_hat + eps), with eps under the root.
    """
    if state.t < 0 or state.t + 1 >= _MAX_STEPS:
        raise StateError(f"step counter out of range: {state.t}")
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    new = {}
    for name, theta in params.items():
        g = grads[name]
        if g.shape != theta.shape:
            raise ShapeError(f"{name}: grad {g.shape} vs param {theta.shape}")
        m = state.m.get(name, 0.0)
        v = state.v.get(name, 0.0)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        state.m[name], state.v[name] = m, v
        m_hat = m / c1
        v_hat = v / c2
        new[name] = theta - state.lr * m_hat / np.sqrt(v_hat + state.eps)
    return new, state


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 0.001
    dropout: float = 0.1
    seed: int = 0
    patience: int = 50

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ParameterError("epochs and batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ParameterError("learning rate must be positive")
        if self.patience < 1:
            raise ParameterError("patience must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ParameterError("dropout must be in [0, 1)")


@dataclass
class LossHistory:
    rows: list[tuple[int, float, float]] = field(default_factory=list)
    best_epoch: int = 0
    best_val: float = float("inf")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "train_mse", "val_mse"])
        for epoch, tr, va in self.rows:
            w.writerow([epoch, repr(tr), repr(va)])
        return buf.getvalue()


def dataset_mse(spec: ModelSpec, params, inputs, targets, chunk: int = 512) -> float:
    """Eval-mode MSE over a whole window set, accumulated in fixed chunk order."""
    inputs = np.asarray(inputs)
    targets = np.asarray(targets)
    if len(inputs) == 0:
        raise ParameterError("empty dataset")
    total = 0.0
    for s in range(0, len(inputs), chunk):
        y_hat, _ = forward(inputs[s : s + chunk], spec, params, "eval")
        d = y_hat - targets[s : s + chunk]
        total += float(np.sum(d * d))
    return total / (targets.shape[1] * len(inputs))


def predict(spec: ModelSpec, params, inputs, chunk: int = 512) -> np.ndarray:
    inputs = np.asarray(inputs)
    outs = [forward(inputs[s : s + chunk], spec, params, "eval")[0] for s in range(0, len(inputs), chunk)]
    return np.concatenate(outs, axis=0)


def _check_sets(spec, train_set, val_set):
    for name, ds in (("train", train_set), ("validation", val_set)):
        if ds is None or len(ds.inputs) == 0:
            raise ParameterError(f"{name} set is empty")
        if ds.inputs.shape[1:] != (spec.input_dim, spec.input_length):
            raise ParameterError(f"{name} inputs {ds.inputs.shape[1:]} do not fit the model input")
        if ds.targets.shape[1:] != (spec.horizon, spec.output_dim):
            raise ParameterError(f"{name} targets {ds.targets.shape[1:]} do not fit the model output")


def train(spec: ModelSpec, train_set, val_set, config: TrainConfig, params: dict | None = None, log=None):
    """Mini-batch Adam on MSE. Returns ``(best_params, history)``.

    History row 0 is the untrained model. The parameters with the lowest
    validation MSE (eval mode) are returned; training stops after
    ``config.epochs`` or ``config.patience`` epochs without improvement.
    """
    spec = dataclasses.replace(spec, dropout=config.dropout)
    _check_sets(spec, train_set, val_set)
    if params is None:
        params = init_params(spec, stream(config.seed, "init"))
    params = dict(params)
    shuffle_rng = stream(config.seed, "shuffle")
    dropout_rng = stream(config.seed, "dropout")
    state = AdamState(lr=config.learning_rate)
    X, Y = train_set.inputs, train_set.targets
    n = len(X)

    history = LossHistory()
    tr0 = dataset_mse(spec, params, X, Y)
    va0 = dataset_mse(spec, params, val_set.inputs, val_set.targets)
    history.rows.append((0, tr0, va0))
    history.best_val, history.best_epoch = va0, 0
    best = params
    stale = 0
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(n)
        total = 0.0
        for s in range(0, n, config.batch_size):
            idx = order[s : s + config.batch_size]
            y_hat, cache = forward(X[idx], spec, params, "train", dropout_rng)
            loss, g = mse_loss(y_hat, Y[idx])
            if not np.isfinite(loss):
                raise NumericError("training loss is not finite", epoch)
            grads, _ = model_backward(cache, g)
            params, state = adam_step(params, grads, state)
            total += loss * len(idx)
        tr = total / n
        va = _val_mse(spec, params, val_set)
        if not (np.isfinite(tr) and np.isfinite(va)):
            raise NumericError("loss is not finite", epoch)
        history.rows.append((epoch, tr, va))
        if log is not None:
            log(epoch, tr, va)
        if va < history.best_val:
            history.best_val, history.best_epoch, best = va, epoch, params
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    return dict(best), history


def _val_mse(spec, params, val_set) -> float:
    return dataset_mse(spec, params, val_set.inputs, val_set.targets)


@dataclass
class GradCheckReport:
    errors: dict[str, float]
    tolerance: float

    @property
    def worst(self) -> tuple[str, float]:
        name = max(self.errors, key=self.errors.get)
        return name, self.errors[name]

    @property
    def passed(self) -> bool:
        return all(e <= self.tolerance for e in self.errors.values())


def gradient_check(
    loss_fn: Callable[[dict], float],
    params: dict,
    analytic: dict,
    step: float = 1e-5,
    tolerance: float = 1e-4,
    floor: float = 1e-8,
) -> GradCheckReport:
    """Compare ``analytic`` gradients with central differences of ``loss_fn``.

    Relative error per entry is |a - n| / max(|a|, |n|, floor).
    """
    work = {k: np.array(v, dtype=np.float64, copy=True) for k, v in params.items()}
    errors = {}
    for name, arr in work.items():
        flat = arr.reshape(-1)
        a = np.asarray(analytic[name], dtype=np.float64).reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            fp = loss_fn(work)
            flat[i] = orig - step
            fm = loss_fn(work)
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise NumericError(f"non-finite loss while perturbing {name}[{i}]")
            num = (fp - fm) / (2.0 * step)
            err = abs(a[i] - num) / max(abs(a[i]), abs(num), floor)
            worst = max(worst, err)
        errors[name] = worst
    return GradCheckReport(errors, tolerance)


def check_model_gradients(spec: ModelSpec, params, x, y, step=1e-5, tolerance=1e-4, include_input=True):
    """Gradient check of the eval-mode MSE for every parameter (and the input)."""
    spec = dataclasses.replace(spec, dropout=0.0)
    y_hat, cache = forward(x, spec, params, "eval")
    _, g = mse_loss(y_hat, y)
    grads, gx = model_backward(cache, g)

    def loss_fn(p):
        p = dict(p)
        xin = p.pop("__input__", x)
        return mse_loss(forward(xin, spec, p, "eval")[0], y)[0]

    full = dict(params)
    analytic = dict(grads)
    if include_input:
        full["__input__"] = np.asarray(x, dtype=np.float64)
        analytic["__input__"] = gx
    return gradient_check(loss_fn, full, analytic, step, tolerance)
