"""Self-checks behind ``lanetcn verify``: gradients, causality, receptive
field, the Adam trace and min-max round trips."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .data import minmax_fit, normalize, denormalize
from .nn import ModelSpec, forward, init_params, receptive_field
from .optim import AdamState, adam_step, check_model_gradients

# Two Adam steps on a scalar from theta=0 with g = 1 then 0.5 and the default
# constants, evaluated at 50 significant digits.
ADAM_TRACE = (-0.0009999999950000000374999997, -0.001932179626351733023958196)


def positive_params(spec: ModelSpec, rng) -> dict:
    """Strictly positive weights and biases: with positive inputs every ReLU stays open."""
    return {k: rng.uniform(0.1, 1.0, size=v.shape) for k, v in init_params(spec, rng).items()}


def influence_boundary(spec: ModelSpec, seed: int = 0) -> int:
    """Number of trailing input steps that can change the final-step features of the last layer."""
    rng = np.random.default_rng(seed)
    spec = dataclasses.replace(spec, dropout=0.0)
    params = positive_params(spec, rng)
    L = spec.input_length
    x = rng.uniform(0.1, 1.0, size=(1, spec.input_dim, L))
    _, cache = forward(x, spec, params)
    base = cache.activations()[-1][:, 0, -1]
    reach = 0
    for r in range(L):
        xp = x.copy()
        xp[0, :, L - 1 - r] += 1.0
        _, c = forward(xp, spec, params)
        if np.any(c.activations()[-1][:, 0, -1] != base):
            reach = r + 1
    return reach


def causality_violation(spec: ModelSpec, params, x, probes: int, rng) -> float:
    """Largest change at any step < t in any intermediate activation after perturbing input step t."""
    spec = dataclasses.replace(spec, dropout=0.0)
    _, cache = forward(x, spec, params)
    base = cache.activations()
    L = x.shape[-1]
    worst = 0.0
    for _ in range(probes):
        t = int(rng.integers(1, L))
        xp = np.array(x, copy=True)
        xp[..., t] += rng.normal() * 10.0
        _, c = forward(xp, spec, params)
        for a, b in zip(base, c.activations()):
            worst = max(worst, float(np.max(np.abs(a[..., :t] - b[..., :t]))))
    return worst


def adam_trace() -> tuple[float, float]:
    params = {"theta": np.array([0.0])}
    state = AdamState()
    out = []
    for g in (1.0, 0.5):
        params, state = adam_step(params, {"theta": np.array([g])}, state)
        out.append(float(params["theta"][0]))
    return out[0], out[1]


@dataclass
class Check:
    name: str
    passed: bool
    measured: float
    limit: float

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name:<44} measured={self.measured:.3e} limit={self.limit:.1e}"


def small_specs() -> list[ModelSpec]:
    return [
        ModelSpec("tcn", 3, 2, 4, 16, levels=2, channels=4, kernel_size=2, dropout=0.0),
        ModelSpec("rnn", 3, 2, 4, 16, levels=1, channels=4, dropout=0.0),
        ModelSpec("cnn", 3, 2, 4, 16, levels=2, channels=4, kernel_size=2, dropout=0.0),
    ]


def run_checks(seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    checks = []
    for spec in small_specs():
        params = init_params(spec, rng)
        x = rng.normal(size=(2, spec.input_dim, spec.input_length))
        y = rng.normal(size=(2, spec.horizon, spec.output_dim))
        rep = check_model_gradients(spec, params, x, y, include_input=False)
        checks.append(Check(f"gradient check ({spec.family})", rep.passed, rep.worst[1], rep.tolerance))

    tcn = small_specs()[0]
    worst = 0.0
    for _ in range(5):
        params = init_params(tcn, rng)
        x = rng.normal(size=(1, tcn.input_dim, tcn.input_length))
        worst = max(worst, causality_violation(tcn, params, x, 20, rng))
    checks.append(Check("causality probe (100 perturbations)", worst == 0.0, worst, 0.0))

    for k in (2, 3):
        for levels in range(1, 6):
            spec = ModelSpec("tcn", 2, 1, 1, 1, levels=levels, channels=3, kernel_size=k, dropout=0.0)
            rf = receptive_field(spec)
            spec = dataclasses.replace(spec, input_length=rf + 8)
            got = influence_boundary(spec, seed)
            checks.append(Check(f"receptive field k={k} levels={levels} (={rf})", got == rf, float(got - rf), 0.0))

    t1, t2 = adam_trace()
    err = max(abs(t1 - ADAM_TRACE[0]), abs(t2 - ADAM_TRACE[1]))
    checks.append(Check("Adam two-step trace", err <= 1e-15, err, 1e-15))
    first = abs(t1 - (-0.001 / math.sqrt(1 + 1e-8)))
    checks.append(Check("Adam first step -lr/sqrt(1+eps)", first <= 1e-12, first, 1e-12))

    data = rng.normal(size=(50, 3, 20)) * [[[1.0], [100.0], [0.01]]]
    stats = minmax_fit(data, ("a", "b", "c"))
    z = normalize(data, stats)
    rt = float(np.max(np.abs(denormalize(z, stats) - data)))
    checks.append(Check("min-max round trip", rt <= 1e-12, rt, 1e-12))
    out_of_range = float(max(0.0, -z.min(), z.max() - 1.0))
    checks.append(Check("normalized training data inside [0, 1]", out_of_range == 0.0, out_of_range, 0.0))
    return checks
