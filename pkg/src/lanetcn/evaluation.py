"""Metrics, the (time step x horizon) grid search, baseline comparisons,
timing, feature ablations and per-scenario breakdowns.

Report values are stored unscaled; the x1e-4 presentation used by the
summary tables is applied only when rendering text.
"""

from __future__ import annotations

import csv
import io
import math
import statistics
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .data import FEATURES, PreparedData, denormalize, prepare
from .errors import ParameterError, ShapeError
from .nn import ModelSpec, default_spec, forward
from .optim import TrainConfig, mse_loss, predict, train

REPORT_COLUMNS = (
    "family", "horizon", "time_step", "speed", "inputs", "targets", "units",
    "mse", "mae", "n", "per_variable_mse", "us_per_step",
)


def _pair(y_hat, y):
    if np.shape(y_hat) != np.shape(y):
        raise ShapeError(f"shape mismatch {np.shape(y_hat)} vs {np.shape(y)}")
    a = np.asarray(y_hat, dtype=np.float64)
    b = np.asarray(y, dtype=np.float64)
    if a.ndim == 2:
        a, b = a[None], b[None]
    return a, b


def mae_metric(y_hat, y) -> float:
    """Absolute error summed over output variables, averaged over samples and steps."""
    a, b = _pair(y_hat, y)
    N, T, _ = a.shape
    return float(np.sum(np.abs(a - b)) / (T * N))


def mse_metric(y_hat, y) -> float:
    return mse_loss(y_hat, y)[0]


def per_variable_mse(y_hat, y) -> np.ndarray:
    """MSE contribution of each output variable; these sum to :func:`mse_metric`."""
    a, b = _pair(y_hat, y)
    N, T, _ = a.shape
    return np.sum((a - b) ** 2, axis=(0, 1)) / (T * N)


@dataclass
class Metrics:
    mse: float
    mae: float
    n: int
    per_variable: dict[str, float]


def metrics(y_hat, y, names: Sequence[str]) -> Metrics:
    pv = per_variable_mse(y_hat, y)
    return Metrics(mse_metric(y_hat, y), mae_metric(y_hat, y), int(np.shape(y)[0]), dict(zip(names, map(float, pv))))


@dataclass
class Evaluation:
    normalized: Metrics
    physical: Metrics | None
    predictions: np.ndarray  # normalized units, [N, T, D_out]


def evaluate(spec: ModelSpec, params, test_set, denormalize_units: bool = False) -> Evaluation:
    if test_set.L != spec.input_length or test_set.T != spec.horizon:
        raise ParameterError(
            f"test windows are (L={test_set.L}, T={test_set.T}); model expects "
            f"(L={spec.input_length}, T={spec.horizon})"
        )
    if len(test_set) == 0:
        raise ParameterError("empty test set")
    names = test_set.target_features
    y_hat = predict(spec, params, test_set.inputs)
    norm = metrics(y_hat, test_set.targets, names)
    phys = None
    if denormalize_units:
        st = test_set.stats.subset(names)
        phys = metrics(denormalize(y_hat, st, axis=2), denormalize(test_set.targets, st, axis=2), names)
    return Evaluation(norm, phys, y_hat)


@dataclass
class ReportRow:
    family: str
    horizon: int
    time_step: int
    speed: int | None
    inputs: tuple[str, ...]
    targets: tuple[str, ...]
    units: str
    mse: float
    mae: float
    n: int
    per_variable: dict[str, float] = field(default_factory=dict)
    us_per_step: float | None = None

    def key(self):
        return (self.family, self.horizon, self.time_step, self.speed or 0, "+".join(self.inputs), self.units)

    def as_csv_row(self) -> list[str]:
        pv = ";".join(f"{k}={v!r}" for k, v in self.per_variable.items())
        return [
            self.family, str(self.horizon), str(self.time_step), "" if self.speed is None else str(self.speed),
            "+".join(self.inputs), "+".join(self.targets), self.units, repr(self.mse), repr(self.mae),
            str(self.n), pv, "" if self.us_per_step is None else f"{self.us_per_step:.3f}",
        ]


def mae_bound_holds(row: ReportRow) -> bool:
    """Cauchy-Schwarz on the row's errors: MAE^2 <= D_out * MSE (D_out = 1 gives MAE^2 <= MSE)."""
    return row.mae**2 <= len(row.targets) * row.mse * (1 + 1e-12) + 1e-300


@dataclass
class EvalReport:
    rows: list[ReportRow] = field(default_factory=list)

    def add(self, row: ReportRow) -> None:
        self.rows.append(row)

    def sorted_rows(self) -> list[ReportRow]:
        return sorted(self.rows, key=ReportRow.key)

    def to_csv(self, include_timing: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in self.sorted_rows():
            cells = r.as_csv_row()
            if not include_timing:
                cells[-1] = ""
            w.writerow(cells)
        return buf.getvalue()

    def check_invariants(self) -> list[str]:
        problems = []
        for r in self.rows:
            if r.mse < 0 or r.mae < 0:
                problems.append(f"negative metric in {r.key()}")
            if not mae_bound_holds(r):
                problems.append(f"MAE^2 > D*MSE in {r.key()}")
        return problems


def row_from(ev: Evaluation, spec: ModelSpec, ds, speed, units="normalized") -> ReportRow:
    m = ev.normalized if units == "normalized" else ev.physical
    return ReportRow(spec.family, spec.horizon, spec.input_length, speed, ds.input_features, ds.target_features,
                     units, m.mse, m.mae, m.n, dict(m.per_variable))


@dataclass
class ExperimentConfig:
    """Everything needed to train and score one cell besides (family, L, T)."""

    inputs: tuple[str, ...] = ("alpha", "x", "y")
    targets: tuple[str, ...] = ("alpha",)
    speed: int | None = 60
    seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    model: dict = field(default_factory=dict)  # ModelSpec overrides, e.g. {"channels": 16}
    family_model: dict = field(default_factory=dict)  # per-family overrides, e.g. {"cnn": {"levels": 4}}


@dataclass
class CellResult:
    spec: ModelSpec
    params: dict
    data: PreparedData
    evaluation: Evaluation
    history: object

    @property
    def test_mse(self) -> float:
        return self.evaluation.normalized.mse


def fit_cell(family: str, L: int, T: int, events, exp: ExperimentConfig, data: PreparedData | None = None) -> CellResult:
    if data is None:
        data = prepare(events, L, T, exp.inputs, exp.targets, seed=exp.seed, speed=exp.speed)
    overrides = dict(exp.model)
    overrides.update(exp.family_model.get(family, {}))
    overrides.setdefault("dropout", exp.train.dropout)
    spec = default_spec(family, len(exp.inputs), len(exp.targets), T, L, **overrides)
    cfg = replace(exp.train, seed=exp.seed, dropout=spec.dropout)
    params, history = train(spec, data.train, data.val, cfg)
    return CellResult(spec, params, data, evaluate(spec, params, data.test, denormalize_units=True), history)


@dataclass
class GridResult:
    family: str
    mse: dict[tuple[int, int], float]
    sample_size: dict[tuple[int, int], int]
    skipped: list[tuple[int, int]]
    best_L: dict[int, int]

    def table(self) -> list[tuple[int, int, int]]:
        """(horizon, best time step, sample size) per horizon."""
        return [(T, L, self.sample_size[(L, T)]) for T, L in sorted(self.best_L.items())]


def select_best(mse: dict[tuple[int, int], float]) -> dict[int, int]:
    """argmin over L for each T; ties go to the smaller L."""
    best: dict[int, int] = {}
    for (L, T) in sorted(mse):
        if T not in best or mse[(L, T)] < mse[(best[T], T)]:
            best[T] = L
    return best


def grid_search(family: str, Ls: Sequence[int], Ts: Sequence[int], events, exp: ExperimentConfig, on_cell=None) -> GridResult:
    if not Ls or not Ts:
        raise ParameterError("candidate lists must be non-empty")
    mse, sizes, skipped = {}, {}, []
    for T in Ts:
        for L in Ls:
            try:
                cell = fit_cell(family, L, T, events, exp)
            except ParameterError:
                skipped.append((L, T))
                continue
            if len(cell.data.test) == 0:
                skipped.append((L, T))
                continue
            mse[(L, T)] = cell.test_mse
            sizes[(L, T)] = cell.data.sample_size
            if on_cell is not None:
                on_cell(L, T, cell)
    return GridResult(family, mse, sizes, skipped, select_best(mse))


def timing_benchmark(models: dict, inputs, repetitions: int = 50) -> dict[str, float]:
    """Median wall-clock microseconds for one batch-1 forward pass, per model.

    ``models`` maps a label to ``(spec, params)``. A warm-up pass is run first
    and excluded.
    """
    if repetitions < 10:
        raise ParameterError("use at least 10 repetitions")
    inputs = np.asarray(inputs)
    out = {}
    for name, (spec, params) in models.items():
        forward(inputs[:1], spec, params, "eval")
        samples = []
        for r in range(repetitions):
            xw = inputs[r % len(inputs)][None]
            t0 = time.perf_counter_ns()
            forward(xw, spec, params, "eval")
            samples.append((time.perf_counter_ns() - t0) / 1e3)
        out[name] = statistics.median(samples)
    return out


def ablation_subsets(direction: str, candidates=("dx", "dy", "dv"), base=("alpha", "x", "y")) -> dict[str, tuple[str, ...]]:
    """Leave-one-out from base+candidates (``remove``) or base plus one candidate (``add``)."""
    full = tuple(base) + tuple(candidates)
    if direction == "remove":
        return {f: tuple(x for x in full if x != f) for f in candidates}
    if direction == "add":
        return {f: tuple(base) + (f,) for f in candidates}
    raise ParameterError(f"direction must be 'remove' or 'add', got {direction!r}")


@dataclass
class SensitivityRow:
    label: str
    inputs: tuple[str, ...]
    mse: float
    mae: float


def sensitivity_analysis(subsets, L: int, T: int, events, exp: ExperimentConfig, family: str = "tcn") -> list[SensitivityRow]:
    """One TCN per input subset (target stays alpha); identical subsets share one fit."""
    items = list(subsets.items()) if isinstance(subsets, dict) else [("+".join(s), s) for s in subsets]
    fitted: dict[tuple[str, ...], Evaluation] = {}
    rows = []
    for label, subset in items:
        subset = tuple(subset)
        if not subset:
            raise ParameterError("feature subset must not be empty")
        bad = [f for f in subset if f not in FEATURES]
        if bad:
            raise ParameterError(f"unknown feature(s): {bad}")
        if subset not in fitted:
            cell_exp = replace(exp, inputs=subset, targets=("alpha",))
            fitted[subset] = fit_cell(family, L, T, events, cell_exp).evaluation
        m = fitted[subset].normalized
        rows.append(SensitivityRow(label, subset, m.mse, m.mae))
    return rows


def relative_improvement(mse_base: float, mse_tcn: float) -> float:
    """(base - tcn) / base."""
    if mse_base <= 0:
        raise ParameterError("baseline MSE must be positive")
    return (mse_base - mse_tcn) / mse_base


@dataclass
class ScenarioReport:
    rows: dict[tuple[str, int], Metrics]
    missing: list[tuple[str, int]]
    improvement: dict[tuple[str, int], float]  # (baseline family, speed) -> relative MSE gain of TCN


def scenario_report(cells: dict, families=("tcn", "rnn", "cnn"), speeds=(60, 80, 100)) -> ScenarioReport:
    """``cells`` maps (family, speed) to ``(spec, params, test_set)`` or to precomputed :class:`Metrics`."""
    rows, missing = {}, []
    for fam in families:
        for sp in speeds:
            item = cells.get((fam, sp))
            if item is None:
                missing.append((fam, sp))
                continue
            if isinstance(item, Metrics):
                rows[(fam, sp)] = item
            else:
                spec, params, ds = item
                rows[(fam, sp)] = evaluate(spec, params, ds).normalized
    improvement = {}
    for sp in speeds:
        if ("tcn", sp) not in rows:
            continue
        for fam in families:
            if fam != "tcn" and (fam, sp) in rows:
                improvement[(fam, sp)] = relative_improvement(rows[(fam, sp)].mse, rows[("tcn", sp)].mse)
    return ScenarioReport(rows, missing, improvement)


def prediction_dump(ds, y_hat) -> str:
    """CSV of every predicted value: window, step, variable, y, y_hat."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["window", "step", "variable", "y", "y_hat"])
    y = ds.targets
    for i in range(len(y)):
        for t in range(y.shape[1]):
            for d, name in enumerate(ds.target_features):
                w.writerow([i, t, name, repr(float(y[i, t, d])), repr(float(y_hat[i, t, d]))])
    return buf.getvalue()


def metrics_from_dump(text: str) -> tuple[float, float, int]:
    """Recompute (MSE, MAE, N) from a prediction dump."""
    reader = csv.DictReader(io.StringIO(text))
    sq = ab = 0.0
    windows, steps = set(), set()
    for r in reader:
        e = float(r["y_hat"]) - float(r["y"])
        sq += e * e
        ab += abs(e)
        windows.add(int(r["window"]))
        steps.add(int(r["step"]))
    denom = len(windows) * len(steps)
    return sq / denom, ab / denom, len(windows)


def render_scaled(value: float) -> str:
    """Value in the x1e-4 presentation units used by the summary tables."""
    return f"{value * 1e4:.2f}" if math.isfinite(value) else "nan"
