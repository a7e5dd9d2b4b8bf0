"""Min-max scaling, sliding-window segmentation and per-driver splits."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DegenerateFeatureError, ParameterError, ShapeError, SplitError
from ..seeding import stream
from .events import FEATURES, LaneChangeEvent

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MinMaxStats:
    features: tuple[str, ...]
    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        mins = np.asarray(self.mins, dtype=np.float64)
        maxs = np.asarray(self.maxs, dtype=np.float64)
        if mins.shape != (len(self.features),) or maxs.shape != mins.shape:
            raise ParameterError("stats must hold one (min, max) per feature")
        if not np.all(maxs > mins):
            raise ParameterError("invalid stats: every max must exceed its min")
        object.__setattr__(self, "mins", mins)
        object.__setattr__(self, "maxs", maxs)

    def subset(self, names: Sequence[str]) -> "MinMaxStats":
        idx = [self.features.index(n) for n in names]
        return MinMaxStats(tuple(names), self.mins[idx], self.maxs[idx])

    def to_dict(self) -> dict:
        return {f: [float(lo), float(hi)] for f, lo, hi in zip(self.features, self.mins, self.maxs)}


def minmax_fit(windows, features: Sequence[str], axis: int = 1) -> MinMaxStats:
    """Per-feature extrema over training data.

    ``windows`` is an array with the feature dimension on ``axis`` (e.g.
    [N, D, L] windows) or a list of [D, n] arrays (e.g. whole event series).
    """
    if isinstance(windows, np.ndarray):
        if windows.size == 0:
            raise ParameterError("cannot fit normalization on an empty set")
        moved = np.moveaxis(windows, axis, 0).reshape(windows.shape[axis], -1)
    else:
        if len(windows) == 0:
            raise ParameterError("cannot fit normalization on an empty set")
        moved = np.concatenate([np.asarray(w, dtype=np.float64) for w in windows], axis=1)
    if moved.shape[0] != len(features):
        raise ShapeError(f"{moved.shape[0]} feature rows for {len(features)} names")
    mins, maxs = moved.min(axis=1), moved.max(axis=1)
    flat = [f for f, lo, hi in zip(features, mins, maxs) if not hi > lo]
    if flat:
        raise DegenerateFeatureError(f"constant feature(s) in training data: {', '.join(flat)}")
    return MinMaxStats(tuple(features), mins, maxs)


def _expand(v, ndim, axis):
    shape = [1] * ndim
    shape[axis] = -1
    return v.reshape(shape)


def normalize(x, stats: MinMaxStats, axis: int = 1) -> np.ndarray:
    """(x - min) / (max - min), per feature along ``axis``; out-of-range values pass through."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[axis] != len(stats.features):
        raise ShapeError(f"axis {axis} has {x.shape[axis]} features, stats cover {len(stats.features)}")
    lo, hi = _expand(stats.mins, x.ndim, axis), _expand(stats.maxs, x.ndim, axis)
    return (x - lo) / (hi - lo)


def denormalize(x, stats: MinMaxStats, axis: int = 1) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[axis] != len(stats.features):
        raise ShapeError(f"axis {axis} has {x.shape[axis]} features, stats cover {len(stats.features)}")
    lo, hi = _expand(stats.mins, x.ndim, axis), _expand(stats.maxs, x.ndim, axis)
    return x * (hi - lo) + lo


@dataclass
class WindowedDataset:
    inputs: np.ndarray  # [N, D, L]
    targets: np.ndarray  # [N, T, D_out]
    L: int
    T: int
    input_features: tuple[str, ...]
    target_features: tuple[str, ...]
    event_index: np.ndarray  # source event of each window
    offset: np.ndarray  # window start within its event
    stats: MinMaxStats | None = None
    skipped: int = 0

    def __len__(self) -> int:
        return len(self.inputs)

    def take(self, idx) -> "WindowedDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return replace(self, inputs=self.inputs[idx], targets=self.targets[idx],
                       event_index=self.event_index[idx], offset=self.offset[idx])

    def normalized(self, stats: MinMaxStats) -> "WindowedDataset":
        return replace(
            self,
            inputs=normalize(self.inputs, stats.subset(self.input_features), axis=1),
            targets=normalize(self.targets, stats.subset(self.target_features), axis=2),
            stats=stats,
        )

    def keys(self) -> set[tuple[int, int]]:
        return set(zip(self.event_index.tolist(), self.offset.tolist()))


def window_count(lengths, L: int, T: int) -> int:
    return sum(max(n - L - T + 1, 0) for n in lengths)


def slide_windows(
    events: Sequence[LaneChangeEvent],
    L: int,
    T: int,
    input_features: Sequence[str] = ("alpha", "x", "y"),
    target_features: Sequence[str] | None = None,
    event_ids: Sequence[int] | None = None,
) -> WindowedDataset:
    """Every window with input steps [j, j+L) and target steps [j+L, j+L+T).

    Events shorter than L+T contribute nothing and are counted in ``skipped``.
    """
    if L < 1 or T < 1:
        raise ParameterError(f"L and T must be >= 1, got L={L}, T={T}")
    input_features = tuple(input_features)
    target_features = tuple(target_features or input_features)
    for f in input_features + target_features:
        if f not in FEATURES:
            raise ParameterError(f"unknown feature {f!r}")
    event_ids = list(range(len(events))) if event_ids is None else list(event_ids)
    xs, ys, eidx, offs = [], [], [], []
    skipped = 0
    for eid, ev in zip(event_ids, events):
        n = len(ev)
        count = n - L - T + 1
        if count < 1:
            skipped += 1
            continue
        src = ev.features(input_features)  # [D, n]
        tgt = ev.features(target_features)  # [D_out, n]
        xs.append(sliding_window_view(src[:, : n - T], L, axis=1).transpose(1, 0, 2)[:count])
        ys.append(sliding_window_view(tgt[:, L:], T, axis=1).transpose(1, 2, 0)[:count])
        eidx.append(np.full(count, eid))
        offs.append(np.arange(count))
    if skipped:
        log.warning("skipped %d event(s) shorter than L+T=%d", skipped, L + T)
    D, Do = len(input_features), len(target_features)
    inputs = np.concatenate(xs) if xs else np.zeros((0, D, L))
    targets = np.concatenate(ys) if ys else np.zeros((0, T, Do))
    return WindowedDataset(
        np.ascontiguousarray(inputs),
        np.ascontiguousarray(targets),
        L,
        T,
        input_features,
        target_features,
        np.concatenate(eidx) if eidx else np.zeros(0, dtype=np.int64),
        np.concatenate(offs) if offs else np.zeros(0, dtype=np.int64),
        skipped=skipped,
    )


@dataclass
class EventSplit:
    train: list[int]  # event indices into the original list
    test: list[int]


def split_by_driver(events: Sequence[LaneChangeEvent], seed: int) -> EventSplit:
    """Per driver, floor(2/3) of the events (seeded pick) go to training, the rest to test."""
    per_driver: dict[int, list[int]] = {}
    for i, ev in enumerate(events):
        per_driver.setdefault(ev.driver_id, []).append(i)
    train, test = [], []
    for driver in sorted(per_driver):
        idx = per_driver[driver]
        if len(idx) < 2:
            raise SplitError(f"driver {driver} has {len(idx)} event(s); at least 2 are needed")
        order = stream(seed, "split", driver).permutation(len(idx))
        n_train = (2 * len(idx)) // 3
        train += [idx[j] for j in order[:n_train]]
        test += [idx[j] for j in order[n_train:]]
    return EventSplit(sorted(train), sorted(test))


def holdout_validation(ds: WindowedDataset, seed: int, fraction: float = 0.2):
    """Move a seeded floor(fraction * N) of the windows into a validation set."""
    n_val = int(np.floor(fraction * len(ds)))
    order = stream(seed, "validation").permutation(len(ds))
    val_idx, train_idx = np.sort(order[:n_val]), np.sort(order[n_val:])
    return ds.take(train_idx), ds.take(val_idx)


@dataclass
class PreparedData:
    train: WindowedDataset
    val: WindowedDataset
    test: WindowedDataset
    stats: MinMaxStats
    sample_size: int  # windows over all events used (train pool + test)
    split: EventSplit = field(repr=False)


def prepare(
    events: Sequence[LaneChangeEvent],
    L: int,
    T: int,
    input_features: Sequence[str] = ("alpha", "x", "y"),
    target_features: Sequence[str] | None = None,
    seed: int = 0,
    speed: int | None = None,
) -> PreparedData:
    """Split by driver, optionally keep one scenario speed, window, hold out
    validation, and min-max scale everything with training-pool statistics."""
    split = split_by_driver(events, seed)
    keep = (lambda i: True) if speed is None else (lambda i: events[i].speed_kmh == speed)
    train_ids = [i for i in split.train if keep(i)]
    test_ids = [i for i in split.test if keep(i)]
    input_features = tuple(input_features)
    target_features = tuple(target_features or input_features)
    pool = slide_windows([events[i] for i in train_ids], L, T, input_features, target_features, train_ids)
    test = slide_windows([events[i] for i in test_ids], L, T, input_features, target_features, test_ids)
    if len(pool) == 0:
        raise ParameterError(f"no training windows for L={L}, T={T}")
    names = tuple(dict.fromkeys(input_features + target_features))
    used = sorted(set(pool.event_index.tolist()))
    stats = minmax_fit([events[i].features(names) for i in used], names)
    train, val = holdout_validation(pool, seed)
    return PreparedData(
        train.normalized(stats),
        val.normalized(stats),
        test.normalized(stats),
        stats,
        len(pool) + len(test),
        split,
    )
