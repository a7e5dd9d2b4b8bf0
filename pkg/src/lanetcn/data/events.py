"""Lane-change events and the synthetic kinematic generator.

The generator stands in for driving-simulator recordings: a subject vehicle
follows a constant-speed lead vehicle and performs one lane change whose
lateral position follows a half-cosine between two straight segments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ParameterError
from ..seeding import derived_seed

FEATURES = ("alpha", "x", "y", "dx", "dy", "dv")
SPEEDS = (60, 80, 100)
SAMPLE_RATE = 60.0
MIN_EVENT_SAMPLES = 224


@dataclass
class LaneChangeEvent:
    driver_id: int
    speed_kmh: int
    series: np.ndarray  # [n, 6], columns ordered as FEATURES
    dt: float = 1.0 / SAMPLE_RATE
    seed: int | None = None
    maneuver: tuple[int, int] | None = None  # (start index, sample count)

    def __post_init__(self):
        self.series = np.asarray(self.series, dtype=np.float64)
        if self.series.ndim != 2 or self.series.shape[1] != len(FEATURES):
            raise ParameterError(f"series must be [n, {len(FEATURES)}], got {self.series.shape}")

    def __len__(self) -> int:
        return len(self.series)

    @property
    def t(self) -> np.ndarray:
        return np.arange(len(self.series)) * self.dt

    def feature(self, name: str) -> np.ndarray:
        return self.series[:, FEATURES.index(name)]

    def features(self, names) -> np.ndarray:
        """[len(names), n] slice of the series."""
        return self.series[:, [FEATURES.index(n) for n in names]].T


@dataclass
class GeneratorConfig:
    n_drivers: int = 47
    speeds: tuple[int, ...] = SPEEDS
    lane_width: float = 3.5
    duration_mean: float = 5.0
    duration_sd: float = 1.0
    lead_in: tuple[float, float] = (0.5, 1.5)  # seconds, uniform range
    lead_out: tuple[float, float] = (0.5, 1.5)
    # steering ratio 15 x wheelbase 2.8 m, in degrees per unit curvature
    steering_gain: float = 15.0 * 2.8 * 180.0 / np.pi
    alpha_noise: float = 0.5  # stationary sd of the AR(1) steering noise, degrees
    alpha_noise_corr: float = 0.98
    speed_jitter: float = 0.02  # relative sd of subject speed around the scenario speed
    speed_jitter_corr: float = 0.995
    lead_gap: float = 30.0
    lead_wander: float = 0.05  # sd of the lead vehicle's lateral wander, meters
    dy_preview: float = 0.0  # seconds of future lateral position folded into dy

    def __post_init__(self):
        self.speeds = tuple(int(s) for s in self.speeds)
        self.lead_in = tuple(self.lead_in)
        self.lead_out = tuple(self.lead_out)


@dataclass
class DriverParams:
    driver_id: int
    duration: float  # lane-change duration in seconds
    extra: dict = field(default_factory=dict)


def make_drivers(config: GeneratorConfig, rng: np.random.Generator) -> list[DriverParams]:
    durations = rng.normal(config.duration_mean, config.duration_sd, size=config.n_drivers)
    return [DriverParams(i, float(max(d, 0.5))) for i, d in enumerate(durations)]


def _ar1(rng, n, sd, corr):
    """Stationary AR(1) with marginal sd ``sd``."""
    if sd == 0.0:
        return np.zeros(n)
    e = rng.normal(0.0, sd * np.sqrt(1.0 - corr**2), size=n)
    out = np.empty(n)
    out[0] = rng.normal(0.0, sd)
    for i in range(1, n):
        out[i] = corr * out[i - 1] + e[i]
    return out


def lateral_profile(t: np.ndarray, start: float, duration: float, width: float):
    """Half-cosine lane change: returns (y, y'') sampled at ``t``."""
    u = np.clip((t - start) / duration, 0.0, 1.0)
    y = 0.5 * width * (1.0 - np.cos(np.pi * u))
    inside = (t >= start) & (t < start + duration)
    ydd = np.where(inside, 0.5 * width * (np.pi / duration) ** 2 * np.cos(np.pi * u), 0.0)
    return y, ydd


def generate_synthetic_event(
    driver: DriverParams,
    speed_kmh: int,
    rng: np.random.Generator,
    config: GeneratorConfig | None = None,
    noise_scale: float = 1.0,
) -> LaneChangeEvent:
    """One lane change at ``speed_kmh``. ``noise_scale=0`` gives the noiseless kinematics."""
    config = config or GeneratorConfig()
    if speed_kmh not in SPEEDS:
        raise ParameterError(f"scenario speed must be one of {SPEEDS} km/h, got {speed_kmh}")
    dt = 1.0 / SAMPLE_RATE
    n_in = int(round(rng.uniform(*config.lead_in) * SAMPLE_RATE))
    n_out = int(round(rng.uniform(*config.lead_out) * SAMPLE_RATE))
    n_lc = int(round(driver.duration * SAMPLE_RATE))
    n_lc = max(n_lc, MIN_EVENT_SAMPLES - n_in - n_out)
    n = n_in + n_lc + n_out
    t = np.arange(n) * dt
    start, duration = n_in * dt, n_lc * dt

    y, ydd = lateral_profile(t, start, duration, config.lane_width)
    v_nom = speed_kmh / 3.6
    v = v_nom * (1.0 + noise_scale * _ar1(rng, n, config.speed_jitter, config.speed_jitter_corr))
    x = np.concatenate([[0.0], np.cumsum(v[:-1] * dt)])
    curvature = ydd / v_nom**2
    alpha = config.steering_gain * curvature + noise_scale * _ar1(rng, n, config.alpha_noise, config.alpha_noise_corr)

    x_lead = config.lead_gap + v_nom * t
    y_lead = noise_scale * _ar1(rng, n, config.lead_wander, 0.99)
    if config.dy_preview > 0:
        y_seen, _ = lateral_profile(t + config.dy_preview, start, duration, config.lane_width)
    else:
        y_seen = y
    dx = x_lead - x
    dy = y_seen - y_lead
    dv = v_nom - v
    series = np.column_stack([alpha, x, y, dx, dy, dv])
    return LaneChangeEvent(driver.driver_id, int(speed_kmh), series, dt, maneuver=(n_in, n_lc))


def generate_dataset(config: GeneratorConfig | None = None, seed: int = 0) -> list[LaneChangeEvent]:
    """``n_drivers x len(speeds)`` events; each event draws from its own derived seed."""
    config = config or GeneratorConfig()
    drivers = make_drivers(config, np.random.default_rng(derived_seed(seed, "drivers")))
    events = []
    for d in drivers:
        for speed in config.speeds:
            ev_seed = derived_seed(seed, "generator", d.driver_id, speed)
            ev = generate_synthetic_event(d, speed, np.random.default_rng(ev_seed), config)
            ev.seed = ev_seed
            events.append(ev)
    return events


def by_speed(events, speed_kmh: int) -> list[LaneChangeEvent]:
    return [e for e in events if e.speed_kmh == speed_kmh]
