"""Reference emergency-braking simulator and the constrained parameter sampler.

Two vehicles drive in line. The target (lead) vehicle cruises until
``target_brake_onset`` and then brakes at a constant deceleration until it
stops. The ego vehicle cruises until its AEB triggers on time-to-collision,
waits ``aeb_latency`` and then brakes along a jerk-limited trapezoidal
profile that ends exactly at standstill.

Units follow the output channels: speeds in km/h, accelerations in m/s^2,
distances in m, times in s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import NamedTuple

import numpy as np

from aebsurro.errors import ConfigurationError, RejectedInputError, SamplingStalledError

KMH_PER_MS = 3.6

PARAM_NAMES = (
    "ego_speed0",
    "target_speed0",
    "target_brake_force",
    "initial_gap",
    "front_brake_eff",
    "rear_brake_eff",
    "aeb_latency",
)
CHANNELS = ("ego_speed", "ego_accel", "target_speed", "gap")

MAX_DRAWS_PER_SAMPLE = 10**6


@dataclass(frozen=True)
class ParameterVector:
    ego_speed0: float  # km/h
    target_speed0: float  # km/h
    target_brake_force: float  # m/s^2, negative
    initial_gap: float  # m
    front_brake_eff: float
    rear_brake_eff: float
    aeb_latency: float  # s

    @classmethod
    def from_array(cls, values) -> ParameterVector:
        values = [float(v) for v in values]
        if len(values) != len(PARAM_NAMES):
            raise RejectedInputError(f"expected {len(PARAM_NAMES)} parameters, got {len(values)}")
        return cls(*values)

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in PARAM_NAMES], dtype=float)

    def __iter__(self):
        return iter(self.as_array().tolist())


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    nominal: float | None = None


def _default_intervals():
    # Latency interval of [0, 55] read as hundredths of a second.
    return {
        "ego_speed0": Interval(48.0, 52.0, 50.0),
        "target_speed0": Interval(48.0, 52.0, 50.0),
        "target_brake_force": Interval(-8.5, -5.0, -6.0),
        "initial_gap": Interval(38.0, 42.0, 40.0),
        "front_brake_eff": Interval(0.4, 1.6, 1.0),
        "rear_brake_eff": Interval(0.4, 1.6, 1.0),
        "aeb_latency": Interval(0.0, 0.55, None),
    }


@dataclass(frozen=True)
class ParameterPriors:
    """Closed uniform interval per parameter, in ParameterVector units."""

    intervals: dict = field(default_factory=_default_intervals)

    def __post_init__(self):
        missing = set(PARAM_NAMES) - set(self.intervals)
        extra = set(self.intervals) - set(PARAM_NAMES)
        if missing or extra:
            raise ConfigurationError(f"priors must define exactly {PARAM_NAMES}")
        for name, iv in self.intervals.items():
            if not (math.isfinite(iv.lo) and math.isfinite(iv.hi)) or not iv.lo < iv.hi:
                raise ConfigurationError(f"prior for {name} needs finite lo < hi, got [{iv.lo}, {iv.hi}]")
            if iv.nominal is not None and not iv.lo <= iv.nominal <= iv.hi:
                raise ConfigurationError(f"nominal value of {name} lies outside its interval")

    @property
    def bounds(self) -> np.ndarray:
        """(7, 2) array of [lo, hi] in parameter order."""
        return np.array([[self.intervals[n].lo, self.intervals[n].hi] for n in PARAM_NAMES])

    @classmethod
    def from_dict(cls, data: dict) -> ParameterPriors:
        return cls({name: Interval(float(v["lo"]), float(v["hi"]),
                                   None if v.get("nominal") is None else float(v["nominal"]))
                    for name, v in data.items()})

    def to_dict(self) -> dict:
        out = {}
        for name in PARAM_NAMES:
            iv = self.intervals[name]
            out[name] = {"lo": iv.lo, "hi": iv.hi}
            if iv.nominal is not None:
                out[name]["nominal"] = iv.nominal
        return out


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.02
    horizon: float = 8.0
    target_brake_onset: float = 1.0
    aeb_ttc_threshold: float = 2.0
    base_ego_decel: float = -9.0
    jerk_limit: float = 30.0
    brake_bias: tuple = (0.7, 0.3)

    def __post_init__(self):
        object.__setattr__(self, "brake_bias", tuple(float(b) for b in self.brake_bias))
        self.validate()

    def validate(self):
        for f in fields(self):
            values = getattr(self, f.name)
            for v in values if isinstance(values, tuple) else (values,):
                if not math.isfinite(v):
                    raise ConfigurationError(f"{f.name} must be finite")
        if self.dt <= 0:
            raise ConfigurationError("dt must be positive")
        steps = self.horizon / self.dt
        if self.horizon <= 0 or abs(steps - round(steps)) > 1e-9:
            raise ConfigurationError("horizon must be a positive multiple of dt")
        if len(self.brake_bias) != 2 or abs(sum(self.brake_bias) - 1.0) > 1e-12:
            raise ConfigurationError("brake_bias must be a (front, rear) pair summing to 1")
        if min(self.brake_bias) < 0:
            raise ConfigurationError("brake_bias weights must be non-negative")
        if self.base_ego_decel >= 0:
            raise ConfigurationError("base_ego_decel must be negative")
        if self.jerk_limit <= 0:
            raise ConfigurationError("jerk_limit must be positive")
        if self.aeb_ttc_threshold <= 0:
            raise ConfigurationError("aeb_ttc_threshold must be positive")
        if self.target_brake_onset < 0:
            raise ConfigurationError("target_brake_onset must be non-negative")

    @property
    def n_steps(self) -> int:
        """Number of samples T, including t = 0."""
        return int(round(self.horizon / self.dt)) + 1

    def with_overrides(self, **kwargs) -> SimConfig:
        return replace(self, **kwargs)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["brake_bias"] = list(self.brake_bias)
        return d


@dataclass(frozen=True)
class ScenarioSeries:
    ego_speed: np.ndarray
    ego_accel: np.ndarray
    target_speed: np.ndarray
    gap: np.ndarray
    collision: bool
    dt: float

    @property
    def T(self) -> int:
        return len(self.gap)

    def as_array(self) -> np.ndarray:
        """Channels stacked in CHANNELS order, shape (4, T)."""
        return np.stack([self.ego_speed, self.ego_accel, self.target_speed, self.gap])

    def __eq__(self, other):
        if not isinstance(other, ScenarioSeries):
            return NotImplemented
        return (self.collision == other.collision and self.dt == other.dt
                and np.array_equal(self.as_array(), other.as_array()))

    __hash__ = None


class _BrakeProfile:
    """Jerk-limited deceleration from ``speed`` m/s to rest, starting at ``onset``.

    The acceleration ramps down at the jerk limit, holds the commanded
    deceleration and ramps back to zero so that it vanishes exactly when the
    speed does. Short stops never reach the commanded level (triangle).
    """

    def __init__(self, onset, speed, decel, jerk):
        if speed * jerk >= decel * decel:
            ramp = decel / jerk
            hold = speed / decel - ramp
            peak = decel
        else:
            ramp = math.sqrt(speed / jerk)
            hold = 0.0
            peak = jerk * ramp
        self.onset = onset
        self.jerk = jerk
        self.peak = peak
        # knots of the piecewise-linear deceleration magnitude
        self.knots = (onset, onset + ramp, onset + ramp + hold, onset + 2 * ramp + hold)
        self.stop_time = self.knots[3]

    def decel(self, t):
        t0, t1, t2, t3 = self.knots
        if t <= t0 or t >= t3:
            return 0.0
        if t < t1:
            return self.jerk * (t - t0)
        if t <= t2:
            return self.peak
        return self.jerk * (t3 - t)

    def speed_drop(self, a, b):
        """Integral of the deceleration magnitude over [a, b] (exact: piecewise linear)."""
        total = 0.0
        cuts = [a] + [k for k in self.knots if a < k < b] + [b]
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            total += 0.5 * (self.decel(lo) + self.decel(hi)) * (hi - lo)
        return total


def commanded_decel(p: ParameterVector, cfg: SimConfig) -> float:
    """Magnitude of the ego's commanded deceleration in m/s^2."""
    front, rear = cfg.brake_bias
    return -cfg.base_ego_decel * (front * p.front_brake_eff + rear * p.rear_brake_eff)


def simulate(p: ParameterVector, cfg: SimConfig | None = None) -> ScenarioSeries:
    """Run the scenario for ``cfg.horizon`` seconds.

    The gap follows the explicit Euler recurrence on the sampled speeds,
    ``gap[k+1] = max(0, gap[k] + dt * (target_speed[k] - ego_speed[k]) / 3.6)``.
    Speeds advance by the exact integral of the piecewise-linear acceleration
    over each step, which is what Euler gives whenever the acceleration is
    constant across the step.
    """
    cfg = SimConfig() if cfg is None else cfg
    cfg.validate()
    values = p.as_array() if isinstance(p, ParameterVector) else np.asarray(p, dtype=float)
    if values.shape != (len(PARAM_NAMES),) or not np.all(np.isfinite(values)):
        raise RejectedInputError(f"parameters must be {len(PARAM_NAMES)} finite numbers, got {values.tolist()}")
    p = ParameterVector.from_array(values)
    decel = commanded_decel(p, cfg)
    if decel <= 0:
        raise RejectedInputError("brake efficiencies give a non-positive commanded deceleration")

    n, dt = cfg.n_steps, cfg.dt
    ego = np.empty(n)
    accel = np.zeros(n)
    tgt = np.empty(n)
    gap = np.empty(n)
    ego[0], tgt[0], gap[0] = p.ego_speed0, p.target_speed0, p.initial_gap
    tgt_rate = KMH_PER_MS * p.target_brake_force
    brake = None
    collision = False

    for k in range(n - 1):
        t, t_next = k * dt, (k + 1) * dt
        if brake is None:
            closing = ego[k] - tgt[k]
            if closing > 0 and gap[k] / (closing / KMH_PER_MS) < cfg.aeb_ttc_threshold:
                brake = _BrakeProfile(t + p.aeb_latency, p.ego_speed0 / KMH_PER_MS, decel, cfg.jerk_limit)
        if brake is not None:
            accel[k] = 0.0 - brake.decel(t)

        # target: constant deceleration after onset, resting at zero
        braking_time = t_next - max(t, cfg.target_brake_onset)
        tgt[k + 1] = max(0.0, tgt[k] + tgt_rate * braking_time) if braking_time > 0 else tgt[k]

        if brake is None or t_next <= brake.onset:
            ego[k + 1] = ego[k]
        elif t_next >= brake.stop_time:
            ego[k + 1] = 0.0
        else:
            drop = brake.speed_drop(max(t, brake.onset), t_next)
            ego[k + 1] = max(0.0, ego[k] - KMH_PER_MS * drop)

        raw = gap[k] + dt * (tgt[k] - ego[k]) / KMH_PER_MS
        if raw <= 0.0:
            collision = True
            raw = 0.0
        gap[k + 1] = raw

    if brake is not None:
        accel[n - 1] = 0.0 - brake.decel((n - 1) * dt)
    return ScenarioSeries(ego, accel, tgt, gap, collision, dt)


class ConstraintCheck(NamedTuple):
    accepted: bool
    reasons: tuple

    def __bool__(self):
        return self.accepted


def check_constraints(p, priors: ParameterPriors | None = None) -> ConstraintCheck:
    """Admissibility of a parameter vector under the priors.

    Reasons are ``"interval:<name>"`` for an out-of-box coordinate and
    ``"ordering:ego_speed0<=target_speed0"`` when the ego is not strictly
    faster than the target.
    """
    priors = ParameterPriors() if priors is None else priors
    values = p.as_array() if isinstance(p, ParameterVector) else np.asarray(p, dtype=float)
    reasons = []
    for name, v in zip(PARAM_NAMES, values):
        iv = priors.intervals[name]
        if not (iv.lo <= v <= iv.hi):
            reasons.append(f"interval:{name}")
    if not values[0] > values[1]:
        reasons.append("ordering:ego_speed0<=target_speed0")
    return ConstraintCheck(not reasons, tuple(reasons))


def accept_mask(draws: np.ndarray, priors: ParameterPriors | None = None) -> np.ndarray:
    """Vectorised ``check_constraints(...).accepted`` over rows of ``draws``."""
    priors = ParameterPriors() if priors is None else priors
    b = priors.bounds
    inside = np.all((draws >= b[:, 0]) & (draws <= b[:, 1]), axis=1)
    return inside & (draws[:, 0] > draws[:, 1])


def draw_candidates(priors: ParameterPriors, n: int, rng: np.random.Generator) -> np.ndarray:
    """Raw independent uniform draws, before rejection. Shape (n, 7)."""
    b = priors.bounds
    return rng.uniform(b[:, 0], b[:, 1], size=(n, len(PARAM_NAMES)))


def sample_parameters(priors: ParameterPriors | None, n: int, rng_seed: int) -> list[ParameterVector]:
    priors = ParameterPriors() if priors is None else priors
    if n < 1:
        raise ConfigurationError("n must be at least 1")
    rng = np.random.default_rng(rng_seed)
    accepted = []
    since_last = 0
    while len(accepted) < n:
        batch = draw_candidates(priors, max(64, 2 * (n - len(accepted))), rng)
        ok = accept_mask(batch, priors)
        for row, good in zip(batch, ok):
            if good:
                accepted.append(ParameterVector.from_array(row))
                since_last = 0
                if len(accepted) == n:
                    break
            else:
                since_last += 1
                if since_last >= MAX_DRAWS_PER_SAMPLE:
                    raise SamplingStalledError(
                        f"{MAX_DRAWS_PER_SAMPLE} consecutive rejections after {len(accepted)} accepted samples")
    return accepted
