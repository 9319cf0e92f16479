import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from aebsurro.errors import ConfigurationError, RejectedInputError
from aebsurro.sim import (
    PARAM_NAMES,
    ParameterPriors,
    ParameterVector,
    SimConfig,
    accept_mask,
    check_constraints,
    commanded_decel,
    draw_candidates,
    sample_parameters,
    simulate,
)
from oracles import closed_form_scenario

PRIORS = ParameterPriors()
BOUNDS = PRIORS.bounds


def in_box_vectors(n, seed):
    return sample_parameters(PRIORS, n, seed)


params_strategy = st.tuples(
    *[st.floats(float(lo), float(hi)) for lo, hi in BOUNDS]
).filter(lambda v: v[0] > v[1])


def test_constant_speed_when_target_never_brakes():
    cfg = SimConfig(horizon=2.0, target_brake_onset=5.0)
    s = simulate(ParameterVector(52, 48, -6, 40, 1, 1, 0), cfg)
    assert np.all(s.ego_speed == 52) and np.all(s.target_speed == 48)
    assert np.all(s.ego_accel == 0)
    assert s.gap[-1] == pytest.approx(40 - (4 / 3.6) * 2, abs=1e-9)
    assert round(s.gap[-1], 3) == 37.778
    assert not s.collision
    assert s.T == 101


def test_simulate_is_bit_deterministic():
    p = ParameterVector(51.3, 49.2, -7.1, 39.5, 0.8, 1.2, 0.31)
    a, b = simulate(p), simulate(p)
    assert a == b
    assert a.as_array().tobytes() == b.as_array().tobytes()


def test_nominal_like_matches_closed_form():
    cfg = SimConfig()
    p = ParameterVector(51, 49, -6, 40, 1, 1, 0.2)
    s = simulate(p, cfg)
    expected, collision = closed_form_scenario(list(p), cfg)
    assert s.T == 401
    assert np.max(np.abs(s.as_array() - expected)) < 1e-9
    assert s.collision == collision
    # the AEB actually fires and brings the ego to rest inside the horizon
    assert s.ego_accel.min() == pytest.approx(-9.0)
    assert s.ego_speed[-1] == 0.0


def test_random_in_box_vectors_match_closed_form():
    cfg = SimConfig()
    for p in in_box_vectors(40, seed=11):
        expected, collision = closed_form_scenario(list(p), cfg)
        s = simulate(p, cfg)
        assert np.max(np.abs(s.as_array() - expected)) < 1e-9
        assert s.collision == collision


def test_short_stop_uses_triangular_profile():
    # 5 km/h with strong brakes never reaches the commanded deceleration
    cfg = SimConfig(target_brake_onset=0.0)
    p = ParameterVector(5.0, 2.0, -8.0, 1.0, 1.6, 1.6, 0.0)
    s = simulate(p, cfg)
    expected, _ = closed_form_scenario(list(p), cfg)
    assert np.max(np.abs(s.as_array() - expected)) < 1e-9
    assert s.ego_accel.min() > -commanded_decel(p, cfg)


def test_collision_floors_gap():
    cfg = SimConfig()
    p = ParameterVector(52, 48.1, -8.5, 38, 0.4, 0.4, 0.55)
    s = simulate(p, cfg)
    assert s.collision
    assert s.gap.min() == 0.0
    expected, collision = closed_form_scenario(list(p), cfg)
    assert collision
    assert np.max(np.abs(s.as_array() - expected)) < 1e-9


def replay_gap(s):
    gap = np.empty_like(s.gap)
    gap[0] = s.gap[0]
    for k in range(len(gap) - 1):
        gap[k + 1] = max(0.0, gap[k] + s.dt * (s.target_speed[k] - s.ego_speed[k]) / 3.6)
    return gap


@settings(max_examples=40, deadline=None)
@given(params_strategy)
def test_series_invariants(values):
    cfg = SimConfig()
    p = ParameterVector(*values)
    s = simulate(p, cfg)
    arr = s.as_array()
    assert arr.shape == (4, cfg.n_steps)
    assert np.all(s.ego_speed >= 0) and np.all(s.target_speed >= 0) and np.all(s.gap >= 0)
    assert abs(s.gap[0] - p.initial_gap) < 1e-9
    assert np.array_equal(replay_gap(s), s.gap)

    t = np.arange(cfg.n_steps) * cfg.dt
    after = t >= cfg.target_brake_onset
    assert np.all(np.diff(s.target_speed[after]) <= 0)
    rest_by = cfg.target_brake_onset + p.target_speed0 / (3.6 * abs(p.target_brake_force)) + cfg.dt
    assert np.all(s.target_speed[t >= rest_by] == 0)

    decel = commanded_decel(p, cfg)
    assert np.all(s.ego_accel >= -decel - 1e-12)
    assert np.all(np.abs(np.diff(s.ego_accel)) / cfg.dt <= cfg.jerk_limit + 1e-9)


def test_accel_zero_before_trigger_plus_latency():
    cfg = SimConfig()
    p = ParameterVector(50.5, 49.5, -6, 40, 1, 1, 0.4)
    s = simulate(p, cfg)
    first = int(np.flatnonzero(s.ego_accel)[0])
    # find trigger by replaying the TTC rule on the outputs
    closing = (s.ego_speed - s.target_speed) / 3.6
    ttc = np.where(closing > 0, s.gap / np.where(closing > 0, closing, 1), np.inf)
    trig = int(np.flatnonzero(ttc < cfg.aeb_ttc_threshold)[0])
    assert first * cfg.dt > trig * cfg.dt + p.aeb_latency - 1e-12
    assert (first - 1) * cfg.dt <= trig * cfg.dt + p.aeb_latency + 1e-12


def test_non_finite_parameter_rejected():
    with pytest.raises(RejectedInputError):
        simulate(ParameterVector(50, 49, -6, math.nan, 1, 1, 0))


@pytest.mark.parametrize("overrides", [
    {"dt": 0.0},
    {"horizon": 8.01},
    {"brake_bias": (0.7, 0.31)},
    {"jerk_limit": -1.0},
    {"base_ego_decel": 2.0},
])
def test_bad_config_rejected(overrides):
    with pytest.raises(ConfigurationError):
        SimConfig(**overrides)


def test_config_brake_bias_tolerance():
    SimConfig(brake_bias=(0.7, 0.3 + 5e-13))


# -- constraints and sampler ----------------------------------------------------

def test_check_constraints_accepts_in_box():
    res = check_constraints(ParameterVector(50.1, 49.9, -6, 40, 1, 1, 0.1), PRIORS)
    assert res.accepted and res.reasons == ()


def test_slower_ego_rejected():
    res = check_constraints((48, 52, -6, 40, 1, 1, 0.1), PRIORS)
    assert not res.accepted
    assert res.reasons == ("ordering:ego_speed0<=target_speed0",)


def test_equal_speeds_rejected():
    res = check_constraints((50, 50, -6, 40, 1, 1, 0.1), PRIORS)
    assert not res
    assert "ordering:ego_speed0<=target_speed0" in res.reasons


@pytest.mark.parametrize("index,value,name", [
    (2, -4.0, "target_brake_force"),
    (4, 0.39, "front_brake_eff"),
    (5, 1.61, "rear_brake_eff"),
    (6, 0.56, "aeb_latency"),
])
def test_interval_violations(index, value, name):
    values = [50.1, 49.9, -6, 40, 1, 1, 0.1]
    values[index] = value
    res = check_constraints(values, PRIORS)
    assert not res.accepted
    assert res.reasons == (f"interval:{name}",)


def test_accept_mask_agrees_with_check_constraints():
    rng = np.random.default_rng(3)
    draws = draw_candidates(PRIORS, 500, rng)
    draws[::7, 2] = -4.0
    mask = accept_mask(draws, PRIORS)
    assert mask.tolist() == [check_constraints(row, PRIORS).accepted for row in draws]


def test_sampler_returns_exactly_n_and_is_seeded():
    a = sample_parameters(PRIORS, 257, rng_seed=5)
    b = sample_parameters(PRIORS, 257, rng_seed=5)
    c = sample_parameters(PRIORS, 257, rng_seed=6)
    assert len(a) == 257
    assert a == b
    assert a != c
    assert all(check_constraints(p, PRIORS).accepted for p in a)
    assert all(p.target_brake_force < 0 for p in a)


def test_sampler_rejects_zero_count():
    with pytest.raises(ConfigurationError):
        sample_parameters(PRIORS, 0, 1)


def test_acceptance_fraction_is_one_half():
    draws = draw_candidates(PRIORS, 10**5, np.random.default_rng(2024))
    frac = accept_mask(draws, PRIORS).mean()
    assert abs(frac - 0.5) < 0.02


def conditional_speed_cdfs(lo, hi):
    # (A, B) uniform on the square, conditioned on A > B
    width = hi - lo

    def ego_cdf(a):
        u = np.clip((a - lo) / width, 0, 1)
        return u**2

    def target_cdf(b):
        u = np.clip((b - lo) / width, 0, 1)
        return 1 - (1 - u) ** 2

    return ego_cdf, target_cdf


def test_sampler_marginals_ks():
    samples = np.array([p.as_array() for p in sample_parameters(PRIORS, 10**4, rng_seed=77)])
    lo, hi = BOUNDS[0]
    ego_cdf, target_cdf = conditional_speed_cdfs(lo, hi)
    assert stats.kstest(samples[:, 0], ego_cdf).statistic < 0.02
    assert stats.kstest(samples[:, 1], target_cdf).statistic < 0.02
    for j in range(2, len(PARAM_NAMES)):
        lo, hi = BOUNDS[j]
        d = stats.kstest(samples[:, j], stats.uniform(loc=lo, scale=hi - lo).cdf).statistic
        assert d < 0.02, PARAM_NAMES[j]


def test_priors_validation():
    from aebsurro.sim import Interval

    intervals = dict(PRIORS.intervals)
    intervals["initial_gap"] = Interval(42.0, 38.0)
    with pytest.raises(ConfigurationError):
        ParameterPriors(intervals)
    intervals = dict(PRIORS.intervals)
    intervals["initial_gap"] = Interval(38.0, 42.0, 45.0)
    with pytest.raises(ConfigurationError):
        ParameterPriors(intervals)


def test_priors_dict_round_trip():
    assert ParameterPriors.from_dict(PRIORS.to_dict()) == PRIORS
