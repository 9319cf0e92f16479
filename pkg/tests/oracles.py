"""Independent reference computations used by the test-suite.

Nothing here imports the code paths it checks; each helper re-derives the
expected value from first principles (closed forms, brute force, dense
solves).
"""

import itertools
import math

import numpy as np

KMH = 3.6


def _reflect(partial_sums):
    # g_k = S_k - min(0, min_{j<=k} S_j): the recurrence g_{k+1} = max(0, g_k + d_k)
    running_min = np.minimum.accumulate(partial_sums)
    return partial_sums - np.minimum(0.0, running_min)


def _ego_closed_form(tau, v_b, decel, jerk):
    """Speed [m/s] and acceleration of a jerk-limited stop, tau seconds after onset."""
    tau = np.asarray(tau, dtype=float)
    if v_b >= decel * decel / jerk:
        ramp = decel / jerk
        hold = v_b / decel - ramp
    else:
        ramp = math.sqrt(v_b / jerk)
        hold = 0.0
        decel = jerk * ramp
    t_stop = 2 * ramp + hold
    speed = np.empty_like(tau)
    accel = np.empty_like(tau)
    pre = tau <= 0
    ramp_in = (tau > 0) & (tau <= ramp)
    holding = (tau > ramp) & (tau <= ramp + hold)
    ramp_out = (tau > ramp + hold) & (tau < t_stop)
    stopped = tau >= t_stop
    speed[pre] = v_b
    accel[pre] = 0.0
    speed[ramp_in] = v_b - 0.5 * jerk * tau[ramp_in] ** 2
    accel[ramp_in] = -jerk * tau[ramp_in]
    speed[holding] = v_b - 0.5 * decel * ramp - decel * (tau[holding] - ramp)
    accel[holding] = -decel
    left = t_stop - tau[ramp_out]
    speed[ramp_out] = 0.5 * jerk * left**2
    accel[ramp_out] = -jerk * left
    speed[stopped] = 0.0
    accel[stopped] = 0.0
    return speed, accel


def closed_form_scenario(params, cfg):
    """Piecewise constant-acceleration / constant-jerk kinematics on the sample grid.

    ``params`` is the 7-tuple in table order; ``cfg`` any object with the
    SimConfig attribute names. Returns (channels[4, T], collision).
    """
    v_ego0, v_tgt0, brake, gap0, eff_front, eff_rear, latency = [float(v) for v in params]
    n = int(round(cfg.horizon / cfg.dt)) + 1
    t = np.arange(n) * cfg.dt

    v_tgt = np.maximum(0.0, v_tgt0 + KMH * brake * np.maximum(0.0, t - cfg.target_brake_onset))

    def gap_for(v_ego):
        steps = cfg.dt * (v_tgt[:-1] - v_ego[:-1]) / KMH
        sums = np.concatenate([[gap0], gap0 + np.cumsum(steps)])
        return _reflect(sums), bool(np.any(sums[1:] <= 0.0))

    v_ego = np.full(n, v_ego0)
    accel = np.zeros(n)
    gap_cruise, _ = gap_for(v_ego)
    closing = v_ego - v_tgt
    trig = None
    for k in range(n):
        if closing[k] > 0 and gap_cruise[k] / (closing[k] / KMH) < cfg.aeb_ttc_threshold:
            trig = k
            break
    if trig is not None:
        onset = t[trig] + latency
        decel = -cfg.base_ego_decel * (cfg.brake_bias[0] * eff_front + cfg.brake_bias[1] * eff_rear)
        speed_ms, accel = _ego_closed_form(t - onset, v_ego0 / KMH, decel, cfg.jerk_limit)
        v_ego = np.where(t - onset <= 0, v_ego0, speed_ms * KMH)
    gap, collision = gap_for(v_ego)
    return np.stack([v_ego, accel, v_tgt, gap]), collision


def brute_force_neighbors(train_x, query, k):
    dists = [(float(np.sqrt(np.sum((row - query) ** 2))), i) for i, row in enumerate(train_x)]
    dists.sort()
    return [i for _, i in dists[:k]]


def exhaustive_best_split(x, y, min_leaf=1):
    """Scan every feature and every midpoint threshold; return (gain, feature, threshold)."""
    y = y.reshape(len(y), -1)
    n = len(y)
    total = float(np.sum((y - y.mean(axis=0)) ** 2))
    best = (-np.inf, None, None)
    for f in range(x.shape[1]):
        values = sorted(set(x[:, f].tolist()))
        for lo, hi in zip(values[:-1], values[1:]):
            thr = 0.5 * (lo + hi)
            left = x[:, f] <= thr
            if left.sum() < min_leaf or n - left.sum() < min_leaf:
                continue
            sse = 0.0
            for part in (y[left], y[~left]):
                sse += float(np.sum((part - part.mean(axis=0)) ** 2))
            gain = total - sse
            if gain > best[0] + 1e-12:
                best = (gain, f, thr)
    return best


def total_degree_indices(dim, degree):
    return [idx for idx in itertools.product(range(degree + 1), repeat=dim) if sum(idx) <= degree]


def loop_rmse_per_channel(pred, truth):
    """Naive double loop over (scenario, timestep) per channel."""
    n_s, n_c, n_t = truth.shape
    out = []
    for c in range(n_c):
        acc = 0.0
        for s in range(n_s):
            for t in range(n_t):
                acc += (pred[s, c, t] - truth[s, c, t]) ** 2
        out.append(math.sqrt(acc / (n_s * n_t)))
    return out


def loop_ewa_weights(sse_column, eta):
    """Plain softmax of -eta * summed squared error for one cell, using math.exp."""
    raw = [math.exp(-eta * s) for s in sse_column]
    total = sum(raw)
    return [r / total for r in raw]


def first_argmin_scan(values):
    """Index of the first minimum by linear scan."""
    best = 0
    for i, v in enumerate(values):
        if v < values[best]:
            best = i
    return best
