"""Per-(channel, timestep) hybrids and exponentially weighted aggregation.

All three ensembles are calibrated on one split from a loss array of shape
(expert, channel, timestep) holding the RMSE across that split's scenarios:

* Hybrid 1 picks, in every cell, the expert with the lowest loss;
* Hybrid 2 keeps the three experts Hybrid 1 uses most and picks among them;
* the aggregated model mixes all experts with weights proportional to
  ``exp(-eta * S * loss^2)``, i.e. the exponential of minus eta times the
  summed squared error of the S calibration scenarios.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from aebsurro.dataset import PredictionCube
from aebsurro.errors import AlignmentError, ConfigurationError, SchemaError
from aebsurro.metrics import rmse_mean, split_truth
from aebsurro.sim import CHANNELS


@dataclass(frozen=True)
class SelectionMap:
    pool: tuple  # expert names, in pool order
    choice: np.ndarray  # (channel, T) indices into pool
    split: str = "validation"

    def names(self) -> np.ndarray:
        return np.asarray(self.pool, dtype=object)[self.choice]

    def usage(self) -> dict:
        """Number of (channel, timestep) cells assigned to each pool member."""
        counts = np.bincount(self.choice.ravel(), minlength=len(self.pool))
        return {name: int(c) for name, c in zip(self.pool, counts)}

    def to_csv(self, dt: float) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["time", *CHANNELS])
        names = self.names()
        for t in range(self.choice.shape[1]):
            writer.writerow([_fmt_time(t, dt), *names[:, t]])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"pool": list(self.pool), "choice": self.choice.tolist(), "split": self.split}

    @classmethod
    def from_dict(cls, d: dict) -> SelectionMap:
        choice = np.asarray(d["choice"], dtype=np.intp)
        if choice.ndim != 2 or choice.min() < 0 or choice.max() >= len(d["pool"]):
            raise SchemaError("selection map references experts outside its pool")
        return cls(tuple(d["pool"]), choice, d.get("split", "validation"))


@dataclass(frozen=True)
class WeightField:
    experts: tuple
    weights: np.ndarray  # (expert, channel, T), each cell on the simplex
    eta: float
    split: str = "validation"

    def to_csv(self, dt: float) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["time", *(f"{c}/{e}" for c in CHANNELS for e in self.experts)])
        for t in range(self.weights.shape[2]):
            row = [repr(float(self.weights[j, c, t])) for c in range(len(CHANNELS)) for j in range(len(self.experts))]
            writer.writerow([_fmt_time(t, dt), *row])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"experts": list(self.experts), "eta": self.eta, "split": self.split,
                "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> WeightField:
        w = np.asarray(d["weights"], dtype=float)
        if w.ndim != 3 or w.shape[0] != len(d["experts"]):
            raise SchemaError("weight field shape does not match its expert list")
        return cls(tuple(d["experts"]), w, float(d["eta"]), d.get("split", "validation"))


def _fmt_time(step, dt):
    return f"{step * dt:.6f}"


def _check_cubes(cubes):
    cubes = list(cubes)
    if not cubes:
        raise ConfigurationError("at least one expert cube is required")
    ids, shape = cubes[0].ids, cubes[0].values.shape
    for cube in cubes[1:]:
        if cube.ids != ids or cube.values.shape != shape:
            raise AlignmentError(f"cube {cube.expert_name} is not aligned with {cubes[0].expert_name}")
    names = [c.expert_name for c in cubes]
    if len(set(names)) != len(names):
        raise ConfigurationError(f"expert names must be unique, got {names}")
    return cubes


def per_timestep_loss(cubes, dataset, split="validation") -> np.ndarray:
    """RMSE over the split's scenarios for every (expert, channel, timestep)."""
    cubes = _check_cubes(cubes)
    truth = split_truth(cubes[0], dataset, split)
    for cube in cubes[1:]:
        split_truth(cube, dataset, split)
    return np.stack([np.sqrt(np.mean((c.values - truth) ** 2, axis=0)) for c in cubes])


def build_hybrid1(losses, pool, split="validation") -> SelectionMap:
    losses = np.asarray(losses, dtype=float)
    if len(pool) < 2 or losses.shape[0] != len(pool):
        raise ConfigurationError("Hybrid 1 needs at least two experts with one loss slice each")
    # argmin returns the first minimum, i.e. the earlier expert on ties
    return SelectionMap(tuple(pool), np.argmin(losses, axis=0), split)


def mean_rmse_from_losses(losses) -> np.ndarray:
    """Per-expert mean over channels of the per-channel RMSE implied by per-timestep losses."""
    losses = np.asarray(losses, dtype=float)
    return np.sqrt(np.mean(losses**2, axis=2)).mean(axis=1)


def hybrid2_pool(losses, hybrid1: SelectionMap, size=3) -> tuple:
    """The ``size`` experts used most by Hybrid 1; ties go to the lower mean RMSE, then pool order."""
    if len(hybrid1.pool) < size:
        raise ConfigurationError(f"Hybrid 2 needs at least {size} experts, got {len(hybrid1.pool)}")
    usage = hybrid1.usage()
    mean = mean_rmse_from_losses(losses)
    ranked = sorted(range(len(hybrid1.pool)), key=lambda j: (-usage[hybrid1.pool[j]], mean[j], j))
    return tuple(sorted(ranked[:size]))


def build_hybrid2(losses, hybrid1: SelectionMap, size=3) -> SelectionMap:
    losses = np.asarray(losses, dtype=float)
    keep = hybrid2_pool(losses, hybrid1, size)
    sub = losses[list(keep)]
    return SelectionMap(tuple(hybrid1.pool[j] for j in keep), np.argmin(sub, axis=0), hybrid1.split)


def compute_ewa_weights(losses, eta, n_scenarios, experts=None, split="validation") -> WeightField:
    """Softmax of ``-eta * n_scenarios * losses^2`` over experts in every cell."""
    if not eta >= 0:
        raise ConfigurationError(f"eta must be non-negative, got {eta}")
    losses = np.asarray(losses, dtype=float)
    exponent = -float(eta) * n_scenarios * losses**2
    exponent -= exponent.max(axis=0, keepdims=True)
    w = np.exp(exponent)
    w /= w.sum(axis=0, keepdims=True)
    experts = tuple(experts) if experts is not None else tuple(f"expert{j}" for j in range(len(losses)))
    return WeightField(experts, w, float(eta), split)


def _cube_lookup(cubes, names):
    by_name = {c.expert_name: c for c in _check_cubes(cubes)}
    missing = [n for n in names if n not in by_name]
    if missing:
        raise AlignmentError(f"no predictions for referenced experts {missing}")
    return [by_name[n] for n in names]


def predict_hybrid(selection: SelectionMap, cubes, name="hybrid") -> PredictionCube:
    chosen = _cube_lookup(cubes, selection.pool)
    stacked = np.stack([c.values for c in chosen])  # (pool, S, channel, T)
    n_ch, n_t = selection.choice.shape
    out = np.take_along_axis(stacked, selection.choice[None, None, :, :], axis=0)[0]
    if out.shape[1:] != (n_ch, n_t):
        raise AlignmentError("selection map grid does not match the cubes")
    return PredictionCube(name, chosen[0].ids, out)


def predict_aggregated(weights: WeightField, cubes, name="aggregated") -> PredictionCube:
    chosen = _cube_lookup(cubes, weights.experts)
    stacked = np.stack([c.values for c in chosen])
    if stacked.shape[2:] != weights.weights.shape[1:]:
        raise AlignmentError("weight field grid does not match the cubes")
    return PredictionCube(name, chosen[0].ids, np.einsum("jsct,jct->sct", stacked, weights.weights))


def select_eta(cubes, dataset, eta_grid, split="validation"):
    """Learning rate from ``eta_grid`` minimising the aggregated model's mean RMSE on ``split``.

    Returns (eta, WeightField, [(eta, score)]); ties go to the earlier eta.
    """
    cubes = _check_cubes(cubes)
    losses = per_timestep_loss(cubes, dataset, split)
    truth = dataset.Y(split)
    names = [c.expert_name for c in cubes]
    n = len(dataset.split_ids(split))
    table, best = [], None
    for eta in eta_grid:
        field = compute_ewa_weights(losses, eta, n, names, split)
        score = rmse_mean(predict_aggregated(field, cubes), truth)
        table.append((float(eta), score))
        if best is None or score < best[1]:
            best = (field, score)
    if best is None:
        raise ConfigurationError("eta grid must be non-empty")
    return best[0].eta, best[0], table


class EnsembleModel:
    """Live predictor combining fitted experts through a SelectionMap or WeightField.

    Every referenced expert is evaluated on each call, so prediction cost is the
    sum of the members' costs plus the combination step.
    """

    def __init__(self, combiner, experts: dict, name=None):
        names = combiner.pool if isinstance(combiner, SelectionMap) else combiner.experts
        missing = [n for n in names if n not in experts]
        if missing:
            raise AlignmentError(f"no fitted model for referenced experts {missing}")
        self.combiner = combiner
        self.members = [experts[n] for n in names]
        self.name = name or ("hybrid" if isinstance(combiner, SelectionMap) else "aggregated")

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        stacked = np.stack([m.predict(np.atleast_2d(X)) for m in self.members])
        if isinstance(self.combiner, SelectionMap):
            out = np.take_along_axis(stacked, self.combiner.choice[None, None], axis=0)[0]
        else:
            out = np.einsum("jsct,jct->sct", stacked, self.combiner.weights)
        return out[0] if single else out
