"""Root-mean-squared error at the granularities used by the benchmark tables.

Arrays follow the cube layout (scenario, channel, timestep). All functions are
pure and work in whatever units they are given; the pipeline feeds them
normalized values.
"""

import numpy as np

from aebsurro.errors import AlignmentError, DimensionError


def rmse(u, v) -> float:
    """sqrt(mean((u - v)^2)) over two equal-length sequences."""
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    if u.shape != v.shape:
        raise DimensionError(f"length mismatch: {u.size} vs {v.size}")
    if u.size == 0:
        raise DimensionError("rmse needs at least one value")
    return float(np.sqrt(np.mean((u - v) ** 2)))


def _pair(pred, truth):
    pred = getattr(pred, "values", pred)
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape or pred.ndim != 3:
        raise AlignmentError(f"prediction shape {pred.shape} does not match truth {truth.shape}")
    return pred, truth


def rmse_per_timestep(pred, truth) -> np.ndarray:
    """(channels, T) array: RMSE across scenarios at each (channel, timestep)."""
    pred, truth = _pair(pred, truth)
    return np.sqrt(np.mean((pred - truth) ** 2, axis=0))


def rmse_per_channel(pred, truth) -> np.ndarray:
    """RMSE over every (scenario, timestep) residual of each channel."""
    pred, truth = _pair(pred, truth)
    return np.sqrt(np.mean((pred - truth) ** 2, axis=(0, 2)))


def rmse_mean(pred, truth) -> float:
    """Arithmetic mean of the per-channel RMSEs (not a pooled RMSE)."""
    return float(np.mean(rmse_per_channel(pred, truth)))


def split_truth(cube, dataset, split):
    """Normalized truth for ``split`` after checking the cube covers exactly its ids."""
    ids = dataset.split_ids(split)
    if tuple(cube.ids) != ids:
        missing = [i for i in ids if i not in set(cube.ids)]
        extra = [i for i in cube.ids if i not in set(ids)]
        raise AlignmentError(f"cube {cube.expert_name} is not aligned to the {split} split",
                             missing=missing, extra=extra)
    return dataset.Y(split)
