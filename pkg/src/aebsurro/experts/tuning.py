"""Grid search on the validation split."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from aebsurro.errors import ConfigurationError
from aebsurro.metrics import rmse_mean


@dataclass
class TuneResult:
    best: object
    best_params: dict
    table: list = field(default_factory=list)  # [(params, mean validation rmse)] in grid order


def grid_points(grid: dict) -> list[dict]:
    """Cartesian product in declaration order (last key varies fastest)."""
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ConfigurationError("hyperparameter grid must be non-empty")
    keys = list(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def tune(factory, grid: dict, dataset, fixed: dict | None = None) -> TuneResult:
    """Fit ``factory(**point, **fixed)`` for every grid point on train and keep the
    lowest mean validation RMSE; ties go to the earlier point."""
    fixed = fixed or {}
    X_train, Y_train = dataset.X("train"), dataset.Y("train")
    X_val, Y_val = dataset.X("validation"), dataset.Y("validation")
    table = []
    best = best_score = best_params = None
    for point in grid_points(grid):
        model = factory(**point, **fixed).fit(X_train, Y_train)
        score = rmse_mean(model.predict(X_val), Y_val)
        table.append((point, score))
        if best_score is None or score < best_score:
            best, best_score, best_params = model, score, point
    return TuneResult(best, best_params, table)
