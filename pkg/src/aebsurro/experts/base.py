"""Common expert contract: fit on (params, normalized series), predict full series."""

from __future__ import annotations

import pickle
import time
from pathlib import Path

import numpy as np

from aebsurro.errors import ConfigurationError, DimensionError, NotFittedError, SchemaError
from aebsurro.sim import CHANNELS, PARAM_NAMES

MODEL_FORMAT = "aebsurro-model"
MODEL_VERSION = 1


class Expert:
    """Base class for every regressor in the benchmark.

    ``fit`` takes parameters of shape (n, 7) and normalized targets of shape
    (n, 4, T); ``predict`` returns (m, 4, T) for a 2-D input or (4, T) for a
    single parameter vector. Wall-clock timings are recorded on every call.
    """

    family = "expert"

    def __init__(self, name=None, **hyperparameters):
        self.name = name or self.family
        self.hyperparameters = hyperparameters
        self.fit_seconds = None
        self.predict_seconds_per_100 = None
        self.n_steps = None

    @property
    def is_fitted(self):
        return self.n_steps is not None

    def fit(self, X, Y):
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(PARAM_NAMES):
            raise DimensionError(f"X must have shape (n, {len(PARAM_NAMES)}), got {X.shape}")
        if Y.ndim != 3 or Y.shape[0] != X.shape[0] or Y.shape[1] != len(CHANNELS):
            raise DimensionError(f"Y must have shape ({X.shape[0]}, {len(CHANNELS)}, T), got {Y.shape}")
        start = time.perf_counter()
        self._fit(X, Y)
        self.fit_seconds = time.perf_counter() - start
        self.n_steps = Y.shape[2]
        return self

    def predict(self, X):
        if not self.is_fitted:
            raise NotFittedError(f"{self.name} must be fitted before predict")
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != len(PARAM_NAMES):
            raise DimensionError(f"X must have {len(PARAM_NAMES)} columns, got {X.shape[1]}")
        start = time.perf_counter()
        out = self._predict(X)
        elapsed = time.perf_counter() - start
        self.predict_seconds_per_100 = elapsed * 100.0 / len(X)
        out = out.reshape(len(X), len(CHANNELS), self.n_steps)
        return out[0] if single else out

    def _fit(self, X, Y):
        raise NotImplementedError

    def _predict(self, X):
        raise NotImplementedError

    def __repr__(self):
        hp = ", ".join(f"{k}={v!r}" for k, v in self.hyperparameters.items())
        return f"{type(self).__name__}(name={self.name!r}, {hp})"


class Standardizer:
    """Train mean / std scaling of the parameter columns; zero std maps to 1."""

    def fit(self, X):
        self.mean_ = X.mean(axis=0)
        std = X.std(axis=0)
        self.scale_ = np.where(std > 0, std, 1.0)
        return self

    def transform(self, X):
        return (X - self.mean_) / self.scale_


def check_positive_int(name, value, minimum=1):
    if int(value) != value or value < minimum:
        raise ConfigurationError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def save_model(model: Expert, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("wb") as fh:
        pickle.dump({"format": MODEL_FORMAT, "version": MODEL_VERSION, "model": model}, fh,
                    protocol=pickle.HIGHEST_PROTOCOL)
    tmp.replace(path)


def load_model(path) -> Expert:
    with Path(path).open("rb") as fh:
        payload = pickle.load(fh)
    if not isinstance(payload, dict) or payload.get("format") != MODEL_FORMAT:
        raise SchemaError(f"{path} is not a model artifact")
    if payload.get("version") != MODEL_VERSION:
        raise SchemaError(f"{path}: unsupported model version {payload.get('version')}")
    return payload["model"]
