"""Datasets of (parameters, series) pairs and expert prediction cubes.

Both live on disk as JSON-lines. A dataset file starts with a header line
``{"dt", "T", "norm", "splits"}`` followed by one scenario per line; a
prediction file starts with ``{"expert_name", "T", "channels"}`` followed by
``{"id", "series"}`` lines holding normalized values. Python's float repr
round-trips exactly, so persistence is lossless.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from aebsurro.errors import (
    AlignmentError,
    ConfigurationError,
    DimensionError,
    NormalizationError,
    ParseError,
    SchemaError,
    ValidationError,
)
from aebsurro.sim import (
    CHANNELS,
    PARAM_NAMES,
    ParameterPriors,
    ParameterVector,
    ScenarioSeries,
    SimConfig,
    sample_parameters,
    simulate,
)

SPLITS = ("train", "validation", "test")


@dataclass(frozen=True)
class NormStats:
    """Per-channel (min, max) over the training split."""

    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        if not np.all(self.maxs > self.mins):
            bad = [c for c, lo, hi in zip(CHANNELS, self.mins, self.maxs) if not hi > lo]
            raise NormalizationError(f"degenerate channel range for {', '.join(bad)}")

    @classmethod
    def from_series(cls, series: np.ndarray) -> NormStats:
        """``series`` has shape (S, 4, T)."""
        return cls(series.min(axis=(0, 2)), series.max(axis=(0, 2)))

    def to_dict(self) -> dict:
        return {c: [float(lo), float(hi)] for c, lo, hi in zip(CHANNELS, self.mins, self.maxs)}

    @classmethod
    def from_dict(cls, d: dict) -> NormStats:
        return cls(np.array([d[c][0] for c in CHANNELS], dtype=float),
                   np.array([d[c][1] for c in CHANNELS], dtype=float))

    def __eq__(self, other):
        return (isinstance(other, NormStats) and np.array_equal(self.mins, other.mins)
                and np.array_equal(self.maxs, other.maxs))

    __hash__ = None


def normalize(series: np.ndarray, norm: NormStats) -> np.ndarray:
    """Affine map sending each channel's train range onto [0, 1]. Channels on axis -2."""
    series = np.asarray(series, dtype=float)
    return (series - norm.mins[:, None]) / (norm.maxs - norm.mins)[:, None]


def denormalize(values: np.ndarray, norm: NormStats) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    return values * (norm.maxs - norm.mins)[:, None] + norm.mins[:, None]


class Dataset:
    """Immutable collection of scenarios with split labels and train normalization.

    Arrays are stored in scenario order: ``params`` (S, 7), ``series`` (S, 4, T)
    in channel units and ``collision`` (S,).
    """

    def __init__(self, ids, params, series, collision, splits, norm=None, dt=0.02):
        self.ids = tuple(ids)
        self.params = np.array(params, dtype=float)
        self.series = np.array(series, dtype=float)
        self.collision = np.array(collision, dtype=bool)
        unlabeled = [i for i in self.ids if i not in splits]
        if unlabeled:
            raise AlignmentError("scenarios without a split label", missing=unlabeled)
        self.splits = {i: splits[i] for i in self.ids}
        self.dt = float(dt)
        self._validate()
        self.norm = norm if norm is not None else NormStats.from_series(self.series[self.split_indices("train")])
        for arr in (self.params, self.series, self.collision):
            arr.setflags(write=False)

    def _validate(self):
        if len(set(self.ids)) != len(self.ids):
            raise SchemaError("scenario ids are not unique")
        n = len(self.ids)
        if self.params.shape != (n, len(PARAM_NAMES)):
            raise SchemaError(f"params must have shape ({n}, {len(PARAM_NAMES)}), got {self.params.shape}")
        if self.series.ndim != 3 or self.series.shape[:2] != (n, len(CHANNELS)):
            raise SchemaError(f"series must have shape ({n}, {len(CHANNELS)}, T), got {self.series.shape}")
        if self.collision.shape != (n,):
            raise SchemaError("one collision flag per scenario required")
        bad = sorted({lab for lab in self.splits.values() if lab not in SPLITS})
        if bad:
            raise SchemaError(f"unknown split labels {bad}")
        if not any(lab == "train" for lab in self.splits.values()):
            raise SchemaError("dataset has no training scenarios")

    @property
    def T(self) -> int:
        return self.series.shape[2]

    def __len__(self):
        return len(self.ids)

    def split_indices(self, split: str) -> np.ndarray:
        return np.array([i for i, sid in enumerate(self.ids) if self.splits[sid] == split], dtype=int)

    def split_ids(self, split: str) -> tuple:
        return tuple(sid for sid in self.ids if self.splits[sid] == split)

    def split_sizes(self) -> dict:
        return {s: len(self.split_ids(s)) for s in SPLITS}

    def X(self, split: str) -> np.ndarray:
        return self.params[self.split_indices(split)]

    def Y(self, split: str, normalized: bool = True) -> np.ndarray:
        ys = self.series[self.split_indices(split)]
        return normalize(ys, self.norm) if normalized else ys

    def scenario(self, sid: str) -> tuple:
        i = self.ids.index(sid)
        s = self.series[i]
        return sid, ParameterVector.from_array(self.params[i]), ScenarioSeries(
            s[0].copy(), s[1].copy(), s[2].copy(), s[3].copy(), bool(self.collision[i]), self.dt)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.ids == other.ids and self.splits == other.splits and self.dt == other.dt
                and self.norm == other.norm and np.array_equal(self.params, other.params)
                and np.array_equal(self.series, other.series)
                and np.array_equal(self.collision, other.collision))

    __hash__ = None


def generate(priors: ParameterPriors | None = None, cfg: SimConfig | None = None,
             counts: dict | None = None, seed: int = 0) -> Dataset:
    """Sample parameters, simulate each scenario and assign train/validation/test in order."""
    priors = ParameterPriors() if priors is None else priors
    cfg = SimConfig() if cfg is None else cfg
    counts = {"train": 1000, "validation": 100, "test": 100} if counts is None else counts
    sizes = [int(counts[s]) for s in SPLITS]
    if min(sizes) < 1:
        raise ConfigurationError("every split needs at least one scenario")
    total = sum(sizes)
    params = sample_parameters(priors, total, seed)
    width = max(5, len(str(total - 1)))
    ids = [f"s{i:0{width}d}" for i in range(total)]
    labels = [s for s, n in zip(SPLITS, sizes) for _ in range(n)]
    runs = [simulate(p, cfg) for p in params]
    return Dataset(ids, [p.as_array() for p in params], [r.as_array() for r in runs],
                   [r.collision for r in runs], dict(zip(ids, labels)), dt=cfg.dt)


def atomic_write_text(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dumps(obj) -> str:
    return json.dumps(obj, allow_nan=False, separators=(",", ":"))


def save(dataset: Dataset, path):
    header = {"dt": dataset.dt, "T": dataset.T, "norm": dataset.norm.to_dict(), "splits": dataset.splits}
    lines = [_dumps(header)]
    for i, sid in enumerate(dataset.ids):
        lines.append(_dumps({
            "id": sid,
            "params": dataset.params[i].tolist(),
            "collision": bool(dataset.collision[i]),
            "series": {c: dataset.series[i, j].tolist() for j, c in enumerate(CHANNELS)},
        }))
    atomic_write_text(path, "\n".join(lines) + "\n")


def _read_jsonl(path):
    path = Path(path)
    records = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path.name}: invalid JSON ({exc.msg})", line=lineno) from None
            if not isinstance(rec, dict):
                raise ParseError(f"{path.name}: expected a JSON object", line=lineno)
            records.append((lineno, rec))
    if not records:
        raise ParseError(f"{path.name}: empty file", line=1)
    return records


def _series_block(rec, lineno, T, what):
    series = rec.get("series")
    sid = rec.get("id")
    if not isinstance(series, dict) or set(series) != set(CHANNELS):
        got = sorted(series) if isinstance(series, dict) else type(series).__name__
        raise SchemaError(f"{what} {sid!r} (line {lineno}): expected channels {list(CHANNELS)}, got {got}")
    rows = []
    for c in CHANNELS:
        values = series[c]
        if not isinstance(values, list) or len(values) != T:
            n = len(values) if isinstance(values, list) else "?"
            raise DimensionError(f"{what} {sid!r} (line {lineno}): channel {c} has {n} samples, expected T={T}")
        rows.append(values)
    try:
        return np.array(rows, dtype=float)
    except (TypeError, ValueError):
        raise SchemaError(f"{what} {sid!r} (line {lineno}): non-numeric series values") from None


def load(path) -> Dataset:
    records = _read_jsonl(path)
    lineno, header = records[0]
    for key in ("dt", "T", "norm", "splits"):
        if key not in header:
            raise ParseError(f"header is missing {key!r}", line=lineno)
    T = int(header["T"])
    ids, params, series, collision = [], [], [], []
    for lineno, rec in records[1:]:
        for key in ("id", "params", "collision", "series"):
            if key not in rec:
                raise ParseError(f"scenario record is missing {key!r}", line=lineno)
        sid = rec["id"]
        if not isinstance(rec["params"], list) or len(rec["params"]) != len(PARAM_NAMES):
            raise SchemaError(f"scenario {sid!r} (line {lineno}): expected {len(PARAM_NAMES)} params")
        ids.append(sid)
        params.append(rec["params"])
        collision.append(bool(rec["collision"]))
        series.append(_series_block(rec, lineno, T, "scenario"))
    if not ids:
        raise ParseError("no scenario records after the header", line=records[0][0] + 1)
    splits = header["splits"]
    if set(splits) != set(ids):
        raise AlignmentError("split labels do not match scenario ids",
                             missing=sorted(set(ids) - set(splits)), extra=sorted(set(splits) - set(ids)))
    norm = NormStats.from_dict(header["norm"])
    return Dataset(ids, params, series, collision, splits, norm=norm, dt=header["dt"])


@dataclass(frozen=True)
class PredictionCube:
    """Predicted normalized series for a set of scenarios, shape (S, 4, T)."""

    expert_name: str
    ids: tuple
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(self.ids))
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 3 or values.shape[:2] != (len(self.ids), len(CHANNELS)):
            raise DimensionError(f"cube for {self.expert_name} has shape {values.shape}, "
                                 f"expected ({len(self.ids)}, {len(CHANNELS)}, T)")
        if not np.all(np.isfinite(values)):
            raise ValidationError(f"cube for {self.expert_name} contains non-finite values")
        object.__setattr__(self, "values", values)

    @property
    def T(self) -> int:
        return self.values.shape[2]

    def subset(self, ids) -> PredictionCube:
        ids = tuple(ids)
        index = {sid: i for i, sid in enumerate(self.ids)}
        missing = [sid for sid in ids if sid not in index]
        if missing:
            raise AlignmentError(f"cube {self.expert_name} does not cover the requested ids", missing=missing)
        return PredictionCube(self.expert_name, ids, self.values[[index[sid] for sid in ids]])

    def for_split(self, dataset: Dataset, split: str) -> PredictionCube:
        return self.subset(dataset.split_ids(split))

    def renamed(self, name: str) -> PredictionCube:
        return PredictionCube(name, self.ids, self.values)

    def __eq__(self, other):
        if not isinstance(other, PredictionCube):
            return NotImplemented
        return (self.expert_name == other.expert_name and self.ids == other.ids
                and np.array_equal(self.values, other.values))

    __hash__ = None


def export_predictions(cube: PredictionCube, path):
    lines = [_dumps({"expert_name": cube.expert_name, "T": cube.T, "channels": list(CHANNELS)})]
    for i, sid in enumerate(cube.ids):
        lines.append(_dumps({"id": sid, "series": {c: cube.values[i, j].tolist() for j, c in enumerate(CHANNELS)}}))
    atomic_write_text(path, "\n".join(lines) + "\n")


def import_external_predictions(path, dataset: Dataset, splits=SPLITS, name: str | None = None) -> PredictionCube:
    """Read a prediction file and align it to the dataset ids of ``splits``.

    The file must cover exactly those ids; values are taken as normalized.
    """
    records = _read_jsonl(path)
    lineno, header = records[0]
    for key in ("expert_name", "T", "channels"):
        if key not in header:
            raise ParseError(f"prediction header is missing {key!r}", line=lineno)
    if list(header["channels"]) != list(CHANNELS):
        raise DimensionError(f"prediction channels {header['channels']} differ from {list(CHANNELS)}")
    if int(header["T"]) != dataset.T:
        raise DimensionError(f"prediction file has T={header['T']}, dataset has T={dataset.T}")
    by_id = {}
    for lineno, rec in records[1:]:
        if "id" not in rec or "series" not in rec:
            raise ParseError("prediction record needs 'id' and 'series'", line=lineno)
        if rec["id"] in by_id:
            raise SchemaError(f"duplicate prediction for id {rec['id']!r} (line {lineno})")
        block = _series_block(rec, lineno, dataset.T, "prediction")
        if not np.all(np.isfinite(block)):
            raise ValidationError(f"prediction {rec['id']!r} (line {lineno}) contains non-finite values")
        by_id[rec["id"]] = block
    wanted = [sid for sid in dataset.ids if dataset.splits[sid] in splits]
    missing = [sid for sid in wanted if sid not in by_id]
    extra = sorted(set(by_id) - set(wanted))
    if missing or extra:
        raise AlignmentError(f"{Path(path).name} does not match the {'/'.join(splits)} ids",
                             missing=missing, extra=extra)
    name = header["expert_name"] if name is None else name
    return PredictionCube(name, wanted, np.stack([by_id[sid] for sid in wanted]))


def prediction_file_ids(path) -> set:
    """Ids present in a prediction file (header excluded)."""
    return {rec.get("id") for _, rec in _read_jsonl(path)[1:]}

