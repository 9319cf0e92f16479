"""Benchmark report: scores per model and split, invariant checks, table/figure files.

Every RMSE is in normalized units; table files present them multiplied by 100
(the "x1e-2" convention). Timing and throughput numbers depend on the machine,
so they live in their own files (table6, table7) and under the ``timings`` and
``throughput`` keys of summary.json; every other file is a deterministic
function of the inputs.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from aebsurro.dataset import SPLITS, atomic_write_text
from aebsurro.ensemble import SelectionMap, WeightField
from aebsurro.errors import InvariantError
from aebsurro.metrics import rmse_per_channel, rmse_per_timestep, split_truth
from aebsurro.sim import CHANNELS, sample_parameters

UNITS_NOTE = "RMSE in normalized units (per-channel min-max over train); tables show values x1e-2"
ENSEMBLE_LABELS = {"hybrid1": "Hybrid 1", "hybrid2": "Hybrid 2", "aggregated": "Aggregated"}
TOL = 1e-12


@dataclass
class ModelScores:
    name: str
    kind: str  # "expert", "imported" or "ensemble"
    channels: dict  # split -> (4,) per-channel RMSE, missing when not evaluated
    curve: np.ndarray  # (4, T) validation RMSE per timestep

    def mean(self, split):
        per = self.channels.get(split)
        return None if per is None else float(np.mean(per))


@dataclass
class BenchmarkReport:
    dt: float
    T: int
    split_sizes: dict
    experts: list  # ModelScores, pool order
    ensembles: list  # ModelScores for hybrid1, hybrid2, aggregated
    hybrid1: SelectionMap
    hybrid2: SelectionMap
    weights: WeightField
    eta_table: list = field(default_factory=list)
    hyperparameters: dict = field(default_factory=dict)
    tuning: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)  # model -> {"training_seconds", "prediction_seconds_per_100"}
    throughput: list = field(default_factory=list)
    invariants: dict = field(default_factory=dict)

    def model(self, name) -> ModelScores:
        for m in self.experts + self.ensembles:
            if m.name == name:
                return m
        raise KeyError(name)

    @property
    def aggregated_degradation(self):
        agg = self.model("aggregated")
        return agg.mean("test") - agg.mean("validation")


def score_cube(name, kind, cubes_by_split: dict, dataset) -> ModelScores:
    """Per-channel RMSE on each available split plus the validation per-timestep curve."""
    channels = {}
    curve = None
    for split in SPLITS:
        cube = cubes_by_split.get(split)
        if cube is None:
            continue
        truth = split_truth(cube, dataset, split)
        channels[split] = rmse_per_channel(cube, truth)
        if split == "validation":
            curve = rmse_per_timestep(cube, truth)
    return ModelScores(name, kind, channels, curve)


def check_invariants(report: BenchmarkReport) -> dict:
    """Calibration-split consistency checks; each entry is True when it held."""
    h1, h2 = report.hybrid1, report.hybrid2
    curves = {m.name: m.curve for m in report.experts}
    h1_scores, h2_scores = report.model("hybrid1"), report.model("hybrid2")
    pool_min = np.min([curves[n] for n in h1.pool], axis=0)
    pool2_min = np.min([curves[n] for n in h2.pool], axis=0)
    per_channel = {m.name: m.channels["validation"] for m in report.experts}
    h1_ch, h2_ch = h1_scores.channels["validation"], h2_scores.channels["validation"]
    pool2_ch = np.min([per_channel[n] for n in h2.pool], axis=0)
    w = report.weights.weights
    finite = all(
        np.all(np.isfinite(v)) for m in report.experts + report.ensembles for v in m.channels.values()
    ) and all(np.all(np.isfinite(m.curve)) for m in report.experts + report.ensembles)
    return {
        "hybrid1_cell_optimal": bool(np.max(np.abs(h1_scores.curve - pool_min)) <= TOL),
        "hybrid1_mean_not_worse": all(h1_scores.mean("validation") <= report.model(n).mean("validation") + TOL
                                      for n in h1.pool),
        "hybrid1_channel_not_worse": all(np.all(h1_ch <= per_channel[n] + TOL) for n in h1.pool),
        "hybrid2_cell_sandwich": bool(np.all(h2_scores.curve >= h1_scores.curve - TOL)
                                      and np.all(h2_scores.curve <= pool2_min + TOL)),
        "hybrid2_channel_sandwich": bool(np.all(h1_ch <= h2_ch + TOL) and np.all(h2_ch <= pool2_ch + TOL)),
        "weights_on_simplex": bool(np.all(w >= 0) and np.max(np.abs(w.sum(axis=0) - 1.0)) <= TOL),
        "mean_is_channel_average": all(abs(m.mean(s) - float(np.sum(v)) / len(v)) <= TOL
                                       for m in report.experts + report.ensembles
                                       for s, v in m.channels.items()),
        "all_finite": bool(finite),
    }


def assert_invariants(report: BenchmarkReport):
    report.invariants = check_invariants(report)
    failed = [k for k, ok in report.invariants.items() if not ok]
    if failed:
        raise InvariantError(f"report invariants failed: {', '.join(failed)}")


# emission

def _x100(v):
    return "" if v is None else f"{100.0 * v:.6f}"


def _secs(v):
    return "" if v is None else f"{v:.6f}"


def _csv(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _label(m: ModelScores):
    return ENSEMBLE_LABELS.get(m.name, m.name) if m.kind == "ensemble" else m.name


def _channel_table(models, split):
    rows = [["model", "kind", *CHANNELS, "mean"]]
    for m in models:
        per = m.channels.get(split)
        vals = [""] * len(CHANNELS) if per is None else [_x100(float(v)) for v in per]
        rows.append([_label(m), m.kind, *vals, _x100(m.mean(split))])
    return rows


def table_files(report: BenchmarkReport) -> dict:
    """File name -> text for every deterministic table and figure."""
    experts, everyone = report.experts, report.experts + report.ensembles
    files = {}
    files["table2_overall.csv"] = _csv(
        [["model", "kind", "rmse_train", "rmse_validation"]]
        + [[m.name, m.kind, _x100(m.mean("train")), _x100(m.mean("validation"))] for m in experts])
    files["table3_channels_validation.csv"] = _csv(_channel_table(experts, "validation"))
    files["table4_ensembles_validation.csv"] = _csv(_channel_table(everyone, "validation"))
    rows = _channel_table(everyone, "test")
    rows[0].append("test_minus_validation")
    for row, m in zip(rows[1:], everyone):
        row.append(_x100(m.mean("test") - m.mean("validation")))
    files["table5_ensembles_test.csv"] = _csv(rows)
    header = ["time", *(f"{c}/{m.name}" for c in CHANNELS for m in experts)]
    fig6 = [header]
    for t in range(report.T):
        fig6.append([f"{t * report.dt:.6f}",
                     *(repr(float(m.curve[c, t])) for c in range(len(CHANNELS)) for m in experts)])
    files["fig6_rmse_per_timestep.csv"] = _csv(fig6)
    files["fig7_selection_hybrid1.csv"] = report.hybrid1.to_csv(report.dt)
    files["fig7_selection_hybrid2.csv"] = report.hybrid2.to_csv(report.dt)
    files["fig8_ewa_weights.csv"] = report.weights.to_csv(report.dt)
    return files


def timing_files(report: BenchmarkReport) -> dict:
    rows = [["model", "kind", "training_seconds", "prediction_seconds_per_100"]]
    for m in report.experts + report.ensembles:
        t = report.timings.get(m.name, {})
        rows.append([_label(m), m.kind, _secs(t.get("training_seconds")),
                     _secs(t.get("prediction_seconds_per_100"))])
    bench = [["model", "n_predictions", "seconds", "predictions_per_second"]]
    for r in report.throughput:
        bench.append([r["model"], r["n_predictions"], _secs(r["seconds"]), f"{r['predictions_per_second']:.3f}"])
    return {"table6_timings.csv": _csv(rows), "table7_throughput.csv": _csv(bench)}


def _scores_dict(m: ModelScores):
    return {
        "kind": m.kind,
        "per_channel": {s: dict(zip(CHANNELS, map(float, v))) for s, v in m.channels.items()},
        "mean": {s: m.mean(s) for s in m.channels},
    }


def summary_dict(report: BenchmarkReport) -> dict:
    return {
        "units": UNITS_NOTE,
        "dt": report.dt,
        "T": report.T,
        "split_sizes": report.split_sizes,
        "experts": {m.name: _scores_dict(m) for m in report.experts},
        "ensembles": {m.name: _scores_dict(m) for m in report.ensembles},
        "hybrid1_pool": list(report.hybrid1.pool),
        "hybrid1_usage": report.hybrid1.usage(),
        "hybrid2_pool": list(report.hybrid2.pool),
        "eta": report.weights.eta,
        "eta_table": [{"eta": e, "validation_mean_rmse": s} for e, s in report.eta_table],
        "aggregated_test_minus_validation": report.aggregated_degradation,
        "hyperparameters": report.hyperparameters,
        "tuning": report.tuning,
        "invariants": report.invariants,
        "timings": report.timings,
        "throughput": report.throughput,
    }


def emit_report(report: BenchmarkReport, out_dir) -> list:
    """Write every table, figure and summary.json under ``out_dir``; returns the paths."""
    out_dir = Path(out_dir)
    files = {**table_files(report), **timing_files(report)}
    files["summary.json"] = json.dumps(summary_dict(report), indent=2, sort_keys=True, allow_nan=False) + "\n"
    paths = []
    for name in sorted(files):
        atomic_write_text(out_dir / name, files[name])
        paths.append(out_dir / name)
    return paths


# throughput

def throughput_bench(model, n, priors, seed=0, name=None) -> dict:
    """Run ``n`` single-scenario predictions one after another on prior draws.

    The wall-clock covers only the prediction loop. A SHA-256 digest of all
    outputs is returned so repeated runs can be compared without keeping them.
    """
    n = int(n)
    name = name or getattr(model, "name", type(model).__name__)
    digest = hashlib.sha256()
    if n == 0:
        return {"model": name, "n_predictions": 0, "seconds": 0.0, "predictions_per_second": 0.0,
                "digest": digest.hexdigest(), "seed": seed}
    X = np.array([p.as_array() for p in sample_parameters(priors, n, seed)])
    start = time.perf_counter()
    for x in X:
        out = model.predict(x)
        digest.update(np.ascontiguousarray(out).tobytes())
    seconds = time.perf_counter() - start
    return {"model": name, "n_predictions": n, "seconds": seconds, "predictions_per_second": n / seconds,
            "digest": digest.hexdigest(), "seed": seed}
