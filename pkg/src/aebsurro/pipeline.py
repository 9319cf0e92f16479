"""Pipeline steps behind the command-line subcommands.

Output layout under the run directory::

    dataset.jsonl
    models/<expert>.pkl, models/manifest.json, models/timings.json
    predictions/<expert>.jsonl, predictions/imports.json
    ensemble/ensemble.json, ensemble/timings.json, ensemble/*.csv, ensemble/predictions/*.jsonl
    bench/throughput.json
    report/table*.csv, report/fig*.csv, report/summary.json

Files other than the ``timings``/``throughput`` ones are deterministic given
the config and seed.
"""

from __future__ import annotations

import json
import logging
import time
from pathlib import Path

import numpy as np

from aebsurro import dataset as ds
from aebsurro.config import RunConfig
from aebsurro.ensemble import (
    EnsembleModel,
    SelectionMap,
    WeightField,
    build_hybrid1,
    build_hybrid2,
    per_timestep_loss,
    predict_aggregated,
    predict_hybrid,
    select_eta,
)
from aebsurro.errors import AlignmentError, ConfigurationError, MissingPrerequisiteError, SchemaError
from aebsurro.experts import FAMILIES, load_model, save_model, tune
from aebsurro.report import BenchmarkReport, assert_invariants, emit_report, score_cube, throughput_bench

log = logging.getLogger("aebsurro")

ENSEMBLES = ("hybrid1", "hybrid2", "aggregated")
EVAL_SPLITS = ("validation", "test")
_RF_FAMILIES = {"1-rf", "4-rf", "pca-rf"}


class Layout:
    def __init__(self, root, dataset=None):
        self.root = Path(root)
        self.dataset = Path(dataset) if dataset is not None else self.root / "dataset.jsonl"
        self.models = self.root / "models"
        self.predictions = self.root / "predictions"
        self.ensemble = self.root / "ensemble"
        self.bench = self.root / "bench"
        self.report = self.root / "report"

    def model(self, name):
        return self.models / f"{name}.pkl"

    def prediction(self, name):
        return self.predictions / f"{name}.jsonl"

    def ensemble_prediction(self, name):
        return self.ensemble / "predictions" / f"{name}.jsonl"


def _write_json(path, obj):
    ds.atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


def _read_json(path, hint):
    path = Path(path)
    if not path.exists():
        raise MissingPrerequisiteError(f"{path} not found; {hint}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON at line {exc.lineno}") from None


def _load_dataset(layout):
    if not layout.dataset.exists():
        raise MissingPrerequisiteError(f"dataset {layout.dataset} not found; run 'generate' first")
    return ds.load(layout.dataset)


# generate

def cmd_generate(cfg: RunConfig, dataset_path=None) -> Path:
    layout = Layout(cfg.output_dir, dataset_path)
    log.info("generating %s scenarios (seed %d)", cfg.counts, cfg.seed)
    data = ds.generate(cfg.priors, cfg.sim, cfg.counts, cfg.seed)
    ds.save(data, layout.dataset)
    return layout.dataset


# train

def _factory(entry, cfg):
    cls = FAMILIES[entry.family]
    fixed = {"name": entry.name}
    if entry.family in _RF_FAMILIES:
        fixed.update(seed=entry.seed, n_jobs=cfg.jobs)
    if entry.family == "pce":
        fixed["bounds"] = cfg.priors.bounds
    return cls, fixed


def _jsonable(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    return value


def cmd_train(cfg: RunConfig, dataset_path=None) -> list:
    """Tune and fit every configured expert, save models and all-split prediction cubes."""
    layout = Layout(cfg.output_dir, dataset_path)
    data = _load_dataset(layout)
    manifest, timings = [], {}
    Xv = data.X("validation")
    for entry in cfg.experts:
        cls, fixed = _factory(entry, cfg)
        log.info("tuning %s over %d grid point(s)", entry.name, int(np.prod([len(v) for v in entry.grid.values()])))
        start = time.perf_counter()
        result = tune(cls, entry.grid, data, fixed)
        tuning_seconds = time.perf_counter() - start
        model = result.best
        model.predict(Xv[:100])
        timings[entry.name] = {
            "training_seconds": model.fit_seconds,
            "prediction_seconds_per_100": model.predict_seconds_per_100,
            "tuning_seconds": tuning_seconds,
        }
        cube = ds.PredictionCube(entry.name, data.ids, model.predict(data.params))
        save_model(model, layout.model(entry.name))
        ds.export_predictions(cube, layout.prediction(entry.name))
        manifest.append({
            "name": entry.name,
            "family": entry.family,
            "hyperparameters": {k: _jsonable(v) for k, v in model.hyperparameters.items()},
            "tuning": [{"params": {k: _jsonable(v) for k, v in p.items()}, "validation_mean_rmse": s}
                       for p, s in result.table],
        })
    _write_json(layout.models / "manifest.json", {"experts": manifest})
    _write_json(layout.models / "timings.json", timings)
    for entry in cfg.imports:
        cmd_import_expert(cfg, entry["path"], entry.get("name"), dataset_path)
    return [e["name"] for e in manifest]


def cmd_import_expert(cfg: RunConfig, path, name=None, dataset_path=None) -> str:
    """Align an external prediction file to the dataset and register it as an expert.

    The file must cover validation and test exactly; train is optional but, if
    any train id is present, every train id must be.
    """
    layout = Layout(cfg.output_dir, dataset_path)
    data = _load_dataset(layout)
    path = Path(path)
    if not path.exists():
        raise MissingPrerequisiteError(f"prediction file {path} not found")
    present = ds.prediction_file_ids(path)
    train_ids = set(data.split_ids("train"))
    splits = ds.SPLITS if present & train_ids else EVAL_SPLITS
    cube = ds.import_external_predictions(path, data, splits=splits, name=name)
    internal = {s.name for s in cfg.experts}
    if cube.expert_name in internal or cube.expert_name in ENSEMBLES:
        raise ConfigurationError(f"imported expert name {cube.expert_name!r} clashes with a built-in model")
    ds.export_predictions(cube, layout.prediction(cube.expert_name))
    registry = layout.predictions / "imports.json"
    names = json.loads(registry.read_text()) if registry.exists() else []
    if cube.expert_name not in names:
        names.append(cube.expert_name)
    _write_json(registry, names)
    log.info("imported %s (%s)", cube.expert_name, "/".join(splits))
    return cube.expert_name


def _expert_roster(layout):
    manifest = _read_json(layout.models / "manifest.json", "run 'train' first")
    registry = layout.predictions / "imports.json"
    imported = json.loads(registry.read_text()) if registry.exists() else []
    return manifest, imported


def load_expert_cubes(layout, data) -> dict:
    """name -> (kind, full cube) for internal experts then imported ones."""
    manifest, imported = _expert_roster(layout)
    out = {}
    for entry in manifest["experts"]:
        path = layout.prediction(entry["name"])
        if not path.exists():
            raise MissingPrerequisiteError(f"{path} not found; run 'train' first")
        out[entry["name"]] = ("expert", ds.import_external_predictions(path, data, name=entry["name"]))
    for name in imported:
        path = layout.prediction(name)
        if not path.exists():
            raise MissingPrerequisiteError(f"{path} not found; re-run 'import-expert'")
        present = ds.prediction_file_ids(path)
        splits = ds.SPLITS if present & set(data.split_ids("train")) else EVAL_SPLITS
        out[name] = ("imported", ds.import_external_predictions(path, data, splits=splits, name=name))
    return out


def _pool(cfg, cubes):
    pool = list(cfg.pool) if cfg.pool is not None else list(cubes)
    unknown = [n for n in pool if n not in cubes]
    if unknown:
        raise ConfigurationError(f"ensemble pool names unknown experts {unknown}")
    if len(set(pool)) != len(pool):
        raise ConfigurationError("ensemble pool lists an expert twice")
    return pool


# ensemble

def _per_100(seconds, n):
    return seconds * 100.0 / n


def cmd_ensemble(cfg: RunConfig, dataset_path=None) -> dict:
    layout = Layout(cfg.output_dir, dataset_path)
    data = _load_dataset(layout)
    cubes = load_expert_cubes(layout, data)
    pool = _pool(cfg, cubes)
    val = [cubes[n][1].for_split(data, "validation") for n in pool]
    n_val = len(data.split_ids("validation"))

    start = time.perf_counter()
    losses = per_timestep_loss(val, data, "validation")
    h1 = build_hybrid1(losses, pool)
    t_h1 = time.perf_counter() - start
    start = time.perf_counter()
    h2 = build_hybrid2(losses, h1, cfg.hybrid2_size)
    t_h2 = time.perf_counter() - start
    start = time.perf_counter()
    eta, weights, eta_table = select_eta(val, data, cfg.eta_grid, "validation")
    t_agg = time.perf_counter() - start

    eval_ids = tuple(sid for sid in data.ids if data.splits[sid] in EVAL_SPLITS)
    eval_cubes = [cubes[n][1].subset(eval_ids) for n in pool]
    combiners = {"hybrid1": h1, "hybrid2": h2, "aggregated": weights}
    timings = {}
    for name, combiner, calib in zip(ENSEMBLES, combiners.values(), (t_h1, t_h2, t_agg)):
        start = time.perf_counter()
        if isinstance(combiner, SelectionMap):
            predict_hybrid(combiner, val)
        else:
            predict_aggregated(combiner, val)
        combine = _per_100(time.perf_counter() - start, n_val)
        timings[name] = {"training_seconds": calib, "combine_seconds_per_100": combine}
        if isinstance(combiner, SelectionMap):
            cube = predict_hybrid(combiner, eval_cubes, name)
        else:
            cube = predict_aggregated(combiner, eval_cubes, name)
        ds.export_predictions(cube, layout.ensemble_prediction(name))
    _write_json(layout.ensemble / "ensemble.json", {
        "pool": pool,
        "hybrid1": h1.to_dict(),
        "hybrid2": h2.to_dict(),
        "aggregated": weights.to_dict(),
        "eta_table": [{"eta": e, "validation_mean_rmse": s} for e, s in eta_table],
    })
    _write_json(layout.ensemble / "timings.json", timings)
    ds.atomic_write_text(layout.ensemble / "selection_hybrid1.csv", h1.to_csv(data.dt))
    ds.atomic_write_text(layout.ensemble / "selection_hybrid2.csv", h2.to_csv(data.dt))
    ds.atomic_write_text(layout.ensemble / "ewa_weights.csv", weights.to_csv(data.dt))
    log.info("ensembles built on %d experts; hybrid2 pool %s; eta %g", len(pool), h2.pool, eta)
    return {"hybrid1": h1, "hybrid2": h2, "aggregated": weights}


def _load_ensemble(layout):
    doc = _read_json(layout.ensemble / "ensemble.json", "run 'ensemble' first")
    try:
        return (doc, SelectionMap.from_dict(doc["hybrid1"]), SelectionMap.from_dict(doc["hybrid2"]),
                WeightField.from_dict(doc["aggregated"]))
    except KeyError as exc:
        raise SchemaError(f"ensemble.json is missing {exc}") from None


# bench

def load_live_model(layout, name):
    """A fitted expert, or an ensemble whose members are all fitted experts."""
    if name in ENSEMBLES:
        _, h1, h2, weights = _load_ensemble(layout)
        combiner = {"hybrid1": h1, "hybrid2": h2, "aggregated": weights}[name]
        members = combiner.pool if isinstance(combiner, SelectionMap) else combiner.experts
        experts = {}
        for m in members:
            if not layout.model(m).exists():
                raise MissingPrerequisiteError(f"{name} uses {m}, which has no fitted model to run live")
            experts[m] = load_model(layout.model(m))
        return EnsembleModel(combiner, experts, name)
    if not layout.model(name).exists():
        raise MissingPrerequisiteError(f"model {layout.model(name)} not found; run 'train' first")
    return load_model(layout.model(name))


def cmd_bench(cfg: RunConfig, models=None, n=None, dataset_path=None) -> list:
    layout = Layout(cfg.output_dir, dataset_path)
    models = list(models) if models else list(cfg.bench_models)
    n = cfg.bench_n if n is None else int(n)
    results = []
    for name in models:
        live = load_live_model(layout, name)
        log.info("bench: %d one-by-one predictions with %s", n, name)
        results.append(throughput_bench(live, n, cfg.priors, cfg.seed, name))
    _write_json(layout.bench / "throughput.json", {"results": results})
    return results


# evaluate

def build_report(cfg: RunConfig, layout) -> BenchmarkReport:
    data = _load_dataset(layout)
    cubes = load_expert_cubes(layout, data)
    manifest, _ = _expert_roster(layout)
    doc, h1, h2, weights = _load_ensemble(layout)
    if set(doc["pool"]) - set(cubes):
        raise AlignmentError(f"ensemble pool {doc['pool']} references experts without predictions; "
                             "re-run 'ensemble'")
    experts = []
    for name, (kind, cube) in cubes.items():
        by_split = {s: cube.for_split(data, s) for s in ds.SPLITS
                    if set(data.split_ids(s)) <= set(cube.ids)}
        experts.append(score_cube(name, kind, by_split, data))
    ensembles = []
    for name in ENSEMBLES:
        path = layout.ensemble_prediction(name)
        if not path.exists():
            raise MissingPrerequisiteError(f"{path} not found; run 'ensemble' first")
        cube = ds.import_external_predictions(path, data, splits=EVAL_SPLITS, name=name)
        ensembles.append(score_cube(name, "ensemble", {s: cube.for_split(data, s) for s in EVAL_SPLITS}, data))

    timings = {}
    model_t = layout.models / "timings.json"
    if model_t.exists():
        timings.update(json.loads(model_t.read_text()))
    ens_t = layout.ensemble / "timings.json"
    if ens_t.exists():
        for name, t in json.loads(ens_t.read_text()).items():
            members = h1.pool if name == "hybrid1" else h2.pool if name == "hybrid2" else weights.experts
            member_times = [timings.get(m, {}).get("prediction_seconds_per_100") for m in members]
            total = None if None in member_times else t["combine_seconds_per_100"] + sum(member_times)
            timings[name] = {"training_seconds": t["training_seconds"], "prediction_seconds_per_100": total,
                             "combine_seconds_per_100": t["combine_seconds_per_100"]}
    bench_path = layout.bench / "throughput.json"
    throughput = json.loads(bench_path.read_text())["results"] if bench_path.exists() else []
    return BenchmarkReport(
        dt=data.dt,
        T=data.T,
        split_sizes=data.split_sizes(),
        experts=experts,
        ensembles=ensembles,
        hybrid1=h1,
        hybrid2=h2,
        weights=weights,
        eta_table=[(r["eta"], r["validation_mean_rmse"]) for r in doc["eta_table"]],
        hyperparameters={e["name"]: e["hyperparameters"] for e in manifest["experts"]},
        tuning={e["name"]: e["tuning"] for e in manifest["experts"]},
        timings=timings,
        throughput=throughput,
    )


def cmd_evaluate(cfg: RunConfig, dataset_path=None) -> BenchmarkReport:
    """Build the report, emit it, then fail with an invariant error if any check did not hold."""
    layout = Layout(cfg.output_dir, dataset_path)
    report = build_report(cfg, layout)
    try:
        assert_invariants(report)
    finally:
        emit_report(report, layout.report)
    return report


def cmd_run_all(cfg: RunConfig, dataset_path=None) -> BenchmarkReport:
    """generate, train, ensemble, bench, evaluate (bench runs before evaluate so the throughput table is filled)."""
    cmd_generate(cfg, dataset_path)
    cmd_train(cfg, dataset_path)
    cmd_ensemble(cfg, dataset_path)
    cmd_bench(cfg, dataset_path=dataset_path)
    return cmd_evaluate(cfg, dataset_path)
