"""Run configuration: one JSON file validated against the packaged schema, plus overrides."""

from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from aebsurro.errors import ConfigurationError, MissingPrerequisiteError
from aebsurro.sim import ParameterPriors, SimConfig

SEED_ENV = "AEBSURRO_SEED"

_RF_KEYS = {"n_trees", "mtry", "min_leaf", "max_depth", "bootstrap"}
GRID_KEYS = {
    "knn": {"k"},
    "krr": {"gamma", "lambda"},
    "pce": {"degree"},
    "1-rf": _RF_KEYS,
    "4-rf": _RF_KEYS,
    "pca-rf": _RF_KEYS | {"variance_kept"},
}
# config spelling -> constructor keyword
_RENAMES = {"lambda": "lam"}


def _package_json(name):
    return json.loads(resources.files("aebsurro").joinpath(name).read_text(encoding="utf-8"))


def schema() -> dict:
    return _package_json("config_schema.json")


def default_config_dict() -> dict:
    return _package_json("default_config.json")


@dataclass(frozen=True)
class ExpertEntry:
    name: str
    family: str
    grid: dict  # constructor keyword -> candidate list
    seed: int


@dataclass(frozen=True)
class RunConfig:
    raw: dict
    seed: int
    output_dir: Path
    jobs: int
    priors: ParameterPriors
    sim: SimConfig
    counts: dict
    experts: tuple
    imports: tuple
    eta_grid: tuple
    pool: tuple | None
    hybrid2_size: int
    bench_n: int
    bench_models: tuple

    def to_dict(self) -> dict:
        d = copy.deepcopy(self.raw)
        d["seed"] = self.seed
        d["output_dir"] = str(self.output_dir)
        d["jobs"] = self.jobs
        return d


def expert_seed(run_seed: int, index: int) -> int:
    """Independent 32-bit seed for the index-th expert of a run."""
    return int(np.random.SeedSequence([run_seed, index]).generate_state(1)[0])


def _expert_entries(raw_entries, seed):
    out, seen = [], set()
    for i, e in enumerate(raw_entries):
        if e["name"] in seen:
            raise ConfigurationError(f"duplicate expert name {e['name']!r}")
        seen.add(e["name"])
        unknown = set(e["grid"]) - GRID_KEYS[e["family"]]
        if unknown:
            raise ConfigurationError(f"expert {e['name']}: unknown hyperparameters {sorted(unknown)} "
                                     f"for family {e['family']}")
        grid = {_RENAMES.get(k, k): list(v) for k, v in e["grid"].items()}
        out.append(ExpertEntry(e["name"], e["family"], grid, expert_seed(seed, i)))
    return tuple(out)


def _seed_override(flag_seed, env):
    if flag_seed is not None:
        return int(flag_seed)
    raw = env.get(SEED_ENV)
    if raw is None or raw == "":
        return None
    try:
        value = int(raw)
    except ValueError:
        raise ConfigurationError(f"{SEED_ENV} must be a non-negative integer, got {raw!r}") from None
    if value < 0:
        raise ConfigurationError(f"{SEED_ENV} must be a non-negative integer, got {raw!r}")
    return value


def build_config(data: dict, seed=None, out=None, jobs=None, env=None) -> RunConfig:
    """Validate ``data`` and apply overrides (flag seed beats the environment, which beats the file)."""
    try:
        jsonschema.validate(data, schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigurationError(f"config {where}: {exc.message}") from None
    env = os.environ if env is None else env
    override = _seed_override(seed, env)
    run_seed = data["seed"] if override is None else override
    if run_seed < 0:
        raise ConfigurationError("seed must be non-negative")
    priors = ParameterPriors.from_dict(data["priors"])
    sim = SimConfig(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in data["sim"].items()})
    names = [e["name"] for e in data["experts"]]
    imports = tuple(data.get("imports", []))
    ens = data["ensemble"]
    pool = ens.get("pool")
    bench = data["bench"]
    return RunConfig(
        raw=data,
        seed=int(run_seed),
        output_dir=Path(out if out is not None else data["output_dir"]),
        jobs=int(jobs if jobs is not None else data.get("jobs", 1)),
        priors=priors,
        sim=sim,
        counts=dict(data["dataset"]),
        experts=_expert_entries(data["experts"], run_seed),
        imports=imports,
        eta_grid=tuple(float(e) for e in ens["eta_grid"]),
        pool=None if pool is None else tuple(pool),
        hybrid2_size=int(ens.get("hybrid2_size", 3)),
        bench_n=int(bench["n"]),
        bench_models=tuple(bench.get("models", [n for n in names if n == "4-rf"])),
    )


def load_config(path=None, seed=None, out=None, jobs=None, env=None) -> RunConfig:
    """Read a config file (the packaged defaults when ``path`` is None)."""
    if path is None:
        data = default_config_dict()
    else:
        path = Path(path)
        if not path.exists():
            raise MissingPrerequisiteError(f"config file {path} does not exist")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return build_config(data, seed=seed, out=out, jobs=jobs, env=env)
