import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import pytest

from aebsurro.dataset import generate


@pytest.fixture(scope="session")
def small_dataset():
    """60/20/20 scenarios on the default simulator configuration."""
    return generate(counts={"train": 60, "validation": 20, "test": 20}, seed=123)


def small_config_dict(out_dir):
    """Packaged defaults shrunk to run in a few seconds."""
    from aebsurro.config import default_config_dict

    cfg = default_config_dict()
    cfg["dataset"] = {"train": 80, "validation": 20, "test": 20}
    cfg["output_dir"] = str(out_dir)
    for entry in cfg["experts"]:
        if "n_trees" in entry["grid"]:
            entry["grid"]["n_trees"] = [8]
        if entry["family"] == "krr":
            entry["grid"] = {"gamma": [0.1, 1.0], "lambda": [1e-4]}
        if entry["family"] == "pce":
            entry["grid"] = {"degree": [2]}
    cfg["bench"] = {"n": 50, "models": ["4-rf", "hybrid2"]}
    return cfg


@pytest.fixture(scope="session")
def small_run(tmp_path_factory):
    """(RunConfig, BenchmarkReport) of a complete small pipeline run."""
    from aebsurro.config import build_config
    from aebsurro.pipeline import cmd_run_all

    out = tmp_path_factory.mktemp("small-run")
    cfg = build_config(small_config_dict(out), env={})
    return cfg, cmd_run_all(cfg)


ACCEPTANCE = {}


def record_acceptance(number, ok, detail):
    ACCEPTANCE[number] = (bool(ok), detail)
    print(f"ACCEPTANCE {number}: {'PASS' if ok else 'FAIL'} - {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'} - {detail}")
