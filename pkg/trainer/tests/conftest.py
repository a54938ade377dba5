import json
import subprocess
import sys

import pytest

ENGINE = [sys.executable, "-m", "seedplan.cli"]


def run_engine(args, **kwargs):
    """Invoke the planning engine through its CLI (the external interface)."""
    return subprocess.run(ENGINE + list(args), check=True, capture_output=True,
                          text=True, **kwargs)


@pytest.fixture(scope="session")
def engine_dataset(tmp_path_factory):
    """Small phantom dataset written by the engine: 8 train / 4 val cases."""
    root = tmp_path_factory.mktemp("dataset")
    cfg = root / "cfg"
    run_engine(["config", "init", "--out", str(cfg)])
    sa = json.loads((cfg / "sa_config.json").read_text())
    sa.update(iterations_per_temperature=40, cooling_rate=0.88,
              min_temperature=1e-2)
    (cfg / "sa_config.json").write_text(json.dumps(sa))
    run_engine(["--config", str(cfg / "config.json"), "--seed", "5", "phantom",
                "--cases", "12", "--out", str(root / "data"),
                "--splits", "0.667,0.333,0.0"])
    return root / "data" / "manifest.json"


@pytest.fixture(scope="session")
def golden_dir(tmp_path_factory):
    """100 loss fixtures exported by the engine."""
    d = tmp_path_factory.mktemp("golden")
    run_engine(["--seed", "17", "export-golden", "--out", str(d),
                "--count", "100"])
    return d
