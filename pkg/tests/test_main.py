import logging
import os
import textwrap

import numpy as np
import pandas as pd
import pytest

from core.grid_handler import GridFileHandler
from main import EXIT_CONFIG, EXIT_NOT_CONVERGED, EXIT_OK, main

TINY = """
[paths]
data = data.bin
output = out

[grid]
nz = 10
nx = 12
h = 10
pml_width = 5

[model]
velocity_top = 2000
v_min = 1800
v_max = 2500

[acquisition]
receiver_depth = 10
f_min = 10
f_max = 20
f_step = 5
record_duration = 1.0
dt = 0.01

[inversion]
n_inner = 2
n_outer = 1

[synthesis]
events = 50 60 15 2.0
"""


@pytest.fixture(autouse=True)
def restore_root_logger():
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.ini"
    path.write_text(textwrap.dedent(TINY))
    return str(path)


def test_missing_data_is_a_config_error(tiny_config, tmp_path):
    assert main(["invert", "--config", tiny_config, "-q"]) == EXIT_CONFIG
    assert not (tmp_path / "out").exists()


def test_unknown_section_is_a_config_error(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text(textwrap.dedent(TINY) + "\n[plots]\ndpi = 100\n")
    assert main(["forward", "--config", str(path), "-q"]) == EXIT_CONFIG


def test_forward_locate_report(tiny_config, tmp_path):
    out = tmp_path / "out"
    assert main(["forward", "--config", tiny_config, "-q"]) == EXIT_OK
    assert (tmp_path / "data.bin").exists()
    assert (tmp_path / "data.bin.json").exists()
    for name in ("true_model.bin", "true_events.csv", "true_signatures.csv", "seismograms_observed.csv"):
        assert (out / name).exists()

    assert main(["locate", "--config", tiny_config, "-q"]) == EXIT_NOT_CONVERGED
    final = GridFileHandler.read_model(str(out / "model_final.bin"))
    true_model = GridFileHandler.read_model(str(out / "true_model.bin"))
    assert np.array_equal(final.m, true_model.m)
    events = pd.read_csv(out / "events.csv")
    assert len(events) >= 1
    history = pd.read_csv(out / "history.csv")
    assert len(history) == 1
    manifest = pd.read_csv(out / "MANIFEST.csv")
    assert set(manifest["status"]) == {"not converged"}
    assert "history.csv" in manifest["file"].tolist()

    assert main(["report", "--config", tiny_config, "-q"]) == EXIT_OK
    assert (out / "report.xlsx").exists()
    assert (out / "residuals.csv").exists()


def test_snapshots_are_written_per_iteration(tiny_config, tmp_path):
    assert main(["forward", "--config", tiny_config, "-q"]) == EXIT_OK
    assert main(["locate", "--config", tiny_config, "--snapshots", "-q"]) == EXIT_NOT_CONVERGED
    grid, fields = GridFileHandler.read_grid(str(tmp_path / "out" / "mean_source_001.bin"))
    assert fields.shape == (2, grid.n)
    assert (tmp_path / "out" / "model_001.bin").exists()


def test_forward_is_reproducible(tiny_config, tmp_path):
    data = tmp_path / "data.bin"
    assert main(["forward", "--config", tiny_config, "--seed", "5", "-q"]) == EXIT_OK
    first = data.read_bytes()
    assert main(["forward", "--config", tiny_config, "--seed", "5", "--output", str(tmp_path / "again"), "-q"]) == EXIT_OK
    assert data.read_bytes() == first
    assert os.path.exists(tmp_path / "again" / "MANIFEST.csv")
