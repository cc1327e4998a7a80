import os

import numpy as np
import pandas as pd
import pytest
from openpyxl import load_workbook

from core.errors import DimensionMismatchError, GridFormatError, NonFiniteError
from core.grid import Grid, Model
from core.grid_handler import FAIL_FILL, HEADER_SIZE, PASS_FILL, GridFileHandler
from core.result_writer import MANIFEST_NAME, ResultWriter
from core.synthesis import SpectraData


def test_model_file_is_bit_identical(tmp_path, rng):
    grid = Grid(7, 9, 2.5, pml_width=4)
    model = Model.from_velocity(grid, rng.uniform(1500.0, 3000.0, grid.n), 1400.0, 3100.0)
    path = str(tmp_path / "model.bin")
    GridFileHandler.write_model(model, path)
    loaded = GridFileHandler.read_model(path)
    assert loaded.grid == grid
    assert np.array_equal(loaded.m, model.m)
    assert np.array_equal(loaded.m_min, model.m_min)
    assert np.array_equal(loaded.m_max, model.m_max)
    assert os.path.getsize(path) == HEADER_SIZE + 3 * grid.n * 8


def test_complex_grid_file(tmp_path, rng):
    grid = Grid(4, 5, 1.0, pml_width=0)
    fields = rng.standard_normal((2, grid.n)) + 1j * rng.standard_normal((2, grid.n))
    path = GridFileHandler.write_grid(grid, fields, str(tmp_path / "fields.bin"), dtype="c16")
    loaded_grid, loaded = GridFileHandler.read_grid(path)
    assert loaded_grid == grid
    assert np.array_equal(loaded, fields)


def test_grid_header_is_readable_text(tmp_path):
    grid = Grid(4, 5, 1.0, pml_width=2)
    path = GridFileHandler.write_grid(grid, np.zeros(grid.n), str(tmp_path / "g.bin"))
    with open(path, "rb") as handle:
        header = handle.read(HEADER_SIZE).decode("ascii")
    assert header.startswith("SLGRID nz=4 nx=5")
    assert header.endswith("\n")


def test_write_grid_rejects_wrong_length(tmp_path):
    grid = Grid(4, 5, 1.0)
    with pytest.raises(DimensionMismatchError):
        GridFileHandler.write_grid(grid, np.zeros(grid.n + 1), str(tmp_path / "g.bin"))


def test_read_grid_rejects_truncated_payload(tmp_path):
    grid = Grid(4, 5, 1.0)
    path = GridFileHandler.write_grid(grid, np.ones(grid.n), str(tmp_path / "g.bin"))
    with open(path, "rb") as handle:
        raw = handle.read()
    with open(path, "wb") as handle:
        handle.write(raw[:-8])
    with pytest.raises(DimensionMismatchError):
        GridFileHandler.read_grid(path)


def test_read_grid_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"NOTGRID nz=3".ljust(HEADER_SIZE) + b"\x00" * 8)
    with pytest.raises(GridFormatError):
        GridFileHandler.read_grid(str(path))


def test_read_grid_rejects_non_finite(tmp_path):
    grid = Grid(3, 3, 1.0)
    values = np.ones(grid.n)
    values[4] = np.nan
    path = GridFileHandler.write_grid(grid, values, str(tmp_path / "g.bin"))
    with pytest.raises(NonFiniteError):
        GridFileHandler.read_grid(path)


def test_read_model_needs_three_fields(tmp_path):
    grid = Grid(3, 3, 1.0)
    path = GridFileHandler.write_grid(grid, np.ones((2, grid.n)), str(tmp_path / "g.bin"))
    with pytest.raises(GridFormatError):
        GridFileHandler.read_model(path)


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        GridFileHandler.read_grid("not_a_file.bin")
    with pytest.raises(FileNotFoundError):
        GridFileHandler.read_table("not_a_file.csv")


def test_spectra_file_keeps_values_and_metadata(tmp_path, rng):
    omegas = np.array([10.0, 20.0, 30.0])
    receivers = np.array([4, 5, 6, 7])
    values = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
    metadata = {"seed": 3, "snr_db": None, "events": [{"z": 1.0, "x": 2.0}]}
    path = str(tmp_path / "sub" / "data.bin")
    GridFileHandler.write_spectra(SpectraData(omegas, receivers, values, metadata), path)
    assert os.path.exists(path + ".json")
    loaded = GridFileHandler.read_spectra(path)
    assert np.array_equal(loaded.omegas, omegas)
    assert np.array_equal(loaded.receivers, receivers)
    assert np.array_equal(loaded.values, values)
    assert loaded.metadata == metadata


def test_spectra_without_sidecar(tmp_path):
    path = str(tmp_path / "data.bin")
    GridFileHandler.write_spectra(SpectraData([1.0], [0], np.zeros((1, 1))), path)
    os.remove(path + ".json")
    assert GridFileHandler.read_spectra(path).metadata == {}


def test_table_keeps_unit_headers(tmp_path):
    df = pd.DataFrame({"z (m)": [1.0, 2.0], "x (m)": [3.0, 4.0]})
    path = GridFileHandler.write_table(df, str(tmp_path / "t.csv"))
    loaded = GridFileHandler.read_table(path)
    assert list(loaded.columns) == ["z (m)", "x (m)"]
    assert loaded["x (m)"].tolist() == [3.0, 4.0]


def test_write_multiple_sheets_formats_status(tmp_path):
    dfs = {
        "Events": pd.DataFrame({"event_id": [1, 2], "within tolerance": [True, False]}),
        "Truth": pd.DataFrame({"true_event_id": [1]}),
    }
    path = GridFileHandler.write_multiple_sheets(dfs, str(tmp_path / "report.xlsx"))
    workbook = load_workbook(path)
    assert workbook.sheetnames == ["Events", "Truth"]
    sheet = workbook["Events"]
    assert sheet["A1"].font.bold
    assert sheet["B2"].fill.start_color.rgb.endswith(PASS_FILL.start_color.rgb[-6:])
    assert sheet["B3"].fill.start_color.rgb.endswith(FAIL_FILL.start_color.rgb[-6:])


def test_result_writer_creates_directory_on_first_write(tmp_path):
    out = tmp_path / "run"
    writer = ResultWriter(str(out))
    assert not out.exists()
    writer.write_table(pd.DataFrame({"a": [1]}), "a.csv", "first table")
    assert (out / "a.csv").exists()


def test_result_writer_manifest(tmp_path):
    grid = Grid(3, 4, 1.0)
    writer = ResultWriter(str(tmp_path / "run"))
    writer.write_model(Model.from_velocity(grid, 1.0, 0.5, 2.0), "model.bin", "a model")
    writer.write_grid(grid, np.zeros(grid.n, dtype=complex), "field.bin", "a field", dtype="c16")
    manifest_path = writer.finalize(complete=False, status="failed")
    assert os.path.basename(manifest_path) == MANIFEST_NAME
    manifest = pd.read_csv(manifest_path)
    assert manifest["file"].tolist() == ["model.bin", "field.bin"]
    assert manifest["description"].tolist() == ["a model", "a field"]
    assert not manifest["complete"].any()
    assert set(manifest["status"]) == {"failed"}
