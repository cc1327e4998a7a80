import os
import textwrap

import numpy as np
import pytest

from config.run_config import load_run_config, parse_events
from config.settings import DEFAULT_SETTINGS, get_default
from core.errors import ConfigError
from core.grid import Grid, Model
from core.grid_handler import GridFileHandler

DESK_CONFIG = os.path.join(os.path.dirname(__file__), os.pardir, "config", "desk_scale.ini")

SMALL = """
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
"""


def _write(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text))
    return str(path)


def test_get_default():
    assert get_default("grid", "h") == 5.0
    assert get_default("inversion", "lambda") == "auto"
    with pytest.raises(KeyError):
        get_default("grid", "spacing")
    with pytest.raises(KeyError):
        get_default("plots", "dpi")


def test_desk_scenario_loads():
    run_config = load_run_config(DESK_CONFIG)
    assert run_config.grid == Grid(40, 60, 5.0, 10)
    assert len(run_config.events) == 2
    assert run_config.anomaly == (60.0, 110.0, 120.0, 200.0, 150.0)
    assert run_config.inversion.lam is None
    assert run_config.inversion.update_model
    assert run_config.tolerance_m == 5.0
    assert os.path.basename(run_config.data_path) == "desk_data.bin"
    assert os.path.dirname(run_config.data_path) == os.path.dirname(os.path.abspath(DESK_CONFIG))


def test_desk_central_times_align_with_frequency_step():
    run_config = load_run_config(DESK_CONFIG)
    for event in run_config.events:
        assert (event.t_central * run_config.f_step) == pytest.approx(round(event.t_central * run_config.f_step))


def test_defaults_fill_missing_keys(tmp_path):
    run_config = load_run_config(_write(tmp_path, SMALL))
    assert run_config.inversion.n_outer == DEFAULT_SETTINGS["inversion"]["n_outer"]
    assert run_config.inversion.solver == "direct"
    assert run_config.snr_db is None
    assert run_config.events == ()
    assert run_config.output_dir == str(tmp_path / "output")
    acquisition = run_config.build_acquisition()
    assert acquisition.n_receivers == 12
    assert acquisition.n_frequencies == 3


def test_unknown_section_or_key(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(_write(tmp_path, SMALL + "\n[plots]\ndpi = 300\n"))
    with pytest.raises(ConfigError):
        load_run_config(_write(tmp_path, SMALL.replace("h = 10", "h = 10\nspacing = 3")))


def test_bad_values(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(_write(tmp_path, SMALL.replace("h = 10", "h = ten")))
    with pytest.raises(ConfigError):
        load_run_config(_write(tmp_path, SMALL + "\n[inversion]\nsolver = lu\n"))
    with pytest.raises(ConfigError):
        load_run_config(_write(tmp_path, SMALL + "\n[inversion]\nupdate_model = maybe\n"))
    with pytest.raises(ConfigError):
        load_run_config(_write(tmp_path, SMALL.replace("v_min = 1800", "v_min = 2600")))


def test_missing_files(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(str(tmp_path / "absent.ini"))
    with pytest.raises(ConfigError):
        load_run_config(_write(tmp_path, SMALL + "\n[paths]\nmodel0 = absent.bin\n"))


def test_event_outside_grid(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(_write(tmp_path, SMALL + "\n[synthesis]\nevents = 500 60 15 2.0\n"))


def test_overrides(tmp_path):
    run_config = load_run_config(
        _write(tmp_path, SMALL),
        {"seed": 9, "threads": 2, "output": str(tmp_path / "elsewhere"), "update_model": False, "snr_db": None},
    )
    assert run_config.seed == 9
    assert run_config.inversion.threads == 2
    assert not run_config.inversion.update_model
    assert run_config.output_dir == str(tmp_path / "elsewhere")
    with pytest.raises(ConfigError):
        load_run_config(_write(tmp_path, SMALL), {"threads": 0})


def test_parse_events():
    events = parse_events("100 120 25 2.0; 50, 60, 15, 1.0, 3.0\n")
    assert len(events) == 2
    assert events[0].amplitude == 1.0
    assert events[1].amplitude == 3.0
    assert parse_events("") == ()
    with pytest.raises(ConfigError):
        parse_events("1 2 3")
    with pytest.raises(ConfigError):
        parse_events("1 2 three 4")


def test_initial_model_is_smoothed_true_model(tmp_path):
    text = SMALL.replace("velocity_top = 2000", "velocity_top = 2000\nvelocity_gradient = 4\ninitial_smoothing = 2")
    run_config = load_run_config(_write(tmp_path, text))
    true_model = run_config.build_true_model()
    initial = run_config.build_initial_model()
    assert not np.array_equal(initial.m, true_model.m)
    assert np.array_equal(initial.m_min, true_model.m_min)
    assert np.all(initial.m >= initial.m_min) and np.all(initial.m <= initial.m_max)


def test_initial_model_from_file(tmp_path):
    grid = Grid(10, 12, 10.0, 5)
    model = Model.from_velocity(grid, 2100.0, 1800.0, 2500.0)
    GridFileHandler.write_model(model, str(tmp_path / "m0.bin"))
    run_config = load_run_config(_write(tmp_path, SMALL + "\n[paths]\nmodel0 = m0.bin\n"))
    assert np.array_equal(run_config.build_initial_model().m, model.m)

    GridFileHandler.write_model(Model.from_velocity(Grid(5, 5, 10.0, 5), 2100.0, 1800.0, 2500.0), str(tmp_path / "m0.bin"))
    with pytest.raises(ConfigError):
        run_config.build_initial_model()


def test_location_refinement_keys(tmp_path):
    text = SMALL + textwrap.dedent("""
    [inversion]
    berhu_fraction = 0.5
    compensate_illumination = no
    illumination_floor = 0.01
    refine_picks = no
    relocation_sweeps = 3
    prune_factor = 4
    prune_tolerance = 0.02
    """)
    inversion = load_run_config(_write(tmp_path, text)).inversion
    assert inversion.berhu_fraction == 0.5
    assert not inversion.compensate_illumination
    assert inversion.illumination_floor == 0.01
    assert not inversion.refine_picks
    assert inversion.relocation_sweeps == 3
    assert inversion.prune_factor == 4.0
    assert inversion.prune_tolerance == 0.02
    with pytest.raises(ConfigError):
        load_run_config(_write(tmp_path, SMALL + "\n[inversion]\nillumination_floor = 2\n"))
