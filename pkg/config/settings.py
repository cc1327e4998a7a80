# Default values for every run-configuration key, grouped by INI section.
# "auto" means the value is derived at run time (see README.md).

DEFAULT_SETTINGS = {
    "paths": {
        "model0": None,
        "true_model": None,
        "data": "data.bin",
        "output": "output",
    },
    "grid": {
        "nz": 40,
        "nx": 60,
        "h": 5.0,
        "pml_width": 10,
    },
    "model": {
        "velocity_top": 2500.0,
        "velocity_gradient": 0.0,
        "v_min": 2250.0,
        "v_max": 3500.0,
        "anomaly": None,
        "initial_smoothing": 0.0,
    },
    "acquisition": {
        "receiver_depth": 5.0,
        "receiver_x_start": None,
        "receiver_x_stop": None,
        "receiver_spacing": None,
        "f_min": 5.0,
        "f_max": 45.0,
        "f_step": 2.0,
        "record_duration": 4.0,
        "dt": 0.004,
    },
    "inversion": {
        "lambda": "auto",
        "gamma": "auto",
        "gamma_ratio": 1e4,
        "n_inner": 10,
        "n_outer": 5,
        "update_model": True,
        "peak_threshold": 0.3,
        "peak_min_distance": "auto",
        "tv_weight": 0.05,
        "source_weight": "auto",
        "auto_source_fraction": 0.1,
        "berhu_epsilon": "auto",
        "berhu_fraction": 0.2,
        "compensate_illumination": True,
        "illumination_floor": 1e-3,
        "refine_picks": True,
        "relocation_sweeps": 10,
        "prune_factor": 10.0,
        "prune_tolerance": 1e-3,
        "source_tolerance": 1e-3,
        "data_tolerance": 1e-2,
        "tv_max_iter": 200,
        "tv_tolerance": 1e-5,
        "solver": "direct",
        "threads": 1,
    },
    "synthesis": {
        "events": "",
        "snr_db": None,
        "seed": 0,
    },
    "report": {
        "location_tolerance": "auto",
    },
}


def get_default(section, key):
    """
    Get the default value of a configuration key.

    Args:
        section (str): The INI section
        key (str): The key inside the section

    Returns:
        The default value

    Raises:
        KeyError: If the section or key is unknown
    """
    if section not in DEFAULT_SETTINGS:
        raise KeyError(f"Unknown configuration section '{section}'")

    section_defaults = DEFAULT_SETTINGS[section]
    if key not in section_defaults:
        raise KeyError(f"Unknown configuration key '{section}.{key}'")

    return section_defaults[key]
