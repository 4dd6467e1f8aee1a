from apps.experiments.scenario import default_scenario

NOISE_FREE = {
    "duration_s": 20,
    "filter_start_s": 5,
    "capture_time_s": 20,
    "param_check_time_s": 15,
    "occlusions_s": "",
    "sigma_r_m": 0,
    "sigma_qo": 0,
    "sigma_tau": 0,
    "sigma_f": 0,
    "filter_sigma_r_m": 0.005,
    "filter_sigma_qo": 0.005,
    "init_mode": "truth",
    "gate_enabled": False,
}

SHORT = {
    "duration_s": 10,
    "filter_start_s": 5,
    "capture_time_s": 10,
    "param_check_time_s": 10,
    "occlusions_s": "",
}


def noise_free_scenario(**overrides):
    return default_scenario(**{**NOISE_FREE, **overrides})


def short_scenario(**overrides):
    return default_scenario(**{**SHORT, **overrides})
