"""
Django settings for the relative-navigation project.

The project has no database or web surface: it is driven through ``manage.py``
commands (``simulate``, ``replay``, ``validate``) and its test runner.
"""

import os
from pathlib import Path
from dotenv import load_dotenv
from str2bool import str2bool

load_dotenv()  # take environment variables from .env.

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = os.environ.get('SECRET_KEY', 'relnav-local-only')

DEBUG = str2bool(os.environ.get('DEBUG', 'False')) or False

ALLOWED_HOSTS = []

# Application definition

INSTALLED_APPS = [
    # Estimator
    "apps.tracking",

    # Scenarios, simulation and commands
    "apps.experiments",
]

DATABASES = {}

USE_TZ = True
TIME_ZONE = "UTC"

# Logging

LOG_LEVEL = os.getenv('RELNAV_LOG_LEVEL', 'INFO').upper()

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {"format": "%(asctime)s %(levelname)-7s %(name)s: %(message)s"},
    },
    "handlers": {
        "console": {"class": "logging.StreamHandler", "formatter": "plain"},
    },
    "loggers": {
        "apps": {"handlers": ["console"], "level": LOG_LEVEL, "propagate": False},
    },
}

# Long Monte-Carlo tests run only when asked for
SLOW_TESTS = str2bool(os.getenv('RELNAV_SLOW_TESTS', 'False')) or False

# ### Scenario defaults ###
# Keys match the scenario file; each may be overridden by RELNAV_<KEY> in the environment.
_RELNAV_DEFAULTS = {
    'duration_s'         : '120',
    'meas_rate_hz'       : '2',
    'filter_start_s'     : '5',
    'capture_time_s'     : '116',
    'param_check_time_s' : '90',
    'seed'               : '1',

    'inertia_kgm2'       : '4,8,5',
    'rho_t_m'            : '-0.15,0,0',
    'eta_axis'           : '1,1,1',
    'eta_angle_deg'      : '5',
    'q0'                 : '0,0,0,1',
    'omega0_rads'        : '0.10,0.20,0.15',
    'r0_m'               : '1.5,0,0',
    'v0_mps'             : '0,0,0',
    'n_z_rads'           : '1.13e-3',

    'sigma_r_m'          : '0.005',
    'sigma_qo'           : '0.005',
    'sigma_tau'          : '1e-4',
    'sigma_f'            : '1e-4',
    'filter_sigma_r_m'   : '',
    'filter_sigma_qo'    : '',
    'filter_sigma_tau'   : '3e-4',
    'filter_sigma_f'     : '',
    'occlusions_s'       : '96-116',
    'truth_disturbance'  : 'False',

    'init_mode'          : 'truth_perturbed',
    'init_att_err_rad'   : '0.1',
    'init_rate_err_rads' : '0.05',
    'init_std_dq'        : '0.1',
    'init_std_omega'     : '0.05',
    'init_std_p'         : '0.5',
    'init_std_r_m'       : '0.1',
    'init_std_v_mps'     : '0.01',
    'init_std_rho_m'     : '0.2',
    'init_std_deta'      : '0.03',

    'joseph_form'        : 'True',
    'gate_enabled'       : 'True',
    'gate_probability'   : '0.999',
    'gate_max_rejections': '4',
    'param_walk_p'       : '1e-5',
    'param_walk_rho'     : '1e-7',
    'param_walk_eta'     : '1e-6',
    'nominal_attitude'   : 'substep',
    'max_substep_s'      : '1e-3',
    'pose_step_s'        : '0.1',
}

RELNAV = {key: os.getenv('RELNAV_' + key.upper(), value) for key, value in _RELNAV_DEFAULTS.items()}
########################################
