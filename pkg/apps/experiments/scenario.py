"""
Scenario description and loader.

Scenario files are flat ``key=value`` text with the unit in the key name::

    duration_s=120
    inertia_kgm2=4,8,5
    occlusions_s=96-116

Keys that are absent take their value from ``settings.RELNAV``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple

import numpy as np
from django.conf import settings
from django.core.exceptions import ValidationError
from dotenv import dotenv_values

from apps.tracking.dynamics import (
    InertiaRatios,
    NoiseIntensities,
    OrbitRate,
    TargetGeometry,
    TruthState,
)
from apps.tracking.ekf import FilterConfig, MeasurementNoise
from apps.tracking.quaternion import from_axis_angle, normalize

from cli.common import COMMON
from cli.h_files import file_exists, file_load

logger = logging.getLogger(__name__)

INIT_MEASUREMENT = "measurement"
INIT_TRUTH_PERTURBED = "truth_perturbed"
INIT_TRUTH = "truth"
INIT_TRUTH_SAMPLED = "truth_sampled"
INIT_MODES = (INIT_MEASUREMENT, INIT_TRUTH_PERTURBED, INIT_TRUTH, INIT_TRUTH_SAMPLED)
TRUTH_MODES = (INIT_TRUTH_PERTURBED, INIT_TRUTH, INIT_TRUTH_SAMPLED)


@dataclass(frozen=True)
class Scenario:
    inertia: np.ndarray
    rho_t: np.ndarray
    eta: np.ndarray
    q0: np.ndarray
    omega0: np.ndarray
    r0: np.ndarray
    v0: np.ndarray
    n_z: float
    meas_rate: float
    sigma_r: float
    sigma_qo: float
    filter_sigma_r: float
    filter_sigma_qo: float
    sigma_tau: float
    sigma_f: float
    filter_sigma_tau: float
    filter_sigma_f: float
    occlusions: Tuple[Tuple[float, float], ...]
    duration: float
    seed: int
    filter_start: float
    capture_time: float
    param_check_time: float
    truth_disturbance: bool = False
    init_mode: str = INIT_TRUTH_PERTURBED
    init_att_err: float = 0.1
    init_rate_err: float = 0.05
    initial_std: Dict[str, float] = field(default_factory=dict)
    filter: FilterConfig = FilterConfig()

    @property
    def ratios(self) -> InertiaRatios:
        return InertiaRatios.from_inertia(self.inertia)

    @property
    def orbit(self) -> OrbitRate:
        return OrbitRate(self.n_z)

    @property
    def geometry(self) -> TargetGeometry:
        return TargetGeometry(rho_t=self.rho_t, eta=self.eta)

    @property
    def intensities(self) -> NoiseIntensities:
        return NoiseIntensities(self.sigma_tau, self.sigma_f)

    @property
    def filter_intensities(self) -> NoiseIntensities:
        """White-noise intensities the filter assumes; ``intensities`` drive the truth."""
        return NoiseIntensities(self.filter_sigma_tau, self.filter_sigma_f)

    @property
    def noise(self) -> MeasurementNoise:
        return MeasurementNoise(self.filter_sigma_r, self.filter_sigma_qo)

    def initial_truth(self) -> TruthState:
        return TruthState(q=self.q0, omega=self.omega0, r_o=self.r0, v_o=self.v0, t=0.0)

    def grid(self) -> np.ndarray:
        """Sample times ``k / meas_rate``; empty for a zero-length run."""
        if self.duration <= 0.0:
            return np.zeros(0)
        count = int(np.floor(self.duration * self.meas_rate + 1e-9)) + 1
        return np.arange(count) / self.meas_rate

    def occluded(self, t: float) -> bool:
        return any(start - 1e-9 <= t <= end + 1e-9 for start, end in self.occlusions)

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, seed=seed)


def _line_numbers(path: Path) -> Dict[str, int]:
    lines = {}
    for number, line in enumerate(file_load(str(path), as_list=True), start=1):
        key = line.split("=", 1)[0].strip()
        if key and not key.startswith("#") and "=" in line:
            lines.setdefault(key, number)
    return lines


def defaults() -> Dict[str, str]:
    return {key: str(value) for key, value in settings.RELNAV.items()}


def scenario_from_values(values: Mapping[str, Optional[str]], lines: Optional[Mapping[str, int]] = None) -> Scenario:
    """Validate raw ``key=value`` strings (over the defaults) into a ``Scenario``."""
    from .forms import ScenarioForm

    data = defaults()
    data.update({k: v for k, v in values.items() if v is not None})
    form = ScenarioForm(data=data)
    if not form.is_valid():
        lines = lines or {}
        messages = []
        for key, errors in form.errors.items():
            where = f"line {lines[key]}: " if key in lines else ""
            label = key if key != "__all__" else "scenario"
            messages.extend(f"{where}{label}: {err}" for err in errors)
        raise ValidationError(messages, code=str(COMMON.INPUT_ERR))
    return form.to_scenario()


def load_scenario(path, overrides: Optional[Mapping[str, str]] = None) -> Scenario:
    path = Path(path)
    if not file_exists(path):
        raise ValidationError(f"scenario file not found: {path}", code=str(COMMON.INPUT_ERR))
    try:
        lines = _line_numbers(path)
    except (OSError, UnicodeDecodeError) as exc:
        raise ValidationError(f"cannot read scenario file {path}: {exc}", code=str(COMMON.INPUT_ERR))
    values = dict(dotenv_values(path))
    unknown = sorted(set(values) - set(settings.RELNAV))
    if unknown:
        raise ValidationError(
            [f"line {lines.get(key, '?')}: unknown key {key}" for key in unknown],
            code=str(COMMON.INPUT_ERR),
        )
    values.update(overrides or {})
    scenario = scenario_from_values(values, lines)
    logger.info("loaded scenario %s (seed %d, %.1f s)", path.name, scenario.seed, scenario.duration)
    return scenario


def default_scenario(**overrides) -> Scenario:
    return scenario_from_values({k: str(v) for k, v in overrides.items()})


def eta_from(axis, angle_deg: float) -> np.ndarray:
    return normalize(from_axis_angle(axis, np.deg2rad(angle_deg)))
