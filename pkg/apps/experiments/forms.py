import math

from django import forms
from str2bool import str2bool

import numpy as np

from apps.tracking.ekf import NOMINAL_HOLD, NOMINAL_SUBSTEP, FilterConfig
from apps.tracking.quaternion import normalize

from .scenario import INIT_MODES, Scenario, eta_from


class VectorField(forms.CharField):
    """Comma separated floats of a fixed length."""

    def __init__(self, *args, size=3, **kwargs):
        self.size = size
        super().__init__(*args, **kwargs)

    def to_python(self, value):
        value = super().to_python(value)
        try:
            numbers = [float(item) for item in value.split(",") if item.strip()]
        except ValueError:
            raise forms.ValidationError("expected comma separated numbers, got %(value)r", params={"value": value})
        if len(numbers) != self.size:
            raise forms.ValidationError(
                "expected %(size)d components, got %(count)d",
                params={"size": self.size, "count": len(numbers)},
            )
        if not all(math.isfinite(x) for x in numbers):
            raise forms.ValidationError("components must be finite")
        return tuple(numbers)


class WindowsField(forms.CharField):
    """Occlusion windows written ``start-end;start-end`` in seconds."""

    def __init__(self, *args, **kwargs):
        kwargs.setdefault("required", False)
        super().__init__(*args, **kwargs)

    def to_python(self, value):
        value = super().to_python(value)
        windows = []
        for item in value.replace(" ", "").split(";"):
            if not item:
                continue
            try:
                start, end = (float(x) for x in item.split("-", 1))
            except ValueError:
                raise forms.ValidationError("bad occlusion window %(item)r, expected start-end", params={"item": item})
            if end < start:
                raise forms.ValidationError("occlusion window %(item)r ends before it starts", params={"item": item})
            windows.append((start, end))
        return tuple(windows)


class FlagField(forms.CharField):
    def to_python(self, value):
        value = super().to_python(value)
        flag = str2bool(value)
        if flag is None:
            raise forms.ValidationError("expected a boolean, got %(value)r", params={"value": value})
        return flag


class ScenarioForm(forms.Form):
    duration_s = forms.FloatField(min_value=0.0)
    meas_rate_hz = forms.FloatField()
    filter_start_s = forms.FloatField(min_value=0.0)
    capture_time_s = forms.FloatField(min_value=0.0)
    param_check_time_s = forms.FloatField(min_value=0.0)
    seed = forms.IntegerField(min_value=0, max_value=2**64 - 1)

    inertia_kgm2 = VectorField()
    rho_t_m = VectorField()
    eta_axis = VectorField()
    eta_angle_deg = forms.FloatField()
    q0 = VectorField(size=4)
    omega0_rads = VectorField()
    r0_m = VectorField()
    v0_mps = VectorField()
    n_z_rads = forms.FloatField(min_value=0.0)

    sigma_r_m = forms.FloatField(min_value=0.0)
    sigma_qo = forms.FloatField(min_value=0.0, max_value=0.5)
    sigma_tau = forms.FloatField(min_value=0.0)
    sigma_f = forms.FloatField(min_value=0.0)
    filter_sigma_r_m = forms.FloatField(required=False, min_value=0.0)
    filter_sigma_qo = forms.FloatField(required=False, min_value=0.0)
    filter_sigma_tau = forms.FloatField(required=False, min_value=0.0)
    filter_sigma_f = forms.FloatField(required=False, min_value=0.0)
    occlusions_s = WindowsField()
    truth_disturbance = FlagField()

    init_mode = forms.ChoiceField(choices=[(m, m) for m in INIT_MODES])
    init_att_err_rad = forms.FloatField(min_value=0.0)
    init_rate_err_rads = forms.FloatField(min_value=0.0)
    init_std_dq = forms.FloatField(min_value=0.0)
    init_std_omega = forms.FloatField(min_value=0.0)
    init_std_p = forms.FloatField(min_value=0.0)
    init_std_r_m = forms.FloatField(min_value=0.0)
    init_std_v_mps = forms.FloatField(min_value=0.0)
    init_std_rho_m = forms.FloatField(min_value=0.0)
    init_std_deta = forms.FloatField(min_value=0.0)

    joseph_form = FlagField()
    gate_enabled = FlagField()
    gate_probability = forms.FloatField()
    gate_max_rejections = forms.IntegerField(min_value=0)
    param_walk_p = forms.FloatField(min_value=0.0)
    param_walk_rho = forms.FloatField(min_value=0.0)
    param_walk_eta = forms.FloatField(min_value=0.0)
    nominal_attitude = forms.ChoiceField(choices=[(NOMINAL_SUBSTEP, NOMINAL_SUBSTEP), (NOMINAL_HOLD, NOMINAL_HOLD)])
    max_substep_s = forms.FloatField()
    pose_step_s = forms.FloatField()

    def clean_meas_rate_hz(self):
        value = self.cleaned_data["meas_rate_hz"]
        if value <= 0.0:
            raise forms.ValidationError("measurement rate must be positive")
        return value

    def clean_inertia_kgm2(self):
        value = self.cleaned_data["inertia_kgm2"]
        if min(value) <= 0.0:
            raise forms.ValidationError("principal inertias must be positive")
        return value

    def clean_q0(self):
        value = np.array(self.cleaned_data["q0"])
        if np.linalg.norm(value) < 1e-9:
            raise forms.ValidationError("initial quaternion must be non-zero")
        return tuple(normalize(value / np.linalg.norm(value)))

    def clean_eta_axis(self):
        value = self.cleaned_data["eta_axis"]
        if np.linalg.norm(value) < 1e-12:
            raise forms.ValidationError("principal-axes rotation axis must be non-zero")
        return value

    def clean_gate_probability(self):
        value = self.cleaned_data["gate_probability"]
        if not 0.0 < value < 1.0:
            raise forms.ValidationError("gate probability must lie in (0, 1)")
        return value

    def clean_max_substep_s(self):
        value = self.cleaned_data["max_substep_s"]
        if not 0.0 < value <= 1e-3:
            raise forms.ValidationError("integration substep must lie in (0, 1e-3] s")
        return value

    def clean_pose_step_s(self):
        value = self.cleaned_data["pose_step_s"]
        if not 0.0 < value <= 0.1:
            raise forms.ValidationError("prediction step must lie in (0, 0.1] s")
        return value

    def clean(self):
        cleaned = super().clean()
        duration = cleaned.get("duration_s")
        windows = cleaned.get("occlusions_s") or ()
        if duration is not None:
            for start, end in windows:
                if start < 0.0 or end > duration:
                    self.add_error(
                        "occlusions_s",
                        f"occlusion window {start:g}-{end:g} s lies outside the run [0, {duration:g}] s",
                    )
        ordered = sorted(windows)
        for (a0, a1), (b0, b1) in zip(ordered, ordered[1:]):
            if b0 <= a1:
                self.add_error("occlusions_s", f"occlusion windows {a0:g}-{a1:g} s and {b0:g}-{b1:g} s overlap")
        cleaned["occlusions_s"] = tuple(ordered)

        for key, fallback in (("filter_sigma_r_m", "sigma_r_m"), ("filter_sigma_qo", "sigma_qo")):
            value = cleaned.get(key)
            if value is None:
                value = cleaned.get(fallback)
            if value is not None and value <= 0.0:
                self.add_error(key, "filter measurement noise must be positive; set it when the synthetic noise is zero")
            cleaned[key] = value
        for key, fallback in (("filter_sigma_tau", "sigma_tau"), ("filter_sigma_f", "sigma_f")):
            if cleaned.get(key) is None:
                cleaned[key] = cleaned.get(fallback)
        return cleaned

    def to_scenario(self) -> Scenario:
        c = self.cleaned_data
        config = FilterConfig(
            joseph_form=c["joseph_form"],
            gate_enabled=c["gate_enabled"],
            gate_probability=c["gate_probability"],
            gate_max_rejections=c["gate_max_rejections"],
            walk_p=c["param_walk_p"],
            walk_rho=c["param_walk_rho"],
            walk_eta=c["param_walk_eta"],
            nominal_attitude=c["nominal_attitude"],
            max_substep=c["max_substep_s"],
            pose_step=c["pose_step_s"],
        )
        return Scenario(
            inertia=np.array(c["inertia_kgm2"]),
            rho_t=np.array(c["rho_t_m"]),
            eta=eta_from(c["eta_axis"], c["eta_angle_deg"]),
            q0=np.array(c["q0"]),
            omega0=np.array(c["omega0_rads"]),
            r0=np.array(c["r0_m"]),
            v0=np.array(c["v0_mps"]),
            n_z=c["n_z_rads"],
            meas_rate=c["meas_rate_hz"],
            sigma_r=c["sigma_r_m"],
            sigma_qo=c["sigma_qo"],
            filter_sigma_r=c["filter_sigma_r_m"],
            filter_sigma_qo=c["filter_sigma_qo"],
            sigma_tau=c["sigma_tau"],
            sigma_f=c["sigma_f"],
            filter_sigma_tau=c["filter_sigma_tau"],
            filter_sigma_f=c["filter_sigma_f"],
            occlusions=c["occlusions_s"],
            duration=c["duration_s"],
            seed=c["seed"],
            filter_start=c["filter_start_s"],
            capture_time=c["capture_time_s"],
            param_check_time=c["param_check_time_s"],
            truth_disturbance=c["truth_disturbance"],
            init_mode=c["init_mode"],
            init_att_err=c["init_att_err_rad"],
            init_rate_err=c["init_rate_err_rads"],
            initial_std={
                "dq": c["init_std_dq"],
                "omega": c["init_std_omega"],
                "p": c["init_std_p"],
                "r_o": c["init_std_r_m"],
                "v_o": c["init_std_v_mps"],
                "rho_t": c["init_std_rho_m"],
                "deta": c["init_std_deta"],
            },
            filter=config,
        )
