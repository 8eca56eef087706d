"""Flat key = value configuration with the apparatus defaults.

CLI-surface units: times in microseconds, ordinary frequencies in kHz,
lengths as annotated per key.  Everything is converted to SI angular units
when the typed parameter records are built.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .dynamics import PhysicalParams, PropagatorConfig
from .errors import ConfigError
from .experiment import DetectorModel, SampleModel
from .hilbert import ModeDims
from .schedule import StarkCalib

TWO_PI = 2.0 * math.pi

_MC_DEFAULT_WINDOWS = "20..170,200..350,380..530,560..710"

# (key, default, comment) in serialization order.
_SPEC = (
    ("# physics", None, None),
    ("omega_rabi_khz", 47.0, "vacuum Rabi frequency Omega/2pi"),
    ("delta_khz", 128.3, "mode A - mode B splitting delta/2pi"),
    ("t_r_a_us", 1000.0, "photon damping time of mode A"),
    ("t_r_b_us", 900.0, "photon damping time of mode B"),
    ("n_bar_a", 0.8, "equilibrium occupation of mode A"),
    ("n_bar_b", 1.0, "equilibrium occupation of mode B"),
    ("n_bar_erased", 0.1, "occupation left by the erasure step"),
    ("velocity_m_s", 503.0, "atomic beam velocity"),
    ("waist_mm", 6.0, "gaussian mode waist"),
    ("coupling_phase_a_rad", -math.pi / 2.0, "calibrated dipole phase, mode A"),
    ("coupling_phase_b_rad", math.pi, "calibrated dipole phase, mode B"),
    ("# stark map", None, None),
    ("stark_quad_khz", -255.0, "transition shift per (V/cm)^2"),
    ("stark_zero_offset_khz", 255.0 * 0.26**2, "calibrated zero-field offset"),
    ("freeze_detuning_khz", -278.0, "detuning of the freeze interval"),
    ("# detection and sampling", None, None),
    ("detector_p_error", 0.0605, "calibrated misread probability"),
    ("detector_p_miss", 0.13, "missed-detection probability"),
    ("sample_mean_atoms", 0.12, "Poisson mean atoms per sample"),
    ("repetition_rate_hz", 600.0, "sequence repetition rate"),
    ("# propagation", None, None),
    ("dt_max_us", 0.01, "maximum integrator step"),
    ("method", "fixed4", "fixed4 or adaptive"),
    ("coupling_profile", "constant", "constant or gaussian"),
    ("idealized_isolation", True, "decouple the non-targeted mode"),
    ("energy_offset_khz", 0.0, "global energy offset (frame checks)"),
    ("ramp_time_us", 0.0, "linear detuning ramp between segments"),
    ("n_max_a", 4, "Fock truncation of mode A"),
    ("n_max_b", 4, "Fock truncation of mode B"),
    ("# scenario", None, None),
    ("t_start_us", 20.0, "scan start"),
    ("t_end_us", 100.0, "scan end"),
    ("t_step_us", 12.5, "scan step"),
    ("windows", "", "window list a..b,c..d in us (mc default: four windows)"),
    ("n_sequences", 2000, "Monte Carlo sequences per point"),
    ("seed", 1, "random seed"),
    ("gate_phase_rad", math.pi, "conditional phase of the gate scenario"),
    ("source_atom", True, "send the source atom"),
)

DEFAULTS = {k: v for k, v, _ in _SPEC if not k.startswith("#")}


@dataclass(frozen=True)
class Config:
    values: tuple

    def __getitem__(self, key: str):
        return dict(self.values)[key]

    def as_dict(self) -> dict:
        return dict(self.values)

    # typed views -----------------------------------------------------

    def physical_params(self) -> PhysicalParams:
        d = self.as_dict()
        return PhysicalParams(
            omega_rabi=TWO_PI * d["omega_rabi_khz"] * 1e3,
            delta=TWO_PI * d["delta_khz"] * 1e3,
            kappa_a=1.0 / (d["t_r_a_us"] * 1e-6),
            kappa_b=1.0 / (d["t_r_b_us"] * 1e-6),
            n_bar_a=d["n_bar_a"],
            n_bar_b=d["n_bar_b"],
            n_bar_erased=d["n_bar_erased"],
            velocity=d["velocity_m_s"],
            waist=d["waist_mm"] * 1e-3,
            coupling_phase_a=d["coupling_phase_a_rad"],
            coupling_phase_b=d["coupling_phase_b_rad"],
        )

    def stark_calib(self) -> StarkCalib:
        d = self.as_dict()
        return StarkCalib(d["stark_quad_khz"] * 1e3, d["stark_zero_offset_khz"] * 1e3)

    def detector(self) -> DetectorModel:
        d = self.as_dict()
        return DetectorModel(d["detector_p_error"], d["detector_p_miss"])

    def samples(self) -> SampleModel:
        d = self.as_dict()
        return SampleModel(d["sample_mean_atoms"], d["repetition_rate_hz"])

    def propagator(self) -> PropagatorConfig:
        d = self.as_dict()
        return PropagatorConfig(
            dt_max=d["dt_max_us"] * 1e-6,
            method=d["method"],
            idealized_isolation=d["idealized_isolation"],
            energy_offset=TWO_PI * d["energy_offset_khz"] * 1e3,
        )

    def mode_dims(self) -> ModeDims:
        d = self.as_dict()
        return ModeDims(d["n_max_a"], d["n_max_b"])

    def freeze_detuning(self) -> float:
        return TWO_PI * self["freeze_detuning_khz"] * 1e3

    def t_grid_us(self) -> list[float]:
        d = self.as_dict()
        start, end, step = d["t_start_us"], d["t_end_us"], d["t_step_us"]
        if step <= 0:
            raise ConfigError(f"t_step_us must be > 0, got {step}")
        if end < start:
            raise ConfigError("t_end_us must be >= t_start_us")
        grid = []
        k = 0
        while True:
            t = start + k * step
            if t > end + 1e-9:
                break
            grid.append(t)
            k += 1
        return grid

    def windows_us(self, default: str | None = None):
        """Parsed window list [(lo_us, hi_us), ...] or None when unset."""
        text = self["windows"].strip() or (default or "")
        if not text:
            return None
        return parse_windows(text)


def parse_windows(text: str) -> list[tuple[float, float]]:
    windows = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if ".." not in chunk:
            raise ConfigError(f"window {chunk!r} must look like start..end (in us)")
        lo, hi = chunk.split("..", 1)
        try:
            lo_f, hi_f = float(lo), float(hi)
        except ValueError:
            raise ConfigError(f"window bounds {chunk!r} are not numbers") from None
        if hi_f <= lo_f:
            raise ConfigError(f"window {chunk!r} is empty or reversed")
        windows.append((lo_f, hi_f))
    return windows


def _coerce(key: str, raw: str):
    default = DEFAULTS[key]
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ConfigError(f"{key} expects true/false, got {raw!r}")
    if isinstance(default, int):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key} expects an integer, got {raw!r}") from None
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{key} expects a number, got {raw!r}") from None
    return raw


def parse_config(text: str) -> Config:
    values = dict(DEFAULTS)
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw)
    return from_mapping(values)


def from_mapping(values: dict) -> Config:
    unknown = set(values) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}")
    merged = dict(DEFAULTS)
    merged.update(values)
    ordered = tuple((k, merged[k]) for k, _v, _c in _SPEC if not k.startswith("#"))
    cfg = Config(ordered)
    # force validation of every typed view now, so bad values fail early
    cfg.physical_params()
    cfg.stark_calib()
    cfg.detector()
    cfg.samples()
    cfg.propagator()
    cfg.mode_dims()
    if cfg["coupling_profile"] not in ("constant", "gaussian"):
        raise ConfigError("coupling_profile must be constant or gaussian")
    if cfg["windows"]:
        parse_windows(cfg["windows"])
    return cfg


def default_config() -> Config:
    return from_mapping({})


def serialize_config(cfg: Config) -> str:
    d = cfg.as_dict()
    lines = []
    for key, _default, comment in _SPEC:
        if key.startswith("#"):
            lines.append(key)
            continue
        v = d[key]
        if isinstance(v, bool):
            out = "true" if v else "false"
        elif isinstance(v, float):
            out = repr(v)
        else:
            out = str(v)
        lines.append(f"{key} = {out}  # {comment}" if comment else f"{key} = {out}")
    return "\n".join(lines) + "\n"
