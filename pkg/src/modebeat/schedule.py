"""Compilation of Stark-detuning timelines for one cavity transit.

A plan is an ordered, contiguous list of segments covering the transit
window [0, 10 w/v] in the atom's own clock (injection at 0, cavity axis at
5 w/v).  Each segment carries the atomic detuning relative to mode A, the
coupling profile, and which mode the segment targets; untargeted segments
are freeze intervals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from scipy.integrate import quad
from scipy.optimize import brentq

from .dynamics import CouplingProfile, PhysicalParams, PropagatorConfig, coupling_scale_at
from .errors import DomainError

TWO_PI = 2.0 * math.pi

# Freeze value as stated for the strongest Stark field, 150 kHz below mode B.
FREEZE_DETUNING = -TWO_PI * 278e3


@dataclass(frozen=True)
class StarkCalib:
    """Quadratic Stark map from electric field (V/cm) to detuning.

    quad_coeff is the transition shift per squared field in Hz/(V/cm)^2;
    zero_field_offset (Hz) is chosen so the atom is resonant with mode A at
    the documented 0.26 V/cm operating point.
    """

    quad_coeff: float = -255e3
    zero_field_offset: float = 255e3 * 0.26**2

    def __post_init__(self):
        if self.quad_coeff >= 0:
            raise DomainError("quad_coeff must be negative for this transition")

    @classmethod
    def from_resonance_field(cls, quad_coeff: float = -255e3, field_a: float = 0.26):
        return cls(quad_coeff, -quad_coeff * field_a**2)


def detuning_from_field(field_v_cm: float, calib: StarkCalib) -> float:
    """Atomic detuning (rad/s) produced by a static field in V/cm."""
    if field_v_cm < 0:
        raise DomainError(f"field must be >= 0, got {field_v_cm}")
    return TWO_PI * (calib.zero_field_offset + calib.quad_coeff * field_v_cm**2)


@dataclass(frozen=True)
class Segment:
    """One interval of the detuning timeline.

    target names the resonantly addressed mode ("a", "b" or None for freeze
    intervals); with isolation set, coupling to everything but the target is
    switched off.  detuning_end, when given, ramps the detuning linearly.
    """

    t_start: float
    t_end: float
    detuning: float
    profile: CouplingProfile
    isolation: bool = True
    target: str | None = None
    detuning_end: float | None = None

    def __post_init__(self):
        if self.t_end <= self.t_start:
            raise DomainError("segment requires t_end > t_start")
        if self.target not in (None, "a", "b"):
            raise DomainError(f"unknown target {self.target!r}")

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


@dataclass(frozen=True)
class PhaseEvent:
    """Instantaneous photon-number-conditional phase applied mid-plan."""

    time: float
    mode: str
    phase_per_photon: float


@dataclass(frozen=True)
class PulsePlan:
    atom_id: str
    injection_time: float
    segments: tuple[Segment, ...]
    events: tuple[PhaseEvent, ...] = field(default=())

    def __post_init__(self):
        if not self.segments:
            raise DomainError("plan needs at least one segment")
        segs = tuple(self.segments)
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "events", tuple(self.events))
        tol = 1e-12 * max(1.0, segs[-1].t_end)
        for prev, nxt in zip(segs, segs[1:]):
            if abs(nxt.t_start - prev.t_end) > tol:
                raise DomainError(
                    f"segments not contiguous at t={prev.t_end:.9e} vs {nxt.t_start:.9e}"
                )
        for ev in self.events:
            if not segs[0].t_start <= ev.time <= segs[-1].t_end:
                raise DomainError("event outside the plan span")

    @property
    def t_start(self) -> float:
        return self.segments[0].t_start

    @property
    def t_end(self) -> float:
        return self.segments[-1].t_end

    @property
    def active_end(self) -> float:
        """End of the last segment that addresses a mode."""
        ends = [s.t_end for s in self.segments if s.target is not None]
        if not ends:
            raise DomainError("plan has no coupled segment")
        return max(ends)

    def listing(self) -> str:
        """Human-readable schedule, one line per segment."""
        lines = []
        for seg in self.segments:
            if seg.detuning_end is None:
                det = f"{seg.detuning / TWO_PI / 1e3:+10.3f}"
            else:
                det = (
                    f"{seg.detuning / TWO_PI / 1e3:+.3f}"
                    f"->{seg.detuning_end / TWO_PI / 1e3:+.3f}"
                )
            lines.append(
                f"{seg.t_start * 1e6:10.3f} {seg.t_end * 1e6:10.3f} {det} "
                f"{seg.profile.kind:<8s} {'on' if seg.isolation else 'off'}"
            )
        return "\n".join(lines)


def pulse_duration(theta: float, omega_eff: float) -> float:
    """Duration of a constant-coupling pulse of area theta."""
    if theta < 0:
        raise DomainError(f"pulse area must be >= 0, got {theta}")
    if omega_eff <= 0:
        raise DomainError(f"omega_eff must be > 0, got {omega_eff}")
    return theta / omega_eff


def pulse_area(profile: CouplingProfile, params: PhysicalParams, t0: float, t1: float) -> float:
    """Accumulated area Integral Omega * coupling_scale dt over [t0, t1]."""
    if t1 < t0:
        raise DomainError("pulse_area requires t1 >= t0")
    if t1 == t0:
        return 0.0
    if profile.kind == "constant":
        return params.omega_rabi * (t1 - t0)
    val, _err = quad(
        lambda t: params.omega_rabi * coupling_scale_at(profile, params, t),
        t0,
        t1,
        epsabs=1e-9,
        epsrel=1e-12,
        limit=200,
    )
    return float(val)


def solve_pulse_window(
    profile: CouplingProfile,
    params: PhysicalParams,
    target_area: float,
    anchor: tuple[str, float],
) -> tuple[float, float]:
    """Invert pulse_area: find the window of the requested area.

    anchor is ("start", t), ("end", t) or ("center", t), fixing one edge or
    the midpoint of the window.
    """
    mode, t_ref = anchor
    if mode not in ("start", "end", "center"):
        raise DomainError(f"unknown anchor rule {mode!r}")
    if target_area < 0:
        raise DomainError(f"target_area must be >= 0, got {target_area}")
    if target_area == 0:
        return (t_ref, t_ref)
    if profile.kind == "constant":
        dur = pulse_duration(target_area, params.omega_rabi)
        if mode == "start":
            return (t_ref, t_ref + dur)
        if mode == "end":
            return (t_ref - dur, t_ref)
        return (t_ref - 0.5 * dur, t_ref + 0.5 * dur)

    reach = 10.0 * params.transit_time

    def window(x: float) -> tuple[float, float]:
        if mode == "start":
            return (t_ref, t_ref + x)
        if mode == "end":
            return (t_ref - x, t_ref)
        return (t_ref - 0.5 * x, t_ref + 0.5 * x)

    def residual(x: float) -> float:
        lo, hi = window(x)
        return pulse_area(profile, params, lo, hi) - target_area

    x_hi = reach if mode != "center" else 2.0 * reach
    if mode == "start":
        x_hi = max(x_hi, profile.t_center - t_ref + reach)
    elif mode == "end":
        x_hi = max(x_hi, t_ref - profile.t_center + reach)
    if residual(x_hi) < 0:
        raise DomainError(
            f"target area {target_area:.6f} rad not achievable from anchor {anchor}"
        )
    x = brentq(residual, 0.0, x_hi, xtol=1e-16, rtol=8.9e-16, maxiter=200)
    return window(float(x))


def _ramped(segments: list[Segment], ramp_time: float, profile: CouplingProfile) -> list[Segment]:
    """Insert linear detuning ramps of the given duration between segments."""
    if ramp_time <= 0.0:
        return segments
    out: list[Segment] = []
    shift = 0.0
    for i, seg in enumerate(segments):
        seg = replace(seg, t_start=seg.t_start + shift, t_end=seg.t_end + shift)
        out.append(seg)
        if i < len(segments) - 1:
            nxt = segments[i + 1]
            out.append(
                Segment(
                    seg.t_end,
                    seg.t_end + ramp_time,
                    seg.detuning if seg.detuning_end is None else seg.detuning_end,
                    profile,
                    seg.isolation,
                    None,
                    nxt.detuning,
                )
            )
            shift += ramp_time
    return out


def _compile_two_pulse_plan(
    atom_id: str,
    areas: tuple[float, float],
    targets: tuple[str, str],
    params: PhysicalParams,
    cfg: PropagatorConfig,
    profile_kind: str,
    freeze_detuning: float,
    ramp_time: float,
) -> PulsePlan:
    span = 10.0 * params.transit_time
    profile = CouplingProfile(profile_kind, t_center=0.5 * span)
    iso = cfg.idealized_isolation
    detunings = {"a": 0.0, "b": -params.delta}

    _t0, t1 = solve_pulse_window(profile, params, areas[0], ("start", 0.0))
    _t1, t2 = solve_pulse_window(profile, params, areas[1], ("start", t1))
    total_ramp = 2.0 * ramp_time
    if t2 + total_ramp >= span:
        raise DomainError("pulse windows exceed the transit span")
    segments = [
        Segment(0.0, t1, detunings[targets[0]], profile, iso, targets[0]),
        Segment(t1, t2, detunings[targets[1]], profile, iso, targets[1]),
        Segment(t2, span, freeze_detuning, profile, iso, None),
    ]
    segments = _ramped(segments, ramp_time, profile)
    return PulsePlan(atom_id, 0.0, tuple(segments))


def compile_source_plan(
    params: PhysicalParams,
    calib: StarkCalib,
    cfg: PropagatorConfig,
    *,
    profile_kind: str = "constant",
    freeze_detuning: float = FREEZE_DETUNING,
    ramp_time: float = 0.0,
) -> PulsePlan:
    """Source-atom timeline: pi/2 emission in mode A, pi emission in mode B,
    then freeze until exit."""
    return _compile_two_pulse_plan(
        "source",
        (math.pi / 2.0, math.pi),
        ("a", "b"),
        params,
        cfg,
        profile_kind,
        freeze_detuning,
        ramp_time,
    )


def compile_probe_plan(
    params: PhysicalParams,
    calib: StarkCalib,
    cfg: PropagatorConfig,
    *,
    profile_kind: str = "constant",
    freeze_detuning: float = FREEZE_DETUNING,
    ramp_time: float = 0.0,
) -> PulsePlan:
    """Probe-atom timeline: pi absorption in mode A, pi/2 mixing in mode B,
    then freeze until exit."""
    return _compile_two_pulse_plan(
        "probe",
        (math.pi, math.pi / 2.0),
        ("a", "b"),
        params,
        cfg,
        profile_kind,
        freeze_detuning,
        ramp_time,
    )


def compile_phase_gate_plan(
    params: PhysicalParams,
    calib: StarkCalib,
    gate_phase: float,
    *,
    cfg: PropagatorConfig | None = None,
    profile_kind: str = "constant",
    freeze_detuning: float = FREEZE_DETUNING,
) -> PulsePlan:
    """Conditional-phase timeline: pi in mode B, an instantaneous dispersive
    phase conditioned on the mode-A photon number, and a pi pulse back."""
    cfg = cfg or PropagatorConfig()
    span = 10.0 * params.transit_time
    profile = CouplingProfile(profile_kind, t_center=0.5 * span)
    iso = cfg.idealized_isolation
    _x, t1 = solve_pulse_window(profile, params, math.pi, ("start", 0.0))
    _y, t2 = solve_pulse_window(profile, params, math.pi, ("start", t1))
    if t2 >= span:
        raise DomainError("pulse windows exceed the transit span")
    segments = (
        Segment(0.0, t1, -params.delta, profile, iso, "b"),
        Segment(t1, t2, -params.delta, profile, iso, "b"),
        Segment(t2, span, freeze_detuning, profile, iso, None),
    )
    events = (PhaseEvent(t1, "mode_a", gate_phase),)
    return PulsePlan("gate", 0.0, segments, events)
