"""Command-line interface.

Subcommands: ideal, master, mc, fit, gate, calibrate, schedule.  Times on
the CLI surface are microseconds and frequencies kHz; delimited output and
fit reports go to --out, optional figures next to it.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 fit non-convergence.  Errors print to stderr as ERROR[code]: message.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import analysis, config as cfgmod, experiment, schedule
from .dynamics import LindbladRates, calibrate_coupling_phases
from .errors import ConfigError, DomainError, FitNonConvergence, NumericalFailure


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="modebeat", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scan=False):
        p.add_argument("--config", type=Path, help="key = value configuration file")
        p.add_argument("--out", type=Path, help="output path")
        p.add_argument("--seed", type=int, help="random seed override")
        p.add_argument("--plot", action="store_true", help="render SVG figures next to --out")
        if scan:
            p.add_argument("--t-start-us", type=float, dest="t_start_us")
            p.add_argument("--t-end-us", type=float, dest="t_end_us")
            p.add_argument("--t-step-us", type=float, dest="t_step_us")
            p.add_argument("--windows", type=str, help='window list "a..b,c..d" in us')

    common(sub.add_parser("ideal", help="pure-state scan of P_e(T)"), scan=True)
    common(sub.add_parser("master", help="master-equation scan of P_e(T)"), scan=True)
    common(sub.add_parser("mc", help="Monte Carlo detection emulation"), scan=True)

    fit = sub.add_parser("fit", help="shared-phase sine fit of a dataset CSV")
    fit.add_argument("input", type=Path, help="RunDataset CSV")
    common(fit)

    common(sub.add_parser("gate", help="conditional-phase gate truth table"))
    common(sub.add_parser("calibrate", help="coupling-phase and detector calibration"))

    sched = sub.add_parser("schedule", help="print compiled pulse plans")
    sched.add_argument("plan", nargs="?", default="all", choices=["source", "probe", "gate", "all"])
    common(sched)

    return parser


def _load_config(args) -> cfgmod.Config:
    if getattr(args, "config", None):
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        cfg = cfgmod.parse_config(text)
    else:
        cfg = cfgmod.default_config()
        print("# no --config given; running with the full default parameter set:",
              file=sys.stderr)
        for line in cfgmod.serialize_config(cfg).splitlines():
            print("# " + line, file=sys.stderr)
    overrides = {}
    for key in ("seed", "t_start_us", "t_end_us", "t_step_us", "windows"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    if overrides:
        cfg = cfgmod.from_mapping({**cfg.as_dict(), **overrides})
    return cfg


def _require_out(args) -> Path:
    if args.out is None:
        raise ConfigError("this subcommand requires --out")
    args.out.parent.mkdir(parents=True, exist_ok=True)
    return args.out


def _scan_grid(cfg: cfgmod.Config, default_windows: str | None = None):
    """T values (us) and window ids, honoring the window list when set."""
    windows = cfg.windows_us(default_windows)
    step = cfg["t_step_us"]
    if step <= 0:
        raise ConfigError("t_step_us must be > 0")
    if windows is None:
        return cfg.t_grid_us(), [0] * len(cfg.t_grid_us())
    t_us, ids = [], []
    for wid, (lo, hi) in enumerate(windows):
        k = 0
        while True:
            t = lo + k * step
            if t > hi + 1e-9:
                break
            t_us.append(t)
            ids.append(wid)
            k += 1
    if not t_us:
        raise ConfigError("window list produced an empty T grid")
    return t_us, ids


def _model_scan(cfg: cfgmod.Config, kind: str):
    t_us, ids = _scan_grid(cfg)
    params = cfg.physical_params()
    prop = cfg.propagator()
    calib = cfg.stark_calib()
    dims = cfg.mode_dims()
    profile = cfg["coupling_profile"]
    source = cfg["source_atom"]
    ramp = cfg["ramp_time_us"] * 1e-6
    points = []
    for t, wid in zip(t_us, ids):
        if kind == "ideal":
            _state, p_e = experiment.run_ideal(
                t * 1e-6, params, prop, calib=calib, dims=dims,
                profile_kind=profile, ramp_time=ramp, source_atom=source,
            )
        else:
            _rho, p_e = experiment.run_master(
                t * 1e-6, params, prop, calib=calib, dims=dims,
                profile_kind=profile, ramp_time=ramp, source_atom=source,
            )
        # deterministic model rows: no counts, unit weight
        points.append(experiment.RunPoint(t * 1e-6, wid, 0, 0, p_e, 1.0))
    return experiment.RunDataset(tuple(points))


def _cmd_scan(args, kind: str) -> int:
    cfg = _load_config(args)
    out = _require_out(args)
    dataset = _model_scan(cfg, kind)
    out.write_text(dataset.to_csv())
    if args.plot:
        from . import plotting

        plotting.render_windows(dataset, out)
    return 0


def _cmd_mc(args) -> int:
    cfg = _load_config(args)
    out = _require_out(args)
    t_us, ids = _scan_grid(cfg, default_windows=cfgmod._MC_DEFAULT_WINDOWS)
    dataset = experiment.run_monte_carlo(
        [t * 1e-6 for t in t_us],
        cfg["n_sequences"],
        cfg.physical_params(),
        cfg.detector(),
        cfg.samples(),
        cfg["seed"],
        cfg=cfg.propagator(),
        calib=cfg.stark_calib(),
        dims=cfg.mode_dims(),
        profile_kind=cfg["coupling_profile"],
        ramp_time=cfg["ramp_time_us"] * 1e-6,
        window_ids=ids,
        source_atom=cfg["source_atom"],
    )
    out.write_text(dataset.to_csv())
    if args.plot:
        from . import plotting

        plotting.render_windows(dataset, out)
    return 0


def _cmd_fit(args) -> int:
    cfg = _load_config(args)
    out = _require_out(args)
    try:
        text = args.input.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read dataset {args.input}: {exc}") from None
    dataset = experiment.RunDataset.from_csv(text)
    delta = cfg.physical_params().delta
    report = analysis.fit_beat(dataset, delta)
    out.write_text(report.to_json() + "\n")
    if args.plot:
        from . import plotting

        plotting.render_windows(dataset, out, report=report, delta=delta)
    if not report.converged:
        print("ERROR[3]: fit did not converge (phase unidentifiable)", file=sys.stderr)
        return 3
    return 0


def _cmd_gate(args) -> int:
    cfg = _load_config(args)
    params = cfg.physical_params()
    prop = cfg.propagator()
    calib = cfg.stark_calib()
    dims = cfg.mode_dims()
    phase = cfg["gate_phase_rad"]
    basis = {"00": (0, (1, 0)), "01": (0, (0, 1)), "10": (1, (1, 0)), "11": (1, (0, 1))}
    diag = {}
    for label, (n_a, target) in basis.items():
        field = experiment.run_phase_gate(
            n_a, target, params, phase, prop, calib=calib, dims=dims,
            profile_kind=cfg["coupling_profile"],
        )
        idx = n_a * dims.dim_b + (1 if target == (0, 1) else 0)
        diag[label] = complex(field[idx])
    # global phase referenced to the |00> branch
    ref = diag["00"] / abs(diag["00"])
    realized = {k: v / ref for k, v in diag.items()}
    ideal = {"00": 1.0, "01": 1.0, "10": 1.0, "11": np.exp(1j * phase)}
    fid = abs(sum(np.conj(ideal[k]) * realized[k] for k in basis)) ** 2 / 16.0
    doc = {
        "gate_phase_rad": phase,
        "diagonal": {k: [realized[k].real, realized[k].imag] for k in sorted(basis)},
        "fidelity": float(fid),
    }
    text = json.dumps(doc, indent=2)
    if args.out:
        _require_out(args).write_text(text + "\n")
    else:
        print(text)
    return 0


def _cmd_calibrate(args) -> int:
    cfg = _load_config(args)
    params = cfg.physical_params()
    phase_a, phase_b = calibrate_coupling_phases(params)
    p_error, p_g = experiment.calibrate_detector_error(
        params, cfg.propagator(), calib=cfg.stark_calib(), dims=cfg.mode_dims()
    )
    calib = cfg.stark_calib()
    lines = [
        "# calibrated configuration fragment",
        f"coupling_phase_a_rad = {phase_a!r}",
        f"coupling_phase_b_rad = {phase_b!r}",
        f"detector_p_error = {round(p_error, 4)!r}",
        f"stark_zero_offset_khz = {calib.zero_field_offset / 1e3!r}",
        f"# model source g-probability: {p_g:.4f} (target readout 0.86)",
    ]
    text = "\n".join(lines)
    if args.out:
        _require_out(args).write_text(text + "\n")
    else:
        print(text)
    return 0


def _cmd_schedule(args) -> int:
    cfg = _load_config(args)
    params = cfg.physical_params()
    prop = cfg.propagator()
    calib = cfg.stark_calib()
    profile = cfg["coupling_profile"]
    freeze = cfg.freeze_detuning()
    ramp = cfg["ramp_time_us"] * 1e-6
    chunks = []
    if args.plan in ("source", "all"):
        plan = schedule.compile_source_plan(
            params, calib, prop, profile_kind=profile, freeze_detuning=freeze, ramp_time=ramp
        )
        chunks.append(f"plan source (t_start_us t_end_us detuning_khz profile isolation)\n{plan.listing()}")
    if args.plan in ("probe", "all"):
        plan = schedule.compile_probe_plan(
            params, calib, prop, profile_kind=profile, freeze_detuning=freeze, ramp_time=ramp
        )
        chunks.append(f"plan probe (t_start_us t_end_us detuning_khz profile isolation)\n{plan.listing()}")
    if args.plan in ("gate", "all"):
        plan = schedule.compile_phase_gate_plan(
            params, calib, cfg["gate_phase_rad"], cfg=prop,
            profile_kind=profile, freeze_detuning=freeze,
        )
        chunks.append(f"plan gate (t_start_us t_end_us detuning_khz profile isolation)\n{plan.listing()}")
    text = "\n\n".join(chunks)
    if args.out:
        _require_out(args).write_text(text + "\n")
    else:
        print(text)
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "ideal":
            return _cmd_scan(args, "ideal")
        if args.command == "master":
            return _cmd_scan(args, "master")
        if args.command == "mc":
            return _cmd_mc(args)
        if args.command == "fit":
            return _cmd_fit(args)
        if args.command == "gate":
            return _cmd_gate(args)
        if args.command == "calibrate":
            return _cmd_calibrate(args)
        if args.command == "schedule":
            return _cmd_schedule(args)
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, DomainError) as exc:
        print(f"ERROR[1]: {exc}", file=sys.stderr)
        return 1
    except NumericalFailure as exc:
        print(f"ERROR[2]: {exc}", file=sys.stderr)
        return 2
    except FitNonConvergence as exc:
        print(f"ERROR[3]: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
