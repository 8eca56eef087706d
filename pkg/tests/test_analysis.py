import json
import math

import numpy as np
import pytest

from modebeat.analysis import ContrastDecay, binomial_stderr, contrast_decay, fit_beat
from modebeat.errors import DomainError, FitNonConvergence
from modebeat.experiment import RunDataset, RunPoint

DELTA = 2 * math.pi * 128.3e3


def make_dataset(phi, contrasts, offsets, windows_t_us, stderr=0.01, rng=None, n=None):
    """Synthetic dataset from the window model, optionally binomial-sampled."""
    points = []
    for wid, t_us in enumerate(windows_t_us):
        for t in t_us:
            p = offsets[wid] + 0.5 * contrasts[wid] * math.cos(DELTA * t * 1e-6 + phi)
            if rng is None:
                points.append(RunPoint(t * 1e-6, wid, 0, 0, p, stderr))
            else:
                n_e = rng.binomial(n, min(max(p, 0.0), 1.0))
                points.append(
                    RunPoint(t * 1e-6, wid, n, n_e, n_e / n, binomial_stderr(n_e, n))
                )
    return RunDataset(tuple(points))


GRIDS = [np.linspace(20, 120, 21), np.linspace(200, 300, 21)]


def test_binomial_stderr_values():
    assert abs(binomial_stderr(50, 100) - 0.05) < 1e-12
    assert abs(binomial_stderr(30, 100) - math.sqrt(0.3 * 0.7 / 100)) < 1e-12
    assert binomial_stderr(0, 100) == 0.01
    assert binomial_stderr(100, 100) == 0.01


def test_binomial_stderr_domain():
    with pytest.raises(DomainError):
        binomial_stderr(0, 0)
    with pytest.raises(DomainError):
        binomial_stderr(5, 4)


def test_fit_recovers_noiseless_parameters():
    data = make_dataset(1.0, (1.0, 0.8), (0.5, 0.45), GRIDS)
    report = fit_beat(data, DELTA)
    assert report.converged
    assert abs(report.phi_shared - 1.0) < 1e-6
    assert abs(report.windows[0].contrast - 1.0) < 1e-6
    assert abs(report.windows[1].contrast - 0.8) < 1e-6
    assert abs(report.windows[0].offset - 0.5) < 1e-6
    assert abs(report.windows[1].offset - 0.45) < 1e-6


def test_fit_weighted_residuals_vanish_on_noiseless_input():
    data = make_dataset(2.6, (0.7,), (0.4,), [np.linspace(30, 90, 25)])
    report = fit_beat(data, DELTA)
    rms = math.sqrt(report.residual_chi2 / 25)
    assert rms < 1e-9


def test_fit_coverage_on_noisy_data():
    hits, trials = 0, 60
    for seed in range(trials):
        rng = np.random.default_rng(seed)
        data = make_dataset(1.0, (0.9, 0.7), (0.5, 0.45), GRIDS, rng=rng, n=2000)
        report = fit_beat(data, DELTA)
        err = abs((report.phi_shared - 1.0 + math.pi) % (2 * math.pi) - math.pi)
        if err <= 3 * report.phi_stderr:
            hits += 1
    assert hits / trials >= 0.95


def test_fit_flags_unidentifiable_phase():
    data = make_dataset(0.0, (0.0,), (0.42,), [np.linspace(20, 80, 13)])
    report = fit_beat(data, DELTA)
    assert not report.converged
    assert abs(report.windows[0].offset - 0.42) < 1e-9


def test_fit_rank_deficient_window_raises():
    period = 2 * math.pi / DELTA
    ts = 20e-6 + period * np.arange(5)
    points = tuple(
        RunPoint(t, 0, 0, 0, 0.5 + 0.1 * (i % 2), 0.01) for i, t in enumerate(ts)
    )
    with pytest.raises(FitNonConvergence, match="window 0"):
        fit_beat(RunDataset(points), DELTA)


def test_fit_requires_enough_points():
    points = tuple(RunPoint(20e-6 + i * 1e-6, 0, 0, 0, 0.5, 0.01) for i in range(2))
    with pytest.raises(DomainError):
        fit_beat(RunDataset(points), DELTA)


def test_fit_invariant_under_reordering():
    rng = np.random.default_rng(8)
    data = make_dataset(0.8, (0.9, 0.6), (0.5, 0.4), GRIDS, rng=rng, n=500)
    report_a = fit_beat(data, DELTA)
    perm = rng.permutation(len(data.points))
    shuffled = RunDataset(tuple(data.points[i] for i in perm))
    report_b = fit_beat(shuffled, DELTA)
    assert abs(report_a.phi_shared - report_b.phi_shared) < 1e-12
    assert report_a.residual_chi2 == pytest.approx(report_b.residual_chi2, rel=1e-12)


def test_fit_optimum_beats_random_restarts():
    rng = np.random.default_rng(17)
    data = make_dataset(2.2, (0.8, 0.5), (0.5, 0.4), GRIDS, rng=rng, n=800)
    report = fit_beat(data, DELTA)

    from modebeat.analysis import _gather_windows, _objective

    windows = _gather_windows(data, DELTA)
    best = _objective(windows, DELTA, report.phi_shared)
    for phi in rng.uniform(0, 2 * math.pi, 64):
        assert best <= _objective(windows, DELTA, phi) + 1e-9


def test_fit_skips_flagged_points():
    data = make_dataset(1.0, (0.9,), (0.5,), [np.linspace(20, 80, 13)])
    flagged = RunPoint(45e-6, 0, 0, 0, float("nan"), float("nan"))
    merged = RunDataset(data.points + (flagged,))
    report = fit_beat(merged, DELTA)
    assert abs(report.phi_shared - 1.0) < 1e-6


def test_report_json_schema_is_exact():
    data = make_dataset(1.0, (1.0, 0.8), (0.5, 0.45), GRIDS)
    report = fit_beat(data, DELTA)
    doc = json.loads(report.to_json())
    assert sorted(doc.keys()) == ["chi2", "converged", "iterations", "phi_rad", "windows"]
    for win in doc["windows"]:
        assert sorted(win.keys()) == ["contrast", "offset", "t_center_us", "window"]
    # the frequency is supplied, never fitted, and never reported
    assert "freq" not in report.to_json() and "delta" not in doc


def test_contrast_decay_exact_roundtrip():
    tau = 1e-3
    centers = [100e-6, 300e-6, 500e-6, 700e-6]
    from modebeat.analysis import FitReport, WindowFit

    windows = tuple(
        WindowFit(i, math.exp(-t / tau), 0.4, t, True) for i, t in enumerate(centers)
    )
    report = FitReport(1.0, windows, 0.0, True, 3, 0.01)
    decay = contrast_decay(report, centers)
    assert abs(decay.time_constant - tau) < 1e-9 * tau
    assert decay.excluded_windows == ()


def test_contrast_decay_excludes_nonpositive_windows():
    from modebeat.analysis import FitReport, WindowFit

    windows = (
        WindowFit(0, 0.8, 0.4, 100e-6, True),
        WindowFit(1, -0.01, 0.4, 300e-6, False),
        WindowFit(2, 0.4, 0.4, 500e-6, True),
    )
    report = FitReport(1.0, windows, 0.0, True, 3, 0.01)
    decay = contrast_decay(report, [100e-6, 300e-6, 500e-6])
    assert decay.excluded_windows == (1,)
    assert decay.used_windows == (0, 2)


def test_contrast_decay_needs_two_windows():
    from modebeat.analysis import FitReport, WindowFit

    report = FitReport(1.0, (WindowFit(0, 0.8, 0.4, 100e-6, True),), 0.0, True, 1, 0.01)
    with pytest.raises(DomainError):
        contrast_decay(report, [100e-6])


def test_contrast_decay_of_full_model_brackets_damping_times():
    # the fitted contrast decay of the dissipative pipeline sits between the
    # bare coherence-survival scale and the readout washout, i.e. within
    # [0.3 ms, 1.5 ms] around the 1.0/0.9 ms photon damping times
    from modebeat.dynamics import PhysicalParams, PropagatorConfig
    from modebeat.experiment import run_master

    params = PhysicalParams()
    cfg = PropagatorConfig(idealized_isolation=False)
    windows = [(20, 170), (200, 350), (380, 530), (560, 710)]
    points = []
    for wid, (lo, hi) in enumerate(windows):
        for t_us in np.arange(lo, hi + 1e-9, 25.0):
            _rho, pe = run_master(float(t_us) * 1e-6, params, cfg)
            points.append(RunPoint(float(t_us) * 1e-6, wid, 0, 0, pe, 1.0))
    report = fit_beat(RunDataset(tuple(points)), params.delta)
    decay = contrast_decay(report, [w.t_center for w in report.windows])
    assert 0.3e-3 <= decay.time_constant <= 1.5e-3
