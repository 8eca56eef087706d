"""Statistical reduction of run datasets.

The beat fit follows the acquisition's convention: the oscillation
frequency is the independently supplied mode splitting, never adjusted;
every time window gets its own contrast and offset; all windows share one
phase.  Given the phase the model is linear, so the fit scans the phase
over a fine grid with a closed-form weighted least-squares solution per
value, then polishes the optimum with Newton steps.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, FitNonConvergence

PHI_SCAN_STEP = 1e-3
GRADIENT_TOL = 1e-10


def binomial_stderr(n_e: int, n_selected: int) -> float:
    """Binomial standard error of p = n_e / n_selected.

    Degenerate proportions (0 or 1) get a 1/n floor so weighted fits never
    see an infinite weight.
    """
    if n_selected < 1:
        raise DomainError(f"n_selected must be >= 1, got {n_selected}")
    if not 0 <= n_e <= n_selected:
        raise DomainError(f"n_e={n_e} outside [0, {n_selected}]")
    p = n_e / n_selected
    if n_e in (0, n_selected):
        return 1.0 / n_selected
    return math.sqrt(p * (1.0 - p) / n_selected)


@dataclass(frozen=True)
class WindowFit:
    window: int
    contrast: float
    offset: float
    t_center: float
    contrast_valid: bool


@dataclass(frozen=True)
class FitReport:
    phi_shared: float
    windows: tuple[WindowFit, ...]
    residual_chi2: float
    converged: bool
    iterations: int
    phi_stderr: float

    def to_json(self) -> str:
        doc = {
            "phi_rad": self.phi_shared,
            "windows": [
                {
                    "window": w.window,
                    "contrast": w.contrast,
                    "offset": w.offset,
                    "t_center_us": w.t_center * 1e6,
                }
                for w in self.windows
            ],
            "chi2": self.residual_chi2,
            "converged": self.converged,
            "iterations": self.iterations,
        }
        return json.dumps(doc, indent=2)


class _WindowData:
    def __init__(self, window: int, t, y, sigma):
        self.window = window
        self.t = np.asarray(t, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.w = 1.0 / np.asarray(sigma, dtype=float) ** 2
        self.t_center = float(0.5 * (self.t.min() + self.t.max()))


def _gather_windows(dataset, delta: float) -> list[_WindowData]:
    groups: dict[int, list] = {}
    for pt in dataset.points:
        if not (np.isfinite(pt.p_e) and np.isfinite(pt.stderr)) or pt.stderr <= 0:
            continue
        groups.setdefault(pt.window, []).append((pt.t, pt.p_e, pt.stderr))
    if not groups:
        raise DomainError("dataset holds no usable points")
    windows = []
    for wid in sorted(groups):
        rows = groups[wid]
        if len(rows) < 3:
            raise DomainError(f"window {wid} has fewer than 3 usable points")
        t, y, s = zip(*rows)
        windows.append(_WindowData(wid, t, y, s))
    return windows


def _window_solve(win: _WindowData, x: np.ndarray):
    """Closed-form weighted LSQ of y = offset + amp * x, vectorized over the
    leading axes of x.  Returns (offset, amp, sse); phases at which the
    design degenerates get amp 0 and an infinite sse so a scan skips them."""
    w, y = win.w, win.y
    s0 = w.sum()
    sx = (w * x).sum(axis=-1)
    sxx = (w * x * x).sum(axis=-1)
    sy = (w * y).sum()
    sxy = (w * x * y).sum(axis=-1)
    det = s0 * sxx - sx * sx
    degenerate = det <= 1e-14 * s0 * np.maximum(sxx, 1e-300)
    safe = np.where(degenerate, 1.0, det)
    off = (sxx * sy - sx * sxy) / safe
    amp = (s0 * sxy - sx * sy) / safe
    syy = (w * y * y).sum()
    # cancellation can leave the exact-fit residual epsilon-negative
    sse = np.maximum(syy - off * sy - amp * sxy, 0.0)
    off = np.where(degenerate, sy / s0, off)
    amp = np.where(degenerate, 0.0, amp)
    sse = np.where(degenerate, np.inf, sse)
    if np.ndim(x) == 1:
        return float(off), float(amp), float(sse)
    return off, amp, sse


def _rank_check(win: _WindowData, delta: float):
    # The design degenerates when cos(delta t + phi) has no spread within a
    # window for any phi, i.e. all t congruent modulo the beat period; then
    # the unit phasors exp(i delta t) all coincide and their resultant is 1.
    resultant = abs(np.mean(np.exp(1j * delta * win.t)))
    if resultant > 1.0 - 1e-10:
        raise FitNonConvergence(
            f"window {win.window} is rank deficient: all T congruent modulo the beat period"
        )


def _objective(windows, delta, phi):
    total = 0.0
    for win in windows:
        x = np.cos(delta * win.t + phi)
        _off, _amp, sse = _window_solve(win, x)
        total += float(sse)
    return total


def _gradient(windows, delta, phi):
    g = 0.0
    for win in windows:
        x = np.cos(delta * win.t + phi)
        off, amp, _sse = _window_solve(win, x)
        r = win.y - off - amp * x
        g += float(np.sum(win.w * 2.0 * r * amp * np.sin(delta * win.t + phi)))
    return g


def fit_beat(dataset, delta: float) -> FitReport:
    """Fixed-frequency shared-phase sine fit of P_e(T).

    Model per window i: p_e(T) = o_i + (c_i / 2) cos(delta T + Phi), with
    inverse-variance weights.  Phi is found by a global scan at 1e-3 rad
    resolution followed by Newton refinement; contrasts are reported
    unclamped with a validity flag.
    """
    if delta <= 0:
        raise DomainError(f"delta must be > 0, got {delta}")
    windows = _gather_windows(dataset, delta)
    for win in windows:
        _rank_check(win, delta)

    phi_grid = np.arange(0.0, 2.0 * math.pi, PHI_SCAN_STEP)
    sse_grid = np.zeros_like(phi_grid)
    for win in windows:
        x = np.cos(delta * win.t[None, :] + phi_grid[:, None])
        _off, _amp, sse = _window_solve(win, x)
        sse_grid += sse
    best = int(np.argmin(sse_grid))
    phi = float(phi_grid[best])

    data_scale = sum(float((win.w * win.y**2).sum()) for win in windows)
    finite = sse_grid[np.isfinite(sse_grid)]
    flat = (finite.max() - finite.min()) <= 1e-12 * max(data_scale, 1e-30)
    scale = max(data_scale, 1e-30)

    iterations = 0
    converged = False
    if not flat:
        h = PHI_SCAN_STEP
        for _ in range(60):
            iterations += 1
            g = _gradient(windows, delta, phi)
            if abs(g) < GRADIENT_TOL:
                converged = True
                break
            curv = (_gradient(windows, delta, phi + h) - _gradient(windows, delta, phi - h)) / (
                2.0 * h
            )
            if curv <= 0:
                phi += -h if g > 0 else h
                continue
            step = -g / curv
            step = float(np.clip(step, -10 * h, 10 * h))
            if abs(step) < 1e-16:
                converged = abs(g) < 1e-6 * max(1.0, scale)
                break
            phi += step
            h = max(abs(step), 1e-9)
        phi %= 2.0 * math.pi

    curv = (_gradient(windows, delta, phi + 1e-6) - _gradient(windows, delta, phi - 1e-6)) / 2e-6
    phi_stderr = math.sqrt(2.0 / curv) if curv > 0 else float("inf")

    # (phi, c) and (phi + pi, -c) parametrize the same model; report the
    # branch whose summed contrast is non-negative.
    solved = []
    for win in windows:
        x = np.cos(delta * win.t + phi)
        solved.append(_window_solve(win, x))
    if sum(2.0 * amp for _off, amp, _sse in solved) < 0.0:
        phi = (phi + math.pi) % (2.0 * math.pi)
        solved = [(off, -amp, sse) for off, amp, sse in solved]

    fits = []
    chi2 = 0.0
    for win, (off, amp, sse) in zip(windows, solved):
        chi2 += float(sse)
        contrast = 2.0 * float(amp)
        fits.append(
            WindowFit(
                window=win.window,
                contrast=contrast,
                offset=float(off),
                t_center=win.t_center,
                contrast_valid=-1e-9 <= contrast <= 1.0 + 1e-6,
            )
        )
    return FitReport(
        phi_shared=phi,
        windows=tuple(fits),
        residual_chi2=chi2,
        converged=converged,
        iterations=iterations,
        phi_stderr=phi_stderr,
    )


@dataclass(frozen=True)
class ContrastDecay:
    time_constant: float
    used_windows: tuple[int, ...]
    excluded_windows: tuple[int, ...]


def contrast_decay(report: FitReport, window_centers) -> ContrastDecay:
    """Exponential time constant of the fitted window contrasts.

    Least-squares line through log(contrast) versus window center; windows
    with non-positive contrast are excluded and reported.
    """
    centers = [float(t) for t in window_centers]
    if len(centers) != len(report.windows):
        raise DomainError("one window center per fitted window required")
    used, excluded, t, logc = [], [], [], []
    for win, center in zip(report.windows, centers):
        if win.contrast > 0:
            used.append(win.window)
            t.append(center)
            logc.append(math.log(win.contrast))
        else:
            excluded.append(win.window)
    if len(used) < 2:
        raise DomainError("need at least 2 windows with positive contrast")
    slope, _intercept = np.polyfit(np.asarray(t), np.asarray(logc), 1)
    tau = float("inf") if slope == 0 else -1.0 / float(slope)
    return ContrastDecay(tau, tuple(used), tuple(excluded))
