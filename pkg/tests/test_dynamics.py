import math

import numpy as np
import pytest

from modebeat.dynamics import (
    CouplingProfile,
    LindbladRates,
    PhysicalParams,
    PropagatorConfig,
    analytic_rabi,
    calibrate_coupling_phases,
    coupling_scale_at,
    dispersive_phase,
    hamiltonian,
    propagate_field_thermal,
    propagate_lindblad,
    propagate_pure,
)
from modebeat.errors import DomainError
from modebeat.hilbert import (
    DensityOp,
    ModeDims,
    basis_index,
    fidelity,
    mean_photon,
    product_state,
    thermal_mode_state,
)
from modebeat.schedule import Segment

PARAMS = PhysicalParams()
DIMS = ModeDims()
CFG = PropagatorConfig()
CONST = CouplingProfile("constant")


def seg_const(duration, detuning, target, isolation=True, t0=0.0):
    return Segment(t0, t0 + duration, detuning, CONST, isolation, target)


# ---------------------------------------------------------------- hamiltonian


def test_hamiltonian_decoupled_is_diagonal():
    h = hamiltonian(PARAMS, 2.0e5, 0.0, DIMS)
    assert np.allclose(h, np.diag(np.diag(h)))
    d = np.diag(h).real
    assert abs(d[basis_index("e", 0, 0, DIMS)] - 2.0e5) < 1e-9
    assert abs(d[basis_index("g", 0, 2, DIMS)] + 2 * PARAMS.delta) < 1e-9
    assert abs(d[basis_index("e", 1, 3, DIMS)] - (2.0e5 - 3 * PARAMS.delta)) < 1e-9


def test_hamiltonian_vacuum_coupling_element():
    h = hamiltonian(PARAMS, 0.0, 1.0, DIMS)
    el = h[basis_index("e", 0, 0, DIMS), basis_index("g", 1, 0, DIMS)]
    assert abs(abs(el) - PARAMS.omega_rabi / 2.0) < 1e-9


def test_hamiltonian_hermitian_for_random_draws():
    rng = np.random.default_rng(11)
    for _ in range(10):
        p = PhysicalParams(
            omega_rabi=rng.uniform(1e4, 1e6),
            delta=rng.uniform(1e4, 1e6),
            coupling_phase_a=rng.uniform(-math.pi, math.pi),
            coupling_phase_b=rng.uniform(-math.pi, math.pi),
        )
        h = hamiltonian(p, rng.uniform(-1e6, 1e6), rng.uniform(0, 1), ModeDims(2, 2))
        assert np.max(np.abs(h - h.conj().T)) == 0.0


# -------------------------------------------------------------- analytic_rabi


def test_analytic_rabi_pi_pulse_full_transfer():
    u = analytic_rabi(0, 0.0, PARAMS.omega_rabi, math.pi / PARAMS.omega_rabi)
    assert abs(abs(u[1, 0]) ** 2 - 1.0) < 1e-12


def test_analytic_rabi_half_pulse():
    u = analytic_rabi(0, 0.0, PARAMS.omega_rabi, math.pi / (2 * PARAMS.omega_rabi))
    assert abs(abs(u[1, 0]) ** 2 - 0.5) < 1e-12


def test_analytic_rabi_detuned_max_transfer():
    # at Delta = Omega the maximum transfer is Omega^2/(Omega^2+Delta^2) = 1/2
    omega = PARAMS.omega_rabi
    rabi = math.hypot(omega, omega)
    t_max = math.pi / rabi
    u = analytic_rabi(0, omega, omega, t_max)
    assert abs(abs(u[1, 0]) ** 2 - 0.5) < 1e-12
    for frac in (0.3, 0.7, 1.3):
        u = analytic_rabi(0, omega, omega, frac * t_max)
        assert abs(u[1, 0]) ** 2 <= 0.5 + 1e-12


def test_analytic_rabi_unitary():
    u = analytic_rabi(2, 1.7e5, PARAMS.omega_rabi, 3.3e-6, phase=0.4)
    assert np.allclose(u @ u.conj().T, np.eye(2), atol=1e-12)


# ------------------------------------------------------------- propagate_pure


def test_half_pulse_creates_equal_superposition():
    t_half = math.pi / (2 * PARAMS.omega_rabi)
    out = propagate_pure(product_state("e", 0, 0, DIMS), seg_const(t_half, 0.0, "a"), PARAMS, CFG)
    p_e = abs(out.amplitude("e", 0, 0)) ** 2
    p_g = abs(out.amplitude("g", 1, 0)) ** 2
    assert abs(p_e - 0.5) < 1e-9
    assert abs(p_g - 0.5) < 1e-9
    # calibrated dipole phase gives equal real amplitudes
    ratio = out.amplitude("g", 1, 0) / out.amplitude("e", 0, 0)
    assert abs(ratio - 1.0) < 1e-9


def test_vanishing_duration_is_identity():
    state = product_state("e", 0, 0, DIMS)
    seg = Segment(0.0, 1e-30, 0.0, CONST, True, "a")
    out = propagate_pure(state, seg, PARAMS, CFG)
    assert fidelity(out, state) > 1 - 1e-12


def test_full_rabi_period_returns():
    t_full = 2 * math.pi / PARAMS.omega_rabi
    state = product_state("e", 0, 0, DIMS)
    out = propagate_pure(state, seg_const(t_full, 0.0, "a"), PARAMS, CFG)
    assert fidelity(out, state) > 1 - 1e-8


def test_oracle_equivalence_random_tuples():
    # 20 random (n, Delta, t): numeric propagation against the closed form
    rng = np.random.default_rng(42)
    omega = PARAMS.omega_rabi
    for _ in range(20):
        n = int(rng.integers(0, 3))
        det = rng.uniform(-2 * omega, 2 * omega)
        t = rng.uniform(0.0, 4 * math.pi / omega)
        u = analytic_rabi(n, det, omega, t, phase=PARAMS.coupling_phase_a)
        psi0 = product_state("e", n, 0, DIMS)
        out = propagate_pure(psi0, seg_const(t, det, "a"), PARAMS, CFG)
        # the |g, n+1> level of the block sits at energy 0 in this frame
        assert abs(out.amplitude("e", n, 0) - u[0, 0]) < 1e-8
        assert abs(out.amplitude("g", n + 1, 0) - u[1, 0]) < 1e-8


def test_gaussian_norm_drift_below_1e9():
    profile = CouplingProfile("gaussian", t_center=50e-6)
    seg = Segment(0.0, 100e-6, 0.0, profile, True, "a")
    out = propagate_pure(product_state("e", 0, 0, DIMS), seg, PARAMS, CFG)
    assert abs(out.norm() - 1.0) < 1e-9


def test_gaussian_pi_area_transfers():
    # amplitude-shaped resonant pulse with integrated area pi
    from modebeat.schedule import solve_pulse_window

    profile = CouplingProfile("gaussian", t_center=60e-6)
    t0, t1 = solve_pulse_window(profile, PARAMS, math.pi, ("center", 60e-6))
    seg = Segment(t0, t1, 0.0, profile, True, "a")
    out = propagate_pure(product_state("e", 0, 0, DIMS), seg, PARAMS, CFG)
    assert abs(out.amplitude("g", 1, 0)) ** 2 > 0.999


def test_energy_offset_leaves_populations_invariant():
    t_half = math.pi / (2 * PARAMS.omega_rabi)
    shifted = PropagatorConfig(energy_offset=2 * math.pi * 50e3)
    a = propagate_pure(product_state("e", 0, 0, DIMS), seg_const(t_half, 0.0, "a"), PARAMS, CFG)
    b = propagate_pure(product_state("e", 0, 0, DIMS), seg_const(t_half, 0.0, "a"), PARAMS, shifted)
    assert np.allclose(np.abs(a.amplitudes) ** 2, np.abs(b.amplitudes) ** 2, atol=1e-10)


def test_adaptive_method_matches_fixed():
    t_half = math.pi / (2 * PARAMS.omega_rabi)
    fixed = propagate_pure(product_state("e", 0, 0, DIMS), seg_const(t_half, 0.3e5, "a"), PARAMS, CFG)
    adaptive = propagate_pure(
        product_state("e", 0, 0, DIMS),
        seg_const(t_half, 0.3e5, "a"),
        PARAMS,
        PropagatorConfig(method="adaptive"),
    )
    assert fidelity(fixed, adaptive) > 1 - 1e-9


def test_dt_halving_agrees_on_gaussian_segment():
    profile = CouplingProfile("gaussian", t_center=30e-6)
    seg = Segment(10e-6, 50e-6, -PARAMS.delta, profile, False, "b")
    psi0 = product_state("e", 0, 0, DIMS)
    coarse = propagate_pure(psi0, seg, PARAMS, PropagatorConfig(dt_max=1e-8))
    fine = propagate_pure(psi0, seg, PARAMS, PropagatorConfig(dt_max=5e-9))
    assert np.max(np.abs(coarse.amplitudes - fine.amplitudes)) < 1e-8


# --------------------------------------------------------- propagate_lindblad


def thermal_pair(n_bar_a, n_bar_b, dims):
    tha = thermal_mode_state(n_bar_a, dims.n_max_a).matrix
    thb = thermal_mode_state(n_bar_b, dims.n_max_b).matrix
    atom = np.zeros((2, 2))
    atom[0, 0] = 1.0
    return DensityOp(dims.subsystem_dims(), np.kron(atom, np.kron(tha, thb)))


def test_closed_channels_match_pure_propagation():
    t_half = math.pi / (2 * PARAMS.omega_rabi)
    seg = seg_const(t_half, 0.0, "a")
    psi = propagate_pure(product_state("e", 0, 0, DIMS), seg, PARAMS, CFG)
    rho0 = DensityOp.from_pure(product_state("e", 0, 0, DIMS))
    rho = propagate_lindblad(rho0, seg, PARAMS, LindbladRates.closed(), CFG)
    assert np.max(np.abs(rho.matrix - DensityOp.from_pure(psi).matrix)) < 1e-8


def test_decoupled_mode_relaxation_matches_rate_equation():
    # large truncation so the top-level leak stays below the 1e-4 bar
    dims = ModeDims(16, 1)
    params = PhysicalParams(n_bar_b=0.0)
    rates = LindbladRates(params.kappa_a, 0.0, params.n_bar_a, 0.0)
    atom = np.zeros((2, 2))
    atom[0, 0] = 1.0
    start = np.kron(
        atom, np.kron(thermal_mode_state(0.1, 16).matrix, thermal_mode_state(0.0, 1).matrix)
    )
    rho = DensityOp(dims.subsystem_dims(), start)
    cfg = PropagatorConfig(dt_max=1e-7)
    t_total, n_checks = 400e-6, 4
    for k in range(1, n_checks + 1):
        seg = Segment(0.0, t_total / n_checks, 0.0, CONST, True, None)
        rho = propagate_lindblad(rho, seg, params, rates, cfg)
        t = k * t_total / n_checks
        expected = params.n_bar_a + (0.1 - params.n_bar_a) * math.exp(-params.kappa_a * t)
        got = mean_photon(rho, "mode_a")
        assert abs(got - expected) / expected < 1e-4


def test_thermal_equilibrium_is_a_fixed_point():
    rho0 = thermal_pair(PARAMS.n_bar_a, PARAMS.n_bar_b, DIMS)
    seg = Segment(0.0, 100e-6, 0.0, CONST, True, None)
    rho = propagate_lindblad(rho0, seg, PARAMS, LindbladRates.from_params(PARAMS), CFG)
    assert np.max(np.abs(rho.matrix - rho0.matrix)) < 1e-7


def test_lindblad_preserves_trace_hermiticity_positivity():
    rho0 = DensityOp.from_pure(product_state("e", 0, 0, DIMS))
    seg = seg_const(20e-6, 0.0, "a", isolation=False)
    rho = propagate_lindblad(rho0, seg, PARAMS, LindbladRates.from_params(PARAMS), CFG)
    assert abs(rho.trace() - 1.0) < 1e-7
    assert rho.hermiticity_defect() < 1e-9
    assert rho.min_eigenvalue() > -1e-8


def test_free_field_channel_cross_checks_lindblad():
    # dual route: the cached per-mode channel against direct integration
    dims = ModeDims(3, 3)
    rates = LindbladRates(1.0 / 1.0e-3, 1.0 / 0.9e-3, 0.8, 1.0)
    rng = np.random.default_rng(5)
    d = dims.dim_field
    m = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    field = m @ m.conj().T
    field /= np.trace(field)
    atom = np.zeros((2, 2))
    atom[0, 0] = 1.0
    rho0 = DensityOp(dims.subsystem_dims(), np.kron(atom, field))
    t = 37e-6
    seg = Segment(0.0, t, 0.0, CouplingProfile("constant"), True, None)
    direct = propagate_lindblad(rho0, seg, PARAMS, rates, PropagatorConfig(dt_max=1e-8))
    via_channel = propagate_field_thermal(field, dims, PARAMS, rates, t)
    assert np.max(np.abs(direct.matrix[:d, :d] - via_channel)) < 1e-9


# ------------------------------------------------------------------- helpers


def test_coupling_scale_examples():
    prof = CouplingProfile("gaussian", t_center=0.0)
    assert coupling_scale_at(prof, PARAMS, 0.0) == 1.0
    t = PARAMS.waist / PARAMS.velocity
    assert abs(coupling_scale_at(prof, PARAMS, t) - math.exp(-1)) < 1e-12
    assert coupling_scale_at(CONST, PARAMS, 123.0) == 1.0


def _superposed_e_pair(dims):
    from modebeat.hilbert import PureState

    amps = np.zeros(dims.dim_total, dtype=complex)
    amps[basis_index("e", 0, 0, dims)] = 1 / math.sqrt(2)
    amps[basis_index("e", 1, 0, dims)] = 1 / math.sqrt(2)
    return PureState(dims, amps)


def test_dispersive_phase_identity_and_relative_phase():
    state = product_state("e", 1, 0, DIMS)
    same = dispersive_phase(state, 0.0, "mode_a")
    assert fidelity(state, same) > 1 - 1e-12
    mixed = _superposed_e_pair(DIMS)
    shifted = dispersive_phase(mixed, 0.7, "mode_a")
    ratio = (shifted.amplitude("e", 1, 0) / shifted.amplitude("e", 0, 0)) / (
        mixed.amplitude("e", 1, 0) / mixed.amplitude("e", 0, 0)
    )
    assert abs(ratio - np.exp(0.7j)) < 1e-12


def test_calibrated_phases_reproduce_defaults():
    phase_a, phase_b = calibrate_coupling_phases(PARAMS)
    assert abs(phase_a - PARAMS.coupling_phase_a) < 1e-9
    # phases live on the circle
    assert abs((phase_b - PARAMS.coupling_phase_b + math.pi) % (2 * math.pi) - math.pi) < 1e-9


def test_invalid_params_rejected():
    with pytest.raises(DomainError):
        PhysicalParams(omega_rabi=-1.0)
    with pytest.raises(DomainError):
        PhysicalParams(waist=0.0)
    with pytest.raises(DomainError):
        PropagatorConfig(dt_max=0.0)
    with pytest.raises(DomainError):
        CouplingProfile("square")


def test_adaptive_lindblad_matches_fixed():
    rho0 = DensityOp.from_pure(product_state("e", 0, 0, DIMS))
    seg = seg_const(10e-6, 0.0, "a")
    rates = LindbladRates.from_params(PARAMS)
    fixed = propagate_lindblad(rho0, seg, PARAMS, rates, CFG)
    adaptive = propagate_lindblad(rho0, seg, PARAMS, rates, PropagatorConfig(method="adaptive"))
    assert np.max(np.abs(fixed.matrix - adaptive.matrix)) < 1e-7


def test_dispersive_phase_on_density_operator():
    state = _superposed_e_pair(DIMS)
    rho = DensityOp.from_pure(state)
    shifted = dispersive_phase(rho, 0.9, "mode_a")
    direct = DensityOp.from_pure(dispersive_phase(state, 0.9, "mode_a"))
    assert np.max(np.abs(shifted.matrix - direct.matrix)) < 1e-12


def test_lindblad_rejects_unphysical_input():
    from modebeat.errors import NumericalFailure

    mat = np.zeros((DIMS.dim_total, DIMS.dim_total), dtype=complex)
    mat[0, 0] = 1.5
    mat[1, 1] = -0.5  # not a state
    rho = DensityOp(DIMS.subsystem_dims(), mat)
    seg = seg_const(1e-6, 0.0, None)
    with pytest.raises(NumericalFailure):
        propagate_lindblad(rho, seg, PARAMS, LindbladRates.closed(), CFG)


def test_analytic_rabi_rejects_negative_time():
    with pytest.raises(DomainError):
        analytic_rabi(0, 0.0, PARAMS.omega_rabi, -1e-6)
