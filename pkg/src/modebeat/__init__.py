"""Simulator and analysis toolkit for a two-mode cavity single-photon
entanglement sequence: pulse-plan compilation, unitary and dissipative
propagation, detection Monte Carlo, and beat-note fitting."""

from .dynamics import (
    CouplingProfile,
    LindbladRates,
    PhysicalParams,
    PropagatorConfig,
    analytic_rabi,
    coupling_scale_at,
    dispersive_phase,
    hamiltonian,
    propagate_lindblad,
    propagate_pure,
)
from .errors import ConfigError, DomainError, FitNonConvergence, NumericalFailure
from .experiment import (
    DetectorModel,
    RunDataset,
    RunPoint,
    SampleModel,
    run_ideal,
    run_master,
    run_monte_carlo,
    run_phase_gate,
    steady_state_pe,
)
from .analysis import FitReport, binomial_stderr, contrast_decay, fit_beat
from .hilbert import (
    DensityOp,
    ModeDims,
    PureState,
    basis_index,
    basis_labels,
    fidelity,
    mean_photon,
    partial_trace,
    product_state,
    thermal_mode_state,
)
from .schedule import (
    PulsePlan,
    Segment,
    StarkCalib,
    compile_phase_gate_plan,
    compile_probe_plan,
    compile_source_plan,
    detuning_from_field,
    pulse_area,
    pulse_duration,
    solve_pulse_window,
)

__version__ = "0.1.0"
