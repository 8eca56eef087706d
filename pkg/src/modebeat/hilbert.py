"""Truncated-Fock representation of a two-level atom coupled to two cavity modes.

The joint system is atom (g, e) x mode A x mode B.  Basis ordering is fixed
with the atom outermost and mode B innermost, so the flat index of
|atom, n_a, n_b> is

    atom * (n_max_a + 1) * (n_max_b + 1) + n_a * (n_max_b + 1) + n_b

with g = 0, e = 1.  This makes the atomic g/e blocks contiguous and keeps
partial traces over mode B cache friendly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericalFailure

SUBSYSTEMS = ("atom", "mode_a", "mode_b")

_ATOM_CODE = {"g": 0, "e": 1, 0: 0, 1: 1}
_ATOM_NAME = ("g", "e")


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr, dtype=complex)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ModeDims:
    """Fock truncation of the two modes (inclusive maximum photon index)."""

    n_max_a: int = 4
    n_max_b: int = 4

    def __post_init__(self):
        if self.n_max_a < 1 or self.n_max_b < 1:
            raise DomainError("mode truncation requires n_max >= 1")

    @property
    def dim_a(self) -> int:
        return self.n_max_a + 1

    @property
    def dim_b(self) -> int:
        return self.n_max_b + 1

    @property
    def dim_field(self) -> int:
        return self.dim_a * self.dim_b

    @property
    def dim_total(self) -> int:
        return 2 * self.dim_field

    def subsystem_dims(self) -> tuple[int, int, int]:
        return (2, self.dim_a, self.dim_b)


def atom_code(atom) -> int:
    try:
        return _ATOM_CODE[atom]
    except (KeyError, TypeError):
        raise DomainError(f"unknown atomic label {atom!r}; expected 'g' or 'e'") from None


def basis_index(atom, n_a: int, n_b: int, dims: ModeDims) -> int:
    """Flat index of the basis state |atom, n_a, n_b>."""
    code = atom_code(atom)
    if not 0 <= n_a <= dims.n_max_a:
        raise DomainError(f"n_a={n_a} outside [0, {dims.n_max_a}]")
    if not 0 <= n_b <= dims.n_max_b:
        raise DomainError(f"n_b={n_b} outside [0, {dims.n_max_b}]")
    return (code * dims.dim_a + n_a) * dims.dim_b + n_b


def basis_labels(index: int, dims: ModeDims) -> tuple[str, int, int]:
    """Inverse of :func:`basis_index`."""
    if not 0 <= index < dims.dim_total:
        raise DomainError(f"index {index} outside [0, {dims.dim_total})")
    n_b = index % dims.dim_b
    rest = index // dims.dim_b
    n_a = rest % dims.dim_a
    return _ATOM_NAME[rest // dims.dim_a], n_a, n_b


@dataclass(frozen=True)
class PureState:
    """State vector of atom x mode A x mode B in the declared basis order."""

    dims: ModeDims
    amplitudes: np.ndarray

    def __post_init__(self):
        amp = _freeze(self.amplitudes)
        if amp.shape != (self.dims.dim_total,):
            raise DomainError(
                f"amplitude vector has shape {amp.shape}, expected ({self.dims.dim_total},)"
            )
        object.__setattr__(self, "amplitudes", amp)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "PureState":
        n = self.norm()
        if n < 1e-12:
            raise DomainError("cannot normalize a null state")
        return PureState(self.dims, self.amplitudes / n)

    def amplitude(self, atom, n_a: int, n_b: int) -> complex:
        return complex(self.amplitudes[basis_index(atom, n_a, n_b, self.dims)])

    def populations(self) -> np.ndarray:
        """|amplitude|^2 reshaped to (atom, n_a, n_b)."""
        return np.abs(self.amplitudes.reshape(self.dims.subsystem_dims())) ** 2


@dataclass(frozen=True)
class DensityOp:
    """Density operator over a tuple of labelled subsystems.

    Full-system operators carry labels ("atom", "mode_a", "mode_b"); reduced
    operators returned by :func:`partial_trace` keep the surviving labels.
    """

    dims: tuple[int, ...]
    matrix: np.ndarray
    labels: tuple[str, ...] = field(default=SUBSYSTEMS)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        mat = _freeze(self.matrix)
        total = int(np.prod(dims))
        if mat.shape != (total, total):
            raise DomainError(f"matrix has shape {mat.shape}, expected ({total}, {total})")
        if len(self.labels) != len(dims):
            raise DomainError("one label per subsystem required")
        object.__setattr__(self, "matrix", mat)

    @classmethod
    def from_pure(cls, state: PureState) -> "DensityOp":
        amp = state.amplitudes
        return cls(state.dims.subsystem_dims(), np.outer(amp, amp.conj()), SUBSYSTEMS)

    @property
    def dim_total(self) -> int:
        return self.matrix.shape[0]

    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T))[0])

    def validate(self, herm_tol=1e-10, trace_tol=1e-7, eig_floor=-1e-8) -> "DensityOp":
        if self.hermiticity_defect() > herm_tol:
            raise NumericalFailure(
                f"Hermiticity defect {self.hermiticity_defect():.3e} exceeds {herm_tol}"
            )
        if abs(self.trace() - 1.0) > trace_tol:
            raise NumericalFailure(
                f"trace {self.trace():.12f} deviates from 1 beyond {trace_tol}"
            )
        if self.min_eigenvalue() < eig_floor:
            raise NumericalFailure(
                f"minimum eigenvalue {self.min_eigenvalue():.3e} below {eig_floor}"
            )
        return self


def product_state(atom, n_a: int, n_b: int, dims: ModeDims) -> PureState:
    """Unit vector on the single basis state |atom, n_a, n_b>."""
    vec = np.zeros(dims.dim_total, dtype=complex)
    vec[basis_index(atom, n_a, n_b, dims)] = 1.0
    return PureState(dims, vec)


def _ptrace(matrix: np.ndarray, dims: tuple[int, ...], keep_idx: tuple[int, ...]) -> np.ndarray:
    n = len(dims)
    tensor = matrix.reshape(dims + dims)
    traced = [i for i in range(n) if i not in keep_idx]
    for offset, i in enumerate(sorted(traced)):
        axis = i - offset
        tensor = np.trace(tensor, axis1=axis, axis2=axis + (n - offset))
    kept = [dims[i] for i in keep_idx]
    d = int(np.prod(kept))
    # np.trace moves surviving axes but preserves their relative order,
    # which matches the original subsystem hierarchy.
    return tensor.reshape(d, d)


def partial_trace(rho: DensityOp, keep) -> DensityOp:
    """Trace out every subsystem not named in ``keep``.

    ``keep`` is an iterable over labels of ``rho``; ordering of the result
    follows the operator's own label order, not the order given here.
    """
    keep = set(keep)
    if not keep:
        raise DomainError("partial_trace requires a non-empty keep set")
    unknown = keep - set(rho.labels)
    if unknown:
        raise DomainError(f"unknown subsystem labels {sorted(unknown)}; have {rho.labels}")
    keep_idx = tuple(i for i, lab in enumerate(rho.labels) if lab in keep)
    reduced = _ptrace(rho.matrix, rho.dims, keep_idx)
    return DensityOp(
        tuple(rho.dims[i] for i in keep_idx),
        reduced,
        tuple(rho.labels[i] for i in keep_idx),
    )


def thermal_mode_state(n_bar: float, n_max: int, label: str = "mode") -> DensityOp:
    """Truncated thermal state p_n ~ n_bar^n / (1 + n_bar)^(n+1), renormalized.

    Renormalizing (rather than clipping) keeps the trace exactly 1; the mass
    lost to truncation is available through :func:`thermal_tail_mass`.
    """
    if n_bar < 0:
        raise DomainError(f"mean occupation must be >= 0, got {n_bar}")
    n = np.arange(n_max + 1)
    if n_bar == 0:
        p = np.zeros(n_max + 1)
        p[0] = 1.0
    else:
        ratio = n_bar / (1.0 + n_bar)
        p = ratio**n / (1.0 + n_bar)
        p /= p.sum()
    return DensityOp((n_max + 1,), np.diag(p.astype(complex)), (label,))


def thermal_tail_mass(n_bar: float, n_max: int) -> float:
    """Probability mass above the truncation level for an exact thermal state."""
    if n_bar < 0:
        raise DomainError(f"mean occupation must be >= 0, got {n_bar}")
    if n_bar == 0:
        return 0.0
    return float((n_bar / (1.0 + n_bar)) ** (n_max + 1))


def _as_vector(obj) -> np.ndarray:
    if isinstance(obj, PureState):
        return obj.amplitudes
    return np.asarray(obj, dtype=complex).ravel()


def fidelity(a, b) -> float:
    """Squared overlap |<a|b>|^2 of two pure states.

    Accepts :class:`PureState` or raw amplitude vectors of equal length.
    """
    va, vb = _as_vector(a), _as_vector(b)
    if va.shape != vb.shape:
        raise DomainError(f"dimension mismatch: {va.shape} vs {vb.shape}")
    return float(abs(np.vdot(va, vb)) ** 2)


def mean_photon(obj, mode: str | None = None) -> float:
    """Mean photon number of the selected mode ("mode_a" or "mode_b").

    For single-mode density operators the mode argument may be omitted.
    """
    if isinstance(obj, PureState):
        if mode not in ("mode_a", "mode_b"):
            raise DomainError("mode must be 'mode_a' or 'mode_b' for a full state")
        pops = obj.populations()
        axis = 1 if mode == "mode_a" else 2
        n = np.arange(pops.shape[axis])
        summed = pops.sum(axis=tuple(i for i in range(3) if i != axis))
        return float(np.dot(n, summed))
    if isinstance(obj, DensityOp):
        if mode is None:
            if len(obj.labels) != 1:
                raise DomainError("mode label required for multi-subsystem operators")
            idx = 0
        else:
            if mode not in obj.labels:
                raise DomainError(f"operator has no subsystem {mode!r}")
            idx = obj.labels.index(mode)
        reduced = _ptrace(obj.matrix, obj.dims, (idx,))
        n = np.arange(obj.dims[idx])
        return float(np.real(np.dot(n, np.diag(reduced))))
    raise DomainError(f"unsupported operand type {type(obj)!r}")
