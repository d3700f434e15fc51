"""Small dense quantum-state engine over labeled optical modes.

Two register flavours are supported:

* :class:`FockRegister` -- truncated Fock space, one factor per (mode, polarization)
  pair, with ``cutoff`` photons at most in each factor.
* :class:`QubitRegister` -- the single-photon polarization subspace, one qubit per
  mode (``0 = H``, ``1 = V``).

Both are addressed by ``mode_id``; a "single-mode ket" always covers both
polarizations of a mode.  Basis ordering is canonical: modes sorted
lexicographically by ``(mode_id, polarization)``, first mode most significant.
All objects are immutable and every operation returns new values.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, Union

import numpy as np
import scipy.linalg

from .constants import TOL

POLARIZATIONS = ("H", "V")


class LabelCollisionError(ValueError):
    """Raised when two registers to be combined share a mode label."""


class ZeroProbabilityBranch(ValueError):
    """Raised when a measurement branch has vanishing probability."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, order=True)
class ModeLabel:
    mode_id: str
    polarization: str = "H"

    def __post_init__(self):
        object.__setattr__(self, "mode_id", str(self.mode_id))
        if self.polarization not in POLARIZATIONS:
            raise ValueError(f"polarization must be H or V, got {self.polarization!r}")


class _Register:
    """Common interface: ``mode_ids`` (canonical order) and ``local_dims``."""

    mode_ids: tuple[str, ...]
    local_dims: tuple[int, ...]

    @property
    def dimension(self) -> int:
        return int(np.prod(self.local_dims, dtype=np.int64)) if self.local_dims else 1

    def axis(self, mode_id: str) -> int:
        try:
            return self.mode_ids.index(str(mode_id))
        except ValueError:
            raise KeyError(f"mode {mode_id!r} not in register {self.mode_ids}") from None

    def local_dim(self, mode_id: str) -> int:
        return self.local_dims[self.axis(mode_id)]


@dataclass(frozen=True)
class FockRegister(_Register):
    modes: tuple[ModeLabel, ...]
    cutoff: int = 1

    def __post_init__(self):
        if self.cutoff < 1:
            raise ValueError("cutoff must be >= 1")
        modes = tuple(sorted(self.modes))
        if len(set(modes)) != len(modes):
            raise LabelCollisionError(f"duplicate mode labels in {modes}")
        object.__setattr__(self, "modes", modes)

    @classmethod
    def for_modes(cls, mode_ids: Iterable[str], cutoff: int = 1) -> "FockRegister":
        """Register holding both polarizations of every listed mode."""
        return cls(tuple(ModeLabel(m, p) for m in mode_ids for p in POLARIZATIONS), cutoff)

    @property
    def mode_ids(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(m.mode_id for m in self.modes))

    @property
    def local_dims(self) -> tuple[int, ...]:
        counts = {}
        for m in self.modes:
            counts[m.mode_id] = counts.get(m.mode_id, 0) + 1
        return tuple((self.cutoff + 1) ** counts[i] for i in self.mode_ids)

    def polarizations(self, mode_id: str) -> tuple[str, ...]:
        return tuple(m.polarization for m in self.modes if m.mode_id == str(mode_id))

    def encode(self, occupations: Sequence[int]) -> int:
        """Occupation vector (one entry per ModeLabel) -> flat basis index."""
        if len(occupations) != len(self.modes):
            raise ValueError("occupation vector length mismatch")
        idx = 0
        for n in occupations:
            if not 0 <= n <= self.cutoff:
                raise ValueError(f"occupation {n} outside [0, {self.cutoff}]")
            idx = idx * (self.cutoff + 1) + int(n)
        return idx

    def decode(self, index: int) -> tuple[int, ...]:
        if not 0 <= index < self.dimension:
            raise ValueError("basis index out of range")
        occ = []
        for _ in self.modes:
            index, n = divmod(index, self.cutoff + 1)
            occ.append(n)
        return tuple(reversed(occ))

    def select(self, mode_ids: Iterable[str]) -> "FockRegister":
        keep = {str(m) for m in mode_ids}
        return FockRegister(tuple(m for m in self.modes if m.mode_id in keep), self.cutoff)

    def merged(self, other: "FockRegister") -> "FockRegister":
        if self.cutoff != other.cutoff:
            raise ValueError("cannot combine Fock registers with different cutoffs")
        clash = set(self.mode_ids) & set(other.mode_ids)
        if clash:
            raise LabelCollisionError(f"mode labels {sorted(clash)} present in both registers")
        return FockRegister(self.modes + other.modes, self.cutoff)

    def renamed(self, mapping: Mapping[str, str]) -> "FockRegister":
        return FockRegister(
            tuple(ModeLabel(mapping.get(m.mode_id, m.mode_id), m.polarization) for m in self.modes),
            self.cutoff,
        )


@dataclass(frozen=True)
class QubitRegister(_Register):
    """Polarization qubits, one per mode, in the single-photon subspace."""

    ids: tuple[str, ...]

    def __post_init__(self):
        ids = tuple(sorted(str(i) for i in self.ids))
        if len(set(ids)) != len(ids):
            raise LabelCollisionError(f"duplicate mode ids in {ids}")
        object.__setattr__(self, "ids", ids)

    @property
    def mode_ids(self) -> tuple[str, ...]:
        return self.ids

    @property
    def local_dims(self) -> tuple[int, ...]:
        return (2,) * len(self.ids)

    def encode(self, pols: Sequence[str]) -> int:
        idx = 0
        for p in pols:
            idx = 2 * idx + POLARIZATIONS.index(p)
        return idx

    def decode(self, index: int) -> tuple[str, ...]:
        if not 0 <= index < self.dimension:
            raise ValueError("basis index out of range")
        bits = format(index, f"0{len(self.ids)}b") if self.ids else ""
        return tuple(POLARIZATIONS[int(b)] for b in bits)

    def select(self, mode_ids: Iterable[str]) -> "QubitRegister":
        keep = {str(m) for m in mode_ids}
        return QubitRegister(tuple(i for i in self.ids if i in keep))

    def merged(self, other: "QubitRegister") -> "QubitRegister":
        clash = set(self.ids) & set(other.ids)
        if clash:
            raise LabelCollisionError(f"mode labels {sorted(clash)} present in both registers")
        return QubitRegister(self.ids + other.ids)

    def renamed(self, mapping: Mapping[str, str]) -> "QubitRegister":
        return QubitRegister(tuple(mapping.get(i, i) for i in self.ids))


Register = Union[FockRegister, QubitRegister]


@dataclass(frozen=True)
class StateVector:
    register: Register
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        amp = _frozen(np.ravel(self.amplitudes))
        if amp.shape != (self.register.dimension,):
            raise ValueError(f"expected {self.register.dimension} amplitudes, got {amp.shape}")
        object.__setattr__(self, "amplitudes", amp)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "StateVector":
        n = self.norm
        if n < TOL.norm:
            raise ZeroProbabilityBranch("cannot normalize a zero vector")
        return StateVector(self.register, self.amplitudes / n)

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape(self.register.local_dims)

    def density(self) -> "DensityMatrix":
        return DensityMatrix(self.register, np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True)
class DensityMatrix:
    register: Register
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = _frozen(self.matrix)
        d = self.register.dimension
        if m.shape != (d, d):
            raise ValueError(f"expected {d}x{d} matrix, got {m.shape}")
        object.__setattr__(self, "matrix", m)

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def normalized(self) -> "DensityMatrix":
        tr = self.trace
        if tr < TOL.norm:
            raise ZeroProbabilityBranch("cannot normalize a zero-trace operator")
        return DensityMatrix(self.register, self.matrix / tr)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh((self.matrix + self.matrix.conj().T) / 2)

    def validate(self, tol: float = TOL.psd) -> "DensityMatrix":
        """Raise ValueError unless Hermitian, unit trace and positive semidefinite."""
        m = self.matrix
        if np.max(np.abs(m - m.conj().T), initial=0.0) > TOL.hermitian:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(m) - 1) > TOL.norm:
            raise ValueError(f"density matrix trace {np.trace(m)} != 1")
        if self.eigenvalues().min(initial=0.0) < -tol:
            raise ValueError("density matrix has negative eigenvalues")
        return self

    def tensor(self) -> np.ndarray:
        dims = self.register.local_dims
        return self.matrix.reshape(dims + dims)


State = Union[StateVector, DensityMatrix]


# ---------------------------------------------------------------- constructors

def vacuum(register: FockRegister) -> StateVector:
    amp = np.zeros(register.dimension, dtype=complex)
    amp[0] = 1.0
    return StateVector(register, amp)


def basis_state(register: FockRegister, occupied: Mapping[tuple[str, str], int]) -> StateVector:
    """Fock basis state; ``occupied`` maps ``(mode_id, polarization)`` to a photon number."""
    occ = [0] * len(register.modes)
    for (mode_id, pol), n in occupied.items():
        occ[register.modes.index(ModeLabel(mode_id, pol))] = n
    amp = np.zeros(register.dimension, dtype=complex)
    amp[register.encode(occ)] = 1.0
    return StateVector(register, amp)


def single_mode_ket(register: Register, mode_id: str, h: complex, v: complex) -> np.ndarray:
    """Local ket ``h|H> + v|V>`` (one photon) for ``mode_id`` in ``register``."""
    if isinstance(register, QubitRegister):
        register.axis(mode_id)
        return np.array([h, v], dtype=complex)
    pols = register.polarizations(mode_id)
    if pols != POLARIZATIONS:
        raise ValueError(f"mode {mode_id!r} must carry both polarizations")
    c1 = register.cutoff + 1
    ket = np.zeros(c1 * c1, dtype=complex)
    ket[1 * c1 + 0] = h  # |1,0>
    ket[0 * c1 + 1] = v  # |0,1>
    return ket


def vacuum_ket(register: FockRegister, mode_id: str) -> np.ndarray:
    ket = np.zeros(register.local_dim(mode_id), dtype=complex)
    ket[0] = 1.0
    return ket


def qubit_state(mode_ids: Sequence[str], amplitudes: Sequence[complex]) -> StateVector:
    """Polarization state; amplitudes follow the *given* mode order (H=0, V=1).

    The result is re-indexed to the canonical order of the register.
    """
    ids = [str(m) for m in mode_ids]
    amp = np.asarray(amplitudes, dtype=complex).reshape((2,) * len(ids))
    order = sorted(range(len(ids)), key=lambda k: ids[k])
    return StateVector(QubitRegister(tuple(ids)), np.transpose(amp, order).ravel())


# ---------------------------------------------------------------- core operations

def _canonical_perm(ids: Sequence[str]) -> list[int]:
    return sorted(range(len(ids)), key=lambda k: ids[k])


def tensor_product(a: State, b: State) -> State:
    """Kronecker product of two states on disjoint modes, in canonical order."""
    if type(a) is not type(b) or type(a.register) is not type(b.register):
        raise TypeError("tensor_product needs two states of the same kind")
    reg = a.register.merged(b.register)
    ids = a.register.mode_ids + b.register.mode_ids
    dims = a.register.local_dims + b.register.local_dims
    perm = _canonical_perm(ids)
    if isinstance(a, StateVector):
        t = np.kron(a.amplitudes, b.amplitudes).reshape(dims)
        return StateVector(reg, np.transpose(t, perm).ravel())
    n = len(ids)
    t = np.kron(a.matrix, b.matrix).reshape(dims + dims)
    t = np.transpose(t, perm + [p + n for p in perm])
    return DensityMatrix(reg, t.reshape(reg.dimension, reg.dimension))


def partial_trace(rho: State, keep: Iterable[str]) -> DensityMatrix:
    """Reduced density matrix on the modes in ``keep``."""
    if isinstance(rho, StateVector):
        rho = rho.density()
    keep = {str(k) for k in keep}
    ids = rho.register.mode_ids
    if not keep:
        raise ValueError("keep set must be non-empty")
    unknown = keep - set(ids)
    if unknown:
        raise KeyError(f"unknown modes {sorted(unknown)}")
    t = rho.tensor()
    n = len(ids)
    for ax in reversed([i for i, m in enumerate(ids) if m not in keep]):
        t = np.trace(t, axis1=ax, axis2=ax + n)
        n -= 1
    reg = rho.register.select(keep)
    return DensityMatrix(reg, t.reshape(reg.dimension, reg.dimension))


def project(state: State, mode_id: str, ket: np.ndarray, tol: float = TOL.norm):
    """Measure ``mode_id`` against ``ket`` and keep the matching branch.

    Returns ``(post_state, probability)`` where ``post_state`` lives on the
    remaining modes and is normalized, or is ``None`` when the branch probability
    is below ``tol``.
    """
    ket = np.asarray(ket, dtype=complex)
    if abs(np.linalg.norm(ket) - 1) > TOL.norm:
        raise ValueError("projector ket must be normalized")
    reg = state.register
    ax = reg.axis(mode_id)
    if ket.shape != (reg.local_dims[ax],):
        raise ValueError(f"ket dimension {ket.shape} does not match mode {mode_id!r}")
    rest = reg.select(m for m in reg.mode_ids if m != str(mode_id))
    if isinstance(state, StateVector):
        t = np.tensordot(ket.conj(), state.tensor(), axes=(0, ax))
        prob = float(np.vdot(t, t).real)
        if prob < tol:
            return None, prob
        return StateVector(rest, t.ravel() / math.sqrt(prob)), prob
    n = len(reg.mode_ids)
    t = np.tensordot(ket.conj(), state.tensor(), axes=(0, ax))
    t = np.tensordot(t, ket, axes=(n - 1 + ax, 0))
    d = rest.dimension
    m = t.reshape(d, d)
    prob = float(np.trace(m).real)
    if prob < tol:
        return None, prob
    return DensityMatrix(rest, m / prob), prob


def apply_operator(state: State, op: np.ndarray, mode_ids: Sequence[str]) -> State:
    """Apply ``op`` acting on the listed modes (in canonical order) to ``state``."""
    reg = state.register
    mode_ids = sorted(str(m) for m in mode_ids)
    axes = [reg.axis(m) for m in mode_ids]
    sub_dims = tuple(reg.local_dims[a] for a in axes)
    k = len(axes)
    opt = np.asarray(op, dtype=complex).reshape(sub_dims + sub_dims)

    def _left(t, offset=0):
        t = np.tensordot(opt, t, axes=(list(range(k, 2 * k)), [a + offset for a in axes]))
        # tensordot puts the new axes first; move them back into place
        return np.moveaxis(t, list(range(k)), [a + offset for a in axes])

    if isinstance(state, StateVector):
        return StateVector(reg, _left(state.tensor()).ravel())
    n = len(reg.mode_ids)
    t = _left(state.tensor())
    t = np.conj(_left(np.conj(t), offset=n))  # right-multiply by op^dagger
    return DensityMatrix(reg, t.reshape(reg.dimension, reg.dimension))


def unitary_from_generator(generator: np.ndarray, time: float) -> np.ndarray:
    """``exp(-i * generator * time)`` via eigendecomposition of a Hermitian generator."""
    h = np.asarray(generator, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError("generator must be square")
    if np.max(np.abs(h - h.conj().T), initial=0.0) > TOL.hermitian:
        raise ValueError("generator is not Hermitian")
    w, v = np.linalg.eigh((h + h.conj().T) / 2)
    u = (v * np.exp(-1j * w * time)) @ v.conj().T
    err = np.max(np.abs(u.conj().T @ u - np.eye(len(u))), initial=0.0)
    if err > TOL.unitarity:
        raise ArithmeticError(f"exponential not unitary to {TOL.unitarity} (error {err:.2e})")
    return u


def evolve(state: State, generator: np.ndarray, time: float,
           mode_ids: Sequence[str] | None = None) -> State:
    """Unitary evolution under ``generator`` (optionally acting on a subset of modes)."""
    u = unitary_from_generator(generator, time)
    if mode_ids is None:
        mode_ids = state.register.mode_ids
    return apply_operator(state, u, mode_ids)


# ---------------------------------------------------------------- operators & helpers

def annihilation(register: FockRegister, label: ModeLabel | tuple[str, str]) -> np.ndarray:
    """Dense (truncated) annihilation operator for one (mode, polarization) factor."""
    if not isinstance(label, ModeLabel):
        label = ModeLabel(*label)
    c1 = register.cutoff + 1
    a = np.diag(np.sqrt(np.arange(1, c1)), k=1).astype(complex)
    pos = register.modes.index(label)
    n = len(register.modes)
    left = np.eye(c1 ** pos)
    right = np.eye(c1 ** (n - pos - 1))
    return np.kron(np.kron(left, a), right)


def fidelity(a: State, b: State) -> float:
    """Fidelity ``(tr sqrt(sqrt(a) b sqrt(a)))^2``; reduces to overlaps for pure states."""
    if a.register != b.register:
        raise ValueError(f"registers differ: {a.register.mode_ids} vs {b.register.mode_ids}")
    if isinstance(a, StateVector) and isinstance(b, StateVector):
        return float(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)
    if isinstance(a, StateVector):
        a, b = b, a
    if isinstance(b, StateVector):
        return float(np.vdot(b.amplitudes, a.matrix @ b.amplitudes).real)
    s = scipy.linalg.sqrtm(a.matrix)
    return float(np.trace(scipy.linalg.sqrtm(s @ b.matrix @ s)).real ** 2)


def relabel(state: State, mapping: Mapping[str, str]) -> State:
    """Rename modes; the result is re-sorted into canonical order."""
    reg = state.register
    old = reg.mode_ids
    new_ids = [mapping.get(m, m) for m in old]
    new_reg = reg.renamed(mapping)
    perm = _canonical_perm(new_ids)
    if isinstance(state, StateVector):
        return StateVector(new_reg, np.transpose(state.tensor(), perm).ravel())
    n = len(old)
    t = np.transpose(state.tensor(), perm + [p + n for p in perm])
    return DensityMatrix(new_reg, t.reshape(reg.dimension, reg.dimension))


def to_qubits(state: State, tol: float = TOL.norm) -> State:
    """Restrict a Fock state with one photon per mode to the polarization qubits.

    Raises ValueError if more than ``tol`` of the weight lies outside that subspace.
    """
    reg = state.register
    if not isinstance(reg, FockRegister):
        raise TypeError("to_qubits expects a Fock-register state")
    c1 = reg.cutoff + 1
    h_idx, v_idx = 1 * c1 + 0, 0 * c1 + 1
    ids = reg.mode_ids
    for m in ids:
        if reg.polarizations(m) != POLARIZATIONS:
            raise ValueError(f"mode {m!r} must carry both polarizations")
    idx = []
    for bits in itertools.product((h_idx, v_idx), repeat=len(ids)):
        flat = 0
        for d, b in zip(reg.local_dims, bits):
            flat = flat * d + b
        idx.append(flat)
    idx = np.array(idx)
    qreg = QubitRegister(ids)
    if isinstance(state, StateVector):
        sub = state.amplitudes[idx]
        leak = 1 - float(np.vdot(sub, sub).real) / state.norm ** 2
        if leak > tol:
            raise ValueError(f"state has weight {leak:.3e} outside the one-photon-per-mode subspace")
        return StateVector(qreg, sub)
    sub = state.matrix[np.ix_(idx, idx)]
    leak = 1 - float(np.trace(sub).real) / state.trace
    if leak > tol:
        raise ValueError(f"state has weight {leak:.3e} outside the one-photon-per-mode subspace")
    return DensityMatrix(qreg, sub)


def from_qubits(state: State, cutoff: int = 1) -> State:
    """Embed polarization qubits into a Fock register (one photon per mode)."""
    qreg = state.register
    if not isinstance(qreg, QubitRegister):
        raise TypeError("from_qubits expects a qubit-register state")
    reg = FockRegister.for_modes(qreg.mode_ids, cutoff)
    c1 = cutoff + 1
    local = (1 * c1 + 0, 0 * c1 + 1)
    idx = []
    for bits in itertools.product((0, 1), repeat=len(qreg.mode_ids)):
        flat = 0
        for d, b in zip(reg.local_dims, bits):
            flat = flat * d + local[b]
        idx.append(flat)
    idx = np.array(idx)
    if isinstance(state, StateVector):
        amp = np.zeros(reg.dimension, dtype=complex)
        amp[idx] = state.amplitudes
        return StateVector(reg, amp)
    m = np.zeros((reg.dimension, reg.dimension), dtype=complex)
    m[np.ix_(idx, idx)] = state.matrix
    return DensityMatrix(reg, m)


def random_state(register: Register, rng: np.random.Generator) -> StateVector:
    z = rng.normal(size=register.dimension) + 1j * rng.normal(size=register.dimension)
    return StateVector(register, z / np.linalg.norm(z))


def random_hermitian(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return (z + z.conj().T) / 2
