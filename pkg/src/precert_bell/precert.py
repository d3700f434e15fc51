"""Single-photon down-conversion splitter and flag heralding.

A photon on mode ``A`` in ``alpha|H> + beta|V>`` is converted with amplitude
``sin(g)`` into a pair on modes ``1`` (signal) and ``2`` (flag) with the same
polarization.  Measuring the flag in the diagonal basis heralds the signal in
the input polarization state (up to a known phase flip for the ``pi-`` result).
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import qstate as qs
from .constants import TOL

DIAGONAL_BASIS = (
    (1 / math.sqrt(2), 1 / math.sqrt(2)),
    (1 / math.sqrt(2), -1 / math.sqrt(2)),
)

# Phase-flip correction restoring the input state after a pi- herald.
PHASE_FLIP = np.diag([1.0, -1.0]).astype(complex)


class FlagResult(str, enum.Enum):
    PI_PLUS = "PiPlus"
    PI_MINUS = "PiMinus"
    NO_CLICK = "NoClick"
    NO_SPLIT = "NoSplit"


class EnergyMismatchWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PolarizationQubit:
    alpha: complex
    beta: complex

    def __post_init__(self):
        n = abs(self.alpha) ** 2 + abs(self.beta) ** 2
        if abs(n - 1) > TOL.norm:
            raise ValueError(f"|alpha|^2 + |beta|^2 = {n}, expected 1")

    @classmethod
    def random(cls, rng: np.random.Generator) -> "PolarizationQubit":
        z = rng.normal(size=2) + 1j * rng.normal(size=2)
        z /= np.linalg.norm(z)
        return cls(complex(z[0]), complex(z[1]))

    def state(self, mode_id: str = "1") -> qs.StateVector:
        return qs.qubit_state([mode_id], [self.alpha, self.beta])


@dataclass(frozen=True)
class SplitterConfig:
    gain_g: float = math.pi / 2
    lambda_in: float = 716.0
    lambda_signal: float = 1310.0
    lambda_flag: float = 1550.0
    flag_basis: tuple = DIAGONAL_BASIS
    input_mode: str = "A"
    signal_mode: str = "1"
    flag_mode: str = "2"

    def __post_init__(self):
        if not 0 <= self.gain_g <= math.pi / 2:
            raise ValueError(f"gain g={self.gain_g} outside [0, pi/2]")
        b = np.asarray(self.flag_basis, dtype=complex)
        if b.shape != (2, 2) or np.max(np.abs(b @ b.conj().T - np.eye(2))) > TOL.norm:
            raise ValueError("flag_basis must be two orthonormal polarization kets")
        dev = self.energy_mismatch
        if dev > 0.02:
            warnings.warn(
                f"1/lambda_in differs from 1/lambda_signal + 1/lambda_flag by {dev:.2%}",
                EnergyMismatchWarning, stacklevel=3,
            )

    @property
    def energy_mismatch(self) -> float:
        """Relative deviation of ``1/l_in`` from ``1/l_signal + 1/l_flag``."""
        lhs = 1 / self.lambda_in
        return abs(lhs - (1 / self.lambda_signal + 1 / self.lambda_flag)) / lhs

    @property
    def split_probability(self) -> float:
        return math.sin(self.gain_g) ** 2

    @property
    def modes(self) -> tuple[str, str, str]:
        return (self.input_mode, self.signal_mode, self.flag_mode)


@dataclass(frozen=True)
class HeraldOutcome:
    heralded: bool
    flag_result: FlagResult
    conditional_state: qs.StateVector | qs.DensityMatrix | None = field(repr=False)
    probability: float
    correction: str = "I"


def build_hamiltonian(config: SplitterConfig, register: qs.FockRegister) -> np.ndarray:
    """``i (a_AH b1H^+ b2H^+ + a_AV b1V^+ b2V^+) + h.c.`` in units hbar*chi = 1."""
    a_mode, s_mode, f_mode = config.modes
    for m in config.modes:
        if m not in register.mode_ids or register.polarizations(m) != qs.POLARIZATIONS:
            raise ValueError(f"register lacks both polarizations of mode {m!r}")
    k = np.zeros((register.dimension,) * 2, dtype=complex)
    for pol in qs.POLARIZATIONS:
        a = qs.annihilation(register, (a_mode, pol))
        b1 = qs.annihilation(register, (s_mode, pol))
        b2 = qs.annihilation(register, (f_mode, pol))
        k += a @ b1.conj().T @ b2.conj().T
    return 1j * k - 1j * k.conj().T


def _input_state(qubit: PolarizationQubit, config: SplitterConfig, cutoff: int) -> qs.StateVector:
    reg = qs.FockRegister.for_modes(config.modes, cutoff)
    a = config.input_mode
    return qs.StateVector(
        reg,
        qubit.alpha * qs.basis_state(reg, {(a, "H"): 1}).amplitudes
        + qubit.beta * qs.basis_state(reg, {(a, "V"): 1}).amplitudes,
    )


def split_closed_form(qubit: PolarizationQubit, config: SplitterConfig,
                      cutoff: int = 1) -> qs.StateVector:
    """Output state built directly from the cos/sin rotation in each polarization sector."""
    reg = qs.FockRegister.for_modes(config.modes, cutoff)
    a, s, f = config.modes
    c, sn = math.cos(config.gain_g), math.sin(config.gain_g)
    amp = np.zeros(reg.dimension, dtype=complex)
    for coeff, pol in ((qubit.alpha, "H"), (qubit.beta, "V")):
        amp += coeff * c * qs.basis_state(reg, {(a, pol): 1}).amplitudes
        amp += coeff * sn * qs.basis_state(reg, {(s, pol): 1, (f, pol): 1}).amplitudes
    return qs.StateVector(reg, amp)


def split(qubit: PolarizationQubit, config: SplitterConfig, cutoff: int = 1,
          check: bool = True) -> qs.StateVector:
    """Evolve the input photon through the splitter with the matrix exponential.

    With ``check`` the result is compared against :func:`split_closed_form`.
    The generator's sign convention already yields ``+sin(g)`` on the pair
    branch, so no phase fix-up is applied.
    """
    psi0 = _input_state(qubit, config, cutoff)
    h = build_hamiltonian(config, psi0.register)
    out = qs.evolve(psi0, h, config.gain_g)
    if check:
        ref = split_closed_form(qubit, config, cutoff)
        dist = np.linalg.norm(out.amplitudes - ref.amplitudes)
        if dist > TOL.norm:
            raise ArithmeticError(f"generic and closed-form splitting disagree by {dist:.2e}")
    return out


def flag_kets(config: SplitterConfig, register: qs.Register) -> tuple[np.ndarray, np.ndarray]:
    (p_h, p_v), (m_h, m_v) = config.flag_basis
    return (qs.single_mode_ket(register, config.flag_mode, p_h, p_v),
            qs.single_mode_ket(register, config.flag_mode, m_h, m_v))


def _drop_vacuum(state, mode_id):
    """Project an (ideally empty) mode onto vacuum and discard it."""
    post, prob = qs.project(state, mode_id, qs.vacuum_ket(state.register, mode_id))
    if post is None or abs(prob - 1) > 1e-9:
        raise ArithmeticError(f"mode {mode_id!r} expected empty, vacuum probability {prob}")
    return post


def herald(split_state: qs.StateVector, config: SplitterConfig) -> list[HeraldOutcome]:
    """Outcomes of the flag measurement: pi+, pi-, and the spectrally rejected no-split branch.

    Conditional states are returned as polarization qubits on the signal mode.
    The pi- branch carries ``correction="Z"``: a phase flip on the signal restores
    the input state.
    """
    reg = split_state.register
    kp, km = flag_kets(config, reg)
    outcomes = []
    for res, ket, corr in ((FlagResult.PI_PLUS, kp, "I"), (FlagResult.PI_MINUS, km, "Z")):
        post, prob = qs.project(split_state, config.flag_mode, ket)
        cond = None
        if post is not None:
            cond = qs.to_qubits(_drop_vacuum(post, config.input_mode))
        outcomes.append(HeraldOutcome(post is not None, res, cond, prob, corr))
    # Unsplit photon stays at the input wavelength; the flag mode is then empty.
    post, prob = qs.project(split_state, config.flag_mode, qs.vacuum_ket(reg, config.flag_mode))
    cond = None
    if post is not None:
        cond = qs.to_qubits(_drop_vacuum(post, config.signal_mode))
    outcomes.append(HeraldOutcome(False, FlagResult.NO_SPLIT, cond, prob))
    return outcomes


def herald_mixed(rho: qs.DensityMatrix, config: SplitterConfig) -> list[HeraldOutcome]:
    """:func:`herald` for a mixed input on the (A, 1, 2) register, e.g. after channel loss.

    The remaining probability mass (no photon at all) is reported as ``NoClick``.
    """
    h = build_hamiltonian(config, rho.register)
    out = qs.evolve(rho, h, config.gain_g)
    kp, km = flag_kets(config, out.register)
    results = []
    for res, ket, corr in ((FlagResult.PI_PLUS, kp, "I"), (FlagResult.PI_MINUS, km, "Z")):
        post, prob = qs.project(out, config.flag_mode, ket)
        cond = None
        if post is not None:
            cond = qs.to_qubits(_drop_vacuum(post, config.input_mode))
        results.append(HeraldOutcome(post is not None, res, cond, prob, corr))
    # flag empty: either the photon did not split or it was never there
    post, p_empty = qs.project(out, config.flag_mode, qs.vacuum_ket(out.register, config.flag_mode))
    p_nosplit = 0.0
    if post is not None:
        _, p_a_empty = qs.project(post, config.input_mode,
                                  qs.vacuum_ket(post.register, config.input_mode))
        p_nosplit = p_empty * (1 - p_a_empty)
    results.append(HeraldOutcome(False, FlagResult.NO_SPLIT, None, p_nosplit))
    results.append(HeraldOutcome(False, FlagResult.NO_CLICK, None, p_empty - p_nosplit))
    return results


def precertify_pair(entangled_input: qs.StateVector,
                    config_a: SplitterConfig | None = None,
                    config_b: SplitterConfig | None = None,
                    outcome: tuple[FlagResult, FlagResult] = (FlagResult.PI_PLUS, FlagResult.PI_PLUS),
                    apply_correction: bool = False) -> HeraldOutcome:
    """Split both photons of a two-qubit polarization state and herald on both flags.

    ``entangled_input`` is a :class:`~precert_bell.qstate.QubitRegister` state on the
    input modes of the two splitters (default ``A`` and ``B``).  The heralded state
    is returned on the two signal modes (default ``1`` and ``3``).  With
    ``apply_correction`` a pi- herald is phase-corrected on its signal mode.
    """
    config_a = config_a or SplitterConfig()
    config_b = config_b or SplitterConfig(input_mode="B", signal_mode="3", flag_mode="4")
    if not isinstance(entangled_input.register, qs.QubitRegister):
        raise TypeError("entangled_input must be a polarization-qubit state")
    if set(entangled_input.register.mode_ids) != {config_a.input_mode, config_b.input_mode}:
        raise ValueError("input modes do not match the splitter configurations")
    if abs(entangled_input.norm - 1) > TOL.norm:
        raise ValueError("input state is not normalized")
    cutoff = 1
    psi = qs.from_qubits(entangled_input, cutoff)
    empty = qs.vacuum(qs.FockRegister.for_modes(
        (config_a.signal_mode, config_a.flag_mode, config_b.signal_mode, config_b.flag_mode), cutoff))
    psi = qs.tensor_product(psi, empty)
    prob = 1.0
    corrections = []
    for cfg, res in ((config_a, outcome[0]), (config_b, outcome[1])):
        sub = qs.FockRegister.for_modes(cfg.modes, cutoff)
        psi = qs.evolve(psi, build_hamiltonian(cfg, sub), cfg.gain_g, cfg.modes)
        kp, km = flag_kets(cfg, psi.register)
        if res == FlagResult.PI_PLUS:
            ket = kp
        elif res == FlagResult.PI_MINUS:
            ket = km
            corrections.append(cfg.signal_mode)
        else:
            raise ValueError("outcome must be PiPlus or PiMinus on each side")
        psi, p = qs.project(psi, cfg.flag_mode, ket)
        prob *= p
        if psi is None:
            return HeraldOutcome(False, FlagResult(outcome[0]), None, prob)
    for cfg in (config_a, config_b):
        psi = _drop_vacuum(psi, cfg.input_mode)
    psi = qs.to_qubits(psi)
    label = "I"
    if corrections:
        label = "Z@" + ",".join(corrections)
        if apply_correction:
            for m in corrections:
                psi = qs.apply_operator(psi, PHASE_FLIP, [m])
    flag = outcome[0] if outcome[0] == outcome[1] else FlagResult.PI_MINUS
    return HeraldOutcome(True, FlagResult(flag), psi, prob, label)


def signal_mapping(config_a: SplitterConfig | None = None,
                   config_b: SplitterConfig | None = None) -> dict[str, str]:
    """Input-mode -> signal-mode renaming used to compare heralded and input states."""
    config_a = config_a or SplitterConfig()
    config_b = config_b or SplitterConfig(input_mode="B", signal_mode="3", flag_mode="4")
    return {config_a.input_mode: config_a.signal_mode, config_b.input_mode: config_b.signal_mode}
