"""Channel and detector models, heralded-rate estimate and the colored-noise state family."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import qstate as qs
from .constants import PAPER_RATE


class DetectorKind(str, enum.Enum):
    SSPD = "SSPD"
    TES = "TES"


@dataclass(frozen=True)
class DetectorModel:
    kind: DetectorKind
    efficiency: float
    jitter: float = 0.0
    resolution_time: float = 0.0
    recovery_time: float = 0.0
    dark_count_rate: float = 0.0

    def __post_init__(self):
        for name in ("efficiency", "jitter", "resolution_time", "recovery_time", "dark_count_rate"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.efficiency > 1:
            raise ValueError("efficiency must be <= 1")

    @classmethod
    def sspd(cls, efficiency: float = 0.1, dark_count_rate: float = 10.0) -> "DetectorModel":
        """Nanowire detector: <100 ps jitter, <10 ns recovery, low dark counts."""
        return cls(DetectorKind.SSPD, efficiency, jitter=100e-12, resolution_time=100e-12,
                   recovery_time=10e-9, dark_count_rate=dark_count_rate)

    @classmethod
    def tes(cls, efficiency: float = 0.98) -> "DetectorModel":
        """Transition-edge sensor: 100 ns timing, 0.1-1 us recovery."""
        return cls(DetectorKind.TES, efficiency, jitter=100e-9, resolution_time=100e-9,
                   recovery_time=1e-6, dark_count_rate=0.0)


@dataclass(frozen=True)
class RateParams:
    R: float
    mu_C: float
    eta_c: float = 1.0
    eta_t: float = 1.0
    eta_sspd: float = 1.0
    eta_k: float = 1.0
    eta_tes: float = 1.0

    def __post_init__(self):
        if self.R < 0:
            raise ValueError("R must be nonnegative")
        for name in ("mu_C", "eta_c", "eta_t", "eta_sspd", "eta_k", "eta_tes"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name}={v} outside [0, 1]")

    @classmethod
    def from_gain(cls, R: float, gain_g: float, **kw) -> "RateParams":
        return cls(R=R, mu_C=math.sin(gain_g) ** 2, **kw)

    @classmethod
    def paper(cls, mu_C: float = 1e-3) -> "RateParams":
        """Feasibility-estimate values; only the product eta_c*eta_t = 0.3 is known."""
        return cls(R=PAPER_RATE["R"], mu_C=mu_C, eta_c=PAPER_RATE["eta_c_eta_t"], eta_t=1.0,
                   eta_sspd=PAPER_RATE["eta_sspd"], eta_k=PAPER_RATE["eta_k_eta_tes"], eta_tes=1.0)

    @property
    def transmission(self) -> float:
        return self.eta_c * self.eta_t

    @property
    def final_efficiency(self) -> float:
        return self.eta_k * self.eta_tes

    @property
    def herald_probability(self) -> float:
        """Probability per source pair that both flags click."""
        return (self.mu_C * self.eta_c * self.eta_t * self.eta_sspd) ** 2


@dataclass(frozen=True)
class RateEstimate:
    heralded_rate: float
    coincidence_rate: float
    split_photon_rate: float  # per side, before flag detection

    @property
    def coincidences_per_hour(self) -> float:
        return self.coincidence_rate * 3600.0


def heralded_rate(params: RateParams) -> RateEstimate:
    """Two-sided herald rate ``R mu_C^2 eta_c^2 eta_t^2 eta_sspd^2``.

    ``coincidence_rate`` further multiplies by ``(eta_k eta_tes)^2`` for the
    detected Bell coincidences.
    """
    r_exp = params.R * params.herald_probability
    return RateEstimate(
        heralded_rate=r_exp,
        coincidence_rate=r_exp * params.final_efficiency ** 2,
        split_photon_rate=params.R * params.transmission * params.mu_C,
    )


def paper_rate_envelope() -> dict:
    lo, hi = PAPER_RATE["mu_C_range"]
    r_lo = heralded_rate(RateParams.paper(lo))
    r_hi = heralded_rate(RateParams.paper(hi))
    s_lo, s_hi = PAPER_RATE["stated_events_per_s"]
    computed = (r_lo.heralded_rate, r_hi.heralded_rate)
    return {
        "mu_C_range": [lo, hi],
        "computed_heralded_rate": list(computed),
        "computed_coincidence_rate": [r_lo.coincidence_rate, r_hi.coincidence_rate],
        "computed_split_photon_rate": [r_lo.split_photon_rate, r_hi.split_photon_rate],
        "stated_events_per_s": [s_lo, s_hi],
        "stated_split_photon_rate": PAPER_RATE["stated_split_photon_rate"],
        "overlap": computed[0] <= s_hi and s_lo <= computed[1],
        "order_of_magnitude_agreement": all(
            abs(math.log10(c) - math.log10(s)) <= 1.0 for c, s in zip(computed, (s_lo, s_hi))),
        "exact_range_match": math.isclose(computed[0], s_lo) and math.isclose(computed[1], s_hi),
    }


# ---------------------------------------------------------------- loss channel

def _loss_kraus(cutoff: int, transmittance: float) -> list[np.ndarray]:
    """Beam-splitter loss Kraus operators on one truncated bosonic factor."""
    c1 = cutoff + 1
    ops = []
    for k in range(c1):
        op = np.zeros((c1, c1))
        for n in range(k, c1):
            op[n - k, n] = math.sqrt(math.comb(n, k) * transmittance ** (n - k)
                                     * (1 - transmittance) ** k)
        ops.append(op)
    return ops


def loss_channel(state: qs.DensityMatrix | qs.StateVector, mode_id: str,
                 transmittance: float) -> qs.DensityMatrix:
    """Each photon in ``mode_id`` (either polarization) survives with ``transmittance``."""
    if not 0 <= transmittance <= 1:
        raise ValueError("transmittance must lie in [0, 1]")
    if isinstance(state, qs.StateVector):
        state = state.density()
    reg = state.register
    if not isinstance(reg, qs.FockRegister):
        raise TypeError("loss needs a Fock register (the vacuum must be representable)")
    kraus = _loss_kraus(reg.cutoff, transmittance)
    pols = reg.polarizations(mode_id)
    if not pols:
        raise KeyError(f"mode {mode_id!r} not in register")
    # local operator = kron over polarization factors of the mode
    locals_ = [np.eye(1)]
    for _ in pols:
        locals_ = [np.kron(l, k) for l in locals_ for k in kraus]
    out = np.zeros_like(state.matrix)
    for k in locals_:
        out = out + qs.apply_operator(state, k, [mode_id]).matrix
    return qs.DensityMatrix(reg, out)


# ---------------------------------------------------------------- colored noise

@dataclass(frozen=True)
class ColoredNoiseParams:
    theta: float
    p: float = 0.0

    def __post_init__(self):
        if not 0 <= self.theta <= math.pi / 2:
            raise ValueError("theta must lie in [0, pi/2]")
        if not 0 <= self.p <= 1:
            raise ValueError("p must lie in [0, 1]")


def colored_noise_matrix(theta: float, p: float) -> np.ndarray:
    """4x4 matrix in the basis HH, HV, VH, VV."""
    c, s = math.cos(theta), math.sin(theta)
    m = np.zeros((4, 4))
    m[1, 1] = c * c
    m[2, 2] = s * s
    m[1, 2] = m[2, 1] = (1 - p) ** 2 * c * s
    return m


def colored_noise_state(params: ColoredNoiseParams, mode_ids=("A", "B")) -> qs.DensityMatrix:
    """``C^2|HV><HV| + (1-p)^2 CS(|HV><VH| + h.c.) + S^2|VH><VH|``.

    The first entry of ``mode_ids`` carries the first qubit of ``|HV>``.
    """
    m = colored_noise_matrix(params.theta, params.p)
    first, second = (str(x) for x in mode_ids)
    if first > second:  # canonical order swaps the two qubits
        m = m[np.ix_([0, 2, 1, 3], [0, 2, 1, 3])]
    return qs.DensityMatrix(qs.QubitRegister((first, second)), m)


def with_white_noise(rho: qs.DensityMatrix, visibility: float) -> qs.DensityMatrix:
    d = rho.register.dimension
    return qs.DensityMatrix(rho.register, visibility * rho.matrix + (1 - visibility) * np.eye(d) / d)


# ---------------------------------------------------------------- detection

def dark_click_probability(detector: DetectorModel, window: float) -> float:
    return min(1.0, detector.dark_count_rate * window)


def detect(photon_present, detector: DetectorModel, rng: np.random.Generator,
           window: float = 10e-9, dark_counts: bool = True):
    """Click decisions for an array (or scalar) of photon-present flags.

    A present photon clicks with the detector efficiency; independently a dark
    count fires with probability ``dark_count_rate * window``.
    """
    present = np.asarray(photon_present, dtype=bool)
    click = present & (rng.random(present.shape) < detector.efficiency)
    if dark_counts and detector.dark_count_rate > 0:
        click |= rng.random(present.shape) < dark_click_probability(detector, window)
    return click if click.ndim else bool(click)


def conditional_tes_efficiency(params: RateParams, flag_dark_probability: float = 0.0) -> float:
    """P(TES click | flag click) for one side, enumerated over the photon's history.

    Without flag dark counts the channel transmission cancels and the result is
    ``eta_k * eta_tes``; dark flags herald empty modes and reintroduce a
    dependence on the transmission.
    """
    p_photon_flag = params.transmission * params.mu_C * params.eta_sspd
    p_split = params.transmission * params.mu_C
    # a dark count can fire whether or not the real flag photon clicked
    p_flag = p_photon_flag + (1 - p_photon_flag) * flag_dark_probability
    p_flag_and_signal = p_split * (params.eta_sspd + (1 - params.eta_sspd) * flag_dark_probability)
    if p_flag == 0:
        return float("nan")
    return p_flag_and_signal * params.final_efficiency / p_flag
