"""Bell correlations with inefficient detectors and detection-efficiency thresholds.

Outcomes per side are ``+``, ``-`` and the no-click ``0`` (indices 0, 1, 2).
A behavior is stored as ``p[a, b, x, y]``.  Analyzer convention: setting angle
``phi`` has ``+`` projector onto ``cos(phi)|H> + sin(phi)|V>``.
"""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from . import qstate as qs
from .constants import TOL
from .optics import ColoredNoiseParams, colored_noise_matrix
from .simplex import LPError, feasibility

OUTCOMES = ("+", "-", "0")
PLUS, MINUS, NOCLICK = 0, 1, 2

_Z = np.diag([1.0, -1.0])
_X = np.array([[0.0, 1.0], [1.0, 0.0]])
_PAULI = np.stack([np.eye(2), _Z, _X])


class ConvergenceError(ArithmeticError):
    """The threshold optimizer or bisection did not reach a consistent answer."""


class NoClickPolicy(str, enum.Enum):
    BIN_TO_MINUS = "BinToMinus"
    KEEP_THREE_OUTCOME = "KeepThreeOutcome"


@dataclass(frozen=True)
class MeasurementSetting:
    analyzer_angle: float

    def __post_init__(self):
        object.__setattr__(self, "analyzer_angle", float(self.analyzer_angle) % math.pi)

    def projectors(self) -> tuple[np.ndarray, np.ndarray]:
        v = np.array([math.cos(self.analyzer_angle), math.sin(self.analyzer_angle)])
        plus = np.outer(v, v)
        return plus, np.eye(2) - plus


@dataclass(frozen=True)
class BellScenario:
    settings_a: tuple[MeasurementSetting, MeasurementSetting]
    settings_b: tuple[MeasurementSetting, MeasurementSetting]
    eta: float = 1.0
    noclick_policy: NoClickPolicy = NoClickPolicy.BIN_TO_MINUS

    def __post_init__(self):
        if not 0 <= self.eta <= 1:
            raise ValueError("eta must lie in [0, 1]")

    @classmethod
    def from_angles(cls, angles: Sequence[float], eta: float = 1.0,
                    policy: NoClickPolicy = NoClickPolicy.BIN_TO_MINUS) -> "BellScenario":
        a0, a1, b0, b1 = angles
        return cls((MeasurementSetting(a0), MeasurementSetting(a1)),
                   (MeasurementSetting(b0), MeasurementSetting(b1)), eta, policy)

    @property
    def angles(self) -> tuple[float, float, float, float]:
        return tuple(s.analyzer_angle for s in self.settings_a + self.settings_b)

    def with_eta(self, eta: float) -> "BellScenario":
        return BellScenario(self.settings_a, self.settings_b, eta, self.noclick_policy)


# CHSH-optimal analyzer angles for 2^{-1/2}(|HV> + |VH>) under the convention above.
TSIRELSON_ANGLES = (0.0, math.pi / 4, 3 * math.pi / 8, 5 * math.pi / 8)


@dataclass(frozen=True)
class BehaviorTable:
    p: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.array(self.p, dtype=float)
        if p.shape != (3, 3, 2, 2):
            raise ValueError(f"behavior must have shape (3, 3, 2, 2), got {p.shape}")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    def check(self, tol: float = TOL.norm) -> "BehaviorTable":
        p = self.p
        if p.min() < -tol:
            raise ValueError("negative probability")
        if np.max(np.abs(p.sum(axis=(0, 1)) - 1)) > tol:
            raise ValueError("a setting block does not sum to 1")
        pa = p.sum(axis=1)  # [a, x, y]
        pb = p.sum(axis=0)  # [b, x, y]
        if np.max(np.abs(pa[:, :, 0] - pa[:, :, 1])) > tol or \
                np.max(np.abs(pb[:, 0, :] - pb[:, 1, :])) > tol:
            raise ValueError("behavior is signalling")
        return self

    def vector(self) -> np.ndarray:
        return self.p.ravel()


def _as_matrix(rho) -> np.ndarray:
    if isinstance(rho, qs.StateVector):
        rho = rho.density()
    m = np.asarray(getattr(rho, "matrix", rho), dtype=complex)
    if m.shape != (4, 4):
        raise ValueError("expected a two-qubit density matrix")
    return m


def born_table(rho, scenario: BellScenario) -> np.ndarray:
    """Ideal-detector probabilities ``q[a, b, x, y]`` for a, b in {+, -}."""
    m = _as_matrix(rho)
    q = np.zeros((2, 2, 2, 2))
    for x, sa in enumerate(scenario.settings_a):
        for y, sb in enumerate(scenario.settings_b):
            for a, pa in enumerate(sa.projectors()):
                for b, pb in enumerate(sb.projectors()):
                    q[a, b, x, y] = np.trace(m @ np.kron(pa, pb)).real
    return q


def behavior_from_state(rho, scenario: BellScenario) -> BehaviorTable:
    """Each side clicks independently with probability ``eta``; otherwise outcome ``0``."""
    q = born_table(rho, scenario)
    eta = scenario.eta
    p = np.zeros((3, 3, 2, 2))
    p[:2, :2] = eta * eta * q
    p[:2, NOCLICK] = eta * (1 - eta) * q.sum(axis=1)
    p[NOCLICK, :2] = (1 - eta) * eta * q.sum(axis=0)
    p[NOCLICK, NOCLICK] = (1 - eta) ** 2
    return BehaviorTable(p)


def _values(noclick_value_a, noclick_value_b):
    """Outcome value tables v[a, x] for each party."""
    va = np.array([[1.0, 1.0], [-1.0, -1.0], list(noclick_value_a)])
    vb = np.array([[1.0, 1.0], [-1.0, -1.0], list(noclick_value_b)])
    return va, vb


def correlators(behavior: BehaviorTable, noclick_a=(-1.0, -1.0), noclick_b=(-1.0, -1.0)) -> np.ndarray:
    """``E[x, y]`` with the no-click outcome valued per setting as given."""
    va, vb = _values(noclick_a, noclick_b)
    return np.einsum("abxy,ax,by->xy", behavior.p, va, vb)


def chsh_value(behavior: BehaviorTable, policy: NoClickPolicy = NoClickPolicy.BIN_TO_MINUS) -> float:
    """``E00 + E01 + E10 - E11``.

    ``BinToMinus`` counts a no-click as ``-1``; ``KeepThreeOutcome`` gives it
    value 0, which keeps the local bound at 2.
    """
    nc = -1.0 if NoClickPolicy(policy) == NoClickPolicy.BIN_TO_MINUS else 0.0
    e = correlators(behavior, (nc, nc), (nc, nc))
    return float(e[0, 0] + e[0, 1] + e[1, 0] - e[1, 1])


def chsh_forms(e: np.ndarray) -> np.ndarray:
    """The 8 CHSH expressions of a 2x2 correlator matrix (sign-flipped pairs included)."""
    total = e.sum()
    s = np.array([total - 2 * e[x, y] for x in range(2) for y in range(2)])
    return np.concatenate([s, -s])


def chsh_max(behavior: BehaviorTable) -> float:
    """Largest CHSH value over the 8 forms and every binning of the no-click outcome.

    For two settings per side this decides membership in the local polytope of
    the three-outcome behavior; binnings that merge ``+`` with ``-`` never
    produce a violation and are skipped.
    """
    best = -np.inf
    for bins in itertools.product((-1.0, 1.0), repeat=4):
        e = correlators(behavior, bins[:2], bins[2:])
        best = max(best, chsh_forms(e).max())
    return float(best)


def fair_sampling_chsh(behavior: BehaviorTable) -> float:
    """CHSH on the subensemble where both detectors clicked."""
    p = behavior.p[:2, :2]
    norm = p.sum(axis=(0, 1))
    if np.any(norm <= 0):
        raise ValueError("no coincidences in some setting block")
    sign = np.array([[1.0, -1.0], [-1.0, 1.0]])
    e = np.einsum("abxy,ab->xy", p, sign) / norm
    return float(e[0, 0] + e[0, 1] + e[1, 0] - e[1, 1])


# ---------------------------------------------------------------- local polytope

@lru_cache(maxsize=1)
def local_vertices() -> tuple[np.ndarray, tuple]:
    """The 81 deterministic local behaviors as rows of length 36."""
    strategies = list(itertools.product(range(3), repeat=2))  # outcome for x=0, x=1
    rows, labels = [], []
    for sa in strategies:
        for sb in strategies:
            p = np.zeros((3, 3, 2, 2))
            for x in range(2):
                for y in range(2):
                    p[sa[x], sb[y], x, y] = 1.0
            rows.append(p.ravel())
            labels.append((sa, sb))
    v = np.array(rows)
    v.setflags(write=False)
    return v, tuple(labels)


@dataclass(frozen=True)
class LocalityCertificate:
    feasible: bool
    weights: np.ndarray | None = field(default=None, repr=False)
    functional: np.ndarray | None = field(default=None, repr=False)
    local_bound: float | None = None
    value: float | None = None

    @property
    def violation(self) -> float:
        if self.feasible:
            return 0.0
        return self.value - self.local_bound


def lhv_membership(behavior: BehaviorTable, tol: float = TOL.lp_feasibility) -> LocalityCertificate:
    """Decide whether ``behavior`` is a mixture of deterministic local strategies.

    Feasible: returns vertex weights.  Infeasible: returns a Bell functional
    (coefficients on ``p[a, b, x, y]``), its maximum over the vertices and its
    value on the behavior.  Solver trouble raises :class:`LPError`.
    """
    verts, _ = local_vertices()
    A = np.vstack([verts.T, np.ones(len(verts))])
    b = np.concatenate([behavior.vector(), [1.0]])
    res = feasibility(A, b, tol=tol)
    if res.feasible:
        w = res.x
        if np.max(np.abs(verts.T @ w - behavior.vector())) > 1e-7:
            raise LPError("feasible weights do not reproduce the behavior")
        return LocalityCertificate(True, weights=w)
    y = res.certificate
    functional = y[:-1].reshape(3, 3, 2, 2)
    # y[-1] multiplies the normalization row; fold it into the bound
    vertex_values = verts @ y[:-1]
    bound = float(vertex_values.max())
    value = float(behavior.vector() @ y[:-1])
    if value <= bound:
        raise LPError("LP certificate does not separate the behavior")
    return LocalityCertificate(False, functional=functional, local_bound=bound, value=value)


# ---------------------------------------------------------------- thresholds

def _violates(rho, scenario: BellScenario, eta: float, oracle: str) -> bool:
    beh = behavior_from_state(rho, scenario.with_eta(eta))
    if oracle == "lp":
        return not lhv_membership(beh).feasible
    return chsh_max(beh) > 2 + 1e-12


def critical_efficiency(rho, angles: Sequence[float], tol: float = 1e-6,
                        oracle: str = "chsh") -> float | None:
    """Smallest symmetric efficiency at which the behavior leaves the local polytope.

    Bisection on ``eta`` in [0, 1] down to ``tol``.  ``oracle`` is ``"chsh"``
    (binned CHSH over all forms) or ``"lp"``.  Returns ``None`` when the state
    shows no violation even at ``eta = 1``.
    """
    if oracle not in ("chsh", "lp"):
        raise ValueError("oracle must be 'chsh' or 'lp'")
    scen = BellScenario.from_angles(angles)
    if not _violates(rho, scen, 1.0, oracle):
        return None
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _violates(rho, scen, mid, oracle):
            hi = mid
        else:
            lo = mid
    return hi


def correlation_tensor(rho) -> np.ndarray:
    """``T[i, j] = tr(rho s_i (x) s_j)`` for s in (I, Z, X); enough for linear analyzers."""
    m = _as_matrix(rho).reshape(2, 2, 2, 2)
    return np.einsum("iab,jcd,bdac->ij", _PAULI, _PAULI, m).real


def _analyzer(phi):
    return np.array([np.cos(2 * phi), np.sin(2 * phi)])


def binned_chsh_terms(t: np.ndarray, angles) -> tuple[float, float]:
    """``(S_q, M)``: ideal CHSH and ``<A0> + <B0>`` from a correlation tensor.

    With no-clicks binned to ``-1`` the CHSH value at efficiency eta is
    ``eta^2 S_q - 2 eta (1 - eta) M + 2 (1 - eta)^2``.
    """
    a0, a1, b0, b1 = (_analyzer(x) for x in angles)
    c = t[1:, 1:]
    e = lambda u, v: u @ c @ v
    s_q = e(a0, b0) + e(a0, b1) + e(a1, b0) - e(a1, b1)
    m = t[1:, 0] @ a0 + t[0, 1:] @ b0
    return float(s_q), float(m)


def threshold_root(t: np.ndarray, angles) -> float:
    """Root of the binned-CHSH quadratic, ``(2M + 4) / (S_q + 2M + 2)``.

    Where there is no violation at eta = 1 it returns ``1 + (2 - S_q)`` instead,
    which joins continuously at ``S_q = 2`` and gives the optimizer a slope.
    """
    s_q, m = binned_chsh_terms(t, angles)
    if s_q <= 2:
        return 1.0 + (2.0 - s_q)
    return (2 * m + 4) / (s_q + 2 * m + 2)


def binned_chsh_at(t: np.ndarray, angles, eta: float) -> float:
    s_q, m = binned_chsh_terms(t, angles)
    return eta * eta * s_q - 2 * eta * (1 - eta) * m + 2 * (1 - eta) ** 2


@dataclass(frozen=True)
class ThresholdResult:
    p: float
    eta_star: float | None
    theta_opt: float
    angles_opt: tuple[float, float, float, float]
    eta_bisection: float | None = None
    restarts: tuple[float, ...] = field(default=(), repr=False)

    @property
    def violates(self) -> bool:
        return self.eta_star is not None


def _noisy_matrix(theta: float, p: float, visibility: float) -> np.ndarray:
    m = colored_noise_matrix(theta, p)
    if visibility != 1.0:
        m = visibility * m + (1 - visibility) * np.eye(4) / 4
    return m


def _grid_seeds(objective, theta_grid, n_seeds: int) -> list[np.ndarray]:
    steps = np.arange(8) * math.pi / 8
    scored = []
    for th in theta_grid:
        for ang in itertools.product(steps, repeat=4):
            x = np.array((th,) + ang)
            scored.append((objective(x), tuple(x)))
    scored.sort()
    seeds, seen = [], set()
    for f, x in scored:
        key = tuple(np.round(x, 6))
        if key in seen:
            continue
        seen.add(key)
        seeds.append(np.array(x))
        if len(seeds) == n_seeds:
            break
    return seeds


def _multistart(objective, theta_min: float, restarts: int, seed: int,
                theta_grid: Sequence[float], theta_max: float):
    rng = np.random.default_rng(seed)
    bounds = [(theta_min, theta_max)] + [(None, None)] * 4
    results = []
    for x0 in _grid_seeds(objective, theta_grid, restarts):
        x0 = x0 + rng.normal(scale=0.05, size=5)
        x0[0] = float(np.clip(x0[0], theta_min, theta_max))
        r = minimize(objective, x0, method="Nelder-Mead", bounds=bounds,
                     options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 6000, "maxfev": 12000})
        results.append((float(r.fun), r.x))
    results.sort(key=lambda fr: fr[0])
    return results


def optimize_threshold(p: float, theta_min: float = 1e-3, restarts: int = 20, seed: int = 0,
                       visibility: float = 1.0, theta_max: float | None = None) -> ThresholdResult:
    """Minimize the critical efficiency of the colored-noise state over theta and analyzers.

    Multi-start Nelder-Mead seeded from a coarse grid; theta is kept in
    ``[theta_min, pi/2 - theta_min]``.  The infimum sits at the product-state
    ends, where the violation margin vanishes, hence the cut.  The winning point
    is re-checked by bisection on the full behavior.
    """
    ColoredNoiseParams(theta=math.pi / 4, p=p)  # validates p
    hi = math.pi / 2 - theta_min if theta_max is None else theta_max

    def objective(x):
        th = min(max(x[0], theta_min), hi)
        return threshold_root(correlation_tensor(_noisy_matrix(th, p, visibility)), x[1:])

    grid = sorted({theta_min, *(t for t in (0.05, 0.15, 0.3, math.pi / 4) if theta_min <= t <= hi)})
    results = _multistart(objective, theta_min, restarts, seed, grid, hi)
    best_f, best_x = results[0]
    theta = float(min(max(best_x[0], theta_min), hi))
    angles = tuple(float(a) % math.pi for a in best_x[1:])
    restart_values = tuple(f for f, _ in results)
    if best_f >= 1.0 - 1e-9:  # S_q = 2 up to rounding: no violation at eta = 1
        return ThresholdResult(p, None, theta, angles, None, restart_values)
    rho = _noisy_matrix(theta, p, visibility)
    eta_b = critical_efficiency(rho, angles, tol=1e-7)
    if eta_b is None or abs(eta_b - best_f) > 1e-4:
        raise ConvergenceError(f"bisection ({eta_b}) disagrees with optimizer ({best_f}) at p={p}")
    return ThresholdResult(p, float(best_f), theta, angles, eta_b, restart_values)


def threshold_curve(p_values: Sequence[float], **kwargs) -> list[ThresholdResult]:
    return sorted((optimize_threshold(p, **kwargs) for p in p_values), key=lambda r: r.p)


def is_monotone(curve: Sequence[ThresholdResult], tol: float = 2e-3) -> bool:
    """Non-decreasing in p; a missing threshold counts as +inf."""
    vals = [math.inf if r.eta_star is None else r.eta_star for r in curve]
    return all(b >= a - tol for a, b in zip(vals, vals[1:]))


def optimize_violation(eta: float, p: float = 0.0, restarts: int = 10, seed: int = 0,
                       theta_min: float = 1e-3) -> tuple[float, float, tuple]:
    """Largest binned CHSH value at efficiency ``eta`` over theta and analyzers.

    Returns ``(S, theta, angles)``.
    """
    hi = math.pi / 2 - theta_min

    def objective(x):
        th = min(max(x[0], theta_min), hi)
        return -binned_chsh_at(correlation_tensor(colored_noise_matrix(th, p)), x[1:], eta)

    results = _multistart(objective, theta_min, restarts, seed, (0.1, 0.3, 0.5, math.pi / 4), hi)
    f, x = results[0]
    return -f, float(min(max(x[0], theta_min), hi)), tuple(float(a) % math.pi for a in x[1:])


def visibility_crossing(target: float = 0.70, p: float = 0.0, lo: float = 0.9, hi: float = 1.0,
                        tol: float = 1e-4, restarts: int = 8) -> float:
    """White-noise visibility at which the optimized threshold equals ``target``."""
    def eta_at(v):
        r = optimize_threshold(p, visibility=v, restarts=restarts)
        return math.inf if r.eta_star is None else r.eta_star

    if eta_at(hi) > target:
        return math.nan
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if eta_at(mid) > target:
            lo = mid
        else:
            hi = mid
    return hi


def maximally_entangled(mode_ids=("A", "B")) -> qs.DensityMatrix:
    """``2^{-1/2}(|HV> + |VH>)`` as a density matrix."""
    psi = qs.qubit_state(mode_ids, [0, 1 / math.sqrt(2), 1 / math.sqrt(2), 0])
    return psi.density()
