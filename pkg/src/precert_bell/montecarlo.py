"""Event-level Monte Carlo of the precertified Bell experiment.

Per source pair and per side: the photon survives the channel
(``eta_c * eta_t``), splits (``sin(g)^2``), and the flag clicks (``eta_sspd``).
A trial is heralded when both flags click.  Settings are drawn afterwards, the
outcome pair is sampled from the heralded state and each signal photon is seen
by its TES with probability ``eta_k * eta_tes``.

Randomness: the root seed is expanded into one counter-based (Philox) stream
per fixed-size chunk of trials, with a fixed draw layout, so results do not
depend on scheduling and equal seeds give common random numbers across
parameter changes.
"""
from __future__ import annotations

import csv
import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import stats

from . import qstate as qs
from .bell import BellScenario, NoClickPolicy, born_table
from .optics import ColoredNoiseParams, RateParams, colored_noise_state, heralded_rate
from .precert import FlagResult, SplitterConfig, precertify_pair

CHUNK = 1 << 18


class InvariantViolation(RuntimeError):
    """An internal consistency check of the simulation failed."""


class PiMinusPolicy(str, enum.Enum):
    DISCARD = "Discard"
    FEED_FORWARD = "FeedForward"


@dataclass(frozen=True)
class RunConfig:
    seed: int
    n_pairs: int
    rate_params: RateParams
    state: ColoredNoiseParams | qs.DensityMatrix
    scenario: BellScenario
    gain_g: float = math.pi / 2
    pi_minus_policy: PiMinusPolicy = PiMinusPolicy.FEED_FORWARD
    dark_counts: bool = False
    flag_dark_rate: float = 10.0
    tes_dark_rate: float = 0.0
    coincidence_window: float = 10e-9
    dead_time: float = 0.0  # flag detector recovery, applied when > 0
    chunk_size: int = CHUNK

    def __post_init__(self):
        if self.n_pairs <= 0:
            raise ValueError("n_pairs must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if abs(math.sin(self.gain_g) ** 2 - self.rate_params.mu_C) > 1e-12:
            raise ValueError("rate_params.mu_C must equal sin(gain_g)^2")
        if abs(self.scenario.eta - self.rate_params.final_efficiency) > 1e-12:
            raise ValueError("scenario.eta must equal eta_k * eta_tes")

    @classmethod
    def build(cls, *, seed: int, n_pairs: int, gain_g: float = math.pi / 2, R: float = 2e7,
              eta_c: float = 1.0, eta_t: float = 1.0, eta_sspd: float = 1.0,
              eta_k: float = 1.0, eta_tes: float = 1.0,
              state: ColoredNoiseParams | qs.DensityMatrix | None = None,
              angles: Sequence[float] = (0.0, math.pi / 4, 3 * math.pi / 8, 5 * math.pi / 8),
              **kw) -> "RunConfig":
        rp = RateParams.from_gain(R, gain_g, eta_c=eta_c, eta_t=eta_t, eta_sspd=eta_sspd,
                                  eta_k=eta_k, eta_tes=eta_tes)
        state = state if state is not None else ColoredNoiseParams(math.pi / 4, 0.0)
        return cls(seed=seed, n_pairs=int(n_pairs), rate_params=rp, state=state,
                   scenario=BellScenario.from_angles(angles, rp.final_efficiency),
                   gain_g=gain_g, **kw)

    def with_eta_t(self, eta_t: float) -> "RunConfig":
        return replace(self, rate_params=replace(self.rate_params, eta_t=eta_t))

    def heralded_density(self) -> qs.DensityMatrix:
        if isinstance(self.state, ColoredNoiseParams):
            return colored_noise_state(self.state)
        return self.state


@dataclass
class RunSummary:
    n_pairs: int
    n_heralded: int
    duration_s: float
    heralded_rate_hz: float
    expected_heralded_rate_hz: float
    tes_clicks: np.ndarray  # per side, among heralded trials
    counts: np.ndarray  # [a, b, x, y] over heralded trials
    settings_all: np.ndarray  # [x, y] over all trials
    flag_clicks: np.ndarray  # per side, all trials
    pi_minus_heralds: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def conditional_tes_efficiency(self) -> list[tuple[float, float]]:
        """Per side ``(P(TES click | heralded), binomial standard error)``."""
        n = self.n_heralded
        out = []
        for k in self.tes_clicks:
            if n == 0:
                out.append((math.nan, math.nan))
                continue
            p = k / n
            out.append((p, math.sqrt(max(p * (1 - p), 0.0) / n)))
        return out

    def setting_independence_pvalue(self) -> float:
        """Chi-square p-value for heralding being independent of the settings."""
        her = self.counts.sum(axis=(0, 1)).ravel()
        table = np.vstack([her, self.settings_all.ravel() - her])
        if her.sum() == 0 or table[1].sum() == 0:
            return 1.0
        return float(stats.chi2_contingency(table)[1])

    def rate_zscore(self) -> float:
        """(observed - expected) heralds in units of the binomial standard deviation."""
        p = self.expected_heralded_rate_hz * self.duration_s / self.n_pairs
        sd = math.sqrt(self.n_pairs * p * (1 - p))
        diff = self.n_heralded - self.n_pairs * p
        if sd == 0:
            return 0.0 if diff == 0 else math.inf
        return diff / sd

    def to_json(self) -> dict:
        est = chsh_with_noclick(self) if self.counts.sum(axis=(0, 1)).min() > 0 else None
        doc = {
            "n_pairs": self.n_pairs,
            "n_heralded": self.n_heralded,
            "duration_s": self.duration_s,
            "heralded_rate_hz": self.heralded_rate_hz,
            "expected_heralded_rate_hz": self.expected_heralded_rate_hz,
            "rate_zscore": self.rate_zscore(),
            "pi_minus_heralds": self.pi_minus_heralds,
            "flag_clicks": [int(v) for v in self.flag_clicks],
            "conditional_tes_efficiency": [
                {"side": s, "value": v, "stderr": e}
                for s, (v, e) in zip("AB", self.conditional_tes_efficiency)],
            "setting_independence_pvalue": self.setting_independence_pvalue(),
            "counts": counts_rows(self.counts),
        }
        if est is not None:
            doc["chsh"] = {"binned": est.S, "binned_stderr": est.stderr,
                           "fair_sampling": est.fair_S, "fair_sampling_stderr": est.fair_stderr,
                           "policy": est.policy}
        doc.update(self.extra)
        return doc


def counts_rows(counts: np.ndarray) -> list[dict]:
    labels = ("+", "-", "0")
    return [{"x": x, "y": y, "a": labels[a], "b": labels[b], "count": int(counts[a, b, x, y])}
            for x in range(2) for y in range(2) for a in range(3) for b in range(3)]


def _chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(chunk,))))


@dataclass
class _ChunkResult:
    n: int
    heralded: int
    tes: np.ndarray
    counts: np.ndarray
    settings_all: np.ndarray
    flags: np.ndarray
    pi_minus: int
    records: dict | None = None


def _simulate_chunk(config: RunConfig, probs: np.ndarray, chunk: int, start: int, n: int,
                    keep_records: bool) -> _ChunkResult:
    rng = _chunk_rng(config.seed, chunk)
    rp = config.rate_params
    # fixed draw layout: every stream is consumed identically whatever the parameters
    u_side = rng.random((5, 2, n))
    settings = rng.integers(0, 2, size=(2, n))
    u_out = rng.random(n)
    u_tes = rng.random((2, 2, n))

    survived = u_side[0] < rp.transmission
    split = survived & (u_side[1] < rp.mu_C)
    flag = split & (u_side[2] < rp.eta_sspd)
    if config.dark_counts:
        flag |= u_side[4] < min(1.0, config.flag_dark_rate * config.coincidence_window)
    if config.dead_time > 0:
        flag = _apply_dead_time(flag, start, rp.R, config.dead_time)
    pi_plus = u_side[3] < 0.5
    accepted = flag if config.pi_minus_policy == PiMinusPolicy.FEED_FORWARD else flag & pi_plus
    heralded = accepted[0] & accepted[1]
    x, y = settings

    # outcome pair index k = 2a + b from the heralded state's Born table
    cum = np.cumsum(probs[x, y], axis=1)
    k = np.minimum((u_out[:, None] >= cum[:, :3]).sum(axis=1), 3)
    a_out, b_out = k // 2, k % 2
    click = split & (u_tes[0] < rp.final_efficiency)
    if config.dark_counts and config.tes_dark_rate > 0:
        click |= u_tes[1] < min(1.0, config.tes_dark_rate * config.coincidence_window)
    a = np.where(click[0], a_out, 2)
    b = np.where(click[1], b_out, 2)
    # a dark TES click on an empty mode gives a random outcome
    a = np.where(click[0] & ~split[0], (u_tes[1, 0] * 2).astype(int) % 2, a)
    b = np.where(click[1] & ~split[1], (u_tes[1, 1] * 2).astype(int) % 2, b)

    h = heralded
    counts = np.zeros((3, 3, 2, 2), dtype=np.int64)
    np.add.at(counts, (a[h], b[h], x[h], y[h]), 1)
    settings_all = np.zeros((2, 2), dtype=np.int64)
    np.add.at(settings_all, (x, y), 1)
    pi_minus = int(np.count_nonzero(h & ~(pi_plus[0] & pi_plus[1])))
    rec = None
    if keep_records:
        rec = {"trial": np.arange(start, start + n), "split": split, "flag": flag,
               "pi_plus": pi_plus, "x": x, "y": y, "a": a, "b": b}
    return _ChunkResult(n, int(h.sum()), np.array([np.count_nonzero(click[0] & h),
                                                   np.count_nonzero(click[1] & h)]),
                        counts, settings_all, flag.sum(axis=1), pi_minus, rec)


def _apply_dead_time(flag: np.ndarray, start: int, rate: float, dead_time: float) -> np.ndarray:
    """Non-paralyzable veto on trial timestamps ``i / R`` (chunk-local)."""
    out = flag.copy()
    for side in range(2):
        last = -math.inf
        for i in np.flatnonzero(flag[side]):
            t = (start + i) / rate
            if t - last < dead_time:
                out[side, i] = False
            else:
                last = t
    return out


def _verify_heralding(config: RunConfig) -> None:
    """Check that every flag combination heralds the input state after correction."""
    if config.gain_g == 0 or not isinstance(config.state, ColoredNoiseParams) or config.state.p != 0:
        return
    th = config.state.theta
    psi = qs.qubit_state(["A", "B"], [0, math.cos(th), math.sin(th), 0])
    cfg_a = SplitterConfig(gain_g=config.gain_g)
    cfg_b = SplitterConfig(gain_g=config.gain_g, input_mode="B", signal_mode="3", flag_mode="4")
    target = qs.relabel(psi, {"A": "1", "B": "3"})
    for oa in (FlagResult.PI_PLUS, FlagResult.PI_MINUS):
        for ob in (FlagResult.PI_PLUS, FlagResult.PI_MINUS):
            out = precertify_pair(psi, cfg_a, cfg_b, (oa, ob), apply_correction=True)
            if abs(qs.fidelity(out.conditional_state, target) - 1) > 1e-10:
                raise InvariantViolation(f"heralded state not preserved for flags {oa}, {ob}")


def run(config: RunConfig, records_path=None, workers: int = 1) -> RunSummary:
    """Simulate ``config.n_pairs`` source pairs; deterministic for a fixed seed."""
    _verify_heralding(config)
    q = born_table(config.heralded_density(), config.scenario)  # [a, b, x, y]
    probs = np.transpose(q, (2, 3, 0, 1)).reshape(2, 2, 4)
    if np.any(probs < -1e-12) or np.max(np.abs(probs.sum(axis=2) - 1)) > 1e-10:
        raise InvariantViolation("Born table of the heralded state is not a distribution")
    probs = np.clip(probs, 0.0, None)
    probs /= probs.sum(axis=2, keepdims=True)

    size = config.chunk_size
    n_chunks = -(-config.n_pairs // size)
    jobs = [(c, c * size, min(size, config.n_pairs - c * size)) for c in range(n_chunks)]
    keep = records_path is not None

    def work(job):
        return _simulate_chunk(config, probs, *job, keep_records=keep)

    if workers > 1 and config.dead_time == 0:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(j) for j in jobs]

    if keep:
        _write_records(records_path, results)
    n_her = sum(r.heralded for r in results)
    duration = config.n_pairs / config.rate_params.R if config.rate_params.R > 0 else math.inf
    expected = heralded_rate(config.rate_params).heralded_rate
    if config.pi_minus_policy == PiMinusPolicy.DISCARD:
        expected /= 4
    return RunSummary(
        n_pairs=config.n_pairs,
        n_heralded=n_her,
        duration_s=duration,
        heralded_rate_hz=n_her / duration if duration > 0 else 0.0,
        expected_heralded_rate_hz=expected,
        tes_clicks=sum(r.tes for r in results),
        counts=sum(r.counts for r in results),
        settings_all=sum(r.settings_all for r in results),
        flag_clicks=sum(r.flags for r in results),
        pi_minus_heralds=sum(r.pi_minus for r in results),
    )


def _write_records(path, results: list[_ChunkResult]) -> None:
    labels = ("+", "-", "0")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "side", "split", "flag", "x", "y", "a", "b"])
        for r in results:
            rec = r.records
            for i in range(r.n):
                for s, side in enumerate("AB"):
                    flag = ("+" if rec["pi_plus"][s, i] else "-") if rec["flag"][s, i] else "none"
                    w.writerow([int(rec["trial"][i]), side, int(rec["split"][s, i]), flag,
                                int(rec["x"][i]), int(rec["y"][i]),
                                labels[rec["a"][i]], labels[rec["b"][i]]])


# ---------------------------------------------------------------- CHSH estimates

@dataclass(frozen=True)
class ChshEstimate:
    S: float
    stderr: float
    fair_S: float
    fair_stderr: float
    policy: str


def _chsh_from_counts(counts: np.ndarray, va: np.ndarray, vb: np.ndarray) -> tuple[float, float]:
    sign = np.array([[1, 1], [1, -1]])
    s, var = 0.0, 0.0
    prod = np.outer(va, vb)
    for x in range(2):
        for y in range(2):
            c = counts[:, :, x, y]
            n = c.sum()
            if n == 0:
                raise ValueError(f"empty setting block ({x}, {y})")
            e = (c * prod).sum() / n
            e2 = (c * prod ** 2).sum() / n
            s += sign[x, y] * e
            var += max(e2 - e * e, 0.0) / n
    return float(s), math.sqrt(var)


def chsh_with_noclick(summary: RunSummary | np.ndarray,
                      policy: NoClickPolicy = NoClickPolicy.BIN_TO_MINUS) -> ChshEstimate:
    """CHSH from heralded counts with the no-click outcome handled per ``policy``.

    Also returns the fair-sampling value (both detectors clicked) for contrast.
    Standard errors follow from multinomial statistics in each setting block.
    """
    counts = summary.counts if isinstance(summary, RunSummary) else np.asarray(summary)
    policy = NoClickPolicy(policy)
    nc = -1.0 if policy == NoClickPolicy.BIN_TO_MINUS else 0.0
    v = np.array([1.0, -1.0, nc])
    s, err = _chsh_from_counts(counts, v, v)
    cc = np.zeros_like(counts)
    cc[:2, :2] = counts[:2, :2]
    fs, ferr = _chsh_from_counts(cc, v, v)
    return ChshEstimate(s, err, fs, ferr, policy.value)


# ---------------------------------------------------------------- loss independence

@dataclass(frozen=True)
class LossRow:
    eta_t: float
    n_heralded: int
    expected_heralded: float
    conditional_efficiency: tuple[tuple[float, float], ...]
    underpowered: bool


@dataclass(frozen=True)
class LossIndependenceResult:
    rows: tuple[LossRow, ...]
    efficiency_zscores: dict = field(default_factory=dict)
    ratio_zscores: dict = field(default_factory=dict)
    sigma: float = 3.0

    @property
    def efficiency_constant(self) -> bool:
        return all(abs(z) <= self.sigma for z in self.efficiency_zscores.values())

    @property
    def counts_scale(self) -> bool:
        return all(abs(z) <= self.sigma for z in self.ratio_zscores.values())

    @property
    def consistent(self) -> bool:
        return self.efficiency_constant and self.counts_scale

    def to_rows(self) -> list[dict]:
        out = []
        for r in self.rows:
            (ea, sa), (eb, sb) = r.conditional_efficiency
            out.append({"eta_t": r.eta_t, "n_heralded": r.n_heralded,
                        "expected_heralded": r.expected_heralded,
                        "cond_eff_a": ea, "cond_eff_a_err": sa,
                        "cond_eff_b": eb, "cond_eff_b_err": sb,
                        "underpowered": r.underpowered})
        return out


def loss_independence_experiment(config: RunConfig, eta_t_values: Sequence[float],
                                 min_heralds: int = 100, sigma: float = 3.0,
                                 workers: int = 1) -> LossIndependenceResult:
    """Rerun ``config`` at each transmittance with the same seed (common random numbers).

    Conditional TES efficiencies are compared pairwise with z-tests; herald
    counts are compared with the ``eta_t^2`` scaling relative to the largest
    transmittance.  Rows with fewer than ``min_heralds`` heralds are flagged
    and left out of both tests.
    """
    if len(eta_t_values) < 2:
        raise ValueError("need at least two transmittance values")
    rows = []
    for eta_t in eta_t_values:
        cfg = config.with_eta_t(eta_t)
        s = run(cfg, workers=workers)
        rows.append(LossRow(eta_t, s.n_heralded, cfg.n_pairs * cfg.rate_params.herald_probability,
                            tuple(s.conditional_tes_efficiency), s.n_heralded < min_heralds))
    powered = [r for r in rows if not r.underpowered]
    eff_z = {}
    for i, r1 in enumerate(powered):
        for r2 in powered[i + 1:]:
            for side in range(2):
                (p1, e1), (p2, e2) = r1.conditional_efficiency[side], r2.conditional_efficiency[side]
                se = math.hypot(e1, e2)
                eff_z[(r1.eta_t, r2.eta_t, "AB"[side])] = 0.0 if se == 0 else (p1 - p2) / se
    ratio_z = {}
    if powered:
        ref = max(powered, key=lambda r: r.eta_t)
        for r in powered:
            if r is ref:
                continue
            # heralds at lower eta_t are a binomial thinning of those at eta_ref
            r0 = (r.eta_t / ref.eta_t) ** 2
            sd = math.sqrt(ref.n_heralded * r0 * (1 - r0))
            ratio_z[(r.eta_t, ref.eta_t)] = (r.n_heralded - ref.n_heralded * r0) / sd if sd else 0.0
    return LossIndependenceResult(tuple(rows), eff_z, ratio_z, sigma)
