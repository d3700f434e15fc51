"""Causality constraints of the two-station experiment in 1+1 dimensions.

Stations sit at ``x = -D/2`` (Alice) and ``x = +D/2`` (Bob); the pair source
at ``x = source_offset``.  Photons travel at ``c``.  On each side the chain is
arrival = duplication -> flag detection (+ jitter) -> setting choice
(+ QRNG latency) = measurement start -> measurement end (+ TES resolution
+ electronics margin).  Jitters are worst-case additive delays.

Four constraints are checked; every margin is in seconds, positive = satisfied:

* ``C1`` one side's precertification (duplication and flag) is spacelike
  from the other side's setting choice;
* ``C2`` the flag is detected no later than the local setting choice;
* ``C3`` each setting choice is spacelike from the *other* side's duplication;
* ``C4`` each measurement ends before light from the other setting arrives.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .constants import PAPER_TIMING, SPEED_OF_LIGHT

C = SPEED_OF_LIGHT


class IntervalType(str, enum.Enum):
    SPACELIKE = "Spacelike"
    TIMELIKE = "Timelike"
    LIGHTLIKE = "Lightlike"


class EventLabel(str, enum.Enum):
    PAIR_EMISSION = "PairEmission"
    ARRIVAL_A = "ArrivalA"
    DUPLICATION_A = "DuplicationA"
    FLAG_DETECT_A = "FlagDetectA"
    SETTING_CHOICE_A = "SettingChoiceA"
    MEASURE_START_A = "MeasureStartA"
    MEASURE_END_A = "MeasureEndA"
    ARRIVAL_B = "ArrivalB"
    DUPLICATION_B = "DuplicationB"
    FLAG_DETECT_B = "FlagDetectB"
    SETTING_CHOICE_B = "SettingChoiceB"
    MEASURE_START_B = "MeasureStartB"
    MEASURE_END_B = "MeasureEndB"


SIDE_CHAIN = ("Arrival", "Duplication", "FlagDetect", "SettingChoice", "MeasureStart", "MeasureEnd")


@dataclass(frozen=True)
class SpacetimeEvent:
    label: EventLabel
    x: float
    t: float


@dataclass(frozen=True)
class TimingBudget:
    flag_jitter: float = 0.0
    qrng_latency: float = 0.0
    tes_resolution: float = 0.0
    electronics_margin: float = 0.0
    separation_D: float = 100.0
    source_position: float = 0.0  # offset from the midpoint
    propagation_delay_a: float | None = None  # overrides free-space arrival time
    propagation_delay_b: float | None = None

    def __post_init__(self):
        for name in ("flag_jitter", "qrng_latency", "tes_resolution", "electronics_margin"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.separation_D < 0:
            raise ValueError("separation_D must be nonnegative")
        if abs(self.source_position) > self.separation_D / 2:
            raise ValueError("source must lie between the stations")

    @classmethod
    def paper(cls, separation_D: float = 100.0) -> "TimingBudget":
        return cls(flag_jitter=PAPER_TIMING["flag_jitter_s"],
                   qrng_latency=PAPER_TIMING["qrng_latency_s"],
                   tes_resolution=PAPER_TIMING["tes_resolution_s"],
                   electronics_margin=PAPER_TIMING["electronics_margin_s"],
                   separation_D=separation_D)

    def with_separation(self, d: float) -> "TimingBudget":
        offset = max(-d / 2, min(d / 2, self.source_position))
        return TimingBudget(self.flag_jitter, self.qrng_latency, self.tes_resolution,
                            self.electronics_margin, d, offset,
                            self.propagation_delay_a, self.propagation_delay_b)

    def to_json(self) -> dict:
        return {
            "separation_m": self.separation_D,
            "source_offset_m": self.source_position,
            "flag_jitter_s": self.flag_jitter,
            "qrng_latency_s": self.qrng_latency,
            "tes_resolution_s": self.tes_resolution,
            "electronics_margin_s": self.electronics_margin,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "TimingBudget":
        return cls(flag_jitter=doc["flag_jitter_s"], qrng_latency=doc["qrng_latency_s"],
                   tes_resolution=doc["tes_resolution_s"],
                   electronics_margin=doc["electronics_margin_s"],
                   separation_D=doc["separation_m"], source_position=doc.get("source_offset_m", 0.0))


def interval_type(e1: SpacetimeEvent, e2: SpacetimeEvent, rel_tol: float = 1e-12) -> IntervalType:
    ct2 = (C * (e2.t - e1.t)) ** 2
    x2 = (e2.x - e1.x) ** 2
    s = ct2 - x2
    if abs(s) < rel_tol * max(ct2, x2) or (ct2 == 0 and x2 == 0):
        return IntervalType.LIGHTLIKE
    return IntervalType.TIMELIKE if s > 0 else IntervalType.SPACELIKE


def spacelike_margin(e1: SpacetimeEvent, e2: SpacetimeEvent) -> float:
    """``|dx|/c - |dt|``: positive iff the events are spacelike separated."""
    return abs(e2.x - e1.x) / C - abs(e2.t - e1.t)


def boost(event: SpacetimeEvent, beta: float) -> SpacetimeEvent:
    gamma = 1 / math.sqrt(1 - beta * beta)
    t = gamma * (event.t - beta * event.x / C)
    x = gamma * (event.x - beta * C * event.t)
    return SpacetimeEvent(event.label, x, t)


def build_events(budget: TimingBudget) -> dict[EventLabel, SpacetimeEvent]:
    """Worst-case event placement for the given timing budget."""
    d = budget.separation_D
    xs = budget.source_position
    events = {EventLabel.PAIR_EMISSION: SpacetimeEvent(EventLabel.PAIR_EMISSION, xs, 0.0)}
    for side, x_station, override in (("A", -d / 2, budget.propagation_delay_a),
                                      ("B", d / 2, budget.propagation_delay_b)):
        t = abs(x_station - xs) / C if override is None else override
        times = {"Arrival": t, "Duplication": t}
        times["FlagDetect"] = times["Duplication"] + budget.flag_jitter
        times["SettingChoice"] = times["FlagDetect"] + budget.qrng_latency
        times["MeasureStart"] = times["SettingChoice"]
        times["MeasureEnd"] = (times["MeasureStart"] + budget.tes_resolution
                               + budget.electronics_margin)
        for name in SIDE_CHAIN:
            label = EventLabel(name + side)
            events[label] = SpacetimeEvent(label, x_station, times[name])
    return events


def events_table(events: dict[EventLabel, SpacetimeEvent]) -> list[dict]:
    return [{"label": e.label.value, "x_m": e.x, "t_s": e.t} for e in events.values()]


@dataclass(frozen=True)
class ConstraintStatus:
    name: str
    margin: float
    satisfied: bool
    description: str = ""


@dataclass(frozen=True)
class CausalityReport:
    constraints: tuple[ConstraintStatus, ...]
    informational: dict = field(default_factory=dict)

    @property
    def overall(self) -> bool:
        return all(c.satisfied for c in self.constraints)

    def __getitem__(self, name: str) -> ConstraintStatus:
        for c in self.constraints:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_json(self) -> dict:
        return {
            "overall": self.overall,
            "constraints": {c.name: {"margin_s": c.margin, "satisfied": c.satisfied,
                                     "description": c.description} for c in self.constraints},
            "informational": self.informational,
        }


def check_constraints(events: dict[EventLabel, SpacetimeEvent]) -> CausalityReport:
    ev = {k.value: v for k, v in events.items()}
    other = {"A": "B", "B": "A"}
    c1, c2, c3, c4, same = [], [], [], [], []
    for s in ("A", "B"):
        o = other[s]
        setting_o = ev["SettingChoice" + o]
        c1.append(min(spacelike_margin(ev["Duplication" + s], setting_o),
                      spacelike_margin(ev["FlagDetect" + s], setting_o)))
        c2.append(ev["SettingChoice" + s].t - ev["FlagDetect" + s].t)
        c3.append(spacelike_margin(ev["SettingChoice" + s], ev["Duplication" + o]))
        light_arrival = setting_o.t + abs(setting_o.x - ev["MeasureEnd" + s].x) / C
        c4.append(light_arrival - ev["MeasureEnd" + s].t)
        same.append(spacelike_margin(ev["SettingChoice" + s], ev["Duplication" + s]))
    statuses = (
        ConstraintStatus("C1", min(c1), min(c1) > 0,
                         "precertification outside the light cone of the remote setting choice"),
        # non-strict: a zero QRNG latency is a limit case, not a causal violation
        ConstraintStatus("C2", min(c2), min(c2) >= 0,
                         "flag detected before the local setting is established"),
        ConstraintStatus("C3", min(c3), min(c3) > 0,
                         "setting choice outside the light cone of the remote duplication"),
        ConstraintStatus("C4", min(c4), min(c4) > 0,
                         "measurement ends before light from the remote setting arrives"),
    )
    info = {"C3_same_side_margin_s": min(same),
            "per_side_margins_s": {"C1": c1, "C2": c2, "C3": c3, "C4": c4}}
    return CausalityReport(statuses, info)


def check_budget(budget: TimingBudget) -> CausalityReport:
    return check_constraints(build_events(budget))


def min_separation(budget: TimingBudget, tol: float = 1e-3, d_max: float = 1e9) -> float:
    """Smallest separation satisfying every constraint, by bisection (to ``tol`` meters).

    Returns ``math.inf`` when no separation up to ``d_max`` works.
    """
    def ok(d):
        return check_budget(budget.with_separation(d)).overall

    hi = 1.0
    while not ok(hi):
        hi *= 2
        if hi > d_max:
            return math.inf
    lo = 0.0
    if ok(lo):
        return 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def scan_min_separation(budget: TimingBudget, d_lo: float, d_hi: float, step: float) -> float:
    """Brute-force linear scan: first grid separation where every constraint holds."""
    for d in np.arange(d_lo, d_hi + step, step):
        if check_budget(budget.with_separation(float(d))).overall:
            return float(d)
    return math.inf
