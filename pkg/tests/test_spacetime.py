import json
import math
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from precert_bell.spacetime import (C, EventLabel, IntervalType, SpacetimeEvent, TimingBudget,
                                    boost, build_events, check_budget, events_table,
                                    interval_type, min_separation, scan_min_separation)

DATA = Path(__file__).parent / "data"


def test_interval_classification():
    o = SpacetimeEvent(EventLabel.PAIR_EMISSION, 0.0, 0.0)
    assert interval_type(o, SpacetimeEvent(EventLabel.ARRIVAL_A, 10.0, 0.0)) == IntervalType.SPACELIKE
    assert interval_type(o, SpacetimeEvent(EventLabel.ARRIVAL_A, 0.0, 1e-9)) == IntervalType.TIMELIKE
    assert interval_type(o, SpacetimeEvent(EventLabel.ARRIVAL_A, C * 1e-6, 1e-6)) == \
        IntervalType.LIGHTLIKE


@settings(max_examples=50, deadline=None)
@given(st.floats(-1e3, 1e3), st.floats(-1e-5, 1e-5), st.floats(-0.9, 0.9))
def test_interval_type_is_boost_invariant(x, t, beta):
    o = SpacetimeEvent(EventLabel.PAIR_EMISSION, 0.0, 0.0)
    e = SpacetimeEvent(EventLabel.ARRIVAL_A, x, t)
    s0 = (C * t) ** 2 - x ** 2
    if abs(s0) < 1e-6 * max((C * t) ** 2, x ** 2, 1e-30):
        return  # too close to the light cone for a meaningful comparison
    assert interval_type(o, e) == interval_type(boost(o, beta), boost(e, beta))


def test_events_match_golden_file():
    gold = json.loads((DATA / "spacetime_paper_events.json").read_text())
    budget = TimingBudget.from_json(gold["budget"])
    got = {e["label"]: e for e in events_table(build_events(budget))}
    for e in gold["events"]:
        assert got[e["label"]]["x_m"] == pytest.approx(e["x_m"], abs=1e-12)
        assert got[e["label"]]["t_s"] == pytest.approx(e["t_s"], rel=1e-12, abs=1e-20)


def test_zero_separation_violations():
    rep = check_budget(TimingBudget.paper(separation_D=0.0))
    assert not rep["C1"].satisfied and not rep["C3"].satisfied and not rep["C4"].satisfied
    assert rep["C2"].satisfied and not rep.overall


def test_zero_latency_budget_needs_only_positive_separation():
    # D = 0 puts all events at one point; any D > 0 suffices
    assert not check_budget(TimingBudget(separation_D=0.0)).overall
    assert check_budget(TimingBudget(separation_D=1e-6)).overall
    assert 0 < min_separation(TimingBudget()) <= 1e-3


def test_min_separation_closed_form():
    b = TimingBudget.paper()
    expected = C * max(b.flag_jitter + b.qrng_latency, b.tes_resolution + b.electronics_margin)
    assert min_separation(b, tol=1e-6) == pytest.approx(expected, abs=1e-5)


def test_min_separation_against_scan():
    b = TimingBudget.paper()
    d = min_separation(b)
    scan = scan_min_separation(b, math.floor(d) - 1, math.floor(d) + 2, 1e-3)
    assert abs(d - scan) <= 1e-3


def test_min_separation_scales_with_tes_resolution():
    base = TimingBudget(tes_resolution=100e-9)
    doubled = TimingBudget(tes_resolution=200e-9)
    assert min_separation(doubled, tol=1e-6) == pytest.approx(2 * min_separation(base, tol=1e-6),
                                                              abs=1e-5)
    # with the full budget the dependence is affine with slope c
    d1 = min_separation(TimingBudget.paper(), tol=1e-6)
    d2 = min_separation(TimingBudget(**{**_paper_kw(), "tes_resolution": 200e-9}), tol=1e-6)
    assert d2 - d1 == pytest.approx(C * 100e-9, abs=1e-5)


def test_source_offset_does_not_change_cross_party_margins_sign():
    rep = check_budget(TimingBudget(**{**_paper_kw(), "separation_D": 100.0,
                                       "source_position": 20.0}))
    assert rep.overall


def test_json_round_trip():
    b = TimingBudget.paper(separation_D=42.0)
    assert TimingBudget.from_json(json.loads(json.dumps(b.to_json()))) == b


def test_negative_latency_rejected():
    with pytest.raises(ValueError):
        TimingBudget(qrng_latency=-1e-9)


def _paper_kw():
    b = TimingBudget.paper()
    return dict(flag_jitter=b.flag_jitter, qrng_latency=b.qrng_latency,
                tes_resolution=b.tes_resolution, electronics_margin=b.electronics_margin)
