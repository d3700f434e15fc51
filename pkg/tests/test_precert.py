import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from precert_bell import qstate as qs
from precert_bell.precert import (PHASE_FLIP, EnergyMismatchWarning, FlagResult,
                                  PolarizationQubit, SplitterConfig, herald, precertify_pair,
                                  split, split_closed_form)

B_CFG = dict(input_mode="B", signal_mode="3", flag_mode="4")


def _branches(q, g):
    cfg = SplitterConfig(gain_g=g)
    return {o.flag_result: o for o in herald(split(q, cfg), cfg)}


def test_split_matches_closed_form_oracle():
    q = PolarizationQubit(0.6, 0.8j)
    for g in (0.0, 0.3, 1.0, math.pi / 2):
        cfg = SplitterConfig(gain_g=g)
        out = split(q, cfg, check=False)
        ref = split_closed_form(q, cfg)
        assert np.linalg.norm(out.amplitudes - ref.amplitudes) <= 1e-10


def test_gain_zero_never_heralds():
    br = _branches(PolarizationQubit(1, 0), 0.0)
    assert br[FlagResult.PI_PLUS].probability == pytest.approx(0.0, abs=1e-15)
    assert br[FlagResult.NO_SPLIT].probability == pytest.approx(1.0)


def test_gain_out_of_range_rejected():
    with pytest.raises(ValueError):
        SplitterConfig(gain_g=2.0)


def test_energy_mismatch_warning():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        SplitterConfig()  # nominal wavelengths are within tolerance
    with pytest.warns(EnergyMismatchWarning):
        SplitterConfig(lambda_in=800.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.05, math.pi / 2))
def test_heralded_fidelity_and_flag_ignorance(seed, g):
    q = PolarizationQubit.random(np.random.default_rng(seed))
    br = _branches(q, g)
    target = q.state("1")
    for res in (FlagResult.PI_PLUS, FlagResult.PI_MINUS):
        o = br[res]
        assert o.probability == pytest.approx(math.sin(g) ** 2 / 2, abs=1e-10)
        st_ = o.conditional_state
        if o.correction == "Z":
            st_ = qs.apply_operator(st_, PHASE_FLIP, ["1"])
        assert qs.fidelity(st_, target) == pytest.approx(1.0, abs=1e-10)


def test_pi_minus_without_correction_is_phase_flipped():
    q = PolarizationQubit(1 / math.sqrt(2), 1 / math.sqrt(2))
    o = _branches(q, math.pi / 2)[FlagResult.PI_MINUS]
    assert qs.fidelity(o.conditional_state, q.state("1")) == pytest.approx(0.0, abs=1e-10)


def test_two_sided_product_state():
    psi = qs.qubit_state(["A", "B"], [0, 1, 0, 0])  # |H>_A |V>_B
    o = precertify_pair(psi, SplitterConfig(), SplitterConfig(**B_CFG))
    target = qs.qubit_state(["1", "3"], [0, 1, 0, 0])
    assert qs.fidelity(o.conditional_state, target) == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("ga,gb", [(math.pi / 2, math.pi / 2), (0.4, 1.1)])
def test_two_sided_probability(ga, gb):
    psi = qs.qubit_state(["A", "B"], [0, math.cos(0.2), math.sin(0.2), 0])
    for oa in (FlagResult.PI_PLUS, FlagResult.PI_MINUS):
        for ob in (FlagResult.PI_PLUS, FlagResult.PI_MINUS):
            o = precertify_pair(psi, SplitterConfig(gain_g=ga), SplitterConfig(gain_g=gb, **B_CFG),
                                (oa, ob), apply_correction=True)
            assert o.probability == pytest.approx(math.sin(ga) ** 2 * math.sin(gb) ** 2 / 4,
                                                  abs=1e-10)
            target = qs.relabel(psi, {"A": "1", "B": "3"})
            assert qs.fidelity(o.conditional_state, target) == pytest.approx(1.0, abs=1e-10)
