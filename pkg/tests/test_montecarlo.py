import csv
import math

import numpy as np
import pytest

from precert_bell.bell import BellScenario, behavior_from_state, chsh_value, maximally_entangled
from precert_bell.montecarlo import (PiMinusPolicy, RunConfig, chsh_with_noclick,
                                     loss_independence_experiment, run)
from precert_bell.optics import ColoredNoiseParams, RateParams


def _cfg(**kw):
    base = dict(seed=7, n_pairs=200_000)
    base.update(kw)
    return RunConfig.build(**base)


def test_determinism_and_worker_independence():
    a = run(_cfg(eta_sspd=0.5, eta_k=0.9))
    b = run(_cfg(eta_sspd=0.5, eta_k=0.9), workers=3)
    assert np.array_equal(a.counts, b.counts) and a.n_heralded == b.n_heralded
    assert a.to_json() == b.to_json()
    c = run(_cfg(seed=8, eta_sspd=0.5, eta_k=0.9))
    assert not np.array_equal(a.counts, c.counts)


def test_no_flag_efficiency_no_heralds():
    s = run(_cfg(eta_sspd=0.0))
    assert s.n_heralded == 0 and s.heralded_rate_hz == 0


def test_ideal_run_reaches_tsirelson():
    s = run(_cfg(n_pairs=1_000_000, seed=42))
    est = chsh_with_noclick(s)
    assert abs(est.S - 2 * math.sqrt(2)) <= 3 * est.stderr
    assert est.S == est.fair_S  # every detector clicked


def test_heralded_correlations_match_analytic_behavior():
    cfg = _cfg(n_pairs=400_000, eta_sspd=0.7, eta_k=0.85,
               state=ColoredNoiseParams(0.4, 0.0))
    s = run(cfg)
    ref = behavior_from_state(cfg.heralded_density(), cfg.scenario).p
    for x in range(2):
        for y in range(2):
            block = s.counts[:, :, x, y]
            n = block.sum()
            phat = block / n
            sd = np.sqrt(ref[:, :, x, y] * (1 - ref[:, :, x, y]) / n)
            assert np.all(np.abs(phat - ref[:, :, x, y]) <= 3.5 * sd + 1e-12)


def test_setting_independence_of_heralding():
    s = run(_cfg(eta_sspd=0.4, eta_c=0.6))
    assert s.setting_independence_pvalue() > 1e-3


@pytest.mark.parametrize("kw", [
    dict(eta_sspd=0.5),
    dict(eta_c=0.3, eta_sspd=0.9),
    dict(gain_g=0.7, eta_sspd=0.8),
    dict(gain_g=1.0, eta_c=0.5, eta_t=0.8),
    dict(eta_sspd=0.6, pi_minus_policy=PiMinusPolicy.DISCARD),
])
def test_rate_consistency(kw):
    s = run(_cfg(**kw))
    assert abs(s.rate_zscore()) <= 3


def test_paper_parameters_rate():
    cfg = RunConfig.build(seed=3, n_pairs=10_000_000, gain_g=math.asin(math.sqrt(1e-3)),
                          eta_c=0.3, eta_sspd=0.1, eta_k=0.8)
    s = run(cfg)
    assert s.expected_heralded_rate_hz == pytest.approx(1.8e-2, rel=1e-9)
    assert abs(s.rate_zscore()) <= 3


def test_discard_policy_halves_each_side():
    ff = run(_cfg(eta_sspd=0.8))
    dc = run(_cfg(eta_sspd=0.8, pi_minus_policy=PiMinusPolicy.DISCARD))
    assert dc.expected_heralded_rate_hz == pytest.approx(ff.expected_heralded_rate_hz / 4)
    assert dc.n_heralded < ff.n_heralded
    assert dc.pi_minus_heralds == 0


def test_loss_independence_underpowered_branch():
    res = loss_independence_experiment(_cfg(n_pairs=50_000), [1.0, 0.0])
    assert res.rows[1].n_heralded == 0 and res.rows[1].underpowered
    assert res.efficiency_zscores == {}


def test_loss_independence_counts_scale():
    res = loss_independence_experiment(_cfg(n_pairs=300_000, eta_sspd=0.8, eta_k=0.8), [0.3, 0.05])
    assert res.consistent
    r_hi, r_lo = res.rows
    assert r_lo.n_heralded / r_hi.n_heralded == pytest.approx((0.05 / 0.3) ** 2, rel=0.3)


def test_chsh_below_threshold_is_local_but_fair_sampling_violates():
    s = run(_cfg(n_pairs=400_000, eta_k=0.5))
    est = chsh_with_noclick(s)
    assert est.S <= 2 and est.fair_S > 2


def test_empty_setting_block_raises():
    s = run(_cfg(n_pairs=1000))
    s.counts[:, :, 1, 1] = 0
    with pytest.raises(ValueError):
        chsh_with_noclick(s)


def test_config_validation():
    with pytest.raises(ValueError):
        _cfg(n_pairs=0)
    rp = RateParams(R=1e6, mu_C=0.5)
    with pytest.raises(ValueError):  # mu_C inconsistent with the gain
        RunConfig(seed=1, n_pairs=10, rate_params=rp, state=ColoredNoiseParams(0.5),
                  scenario=BellScenario.from_angles((0, 0, 0, 0)), gain_g=math.pi / 2)


def test_dead_time_reduces_flag_clicks():
    plain = run(_cfg(n_pairs=20_000))
    dead = run(_cfg(n_pairs=20_000, dead_time=120e-9))  # 50 ns between trials
    assert dead.flag_clicks[0] < plain.flag_clicks[0]
    assert dead.flag_clicks[0] == pytest.approx(20_000 / 3, rel=0.01)


def test_trial_records(tmp_path):
    path = tmp_path / "trials.csv"
    s = run(_cfg(n_pairs=500, eta_sspd=0.5, eta_k=0.7), records_path=path)
    rows = list(csv.DictReader(path.open()))
    assert len(rows) == 1000
    assert list(rows[0]) == ["trial", "side", "split", "flag", "x", "y", "a", "b"]
    for r in rows:
        assert r["side"] in ("A", "B")
        if r["split"] == "0":
            assert r["flag"] == "none"


def test_summary_matches_analytic_binned_chsh():
    cfg = _cfg(n_pairs=400_000, eta_k=0.9)
    est = chsh_with_noclick(run(cfg))
    analytic = chsh_value(behavior_from_state(maximally_entangled(), cfg.scenario))
    assert abs(est.S - analytic) <= 3.5 * est.stderr
