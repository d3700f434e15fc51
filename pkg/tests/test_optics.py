import math

import numpy as np
import pytest

from precert_bell import qstate as qs
from precert_bell.optics import (ColoredNoiseParams, DetectorModel, RateParams,
                                 colored_noise_state, conditional_tes_efficiency, detect,
                                 heralded_rate, loss_channel, paper_rate_envelope)


def test_rate_formula_examples():
    assert heralded_rate(RateParams(R=0, mu_C=0.5)).heralded_rate == 0
    p = RateParams(R=2e7, mu_C=1e-3, eta_c=0.3, eta_sspd=0.1)
    assert heralded_rate(p).heralded_rate == pytest.approx(1.8e-2, rel=1e-12)
    p = RateParams(R=2e7, mu_C=2e-4, eta_c=0.3, eta_sspd=0.1)
    assert heralded_rate(p).heralded_rate == pytest.approx(7.2e-4, rel=1e-12)


def test_paper_envelope_reports_mismatch():
    env = paper_rate_envelope()
    assert env["overlap"] and env["order_of_magnitude_agreement"]
    assert not env["exact_range_match"]


def test_loss_channel_on_single_photon():
    reg = qs.FockRegister.for_modes(["A"], cutoff=1)
    psi = qs.basis_state(reg, {("A", "H"): 1})
    out = loss_channel(psi, "A", 0.3)
    assert out.trace == pytest.approx(1.0, abs=1e-12)
    p_vac = abs(out.matrix[0, 0])
    assert p_vac == pytest.approx(0.7, abs=1e-12)
    assert np.allclose(loss_channel(psi, "A", 1.0).matrix, psi.density().matrix)


def test_loss_channel_two_photons_binomial():
    reg = qs.FockRegister.for_modes(["A"], cutoff=2)
    psi = qs.basis_state(reg, {("A", "H"): 2})
    out = loss_channel(psi, "A", 0.5)
    diag = np.real(np.diag(out.matrix))
    idx = {n: reg.encode((n, 0)) for n in range(3)}
    assert [diag[idx[n]] for n in range(3)] == pytest.approx([0.25, 0.5, 0.25], abs=1e-12)


def test_colored_noise_state_limits():
    pure = colored_noise_state(ColoredNoiseParams(0.3, 0.0)).validate()
    assert np.trace(pure.matrix @ pure.matrix).real == pytest.approx(1.0, abs=1e-12)
    mixed = colored_noise_state(ColoredNoiseParams(math.pi / 4, 1.0)).validate()
    assert np.allclose(mixed.matrix, np.diag([0, 0.5, 0.5, 0]))


def test_conditional_efficiency_independent_of_transmission():
    vals = [conditional_tes_efficiency(RateParams(R=1, mu_C=0.5, eta_t=t, eta_sspd=0.3, eta_k=0.8))
            for t in (1.0, 0.3, 0.05)]
    assert vals == pytest.approx([0.8] * 3, abs=1e-12)
    noisy = [conditional_tes_efficiency(RateParams(R=1, mu_C=0.5, eta_t=t, eta_sspd=0.3, eta_k=0.8),
                                        flag_dark_probability=1e-3) for t in (1.0, 0.05)]
    assert noisy[1] < noisy[0]


def test_detector_click_statistics():
    rng = np.random.default_rng(3)
    det = DetectorModel.sspd(efficiency=0.6, dark_count_rate=0.0)
    clicks = detect(np.ones(200_000, bool), det, rng)
    assert clicks.mean() == pytest.approx(0.6, abs=5 * math.sqrt(0.24 / 200_000))
    assert not detect(np.zeros(1000, bool), det, rng).any()
