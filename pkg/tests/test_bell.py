import math

import numpy as np
import pytest

from precert_bell import qstate as qs
from precert_bell.bell import (TSIRELSON_ANGLES, BehaviorTable, BellScenario, NoClickPolicy,
                               behavior_from_state, binned_chsh_at, chsh_max, chsh_value,
                               correlation_tensor, critical_efficiency, fair_sampling_chsh,
                               is_monotone, lhv_membership, local_vertices, maximally_entangled,
                               optimize_threshold, threshold_curve)
from precert_bell.optics import colored_noise_matrix


def _random_case(rng):
    psi = qs.random_state(qs.QubitRegister(("A", "B")), rng)
    angles = rng.uniform(0, math.pi, 4)
    eta = rng.uniform(0.5, 1.0)
    return psi.density(), angles, eta


def test_tsirelson_value():
    beh = behavior_from_state(maximally_entangled(), BellScenario.from_angles(TSIRELSON_ANGLES))
    assert chsh_value(beh) == pytest.approx(2 * math.sqrt(2), abs=1e-12)
    assert fair_sampling_chsh(beh) == pytest.approx(2 * math.sqrt(2), abs=1e-12)


def test_behavior_is_normalized_and_nonsignaling():
    rng = np.random.default_rng(11)
    for _ in range(20):
        rho, angles, eta = _random_case(rng)
        beh = behavior_from_state(rho, BellScenario.from_angles(angles, eta)).check()
        p = beh.p
        assert np.allclose(p.sum(axis=(0, 1)), 1, atol=1e-10)
        pa = p.sum(axis=1)  # [a, x, y]
        assert np.allclose(pa[:, :, 0], pa[:, :, 1], atol=1e-10)
        pb = p.sum(axis=0)  # [b, x, y]
        assert np.allclose(pb[:, 0, :], pb[:, 1, :], atol=1e-10)


def test_signaling_behavior_rejected():
    p = np.zeros((3, 3, 2, 2))
    for x in range(2):
        for y in range(2):
            p[y, 0, x, y] = 1.0  # Alice's outcome depends on Bob's setting
    with pytest.raises(ValueError):
        BehaviorTable(p).check()


def test_vertices_are_local():
    verts, _ = local_vertices()
    assert verts.shape == (81, 36)
    for v in verts[::10]:
        beh = BehaviorTable(v.reshape(3, 3, 2, 2))
        assert lhv_membership(beh).feasible
        assert chsh_max(beh) <= 2 + 1e-12


def test_infeasible_certificate_is_a_bell_inequality():
    beh = behavior_from_state(maximally_entangled(), BellScenario.from_angles(TSIRELSON_ANGLES))
    cert = lhv_membership(beh)
    assert not cert.feasible and cert.violation > 0
    verts, _ = local_vertices()
    assert (verts @ cert.functional.ravel()).max() <= cert.local_bound + 1e-9


def test_critical_efficiency_maximally_entangled():
    eta = critical_efficiency(maximally_entangled(), TSIRELSON_ANGLES)
    assert eta == pytest.approx(2 * (math.sqrt(2) - 1), abs=1e-5)
    assert critical_efficiency(maximally_entangled(), TSIRELSON_ANGLES, oracle="lp") == \
        pytest.approx(eta, abs=1e-5)


def test_noclick_policy_three_outcome_has_lower_value():
    scen = BellScenario.from_angles(TSIRELSON_ANGLES, eta=0.9)
    beh = behavior_from_state(maximally_entangled(), scen)
    assert chsh_value(beh, NoClickPolicy.KEEP_THREE_OUTCOME) == \
        pytest.approx(0.81 * 2 * math.sqrt(2), abs=1e-12)


def test_analytic_binned_chsh_matches_full_behavior():
    rng = np.random.default_rng(5)
    for _ in range(10):
        rho, angles, eta = _random_case(rng)
        beh = behavior_from_state(rho, BellScenario.from_angles(angles, eta))
        assert binned_chsh_at(correlation_tensor(rho.matrix), angles, eta) == \
            pytest.approx(chsh_value(beh), abs=1e-10)


def test_product_state_never_violates():
    m = colored_noise_matrix(0.0, 0.0)
    assert critical_efficiency(m, TSIRELSON_ANGLES) is None


@pytest.mark.slow
def test_threshold_curve_examples():
    curve = threshold_curve([0.0, 0.01, 0.02, 0.04], restarts=12)
    assert is_monotone(curve)
    assert curve[0].eta_star == pytest.approx(2 / 3, abs=2e-3)
    assert curve[0].eta_bisection == pytest.approx(curve[0].eta_star, abs=1e-4)
    assert optimize_threshold(1.0, restarts=6).eta_star is None
