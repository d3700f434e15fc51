import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from precert_bell import qstate as qs


def test_register_dimension_and_encoding():
    reg = qs.FockRegister.for_modes(["A", "1", "2"], cutoff=1)
    assert reg.dimension == 4 ** 3
    assert reg.mode_ids == ("1", "2", "A")
    occ = (1, 0, 0, 1, 1, 1)
    assert reg.decode(reg.encode(occ)) == occ


def test_merge_rejects_collisions():
    a = qs.FockRegister.for_modes(["A"])
    with pytest.raises(qs.LabelCollisionError):
        a.merged(qs.FockRegister.for_modes(["A"]))


def test_qubit_state_is_canonically_ordered():
    psi = qs.qubit_state(["B", "A"], [0, 1, 0, 0])  # B=H, A=V
    assert psi.register.mode_ids == ("A", "B")
    assert np.allclose(psi.amplitudes, [0, 0, 1, 0])


def test_partial_trace_of_bell_state_is_maximally_mixed():
    psi = qs.qubit_state(["A", "B"], np.array([0, 1, 1, 0]) / math.sqrt(2))
    red = qs.partial_trace(psi, ["A"])
    assert np.allclose(red.matrix, np.eye(2) / 2, atol=1e-12)


def test_projection_probability_and_zero_branch():
    psi = qs.qubit_state(["A", "B"], [0, 0.6, 0.8, 0])
    h = np.array([1, 0], dtype=complex)
    post, p = qs.project(psi, "A", h)
    assert p == pytest.approx(0.36, abs=1e-12)
    assert np.allclose(post.amplitudes, [0, 1])
    prod = qs.qubit_state(["A", "B"], [0, 1, 0, 0])
    post, p = qs.project(prod, "A", np.array([0, 1], dtype=complex))
    assert post is None and p == pytest.approx(0.0)


def test_unitarity_and_hermiticity_checks():
    rng = np.random.default_rng(0)
    h = qs.random_hermitian(8, rng)
    u = qs.unitary_from_generator(h, 0.7)
    assert np.max(np.abs(u @ u.conj().T - np.eye(8))) <= 1e-12
    with pytest.raises(ValueError):
        qs.unitary_from_generator(h + 1j * np.eye(8), 0.1)


def test_density_matrix_validation():
    rho = qs.DensityMatrix(qs.QubitRegister(("A",)), np.diag([1.2, -0.2]))
    with pytest.raises(ValueError):
        rho.validate()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(-3, 3))
def test_evolution_preserves_norm_and_purity(seed, t):
    rng = np.random.default_rng(seed)
    reg = qs.QubitRegister(("A", "B"))
    psi = qs.random_state(reg, rng)
    out = qs.evolve(psi, qs.random_hermitian(4, rng), t)
    assert out.norm == pytest.approx(1.0, abs=1e-10)
    rho = qs.evolve(psi.density(), qs.random_hermitian(4, rng), t)
    assert np.trace(rho.matrix @ rho.matrix).real == pytest.approx(1.0, abs=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_fidelity_pure_vs_mixed_paths_agree(seed):
    rng = np.random.default_rng(seed)
    reg = qs.QubitRegister(("A", "B"))
    a, b = qs.random_state(reg, rng), qs.random_state(reg, rng)
    f_pure = qs.fidelity(a, b)
    f_mixed = qs.fidelity(a.density(), b.density())
    assert f_pure == pytest.approx(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2, abs=1e-10)
    assert f_mixed == pytest.approx(f_pure, abs=1e-6)


def test_qubit_fock_round_trip():
    psi = qs.qubit_state(["A", "B"], np.array([0.1, 0.7, 0.7, 0.1]) / math.sqrt(1.0))
    psi = psi.normalized()
    back = qs.to_qubits(qs.from_qubits(psi, cutoff=1))
    assert qs.fidelity(back, psi) == pytest.approx(1.0, abs=1e-12)
