import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_stable
from kooprep import linear_analysis as la
from kooprep.errors import DomainError


def test_koopman_recursion():
    Cs = la.koopman_recursion(la.LinearSystem(np.diag([0.5, 2.0]), np.eye(2)), 2)
    np.testing.assert_array_equal(Cs[1], np.diag([0.5, 2.0]))
    np.testing.assert_array_equal(Cs[2], np.diag([0.25, 4.0]))
    Cs = la.koopman_recursion(la.LinearSystem(np.eye(2), [[1.0, 2.0]]), 3)
    assert all(np.array_equal(C, [[1.0, 2.0]]) for C in Cs)
    Cs = la.koopman_recursion(la.LinearSystem([[0.3, 1.0], [0.0, 0.2]], np.zeros((1, 2))), 3)
    assert all(not C.any() for C in Cs)


def test_dual_spectrum_examples():
    rep = la.dual_spectrum_check(la.LinearSystem(np.diag([0.5, 0.25]), np.ones((1, 2))))
    np.testing.assert_allclose(np.sort(rep.operator_eigenvalues.real), [0.25, 0.5])
    rep = la.dual_spectrum_check(la.LinearSystem(np.zeros((2, 2)), np.ones((2, 2))))
    np.testing.assert_allclose(rep.operator_eigenvalues, 0)
    th = np.pi / 3
    A = 0.9 * np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    rep = la.dual_spectrum_check(la.LinearSystem(A, np.ones((2, 2))))
    assert rep.max_mismatch <= 1e-12
    found = rep.operator_eigenvalues
    assert np.sum(np.abs(found - 0.9 * np.exp(1j * th)) < 1e-12) == 2
    assert np.sum(np.abs(found - 0.9 * np.exp(-1j * th)) < 1e-12) == 2


def test_right_multiplication_is_kron():
    A = np.arange(9.0).reshape(3, 3)
    op = la.right_multiplication_operator(A, 2)
    np.testing.assert_array_equal(op, np.kron(np.eye(2), A.T))


def test_observability_grammian_scalar():
    assert la.observability_grammian(la.LinearSystem([[0.5]], [[1.0]]))[0, 0] == pytest.approx(4 / 3, abs=1e-12)
    assert la.observability_grammian(la.LinearSystem([[0.5]], [[2.0]]))[0, 0] == pytest.approx(16 / 3, abs=1e-12)
    assert not la.observability_grammian(la.LinearSystem([[0.5]], [[0.0]])).any()
    with pytest.raises(DomainError):
        la.observability_grammian(la.LinearSystem([[1.5]], [[1.0]]))


def test_koopman_grammian_scalar():
    sys_ = la.LinearSystem([[0.5]], [[1.0]])
    assert la.koopman_grammian(sys_, x0=[1.0])[0, 0] == pytest.approx(4 / 3, abs=1e-12)
    assert la.koopman_grammian(sys_, x0=[0.0])[0, 0] == 0
    assert la.koopman_grammian(sys_, R=[[1.0]])[0, 0] == pytest.approx(4 / 3, abs=1e-12)
    with pytest.raises(DomainError):
        la.koopman_grammian(la.LinearSystem(np.eye(2) * 0.5, np.eye(2)), R=np.diag([1.0, -1.0]))
    with pytest.raises(DomainError):
        la.koopman_grammian(la.LinearSystem([[1.0]], [[1.0]]), x0=[1.0])


def test_lyapunov_matches_scipy(rng):
    from scipy.linalg import solve_discrete_lyapunov as ref

    for n in (1, 3, 6):
        A = random_stable(rng, n)
        Q = rng.standard_normal((n, n))
        Q = Q @ Q.T
        np.testing.assert_allclose(la.solve_discrete_lyapunov(A, Q), ref(A, Q), rtol=1e-9, atol=1e-12)


def test_energy_identity_examples(rng):
    rep = la.energy_identity(la.LinearSystem([[0.5]], [[1.0]]), [1.0])
    for v in (rep.lhs, rep.via_W, rep.via_W_K):
        assert v == pytest.approx(4 / 3, abs=1e-10)
    rep = la.energy_identity(la.LinearSystem([[0.5]], [[1.0]]), [0.0])
    assert rep.lhs == rep.via_W == rep.via_W_K == 0
    sys_ = la.LinearSystem(random_stable(rng, 4), rng.standard_normal((2, 4)))
    x0 = rng.standard_normal(4)
    rep = la.energy_identity(sys_, x0)
    assert rep.max_discrepancy <= 1e-9 * rep.lhs
    brute = sum(np.sum((sys_.C @ np.linalg.matrix_power(sys_.A, t) @ x0) ** 2) for t in range(10_000))
    assert rep.lhs == pytest.approx(brute, rel=1e-9)


def test_energy_identity_finite_horizon_unstable():
    sys_ = la.LinearSystem([[1.2, 0.1], [0.0, 0.3]], [[1.0, 1.0]])
    rep = la.energy_identity(sys_, [1.0, -1.0], horizon=15)
    assert rep.max_discrepancy <= 1e-9 * rep.lhs
    assert rep.terms == 15
    with pytest.raises(DomainError):
        la.energy_identity(sys_, [1.0, -1.0])


def test_optimal_outputs_examples():
    row = la.optimal_outputs(np.diag([0.9, 0.1]), np.eye(2), 1)
    np.testing.assert_allclose(np.abs(row), [[1, 0]], atol=1e-12)
    np.testing.assert_allclose(la.optimal_outputs(np.zeros((3, 3)), np.eye(3), 1), [[1, 0, 0]])
    full = la.optimal_outputs(np.diag([0.5, 0.2, 0.7]), None, 3)
    np.testing.assert_allclose(full @ full.T, np.eye(3), atol=1e-12)
    with pytest.raises(DomainError):
        la.optimal_outputs(np.eye(2) * 0.5, None, 3)


def test_optimal_outputs_beats_random_rows(rng):
    A = random_stable(rng, 4)
    R = rng.standard_normal((4, 4))
    R = R @ R.T
    c = la.optimal_outputs(A, R, 1)[0]
    WK = la.koopman_grammian(la.LinearSystem(A, np.eye(4)), R=R)
    best = c @ WK @ c
    rows = rng.standard_normal((10_000, 4))
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    energies = np.einsum("ij,jk,ik->i", rows, WK, rows)
    assert energies.max() <= best + 1e-10


def test_nonnormality_note():
    note = la.grammian_nonnormality_note(la.LinearSystem(np.diag([0.7, 0.2]), np.eye(2)))
    assert note.angle_W_A <= 1e-8
    note = la.grammian_nonnormality_note(la.LinearSystem([[0.5, 10.0], [0.0, 0.4]], np.eye(2)))
    assert note.angle_W_A > 0.1
    assert la.grammian_nonnormality_note(la.LinearSystem([[0.3]], [[1.0]])).angle_W_A == 0


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_dual_spectrum_property(n, m, seed):
    rng = np.random.default_rng(seed)
    rep = la.dual_spectrum_check(la.LinearSystem(rng.standard_normal((n, n)), np.ones((m, n))))
    assert rep.max_mismatch <= 1e-9 * max(1.0, np.abs(rep.expected_eigenvalues).max())
