import numpy as np
import pytest

from kooprep import dynamics as dyn
from kooprep import koopman as kp
from kooprep.errors import ConditioningError, DomainError, UnsupportedError
from kooprep.observables import Fourier, Linear, Monomials, ObservableVector, identity_observable


def half_map():
    return dyn.linear([[0.5]], discrete=True)


def test_exact_closed_dictionary():
    K = kp.koopman_exact(half_map(), Monomials(1, 2), t=1)
    np.testing.assert_allclose(K.matrix, np.diag([1, 0.5, 0.25]), atol=1e-12)
    assert K.residual <= 1e-12


def test_exact_identity_map():
    ident = dyn.linear(np.eye(2), discrete=True)
    K = kp.koopman_exact(ident, Monomials(2, 2), t=1)
    np.testing.assert_allclose(K.matrix, np.eye(6), atol=1e-12)


def test_exact_unclosed_dictionary_has_residual():
    square = dyn.DynamicalSystem(dyn.Kind.DISCRETE, 1, lambda x: x**2, name="square")
    samples = np.random.default_rng(0).uniform(-1, 1, (200, 1))
    K = kp.koopman_exact(square, Monomials(1, 2), t=1, samples=samples)
    assert K.residual > 1e-3
    # psi = x maps to x^2, which is in the span
    np.testing.assert_allclose(K.matrix[:, 1], [0, 0, 1], atol=1e-12)


def test_exact_rank_deficient_samples():
    with pytest.raises(ConditioningError):
        kp.koopman_exact(half_map(), Monomials(1, 3), samples=np.array([[0.1], [0.2]]))


def test_edmd_matches_exact():
    traj = dyn.simulate(half_map(), 1.0, 50)
    K = kp.edmd(traj, Monomials(1, 2))
    np.testing.assert_allclose(K.matrix, np.diag([1, 0.5, 0.25]), atol=1e-8)


def test_edmd_linear_2d(rng):
    A = np.array([[0.9, 0.1], [0.0, 0.8]])
    sys_ = dyn.linear(A, discrete=True)
    trajs = [dyn.simulate(sys_, rng.uniform(-1, 1, 2), 10) for _ in range(6)]
    K = kp.edmd(trajs, Linear(2))
    lam = kp.spectrum(K).eigenvalues
    np.testing.assert_allclose(np.sort(lam.real), [0.8, 0.9, 1.0], atol=1e-8)
    np.testing.assert_allclose(lam.imag, 0, atol=1e-8)


def test_edmd_single_identity_pair():
    x = np.array([[0.3, -0.4]])
    d = Linear(2)
    K = kp.edmd((x, x), d, rank_tol=1e-6)
    psi = d.evaluate(x)
    np.testing.assert_allclose(psi @ K.matrix, psi, atol=1e-12)


def test_edmd_errors():
    with pytest.raises(DomainError):
        kp.edmd([], Linear(1))
    x = np.full((5, 1), 0.3)
    with pytest.raises(ConditioningError):
        kp.edmd((x, 0.5 * x), Linear(1))


def test_generator_linear_decay():
    K = kp.generator_matrix(dyn.linear([[-1.0]]), Monomials(1, 2))
    np.testing.assert_allclose(K.matrix, np.diag([0, -1, -2]), atol=1e-10)
    assert K.residual <= 1e-10


def test_generator_zero_field():
    zero = dyn.linear(np.zeros((2, 2)))
    K = kp.generator_matrix(zero, Monomials(2, 2))
    np.testing.assert_allclose(K.matrix, 0, atol=1e-12)


def test_generator_constant_advection_fourier():
    K = kp.generator_matrix(dyn.catalog("constant_advection", c=1.0), Fourier(1, 1))
    np.testing.assert_allclose(K.matrix + K.matrix.T, 0, atol=1e-10)
    lam = np.linalg.eigvals(K.matrix)
    np.testing.assert_allclose(lam.real, 0, atol=1e-10)
    np.testing.assert_allclose(np.sort(lam.imag), [-1, 0, 1], atol=1e-10)


def test_generator_rejects_maps():
    with pytest.raises(UnsupportedError):
        kp.generator_matrix(half_map(), Monomials(1, 2))


def test_spectrum_examples():
    spec = kp.spectrum(kp.KoopmanMatrix(None, np.diag([0.25, 1, 0.5])))
    np.testing.assert_allclose(spec.eigenvalues, [1, 0.5, 0.25])
    spec = kp.spectrum(kp.KoopmanMatrix(None, np.diag([0.0, -1, -2])))
    np.testing.assert_allclose(spec.eigenvalues, [-2, -1, 0])
    spec = kp.spectrum(kp.KoopmanMatrix(None, [[0.0, -1.0], [1.0, 0.0]]))
    np.testing.assert_allclose(spec.eigenvalues, [1j, -1j], atol=1e-14)
    assert not spec.is_defective


def test_spectrum_normalization_and_defect():
    M = np.array([[2.0, 1.0, 0.0], [0.5, 1.0, 0.0], [0.3, 0.0, -0.5]])
    spec = kp.spectrum(kp.KoopmanMatrix(None, M))
    V = spec.eigenvectors
    np.testing.assert_allclose(np.linalg.norm(V, axis=0), 1, atol=1e-12)
    np.testing.assert_allclose(M @ V, V * spec.eigenvalues, atol=1e-12)
    for k in range(3):
        first = V[np.flatnonzero(np.abs(V[:, k]) > 1e-12)[0], k]
        assert first.real > 0 and abs(first.imag) < 1e-12
    jordan = kp.spectrum(kp.KoopmanMatrix(None, [[1.0, 1.0], [0.0, 1.0]]))
    assert jordan.is_defective


def test_propagate_observable():
    K = kp.KoopmanMatrix(Monomials(1, 2), np.diag([1, 0.5, 0.25]))
    G = ObservableVector(Monomials(1, 2), [0.0, 1.0, 0.0])
    seq = kp.propagate_observable(K, G, 4)
    for t, Gt in enumerate(seq):
        np.testing.assert_allclose(Gt.coefficients.ravel(), [0, 0.5**t, 0])
    same = kp.propagate_observable(kp.KoopmanMatrix(Monomials(1, 2), np.eye(3)), G, 5)
    assert all(np.array_equal(g.coefficients, G.coefficients) for g in same)


def test_propagated_identity_changes():
    d = Linear(2)
    K = kp.closed_form_linear([[0.9, 0.2], [-0.1, 0.7]], d, t=1)
    G = identity_observable(d)
    G1 = kp.propagate_observable(K, G, 1)[1]
    assert not np.allclose(G1.coefficients, G.coefficients)


def test_represent_examples(rng):
    d = Monomials(1, 2)
    G = ObservableVector(d, [0.0, 0.0, 1.0])
    rep = kp.represent(half_map(), d, G, 1.0, 3)
    np.testing.assert_allclose(rep.y_original.ravel(), [1, 0.25, 0.0625, 0.015625])
    assert rep.discrepancy <= 1e-12
    rep0 = kp.represent(half_map(), d, G, 0.7, 0)
    np.testing.assert_allclose(rep0.y_koopman.ravel(), [0.49])
    np.testing.assert_allclose(rep0.y_original.ravel(), [0.49])

    A = np.array([[0.9, 0.3], [-0.2, 0.8]])
    lin = dyn.linear(A, discrete=True)
    x0 = rng.uniform(-1, 1, 2)
    rep = kp.represent(lin, Linear(2), identity_observable(Linear(2)), x0, 20)
    assert rep.discrepancy <= 1e-10
    oracle = np.array([np.linalg.matrix_power(A, t) @ x0 for t in range(21)])
    np.testing.assert_allclose(rep.y_koopman, oracle, atol=1e-10)


def test_nonnormality():
    assert kp.nonnormality(np.diag([1.0, 0.3])) == 0
    assert kp.nonnormality([[0.0, 1.0], [0.0, 0.0]]) == pytest.approx(np.sqrt(2))
    assert kp.nonnormality([[0.0, -1.0], [1.0, 0.0]]) == pytest.approx(0.0, abs=1e-15)


def test_koopman_json_roundtrip(tmp_path):
    K = kp.koopman_exact(half_map(), Monomials(1, 2))
    path = tmp_path / "k.json"
    K.to_json(path)
    back = kp.KoopmanMatrix.from_json(path)
    np.testing.assert_array_equal(back.matrix, K.matrix)
    assert back.dictionary == K.dictionary and back.provenance == K.provenance
