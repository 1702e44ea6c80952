import math
import warnings

import numpy as np
import pytest

from kooprep import dynamics as dyn
from kooprep import transport as tr
from kooprep.errors import DimensionError, DomainError, SingularityError, SupportWarning
from kooprep.koopman import generator_matrix
from kooprep.observables import Fourier, Monomials


def decay():
    return dyn.linear([[-1.0]])


def grid1d(func, lo, hi, N):
    return tr.DensityGrid.from_function([[lo, hi]], (N,), func)


def test_pushforward_doubling():
    N = 400
    phi = grid1d(tr.indicator_density(0, 1), -1, 3, N)
    h = phi.spacing[0]
    out = tr.pushforward_map(phi, tr.affine_map([[2.0]]))
    x = out.points()[..., 0]
    inside = (x > h) & (x < 2 - h)
    np.testing.assert_allclose(out.values[inside], 0.5)
    assert np.all(out.values[(x < -h) | (x > 2 + h)] == 0)
    assert abs(out.total_mass - 1.0) <= 2 * h


def test_pushforward_identity_and_translation():
    phi = grid1d(tr.gaussian_density(0.0, 0.5), -6, 6, 600)
    same = tr.pushforward_map(phi, tr.affine_map([[1.0]]))
    np.testing.assert_allclose(same.values, phi.values, atol=1e-15)
    moved = tr.pushforward_map(phi, tr.affine_map([[1.0]], [1.0]))
    expect = tr.gaussian_density(1.0, 0.5)(moved.points())
    np.testing.assert_allclose(moved.values, expect, atol=1e-3)
    assert moved.total_mass == pytest.approx(phi.total_mass, abs=1e-6)


def test_pushforward_finite_difference_and_singular():
    phi = grid1d(tr.gaussian_density(0.0, 0.5), -6, 6, 300)
    m = tr.InvertibleMap(inverse=lambda x: 0.5 * np.asarray(x))
    out = tr.pushforward_map(phi, m)
    assert out.total_mass == pytest.approx(1.0, abs=1e-3)
    with pytest.raises(SingularityError):
        tr.pushforward_map(phi, tr.InvertibleMap(inverse=lambda x: 0 * np.asarray(x)))


def test_transport_flow_contraction():
    phi = grid1d(tr.gaussian_density(0.0, 0.5), -4, 4, 512)
    out = tr.transport_flow(phi, decay(), math.log(2))
    assert out.total_mass == pytest.approx(phi.total_mass, abs=1e-4)
    expect = 2 * tr.gaussian_density(0.0, 0.5)(2 * out.points())
    assert np.max(np.abs(out.values - expect)) < 2e-3
    same = tr.transport_flow(phi, decay(), 0.0)
    np.testing.assert_array_equal(same.values, phi.values)


@pytest.mark.slow
@pytest.mark.filterwarnings("ignore::kooprep.errors.SupportWarning")
def test_rotation_period_returns():
    phi = tr.DensityGrid.from_function([[-4, 4], [-4, 4]], (256, 256), tr.gaussian_density([1.0, 0.0], 0.5))
    out = tr.transport_flow(phi, dyn.catalog("rotation"), 2 * math.pi, dt=0.01)
    assert phi.with_values(np.abs(out.values - phi.values)).total_mass <= 1e-2


def test_transport_generator_examples():
    d = Fourier(1, 1)
    adv = dyn.catalog("constant_advection", c=1.0)
    T = tr.transport_generator_matrix(adv, d).matrix
    K = generator_matrix(adv, d).matrix
    assert np.linalg.norm(T + K) <= 1e-10 * np.linalg.norm(K)
    assert np.linalg.norm(T - K.T) <= 1e-8 * np.linalg.norm(K)
    Z = tr.transport_generator_matrix(dyn.linear(np.zeros((1, 1))), Monomials(1, 2)).matrix
    np.testing.assert_allclose(Z, 0, atol=1e-14)
    D = tr.transport_generator_matrix(decay(), Monomials(1, 2))
    np.testing.assert_allclose(D.matrix, np.diag([1, 2, 3]), atol=1e-10)
    assert D.residual <= 1e-10


def test_fourier_generators_skew_2d():
    d = Fourier(2, 2)
    adv = dyn.catalog("constant_advection", c=[1.0, -0.5])
    K = generator_matrix(adv, d).matrix
    T = tr.transport_generator_matrix(adv, d).matrix
    nK = np.linalg.norm(K)
    assert np.linalg.norm(K + K.T) <= 1e-9 * nK
    assert np.linalg.norm(T + K) <= 1e-9 * nK


def test_adjoint_time_zero_exact():
    phi = grid1d(tr.gaussian_density(0.5, 0.4), -6, 6, 128)
    rep = tr.adjoint_check(decay(), phi, tr.gaussian_density(-0.2, 0.7), 0.0)
    assert rep.lhs == rep.rhs


def adjoint_1d(N):
    phi = grid1d(tr.gaussian_density(0.5, 0.5), -8, 8, N)
    return tr.adjoint_check(decay(), phi, tr.gaussian_density(-0.3, 0.7), 0.5, dt=1e-3)


def test_adjoint_linear_flow_1d():
    rep = adjoint_1d(1024)
    assert rep.rel_error <= 1e-4
    # closed form for Gaussians under x -> e^{-t} x
    a = math.exp(-0.5)
    m, s = 0.5 * a, 0.5 * a
    exact = math.exp(-((m + 0.3) ** 2) / (2 * (s**2 + 0.49))) / math.sqrt(2 * math.pi * (s**2 + 0.49))
    assert rep.rhs == pytest.approx(exact, rel=1e-4)
    assert rep.lhs == pytest.approx(exact, rel=1e-4)


def test_adjoint_second_order():
    coarse, fine = adjoint_1d(256), adjoint_1d(1024)
    assert coarse.rel_error / fine.rel_error >= 3


def test_adjoint_accepts_observable_vectors():
    from kooprep.observables import ObservableVector

    psi = ObservableVector(Monomials(1, 2), [1.0, 0.0, 0.0])
    phi = grid1d(tr.gaussian_density(0.0, 0.5), -6, 6, 512)
    rep = tr.adjoint_check(decay(), phi, psi, 0.3)
    # constant observable: both sides are the mass
    assert rep.lhs == pytest.approx(1.0, abs=1e-6)
    assert rep.rel_error <= 1e-4


@pytest.mark.slow
@pytest.mark.filterwarnings("ignore::kooprep.errors.SupportWarning")
def test_adjoint_rotation_2d():
    rep = tr.adjoint_check(
        dyn.catalog("rotation"), tr.gaussian_density([1.0, 0.0], 0.5), tr.gaussian_density([0.0, 1.0], 0.7),
        1.0, dt=0.01, box=[[-4, 4], [-4, 4]], shape=(256, 256),
    )
    assert rep.rel_error <= 1e-3


def test_pde_zero_field():
    phi = grid1d(tr.gaussian_density(0.0, 0.5), -4, 4, 100)
    out = tr.transport_pde_step(phi, dyn.linear(np.zeros((1, 1))), 0.1, 10)
    np.testing.assert_array_equal(out.values, phi.values)


def test_pde_pulse_translation():
    N = 500
    phi = grid1d(tr.indicator_density(2, 3), 0, 10, N)
    h = phi.spacing[0]
    dt = 0.5 * h
    out = tr.transport_pde_step(phi, dyn.catalog("constant_advection", c=1.0), dt, round(2 / dt))
    x = phi.points()[..., 0]
    com0 = np.sum(x * phi.values) / np.sum(phi.values)
    com1 = np.sum(x * out.values) / np.sum(out.values)
    assert abs(com1 - com0 - 2.0) <= 2 * h
    assert out.total_mass == pytest.approx(phi.total_mass, rel=1e-12)


def test_pde_cfl_violation():
    phi = grid1d(tr.gaussian_density(0.0, 0.5), -4, 4, 100)
    with pytest.raises(DomainError, match="admissible dt"):
        tr.transport_pde_step(phi, dyn.catalog("constant_advection", c=1.0), 1.0, 1)


def test_pde_follows_characteristics():
    # along x(t) = e^{-t} x0 the density grows like e^{t}
    errs = []
    for N in (400, 800):
        phi = grid1d(tr.gaussian_density(0.0, 0.5), -4, 4, N)
        dt = 0.25 * phi.spacing[0] / 4
        steps = round(0.5 / dt)
        t = steps * dt
        out = tr.transport_pde_step(phi, decay(), dt, steps)
        x0 = np.array([[0.3], [-0.2], [0.0]])
        xt = dyn.flow(decay(), x0, t)
        got = out.interpolate(xt)
        expect = tr.gaussian_density(0.0, 0.5)(x0) * math.exp(t)
        errs.append(np.max(np.abs(got - expect) / expect))
    assert errs[1] < errs[0] < 0.05


def test_unitarity():
    phi = tr.DensityGrid.from_function([[-4, 4], [-4, 4]], (64, 64), tr.gaussian_density([0.5, 0.0], 0.5))
    assert tr.unitarity_check(dyn.catalog("rotation"), phi, 0.0).ratio == 1.0
    line = grid1d(tr.gaussian_density(-2.0, 0.5), -8, 8, 1024)
    rep = tr.unitarity_check(dyn.catalog("constant_advection", c=1.0), line, 1.0)
    assert abs(rep.ratio - 1) <= 1e-3
    with pytest.raises(DomainError):
        tr.unitarity_check(dyn.catalog("van_der_pol"), phi, 1.0)


@pytest.mark.slow
@pytest.mark.filterwarnings("ignore::kooprep.errors.SupportWarning")
def test_unitarity_rotation_256():
    phi = tr.DensityGrid.from_function([[-4, 4], [-4, 4]], (256, 256), tr.gaussian_density([1.0, 0.0], 0.5))
    rep = tr.unitarity_check(dyn.catalog("rotation"), phi, 1.0, dt=0.01)
    assert 0.999 <= rep.ratio <= 1.001


def test_grid_dimension_cap():
    with pytest.raises(DimensionError, match="exponential"):
        tr.DensityGrid(np.zeros(4), np.ones(4), np.zeros((2, 2, 2, 2)))


def test_support_warning_attached():
    phi = grid1d(tr.gaussian_density(0.0, 2.0), -2, 2, 64)
    with pytest.warns(SupportWarning):
        out = tr.transport_flow(phi, decay(), 0.1)
    assert out.warnings
    quiet = grid1d(tr.gaussian_density(0.0, 0.3), -8, 8, 256)
    with warnings.catch_warnings():
        warnings.simplefilter("error", SupportWarning)
        assert not tr.transport_flow(quiet, decay(), 0.1).warnings


def test_density_text_roundtrip(tmp_path):
    phi = tr.DensityGrid.from_function([[-1, 1], [0, 2]], (5, 7), tr.gaussian_density([0.0, 1.0], 0.4))
    path = tmp_path / "phi.txt"
    phi.to_text(path)
    back = tr.DensityGrid.from_text(str(path))
    np.testing.assert_array_equal(back.values, phi.values)
    np.testing.assert_array_equal(back.lo, phi.lo)
    np.testing.assert_array_equal(back.hi, phi.hi)
