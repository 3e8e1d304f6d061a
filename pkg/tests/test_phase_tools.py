import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from patternspectra import phase_tools as pt
from patternspectra.errors import AmplitudeTooLarge, ContractionViolated, InputError


@pytest.fixture(scope="module")
def box():
    return pt.BoxGrid(32.0, 256)


def test_grad_inv_laplacian_of_laplacian(box):
    X1, X2 = box.mesh()
    g = np.exp(-(X1 ** 2 + X2 ** 2) / 8)
    v = pt.grad_inv_laplacian(box, pt.laplacian(box, g))
    exact = np.stack([-X1 / 4 * g, -X2 / 4 * g])
    assert np.abs(v - exact).max() <= 1e-8


def test_divergence_and_curl(box):
    rng = np.random.default_rng(0)
    d = pt.lowfreq_split(box, rng.standard_normal((box.N, box.N)), 2.0)[0]
    d -= d.mean()
    v = pt.grad_inv_laplacian(box, d)
    assert np.abs(pt.divergence(box, v) - d).max() <= 1e-10 * np.abs(d).max()
    assert np.abs(pt.curl(box, v)).max() <= 1e-10 * np.abs(d).max()


def test_inv_laplacian_round_trip(box):
    X1, X2 = box.mesh()
    k = np.pi / box.L
    f = np.cos(3 * k * X1) * np.sin(2 * k * X2) + 0.3 * np.cos(k * X2) + 2.0
    back = pt.inv_laplacian(box, pt.laplacian(box, f))
    assert np.abs(back - (f - f.mean())).max() <= 1e-10


def test_mean_zero_source_box_stable():
    norms = []
    for L, N in ((32.0, 128), (64.0, 256)):
        g = pt.BoxGrid(L, N)
        d = pt.gaussian(g, 1.5, (2.0, 0.0)) - pt.gaussian(g, 1.5, (-2.0, 0.0))
        norms.append(pt.l2_norm(g, pt.grad_inv_laplacian(g, d)))
    assert abs(norms[1] - norms[0]) / norms[0] <= 0.02


def test_mean_one_source_log_divergent():
    g = pt.BoxGrid(128.0, 512)
    v = pt.grad_inv_laplacian(g, pt.gaussian(g, 1.0))
    radii = np.geomspace(8.0, 32.0, 7)
    energy = [pt.l2_norm(g, v, r) ** 2 for r in radii]
    assert pt.log_slope(radii, energy) == pytest.approx(1 / (2 * np.pi), rel=0.05)


def test_mean_one_potential_logarithm():
    g = pt.BoxGrid(128.0, 512)
    phi = pt.inv_laplacian(g, pt.gaussian(g, 1.0))
    X1, X2 = g.mesh()
    r2 = X1 ** 2 + X2 ** 2
    ring = (r2 >= 10 ** 2) & (r2 <= (g.L / 4) ** 2)
    rest = phi - np.log(np.where(r2 > 0, r2, 1.0)) / (4 * np.pi)
    # far from the source phi is the logarithm plus a constant, up to the box correction
    assert np.ptp(rest[ring]) < 0.05 * np.ptp(phi[ring])


def test_mean_zero_potential_bounded():
    sups = []
    for L, N in ((32.0, 128), (64.0, 256)):
        g = pt.BoxGrid(L, N)
        d = pt.gaussian(g, 1.5, (2.0, 0.0)) - pt.gaussian(g, 1.5, (-2.0, 0.0))
        sups.append(np.abs(pt.inv_laplacian(g, d)).max())
    assert abs(sups[1] - sups[0]) / sups[0] <= 0.02


def test_lowfreq_split(box):
    X1, X2 = box.mesh()
    k = np.pi / box.L
    smooth = np.cos(2 * k * X1) + np.sin(k * X2)
    lf, hf = pt.lowfreq_split(box, smooth, 0.5)
    assert np.abs(hf).max() < 1e-13
    rng = np.random.default_rng(1)
    f = rng.standard_normal((box.N, box.N))
    lf, hf = pt.lowfreq_split(box, f, 0.5)
    assert np.abs(lf + hf - f).max() <= 1e-14 * np.abs(f).max()
    # energies add up once the cross term is kept
    e = box.integrate(f * f)
    assert abs(box.integrate(lf * lf) + box.integrate(hf * hf) + 2 * box.integrate(lf * hf) - e) <= 1e-12 * e
    grad = pt.gradient(box, f)
    assert pt.l2_norm(box, hf) <= pt.l2_norm(box, grad) / 0.5


def test_phase_source_basics(box):
    zero = pt.make_phase_source(box, 0.0, 2.0)
    assert np.abs(zero.phi).max() == 0
    a = pt.make_phase_source(box, 0.3, 2.0, sign=1)
    b = pt.make_phase_source(box, 0.3, 2.0, sign=-1)
    assert np.array_equal(a.phi, -b.phi)
    assert box.integrate(a.lap[0]) == pytest.approx(0.3, abs=1e-10)
    assert box.integrate(b.lap[0]) == pytest.approx(-0.3, abs=1e-10)
    assert np.abs(a.phi[1]).max() == 0


def test_phase_source_errors(box):
    with pytest.raises(AmplitudeTooLarge):
        pt.make_phase_source(box, 40.0, 2.0)
    with pytest.raises(InputError):
        pt.make_phase_source(box, 0.1, 0.2)
    with pytest.raises(InputError):
        pt.make_phase_source(box, 0.1, 2.0, sign=2)


def test_deformation_csv(tmp_path, box):
    pf = pt.make_phase_source(box, 0.3, 2.0, pair_offset=(4.0, 0.0), components=(0, 1))
    path = tmp_path / "grid.csv"
    pt.write_deformation_csv(path, pf, stride=16)
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert data.shape == ((box.N // 16) ** 2, 4)
    assert abs(box.integrate(pf.lap[1])) < 1e-12


def test_inverse_of_constant_shift():
    shift = np.array([0.2, -0.1])
    x = np.random.default_rng(0).standard_normal((2, 50))
    inv = pt.invert_id_minus_phi(lambda y: np.broadcast_to(shift[:, None], y.shape), x, 0.0)
    assert np.allclose(inv.y, x + shift[:, None], rtol=0, atol=1e-15)


def test_inverse_of_linear_phase():
    x = np.random.default_rng(0).standard_normal((2, 50))
    phi = lambda y: np.stack([0.3 * y[0], np.zeros_like(y[1])])
    inv = pt.invert_id_minus_phi(phi, x, 0.3, tol=1e-12)
    assert np.abs(inv.y[0] - x[0] / 0.7).max() <= 1e-11
    assert np.array_equal(inv.y[1], x[1])


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_contraction_iteration_count(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((2, 3))
    kappa = 0.4
    scale = kappa / (np.abs(a).sum(axis=1).max() + 1e-12)

    def phi(y):
        return scale * np.stack([a[i, 0] * np.sin(y[0]) + a[i, 1] * np.cos(y[1]) + a[i, 2] * np.sin(y[0] + y[1]) / 2
                                 for i in range(2)])
    x = rng.uniform(-5, 5, size=(2, 40))
    tol = 1e-10
    inv = pt.invert_id_minus_phi(phi, x, kappa, tol=tol)
    assert inv.composition_error <= 10 * tol
    assert inv.iterations <= np.log(tol) / np.log(kappa) + 2


def test_contraction_violated():
    with pytest.raises(ContractionViolated):
        pt.invert_id_minus_phi(lambda y: y, np.zeros((2, 3)), 1.0)
    with pytest.raises(ContractionViolated):
        pt.invert_id_minus_phi(lambda y: 2 * y + 1, np.zeros((2, 3)), 0.5, max_iter=20)


@pytest.mark.parametrize("p", [2, 4, np.inf])
def test_change_of_variables_inequality(p):
    g = pt.BoxGrid(16.0, 128)
    pf = pt.make_phase_source(g, 1.5, 1.5, pair_offset=(2.0, 0.0), components=(0, 1))
    assert pf.kappa() < 0.5

    def A(y):
        return np.exp(-((y[0] - 1) ** 2 + y[1] ** 2) / 4)

    def B(y):
        return np.exp(-(y[0] ** 2 + (y[1] + 0.5) ** 2) / 5)
    lhs, rhs = pt.var_change_check(g, A, B, pf, p)
    assert lhs <= rhs * 1.01
