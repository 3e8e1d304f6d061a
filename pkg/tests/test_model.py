import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from patternspectra.errors import ComponentMismatch, ConfigError, InputError
from patternspectra.field2d import Grid2D, PeriodicField
from patternspectra.model import (RDSystem, WaveParams, brusselator, brusselator_state, cgl_pair,
                                  linear_system, make_system, polynomial_system, residual)


def fd(func, W, h=1e-6):
    cols = []
    for j in range(W.shape[0]):
        e = np.zeros_like(W)
        e[j] = h
        cols.append((func(W + e) - func(W - e)) / (2 * h))
    return np.moveaxis(np.stack(cols), 0, -2 if W.ndim > 1 else -1)


def test_constant_equilibrium_has_zero_residual():
    sys_ = brusselator(1.0, 5.0)
    U = PeriodicField.constant(Grid2D(16), brusselator_state(1.0, 5.0))
    for K in (np.eye(2), [[0.3, 0.1], [-0.2, 0.5]]):
        r = residual(sys_, U, WaveParams(K, [0.0, 0.0]))
        assert r.sup_norm() < 1e-13


def test_linear_residual_matches_symbol():
    M = np.array([[-0.5, 1.0], [-1.0, -0.3]])
    K = np.array([[0.4, 0.1], [-0.2, 0.3]])
    c = np.array([0.3, -0.7])
    v = np.array([1.0 + 0.5j, -0.2 + 1.0j])
    grid = Grid2D(16)
    x1, _ = grid.x
    U = PeriodicField.from_values(grid, np.real(v[:, None, None] * np.exp(2j * np.pi * x1)))
    r = residual(linear_system(M), U, WaveParams(K, c))
    Ke1 = 2 * np.pi * K[:, 0]
    sym = M - (Ke1 @ Ke1) * np.eye(2) + 2j * np.pi * (K.T @ c)[0] * np.eye(2)
    expected = np.real((sym @ v)[:, None, None] * np.exp(2j * np.pi * x1))
    assert np.abs(r.values().real - expected).max() < 1e-10


def test_linear_flux_symbol():
    M = np.zeros((1, 1))
    L = np.array([[[0.7]], [[-0.4]]])
    K = np.array([[0.5, 0.0], [0.0, 0.25]])
    grid = Grid2D(8)
    x1, x2 = grid.x
    U = PeriodicField.from_values(grid, np.cos(2 * np.pi * (x1 + x2))[None])
    r = residual(linear_system(M, L), U, WaveParams(K, [0.0, 0.0]))
    kw = 2 * np.pi * K @ np.array([1.0, 1.0])
    expected = -(kw @ kw) * np.cos(2 * np.pi * (x1 + x2)) - (L[:, 0, 0] @ kw) * np.sin(2 * np.pi * (x1 + x2))
    assert np.abs(r.values()[0].real - expected).max() < 1e-10


def test_converged_brusselator_residual(brusselator_wave):
    wd = brusselator_wave
    r = residual(wd.sys, wd.U, wd.wp)
    assert r.sup_norm() <= wd.tol


def test_component_mismatch():
    U = PeriodicField.constant(Grid2D(8), [1.0, 2.0, 3.0])
    with pytest.raises(ComponentMismatch):
        residual(brusselator(), U, WaveParams(np.eye(2), [0, 0]))


def test_singular_K_rejected():
    with pytest.raises(InputError):
        WaveParams([[1.0, 2.0], [0.5, 1.0]], [0, 0])


def test_omega_identity():
    wp = WaveParams([[0.3, 0.1], [-0.2, 0.5]], [0.4, -1.1])
    assert np.array_equal(wp.Omega + wp.K.T @ wp.c, np.zeros(2))
    wp2 = wp.with_c([1.0, 2.0])
    assert np.allclose(wp2.Omega, -wp.K.T @ np.array([1.0, 2.0]))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 15), st.integers(0, 15))
def test_residual_translation_equivariant(s1, s2):
    rng = np.random.default_rng(s1 * 16 + s2)
    grid = Grid2D(16)
    k1, k2 = grid.kk
    coeffs = (rng.standard_normal((2, 16, 16)) + 1j * rng.standard_normal((2, 16, 16))) * (
        (np.abs(k1) <= 3) & (np.abs(k2) <= 3))
    U = PeriodicField.from_values(grid, PeriodicField(grid, coeffs).values().real * 0.2
                                  + brusselator_state()[:, None, None])
    sys_ = brusselator(1.0, 5.0, (0.3, -0.1))
    wp = WaveParams([[0.3, 0.05], [0.0, 0.4]], [0.2, 0.1])
    phi = (s1 / 16, s2 / 16)
    a = residual(sys_, U.shift(phi), wp)
    b = residual(sys_, U, wp).shift(phi)
    assert (a - b).sup_norm() < 1e-10


@pytest.mark.parametrize("sys_", [brusselator(1.0, 5.0, (0.4, -0.2)), cgl_pair(1.0, 0.3),
                                  linear_system([[0.1, 2.0], [-1.0, 0.0]], np.ones((2, 2, 2)))],
                         ids=["brusselator_advective", "cgl_pair", "linear"])
def test_analytic_derivatives_match_differences(sys_):
    rng = np.random.default_rng(3)
    W = rng.uniform(0.2, 2.0, size=(sys_.n, 5))
    for f, df in ((sys_.eval_f, sys_.eval_df), (sys_.eval_df, sys_.eval_d2f),
                  (sys_.eval_G, sys_.eval_dG), (sys_.eval_dG, sys_.eval_d2G)):
        exact = df(W)
        approx = np.stack([fd(f, W[:, i:i + 1])[..., 0] for i in range(W.shape[1])], axis=-1)
        scale = max(np.abs(exact).max(), 1.0)
        assert np.abs(exact - approx).max() / scale < 1e-6


def test_fallback_derivatives_from_differences():
    base = brusselator(1.0, 5.0, (0.2, 0.1))
    bare = RDSystem(name="bare", n=2, f=base.f, G=base.G)
    W = np.array([[1.3, 0.7], [4.0, 5.5]])
    assert np.allclose(bare.eval_df(W), base.eval_df(W), rtol=1e-6, atol=1e-8)
    assert np.allclose(bare.eval_dG(W), base.eval_dG(W), rtol=1e-6, atol=1e-8)
    assert np.allclose(bare.eval_d2f(W), base.eval_d2f(W), rtol=1e-5, atol=1e-6)


def test_polynomial_system_matches_brusselator():
    terms = [((0,), 1.0, (0, 0)), ((0,), -6.0, (1, 0)), ((0,), 1.0, (2, 1)),
             ((1,), 5.0, (1, 0)), ((1,), -1.0, (2, 1))]
    poly = make_system("polynomial", n=2, f_terms=terms)
    ref = brusselator(1.0, 5.0)
    W = np.random.default_rng(0).uniform(0, 3, size=(2, 4, 4))
    for name in ("eval_f", "eval_df", "eval_d2f"):
        assert np.allclose(getattr(poly, name)(W), getattr(ref, name)(W))


def test_polynomial_degree_limit():
    with pytest.raises(ConfigError):
        polynomial_system(1, [((0,), 1.0, (5,))])


def test_make_system_errors():
    with pytest.raises(ConfigError):
        make_system("nope")
    with pytest.raises(ConfigError):
        make_system("brusselator", alpha=3)
    with pytest.raises(ConfigError):
        make_system("polynomial", n=2)
    assert make_system("brusselator", a=2.0, b=3.0).params["b"] == 3.0
