import json

import numpy as np
import pytest

from patternspectra import simulator as sim
from patternspectra.errors import (BlowupDetected, InputError, LeavesValidityRegion, NonlinearContamination)
from patternspectra.field2d import Grid2D, PeriodicField
from patternspectra.model import linear_system
from patternspectra.multiplier_decay import lambda0_semigroup
from patternspectra.profile import constant_wave, wave_derivatives

M_LIN = np.array([[-0.5, 1.0], [-1.0, -0.3]])
L_LIN = np.array([[[0.3, 0.1], [0.0, -0.2]], [[0.05, 0.4], [0.2, 0.1]]])
K_LIN = np.array([[0.4, 0.1], [-0.2, 0.3]])
C_LIN = np.array([0.3, -0.5])


@pytest.fixture(scope="module")
def lin_wave():
    return wave_derivatives(constant_wave(linear_system(M_LIN, L_LIN), Grid2D(8), [0.0, 0.0], K_LIN, C_LIN))


# ------------------------------------------------------------ super-cell


def test_supercell_mask_counts_cell_band():
    N, m = 8, 4
    mask = sim.supercell_mask(N, m)
    assert mask.sum() == ((N - 1) * m) ** 2


def test_embed_supercell_tiles_the_cell(cgl_wave):
    m = 4
    Us = sim.embed_supercell(cgl_wave.U, m)
    cell = cgl_wave.U.values()
    big = Us.values()
    N = cgl_wave.grid.N
    for a in range(m):
        for b in range(m):
            assert np.abs(big[:, a * N:(a + 1) * N, b * N:(b + 1) * N] - cell).max() < 1e-12


def test_sector_index_picks_shifted_modes():
    N, m = 8, 4
    i1, i2 = sim.sector_index(N, m, (1, -1))
    k = np.fft.fftfreq(N, 1.0 / N).astype(int)
    assert np.array_equal(i1.ravel(), (m * k + 1) % (N * m))
    assert np.array_equal(i2.ravel(), (m * k - 1) % (N * m))


# ------------------------------------------------------------ reaction-diffusion stepping


def test_stationary_wave_is_preserved(cgl_wave):
    prob = sim.rd_problem(cgl_wave, 2)
    Us = sim.embed_supercell(cgl_wave.U, 2)
    state, _ = sim.run_rd(prob, Us, 5.0, 0.05)
    assert np.abs(state.W.values() - Us.values()).max() <= 1e-8


@pytest.mark.parametrize("stepper,tol", [("etdrk4", 1e-10), ("imex-bdf2", 1e-4)])
def test_single_mode_heat_decay(stepper, tol):
    K = np.array([[0.5, 0.2], [0.0, 0.3]])
    wd = constant_wave(linear_system([[0.0]]), Grid2D(8), [0.0], K)
    prob = sim.rd_problem(wd, 2)
    g = prob.grid
    W0 = PeriodicField.from_values(g, np.cos(2 * np.pi * (g.x[0] + 2 * g.x[1]) / 2)[None])
    T, dt = 1.0, 0.01
    state, _ = sim.run_rd(prob, W0, T, dt, stepper)
    w = 2 * np.pi * np.array([1.0, 2.0]) / 2
    exact = np.exp(-np.sum((K @ w) ** 2) * T) * W0.values()
    # exponential integration is exact on a pure diffusion
    assert np.abs(state.W.values() - exact).max() <= tol


def test_constant_state_growth_rates(lin_wave):
    res = sim.bloch_growth_validation(lin_wave, [(0.0, 0.0), (np.pi / 2, -np.pi / 2), (np.pi, 0.0)],
                                      m=4, T=1.0, dt=0.01)
    for r in res:
        assert r.error <= 1e-8 * max(1.0, abs(r.eigenvalue))


def test_growth_rate_at_zero_and_small_xi(cgl_wave):
    res = sim.bloch_growth_validation(cgl_wave, [(0.0, 0.0), (2 * np.pi / 8, 0.0)], m=8, T=1.0, dt=0.02)
    assert abs(res[0].measured) <= 1e-5
    assert res[1].error <= 1e-3


def _perturbed(cgl_wave):
    prob = sim.rd_problem(cgl_wave, 1)
    U = cgl_wave.U
    g = prob.grid
    bump = 0.05 * np.stack([np.cos(2 * np.pi * (g.x[0] - g.x[1]))] * U.n)
    return prob, PeriodicField.from_values(g, U.values() + bump)


@pytest.mark.parametrize("stepper,lo,hi", [("etdrk4", 3.8, 4.2), ("imex-bdf2", 1.9, 2.1)])
def test_stepper_order(cgl_wave, stepper, lo, hi):
    prob, W0 = _perturbed(cgl_wave)
    T = 2.0
    ref, _ = sim.run_rd(prob, W0, T, 0.005, "etdrk4")
    dts = [0.1, 0.05, 0.025] if stepper == "etdrk4" else [0.05, 0.025, 0.0125]
    errs = [np.abs(sim.run_rd(prob, W0, T, dt, stepper)[0].W.coeffs - ref.W.coeffs).max() for dt in dts]
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert lo <= slope <= hi


def test_dt_above_explicit_bound_rejected(cgl_wave):
    prob = sim.rd_problem(cgl_wave, 1)
    W0 = sim.embed_supercell(cgl_wave.U, 1)
    big = 2 * prob.dt_max(W0.coeffs)
    with pytest.raises(InputError):
        sim.run_rd(prob, W0, big, big)
    with pytest.raises(InputError):
        sim.step_rd(prob, sim.SimState(0.0, W0, "etdrk4", big))


def test_T_must_be_multiple_of_dt(cgl_wave):
    prob = sim.rd_problem(cgl_wave, 1)
    with pytest.raises(InputError):
        sim.run_rd(prob, sim.embed_supercell(cgl_wave.U, 1), 1.03, 0.1)


def test_blowup_detected():
    wd = constant_wave(linear_system([[5.0]]), Grid2D(8), [0.0], 0.1 * np.eye(2))
    prob = sim.rd_problem(wd, 1)
    W0 = PeriodicField.constant(prob.grid, np.array([1.0]))
    with pytest.raises(BlowupDetected):
        sim.run_rd(prob, W0, 5.0, 0.1)


def test_large_perturbation_flags_contamination(cgl_wave):
    with pytest.raises(NonlinearContamination):
        sim.bloch_growth_validation(cgl_wave, [(np.pi, 0.0)], eps=0.5, m=2, T=2.0, dt=0.05,
                                    residual_tol=1e-6)


def test_incommensurate_xi_rejected(cgl_wave):
    with pytest.raises(InputError):
        sim.bloch_growth_validation(cgl_wave, [(0.3, 0.0)], m=4)


# ------------------------------------------------------------ Whitham phase equation


@pytest.fixture(scope="module")
def phase_setup(cgl_wave, cgl_modulation):
    m = 16
    model = sim.whitham_model(cgl_wave, cgl_modulation, m)
    src = {"amplitude": 0.2, "width": 2.0, "pair_offset": [3.0, 0.0], "components": [0]}
    pf = sim.phase_initial(model.grid, src)
    return model, model.grid.from_values(pf.phi)


def test_constant_phase_is_stationary(phase_setup):
    model, _ = phase_setup
    phi0 = np.zeros((2,) + model.grid.kk[0].shape, complex)
    phi0[:, 0, 0] = [0.3, -0.2]
    out = sim.run_whitham(model, phi0, [1.0, 4.0], 0.5)
    assert np.abs(out[4.0] - phi0).max() < 1e-14


def test_linear_whitham_matches_semigroup(cgl_wave, cgl_modulation, phase_setup):
    model, phi0 = phase_setup
    lin = sim.whitham_model(cgl_wave, cgl_modulation, model.m, nonlinear=False)
    t = 6.0
    stepped = sim.run_whitham(lin, phi0, [t], 0.5)[t]
    w = np.stack(lin.grid.wavevectors, axis=-1)
    P = lambda0_semigroup(cgl_modulation.lambda0).raw(t, w)
    direct = np.einsum("...ij,j...->i...", P, phi0) * lin.grid.band
    assert np.abs(stepped - direct).max() <= 1e-12 * np.abs(phi0).max()
    assert np.abs(sim.linear_propagator(lin, t, phi0) - direct).max() <= 1e-14


def test_phase_gradient_stays_curl_free(phase_setup):
    model, phi0 = phase_setup
    coeffs = sim.run_whitham(model, phi0, [4.0], 0.5)[4.0]
    G = sim.phi_gradient(model, coeffs)
    g = model.grid
    w1, w2 = g.wavevectors
    for mm in range(2):
        curl = g.to_values(1j * w1 * g.from_values(G[1, mm]) - 1j * w2 * g.from_values(G[0, mm])).real
        assert np.abs(curl).max() <= 1e-12


def test_nonlinear_whitham_close_to_linear_for_small_phase(cgl_wave, cgl_modulation, phase_setup):
    model, phi0 = phase_setup
    t = 4.0
    nl = sim.run_whitham(model, 1e-3 * phi0, [t], 0.5)[t]
    lin = sim.linear_propagator(model, t, 1e-3 * phi0)
    # the gap is quadratic in the amplitude
    assert np.abs(nl - lin).max() <= 1e-2 * np.abs(lin).max()


def test_large_phase_leaves_validity_region(phase_setup):
    model, phi0 = phase_setup
    with pytest.raises(LeavesValidityRegion):
        sim.run_whitham(model, 60.0 * phi0, [0.5], 0.5)


# ------------------------------------------------------------ comparison diagnostics


def test_zero_source_gives_roundoff(cgl_wave, cgl_modulation):
    src = {"amplitude": 0.0, "width": 2.0}
    res = sim.run_comparison(cgl_wave, cgl_modulation, src, 1.0, m=8, dt=0.05, times=[0.5, 1.0])
    for p, vals in res.rd_error.items():
        assert max(vals) <= 1e-10
    for p, vals in res.dK_norm.items():
        assert max(vals) <= 1e-12


def test_reconstruct_zero_phase_is_the_wave(cgl_wave):
    grid = Grid2D(cgl_wave.grid.N * 4, 4.0)
    rec = sim.reconstruct(cgl_wave, np.zeros((2, grid.N, grid.N)), grid)
    assert np.abs(rec.W - sim.embed_supercell(cgl_wave.U, 4).values()).max() < 1e-12


def test_lp_norm_of_constant():
    v = np.full((2, 8, 8), 3.0)
    h = 0.5
    assert sim.lp_norm(v, h, 2) == pytest.approx(np.sqrt(18.0 * 16.0))
    assert sim.lp_norm(v, h, np.inf) == pytest.approx(np.sqrt(18.0))


def test_cutoff_time_shrinks_with_source_radius(cgl_modulation):
    t1 = sim.cutoff_time(cgl_modulation, 16, 2.0)
    t2 = sim.cutoff_time(cgl_modulation, 16, 3.0)
    assert t1 > t2 > 0
    assert sim.cutoff_time(cgl_modulation, 8, 10.0) == 0.0


def test_diagnostics_and_manifest(tmp_path):
    res = sim.ComparisonResult([0.0, 1.0], {2: [0.0, 1e-3]}, {2: [0.0, 2e-3]}, 0.1, 10.0)
    sim.write_diagnostics_csv(tmp_path / "d.csv", res)
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0] == "series,t,p,value" and len(lines) == 5
    sim.write_manifest(tmp_path / "m.json", {"b": 1, "a": np.inf})
    first = (tmp_path / "m.json").read_text()
    sim.write_manifest(tmp_path / "m.json", {"a": np.inf, "b": 1})
    assert (tmp_path / "m.json").read_text() == first
    assert json.loads(first)["b"] == 1
