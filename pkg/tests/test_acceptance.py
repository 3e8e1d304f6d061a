"""Acceptance criteria, one test per criterion; each prints a PASS/FAIL line."""
import time

import numpy as np
import pytest

from patternspectra import bloch
from patternspectra import modulation as mod
from patternspectra import multiplier_decay as md
from patternspectra import phase_tools as pt
from patternspectra import simulator as sim
from patternspectra.field2d import Grid2D
from patternspectra.model import linear_system
from patternspectra.multiplier_decay import delta_example
from patternspectra.profile import constant_wave

I2, Z2 = np.eye(2), np.zeros((2, 2))


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail
    return emit


def test_criterion_01_constant_coefficient_oracle(report):
    M = np.array([[-0.5, 1.0], [-1.0, -0.3]])
    L = np.array([[[0.3, 0.1], [0.0, -0.2]], [[0.05, 0.4], [0.2, 0.1]]])
    K = np.array([[0.4, 0.1], [-0.2, 0.3]])
    c = np.array([0.3, -0.5])
    N = 16
    t0 = time.perf_counter()
    wd = constant_wave(linear_system(M, L), Grid2D(N), [0.0, 0.0], K, c)
    grid = wd.grid
    k1, k2 = grid.kk[0][grid.band], grid.kk[1][grid.band]
    g = np.linspace(-np.pi, np.pi, 5)
    worst = 0.0
    for xi in [np.array([a, b]) for a in g for b in g]:
        galerkin = np.linalg.eigvals(bloch.assemble_symbol(wd, xi).matrix)
        w = 2 * np.pi * np.stack([k1, k2], axis=1) + xi                # (modes, 2)
        Kw = w @ K.T
        blk = (M - np.sum(Kw ** 2, axis=1)[:, None, None] * I2
               + 1j * (w @ (K.T @ c))[:, None, None] * I2 + 1j * np.einsum("pa,aij->pij", Kw, L))
        exact = np.linalg.eigvals(blk).ravel()
        gap = np.abs(galerkin[None, :] - exact[:, None]).min(axis=1)
        worst = max(worst, float((gap / np.maximum(1.0, np.abs(exact))).max()))
    dt = time.perf_counter() - t0
    report(1, worst <= 1e-8 and dt < 10, f"max relative eigenvalue error {worst:.1e} over 25 xi, {dt:.1f} s")


def test_criterion_02_translation_kernel(report, cgl_wave):
    res = bloch.check_D2(cgl_wave)
    ok = cgl_wave.residual_norm < 1e-10 and res["passed"] and res["kernel_dim"] == 2 and res["angle"] < 1e-4
    report(2, ok, f"residual {cgl_wave.residual_norm:.1e}, kernel dim {res['kernel_dim']}, "
                  f"angle {res['angle']:.1e}")


def test_criterion_03_first_order_expansion(report, advective_wave):
    exp = bloch.expand_symbol(advective_wave)
    err = exp.cross_check["first_order_error"]
    report(3, err <= 1e-4 and np.abs(exp.A1).max() > 1e-3,
           f"relative gap between FD and speed-derivative first-order terms {err:.1e}")


def test_criterion_04_second_order_expansion(report, cgl_wave, advective_wave):
    worst = 0.0
    for wd in (cgl_wave, advective_wave):
        exp = bloch.expand_symbol(wd)
        B = mod.expansion_from_lambda(mod.lambda_coeffs(wd), wd.K)
        ref = (exp.B11, exp.B12, exp.B22)
        scale = max(np.abs(R).max() for R in ref)
        worst = max(worst, max(np.abs(b - r).max() for b, r in zip(B, ref)) / scale)
    report(4, worst <= 1e-3, f"relative gap between Lambda^K and the second-order symbol {worst:.1e}")


def test_criterion_05_classifier(report):
    t0 = time.perf_counter()
    strict = []
    for d in (0.25, 1.0, 4.0):
        A1, A2 = delta_example(d)
        hyp, st = mod.brute_force_hyperbolic(A1, A2, M=4096)
        strict.append(hyp and st and mod.classify_hyperbolic(A1, A2).tag == mod.CASE_A)
    rng = np.random.default_rng(0)
    n_ok = 0
    for trial in range(1000):
        P = rng.standard_normal((2, 2)) + 2 * I2
        Pi = np.linalg.inv(P)
        if trial % 2:
            S = [rng.standard_normal((2, 2)) for _ in range(2)]
            A1, A2 = (Pi @ (s + s.T) @ P for s in S)
        else:
            A1, A2 = (Pi @ np.diag(rng.standard_normal(2)) @ P for _ in range(2))
        S = mod.symmetrizer(A1, A2)
        n_ok += bool(mod.validate_symmetrizer(S, A1, A2)) and np.linalg.eigvalsh(S)[0] > 0
    dt = time.perf_counter() - t0
    report(5, all(strict) and n_ok == 1000 and dt < 5,
           f"delta examples strictly hyperbolic {strict}, symmetrizers valid {n_ok}/1000, {dt:.1f} s")


def test_criterion_06_counterexample(report):
    res = md.benchmark_counterexample()
    c = res["coefficients"]
    target = {"linear_im": 1.0, "cubic_im": 1.0, "quartic_re": -1.0, "lambda2_quadratic": -1.0}
    rel = max(abs(c[k] - v) / abs(v) for k, v in target.items())
    ratios = np.abs(res["re_lambda1_over_r2"])
    to_zero = bool(np.all(np.diff(ratios) < 0) and ratios[-1] < 1e-6)
    ok = rel <= 0.02 and not res["diffusive"] and to_zero and res["radii"] == [1e-1, 1e-2, 1e-3, 1e-4]
    report(6, ok, f"coefficient error {rel:.1e}, diffusive {res['diffusive']}, "
                  f"Re lambda_1/r^2 at r=1e-4 {res['re_lambda1_over_r2'][-1]:.1e}")


def test_criterion_07_decay_suite(report):
    t0 = time.perf_counter()
    results = md.run_suite(md.DYADIC[3:10])
    dt = time.perf_counter() - t0
    detail = ", ".join(f"{r.name} {r.fitted:.3f}" for r in results)
    report(7, all(r.passed for r in results) and dt < 600, f"{detail}; {dt:.0f} s")


def test_criterion_08_commutation(report, cgl_modulation):
    rng = np.random.default_rng(1)
    P = rng.standard_normal((2, 2)) + 2 * I2
    Pi = np.linalg.inv(P)
    systems = {
        "CaseA": mod.modulation_system(*delta_example(), np.diag([1.0, 2.0]), 0.1 * I2, I2),
        "CaseB": mod.modulation_system(Pi @ np.diag([1.0, -0.5]) @ P, Pi @ np.diag([0.3, 2.0]) @ P,
                                       np.array([[1.0, 0.4], [0.1, 1.2]]), Z2, I2),
        "CaseB0": cgl_modulation,
    }
    worst = {}
    for name, ms in systems.items():
        assert ms.tag == name
        lam0 = mod.build_lambda0(ms, require_diffusive=False)
        worst[name] = max(mod.commutator_defect(lam0, x) for x in rng.standard_normal((1000, 2)))
    report(8, max(worst.values()) <= 1e-10,
           "relative commutator defects " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))


def test_criterion_09_biot_savart(report):
    norms = []
    for L, N in ((32.0, 128), (64.0, 256)):
        g = pt.BoxGrid(L, N)
        d = pt.gaussian(g, 1.5, (2.0, 0.0)) - pt.gaussian(g, 1.5, (-2.0, 0.0))
        norms.append(pt.l2_norm(g, pt.grad_inv_laplacian(g, d)))
    change = abs(norms[1] - norms[0]) / norms[0]
    g = pt.BoxGrid(128.0, 512)
    v = pt.grad_inv_laplacian(g, pt.gaussian(g, 1.0))
    radii = np.geomspace(8.0, 32.0, 7)
    slope = pt.log_slope(radii, [pt.l2_norm(g, v, r) ** 2 for r in radii])
    rel = abs(slope * 2 * np.pi - 1)
    report(9, change <= 0.02 and rel <= 0.05,
           f"mean-zero change under doubling {change:.1e}, mean-one log slope {slope:.4f} (rel err {rel:.1e})")


def test_criterion_10_simulator(report, cgl_wave):
    m = 4
    sectors = [(0, 0), (1, 0), (0, 1), (1, 1), (2, 0), (0, 2), (1, -1), (2, 1), (1, 2), (2, 2)]
    xi = [2 * np.pi * np.array(j, float) / m for j in sectors]
    res = sim.bloch_growth_validation(cgl_wave, xi, m=m, T=1.0, dt=0.02)
    worst = max(r.error for r in res)
    # stepper orders on a perturbed wave, against a fine ETDRK4 reference
    prob = sim.rd_problem(cgl_wave, 1)
    grid = prob.grid
    bump = 0.05 * np.cos(2 * np.pi * (grid.x[0] - grid.x[1]))
    W0 = type(cgl_wave.U).from_values(grid, cgl_wave.U.values() + bump)
    ref = sim.run_rd(prob, W0, 2.0, 0.005)[0].W.coeffs
    orders = {}
    for name, dts in (("etdrk4", [0.1, 0.05, 0.025]), ("imex-bdf2", [0.05, 0.025, 0.0125])):
        errs = [np.abs(sim.run_rd(prob, W0, 2.0, d, name)[0].W.coeffs - ref).max() for d in dts]
        orders[name] = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    ok = worst <= 1e-3 and 3.8 <= orders["etdrk4"] <= 4.2 and 1.9 <= orders["imex-bdf2"] <= 2.1
    report(10, ok, f"max growth-rate error {worst:.1e} over {len(res)} xi, "
                   f"orders ETDRK4 {orders['etdrk4']:.2f} BDF2 {orders['imex-bdf2']:.3f}")


def test_criterion_11_modulation_consistency(report, cgl_wave, cgl_modulation):
    src = {"width": 2.0, "pair_offset": [3.0, 0.0], "components": [0]}
    _, errs, slope = sim.amplitude_sweep(cgl_wave, cgl_modulation, src, [0.2, 0.4, 0.8], 4.0, m=16, dt=0.1)
    times = np.round(np.geomspace(240, 792, 8) / 8) * 8
    src_k = {"amplitude": 0.01, "width": 0.5, "pair_offset": [0.25, 0.0], "components": [0]}
    dec = sim.whitham_decay(cgl_wave, cgl_modulation, src_k, 32, times, 8.0, N=8)
    fit = dec["fit"]
    rate = np.nan if fit is None else fit.exponent
    ok = abs(slope - 2) <= 0.2 and fit is not None and rate >= 0.4 and max(dec["times"]) <= dec["t_cut"]
    report(11, ok, f"amplitude slope {slope:.2f}, K^W - K L2 decay exponent {rate:.3f} "
                   f"over t in [{min(dec['times']):.0f}, {max(dec['times']):.0f}], cutoff {dec['t_cut']:.0f}")
