"""Periodic wave profiles U^K, speeds c(K) and derivatives of the wave family.

The profile equation is solved by Newton's method on the Fourier coefficients
of U together with the speed c, closed by two phase conditions
<qt_j ; U - U_ref> = 0.  A first pass uses the seed derivatives as template
functionals; the adjoint kernel qt of L_0 at that solution then becomes the
phase anchor for a second pass and for everything downstream (continuation and
K-derivatives), which makes <qt_l ; d_K U> = 0 hold along the family.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from . import bloch
from .errors import (DegenerateWave, InconsistentDerivative, MissingArtifact,
                     NoConvergence, SingularJacobian, SnapshotFormatError)
from .field2d import Grid2D, PeriodicField, differentiate
from .model import RDSystem, WaveParams, residual, symbol_parts

log = logging.getLogger(__name__)

DENSE_N = 32
INDEPENDENCE_TOL = 1e-8
ARCHIVE_VERSION = 1


@dataclass
class WaveDescriptor:
    sys: RDSystem
    wp: WaveParams
    U: PeriodicField
    residual_norm: float
    tol: float
    anchor_qt: Optional[np.ndarray] = None   # (2, n, N, N) coefficients of qt_1, qt_2
    anchor_ref: Optional[PeriodicField] = None
    newton_log: list = field(default_factory=list)
    dKU: Optional[list] = None               # dKU[p][m] = dU / dK_pm
    dKc: Optional[np.ndarray] = None         # dKc[p, m] = dc / dK_pm
    dKOmega: Optional[np.ndarray] = None     # dKOmega[p, m] = dOmega / dK_pm
    d2KOmega: Optional[np.ndarray] = None    # d2KOmega[p, m, q, r] = d2 Omega / dK_pm dK_qr
    derivative_check: Optional[dict] = None
    path: list = field(default_factory=list)
    constant: bool = False

    @property
    def K(self):
        return self.wp.K

    @property
    def c(self):
        return self.wp.c

    @property
    def Omega(self):
        return self.wp.Omega

    @property
    def grid(self) -> Grid2D:
        return self.U.grid

    def gradU(self):
        return [differentiate(self.U, 1), differentiate(self.U, 2)]


def gram_min(U: PeriodicField) -> float:
    d = [differentiate(U, 1).coeffs, differentiate(U, 2).coeffs]
    G = np.array([[np.vdot(a, b).real for b in d] for a in d])
    return float(np.linalg.eigvalsh(G)[0])


def _symmetrize(coeffs: np.ndarray) -> np.ndarray:
    """Project onto coefficients of real fields."""
    flipped = np.conj(np.roll(np.flip(coeffs, axis=(-2, -1)), 1, axis=(-2, -1)))
    return 0.5 * (coeffs + flipped)


def _c_columns(U: PeriodicField, K) -> np.ndarray:
    """d residual / d c_r = sum_j K_rj d_j U, as band vectors (nP, 2)."""
    d1 = differentiate(U, 1).coeffs
    d2 = differentiate(U, 2).coeffs
    return np.stack([bloch.to_vec(K[r, 0] * d1 + K[r, 1] * d2) for r in range(2)], axis=1)


def adjoint_kernel(L0: np.ndarray, U: PeriodicField, iters: int = 4):
    """Left null space of L0 dual to (d_1 U, d_2 U), by inverse iteration on L0^H."""
    grid = U.grid
    n = U.n
    Q = np.stack([bloch.to_vec(differentiate(U, j).coeffs) for j in (1, 2)], axis=1)
    lu = sla.lu_factor(L0, check_finite=False)
    Y = Q.copy()
    for _ in range(iters):
        Y = sla.lu_solve(lu, Y, trans=2, check_finite=False)
        Y, _ = np.linalg.qr(Y)
    Qt = Y @ np.linalg.inv(Y.conj().T @ Q).conj().T
    return np.stack([_symmetrize(bloch.from_vec(Qt[:, j], grid, n)) for j in range(2)])


def _newton(sys, U0: PeriodicField, K, c0, qt, Uref, tol, max_iter=30, dense=None):
    """Bordered Newton iteration; returns (U, c, residual history, L0 at solution)."""
    grid = U0.grid
    n = sys.n
    dense = grid.N <= DENSE_N if dense is None else dense
    U = U0
    c = np.array(c0, dtype=float)
    qt_vec = np.stack([bloch.to_vec(qt[j]) for j in range(2)])  # (2, nP)
    ref_vec = bloch.to_vec(Uref.coeffs)
    history = []
    L0 = None
    for it in range(max_iter + 1):
        wp = WaveParams(K, c)
        R = bloch.to_vec(residual(sys, U, wp).coeffs)
        phase = qt_vec.conj() @ (bloch.to_vec(U.coeffs) - ref_vec)
        rnorm = float(np.sqrt(np.linalg.norm(R) ** 2 + np.linalg.norm(phase) ** 2))
        history.append(rnorm)
        if rnorm <= tol:
            break
        if it == max_iter:
            raise NoConvergence(f"Newton did not converge in {max_iter} steps (residual {rnorm:.3e})")
        if gram_min(U) < INDEPENDENCE_TOL:
            raise DegenerateWave("d1 U and d2 U became linearly dependent during Newton")
        C = _c_columns(U, K)
        rhs = -np.concatenate([R, phase])
        if dense:
            L0 = bloch.symbol_matrix(sys, U, K, c)
            J = np.block([[L0, C], [qt_vec.conj(), np.zeros((2, 2))]])
            try:
                step = sla.solve(J, rhs, check_finite=False)
            except (np.linalg.LinAlgError, sla.LinAlgError) as exc:
                raise SingularJacobian(str(exc)) from None
            if not np.all(np.isfinite(step)):
                raise SingularJacobian("non-finite Newton step")
        else:
            step = _gmres_step(sys, U, K, c, C, qt_vec, rhs)
        dU = _symmetrize(bloch.from_vec(step[:-2], grid, n))
        U = PeriodicField(grid, U.coeffs + dU, real=True)
        c = c + step[-2:].real
    if gram_min(U) < INDEPENDENCE_TOL:
        raise DegenerateWave("converged to a state without two independent translation modes")
    if dense:
        L0 = bloch.symbol_matrix(sys, U, K, c)
    return U, c, history, L0


def _gmres_step(sys, U, K, c, C, qt_vec, rhs):
    grid = U.grid
    n = sys.n
    nP = C.shape[0]
    # constant-coefficient block preconditioner built from the mean of df(U)
    _, diag = symbol_parts(grid, np.asarray(K), np.asarray(c))
    mean_df = sys.eval_df(U.padded_values().real).mean(axis=(-2, -1))
    idx = bloch._band_index(grid)[0]
    dvals = diag.ravel()[idx]
    blocks = dvals[:, None, None] * np.eye(n) + mean_df[None]
    blocks[np.abs(dvals) < 1e-12] -= np.eye(n)  # keep the zero mode invertible
    inv_blocks = np.linalg.inv(blocks)

    def precond(v):
        x = v[:nP].reshape(n, -1).T
        y = np.einsum("pij,pj->pi", inv_blocks, x).T.ravel()
        return np.concatenate([y, v[nP:]])

    def matvec(v):
        V = bloch.from_vec(v[:nP], grid, n)
        top = bloch.to_vec(bloch.apply_symbol(sys, U, K, c, (0.0, 0.0), V)) + C @ v[nP:]
        return np.concatenate([top, qt_vec.conj() @ v[:nP]])

    A = spla.LinearOperator((nP + 2, nP + 2), matvec=matvec, dtype=complex)
    Mop = spla.LinearOperator((nP + 2, nP + 2), matvec=precond, dtype=complex)
    step, info = spla.gmres(A, rhs, M=Mop, rtol=1e-10, atol=0.0, restart=60, maxiter=50)
    if info != 0:
        raise NoConvergence(f"GMRES failed to converge (info={info})")
    return step


def turing_square_seed(sys: RDSystem, grid: Grid2D, state, K, eps: float, c=(0.0, 0.0)) -> PeriodicField:
    """Constant state plus eps (cos 2 pi x1 + cos 2 pi x2) along the critical eigenvector.

    The eigenvector is the one with largest real part of the constant-state
    symbol on the mode e_1, evaluated with the given K and c.
    """
    state = np.asarray(state, dtype=float)
    M = sys.eval_df(state.reshape(-1, 1, 1))[..., 0, 0]
    Ke1 = np.asarray(K, float)[:, 0] * 2 * np.pi
    lam, vecs = np.linalg.eig(M - Ke1 @ Ke1 * np.eye(sys.n))
    v = vecs[:, np.argmax(lam.real)].real
    v = v / np.linalg.norm(v)
    x1, x2 = grid.x
    bump = np.cos(2 * np.pi * x1) + np.cos(2 * np.pi * x2)
    values = state[:, None, None] + eps * v[:, None, None] * bump
    return PeriodicField.from_values(grid, values, real=True)


def solve_profile(sys: RDSystem, K, seed: PeriodicField, c_seed=(0.0, 0.0), tol: float = 1e-10,
                  max_iter: int = 30) -> WaveDescriptor:
    """Phase-anchored Newton solve of the profile equation."""
    K = np.asarray(K, dtype=float)
    WaveParams(K, c_seed)  # validates K
    if seed.n != sys.n:
        from .errors import ComponentMismatch
        raise ComponentMismatch(f"seed has {seed.n} components, system has {sys.n}")
    if gram_min(seed) < INDEPENDENCE_TOL:
        raise DegenerateWave("seed is not genuinely two-dimensional")
    template = np.stack([differentiate(seed, j).coeffs for j in (1, 2)])
    template = template / np.sqrt(np.sum(np.abs(template) ** 2, axis=(1, 2, 3)))[:, None, None, None]
    U, c, hist1, L0 = _newton(sys, seed, K, c_seed, template, seed, tol, max_iter)
    qt = _anchor_kernel(sys, U, K, c, L0)
    U, c, hist2, L0 = _newton(sys, U, K, c, qt, seed, tol, max_iter)
    qt = _anchor_kernel(sys, U, K, c, L0)
    wp = WaveParams(K, c)
    return WaveDescriptor(sys=sys, wp=wp, U=U, residual_norm=hist2[-1], tol=tol, anchor_qt=qt,
                          anchor_ref=U, newton_log=hist1 + hist2,
                          path=[(K.copy(), c.copy(), wp.Omega.copy())])


def _anchor_kernel(sys, U, K, c, L0):
    if L0 is None:
        # matrix-free regime: the translation modes serve as the phase functionals
        d = np.stack([differentiate(U, j).coeffs for j in (1, 2)])
        Q = np.stack([bloch.to_vec(d[j]) for j in range(2)], axis=1)
        G = Q.conj().T @ Q
        dual = Q @ np.linalg.inv(G).conj().T
        return np.stack([bloch.from_vec(dual[:, j], U.grid, U.n) for j in range(2)])
    return adjoint_kernel(L0, U)


def constant_wave(sys: RDSystem, grid: Grid2D, state, K, c=(0.0, 0.0)) -> WaveDescriptor:
    """Descriptor for a homogeneous state (no Newton, no phase anchor)."""
    U = PeriodicField.constant(grid, np.asarray(state, dtype=float))
    wp = WaveParams(K, c)
    rn = residual(sys, U, wp).norm()
    return WaveDescriptor(sys=sys, wp=wp, U=U, residual_norm=rn, tol=np.inf, constant=True,
                          path=[(wp.K.copy(), wp.c.copy(), wp.Omega.copy())])


def resolve(wd: WaveDescriptor, K, U0: Optional[PeriodicField] = None, c0=None,
            tol: Optional[float] = None) -> WaveDescriptor:
    """Newton solve at a nearby K with the descriptor's phase anchor."""
    K = np.asarray(K, dtype=float)
    U0 = wd.U if U0 is None else U0
    c0 = wd.c if c0 is None else c0
    tol = wd.tol if tol is None else tol
    U, c, hist, _ = _newton(wd.sys, U0, K, c0, wd.anchor_qt, wd.anchor_ref, tol)
    wp = WaveParams(K, c)
    return replace(wd, wp=wp, U=U, residual_norm=hist[-1], newton_log=hist, dKU=None, dKc=None,
                   dKOmega=None, d2KOmega=None, derivative_check=None,
                   path=[(K.copy(), c.copy(), wp.Omega.copy())])


def continue_in_K(wd: WaveDescriptor, K_target, steps: int = 4, max_halvings: int = 6) -> WaveDescriptor:
    """Natural-parameter continuation along the straight path to K_target."""
    K0 = np.array(wd.K)
    K_target = np.asarray(K_target, dtype=float)
    if np.allclose(K0, K_target, rtol=0, atol=0):
        return wd
    path = list(wd.path)
    s, ds = 0.0, 1.0 / max(int(steps), 1)
    cur = wd
    halvings = 0
    while s < 1.0 - 1e-14:
        s_new = min(1.0, s + ds)
        K = K0 + s_new * (K_target - K0)
        try:
            nxt = resolve(cur, K)
        except (NoConvergence, SingularJacobian):
            halvings += 1
            if halvings > max_halvings:
                raise NoConvergence(f"continuation stalled at s={s:.4f} after {max_halvings} halvings")
            ds /= 2
            continue
        cur = nxt
        s = s_new
        path.append((K.copy(), cur.c.copy(), cur.Omega.copy()))
    cur.path = path
    return cur


def _E(p, m):
    E = np.zeros((2, 2))
    E[p, m] = 1.0
    return E


def bordered_dK(wd: WaveDescriptor, L0: Optional[np.ndarray] = None):
    """K-derivatives of (U, c) from the linearised profile equation.

    Solves L_0[dU] + (K^T dc . grad) U = -(2 (K grad)_p d_m U + dG_p(U) d_m U + c_p d_m U)
    with <qt ; dU> = 0 for every entry (p, m).
    """
    sys, U, K, c = wd.sys, wd.U, wd.K, wd.c
    grid = U.grid
    n = sys.n
    if L0 is None:
        L0 = bloch.symbol_matrix(sys, U, K, c)
    C = _c_columns(U, K)
    qt_vec = np.stack([bloch.to_vec(wd.anchor_qt[j]) for j in range(2)])
    J = np.block([[L0, C], [qt_vec.conj(), np.zeros((2, 2))]])
    lu = sla.lu_factor(J, check_finite=False)
    kw, _ = symbol_parts(grid, K, c)
    Up = U.padded_values().real
    dG = sys.eval_dG(Up) if sys.has_flux else None
    dU = [[None, None], [None, None]]
    dc = np.zeros((2, 2, 2))
    for m in range(2):
        dm = differentiate(U, m + 1)
        dmp = dm.padded_values().real
        for p in range(2):
            rhs = 2j * kw[p] * dm.coeffs + c[p] * dm.coeffs
            if dG is not None:
                rhs = rhs + grid.from_padded(np.einsum("ij...,j...->i...", dG[p], dmp))
            b = np.concatenate([-bloch.to_vec(rhs), np.zeros(2)])
            sol = sla.lu_solve(lu, b, check_finite=False)
            dU[p][m] = PeriodicField(grid, _symmetrize(bloch.from_vec(sol[:-2], grid, n)), real=True)
            dc[p, m] = sol[-2:].real
    return dU, dc


def dOmega_from(K, c, dc):
    """dOmega/dK_pm = -E_pm^T c - K^T dc_pm."""
    out = np.zeros((2, 2, 2))
    for p in range(2):
        for m in range(2):
            out[p, m] = -_E(p, m).T @ c - K.T @ dc[p, m]
    return out


def wave_derivatives(wd: WaveDescriptor, h: Optional[float] = None, check_tol: float = 1e-3) -> WaveDescriptor:
    """Fill dKU, dKc, dKOmega, d2KOmega.

    First derivatives come from centred continuation differences with one
    Richardson level, cross-checked against the bordered linear solve.  Second
    derivatives of Omega are centred differences of the bordered first
    derivatives at the shifted waves.
    """
    K = wd.K
    n = wd.sys.n
    grid = wd.grid
    if wd.constant:
        zero = PeriodicField.zeros(grid, n)
        for p in range(2):
            for m in range(2):
                for s in (-1, 1):
                    Ks = K + s * 1e-3 * _E(p, m)
                    if residual(wd.sys, wd.U, WaveParams(Ks, wd.c)).norm() > 1e-10:
                        raise InconsistentDerivative("constant state does not persist under K perturbation")
        dc = np.zeros((2, 2, 2))
        return replace(wd, dKU=[[zero, zero], [zero, zero]], dKc=dc, dKOmega=dOmega_from(K, wd.c, dc),
                       d2KOmega=np.zeros((2, 2, 2, 2, 2)),
                       derivative_check={"max_rel_dKU": 0.0, "max_rel_dKc": 0.0})
    if h is None:
        h = 1e-4 * np.linalg.norm(K, 2)
    tol = min(wd.tol, 1e-12)
    shifted = {}
    for p in range(2):
        for m in range(2):
            for s in (-1.0, -0.5, 0.5, 1.0):
                shifted[p, m, s] = resolve(wd, K + s * h * _E(p, m), tol=tol)
    dU_fd = [[None, None], [None, None]]
    dc_fd = np.zeros((2, 2, 2))
    for p in range(2):
        for m in range(2):
            w = {s: shifted[p, m, s] for s in (-1.0, -0.5, 0.5, 1.0)}
            Dh = (w[1.0].U.coeffs - w[-1.0].U.coeffs) / (2 * h)
            Dh2 = (w[0.5].U.coeffs - w[-0.5].U.coeffs) / h
            dU_fd[p][m] = PeriodicField(grid, (4 * Dh2 - Dh) / 3, real=True)
            ch = (w[1.0].c - w[-1.0].c) / (2 * h)
            ch2 = (w[0.5].c - w[-0.5].c) / h
            dc_fd[p, m] = (4 * ch2 - ch) / 3
    dU_b, dc_b = bordered_dK(wd)
    # errors relative to the size of the whole derivative (some entries vanish by symmetry)
    scale_u = max(max(dU_b[p][m].norm() for p in range(2) for m in range(2)), 1e-12)
    rel_u = max((dU_fd[p][m] - dU_b[p][m]).norm() for p in range(2) for m in range(2)) / scale_u
    scale_c = max(np.abs(dc_b).max(), 1e-6)
    rel_c = float(np.abs(dc_fd - dc_b).max() / scale_c)
    if rel_u > check_tol or rel_c > check_tol:
        raise InconsistentDerivative(
            f"continuation and bordered K-derivatives disagree (dU rel {rel_u:.2e}, dc {rel_c:.2e})")
    dOm = dOmega_from(K, wd.c, dc_fd)
    # second derivatives from bordered first derivatives at shifted waves
    d2 = np.zeros((2, 2, 2, 2, 2))
    for q in range(2):
        for r in range(2):
            vals = {}
            for s in (-1.0, -0.5, 0.5, 1.0):
                ws = shifted[q, r, s]
                _, dcs = bordered_dK(ws)
                vals[s] = dOmega_from(ws.K, ws.c, dcs)
            Dh = (vals[1.0] - vals[-1.0]) / (2 * h)
            Dh2 = (vals[0.5] - vals[-0.5]) / h
            d2[:, :, q, r, :] = (4 * Dh2 - Dh) / 3
    check = {"max_rel_dKU": float(rel_u), "max_rel_dKc": float(rel_c), "h": float(h),
             "d2_asymmetry": float(np.abs(d2 - d2.transpose(2, 3, 0, 1, 4)).max())}
    return replace(wd, dKU=dU_fd, dKc=dc_fd, dKOmega=dOm, d2KOmega=d2, derivative_check=check)


def dKU_apply(wd: WaveDescriptor, M) -> PeriodicField:
    """Directional derivative sum_pm dU/dK_pm M_pm."""
    out = PeriodicField.zeros(wd.grid, wd.sys.n)
    for p in range(2):
        for m in range(2):
            if M[p, m] != 0:
                out = out + wd.dKU[p][m] * float(M[p, m])
    return out


def dKc_apply(wd: WaveDescriptor, M) -> np.ndarray:
    return np.einsum("pmr,pm->r", wd.dKc, np.asarray(M, float))


# ------------------------------------------------------------------ archive


def save_wave(path, wd: WaveDescriptor, model_spec: Optional[dict] = None) -> None:
    """Versioned .npz archive: WaveParams, profile, anchor, derivatives, metadata."""
    arrays = {"K": wd.K, "c": wd.c, "Omega": wd.Omega, "U": wd.U.coeffs}
    if wd.anchor_qt is not None:
        arrays["anchor_qt"] = wd.anchor_qt
        arrays["anchor_ref"] = wd.anchor_ref.coeffs
    if wd.dKU is not None:
        arrays["dKU"] = np.stack([np.stack([wd.dKU[p][m].coeffs for m in range(2)]) for p in range(2)])
        arrays["dKc"] = wd.dKc
        arrays["dKOmega"] = wd.dKOmega
        arrays["d2KOmega"] = wd.d2KOmega
    meta = {
        "version": ARCHIVE_VERSION,
        "model": model_spec or {"name": wd.sys.name, "params": wd.sys.params},
        "N": wd.grid.N,
        "n": wd.sys.n,
        "tol": wd.tol,
        "residual_norm": wd.residual_norm,
        "constant": wd.constant,
        "newton_log": wd.newton_log,
        "derivative_check": wd.derivative_check,
    }
    arrays["meta"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_wave(path, sys: Optional[RDSystem] = None) -> WaveDescriptor:
    from .model import make_system
    try:
        data = np.load(path, allow_pickle=False)
    except FileNotFoundError:
        raise MissingArtifact(f"wave archive {path} not found") from None
    except (OSError, ValueError) as exc:
        raise SnapshotFormatError(f"cannot read wave archive {path}: {exc}") from None
    meta = json.loads(bytes(data["meta"]).decode())
    if meta.get("version") != ARCHIVE_VERSION:
        raise SnapshotFormatError(f"unsupported wave archive version {meta.get('version')}")
    if sys is None:
        sys = make_system(meta["model"]["name"], **meta["model"].get("params", {}))
    grid = Grid2D(int(meta["N"]))
    U = PeriodicField(grid, data["U"], real=True)
    wd = WaveDescriptor(sys=sys, wp=WaveParams(data["K"], data["c"]), U=U,
                        residual_norm=meta["residual_norm"], tol=meta["tol"],
                        newton_log=meta.get("newton_log", []), constant=meta.get("constant", False),
                        derivative_check=meta.get("derivative_check"))
    if "anchor_qt" in data:
        wd.anchor_qt = data["anchor_qt"]
        wd.anchor_ref = PeriodicField(grid, data["anchor_ref"], real=True)
    if "dKU" in data:
        d = data["dKU"]
        wd.dKU = [[PeriodicField(grid, d[p, m], real=True) for m in range(2)] for p in range(2)]
        wd.dKc = data["dKc"]
        wd.dKOmega = data["dKOmega"]
        wd.d2KOmega = data["d2KOmega"]
    return wd
