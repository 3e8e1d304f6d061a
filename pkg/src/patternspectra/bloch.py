"""Bloch symbols, spectra, reduced 2x2 symbols and their low-frequency expansion.

The Galerkin matrix of L_xi acts on the retained Fourier modes (Nyquist
excluded), component-major: entry ``i * P + p`` is component ``i`` at band mode
``p``.  It is the exact Jacobian of the discrete residual, so multiplication by
a coefficient field a(x) sampled on the padded grid has entries
``a_hat[(k - k') mod M]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .errors import ExpansionFailure, GapCollapse, InconsistentExpansion
from .field2d import Grid2D, PeriodicField
from .model import symbol_parts

DENSE_LIMIT = 4096


# ------------------------------------------------------------------ Galerkin


@lru_cache(maxsize=8)
def _band_index(grid: Grid2D):
    band = grid.band.ravel()
    idx = np.flatnonzero(band)
    k1 = grid.kk[0].ravel()[idx].astype(int)
    k2 = grid.kk[1].ravel()[idx].astype(int)
    M = grid.M
    d1 = (k1[:, None] - k1[None, :]) % M
    d2 = (k2[:, None] - k2[None, :]) % M
    return idx, d1, d2


def band_size(grid: Grid2D) -> int:
    return _band_index(grid)[0].size


def to_vec(coeffs: np.ndarray) -> np.ndarray:
    """(n, N, N) coefficients -> flat band vector."""
    grid_N = coeffs.shape[-1]
    idx = _band_index(Grid2D(grid_N))[0]
    n = coeffs.shape[0]
    return coeffs.reshape(n, -1)[:, idx].ravel()


def from_vec(vec: np.ndarray, grid: Grid2D, n: int) -> np.ndarray:
    idx = _band_index(grid)[0]
    out = np.zeros((n, grid.N * grid.N), dtype=complex)
    out[:, idx] = np.asarray(vec).reshape(n, -1)
    return out.reshape(n, grid.N, grid.N)


def mult_matrix(grid: Grid2D, a_pad: np.ndarray) -> np.ndarray:
    """Galerkin matrix of V -> a(x) V for a matrix field a of shape (n, n, M, M)."""
    _, d1, d2 = _band_index(grid)
    n = a_pad.shape[0]
    P = d1.shape[0]
    ah = grid.padded_coefficients(a_pad)
    out = np.empty((n, P, n, P), dtype=complex)
    for i in range(n):
        for j in range(n):
            out[i, :, j, :] = ah[i, j][d1, d2]
    return out.reshape(n * P, n * P)


def _diag_vec(grid, values, n):
    idx = _band_index(grid)[0]
    return np.tile(values.ravel()[idx], n)


def symbol_matrix(sys, U: PeriodicField, K, c, xi=(0.0, 0.0)) -> np.ndarray:
    """Dense Galerkin matrix of L_xi linearised about U."""
    grid = U.grid
    n = sys.n
    kw, diag = symbol_parts(grid, np.asarray(K, float), np.asarray(c, float), xi)
    Up = U.padded_values().real
    L = mult_matrix(grid, sys.eval_df(Up))
    if sys.has_flux:
        dG = sys.eval_dG(Up)
        for a in range(2):
            L += _diag_vec(grid, 1j * kw[a], n)[:, None] * mult_matrix(grid, dG[a])
    L[np.diag_indices_from(L)] += _diag_vec(grid, diag, n)
    return L


def apply_symbol(sys, U: PeriodicField, K, c, xi, V: np.ndarray) -> np.ndarray:
    """Matrix-free L_xi V on (n, N, N) coefficients."""
    grid = U.grid
    kw, diag = symbol_parts(grid, np.asarray(K, float), np.asarray(c, float), xi)
    Up = U.padded_values().real
    Vp = grid.to_padded(V)
    out = diag * V + grid.from_padded(np.einsum("ij...,j...->i...", sys.eval_df(Up), Vp))
    if sys.has_flux:
        dG = sys.eval_dG(Up)
        for a in range(2):
            out = out + 1j * kw[a] * grid.from_padded(np.einsum("ij...,j...->i...", dG[a], Vp))
    return out * grid.band


def critical_subspace(L: np.ndarray, k: int = 2, iters: int = 12, shift: complex = 0.0):
    """Right and left invariant subspaces for the k eigenvalues nearest ``shift``.

    Block inverse iteration on L - shift with one LU factorisation, followed by a
    Rayleigh-Ritz step.  Returns (R, Lf, eigenvalues) with Lf^H R = I.
    """
    n = L.shape[0]
    # a tiny offset keeps the factorisation usable when L - shift is exactly singular
    delta = 1e-10 * (1.0 + 1.0j) * max(1.0, float(np.abs(np.diag(L)).max()))
    lu = sla.lu_factor(L - (shift + delta) * np.eye(n), check_finite=False)
    rng = np.random.default_rng(12345)
    X = rng.standard_normal((n, k + 2)) + 0j
    Y = X.copy()
    for _ in range(iters):
        X, _ = np.linalg.qr(sla.lu_solve(lu, X, check_finite=False))
        Y, _ = np.linalg.qr(sla.lu_solve(lu, Y, trans=2, check_finite=False))
    # Ritz values of the projected pencil, keep the k nearest the shift
    H = np.linalg.solve(Y.conj().T @ X, Y.conj().T @ (L @ X))
    mu, W = np.linalg.eig(H)
    order = np.argsort(np.abs(mu - shift))[:k]
    R = X @ W[:, order]
    Hl = np.linalg.solve(X.conj().T @ Y, X.conj().T @ (L.conj().T @ Y))
    nu, Wl = np.linalg.eig(Hl)
    order_l = np.argsort(np.abs(nu - np.conj(shift)))[:k]
    Lf = Y @ Wl[:, order_l]
    Lf = Lf @ np.linalg.inv(Lf.conj().T @ R).conj().T
    return R, Lf, mu[order]


@dataclass
class BlochSymbol:
    xi: np.ndarray
    matrix: np.ndarray


@dataclass
class BlochReduction:
    xi: np.ndarray
    D: np.ndarray
    q: list
    qt: list
    normalized: bool = False
    critical: Optional[np.ndarray] = None


@dataclass
class LowFreqExpansion:
    A1: np.ndarray
    A2: np.ndarray
    B11: np.ndarray
    B12: np.ndarray
    B22: np.ndarray
    fit_residual: float
    cross_check: dict = field(default_factory=dict)

    @property
    def A(self):
        return [self.A1, self.A2]

    @property
    def B(self):
        return [[self.B11, self.B12], [self.B12, self.B22]]

    def A_of(self, zeta):
        return self.A1 * zeta[0] + self.A2 * zeta[1]

    def B_of(self, zeta):
        return self.B11 * zeta[0] ** 2 + 2 * self.B12 * zeta[0] * zeta[1] + self.B22 * zeta[1] ** 2

    def DW(self, xi):
        """A(i xi) + B(i xi)."""
        z = 1j * np.asarray(xi, dtype=float)
        return self.A_of(z) + self.B_of(z)

    def to_dict(self):
        return {"A1": self.A1.tolist(), "A2": self.A2.tolist(), "B11": self.B11.tolist(),
                "B12": self.B12.tolist(), "B22": self.B22.tolist(),
                "fit_residual": self.fit_residual, "cross_check": self.cross_check}


def _check_xi(xi):
    xi = np.asarray(xi, dtype=float).reshape(2)
    if np.any(np.abs(xi) > np.pi + 1e-12):
        raise ValueError(f"Floquet parameter {xi} outside [-pi, pi]^2")
    return xi


def assemble_symbol(wd, xi) -> BlochSymbol:
    xi = _check_xi(xi)
    return BlochSymbol(xi, symbol_matrix(wd.sys, wd.U, wd.K, wd.c, xi))


def _eigvals(wd, xi, k_rightmost=None):
    L = symbol_matrix(wd.sys, wd.U, wd.K, wd.c, xi)
    if L.shape[0] <= DENSE_LIMIT:
        ev = np.linalg.eigvals(L)
    else:
        # shift-invert around 0: only the part of the spectrum near the axis
        from scipy.sparse.linalg import eigs
        ev = eigs(L, k=k_rightmost or 20, sigma=0.0, return_eigenvectors=False)
    return ev[np.lexsort((ev.imag, -ev.real))]


@dataclass
class SpectrumSlice:
    xi: np.ndarray          # (m, 2)
    eigenvalues: list       # per-xi arrays sorted by decreasing real part
    max_re: float
    max_re_over_xi2: float
    cluster_ids: list

    def rows(self):
        for xi, ev, cid in zip(self.xi, self.eigenvalues, self.cluster_ids):
            for lam, c in zip(ev, cid):
                yield (xi[0], xi[1], lam.real, lam.imag, c)


def spectrum_slice(wd, xi_list, n_critical: int = 2) -> SpectrumSlice:
    """Eigenvalues of L_xi over a list of Floquet parameters.

    Cluster id 0 marks the ``n_critical`` eigenvalues of smallest modulus at each
    xi (the branch continued from the translation kernel), 1 the rest.
    """
    xs = np.array([_check_xi(x) for x in xi_list])
    evs, ids = [], []
    max_re = -np.inf
    max_ratio = -np.inf
    for xi in xs:
        try:
            ev = _eigvals(wd, xi)
        except (np.linalg.LinAlgError, sla.LinAlgError) as exc:
            from .errors import NumericalFailure
            raise NumericalFailure(f"eigensolver failure at xi={xi}: {exc}") from None
        cid = np.ones(ev.size, dtype=int)
        if not wd.constant:
            cid[np.argsort(np.abs(ev))[:n_critical]] = 0
        evs.append(ev)
        ids.append(cid)
        mr = float(ev.real.max())
        max_re = max(max_re, mr)
        r2 = float(xi @ xi)
        if r2 > 0:
            max_ratio = max(max_ratio, mr / r2)
    return SpectrumSlice(xs, evs, max_re, max_ratio, ids)


def write_spectrum_csv(path, sl: SpectrumSlice) -> None:
    with open(path, "w") as fh:
        fh.write("xi1,xi2,re,im,cluster\n")
        for r in sl.rows():
            fh.write(f"{r[0]:.17g},{r[1]:.17g},{r[2]:.17g},{r[3]:.17g},{r[4]}\n")


def principal_angles(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    qa, _ = np.linalg.qr(A)
    qb, _ = np.linalg.qr(B)
    s = np.linalg.svd(qa.conj().T @ qb, compute_uv=False)
    return np.arccos(np.clip(s, -1.0, 1.0))


def check_D2(wd, tol: float = 1e-6, angle_tol: float = 1e-4) -> dict:
    """Algebraic multiplicity two of the eigenvalue 0 and alignment with the translation modes."""
    L0 = symbol_matrix(wd.sys, wd.U, wd.K, wd.c)
    grid = wd.grid
    T = np.stack([to_vec(d.coeffs) for d in wd.gradU()], axis=1)
    tnorm = np.linalg.norm(T, axis=0)
    if L0.shape[0] <= DENSE_LIMIT:
        ev, vecs = np.linalg.eig(L0)
    else:
        R, _, ev = critical_subspace(L0, k=6)
        vecs = R
    near = np.abs(ev) < tol
    on_axis = (np.abs(ev.real) < tol) & ~near
    order = np.argsort(np.abs(ev))
    result = {
        "kernel_dim": int(near.sum()),
        "axis_eigenvalues": int(on_axis.sum()),
        "smallest": [complex(e) for e in ev[order[:4]]],
        "gap": float(np.abs(ev[order[2]])) if ev.size > 2 else np.inf,
        "translation_mode_norms": tnorm.tolist(),
    }
    if np.any(tnorm < 1e-10) or near.sum() != 2:
        result.update(angle=float(np.pi / 2), passed=False)
        if np.any(tnorm < 1e-10):
            result["reason"] = "translation modes vanish"
        else:
            result["reason"] = f"kernel dimension {int(near.sum())}"
        return result
    # 2D generalized kernel: an invariant subspace for the two smallest eigenvalues
    R, _, _ = critical_subspace(L0, k=2)
    # Gram-based independence of d1 U, d2 U (stripe patterns fail here)
    Gm = np.linalg.svd(T / tnorm, compute_uv=False)
    angle = float(principal_angles(R, T).max()) if Gm[-1] > 1e-8 else float(np.pi / 2)
    result["angle"] = angle
    result["translation_sv_min"] = float(Gm[-1])
    result["passed"] = bool(angle <= angle_tol and not on_axis.any())
    if not result["passed"]:
        result["reason"] = "eigenspace not aligned with translation modes" if angle > angle_tol else \
            "extra eigenvalue on the imaginary axis"
    return result


class RayTransport:
    """Critical bases of L_xi transported along rays from xi = 0.

    Every step projects the previous bases onto the current critical invariant
    subspaces and restores duality; results are cached per wave.
    """

    def __init__(self, wd, step: float = 0.05, gap_tol: Optional[float] = None):
        self.wd = wd
        self.step = step
        grid = wd.grid
        if getattr(wd, "constant", False) and wd.sys.n == 2:
            # homogeneous two-component state: the critical space is the mean mode
            mean = np.zeros((2, 2, grid.N, grid.N), complex)
            mean[0, 0, 0, 0] = mean[1, 1, 0, 0] = 1.0
            self.Q0 = np.stack([to_vec(mean[j]) for j in range(2)], axis=1)
            self.Qt0 = self.Q0.copy()
        elif wd.anchor_qt is None:
            raise ValueError("reduction requires a phase-anchored wave descriptor")
        else:
            self.Q0 = np.stack([to_vec(d.coeffs) for d in wd.gradU()], axis=1)
            self.Qt0 = np.stack([to_vec(wd.anchor_qt[j]) for j in range(2)], axis=1)
        # duality against the exact translation modes
        self.Qt0 = self.Qt0 @ np.linalg.inv(self.Qt0.conj().T @ self.Q0).conj().T
        L0 = symbol_matrix(wd.sys, wd.U, wd.K, wd.c)
        if L0.shape[0] <= DENSE_LIMIT:
            ev = np.linalg.eigvals(L0)
            ev = ev[np.argsort(np.abs(ev))]
        else:
            _, _, ev = critical_subspace(L0, k=4)
        self.lambda3 = complex(ev[2])
        self.gap_tol = 0.25 * abs(ev[2].real) if gap_tol is None else gap_tol

    def bases(self, xi):
        xi = np.asarray(xi, dtype=float)
        r = float(np.linalg.norm(xi))
        Q, Qt = self.Q0, self.Qt0
        if r == 0:
            return Q, Qt, np.zeros(2, complex)
        nsteps = max(1, int(np.ceil(r / self.step)))
        lam = None
        for s in range(1, nsteps + 1):
            xs = xi * s / nsteps
            L = symbol_matrix(self.wd.sys, self.wd.U, self.wd.K, self.wd.c, xs)
            R, Lf, lam = critical_subspace(L, k=2)
            Q = R @ (Lf.conj().T @ Q)
            Qt = Lf @ (R.conj().T @ Qt)
            Qt = Qt @ np.linalg.inv(Qt.conj().T @ Q).conj().T
            self._check_gap(L, R, Lf, lam, xs)
        return Q, Qt, lam

    def _check_gap(self, L, R, Lf, lam, xs):
        # nearest eigenvalue of L restricted to the complementary subspace
        P = np.eye(L.shape[0]) - R @ Lf.conj().T
        Lc = P @ L
        try:
            _, _, other = critical_subspace(Lc + R @ Lf.conj().T * (1e3 + 0j), k=1, iters=8)
        except (np.linalg.LinAlgError, sla.LinAlgError):
            return
        if np.abs(other[0] - lam).min() < self.gap_tol:
            raise GapCollapse(f"critical eigenvalues merge with the rest of the spectrum at xi={xs}")


def _transport(wd, gap_tol=None) -> RayTransport:
    tr = getattr(wd, "_ray_transport", None)
    if tr is None or tr.wd is not wd or (gap_tol is not None and tr.gap_tol != gap_tol):
        tr = RayTransport(wd, gap_tol=gap_tol)
        object.__setattr__(wd, "_ray_transport", tr)
    return tr


def _normalization(wd, tr: RayTransport, h: float = 1e-4):
    """First-order basis correction making d_xi q_j(eta) = i dU/dK_j (K eta) on span(q^0)."""
    if wd.dKU is None:
        raise ValueError("normalized reduction needs wave_derivatives() first")
    Qt0 = tr.Qt0
    Am = []
    for m in range(2):
        e = np.zeros(2)
        e[m] = h
        Qp, _, _ = tr.bases(e)
        Qm, _, _ = tr.bases(-e)
        dq = (Qp - Qm) / (2 * h)
        Ke = wd.K[:, m]
        target = np.stack([
            to_vec(sum(wd.dKU[p][j].coeffs * Ke[p] for p in range(2))) for j in range(2)], axis=1)
        Am.append(-(Qt0.conj().T @ dq) + 1j * (Qt0.conj().T @ target))
    return Am


def reduce_symbol(wd, xi, normalized: bool = True, xi0: float = 0.2, gap_tol=None) -> BlochReduction:
    """2x2 reduced symbol D_xi = (<qt_l ; L_xi q_j>) with ray-transported bases."""
    xi = _check_xi(xi)
    if np.linalg.norm(xi) > xi0 + 1e-15:
        raise ValueError(f"|xi| = {np.linalg.norm(xi):.3g} exceeds the reduction cutoff {xi0}")
    tr = _transport(wd, gap_tol)
    Q, Qt, lam = tr.bases(xi)
    if normalized:
        Am = getattr(tr, "_Am", None)
        if Am is None:
            Am = _normalization(wd, tr)
            tr._Am = Am
        T = np.eye(2) + xi[0] * Am[0] + xi[1] * Am[1]
        Q = Q @ T
        Qt = Qt @ np.linalg.inv(T).conj().T
    L = symbol_matrix(wd.sys, wd.U, wd.K, wd.c, xi)
    D = Qt.conj().T @ (L @ Q)
    grid, n = wd.grid, wd.sys.n
    q = [PeriodicField(grid, from_vec(Q[:, j], grid, n)) for j in range(2)]
    qt = [PeriodicField(grid, from_vec(Qt[:, j], grid, n)) for j in range(2)]
    return BlochReduction(xi, D, q, qt, normalized, lam)


def first_order_formula(wd) -> list:
    """A_m predicted from the speed derivatives: A(eta) = -K^T [d_K1 c(K eta), d_K2 c(K eta)]."""
    out = []
    for m in range(2):
        Ke = wd.K[:, m]
        C = np.stack([np.einsum("pr,p->r", wd.dKc[:, j, :], Ke) for j in range(2)], axis=1)
        out.append(-wd.K.T @ C)
    return out


def expand_symbol(wd, h: float = 1e-3, cross_tol: float = 1e-4, normalized: bool = True) -> LowFreqExpansion:
    """A_j and B_jm from centred differences of D_xi at 0."""
    def D(x1, x2):
        return reduce_symbol(wd, (x1, x2), normalized=normalized).D

    try:
        D0 = D(0.0, 0.0)
        Dp = [D(h, 0.0), D(0.0, h)]
        Dm = [D(-h, 0.0), D(0.0, -h)]
        Dpp, Dpm, Dmp, Dmm = D(h, h), D(h, -h), D(-h, h), D(-h, -h)
    except GapCollapse as exc:
        raise ExpansionFailure(f"reduction failed on the expansion stencil: {exc}") from None
    A = [-1j * (Dp[m] - Dm[m]) / (2 * h) for m in range(2)]
    Bd = [-0.5 * (Dp[m] - 2 * D0 + Dm[m]) / h**2 for m in range(2)]
    B12 = -0.5 * (Dpp - Dpm - Dmp + Dmm) / (4 * h**2)
    imag_part = max(np.abs(M.imag).max() for M in A + Bd + [B12])
    exp = LowFreqExpansion(A[0].real, A[1].real, Bd[0].real, B12.real, Bd[1].real, 0.0)
    # cubic remainder on a small circle
    r = 2 * h
    res = 0.0
    for th in np.linspace(0, np.pi, 5, endpoint=False):
        xi = r * np.array([np.cos(th), np.sin(th)])
        res = max(res, np.abs(D(*xi) - exp.DW(xi)).max() / r**3)
    exp.fit_residual = float(res)
    exp.cross_check = {"imag_part": float(imag_part), "D0_norm": float(np.abs(D0).max())}
    if wd.dKc is not None and not getattr(wd, "constant", False):
        F = first_order_formula(wd)
        scale = max(np.abs(F[0]).max(), np.abs(F[1]).max())
        err = max(np.abs(exp.A1 - F[0]).max(), np.abs(exp.A2 - F[1]).max())
        rel = err / scale if scale > 1e-8 else err
        exp.cross_check.update(first_order_error=float(rel), first_order_scale=float(scale))
        if rel > cross_tol:
            raise InconsistentExpansion(
                f"first-order coefficients disagree with the speed derivatives (rel {rel:.2e})")
    return exp
