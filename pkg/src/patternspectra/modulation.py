"""Classification of the first-order modulation system and the averaged operator D^(0).

Conventions.  The reduced symbol expands as D(i xi) = i A(xi) - B(xi) + O(|xi|^3)
with A(xi) = A_1 xi_1 + A_2 xi_2 and B(xi) = B_11 xi_1^2 + 2 B_12 xi_1 xi_2 + B_22 xi_2^2,
so a positive B is damping.  In Case A the table stores the damping rates
beta_hat (Re > 0): the eigenvalues of D^(0)(i r e(w)) are i r alpha_hat - r^2 beta_hat.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ExpansionFailure, ValidationFailure

CASE_A = "CaseA"
CASE_B = "CaseB"
CASE_B0 = "CaseB0"
NOT_HYPERBOLIC = "NotHyperbolic"


def unit(omega):
    return np.array([np.cos(omega), np.sin(omega)])


def _scale(*mats):
    return max(1.0, max(float(np.abs(M).max()) for M in mats))


# ------------------------------------------------------------ classification


@dataclass
class Classification:
    tag: str
    witness: Optional[np.ndarray] = None
    Qm: Optional[np.ndarray] = None
    ell: Optional[np.ndarray] = None
    A00: Optional[np.ndarray] = None
    P: Optional[np.ndarray] = None
    detail: str = ""

    @property
    def hyperbolic(self):
        return self.tag != NOT_HYPERBOLIC


def _rows(A1, A2):
    A1 = np.asarray(A1, float)
    A2 = np.asarray(A2, float)
    a = np.array([A1[0, 0], A2[0, 0]])
    b = np.array([A1[0, 1], A2[0, 1]])
    c = np.array([A1[1, 0], A2[1, 0]])
    d = np.array([A1[1, 1], A2[1, 1]])
    return a, b, c, d


def classify_hyperbolic(A1, A2, tol: float = 1e-10) -> Classification:
    """Strictly hyperbolic / simultaneously diagonalisable / scalar / not hyperbolic."""
    a, b, c, d = _rows(A1, A2)
    s = _scale(A1, A2)
    amd = a - d
    Qm = 0.5 * (np.outer(b, c) + np.outer(c, b)) + 0.25 * np.outer(amd, amd)
    qev, qvec = np.linalg.eigh(Qm)
    if qev[0] > tol * s**2:
        return Classification(CASE_A, Qm=Qm, detail="quadratic form positive definite")
    V = np.stack([amd, b, c], axis=1)  # 2 x 3
    u, sv, _ = np.linalg.svd(V)
    if sv[0] <= tol * s:
        return Classification(CASE_B0, Qm=Qm, P=np.eye(2), detail="both matrices scalar")
    if sv[1] <= tol * s:
        ell = u[:, 0]
        alpha, beta, gamma = amd @ ell, b @ ell, c @ ell
        A00 = np.array([[alpha / 2, beta], [gamma, -alpha / 2]])
        disc = alpha**2 / 4 + beta * gamma
        if disc > tol * s**2:
            ev, P_inv = np.linalg.eig(A00)
            P = np.linalg.inv(P_inv.real)
            return Classification(CASE_B, Qm=Qm, ell=ell, A00=A00, P=P,
                                  detail="colinear, residual matrix diagonalisable over R")
        kind = "Jordan block" if abs(disc) <= tol * s**2 else "complex eigenvalues"
        return Classification(NOT_HYPERBOLIC, witness=ell, Qm=Qm, ell=ell, A00=A00,
                              detail=f"colinear, residual matrix has a {kind}")
    return Classification(NOT_HYPERBOLIC, witness=qvec[:, 0], Qm=Qm,
                          detail="quadratic form not positive definite and not colinear")


def brute_force_hyperbolic(A1, A2, M: int = 4096, tol: float = 1e-9, cond_max: float = 1e3):
    """Direction-wise test: (all directions real-diagonalisable, all strictly distinct)."""
    A1 = np.asarray(A1, float)
    A2 = np.asarray(A2, float)
    s = _scale(A1, A2)
    w = 2 * np.pi * np.arange(M) / M
    Ae = np.cos(w)[:, None, None] * A1 + np.sin(w)[:, None, None] * A2
    tr = Ae[:, 0, 0] + Ae[:, 1, 1]
    det = Ae[:, 0, 0] * Ae[:, 1, 1] - Ae[:, 0, 1] * Ae[:, 1, 0]
    disc = tr**2 / 4 - det
    distinct = disc > tol * s**2
    # near a crossing a diagonalisable A(e) has a traceless part of the size of
    # the eigenvalue split (times the eigenbasis condition); a Jordan block does not
    traceless = np.abs(Ae - (tr / 2)[:, None, None] * np.eye(2)).max(axis=(1, 2))
    split = np.sqrt(np.maximum(disc, 0.0))
    diagonalisable = (disc > -tol * s**2) & (traceless <= cond_max * split + tol * s)
    return bool(np.all(distinct | diagonalisable)), bool(np.all(distinct))


def symmetrizer(A1, A2, cl: Optional[Classification] = None, tol: float = 1e-10) -> np.ndarray:
    """Friedrichs symmetrizer, validated (S > 0 and S A_j symmetric)."""
    A1 = np.asarray(A1, float)
    A2 = np.asarray(A2, float)
    cl = classify_hyperbolic(A1, A2) if cl is None else cl
    if cl.tag == NOT_HYPERBOLIC:
        raise ValidationFailure("no symmetrizer: system is not hyperbolic")
    a, b, c, d = _rows(A1, A2)
    if cl.tag == CASE_A:
        coef = np.linalg.solve(np.stack([b, a - d], axis=1), c)
        alpha, beta = coef
        if not alpha > beta**2:
            raise ValidationFailure(f"strict hyperbolicity requires alpha > beta^2 ({alpha}, {beta})")
        S = np.array([[alpha, -beta], [-beta, 1.0]])
    elif cl.tag == CASE_B0:
        S = np.eye(2)
    else:
        _, beta, gamma = cl.A00[0, 0], cl.A00[0, 1], cl.A00[1, 0]
        if beta * gamma > 0:
            S = np.diag([np.sqrt(gamma / beta), np.sqrt(beta / gamma)])
        elif abs(beta) + abs(gamma) == 0:
            S = np.eye(2)
        else:
            S = cl.P.T @ cl.P
    validate_symmetrizer(S, A1, A2, tol)
    return S


def validate_symmetrizer(S, A1, A2, tol=1e-10):
    s = _scale(A1, A2) * _scale(S)
    if np.abs(S - S.T).max() > tol * _scale(S):
        raise ValidationFailure("symmetrizer is not symmetric")
    if np.linalg.eigvalsh(0.5 * (S + S.T))[0] <= 0:
        raise ValidationFailure("symmetrizer is not positive definite")
    for A in (A1, A2):
        SA = S @ A
        if np.abs(SA - SA.T).max() > tol * s:
            raise ValidationFailure("S A_j is not symmetric")
    return True


# ------------------------------------------------------------ diffusivity


def _B_of(B11, B12, B22, e):
    return B11 * e[0] ** 2 + 2 * B12 * e[0] * e[1] + B22 * e[1] ** 2


def diffusivity_check(A1, A2, B11, B12, B22, M: int = 256, rel_threshold: float = 1e-3,
                      scalar_tol: float = 1e-8) -> dict:
    """Per-direction damping margins of the second-order part along the first-order eigenbasis."""
    A1, A2 = np.asarray(A1, float), np.asarray(A2, float)
    Bs = [np.asarray(B, float) for B in (B11, B12, B22)]
    sA = _scale(A1, A2)
    sB = max(float(np.abs(B).max()) for B in Bs)
    rows = []
    theta = np.inf
    for k in range(M):
        w = 2 * np.pi * k / M
        e = unit(w)
        Ae = A1 * e[0] + A2 * e[1]
        Be = _B_of(*Bs, e)
        tr = np.trace(Ae)
        disc = tr**2 / 4 - np.linalg.det(Ae)
        if np.abs(Ae - tr / 2 * np.eye(2)).max() <= scalar_tol * sA:
            margins = np.linalg.eigvals(Be).real
            kind = "scalar"
        elif disc > (scalar_tol * sA) ** 2:
            lam, V = np.linalg.eig(Ae)
            lam, V = lam.real, V.real
            Lt = np.linalg.inv(V)  # rows: left eigenvectors with <l_j, V_j> = 1
            margins = np.array([Lt[j] @ Be @ V[:, j] for j in range(2)])
            kind = "strict"
        else:
            margins = np.array([-np.inf])
            kind = "degenerate"
        m = float(np.min(margins))
        theta = min(theta, m)
        rows.append({"omega": w, "kind": kind, "margin": m})
    return {"theta_max": float(theta), "passed": bool(theta >= rel_threshold * sB and theta > 0),
            "B_scale": sB, "directions": rows}


def eigen_expansion(DW: Callable, direction, radii, branch_speed: float):
    """Track the eigenvalue of DW(r e) with Im(lambda)/r near ``branch_speed``; returns (r, lambda)."""
    e = np.asarray(direction, float)
    out = []
    for r in radii:
        lam = np.linalg.eigvals(DW(r * e))
        out.append(lam[np.argmin(np.abs(lam.imag / r - branch_speed))])
    return np.asarray(radii, float), np.array(out)


def counterexample_D(xi):
    """The 2x2 example whose diffusive second-order part fails against its first-order part."""
    xi = np.asarray(xi, float)
    r2 = xi @ xi
    return 1j * np.array([[xi[0], 0.0], [0.0, 0.0]]) + r2 * np.array([[0.0, 1.0], [-1.0, -1.0]])


def fit_branch_coefficients(r, lam, powers):
    """Least-squares fit lam(r) = sum_k a_k r^k over the given powers (complex a_k)."""
    V = np.stack([r**p for p in powers], axis=1)
    # weight so that every radius carries comparable relative information
    w = 1.0 / r ** max(powers)
    coef, *_ = np.linalg.lstsq(V * w[:, None], lam * w, rcond=None)
    return dict(zip(powers, coef))


# ------------------------------------------------------------ Lambda^K


def lambda_coeffs(wd) -> np.ndarray:
    """Table Lam[j, l, p, m] of the second-order modulation coefficients."""
    from . import bloch
    from .field2d import differentiate
    from .model import symbol_parts
    if wd.dKU is None or wd.dKc is None:
        raise ValueError("lambda_coeffs needs wave_derivatives() first")
    if wd.constant:
        # homogeneous state: only the identity part survives
        Lam = np.zeros((2, 2, 2, 2))
        for j in range(2):
            for l in range(2):
                Lam[j, l, j, l] = 1.0
        return Lam
    grid = wd.grid
    sys, U, K, c = wd.sys, wd.U, wd.K, wd.c
    Q = np.stack([bloch.to_vec(d.coeffs) for d in wd.gradU()], axis=1)
    Qt = np.stack([bloch.to_vec(wd.anchor_qt[j]) for j in range(2)], axis=1)
    Qt = Qt @ np.linalg.inv(Qt.conj().T @ Q).conj().T
    kw, _ = symbol_parts(grid, K, c)
    dG = sys.eval_dG(U.padded_values().real) if sys.has_flux else None
    Lam = np.zeros((2, 2, 2, 2))
    for p in range(2):
        for m in range(2):
            V = wd.dKU[p][m]
            Kdc = K.T @ wd.dKc[p, m]
            Vp = V.padded_values().real if dG is not None else None
            for j in range(2):
                L1 = 2j * kw[j] * V.coeffs + c[j] * V.coeffs
                if dG is not None:
                    L1 = L1 + grid.from_padded(np.einsum("ik...,k...->i...", dG[j], Vp))
                extra = sum(wd.dKU[j][r].coeffs * Kdc[r] for r in range(2))
                val = Qt.conj().T @ bloch.to_vec(L1 + extra)
                for l in range(2):
                    Lam[j, l, p, m] = (1.0 if (l == m and j == p) else 0.0) + val[l].real
    return Lam


def lambda_apply(Lam, v) -> np.ndarray:
    """B-like matrix sum_{j,p} Lam[j, l, p, m] v_j v_p (real argument)."""
    v = np.asarray(v, float)
    return np.einsum("jlpm,j,p->lm", Lam, v, v)


def expansion_from_lambda(Lam, K):
    """B_11, B_12, B_22 implied by Lambda^K: B(eta) = Lam[K eta](K eta)."""
    K = np.asarray(K, float)
    B11 = lambda_apply(Lam, K[:, 0])
    B22 = lambda_apply(Lam, K[:, 1])
    Bd = lambda_apply(Lam, K[:, 0] + K[:, 1])
    return B11, 0.5 * (Bd - B11 - B22), B22


# ------------------------------------------------------------ Lambda_0


@dataclass
class AngularTable:
    """Per-direction eigen-data on M uniform angles (Case A)."""

    omega: np.ndarray
    alpha: np.ndarray        # (2, M) real speeds alpha_hat_j(omega)
    beta: np.ndarray         # (2, M) complex damping rates, Re > 0
    proj: np.ndarray         # (2, M, 2, 2) projectors pi_j^(0)(omega)

    @property
    def M(self):
        return self.omega.size

    def _interp(self, table, w):
        """Trigonometric interpolation of 2 pi periodic samples."""
        M = self.M
        ch = np.fft.fft(table, axis=-1) / M
        k = np.fft.fftfreq(M, 1.0 / M)
        if M % 2 == 0:
            ch[..., M // 2] *= 0.5
            ch = np.concatenate([ch, ch[..., M // 2 : M // 2 + 1]], axis=-1)
            k = np.concatenate([k, [M // 2]])
        w = np.atleast_1d(w)
        return np.einsum("...k,wk->...w", ch, np.exp(1j * np.outer(w, k)))

    def beta_at(self, w):
        return self._interp(self.beta, w)

    def alpha_at(self, w):
        return self._interp(self.alpha, w).real

    def to_rows(self):
        for i, w in enumerate(self.omega):
            yield (w, self.alpha[0, i], self.alpha[1, i], self.beta[0, i].real, self.beta[0, i].imag,
                   self.beta[1, i].real, self.beta[1, i].imag)


@dataclass
class Lambda0Multiplier:
    kind: str                                  # "differential" or "angular"
    A1: np.ndarray
    A2: np.ndarray
    B: Optional[tuple] = None                  # (B11, B12, B22) damping form (differential)
    P: Optional[np.ndarray] = None
    table: Optional[AngularTable] = None


@dataclass
class ModulationSystem:
    A1: np.ndarray
    A2: np.ndarray
    B11: np.ndarray
    B12: np.ndarray
    B22: np.ndarray
    classification: Classification
    S: Optional[np.ndarray] = None
    theta: Optional[dict] = None
    lambdaK: Optional[np.ndarray] = None
    K: Optional[np.ndarray] = None
    lambda0: Optional[Lambda0Multiplier] = None

    @property
    def tag(self):
        return self.classification.tag

    def A_of(self, xi):
        return self.A1 * xi[0] + self.A2 * xi[1]

    def B_of(self, xi):
        return _B_of(self.B11, self.B12, self.B22, xi)

    def DW(self, xi):
        xi = np.asarray(xi, float)
        return 1j * self.A_of(xi) - self.B_of(xi)

    def report(self) -> dict:
        cl = self.classification
        out = {
            "tag": cl.tag,
            "detail": cl.detail,
            "witness": None if cl.witness is None else cl.witness.tolist(),
            "S": None if self.S is None else self.S.tolist(),
            "P": None if cl.P is None else cl.P.tolist(),
            "theta_max": None if self.theta is None else self.theta["theta_max"],
            "diffusive": None if self.theta is None else self.theta["passed"],
            "A1": self.A1.tolist(), "A2": self.A2.tolist(),
            "B11": self.B11.tolist(), "B12": self.B12.tolist(), "B22": self.B22.tolist(),
        }
        if self.lambdaK is not None:
            out["lambdaK"] = self.lambdaK.tolist()
        return out


def modulation_system(A1, A2, B11, B12, B22, lambdaK=None, K=None, M: int = 256) -> ModulationSystem:
    A1, A2 = np.asarray(A1, float), np.asarray(A2, float)
    cl = classify_hyperbolic(A1, A2)
    S = symmetrizer(A1, A2, cl) if cl.hyperbolic else None
    theta = diffusivity_check(A1, A2, B11, B12, B22, M=M) if cl.hyperbolic else None
    return ModulationSystem(A1, A2, np.asarray(B11, float), np.asarray(B12, float), np.asarray(B22, float),
                            cl, S, theta, lambdaK, None if K is None else np.asarray(K, float))


def from_expansion(exp, lambdaK=None, K=None, M: int = 256) -> ModulationSystem:
    return modulation_system(exp.A1, exp.A2, exp.B11, exp.B12, exp.B22, lambdaK, K, M)


def _sorted_eig(Ae):
    lam, V = np.linalg.eig(Ae)
    lam = lam.real
    V = V.real
    order = np.argsort(-lam)
    lam, V = lam[order], V[:, order]
    Lt = np.linalg.inv(V)
    proj = np.stack([np.outer(V[:, j], Lt[j]) for j in range(2)])
    return lam, proj


def build_lambda0(ms: ModulationSystem, M: int = 256, h: float = 1e-5, require_diffusive: bool = True):
    """Averaged second-order operator for the three hyperbolic cases."""
    tag = ms.tag
    if tag == NOT_HYPERBOLIC:
        raise ExpansionFailure("no averaged operator for a non-hyperbolic first-order system")
    if require_diffusive and ms.theta is not None and not ms.theta["passed"]:
        raise ExpansionFailure("diffusivity check failed; averaged operator not defined")
    if tag == CASE_B0:
        if ms.lambdaK is not None and ms.K is not None:
            B = expansion_from_lambda(ms.lambdaK, ms.K)
        else:
            B = (ms.B11, ms.B12, ms.B22)
        # scalar case: drop the round-off off-scalar part so A commutes exactly with everything
        a1 = 0.5 * np.trace(ms.A1) * np.eye(2)
        a2 = 0.5 * np.trace(ms.A2) * np.eye(2)
        lam0 = Lambda0Multiplier("differential", a1, a2, B=B, P=np.eye(2))
    elif tag == CASE_B:
        P = ms.classification.P
        Pi = np.linalg.inv(P)
        B = []
        for Bm in (ms.B11, ms.B12, ms.B22):
            Bt = P @ Bm @ Pi
            B.append(Pi @ np.diag(np.diag(Bt)) @ P)
        lam0 = Lambda0Multiplier("differential", ms.A1, ms.A2, B=tuple(B), P=P)
    else:
        lam0 = Lambda0Multiplier("angular", ms.A1, ms.A2, table=angular_table(ms, M, h))
    ms.lambda0 = lam0
    return lam0


def angular_table(ms: ModulationSystem, M: int = 256, h: float = 1e-5) -> AngularTable:
    """Per-angle branches of DW(i r e(w)): speeds, damping rates and r = 0 projectors."""
    omega = 2 * np.pi * np.arange(M) / M
    alpha = np.zeros((2, M))
    beta = np.zeros((2, M), dtype=complex)
    proj = np.zeros((2, M, 2, 2))
    s = _scale(ms.A1, ms.A2)
    for k, w in enumerate(omega):
        e = unit(w)
        lam0, pr = _sorted_eig(ms.A_of(e))
        if lam0[0] - lam0[1] < 1e-8 * s:
            raise ExpansionFailure(f"eigenvalue branches merge in direction omega={w:.4f}")
        g = {}
        for r in (h, 2 * h):
            lam = np.linalg.eigvals(ms.DW(r * e))
            # branch matching by speed Im(lambda)/r
            idx = [int(np.argmin(np.abs(lam.imag / r - lam0[j]))) for j in range(2)]
            if idx[0] == idx[1]:
                raise ExpansionFailure(f"cannot separate eigenvalue branches at omega={w:.4f}")
            g[r] = lam[idx] / r
        a_fit = (2 * g[h] - g[2 * h]).imag
        lam2 = (g[2 * h] - g[h]) / h
        alpha[:, k] = a_fit
        beta[:, k] = -lam2
        proj[:, k] = pr
    return AngularTable(omega, alpha, beta, proj)


def D0_eval(lam0: Lambda0Multiplier, xi) -> np.ndarray:
    """D^(0)(i xi) = i A(xi) + second-order averaged part."""
    xi = np.asarray(xi, float)
    A = 1j * (lam0.A1 * xi[0] + lam0.A2 * xi[1])
    r = float(np.hypot(*xi))
    if r == 0:
        return np.zeros((2, 2), dtype=complex)
    if lam0.kind == "differential":
        return A - _B_of(*lam0.B, xi)
    w = np.arctan2(xi[1], xi[0])
    e = xi / r
    _, pr = _sorted_eig(lam0.A1 * e[0] + lam0.A2 * e[1])
    b = lam0.table.beta_at(w)[:, 0]
    return A - r**2 * (b[0] * pr[0] + b[1] * pr[1])


def D0_eval_many(lam0: Lambda0Multiplier, xi) -> np.ndarray:
    """Vectorised D0_eval over an array of frequencies of shape (..., 2)."""
    xi = np.asarray(xi, float)
    x1, x2 = xi[..., 0], xi[..., 1]
    A = lam0.A1 * x1[..., None, None] + lam0.A2 * x2[..., None, None]
    if lam0.kind == "differential":
        B11, B12, B22 = lam0.B
        B = (B11 * (x1**2)[..., None, None] + 2 * B12 * (x1 * x2)[..., None, None]
             + B22 * (x2**2)[..., None, None])
        return 1j * A - B
    r = np.hypot(x1, x2)
    rs = np.where(r > 0, r, 1.0)
    Ae = A / rs[..., None, None]
    Ae[r == 0] = lam0.A1
    half = 0.5 * (Ae[..., 0, 0] + Ae[..., 1, 1])
    det = Ae[..., 0, 0] * Ae[..., 1, 1] - Ae[..., 0, 1] * Ae[..., 1, 0]
    s = np.sqrt(np.maximum(half**2 - det, 0.0))
    if np.any(s <= 0):
        raise ExpansionFailure("eigenvalue branches merge on the evaluation grid")
    eye = np.eye(2)
    p0 = (Ae - (half - s)[..., None, None] * eye) / (2 * s)[..., None, None]
    p1 = eye - p0
    w = np.arctan2(x2, x1).ravel()
    b = lam0.table.beta_at(w).reshape((2,) + r.shape)
    out = 1j * A - (r**2)[..., None, None] * (b[0][..., None, None] * p0 + b[1][..., None, None] * p1)
    out[r == 0] = 0.0
    return out


def commutator_defect(lam0: Lambda0Multiplier, xi) -> float:
    """Relative size of [A(i xi), D0(i xi) - A(i xi)]."""
    xi = np.asarray(xi, float)
    A = 1j * (lam0.A1 * xi[0] + lam0.A2 * xi[1])
    R = D0_eval(lam0, xi) - A
    C = A @ R - R @ A
    den = np.linalg.norm(A, 2) * np.linalg.norm(R, 2)
    return float(np.linalg.norm(C, 2) / den) if den > 0 else float(np.linalg.norm(C, 2))


def dispersive_curvature_check(alpha_table, threshold: float = 1e-3) -> dict:
    """min over branches and angles of |alpha + alpha''| by spectral differentiation in omega."""
    alpha = alpha_table.alpha if isinstance(alpha_table, AngularTable) else np.atleast_2d(alpha_table)
    M = alpha.shape[-1]
    k = np.fft.fftfreq(M, 1.0 / M)
    if M % 2 == 0:
        k[M // 2] = 0.0
    d2 = np.fft.ifft(-(k**2) * np.fft.fft(alpha, axis=-1), axis=-1).real
    val = np.abs(alpha + d2)
    m = float(val.min())
    return {"min": m, "passed": bool(m > threshold), "per_branch_min": val.min(axis=-1).tolist()}


def write_angular_csv(path, table: AngularTable) -> None:
    with open(path, "w") as fh:
        fh.write("omega,alpha1,alpha2,beta1_re,beta1_im,beta2_re,beta2_im\n")
        for row in table.to_rows():
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def write_report(path, ms: ModulationSystem) -> None:
    with open(path, "w") as fh:
        json.dump(ms.report(), fh, indent=2)
