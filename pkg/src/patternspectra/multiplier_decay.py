"""Matrix Fourier-multiplier semigroups on the plane and their decay rates.

A semigroup is described by a 2x2 generator m(xi) (propagator exp(t m(xi))) or
directly by a propagator P(t, xi), optionally multiplied by a smooth radial
cut-off chi (low frequencies) or 1 - chi (high frequencies).  Kernels use the
convention

    Gamma(t, x) = (2 pi)^-2  int exp(i xi.x) P(t, xi) dxi,

sampled by FFT on the box [-L, L)^2 with N points per side, so dxi = pi / L.
Norm proxies are convolution bounds: L^1 -> L^p is the L^p norm of the kernel
(pointwise spectral norm), L^2 -> L^2 is the sup of the propagator and
L^2 -> L^inf is the L^2 norm of the propagator over 2 pi.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import fft as sfft
from scipy.special import j0

from . import modulation
from .errors import DegenerateFit, InputError, TailMassExceeded, UnsupportedNormPair

log = logging.getLogger(__name__)

DYADIC = tuple(2.0**k for k in range(0, 11))
SUPPORTED_PAIRS = {(1, 2), (1, 4), (1, 8), (1, np.inf), (2, 2), (2, np.inf)}
N_MAX = 2048


# ------------------------------------------------------------ 2x2 algebra


def _sinhc(s):
    small = np.abs(s) < 1e-3
    safe = np.where(small, 1.0, s)
    s2 = s * s
    series = 1 + s2 / 6 + s2 * s2 / 120 + s2 * s2 * s2 / 5040
    return np.where(small, series, np.sinh(safe) / safe)


def expm2(M: np.ndarray, overflow_re: float = 30.0) -> np.ndarray:
    """exp of a stack of 2x2 matrices in closed form.

    With h = tr M / 2 and s^2 = h^2 - det M, Cayley-Hamilton gives
    exp(M) = exp(h) (cosh s I + sinh(s)/s (M - h I)), which has no cancellation
    as the eigenvalues coalesce.  Where |Re s| is large, exp(h) and cosh(s) may
    under- or overflow separately, and Sylvester's formula is used instead.
    """
    M = np.asarray(M, dtype=complex)
    h = 0.5 * (M[..., 0, 0] + M[..., 1, 1])
    det = M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]
    s = np.sqrt(h * h - det)
    eye = np.eye(2)
    out = np.empty_like(M)
    far = np.abs(s.real) > overflow_re

    near = ~far
    if np.any(near):
        Mn, hn, sn = M[near], h[near], s[near]
        eh = np.exp(hn)[:, None, None]
        out[near] = eh * (np.cosh(sn)[:, None, None] * eye
                          + _sinhc(sn)[:, None, None] * (Mn - hn[:, None, None] * eye))
    if np.any(far):
        Ms, hs, ss = M[far], h[far], s[far]
        l1, l2 = hs + ss, hs - ss
        e1, e2 = np.exp(l1)[:, None, None], np.exp(l2)[:, None, None]
        out[far] = (e1 * (Ms - l2[:, None, None] * eye) - e2 * (Ms - l1[:, None, None] * eye)) \
            / (l1 - l2)[:, None, None]
    return out


def spectral_norm2(M: np.ndarray) -> np.ndarray:
    """Largest singular value of each 2x2 matrix in a stack."""
    M = np.asarray(M)
    if M.shape[-2:] == (1, 1):
        return np.abs(M[..., 0, 0])
    f2 = (np.abs(M) ** 2).sum(axis=(-2, -1))
    det = np.abs(M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0])
    return np.sqrt(0.5 * (f2 + np.sqrt(np.maximum(f2 * f2 - 4 * det * det, 0.0))))


def smooth_cutoff(r, xi0: float) -> np.ndarray:
    """C-infinity radial bump: 1 on r <= xi0, 0 on r >= 2 xi0."""
    s = np.clip((np.asarray(r, float) - xi0) / xi0, 0.0, 1.0)

    def f(u):
        return np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)

    a, b = f(1 - s), f(s)
    return a / (a + b)


# ------------------------------------------------------------ semigroups


@dataclass
class MultiplierSemigroup:
    generator: Optional[Callable] = None      # xi (..., 2) -> (..., 2, 2)
    propagator: Optional[Callable] = None     # (t, xi) -> (..., 2, 2)
    cutoff: Optional[float] = None            # xi0 of chi, None for no cut-off
    highfreq: bool = False                    # multiply by 1 - chi instead of chi
    component: Optional[tuple] = None         # restrict to one matrix entry
    label: str = ""
    isotropic: bool = False
    speed: float = 0.0                        # largest propagation speed, for box sizing

    def __post_init__(self):
        if (self.generator is None) == (self.propagator is None):
            raise InputError("give exactly one of generator or propagator")
        if self.highfreq and self.cutoff is None:
            raise InputError("a high-frequency semigroup needs a cut-off radius")

    def chi(self, xi) -> np.ndarray:
        xi = np.asarray(xi, float)
        if self.cutoff is None:
            return np.ones(xi.shape[:-1])
        c = smooth_cutoff(np.hypot(xi[..., 0], xi[..., 1]), self.cutoff)
        return 1.0 - c if self.highfreq else c

    def raw(self, t: float, xi) -> np.ndarray:
        xi = np.asarray(xi, float)
        if self.propagator is not None:
            return np.asarray(self.propagator(t, xi), dtype=complex)
        return expm2(t * np.asarray(self.generator(xi), dtype=complex))

    def evaluate(self, t: float, xi) -> np.ndarray:
        P = self.raw(t, xi) * self.chi(xi)[..., None, None]
        if self.component is not None:
            i, j = self.component
            P = P[..., i : i + 1, j : j + 1]
        return P


def _const(M):
    return np.asarray(M, float)


def heat(nu: float = 1.0, cutoff=None, highfreq=False) -> MultiplierSemigroup:
    def gen(xi):
        r2 = (xi**2).sum(-1)
        return -nu * r2[..., None, None] * np.eye(2)
    return MultiplierSemigroup(generator=gen, cutoff=cutoff, highfreq=highfreq, label="heat",
                               isotropic=True)


def transport(ell, nu: float = 0.0, cutoff=None, highfreq=False) -> MultiplierSemigroup:
    ell = np.asarray(ell, float)

    def gen(xi):
        return (1j * (xi @ ell) - nu * (xi**2).sum(-1))[..., None, None] * np.eye(2)
    return MultiplierSemigroup(generator=gen, cutoff=cutoff, highfreq=highfreq,
                               label="transport", speed=float(np.hypot(*ell)))


def damped_wave(cutoff=None) -> MultiplierSemigroup:
    """(u, u_t) for u_tt - Lap u - Lap u_t = 0; entry (0, 1) maps an impulse in u_t to u."""
    def gen(xi):
        r2 = (xi**2).sum(-1)
        out = np.zeros(xi.shape[:-1] + (2, 2))
        out[..., 0, 1] = 1.0
        out[..., 1, 0] = -r2
        out[..., 1, 1] = -r2
        return out
    return MultiplierSemigroup(generator=gen, cutoff=cutoff, component=(0, 1), label="damped_wave",
                               isotropic=True, speed=1.0)


def _quad(B11, B12, B22, xi):
    x1, x2 = xi[..., 0, None, None], xi[..., 1, None, None]
    return B11 * x1**2 + 2 * B12 * x1 * x2 + B22 * x2**2


def modulation_semigroup(A1, A2, B11, B12, B22, cubic=None, cutoff=None, label="DW") -> MultiplierSemigroup:
    """Generator i A(xi) - B(xi) + i |xi|^3 C (C = ``cubic``, default none)."""
    A1, A2 = _const(A1), _const(A2)
    B11, B12, B22 = _const(B11), _const(B12), _const(B22)
    C = None if cubic is None else np.asarray(cubic, complex)

    def gen(xi):
        out = 1j * (A1 * xi[..., 0, None, None] + A2 * xi[..., 1, None, None]) - _quad(B11, B12, B22, xi)
        if C is not None:
            out = out + 1j * ((xi**2).sum(-1) ** 1.5)[..., None, None] * C
        return out
    speed = max(float(np.abs(np.linalg.eigvals(A1 * np.cos(w) + A2 * np.sin(w))).max())
                for w in np.linspace(0, np.pi, 33))
    return MultiplierSemigroup(generator=gen, cutoff=cutoff, label=label, speed=speed)


def lambda0_semigroup(lam0, cutoff=None, highfreq=False, label="D0") -> MultiplierSemigroup:
    """exp(t D^(0)(i xi)) for an averaged operator built by ``modulation.build_lambda0``."""
    speed = max(float(np.abs(np.linalg.eigvals(lam0.A1 * np.cos(w) + lam0.A2 * np.sin(w))).max())
                for w in np.linspace(0, np.pi, 33))
    return MultiplierSemigroup(generator=lambda xi: modulation.D0_eval_many(lam0, xi), cutoff=cutoff,
                               highfreq=highfreq, label=label, speed=speed)


def difference(sgA: MultiplierSemigroup, sgB: MultiplierSemigroup) -> MultiplierSemigroup:
    if sgA.cutoff != sgB.cutoff or sgA.highfreq != sgB.highfreq:
        raise InputError("compared multipliers must share the same cut-off")
    if sgA.component != sgB.component:
        raise InputError("compared multipliers must select the same component")
    return MultiplierSemigroup(propagator=lambda t, xi: sgA.raw(t, xi) - sgB.raw(t, xi),
                               cutoff=sgA.cutoff, highfreq=sgA.highfreq, component=sgA.component,
                               label=f"{sgA.label}-{sgB.label}", speed=max(sgA.speed, sgB.speed))


def delta_example(delta: float = 1.0):
    """Strictly hyperbolic pair A_1 = [[0, d], [d, 1]], A_2 = [[1, d], [d, 0]]."""
    return np.array([[0.0, delta], [delta, 1.0]]), np.array([[1.0, delta], [delta, 0.0]])


# ------------------------------------------------------------ kernels


@dataclass
class Kernel:
    t: float
    L: float
    N: int
    x: np.ndarray             # 1-D node coordinates, shared by both axes
    values: np.ndarray        # (N, N, a, b), first index is x_1
    xi: np.ndarray            # 1-D frequency nodes
    propagator: np.ndarray    # (N, N, a, b) samples of the multiplier
    tail: float               # L^2 mass fraction in the outer 10% frame

    @property
    def dxi(self):
        return np.pi / self.L

    @property
    def dx(self):
        return 2 * self.L / self.N

    def pointwise_norm(self):
        return spectral_norm2(self.values)


def box_half_width(t: float) -> float:
    return max(32.0, 4.0 * t)


def xi_extent(sg: MultiplierSemigroup, t: float, tol: float = 1e-13, r_max: float = 200.0,
              n_dir: int = 16) -> float:
    """Radius beyond which the propagator stays below tol times its peak (sampled on rays)."""
    r = np.geomspace(1e-4, r_max, 400)
    w = np.linspace(0, 2 * np.pi, n_dir, endpoint=False)
    xi = np.stack([np.outer(r, np.cos(w)), np.outer(r, np.sin(w))], axis=-1)
    nrm = spectral_norm2(sg.evaluate(t, xi)).max(axis=1)
    peak = nrm.max()
    if peak == 0:
        return 1.0
    above = np.nonzero(nrm > tol * peak)[0]
    R = r[above[-1]] * 1.1 if above.size else r[0]
    if sg.cutoff is not None and not sg.highfreq:
        R = min(R, 2 * sg.cutoff)
    return float(R)


def _choose_N(L: float, R: float, n_min: int = 64) -> int:
    need = int(np.ceil(2 * L * R / np.pi)) + 1
    N = max(n_min, need + need % 2)
    N = sfft.next_fast_len(N)
    N += N % 2
    if N > N_MAX:
        log.warning("frequency extent %.3g needs N=%d; capped at %d", R, N, N_MAX)
        N = N_MAX
    return N


def _sample_kernel(sg, t, L, N):
    dxi = np.pi / L
    k = np.arange(N) - N // 2
    xi1 = k * dxi
    X1, X2 = np.meshgrid(xi1, xi1, indexing="ij")
    P = sg.evaluate(t, np.stack([X1, X2], axis=-1))
    shifted = np.fft.ifftshift(P, axes=(0, 1))
    G = np.fft.fftshift(sfft.ifft2(shifted, axes=(0, 1)), axes=(0, 1)) * (N * dxi / (2 * np.pi)) ** 2
    x = k * (2 * L / N)
    dens = (np.abs(G) ** 2).sum(axis=(-2, -1))
    total = dens.sum()
    frame = np.abs(x) > 0.9 * L
    outer = dens[frame, :].sum() + dens[:, frame].sum() - dens[np.ix_(frame, frame)].sum()
    tail = float(outer / total) if total > 0 else 0.0
    return Kernel(t, L, N, x, G, xi1, P, tail)


def kernel(sg: MultiplierSemigroup, t: float, L: Optional[float] = None, N: Optional[int] = None,
           mass_tol: float = 1e-4, check_tail: bool = True, max_doublings: int = 3) -> Kernel:
    """Sample Gamma(t, .) on [-L, L)^2 by inverse FFT of the propagator.

    With the default box the half-width is doubled while the L^2 mass in the
    outer frame exceeds ``mass_tol``.
    """
    auto = L is None
    L = box_half_width(t) if auto else float(L)
    R = xi_extent(sg, t) if N is None else None
    for attempt in range(max_doublings + 1):
        kern = _sample_kernel(sg, t, L, N if N is not None else _choose_N(L, R))
        if not check_tail or kern.tail <= mass_tol:
            return kern
        if not auto or attempt == max_doublings:
            break
        L *= 2
    raise TailMassExceeded(f"kernel mass fraction {kern.tail:.2e} near the box edge at t={t}, L={kern.L}")


def kernel_lp(kern: Kernel, p: float) -> float:
    g = kern.pointwise_norm()
    if np.isinf(p):
        return float(g.max())
    return float((np.sum(g**p) * kern.dx**2) ** (1.0 / p))


def l2_proxy_from_kernel(kern: Kernel) -> float:
    """sup |P| recomputed from the sampled kernel (Parseval route)."""
    N = kern.N
    back = np.fft.fftshift(sfft.fft2(np.fft.ifftshift(kern.values, axes=(0, 1)), axes=(0, 1)), axes=(0, 1))
    back = back * (2 * np.pi / (N * kern.dxi)) ** 2
    return float(spectral_norm2(back).max())


def opnorm_proxy(sg: MultiplierSemigroup, t: float, q, p, L: Optional[float] = None,
                 N: Optional[int] = None, kern: Optional[Kernel] = None) -> float:
    q = float(q)
    p = float(p)
    if (int(q), p if np.isinf(p) else int(p)) not in SUPPORTED_PAIRS or q not in (1.0, 2.0):
        raise UnsupportedNormPair(f"norm pair L^{q:g} -> L^{p:g} is not supported")
    if kern is None:
        kern = kernel(sg, t, L, N, check_tail=(q == 1))
    if q == 1:
        return kernel_lp(kern, p)
    g = spectral_norm2(kern.propagator)
    if np.isinf(p):
        return float(np.sqrt((g**2).sum() * kern.dxi**2) / (2 * np.pi))
    return float(g.max())


# ------------------------------------------------------------ radial route


def radial_kernel(sg: MultiplierSemigroup, t: float, rho=None, R: Optional[float] = None,
                  r_cap: float = 50.0):
    """Hankel-transform kernel of an isotropic scalar multiplier.

    Gamma(rho) = (2 pi)^-1 int_0^R m(r) J_0(r rho) r dr with m sampled on xi = (r, 0).
    Returns (rho, Gamma).
    """
    if not sg.isotropic:
        raise InputError("radial evaluation needs an isotropic multiplier")
    if R is None:
        R = min(xi_extent(sg, t, r_max=r_cap), r_cap)
    if rho is None:
        rho_max = sg.speed * t + 10 * np.sqrt(t) + 10
        drho = min(0.25 * np.sqrt(t), 2 * np.pi / (8 * R), 0.5)
        rho = np.arange(0.0, rho_max + drho, drho)
    rho = np.asarray(rho, float)
    # Gauss-Legendre panels, one oscillation period of J_0(r rho) e^{i r t} each
    width = 2 * np.pi / (rho.max() + sg.speed * t + 1)
    n_pan = int(np.ceil(R / width))
    nodes, weights = np.polynomial.legendre.leggauss(16)
    edges = np.linspace(0.0, R, n_pan + 1)
    half = 0.5 * np.diff(edges)
    r = (0.5 * (edges[:-1] + edges[1:])[:, None] + half[:, None] * nodes).ravel()
    w = (half[:, None] * weights).ravel()
    xi = np.stack([r, np.zeros_like(r)], axis=-1)
    m = sg.evaluate(t, xi)
    if m.shape[-2:] != (1, 1):
        raise InputError("radial evaluation needs a scalar component")
    f = m[:, 0, 0] * r * w
    G = np.empty(rho.size, dtype=complex)
    for s in range(0, rho.size, 256):
        G[s : s + 256] = j0(np.outer(rho[s : s + 256], r)) @ f
    return rho, G / (2 * np.pi)


def radial_lp(rho, G, p: float) -> float:
    g = np.abs(G)
    if np.isinf(p):
        return float(g.max())
    return float((2 * np.pi * np.trapezoid(g**p * rho, rho)) ** (1.0 / p))


# ------------------------------------------------------------ fits


@dataclass
class DecayFit:
    times: np.ndarray
    values: np.ndarray
    exponent: float
    constant: float
    r2: float
    kind: str = "power"
    curvature: float = 0.0
    curved: bool = False
    window: tuple = (None, None)

    def to_dict(self):
        return {"times": self.times.tolist(), "values": self.values.tolist(), "exponent": self.exponent,
                "constant": self.constant, "r2": self.r2, "kind": self.kind,
                "curvature": self.curvature, "curved": self.curved}


def fit_decay(times, values, window=(None, None), kind: str = "power",
              curvature_tol: float = 0.01) -> DecayFit:
    """Least-squares fit values ~ C t^-exponent (or C exp(-exponent t)) over a window.

    The curvature statistic is the bulge of a quadratic fit in the same
    coordinates over the window; it is flagged when it exceeds ``curvature_tol``
    and is significant against the residual noise.
    """
    t = np.asarray(times, float)
    y = np.asarray(values, float)
    lo, hi = window
    sel = np.ones(t.size, bool)
    if lo is not None:
        sel &= t >= lo
    if hi is not None:
        sel &= t <= hi
    t, y = t[sel], y[sel]
    if t.size < 5:
        raise DegenerateFit(f"need at least 5 samples in the window, got {t.size}")
    if not np.all(np.isfinite(y)) or np.any(y <= 0):
        raise DegenerateFit("decay fit needs strictly positive finite values")
    s = np.log(t) if kind == "power" else t
    ly = np.log(y)
    V = np.stack([np.ones_like(s), s], axis=1)
    coef, *_ = np.linalg.lstsq(V, ly, rcond=None)
    res = ly - V @ coef
    ss_tot = ((ly - ly.mean()) ** 2).sum()
    r2 = 1.0 - (res**2).sum() / ss_tot if ss_tot > 0 else 1.0
    # quadratic term on the centred coordinate
    u = (s - s.mean()) / (0.5 * (s.max() - s.min()))
    V2 = np.stack([np.ones_like(u), u, u * u], axis=1)
    c2, *_ = np.linalg.lstsq(V2, ly, rcond=None)
    res2 = ly - V2 @ c2
    dof = max(t.size - 3, 1)
    sigma2 = (res2**2).sum() / dof
    cov = sigma2 * np.linalg.inv(V2.T @ V2)
    se = np.sqrt(cov[2, 2])
    bulge = abs(c2[2])
    curved = bool(bulge > curvature_tol and bulge > 3 * se)
    if curved:
        log.warning("decay data curved in %s coordinates (bulge %.3g); exponent is a window average",
                    kind, bulge)
    return DecayFit(t, y, float(-coef[1]), float(np.exp(coef[0])), float(r2), kind, float(bulge), curved,
                    (lo, hi))


# ------------------------------------------------------------ benchmarks


def decay_series(sg: MultiplierSemigroup, q, p, times=DYADIC, **kw) -> np.ndarray:
    return np.array([opnorm_proxy(sg, t, q, p, **kw) for t in times])


def compare_semigroups(sgA, sgB, q, p, times=DYADIC, window=(None, None)) -> DecayFit:
    """Decay fit of the norm proxy of the difference multiplier."""
    sg = difference(sgA, sgB)
    vals = decay_series(sg, q, p, times)
    return fit_decay(times, vals, window)


def highfreq_decay(sg_hf: MultiplierSemigroup, times=(1, 2, 4, 8, 16, 32, 64), box: float = None,
                   n: int = 401) -> DecayFit:
    """Exponential rate of sup |(1 - chi) P(t, .)| on a frequency box."""
    if not sg_hf.highfreq:
        raise InputError("highfreq_decay expects a (1 - chi) multiplier")
    box = 6 * sg_hf.cutoff if box is None else box
    g = np.linspace(-box, box, n)
    X1, X2 = np.meshgrid(g, g, indexing="ij")
    xi = np.stack([X1, X2], axis=-1)
    vals = np.array([spectral_norm2(sg_hf.evaluate(t, xi)).max() for t in times])
    fit = fit_decay(times, vals, kind="exp")
    if fit.exponent <= 0:
        log.warning("high-frequency part does not decay (rate %.3g)", fit.exponent)
    return fit


def benchmark_damped_wave(p_list=(2, 4, np.inf), times=DYADIC[3:10], window=(None, None)) -> dict:
    """u-component kernel L^p norms of the damped wave via the radial route."""
    sg = damped_wave()
    out = {}
    kernels = {t: radial_kernel(sg, t) for t in times}
    for p in p_list:
        vals = [radial_lp(*kernels[t], p) for t in times]
        out[p] = fit_decay(times, vals, window)
    return out


def damped_wave_rate(p: float) -> float:
    return 0.75 - 1.5 / p


def benchmark_counterexample(radii=(1e-1, 1e-2, 1e-3, 1e-4)) -> dict:
    """Expansion coefficients of the counterexample eigenvalues along xi = (r, 0)."""
    e = np.array([1.0, 0.0])

    def branches(r):
        lam = np.linalg.eigvals(modulation.counterexample_D(r * e))
        i1 = int(np.argmax(lam.imag))
        return lam[i1], lam[1 - i1]

    def cubic(r):
        l1, _ = branches(r)
        return (l1 - 1j * r).imag / r**3

    def quartic(r):
        return branches(r)[0].real / r**4

    def lam2(r):
        return branches(r)[1].real / r**2

    # Richardson in r with ratio 2; the leading error is O(r^2) for the first two
    r0 = 0.02
    rich2 = lambda g: (4 * g(r0 / 2) - g(r0)) / 3
    lead = branches(r0)[0].imag / r0
    coeffs = {"linear_im": float(lead), "cubic_im": float(rich2(cubic)), "quartic_re": float(rich2(quartic)),
              "lambda2_quadratic": float(rich2(lam2))}
    ratios = [float(branches(r)[0].real / r**2) for r in radii]
    B = np.array([[0.0, -1.0], [1.0, 1.0]])
    verdict = modulation.diffusivity_check(np.diag([1.0, 0.0]), np.zeros((2, 2)), B, np.zeros((2, 2)), B)
    return {"coefficients": coeffs, "radii": list(radii), "re_lambda1_over_r2": ratios,
            "sup_ratio": float(max(ratios)), "diffusive": verdict["passed"],
            "theta_max": verdict["theta_max"]}


@dataclass
class BenchmarkResult:
    name: str
    fitted: float
    predicted: float
    tol: float
    curved: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def passed(self):
        return bool(abs(self.fitted - self.predicted) <= self.tol)

    def to_dict(self):
        return {"name": self.name, "fitted": self.fitted, "predicted": self.predicted, "tol": self.tol,
                "passed": self.passed, "curved": self.curved, **self.extra}


def _case_a_pair(delta=1.0, cutoff=1.0):
    A1, A2 = delta_example(delta)
    I, Z = np.eye(2), np.zeros((2, 2))
    ms = modulation.modulation_system(A1, A2, I, Z, I)
    lam0 = modulation.build_lambda0(ms)
    d0 = lambda0_semigroup(lam0, cutoff=cutoff)
    full = modulation_semigroup(A1, A2, I, Z, I, cubic=I, cutoff=cutoff, label="DW+cubic")
    return full, d0, lam0


def run_suite(times=DYADIC[3:10]) -> list:
    """The constant-coefficient decay benchmarks over dyadic times."""
    results = []
    sg = heat()
    f = fit_decay(times, decay_series(sg, 1, np.inf, times))
    results.append(BenchmarkResult("heat L1->Linf", f.exponent, 1.0, 0.05, f.curved))

    for p, fit in benchmark_damped_wave(times=times).items():
        name = "damped wave L1->L" + ("inf" if np.isinf(p) else str(int(p)))
        results.append(BenchmarkResult(name, fit.exponent, damped_wave_rate(p), 0.1, fit.curved))

    full, d0, lam0 = _case_a_pair()
    d0_free = lambda0_semigroup(lam0)
    f = fit_decay(times, decay_series(d0_free, 1, np.inf, times))
    results.append(BenchmarkResult("dispersive D0 L1->Linf", f.exponent, 1.25, 0.1, f.curved))

    I, Z = np.eye(2), np.zeros((2, 2))
    a1, a2 = 0.5 * I, -0.3 * I
    lf = modulation_semigroup(a1, a2, I, Z, I, cubic=I, cutoff=0.5, label="B0+cubic")
    b0 = modulation_semigroup(a1, a2, I, Z, I, cutoff=0.5, label="B0")
    f = compare_semigroups(lf, b0, 2, 2, times)
    results.append(BenchmarkResult("CaseB0 difference L2->L2", f.exponent, 0.5, 0.05, f.curved))

    f = compare_semigroups(full, d0, 1, np.inf, times)
    results.append(BenchmarkResult("CaseA difference L1->Linf", f.exponent, 1.75, 0.15, f.curved))
    return results


def write_suite_report(path, results) -> None:
    with open(path, "w") as fh:
        json.dump({"benchmarks": [r.to_dict() for r in results],
                   "all_passed": all(r.passed for r in results)}, fh, indent=2)


def write_kernel_slice(path, kern: Kernel, entry=(0, 0)) -> None:
    """CSV of the kernel along x_2 = 0."""
    i, j = entry
    row = kern.values[:, kern.N // 2, i, j]
    with open(path, "w") as fh:
        fh.write("x,re,im,abs\n")
        for x, v in zip(kern.x, row):
            fh.write(f"{x:.10g},{v.real:.10g},{v.imag:.10g},{abs(v):.10g}\n")
