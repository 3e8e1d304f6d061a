"""Phase fields on a large periodic box standing in for the plane.

Everything lives on [-L, L)^2 with N nodes per side and uses
f_hat(xi) = sum f(x) exp(-i xi.x), so d/dx_j <-> i xi_j and Lap <-> -|xi|^2.
The xi = 0 mode of every inverse is set to zero, which on the box amounts to
removing the mean of the source.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .errors import AmplitudeTooLarge, ContractionViolated, InputError
from .multiplier_decay import smooth_cutoff


@dataclass(frozen=True)
class BoxGrid:
    L: float
    N: int

    def __post_init__(self):
        if self.N < 8 or self.N % 2:
            raise InputError(f"box grid needs an even N >= 8, got {self.N}")
        if self.L <= 0:
            raise InputError("box half-width must be positive")

    @property
    def h(self):
        return 2 * self.L / self.N

    @property
    def x(self):
        return -self.L + self.h * np.arange(self.N)

    def mesh(self):
        return np.meshgrid(self.x, self.x, indexing="ij")

    @property
    def xi(self):
        k = 2 * np.pi * np.fft.fftfreq(self.N, d=self.h)
        return np.meshgrid(k, k, indexing="ij")

    def integrate(self, f):
        return np.sum(f, axis=(-2, -1)) * self.h**2


def _fft(f):
    return np.fft.fft2(f, axes=(-2, -1))


def _ifft(F):
    return np.fft.ifft2(F, axes=(-2, -1))


def _inv_xi2(grid):
    X1, X2 = grid.xi
    r2 = X1**2 + X2**2
    out = np.zeros_like(r2)
    out[r2 > 0] = 1.0 / r2[r2 > 0]
    return out


def gradient(grid: BoxGrid, f):
    """Spectral gradient, stacked along a new leading axis of length 2."""
    X1, X2 = grid.xi
    F = _fft(f)
    return np.stack([_ifft(1j * X1 * F).real, _ifft(1j * X2 * F).real])


def divergence(grid: BoxGrid, v):
    X1, X2 = grid.xi
    return _ifft(1j * X1 * _fft(v[0]) + 1j * X2 * _fft(v[1])).real


def curl(grid: BoxGrid, v):
    X1, X2 = grid.xi
    return _ifft(1j * X1 * _fft(v[1]) - 1j * X2 * _fft(v[0])).real


def laplacian(grid: BoxGrid, f):
    X1, X2 = grid.xi
    return _ifft(-(X1**2 + X2**2) * _fft(f)).real


def grad_inv_laplacian(grid: BoxGrid, d):
    """v = grad Lap^-1 d, i.e. v_hat = -i xi d_hat / |xi|^2 (Biot-Savart gradient)."""
    X1, X2 = grid.xi
    D = _fft(d) * _inv_xi2(grid)
    return np.stack([_ifft(-1j * X1 * D).real, _ifft(-1j * X2 * D).real])


def inv_laplacian(grid: BoxGrid, d):
    """phi = Lap^-1 d with zero box mean."""
    return _ifft(-_fft(d) * _inv_xi2(grid)).real


def lowfreq_split(grid: BoxGrid, f, xi0: float):
    """(f_LF, f_HF) with f_LF_hat = chi f_hat for the smooth cut-off of radius xi0."""
    X1, X2 = grid.xi
    chi = smooth_cutoff(np.hypot(X1, X2), xi0)
    F = _fft(f)
    lf = _ifft(chi * F).real
    return lf, f - lf


def l2_norm(grid: BoxGrid, f, radius: Optional[float] = None):
    """L^2 norm over the box, or over the ball of the given radius."""
    g = np.asarray(f) ** 2
    if g.ndim == 3:
        g = g.sum(0)
    if radius is not None:
        X1, X2 = grid.mesh()
        g = np.where(X1**2 + X2**2 <= radius**2, g, 0.0)
    return float(np.sqrt(grid.integrate(g)))


def gaussian(grid: BoxGrid, width: float, center=(0.0, 0.0)):
    """Unit-mass Gaussian of standard deviation ``width``."""
    X1, X2 = grid.mesh()
    r2 = (X1 - center[0]) ** 2 + (X2 - center[1]) ** 2
    return np.exp(-r2 / (2 * width**2)) / (2 * np.pi * width**2)


def log_slope(x, y) -> float:
    """Least-squares slope of y against ln x."""
    V = np.stack([np.ones(len(x)), np.log(x)], axis=1)
    coef, *_ = np.linalg.lstsq(V, np.asarray(y, float), rcond=None)
    return float(coef[1])


# ------------------------------------------------------------ phase fields


@dataclass
class PhaseField:
    grid: BoxGrid
    phi: np.ndarray        # (2, N, N)
    grad: np.ndarray       # (2, 2, N, N), grad[i, j] = d_j phi_i
    lap: np.ndarray        # (2, N, N)
    sublinear: bool = True  # phi is Lap^-1 of its Laplacian (no affine part)

    @classmethod
    def from_laplacian(cls, grid: BoxGrid, lap):
        lap = np.asarray(lap, float)
        phi = np.stack([inv_laplacian(grid, lap[i]) for i in range(2)])
        grad = np.stack([grad_inv_laplacian(grid, lap[i]) for i in range(2)])
        return cls(grid, phi, grad, lap)

    @classmethod
    def from_values(cls, grid: BoxGrid, phi):
        phi = np.asarray(phi, float)
        grad = np.stack([gradient(grid, phi[i]) for i in range(2)])
        lap = np.stack([laplacian(grid, phi[i]) for i in range(2)])
        return cls(grid, phi, grad, lap, sublinear=False)

    def kappa(self) -> float:
        """sup over the box of the spectral norm of grad phi."""
        g = np.moveaxis(self.grad, (0, 1), (-2, -1))
        return float(np.linalg.norm(g, ord=2, axis=(-2, -1)).max())

    def interpolator(self) -> Callable:
        """Quintic-spline evaluation of phi at arbitrary points, periodically wrapped."""
        return periodic_interpolator(self.grid, self.phi)


def periodic_interpolator(grid: BoxGrid, fields) -> Callable:
    """Quintic splines of box-periodic fields (shape (k, N, N)); returns y -> (k, ...)."""
    x = grid.x
    pad = 6
    xe = np.concatenate([x[-pad:] - 2 * grid.L, x, x[:pad] + 2 * grid.L])
    fields = np.asarray(fields, float)
    splines = [RectBivariateSpline(xe, xe, np.pad(f, pad, mode="wrap"), kx=5, ky=5) for f in fields]

    def ev(y):
        y = np.asarray(y, float)
        y1 = (y[0] + grid.L) % (2 * grid.L) - grid.L
        y2 = (y[1] + grid.L) % (2 * grid.L) - grid.L
        return np.stack([s.ev(y1, y2) for s in splines])
    return ev


def make_phase_source(grid: BoxGrid, amplitude: float, width: float, sign: int = 1,
                      components=(0,), max_gradient: float = 0.5, pair_offset=None) -> PhaseField:
    """Phase whose Laplacian is sign * amplitude * (unit Gaussian) in the chosen components.

    With ``pair_offset`` the source sits at +offset and a sink of equal mass at
    -offset, so the Laplacian has zero mean.
    """
    if width < 4 * grid.h:
        raise InputError(f"source width {width} is below 4 grid cells ({4 * grid.h})")
    if sign not in (1, -1):
        raise InputError("sign must be +1 (source) or -1 (sink)")
    lap = np.zeros((2, grid.N, grid.N))
    if pair_offset is None:
        G = gaussian(grid, width)
    else:
        a = np.asarray(pair_offset, float)
        G = gaussian(grid, width, a) - gaussian(grid, width, -a)
    for c in components:
        lap[c] = sign * amplitude * G
    pf = PhaseField.from_laplacian(grid, lap)
    k = pf.kappa()
    if k >= max_gradient:
        raise AmplitudeTooLarge(f"sup |grad phi| = {k:.3g} >= {max_gradient}")
    return pf


def write_deformation_csv(path, pf: PhaseField, stride: int = 4) -> None:
    """Image of the reference grid under Id - phi: columns x, y, x - phi_1, y - phi_2."""
    X1, X2 = pf.grid.mesh()
    with open(path, "w") as fh:
        fh.write("x,y,x_minus_phi1,y_minus_phi2\n")
        for i in range(0, pf.grid.N, stride):
            for j in range(0, pf.grid.N, stride):
                fh.write(f"{X1[i, j]:.8g},{X2[i, j]:.8g},{X1[i, j] - pf.phi[0, i, j]:.8g},"
                         f"{X2[i, j] - pf.phi[1, i, j]:.8g}\n")


# ------------------------------------------------------------ Id - phi


@dataclass
class Inverse:
    y: np.ndarray            # (2, ...) preimages
    iterations: int
    kappa: float
    composition_error: float


def invert_id_minus_phi(phi: Callable, x, kappa: float, tol: float = 1e-10, max_iter: int = 500) -> Inverse:
    """Solve y - phi(y) = x for every column of x by the fixed point y <- x + phi(y).

    ``kappa`` is the measured Lipschitz bound of phi; it must be below one.
    """
    if not kappa < 1:
        raise ContractionViolated(f"Lipschitz bound {kappa:.3g} is not below one")
    x = np.asarray(x, float)
    y = x.copy()
    for it in range(1, max_iter + 1):
        y_new = x + phi(y)
        step = float(np.abs(y_new - y).max()) if y.size else 0.0
        y = y_new
        if step <= tol:
            break
    else:
        raise ContractionViolated(f"fixed point not reached in {max_iter} iterations (step {step:.2e})")
    err = float(np.abs(y - phi(y) - x).max()) if y.size else 0.0
    if err > 10 * tol:
        raise ContractionViolated(f"composition error {err:.2e} exceeds 10 tol")
    return Inverse(y, it, kappa, err)


def var_change_check(grid: BoxGrid, A: Callable, B: Callable, pf: PhaseField, p: float, tol: float = 1e-12):
    """Both sides of |A o (Id - phi) - B|_p <= (1 - kappa)^(-2/p) |A - B o (Id - phi)^-1|_p.

    A and B take points of shape (2, ...) and return arrays of shape (...).
    Returns (lhs, rhs_bound).
    """
    X = np.stack(grid.mesh())
    ev = pf.interpolator()
    k = pf.kappa()
    lhs_f = A(X - pf.phi) - B(X)
    inv = invert_id_minus_phi(ev, X, k, tol=tol)
    rhs_f = A(X) - B(inv.y)

    def norm(f):
        if np.isinf(p):
            return float(np.abs(f).max())
        return float(grid.integrate(np.abs(f) ** p) ** (1.0 / p))
    fac = 1.0 if np.isinf(p) else (1 - k) ** (-2.0 / p)
    return norm(lhs_f), fac * norm(rhs_f)
