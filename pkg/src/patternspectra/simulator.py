"""Time integration of the co-moving system and of the Whitham phase equation.

The reaction-diffusion solver works on a super-cell of m x m fundamental cells
in the co-moving variable y (period m, mN nodes per side).  Only super-cell
modes m k + j with |k_i| < N/2 are retained, so the sector j of the linearised
dynamics is exactly the Galerkin Bloch symbol at xi = 2 pi j / m.

The Whitham solver evolves the phase correction phi on the same super-cell in
y-coordinates; its linear symbol is the averaged operator D^(0)(i xi).
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import bloch, modulation
from .errors import (BlowupDetected, InputError, LeavesValidityRegion, NonlinearContamination)
from .field2d import Grid2D, PeriodicField
from .model import symbol_parts
from .multiplier_decay import expm2, fit_decay
from .phase_tools import BoxGrid, PhaseField, invert_id_minus_phi, make_phase_source, periodic_interpolator

log = logging.getLogger(__name__)

STEPPERS = ("etdrk4", "imex-bdf2")


# ------------------------------------------------------------ super-cell


def supercell_mask(N: int, m: int) -> np.ndarray:
    """Super-cell modes whose cell index k (with k_s = m k + j, j in (-m/2, m/2]) is in band."""
    Ns = N * m
    ks = np.fft.fftfreq(Ns, 1.0 / Ns).astype(int)
    kc = np.ceil(ks / m - 0.5).astype(int)
    ok = np.abs(kc) <= N // 2 - 1
    return ok[:, None] & ok[None, :]


def sector_index(N: int, m: int, j) -> tuple:
    """Super-cell index arrays of the modes m k + j for the cell band k (cell FFT order)."""
    Ns = N * m
    k = np.fft.fftfreq(N, 1.0 / N).astype(int)
    i1 = (m * k + int(j[0])) % Ns
    i2 = (m * k + int(j[1])) % Ns
    return np.ix_(i1, i2)


def embed_supercell(U: PeriodicField, m: int) -> PeriodicField:
    """Cell-periodic field viewed on the m x m super-cell."""
    N = U.grid.N
    grid = Grid2D(N * m, float(m))
    out = np.zeros((U.n, N * m, N * m), dtype=complex)
    out[(slice(None),) + sector_index(N, m, (0, 0))] = U.coeffs * U.grid.band
    return PeriodicField(grid, out, real=U.real)


@dataclass
class RDProblem:
    sys: object
    K: np.ndarray
    c: np.ndarray
    N: int            # nodes per cell
    m: int            # cells per side
    grid: Grid2D = field(init=False)
    lin: np.ndarray = field(init=False)
    kw: np.ndarray = field(init=False)
    mask: np.ndarray = field(init=False)
    blowup: float = 1e6

    def __post_init__(self):
        self.K = np.asarray(self.K, float)
        self.c = np.asarray(self.c, float)
        self.grid = Grid2D(self.N * self.m, float(self.m))
        self.kw, self.lin = symbol_parts(self.grid, self.K, self.c)
        self.mask = supercell_mask(self.N, self.m) & self.grid.band

    def nonlinear(self, coeffs: np.ndarray) -> np.ndarray:
        g = self.grid
        Wp = g.to_padded(coeffs).real
        out = g.from_padded(self.sys.eval_f(Wp))
        if self.sys.has_flux:
            Gh = g.from_padded(self.sys.eval_G(Wp))
            out = out + 1j * (self.kw[0] * Gh[0] + self.kw[1] * Gh[1])
        return out * self.mask

    def dt_max(self, coeffs: np.ndarray) -> float:
        """Explicit-part bound from the Jacobian of the reaction and flux at the current state."""
        Wp = self.grid.to_padded(coeffs).real
        lip = float(np.abs(self.sys.eval_df(Wp)).sum(axis=1).max())
        if self.sys.has_flux:
            kmax = float(np.abs(self.kw).max())
            lip += kmax * float(np.abs(self.sys.eval_dG(Wp)).sum(axis=2).max())
        return 2.0 / max(lip, 1e-12)


def rd_problem(wd, m: int) -> RDProblem:
    return RDProblem(wd.sys, wd.K, wd.c, wd.grid.N, m)


@dataclass
class SimState:
    t: float
    W: PeriodicField
    stepper: str
    dt: float
    prev: Optional[tuple] = None       # (W_prev coeffs, N_prev) for the two-step scheme


def _etd_coefficients(L: np.ndarray, dt: float, n_contour: int = 64):
    """ETDRK4 weights for a diagonal linear part (contour-integral evaluation)."""
    z = dt * L
    E = np.exp(z)
    E2 = np.exp(z / 2)
    # full circle: the symbol is complex, so the half-circle real-part trick does not apply
    r = np.exp(2j * np.pi * (np.arange(1, n_contour + 1) - 0.5) / n_contour)
    Q = np.empty_like(z)
    f1 = np.empty_like(z)
    f2 = np.empty_like(z)
    f3 = np.empty_like(z)
    flat = z.ravel()
    for s in range(0, flat.size, 65536):
        lr = flat[s : s + 65536, None] + r[None, :]
        el = np.exp(lr)
        sl = np.s_[s : s + 65536]
        Q.ravel()[sl] = dt * np.mean((np.exp(lr / 2) - 1) / lr, axis=1)
        f1.ravel()[sl] = dt * np.mean((-4 - lr + el * (4 - 3 * lr + lr**2)) / lr**3, axis=1)
        f2.ravel()[sl] = dt * np.mean((2 + lr + el * (lr - 2)) / lr**3, axis=1)
        f3.ravel()[sl] = dt * np.mean((-4 - 3 * lr - lr**2 + el * (4 - lr)) / lr**3, axis=1)
    if np.isrealobj(L):
        Q, f1, f2, f3 = Q.real, f1.real, f2.real, f3.real
    return E, E2, Q, f1, f2, f3


class RDStepper:
    """Caches the exponential weights for one (problem, dt) pair."""

    def __init__(self, problem: RDProblem, dt: float, stepper: str = "etdrk4"):
        if stepper not in STEPPERS:
            raise InputError(f"unknown stepper {stepper!r}; choose one of {STEPPERS}")
        self.problem = problem
        self.dt = float(dt)
        self.stepper = stepper
        self._etd = _etd_coefficients(problem.lin, self.dt)

    def _etdrk4(self, u):
        E, E2, Q, f1, f2, f3 = self._etd
        Nf = self.problem.nonlinear
        Nu = Nf(u)
        a = E2 * u + Q * Nu
        Na = Nf(a)
        b = E2 * u + Q * Na
        Nb = Nf(b)
        c = E2 * a + Q * (2 * Nb - Nu)
        Nc = Nf(c)
        return (E * u + f1 * Nu + 2 * f2 * (Na + Nb) + f3 * Nc) * self.problem.mask, Nu

    def step(self, state: SimState) -> SimState:
        u = state.W.coeffs
        if self.stepper == "etdrk4" or state.prev is None:
            new, Nu = self._etdrk4(u)
        else:
            u_prev, N_prev = state.prev
            Nu = self.problem.nonlinear(u)
            L = self.problem.lin
            new = (4 * u - u_prev + 2 * self.dt * (2 * Nu - N_prev)) / (3 - 2 * self.dt * L)
            new = new * self.problem.mask
        W = PeriodicField(state.W.grid, new, real=state.W.real)
        sup = float(np.abs(self.problem.grid.to_values(new)).max())
        if not np.isfinite(sup) or sup > self.problem.blowup:
            raise BlowupDetected(f"sup |W| = {sup:.3g} at t = {state.t + self.dt:.4g}")
        return SimState(state.t + self.dt, W, self.stepper, self.dt, (u, Nu))


def step_rd(problem: RDProblem, state: SimState, dt: Optional[float] = None,
            stepper: Optional[RDStepper] = None) -> SimState:
    """One step of the co-moving system."""
    dt = state.dt if dt is None else dt
    if stepper is None or stepper.dt != dt:
        stepper = RDStepper(problem, dt, state.stepper)
    if dt > problem.dt_max(state.W.coeffs):
        raise InputError(f"dt = {dt} exceeds the explicit-part bound {problem.dt_max(state.W.coeffs):.3g}")
    return stepper.step(state)


def run_rd(problem: RDProblem, W0: PeriodicField, T: float, dt: float, stepper: str = "etdrk4",
           record=()) -> tuple:
    """Integrate to time T; returns (final state, {t: coeffs} at the requested record times)."""
    n = int(round(T / dt))
    if abs(n * dt - T) > 1e-9 * max(1.0, T):
        raise InputError("T must be a multiple of dt")
    st = RDStepper(problem, dt, stepper)
    if dt > problem.dt_max(W0.coeffs):
        raise InputError(f"dt = {dt} exceeds the explicit-part bound {problem.dt_max(W0.coeffs):.3g}")
    rec_steps = {int(round(t / dt)): t for t in record}
    state = SimState(0.0, PeriodicField(W0.grid, W0.coeffs * problem.mask, real=W0.real), stepper, dt)
    out = {}
    if 0 in rec_steps:
        out[rec_steps[0]] = state.W.coeffs.copy()
    for k in range(1, n + 1):
        state = st.step(state)
        if k in rec_steps:
            out[rec_steps[k]] = state.W.coeffs.copy()
    return state, out


# ------------------------------------------------------------ Bloch growth


@dataclass
class GrowthResult:
    xi: np.ndarray
    measured: complex
    eigenvalue: complex
    residual: float

    @property
    def error(self):
        return abs(self.measured - self.eigenvalue)


def _commensurate(xi, m):
    j = np.asarray(xi, float) * m / (2 * np.pi)
    jr = np.round(j)
    if np.abs(j - jr).max() > 1e-9:
        raise InputError(f"xi = {xi} is not commensurate with a {m}-cell super-cell")
    jr = jr.astype(int)
    if np.any(np.abs(jr) > m // 2):
        raise InputError(f"xi = {xi} lies outside [-pi, pi]^2")
    jr = np.where(jr == -(m // 2), m // 2, jr)   # -pi and pi label the same sector
    return jr, 2 * np.pi * jr / m


def bloch_growth_validation(wd, xi_list, eps: float = 1e-6, m: int = 8, T: float = 2.0, dt: float = 0.02,
                            stepper: str = "etdrk4", n_samples: int = 11, residual_tol: float = 1e-4) -> list:
    """Measured growth rates of Bloch perturbations against eigenvalues of L_xi.

    For each xi the rightmost eigenpair (lambda, q) of the Galerkin symbol seeds
    W0 = U + eps Re(e^{i xi.y} q); the sector-j coefficients of W(t) - W_base(t)
    are projected on the left eigenvector and log-fitted against t.
    """
    grid = wd.grid
    N, n = grid.N, wd.sys.n
    prob = rd_problem(wd, m)
    Us = embed_supercell(wd.U, m)
    times = np.linspace(0.0, T, n_samples)
    _, base = run_rd(prob, Us, T, dt, stepper, record=times)
    out = []
    for xi in xi_list:
        j, xi_c = _commensurate(xi, m)
        L = bloch.symbol_matrix(wd.sys, wd.U, wd.K, wd.c, xi_c)
        lam, V = np.linalg.eig(L)
        i = int(np.argmax(lam.real))
        Lt = np.linalg.inv(V)
        ell = Lt[i]
        q = bloch.from_vec(V[:, i], grid, n)
        pert = np.zeros((n, N * m, N * m), dtype=complex)
        idx = sector_index(N, m, j)
        pert[(slice(None),) + idx] += q
        # conjugate partner on the mirrored sector keeps the field real
        conj = np.conj(pert)[:, (-np.arange(N * m)) % (N * m)][:, :, (-np.arange(N * m)) % (N * m)]
        pert = 0.5 * (pert + conj)
        W0 = PeriodicField(Us.grid, Us.coeffs + eps * pert, real=True)
        _, rec = run_rd(prob, W0, T, dt, stepper, record=times)
        amps = []
        for t in times:
            v = (rec[t] - base[t])[(slice(None),) + idx]
            amps.append(ell @ bloch.to_vec(v))
        amps = np.array(amps)
        la = np.log(np.abs(amps)) + 1j * np.unwrap(np.angle(amps))
        V2 = np.stack([np.ones_like(times), times], axis=1)
        coef, *_ = np.linalg.lstsq(V2, la, rcond=None)
        res = float(np.abs(la - V2 @ coef).max())
        if res > residual_tol:
            raise NonlinearContamination(f"log-amplitude fit residual {res:.2e} at xi={xi}; reduce eps")
        out.append(GrowthResult(np.asarray(xi_c), complex(coef[1]), complex(lam[i]), res))
    return out


# ------------------------------------------------------------ Whitham


@dataclass
class WhithamModel:
    K: np.ndarray
    lam0: object                 # modulation.Lambda0Multiplier
    dKc: np.ndarray              # (2, 2, 2)
    d2Omega: np.ndarray          # (2, 2, 2, 2, 2)
    grid: Grid2D                 # y super-cell
    nonlinear: bool = True
    validity: float = 0.5

    def __post_init__(self):
        w1, w2 = self.grid.wavevectors
        self.symbol = modulation.D0_eval_many(self.lam0, np.stack([w1, w2], axis=-1))

    @property
    def m(self):
        return int(round(self.grid.period))


def whitham_model(wd, ms, m: int, N: Optional[int] = None, nonlinear: bool = True) -> WhithamModel:
    lam0 = ms.lambda0 if ms.lambda0 is not None else modulation.build_lambda0(ms)
    N = wd.grid.N if N is None else N
    return WhithamModel(np.asarray(wd.K, float), lam0, np.asarray(wd.dKc, float),
                        np.asarray(wd.d2KOmega, float), Grid2D(N * m, float(m)), nonlinear)


@dataclass
class WhithamState:
    t: float
    phi: np.ndarray              # (2, Ns, Ns) Fourier coefficients of phi_W


def phi_gradient(model: WhithamModel, coeffs, padded: bool = False) -> np.ndarray:
    """G[j, m] = d_j phi_m as values (on the dealiasing grid if ``padded``)."""
    g = model.grid
    w = g.wavevectors
    conv = g.to_padded if padded else g.to_values
    return np.stack([conv(1j * w[j] * coeffs).real for j in range(2)])


def whitham_nonlinear(model: WhithamModel, coeffs) -> np.ndarray:
    """Quadratic terms of the phi equation, dealiased."""
    if not model.nonlinear:
        return np.zeros_like(coeffs)
    K, dKc, d2 = model.K, model.dKc, model.d2Omega
    G = phi_gradient(model, coeffs, padded=True)
    H = np.einsum("pj,jm...->pm...", K, G)
    n1 = 0.5 * np.einsum("pmqrl,pm...,qr...->l...", d2, H, H)
    v = np.einsum("pma,pm...->a...", dKc, H)
    n2 = np.einsum("al...,a...->l...", H, v)
    HG = np.einsum("pj...,jm...->pm...", H, G)
    w = np.einsum("pma,pm...->a...", dKc, HG)
    n3 = -np.einsum("al,a...->l...", K, w)
    return model.grid.from_padded(n1 + n2 + n3)


def _apply(E, u):
    return np.einsum("...ij,j...->i...", E, u)


class WhithamStepper:
    """Integrating-factor RK4 with the exact 2 x 2 exponential of the linear symbol."""

    def __init__(self, model: WhithamModel, dt: float):
        self.model = model
        self.dt = float(dt)
        self.E = expm2(self.dt * model.symbol)
        self.E2 = expm2(0.5 * self.dt * model.symbol)

    def step(self, ws: WhithamState) -> WhithamState:
        h, E, E2 = self.dt, self.E, self.E2
        Nf = lambda u: whitham_nonlinear(self.model, u)
        u = ws.phi
        k1 = Nf(u)
        k2 = Nf(_apply(E2, u + 0.5 * h * k1))
        k3 = Nf(_apply(E2, u) + 0.5 * h * k2)
        k4 = Nf(_apply(E, u) + h * _apply(E2, k3))
        new = _apply(E, u) + h / 6 * (_apply(E, k1) + 2 * _apply(E2, k2 + k3) + k4)
        new = new * self.model.grid.band
        G = phi_gradient(self.model, new)
        g = float(np.abs(G).max())
        if g > self.model.validity:
            raise LeavesValidityRegion(f"|grad phi| = {g:.3g} exceeds {self.model.validity}")
        return WhithamState(ws.t + h, new)


def step_whitham(model: WhithamModel, ws: WhithamState, dt: float) -> WhithamState:
    return WhithamStepper(model, dt).step(ws)


def run_whitham(model: WhithamModel, phi0, times, dt: float) -> dict:
    """phi coefficients at the requested times (each a multiple of dt)."""
    st = WhithamStepper(model, dt)
    ws = WhithamState(0.0, np.asarray(phi0, complex) * model.grid.band)
    out = {}
    steps = sorted((int(round(t / dt)), t) for t in times)
    k = 0
    for target, t in steps:
        while k < target:
            ws = st.step(ws)
            k += 1
        out[t] = ws.phi.copy()
    return out


def linear_propagator(model: WhithamModel, t: float, phi0) -> np.ndarray:
    """exp(t D^(0)) applied mode by mode."""
    return _apply(expm2(t * model.symbol), np.asarray(phi0, complex)) * model.grid.band


# ------------------------------------------------------------ reconstruction


def eval_cell_series(coeffs, points) -> np.ndarray:
    """Values of a unit-periodic trigonometric series at arbitrary points (2, P)."""
    coeffs = np.asarray(coeffs)
    N = coeffs.shape[-1]
    k = np.fft.fftfreq(N, 1.0 / N)
    y = np.asarray(points, float)
    E1 = np.exp(2j * np.pi * np.outer(y[0].ravel(), k))
    E2 = np.exp(2j * np.pi * np.outer(y[1].ravel(), k))
    out = np.stack([((E1 @ c) * E2).sum(-1) for c in coeffs.reshape(-1, N, N)])
    return out.real.reshape(coeffs.shape[:-2] + y.shape[1:])


@dataclass
class Reconstruction:
    W: np.ndarray          # (n, Ns, Ns) values of U^{K^W}(Psi^W)
    dK: np.ndarray         # (2, 2, Ns, Ns) values of K^W - K, entry [p, m]
    Psi: np.ndarray        # (2, Ns, Ns)
    kappa: float


def _box(model_grid: Grid2D) -> BoxGrid:
    return BoxGrid(0.5 * model_grid.period, model_grid.N)


def reconstruct(wd, phi_values, grid: Grid2D, tol: float = 1e-11) -> Reconstruction:
    """U^{K^W}(Psi) with Psi = (Id - phi)^-1(y) and K^W = K (I - grad phi)^-1 evaluated at Psi.

    ``phi_values`` are nodal values on the y super-cell.  The wave family is
    used through its first-order Taylor expansion in K.
    """
    box = _box(grid)
    shift = 0.5 * grid.period
    pf = PhaseField.from_values(box, phi_values)
    y = np.stack(grid.x)
    ev = periodic_interpolator(box, pf.phi)
    kappa = pf.kappa()
    inv = invert_id_minus_phi(lambda z: ev(z - shift), y, kappa, tol=tol)
    Psi = inv.y
    # grad phi at Psi in the [j, m] = d_j phi_m convention
    gev = periodic_interpolator(box, np.transpose(pf.grad, (1, 0, 2, 3)).reshape(4, grid.N, grid.N))
    G = gev(Psi - shift).reshape((2, 2) + Psi.shape[1:])
    K = np.asarray(wd.K, float)
    Gm = np.moveaxis(G, (0, 1), (-2, -1))
    inv_IG = np.linalg.inv(np.eye(2) - Gm)
    dK = np.moveaxis(K @ inv_IG - K, (-2, -1), (0, 1))
    W = eval_cell_series(wd.U.coeffs, Psi)
    for p in range(2):
        for mm in range(2):
            W = W + eval_cell_series(wd.dKU[p][mm].coeffs, Psi) * dK[p, mm]
    return Reconstruction(W, dK, Psi, kappa)


def lp_norm(values, h: float, p: float) -> float:
    """L^p norm over the super-cell of the pointwise Euclidean norm (leading axes are components)."""
    v = np.asarray(values)
    mag = np.sqrt((np.abs(v) ** 2).reshape((-1,) + v.shape[-2:]).sum(0))
    if np.isinf(p):
        return float(mag.max())
    return float(((mag**p).sum() * h * h) ** (1.0 / p))


def front_constants(ms) -> tuple:
    """(s, b_max, b_min): largest characteristic speed of A and extreme damping rates of B over directions."""
    s, b_max, b_min = 0.0, 0.0, np.inf
    for w in np.linspace(0, np.pi, 64, endpoint=False):
        e = modulation.unit(w)
        s = max(s, float(np.abs(np.linalg.eigvals(ms.A_of(e))).max()))
        Be = ms.B_of(e)
        ev = np.linalg.eigvalsh(0.5 * (Be + Be.T))
        b_max = max(b_max, float(ev.max()))
        b_min = min(b_min, float(ev.min()))
    return s, b_max, b_min


def cutoff_time(ms, m: int, r0: float, margin: float = 4.0) -> float:
    """First time the perturbation front reaches ``margin`` cells from the boundary.

    The front radius is r0 + s t + 3 sqrt(2 b t), with s the largest characteristic
    speed of A and b the largest eigenvalue of the symmetric part of B over directions.
    """
    s, b, _ = front_constants(ms)
    room = 0.5 * m - margin - r0
    if room <= 0:
        return 0.0
    # solve s t + 3 sqrt(2 b t) = room for t
    if s == 0 and b <= 0:
        return np.inf
    a = 3 * np.sqrt(2 * b)
    # rationalised root: no cancellation when s is tiny
    root = 2 * room / (a + np.sqrt(a * a + 4 * s * room))
    return float(root**2)


@dataclass
class ComparisonResult:
    times: list
    rd_error: dict                  # p -> list over times
    dK_norm: dict                   # p -> list over times
    amplitude: float
    t_cut: float
    fits: dict = field(default_factory=dict)

    def rows(self):
        for name, series in (("rd_error", self.rd_error), ("dK", self.dK_norm)):
            for p, vals in series.items():
                for t, v in zip(self.times, vals):
                    yield name, t, p, v


def phase_initial(grid: Grid2D, source: dict) -> PhaseField:
    """phi_0 on the y super-cell from a phase-source description."""
    box = _box(grid)
    return make_phase_source(box, source.get("amplitude", 0.1), source.get("width", 1.0),
                             source.get("sign", 1), tuple(source.get("components", (0,))),
                             pair_offset=source.get("pair_offset"))


def run_comparison(wd, ms, source: dict, T: float, m: int = 16, dt: float = 0.05,
                   times=None, stepper: str = "etdrk4", whitham_dt: Optional[float] = None,
                   p_list=(2, 4, np.inf)) -> ComparisonResult:
    """Evolve the co-moving system and the Whitham phase equation from matched data."""
    prob = rd_problem(wd, m)
    grid = prob.grid
    h = grid.period / grid.N
    if times is None:
        times = [t for t in (2.0**k for k in range(-2, 20)) if t <= T]
    times = sorted(set([0.0] + list(times)))
    amp = float(source.get("amplitude", 0.1))
    if amp == 0:
        pf0 = PhaseField.from_values(_box(grid), np.zeros((2, grid.N, grid.N)))
    else:
        pf0 = phase_initial(grid, source)
    rec0 = reconstruct(wd, pf0.phi, grid)
    W0 = PeriodicField(grid, grid.from_values(rec0.W), real=True)
    _, rd = run_rd(prob, W0, T, dt, stepper, record=times)
    model = whitham_model(wd, ms, m)
    phi0 = model.grid.from_values(pf0.phi)
    wh = run_whitham(model, phi0, times, whitham_dt or dt)
    rd_err = {p: [] for p in p_list}
    dKn = {p: [] for p in p_list}
    for t in times:
        rec = reconstruct(wd, model.grid.to_values(wh[t]).real, grid)
        diff = grid.to_values(rd[t]).real - rec.W
        for p in p_list:
            rd_err[p].append(lp_norm(diff, h, p))
            dKn[p].append(lp_norm(rec.dK, h, p))
    r0 = 3 * float(source.get("width", 1.0)) + float(np.linalg.norm(source.get("pair_offset") or (0, 0)))
    res = ComparisonResult(times, rd_err, dKn, amp, cutoff_time(ms, m, r0))
    return res


def whitham_decay(wd, ms, source: dict, m: int, times, dt: float, N: Optional[int] = None,
                  p: float = 2, window="auto"):
    """||K^W - K||_{L^p} from the Whitham equation alone, with its decay fit.

    Only times before the boundary cutoff are run.  With ``window="auto"`` the fit
    starts at w^2 / b_min, when the slowest diffusion direction has spread the
    source beyond its width.
    """
    model = whitham_model(wd, ms, m, N=N)
    grid = model.grid
    r0 = 3 * float(source.get("width", 1.0)) + float(np.linalg.norm(source.get("pair_offset") or (0, 0)))
    t_cut = cutoff_time(ms, m, r0)
    times = [t for t in times if t <= t_cut]
    pf0 = phase_initial(grid, source)
    wh = run_whitham(model, model.grid.from_values(pf0.phi), times, dt)
    h = grid.period / grid.N
    vals = [lp_norm(_dK_only(model, wh[t], wd.K), h, p) for t in times]
    if window == "auto":
        # self-similar regime: the slowest diffusion has spread the source past its own width
        _, _, b_min = front_constants(ms)
        w = float(source.get("width", 1.0))
        window = (w * w / b_min, None)
    sel = [(t, v) for t, v in zip(times, vals) if window[0] is None or t >= window[0]]
    fit = fit_decay(*zip(*sel)) if len(sel) >= 5 else None
    return {"times": list(times), "values": vals, "t_cut": t_cut, "fit": fit}


def _dK_only(model: WhithamModel, coeffs, K) -> np.ndarray:
    """K^W - K at Psi(y) for the phase held by ``coeffs``."""
    grid = model.grid
    box = _box(grid)
    shift = 0.5 * grid.period
    phi = grid.to_values(coeffs).real
    G = phi_gradient(model, coeffs)                          # [j, m]
    ev = periodic_interpolator(box, phi)
    y = np.stack(grid.x)
    kappa = float(np.linalg.norm(np.moveaxis(G, (0, 1), (-2, -1)), ord=2, axis=(-2, -1)).max())
    Psi = invert_id_minus_phi(lambda z: ev(z - shift), y, kappa).y
    Gp = periodic_interpolator(box, G.reshape(4, grid.N, grid.N))(Psi - shift).reshape(G.shape)
    K = np.asarray(K, float)
    Gm = np.moveaxis(Gp, (0, 1), (-2, -1))
    return np.moveaxis(K @ np.linalg.inv(np.eye(2) - Gm) - K, (-2, -1), (0, 1))


def amplitude_sweep(wd, ms, source: dict, amplitudes, T: float, m: int = 16, dt: float = 0.05, p: float = 2):
    """Modulation error at time T against amplitude; returns (amplitudes, errors, log-log slope)."""
    errs = []
    for a in amplitudes:
        src = dict(source, amplitude=a)
        res = run_comparison(wd, ms, src, T, m=m, dt=dt, times=[T], p_list=(p,))
        errs.append(res.rd_error[p][-1])
    la, le = np.log(amplitudes), np.log(errs)
    slope = float(np.polyfit(la, le, 1)[0])
    return np.asarray(amplitudes, float), np.asarray(errs), slope


def write_diagnostics_csv(path, res: ComparisonResult) -> None:
    with open(path, "w") as fh:
        fh.write("series,t,p,value\n")
        for name, t, p, v in res.rows():
            fh.write(f"{name},{t:.10g},{p},{v:.10g}\n")


def write_manifest(path, info: dict) -> None:
    with open(path, "w") as fh:
        json.dump(info, fh, indent=2, sort_keys=True, default=str)
