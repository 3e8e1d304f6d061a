"""Reaction-diffusion-advection systems W_t = Lap W + div G(W) + f(W).

Array conventions for evaluators, with trailing spatial axes ``...``:

* ``f(W)``   -> (n, ...)
* ``df(W)``  -> (n, n, ...)        df[i, j] = d f_i / d W_j
* ``d2f(W)`` -> (n, n, n, ...)
* ``G(W)``   -> (2, n, ...)        row a of the 2 x n flux matrix
* ``dG(W)``  -> (2, n, n, ...)
* ``d2G(W)`` -> (2, n, n, n, ...)

The wave matrix ``K`` holds the wave vectors K_1, K_2 as its *columns*, so that
a wave reads W(t, x) = U(K^T x + t Omega) with Omega = -K^T c.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ComponentMismatch, ConfigError, InputError
from .field2d import PeriodicField

FD_STEP = 1e-5


def _fd_jacobian(func: Callable, W: np.ndarray) -> np.ndarray:
    """Central-difference Jacobian; derivative index appended after output axes."""
    W = np.asarray(W, dtype=float)
    n = W.shape[0]
    cols = []
    for j in range(n):
        h = FD_STEP * np.maximum(1.0, np.abs(W[j]))
        Wp = W.copy()
        Wm = W.copy()
        Wp[j] = W[j] + h
        Wm[j] = W[j] - h
        cols.append((func(Wp) - func(Wm)) / (2 * h))
    out = np.stack(cols, axis=0)
    # move the differentiation axis right after the output component axes
    n_out = out.ndim - 1 - (W.ndim - 1)
    return np.moveaxis(out, 0, n_out)


@dataclass
class RDSystem:
    """System data (n, f, G) with optional analytic derivatives."""

    name: str
    n: int
    f: Callable[[np.ndarray], np.ndarray]
    G: Optional[Callable[[np.ndarray], np.ndarray]] = None
    df: Optional[Callable] = None
    d2f: Optional[Callable] = None
    dG: Optional[Callable] = None
    d2G: Optional[Callable] = None
    params: dict = field(default_factory=dict)

    @property
    def has_flux(self) -> bool:
        return self.G is not None

    def eval_f(self, W):
        return np.asarray(self.f(W), dtype=float)

    def eval_df(self, W):
        if self.df is not None:
            return np.asarray(self.df(W), dtype=float)
        return _fd_jacobian(self.eval_f, W)

    def eval_d2f(self, W):
        if self.d2f is not None:
            return np.asarray(self.d2f(W), dtype=float)
        return _fd_jacobian(self.eval_df, W)

    def eval_G(self, W):
        W = np.asarray(W, dtype=float)
        if self.G is None:
            return np.zeros((2,) + W.shape)
        return np.asarray(self.G(W), dtype=float)

    def eval_dG(self, W):
        W = np.asarray(W, dtype=float)
        if self.G is None:
            return np.zeros((2, self.n) + W.shape)
        if self.dG is not None:
            return np.asarray(self.dG(W), dtype=float)
        return _fd_jacobian(self.eval_G, W)

    def eval_d2G(self, W):
        W = np.asarray(W, dtype=float)
        if self.G is None:
            return np.zeros((2, self.n, self.n) + W.shape)
        if self.d2G is not None:
            return np.asarray(self.d2G(W), dtype=float)
        return _fd_jacobian(self.eval_dG, W)


@dataclass(frozen=True)
class WaveParams:
    """Wave matrix K (columns = wave vectors) and speed c; Omega = -K^T c."""

    K: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        K = np.array(self.K, dtype=float).reshape(2, 2)
        c = np.array(self.c, dtype=float).reshape(2)
        if abs(np.linalg.det(K)) < 1e-14 * max(1.0, np.abs(K).max() ** 2):
            raise InputError("wave matrix K is singular")
        K.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "c", c)

    @property
    def Omega(self) -> np.ndarray:
        return -self.K.T @ self.c

    def with_K(self, K) -> "WaveParams":
        return WaveParams(K, self.c)

    def with_c(self, c) -> "WaveParams":
        return WaveParams(self.K, c)


def symbol_parts(grid, K, c, xi=(0.0, 0.0)):
    """Fourier symbols of the constant-coefficient parts of the operator.

    Returns (kw, diag) where ``kw[a] = (K (w + xi))_a`` on every mode and
    ``diag = -|K(w + xi)|^2 + i (K^T c).(w + xi)``.
    """
    w1, w2 = grid.wavevectors
    s1 = w1 + xi[0]
    s2 = w2 + xi[1]
    kw = np.stack([K[0, 0] * s1 + K[0, 1] * s2, K[1, 0] * s1 + K[1, 1] * s2])
    Ktc = K.T @ c
    diag = -(kw[0] ** 2 + kw[1] ** 2) + 1j * (Ktc[0] * s1 + Ktc[1] * s2)
    return kw, diag


def residual(sys: RDSystem, U: PeriodicField, wp: WaveParams) -> PeriodicField:
    """Profile-equation residual evaluated pseudospectrally."""
    if U.n != sys.n:
        raise ComponentMismatch(f"field has {U.n} components, system has {sys.n}")
    grid = U.grid
    kw, diag = symbol_parts(grid, wp.K, wp.c)
    Up = U.padded_values().real
    out = diag * U.coeffs + grid.from_padded(sys.eval_f(Up))
    if sys.has_flux:
        Gh = grid.from_padded(sys.eval_G(Up))
        out = out + 1j * (kw[0] * Gh[0] + kw[1] * Gh[1])
    return PeriodicField(grid, out, real=U.real)


# ---------------------------------------------------------------- built-ins


def linear_system(M, L=None, name="linear") -> RDSystem:
    """f = M W and G(W) = L W with L of shape (2, n, n)."""
    M = np.array(M, dtype=float)
    n = M.shape[0]
    Lt = None if L is None else np.array(L, dtype=float).reshape(2, n, n)

    def f(W):
        return np.einsum("ij,j...->i...", M, W)

    def df(W):
        W = np.asarray(W)
        return np.broadcast_to(M.reshape(M.shape + (1,) * (W.ndim - 1)), M.shape + W.shape[1:]).copy()

    def d2f(W):
        W = np.asarray(W)
        return np.zeros((n, n, n) + W.shape[1:])

    kwargs = dict(name=name, n=n, f=f, df=df, d2f=d2f, params={"M": M.tolist()})
    if Lt is not None:
        def G(W):
            return np.einsum("aij,j...->ai...", Lt, W)

        def dG(W):
            W = np.asarray(W)
            return np.broadcast_to(Lt.reshape(Lt.shape + (1,) * (W.ndim - 1)), Lt.shape + W.shape[1:]).copy()

        def d2G(W):
            W = np.asarray(W)
            return np.zeros((2, n, n, n) + W.shape[1:])

        kwargs.update(G=G, dG=dG, d2G=d2G)
        kwargs["params"]["L"] = Lt.tolist()
    return RDSystem(**kwargs)


def brusselator(a=1.0, b=5.0, gamma=(0.0, 0.0), name=None) -> RDSystem:
    """Brusselator kinetics with equal diffusion.

    f(u, v) = (a - (b + 1) u + u^2 v, b u - u^2 v).  With ``gamma != 0`` the
    flux G_a(u, v) = gamma_a (u^2 / 2, 0) adds a Burgers-type advection of u,
    which breaks the x -> -x symmetry and produces travelling patterns.
    """
    gamma = np.asarray(gamma, dtype=float)
    advective = bool(np.any(gamma != 0))
    if name is None:
        name = "brusselator_advective" if advective else "brusselator"

    def f(W):
        u, v = W[0], W[1]
        return np.stack([a - (b + 1) * u + u * u * v, b * u - u * u * v])

    def df(W):
        u, v = W[0], W[1]
        return np.stack([
            np.stack([-(b + 1) + 2 * u * v, u * u]),
            np.stack([b - 2 * u * v, -u * u]),
        ])

    def d2f(W):
        u, v = W[0], W[1]
        z = np.zeros_like(u)
        h0 = np.stack([np.stack([2 * v, 2 * u]), np.stack([2 * u, z])])
        return np.stack([h0, -h0])

    kwargs = dict(name=name, n=2, f=f, df=df, d2f=d2f,
                  params={"a": a, "b": b, "gamma": gamma.tolist()})
    if advective:
        def G(W):
            u = W[0]
            z = np.zeros_like(u)
            return np.stack([np.stack([g * u * u / 2, z]) for g in gamma])

        def dG(W):
            u = W[0]
            z = np.zeros_like(u)
            return np.stack([np.stack([np.stack([g * u, z]), np.stack([z, z])]) for g in gamma])

        def d2G(W):
            u = W[0]
            z = np.zeros_like(u)
            out = np.zeros((2, 2, 2, 2) + u.shape)
            for ai, g in enumerate(gamma):
                out[ai, 0, 0, 0] = g + z
            return out

        kwargs.update(G=G, dG=dG, d2G=d2G)
    return RDSystem(**kwargs)


def brusselator_state(a=1.0, b=5.0) -> np.ndarray:
    return np.array([a, b / a])


class Polynomial:
    """Vector polynomial R^n -> R^(shape) from a list of monomial terms.

    ``terms`` is a list of (output_index, coefficient, powers) with output_index
    a tuple into ``shape`` and ``powers`` a length-n tuple of exponents.
    """

    def __init__(self, n: int, shape: tuple, terms):
        self.n = n
        self.shape = tuple(shape)
        self.terms = []
        for out, coef, powers in terms:
            out = tuple(np.atleast_1d(out).astype(int).tolist())
            powers = tuple(int(p) for p in powers)
            if len(powers) != n or min(powers) < 0:
                raise ConfigError(f"bad monomial powers {powers}")
            if sum(powers) > 4:
                raise ConfigError("polynomial models are limited to degree 4")
            if len(out) != len(self.shape) or any(o < 0 or o >= s for o, s in zip(out, self.shape)):
                raise ConfigError(f"bad output index {out}")
            self.terms.append((out, float(coef), powers))

    def _mono(self, W, powers, dvars=()):
        coef = 1.0
        p = list(powers)
        for j in dvars:
            coef *= p[j]
            p[j] -= 1
            if p[j] < 0:
                return None
        val = coef * np.ones_like(W[0])
        for j, e in enumerate(p):
            if e:
                val = val * W[j] ** e
        return val

    def evaluate(self, W, order=0):
        W = np.asarray(W, dtype=float)
        spatial = W.shape[1:]
        out = np.zeros(self.shape + (self.n,) * order + spatial)
        for idx, coef, powers in self.terms:
            for dvars in np.ndindex(*((self.n,) * order)):
                m = self._mono(W, powers, dvars)
                if m is not None:
                    out[idx + dvars] += coef * m
        return out


def polynomial_system(n: int, f_terms, G_terms=None, name="polynomial", params=None) -> RDSystem:
    """Custom model from coefficient tables (degree <= 4), analytic derivatives."""
    fp = Polynomial(n, (n,), f_terms)
    kwargs = dict(
        name=name, n=n,
        f=lambda W: fp.evaluate(W, 0),
        df=lambda W: fp.evaluate(W, 1),
        d2f=lambda W: fp.evaluate(W, 2),
        params=dict(params) if params is not None else {"n": n, "f_terms": _plain_terms(f_terms)},
    )
    if G_terms:
        gp = Polynomial(n, (2, n), G_terms)
        kwargs.update(G=lambda W: gp.evaluate(W, 0), dG=lambda W: gp.evaluate(W, 1),
                      d2G=lambda W: gp.evaluate(W, 2))
        if params is None:
            kwargs["params"]["G_terms"] = _plain_terms(G_terms)
    return RDSystem(**kwargs)


def _plain_terms(terms):
    return [[np.asarray(t).tolist() for t in term] for term in terms]


def cgl_pair(mu=1.0, g=0.2) -> RDSystem:
    """Two Ginzburg-Landau amplitudes A = w0 + i w1, B = w2 + i w3.

    A_t = Lap A + mu A - |A|^2 A - g |B|^2 A, and symmetrically for B.  A plane
    wave in A along K_1 and one in B along K_2 form an exactly band-limited,
    genuinely two-dimensional periodic pattern.
    """
    terms = []
    for (i0, i1), (j0, j1) in (((0, 1), (2, 3)), ((2, 3), (0, 1))):
        for comp in (i0, i1):
            terms.append(((comp,), mu, _powers(4, [comp])))
            for other in (i0, i1):
                terms.append(((comp,), -1.0, _powers(4, [comp, other, other])))
            for other in (j0, j1):
                terms.append(((comp,), -g, _powers(4, [comp, other, other])))
    return polynomial_system(4, terms, name="cgl_pair", params={"mu": mu, "g": g})


def _powers(n, factors):
    """Exponent tuple of the monomial prod_k W[factors[k]]."""
    p = [0] * n
    for j in factors:
        p[j] += 1
    return tuple(p)


BUILTIN = {
    "linear": linear_system,
    "brusselator": brusselator,
    "brusselator_advective": lambda a=1.0, b=5.0, gamma=(0.5, 0.5): brusselator(a, b, gamma),
    "cgl_pair": cgl_pair,
}


def make_system(name: str, **params) -> RDSystem:
    if name == "polynomial":
        try:
            return polynomial_system(int(params["n"]), params["f_terms"], params.get("G_terms"))
        except KeyError as exc:
            raise ConfigError(f"polynomial model needs {exc}") from None
    if name not in BUILTIN:
        raise ConfigError(f"unknown model {name!r}; choose from {sorted(BUILTIN) + ['polynomial']}")
    try:
        return BUILTIN[name](**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for model {name!r}: {exc}") from None
