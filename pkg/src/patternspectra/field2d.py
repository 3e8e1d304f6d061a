"""Truncated Fourier-Galerkin fields on the periodic square.

Fields are stored coefficient-major: ``coeffs[component, k1, k2]`` with the
normalisation ``f(x) = sum_k coeffs[k] exp(2 pi i k.x / period)``, so that the
periodic mean-square inner product is the plain sum of ``conj(a) * b`` over the
coefficient array (Parseval).  Integer wavenumbers follow ``numpy.fft`` order.

The Nyquist modes ``k_i = -N/2`` are kept identically zero.  That keeps odd
derivatives of real fields real and makes every operator built on top of this
module commute with complex conjugation.

Products and other nonlinear evaluations go through a zero-padded grid of
``3N/2`` points per direction and are truncated back to the band (the 2/3 rule
applied on the padded grid), which is alias-free for quadratic terms.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import GridMismatch, SnapshotFormatError

SNAPSHOT_MAGIC = b"PSFD"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sHIIB")


@dataclass(frozen=True)
class Grid2D:
    """N x N collocation grid on ``[0, period)^2``."""

    N: int
    period: float = 1.0

    def __post_init__(self):
        N = self.N
        if N < 8 or N % 2 or (N & (N - 1)):
            raise ValueError(f"N must be a power of two >= 8, got {N}")
        if self.period <= 0:
            raise ValueError("period must be positive")

    @cached_property
    def k(self) -> np.ndarray:
        """Integer wavenumbers in FFT order."""
        return np.fft.fftfreq(self.N, 1.0 / self.N)

    @cached_property
    def kk(self) -> tuple[np.ndarray, np.ndarray]:
        return tuple(np.meshgrid(self.k, self.k, indexing="ij"))

    @cached_property
    def band(self) -> np.ndarray:
        """Boolean mask of retained modes (Nyquist excluded)."""
        half = self.N // 2
        k1, k2 = self.kk
        return (np.abs(k1) < half) & (np.abs(k2) < half)

    @cached_property
    def wavevectors(self) -> tuple[np.ndarray, np.ndarray]:
        """Angular wavevectors 2 pi k / period, zero on Nyquist modes."""
        s = 2 * np.pi / self.period
        k1, k2 = self.kk
        return s * k1 * self.band, s * k2 * self.band

    @cached_property
    def x(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.arange(self.N) * (self.period / self.N)
        return tuple(np.meshgrid(x, x, indexing="ij"))

    @property
    def M(self) -> int:
        """Padded (dealiasing) grid size."""
        return 3 * self.N // 2

    def to_values(self, coeffs: np.ndarray) -> np.ndarray:
        return np.fft.ifft2(coeffs, axes=(-2, -1)) * self.N**2

    def from_values(self, values: np.ndarray) -> np.ndarray:
        return np.fft.fft2(values, axes=(-2, -1)) / self.N**2 * self.band

    def _embed(self, coeffs: np.ndarray) -> np.ndarray:
        N, M = self.N, self.M
        h = N // 2
        out = np.zeros(coeffs.shape[:-2] + (M, M), dtype=complex)
        idx = np.r_[0:h, M - h + 1 : M]
        src = np.r_[0:h, N - h + 1 : N]
        out[..., idx[:, None], idx[None, :]] = coeffs[..., src[:, None], src[None, :]]
        return out

    def _extract(self, padded: np.ndarray) -> np.ndarray:
        N, M = self.N, self.M
        h = N // 2
        out = np.zeros(padded.shape[:-2] + (N, N), dtype=complex)
        idx = np.r_[0:h, M - h + 1 : M]
        dst = np.r_[0:h, N - h + 1 : N]
        out[..., dst[:, None], dst[None, :]] = padded[..., idx[:, None], idx[None, :]]
        return out

    def to_padded(self, coeffs: np.ndarray) -> np.ndarray:
        """Values on the dealiasing grid (3N/2 points per direction)."""
        return np.fft.ifft2(self._embed(coeffs), axes=(-2, -1)) * self.M**2

    def from_padded(self, values: np.ndarray) -> np.ndarray:
        return self._extract(np.fft.fft2(values, axes=(-2, -1)) / self.M**2)

    def padded_coefficients(self, values: np.ndarray) -> np.ndarray:
        """Full DFT coefficients on the padded grid (no truncation)."""
        return np.fft.fft2(values, axes=(-2, -1)) / self.M**2


class PeriodicField:
    """n-component periodic field held by its Fourier coefficients."""

    __slots__ = ("grid", "_coeffs", "real")

    def __init__(self, grid: Grid2D, coeffs, real: bool = False):
        c = np.array(coeffs, dtype=complex)
        if c.ndim == 2:
            c = c[None]
        if c.shape[-2:] != (grid.N, grid.N):
            raise GridMismatch(f"coefficient shape {c.shape} does not fit N={grid.N}")
        c = c * grid.band
        c.setflags(write=False)
        self.grid = grid
        self._coeffs = c
        self.real = bool(real)

    @property
    def coeffs(self) -> np.ndarray:
        return self._coeffs

    @property
    def n(self) -> int:
        return self._coeffs.shape[0]

    @classmethod
    def from_values(cls, grid: Grid2D, values, real: bool | None = None) -> "PeriodicField":
        v = np.asarray(values)
        if v.ndim == 2:
            v = v[None]
        if real is None:
            real = not np.iscomplexobj(v)
        return cls(grid, grid.from_values(v), real=real)

    @classmethod
    def from_function(cls, grid: Grid2D, func, real: bool | None = None) -> "PeriodicField":
        x1, x2 = grid.x
        return cls.from_values(grid, func(x1, x2), real=real)

    @classmethod
    def constant(cls, grid: Grid2D, value) -> "PeriodicField":
        value = np.atleast_1d(np.asarray(value))
        c = np.zeros((value.size, grid.N, grid.N), dtype=complex)
        c[:, 0, 0] = value
        return cls(grid, c, real=bool(np.isrealobj(value)))

    @classmethod
    def zeros(cls, grid: Grid2D, n: int, real: bool = True) -> "PeriodicField":
        return cls(grid, np.zeros((n, grid.N, grid.N)), real=real)

    def values(self) -> np.ndarray:
        v = self.grid.to_values(self._coeffs)
        return v.real if self.real else v

    def padded_values(self) -> np.ndarray:
        v = self.grid.to_padded(self._coeffs)
        return v.real if self.real else v

    def conjugate_symmetry_defect(self) -> float:
        c = self._coeffs
        flipped = np.conj(np.roll(np.flip(c, axis=(-2, -1)), 1, axis=(-2, -1)))
        scale = max(np.abs(c).max(), 1e-300)
        return float(np.abs(c - flipped).max() / scale)

    def _check(self, other: "PeriodicField"):
        if not isinstance(other, PeriodicField):
            raise TypeError("expected PeriodicField")
        if other.grid != self.grid:
            raise GridMismatch("fields live on different grids")

    def __add__(self, other):
        if isinstance(other, PeriodicField):
            self._check(other)
            return PeriodicField(self.grid, self._coeffs + other._coeffs, self.real and other.real)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, PeriodicField):
            self._check(other)
            return PeriodicField(self.grid, self._coeffs - other._coeffs, self.real and other.real)
        return NotImplemented

    def __mul__(self, scalar):
        if np.isscalar(scalar):
            return PeriodicField(self.grid, self._coeffs * scalar, self.real and np.isrealobj(scalar))
        return NotImplemented

    __rmul__ = __mul__

    def __neg__(self):
        return PeriodicField(self.grid, -self._coeffs, self.real)

    def component(self, i: int) -> "PeriodicField":
        return PeriodicField(self.grid, self._coeffs[i : i + 1], self.real)

    def shift(self, phi) -> "PeriodicField":
        """Translate: returns x -> f(x + phi)."""
        w1, w2 = self.grid.wavevectors
        phase = np.exp(1j * (w1 * phi[0] + w2 * phi[1]))
        return PeriodicField(self.grid, self._coeffs * phase, self.real)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self._coeffs) ** 2)))

    def sup_norm(self) -> float:
        return float(np.abs(self.values()).max())

    def __repr__(self):
        return f"PeriodicField(n={self.n}, N={self.grid.N}, real={self.real})"


def differentiate(f: PeriodicField, direction: int) -> PeriodicField:
    """Spectral derivative along x_1 (direction=1) or x_2 (direction=2)."""
    if direction not in (1, 2):
        raise ValueError("direction must be 1 or 2")
    w = f.grid.wavevectors[direction - 1]
    return PeriodicField(f.grid, 1j * w * f.coeffs, f.real)


def laplacian(f: PeriodicField) -> PeriodicField:
    w1, w2 = f.grid.wavevectors
    return PeriodicField(f.grid, -(w1**2 + w2**2) * f.coeffs, f.real)


def multiply(f: PeriodicField, g: PeriodicField) -> PeriodicField:
    """Dealiased pointwise product, componentwise (broadcast if one side is scalar)."""
    f._check(g)
    grid = f.grid
    prod = grid.to_padded(f.coeffs) * grid.to_padded(g.coeffs)
    return PeriodicField(grid, grid.from_padded(prod), f.real and g.real)


def inner_product_per(f: PeriodicField, g: PeriodicField) -> complex:
    """Mean over the periodic cell of conj(f) . g; skew-linear in f."""
    f._check(g)
    if f.n != g.n:
        raise GridMismatch("component counts differ")
    return complex(np.vdot(f.coeffs, g.coeffs))


def write_snapshot(path, f: PeriodicField) -> None:
    """Binary snapshot: header then little-endian complex64 coefficients."""
    header = _HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, f.grid.N, f.n, int(f.real))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(f.coeffs, dtype="<c8").tobytes())


def read_snapshot(path, period: float = 1.0) -> PeriodicField:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise SnapshotFormatError("truncated header")
    magic, version, N, n, real = _HEADER.unpack_from(raw)
    if magic != SNAPSHOT_MAGIC:
        raise SnapshotFormatError("bad magic")
    if version != SNAPSHOT_VERSION:
        raise SnapshotFormatError(f"unsupported snapshot version {version}")
    data = np.frombuffer(raw, dtype="<c8", offset=_HEADER.size)
    if data.size != n * N * N:
        raise SnapshotFormatError("payload size does not match header")
    return PeriodicField(Grid2D(N, period), data.reshape(n, N, N).astype(complex), bool(real))
