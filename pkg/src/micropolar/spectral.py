"""Spectral representation of periodic fields and the basic operator set.

Fields live on a uniform N^dim grid over [0, L)^dim and are stored as complex
Fourier coefficients normalized so that physical(x) = sum_k coeff(k) e^{i k.x}.
With that convention Parseval reads  integral |v|^2 dx = L^n * sum_k |v_hat|^2,
so every norm below is the physical-space L^2 integral, not a per-gridpoint
mean.  Wavenumbers on axis j are k_j = (2*pi/L) * m_j with integer
m_j in {-N/2+1, ..., N/2}.

All operations are pure: they return new fields and never mutate inputs
(coefficient arrays are marked read-only).  Evolved fields keep the k = 0
mode pinned to zero; the mean of the data is a Galilean gauge that the
decay theory excludes.
"""

from dataclasses import dataclass, field
from functools import lru_cache
import struct

import numpy as np

__all__ = [
    "Grid",
    "SpectralField",
    "SobolevSeminorm",
    "make_grid",
    "field_from_coeffs",
    "field_from_physical",
    "to_physical",
    "zero_field",
    "leray_project",
    "divergence",
    "curl",
    "gradient_of_scalar",
    "laplacian",
    "sobolev_seminorm",
    "dealias",
    "inner_product",
    "hermitian_defect",
    "save_field",
    "load_field",
]


@dataclass(frozen=True)
class Grid:
    """Periodic box discretization: `dim` axes, `n` points per axis, period `length`."""

    dim: int
    n: int
    length: float

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if self.n < 8 or self.n % 2 != 0:
            raise ValueError(f"points_per_axis must be even and >= 8, got {self.n}")
        if not (self.length > 0):
            raise ValueError(f"box_length must be positive, got {self.length}")

    @property
    def shape(self):
        return (self.n,) * self.dim

    @property
    def modes(self):
        """Total number of Fourier modes N^dim."""
        return self.n**self.dim

    @property
    def k0(self):
        """Fundamental wavenumber 2*pi/L."""
        return 2.0 * np.pi / self.length

    def index_to_wavenumber(self, index):
        """Map a single integer FFT index on one axis to its wavenumber."""
        m = index if index <= self.n // 2 else index - self.n
        return self.k0 * m

    def integer_modes(self):
        """Integer mode numbers m_j per axis, broadcastable to the grid shape.

        The Nyquist index carries m = +N/2 (fftfreq would give -N/2), matching
        the documented index-to-wavenumber map m in {-N/2+1, ..., N/2}.
        """
        m1 = np.fft.fftfreq(self.n, d=1.0 / self.n)
        m1[self.n // 2] = self.n // 2
        out = []
        for j in range(self.dim):
            shape = [1] * self.dim
            shape[j] = self.n
            out.append(m1.reshape(shape))
        return out

    def wavenumbers(self):
        """Wavenumber arrays k_j per axis, broadcastable to the grid shape."""
        return [self.k0 * m for m in self.integer_modes()]

    def ksq(self):
        k = self.wavenumbers()
        out = np.zeros(self.shape)
        for kj in k:
            out = out + kj**2
        return out

    def dealias_mask(self):
        """2/3-rule mask: True where every |m_j| <= N/3."""
        cutoff = self.n // 3
        mask = np.ones(self.shape, dtype=bool)
        for m in self.integer_modes():
            mask = mask & (np.abs(m) <= cutoff)
        return mask

    def cell_volume(self):
        return (self.length / self.n) ** self.dim

    def volume(self):
        return self.length**self.dim


def make_grid(dim, n, length):
    return Grid(dim=dim, n=n, length=float(length))


@lru_cache(maxsize=32)
def _grid_cache(grid):
    """Precomputed wavenumber arrays shared across operator calls."""
    k = grid.wavenumbers()
    ksq = grid.ksq()
    inv_ksq = np.where(ksq > 0, 1.0 / np.where(ksq > 0, ksq, 1.0), 0.0)
    return k, ksq, inv_ksq, grid.dealias_mask()


@dataclass(frozen=True)
class SpectralField:
    """A scalar or vector field as Fourier coefficients, shape (components, N, ..., N)."""

    grid: Grid
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        expected = (self.grid.n,) * self.grid.dim
        if self.coeffs.ndim != self.grid.dim + 1 or self.coeffs.shape[1:] != expected:
            raise ValueError(
                f"coefficient array shape {self.coeffs.shape} does not match "
                f"grid {expected} with a leading component axis"
            )
        if self.coeffs.shape[0] not in (1, 2, 3):
            raise ValueError(f"components must be 1, 2 or 3, got {self.coeffs.shape[0]}")
        self.coeffs.flags.writeable = False

    @property
    def components(self):
        return self.coeffs.shape[0]

    @property
    def is_scalar(self):
        return self.components == 1

    @property
    def is_vector(self):
        return self.components == self.grid.dim

    def l2_norm(self):
        return sobolev_seminorm(self, 0).value


@dataclass(frozen=True)
class SobolevSeminorm:
    """Value of the homogeneous order-m seminorm ||D^m v||_{L^2}."""

    order_m: int
    value: float

    def __float__(self):
        return self.value


def field_from_coeffs(grid, coeffs):
    c = np.array(coeffs, dtype=np.complex128, copy=True)
    if c.ndim == grid.dim:
        c = c[np.newaxis]
    return SpectralField(grid=grid, coeffs=c)


def field_from_physical(grid, values):
    """Transform real physical-space samples (components leading axis) to a field."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim == grid.dim:
        v = v[np.newaxis]
    coeffs = np.fft.fftn(v, axes=tuple(range(1, grid.dim + 1))) / grid.modes
    return SpectralField(grid=grid, coeffs=coeffs)


def to_physical(f):
    """Inverse transform to real physical samples, shape (components, N, ..., N)."""
    axes = tuple(range(1, f.grid.dim + 1))
    phys = np.fft.ifftn(f.coeffs * f.grid.modes, axes=axes)
    return np.real(phys)


def zero_field(grid, components):
    return SpectralField(
        grid=grid, coeffs=np.zeros((components,) + grid.shape, dtype=np.complex128)
    )


def batch_to_physical(grid, coeffs):
    """Hermitian-aware inverse transform of a stack (K, N, ..., N) -> real.

    Only reads the half spectrum along the last axis, so the input must be
    Hermitian-symmetric (a real field); used on the hot pseudo-spectral path.
    """
    axes = tuple(range(1, grid.dim + 1))
    half = coeffs[..., : grid.n // 2 + 1]
    return np.fft.irfftn(half, s=grid.shape, axes=axes, norm="forward")


def batch_from_physical(grid, values):
    """Forward transform of a real stack, expanded to full-spectrum coefficients.

    The redundant half is filled by conjugate symmetry, so outputs are exactly
    Hermitian.
    """
    n = grid.n
    nh = n // 2 + 1
    axes = tuple(range(1, grid.dim + 1))
    half = np.fft.rfftn(values, axes=axes, norm="forward")
    out = np.empty(values.shape, dtype=np.complex128)
    out[..., :nh] = half
    rev = (-np.arange(n)) % n
    block = half[..., n - np.arange(nh, n)]
    for axis in range(1, grid.dim):
        block = np.take(block, rev, axis=axis)
    out[..., nh:] = np.conj(block)
    return out


def hermitian_defect(f):
    """Max |coeff(-k) - conj(coeff(k))| relative to the largest coefficient."""
    c = f.coeffs
    rev = (-np.arange(f.grid.n)) % f.grid.n
    mirrored = c
    for axis in range(1, f.grid.dim + 1):
        mirrored = np.take(mirrored, rev, axis=axis)
    scale = np.max(np.abs(c))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(mirrored - np.conj(c))) / scale)


def leray_project(f):
    """Project a vector field onto its divergence-free part, mode by mode.

    Per mode: u_hat -> u_hat - k (k . u_hat) / |k|^2, identity at k = 0.
    Idempotent and L^2 self-adjoint.
    """
    if not f.is_vector:
        raise ValueError(
            f"leray_project needs a {f.grid.dim}-component field, got {f.components}"
        )
    k, _, inv_ksq, _ = _grid_cache(f.grid)
    kdotu = np.zeros(f.grid.shape, dtype=np.complex128)
    for j in range(f.grid.dim):
        kdotu = kdotu + k[j] * f.coeffs[j]
    kdotu = kdotu * inv_ksq
    out = np.empty_like(f.coeffs)
    for j in range(f.grid.dim):
        out[j] = f.coeffs[j] - k[j] * kdotu
    return SpectralField(grid=f.grid, coeffs=out)


def divergence(f):
    """Fourier-exact divergence of a vector field: coeff = i k . u_hat."""
    if not f.is_vector:
        raise ValueError(
            f"divergence needs a {f.grid.dim}-component field, got {f.components}"
        )
    k, _, _, _ = _grid_cache(f.grid)
    acc = k[0] * f.coeffs[0]
    for j in range(1, f.grid.dim):
        acc = acc + k[j] * f.coeffs[j]
    return SpectralField(grid=f.grid, coeffs=(1j * acc)[np.newaxis])


def gradient_of_scalar(f):
    """Spectral gradient of a scalar field, returning a dim-component field."""
    if not f.is_scalar:
        raise ValueError("gradient_of_scalar needs a scalar field")
    k, _, _, _ = _grid_cache(f.grid)
    out = np.empty((f.grid.dim,) + f.grid.shape, dtype=np.complex128)
    for j in range(f.grid.dim):
        out[j] = 1j * k[j] * f.coeffs[0]
    return SpectralField(grid=f.grid, coeffs=out)


def curl(f):
    """Curl with the dimension-dependent conventions.

    2D scalar w   -> vector (D2 w, -D1 w)
    2D vector u   -> scalar D1 u2 - D2 u1
    3D vector u   -> standard 3-component curl
    """
    k, _, _, _ = _grid_cache(f.grid)
    g = f.grid
    if g.dim == 2:
        if f.is_scalar:
            out = np.empty((2,) + g.shape, dtype=np.complex128)
            out[0] = 1j * k[1] * f.coeffs[0]
            out[1] = -1j * k[0] * f.coeffs[0]
            return SpectralField(grid=g, coeffs=out)
        w = 1j * k[0] * f.coeffs[1] - 1j * k[1] * f.coeffs[0]
        return SpectralField(grid=g, coeffs=w[np.newaxis])
    if f.is_scalar:
        raise ValueError("curl of a scalar field is undefined in 3D")
    c = f.coeffs
    out = np.empty((3,) + g.shape, dtype=np.complex128)
    out[0] = 1j * (k[1] * c[2] - k[2] * c[1])
    out[1] = 1j * (k[2] * c[0] - k[0] * c[2])
    out[2] = 1j * (k[0] * c[1] - k[1] * c[0])
    return SpectralField(grid=g, coeffs=out)


def laplacian(f):
    _, ksq, _, _ = _grid_cache(f.grid)
    return SpectralField(grid=f.grid, coeffs=-ksq * f.coeffs)


def sobolev_seminorm(f, m):
    """Homogeneous Sobolev seminorm of order m via Parseval.

    value^2 = L^n * sum over components and modes of |k|^(2m) |coeff|^2,
    which for m = 0 is the plain L^2 norm and for m >= 1 sums every
    length-m derivative index tuple.
    """
    if m < 0:
        raise ValueError("seminorm order must be nonnegative")
    if m > f.grid.n / 3:
        raise ValueError(
            f"seminorm order {m} exceeds N/3 = {f.grid.n / 3:.1f}; the dealiased "
            "band carries no information at that order"
        )
    _, ksq, _, _ = _grid_cache(f.grid)
    weight = ksq**m if m > 0 else 1.0
    total = np.sum(weight * np.abs(f.coeffs) ** 2)
    return SobolevSeminorm(order_m=m, value=float(np.sqrt(f.grid.volume() * total)))


def dealias(f):
    """2/3-rule truncation: zero every coefficient with any |m_j| > N/3."""
    _, _, _, mask = _grid_cache(f.grid)
    return SpectralField(grid=f.grid, coeffs=f.coeffs * mask)


def inner_product(f, g):
    """Physical L^2 inner product of two real fields via Parseval."""
    if f.grid != g.grid or f.components != g.components:
        raise ValueError("inner_product needs fields on the same grid with equal components")
    return float(f.grid.volume() * np.real(np.sum(np.conj(f.coeffs) * g.coeffs)))


# Serialization: little-endian binary, documented layout (see README):
#   bytes 0..7   magic b"MPSPEC01"
#   bytes 8..31  header: int64 dim, int64 N, int64 components, float64 L
#   bytes 32..   complex128 coefficients, C order, shape (components, N, ..., N)
_MAGIC = b"MPSPEC01"
_HEADER = struct.Struct("<qqqd")


def save_field(f, path):
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(_HEADER.pack(f.grid.dim, f.grid.n, f.components, f.grid.length))
        fh.write(np.ascontiguousarray(f.coeffs, dtype=np.complex128).tobytes())


def load_field(path):
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValueError(f"not a spectral field file: bad magic {magic!r}")
        dim, n, comps, length = _HEADER.unpack(fh.read(_HEADER.size))
        grid = Grid(dim=int(dim), n=int(n), length=float(length))
        raw = fh.read()
    coeffs = np.frombuffer(raw, dtype=np.complex128).reshape((comps,) + grid.shape)
    return SpectralField(grid=grid, coeffs=coeffs.copy())
