"""
Fourier pseudo-spectral backend for periodic boxes in 1, 2 and 3 dimensions.

Fields are plain real ``numpy`` arrays of shape ``grid.modes`` (scalar) or
``(grid.dim, *grid.modes)`` (vector).  Spectral coefficients use the real
FFT layout of :func:`scipy.fft.rfftn` over the trailing ``dim`` axes; the
normalization is an internal detail and every public contract below is
stated in real space.

Constant-coefficient operators are diagonal in Fourier space and are
represented by :class:`DiagonalOperator`, a real symbol per spectral mode.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft

__all__ = [
    "PeriodicGrid",
    "DiagonalOperator",
    "SingularOperatorError",
    "build_grid",
    "transform",
    "apply_diagonal",
    "solve_shifted",
    "inner_product",
    "l2_norm",
    "dealias",
    "identity",
    "laplacian",
    "leray_project",
    "gradient",
    "divergence",
]


def _workers():
    value = os.environ.get("SAVFLOW_THREADS")
    if not value:
        return None
    return max(1, int(value))


class SingularOperatorError(ZeroDivisionError):
    """Raised when a shifted operator has a zero symbol at some mode."""

    def __init__(self, mode):
        self.mode = tuple(int(m) for m in mode)
        super().__init__(f"shifted operator is singular at mode {self.mode}")


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform periodic box ``[0, L_1) x ... x [0, L_d)`` with ``N_a`` samples per axis.

    Use :func:`build_grid` to construct a validated grid.
    """

    extents: tuple
    modes: tuple

    @property
    def dim(self) -> int:
        return len(self.modes)

    @property
    def size(self) -> int:
        return int(np.prod(self.modes))

    @cached_property
    def spacing(self) -> tuple:
        return tuple(L / N for L, N in zip(self.extents, self.modes))

    @cached_property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @cached_property
    def volume(self) -> float:
        return float(np.prod(self.extents))

    @cached_property
    def mode_indices(self) -> tuple:
        """Integer mode numbers per axis in FFT order, Nyquist counted positive."""
        out = []
        for N in self.modes:
            m = np.fft.fftfreq(N, 1.0 / N).astype(int)
            m[N // 2] = N // 2
            out.append(m)
        return tuple(out)

    @cached_property
    def wavenumbers(self) -> tuple:
        """Per-axis tables ``k = 2*pi*m / L`` in full FFT order."""
        return tuple(2 * np.pi * m / L for m, L in zip(self.mode_indices, self.extents))

    @cached_property
    def spectral_shape(self) -> tuple:
        return self.modes[:-1] + (self.modes[-1] // 2 + 1,)

    @cached_property
    def _spectral_mode_axes(self) -> tuple:
        axes = list(self.mode_indices[:-1])
        axes.append(np.arange(self.modes[-1] // 2 + 1))
        return tuple(axes)

    @cached_property
    def k(self) -> tuple:
        """Broadcastable wavenumber arrays on the real-FFT spectral layout."""
        out = []
        for a, (m, L) in enumerate(zip(self._spectral_mode_axes, self.extents)):
            shape = [1] * self.dim
            shape[a] = m.size
            out.append((2 * np.pi * m / L).reshape(shape))
        return tuple(out)

    @cached_property
    def k_deriv(self) -> tuple:
        """Wavenumbers for odd derivatives: Nyquist entries zeroed."""
        out = []
        for a, (kk, N) in enumerate(zip(self.k, self.modes)):
            kk = kk.copy()
            idx = [0] * self.dim
            idx[a] = N // 2
            kk[tuple(idx)] = 0.0
            out.append(kk)
        return tuple(out)

    @cached_property
    def k2(self) -> np.ndarray:
        total = np.zeros(self.spectral_shape)
        for kk in self.k:
            total = total + kk**2
        return total

    @cached_property
    def _parseval_weights(self) -> np.ndarray:
        # rfft stores only half of the last axis; interior columns count twice
        w = np.full(self.modes[-1] // 2 + 1, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        shape = [1] * self.dim
        shape[-1] = w.size
        return w.reshape(shape)

    def coords(self) -> tuple:
        """Physical coordinate arrays (``indexing='ij'``) of the sample points."""
        axes = [np.arange(N) * h for N, h in zip(self.modes, self.spacing)]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def _axes(self, arr):
        return tuple(range(arr.ndim - self.dim, arr.ndim))

    def check_field(self, values, components=None):
        values = np.asarray(values)
        if values.shape[values.ndim - self.dim:] != tuple(self.modes):
            raise ValueError(f"field of shape {values.shape} does not live on grid {self.modes}")
        if components is not None and values.shape[: values.ndim - self.dim] != components:
            raise ValueError(f"expected leading shape {components}, got {values.shape}")
        return values

    def fft(self, values: np.ndarray) -> np.ndarray:
        return scipy.fft.rfftn(values, axes=self._axes(values), workers=_workers())

    def ifft(self, coeffs: np.ndarray) -> np.ndarray:
        axes = tuple(range(coeffs.ndim - self.dim, coeffs.ndim))
        return scipy.fft.irfftn(coeffs, s=self.modes, axes=axes, workers=_workers())

    def spectral_inner(self, fh: np.ndarray, gh: np.ndarray) -> float:
        """``(f, g)`` evaluated from real-FFT coefficients via Parseval."""
        s = np.sum(self._parseval_weights * (fh.real * gh.real + fh.imag * gh.imag))
        return float(s * self.cell_volume / self.size)


def build_grid(dim, extents, modes) -> PeriodicGrid:
    """Validate and build a :class:`PeriodicGrid`.

    Examples
    --------
    >>> g = build_grid(1, [2.0], [4])
    >>> g.wavenumbers[0] / np.pi
    array([ 0.,  1.,  2., -1.])
    """
    if dim not in (1, 2, 3):
        raise ValueError(f"dim must be 1, 2 or 3, got {dim}")
    extents = tuple(float(L) for L in np.atleast_1d(extents))
    modes = tuple(int(N) for N in np.atleast_1d(modes))
    if len(extents) != dim or len(modes) != dim:
        raise ValueError(f"need {dim} extents and {dim} mode counts")
    for L in extents:
        if not np.isfinite(L) or L <= 0:
            raise ValueError(f"extents must be positive, got {L}")
    for N in modes:
        if N < 4 or N % 2:
            raise ValueError(f"mode counts must be even and >= 4, got {N}")
    return PeriodicGrid(extents, modes)


@dataclass(frozen=True, eq=False)
class DiagonalOperator:
    """Self-adjoint constant-coefficient operator given by a real Fourier symbol."""

    grid: PeriodicGrid
    symbol: np.ndarray

    def __post_init__(self):
        symbol = np.broadcast_to(np.asarray(self.symbol, dtype=float), self.grid.spectral_shape)
        symbol = np.array(symbol)
        symbol.setflags(write=False)
        object.__setattr__(self, "symbol", symbol)

    def __call__(self, field):
        return apply_diagonal(self, field)

    def __mul__(self, other):
        if isinstance(other, DiagonalOperator):
            _same_grid(self.grid, other.grid)
            return DiagonalOperator(self.grid, self.symbol * other.symbol)
        return DiagonalOperator(self.grid, self.symbol * float(other))

    __rmul__ = __mul__

    def __add__(self, other):
        _same_grid(self.grid, other.grid)
        return DiagonalOperator(self.grid, self.symbol + other.symbol)


def _same_grid(a, b):
    if a != b:
        raise ValueError(f"grid mismatch: {a} vs {b}")


def identity(grid) -> DiagonalOperator:
    return DiagonalOperator(grid, np.ones(grid.spectral_shape))


def laplacian(grid) -> DiagonalOperator:
    return DiagonalOperator(grid, -grid.k2)


def transform(grid: PeriodicGrid, values: np.ndarray, direction="forward") -> np.ndarray:
    """Forward (real -> spectral) or inverse (spectral -> real) transform."""
    if direction == "forward":
        return grid.fft(grid.check_field(values))
    if direction == "inverse":
        return grid.ifft(values)
    raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")


def apply_diagonal(op: DiagonalOperator, field: np.ndarray) -> np.ndarray:
    """Apply ``op`` to a scalar field, or componentwise to a vector field."""
    grid = op.grid
    field = grid.check_field(field)
    return grid.ifft(op.symbol * grid.fft(field))


def shifted_symbol(a, b, A: DiagonalOperator, B: DiagonalOperator | None = None) -> np.ndarray:
    """Symbol of ``a*I + b*A∘B`` after checking it never vanishes."""
    sym = A.symbol if B is None else A.symbol * B.symbol
    if B is not None:
        _same_grid(A.grid, B.grid)
    total = a + b * sym
    bad = np.argwhere(total == 0.0)
    if bad.size:
        idx = bad[0]
        grid = A.grid
        mode = [grid._spectral_mode_axes[ax][i] for ax, i in enumerate(idx)]
        raise SingularOperatorError(mode)
    return total


def solve_shifted(a, b, A: DiagonalOperator, B: DiagonalOperator | None, rhs: np.ndarray) -> np.ndarray:
    """Solve ``(a*I + b*A∘B) phi = rhs`` mode by mode.

    Raises
    ------
    SingularOperatorError
        If ``a + b * symbol_A * symbol_B`` vanishes at some mode; the offending
        integer mode index is attached as ``.mode``.
    """
    sym = shifted_symbol(a, b, A, B)
    grid = A.grid
    rhs = grid.check_field(rhs)
    return grid.ifft(grid.fft(rhs) / sym)


def inner_product(grid: PeriodicGrid, f, g) -> float:
    """Rectangle-rule L2 pairing ``h_1...h_d * sum(f*g)``; sums over components."""
    f = np.asarray(f)
    g = np.asarray(g)
    if f.shape[f.ndim - grid.dim:] != grid.modes and f.ndim:
        raise ValueError("field does not live on this grid")
    if g.shape[g.ndim - grid.dim:] != grid.modes and g.ndim:
        raise ValueError("field does not live on this grid")
    f, g = np.broadcast_arrays(f, g)
    return float(grid.cell_volume * np.sum(f * g))


def l2_norm(grid: PeriodicGrid, f) -> float:
    return float(np.sqrt(inner_product(grid, f, f)))


def dealias_mask(grid: PeriodicGrid) -> np.ndarray:
    mask = np.ones(grid.spectral_shape, dtype=bool)
    for a, (m, N) in enumerate(zip(grid._spectral_mode_axes, grid.modes)):
        shape = [1] * grid.dim
        shape[a] = m.size
        mask &= (np.abs(m) <= N // 3).reshape(shape)
    return mask


def dealias(grid: PeriodicGrid, field, rule="none"):
    """Zero every mode with ``|m| > N/3`` on some axis (``rule='two_thirds'``)."""
    if rule == "none":
        return field
    if rule != "two_thirds":
        raise ValueError(f"unknown dealiasing rule {rule!r}")
    field = grid.check_field(field)
    return grid.ifft(grid.fft(field) * dealias_mask(grid))


# -- vector calculus on the spectral layout (NS) ---------------------------

def gradient(grid: PeriodicGrid, fh: np.ndarray) -> np.ndarray:
    """Spectral gradient of spectral coefficients ``fh`` -> shape ``(dim, ...)``."""
    return np.stack([1j * kk * fh for kk in grid.k_deriv])


def divergence(grid: PeriodicGrid, vh: np.ndarray) -> np.ndarray:
    return sum(1j * kk * vh[a] for a, kk in enumerate(grid.k_deriv))


def leray_project(grid: PeriodicGrid, vh: np.ndarray) -> np.ndarray:
    """``P = I - grad inv(Lap) div`` on spectral vector coefficients.

    Uses the same (Nyquist-zeroed) wavenumbers as :func:`divergence`, so
    ``divergence(leray_project(v))`` vanishes mode by mode.  Modes where
    all derivative wavenumbers vanish are left untouched.
    """
    kd = grid.k_deriv
    kk = sum(np.broadcast_to(k * k, grid.spectral_shape) for k in kd)
    safe = np.where(kk == 0.0, 1.0, kk)
    kdotv = sum(k * vh[a] for a, k in enumerate(kd))
    return np.stack([vh[a] - k * kdotv / safe for a, k in enumerate(kd)])
