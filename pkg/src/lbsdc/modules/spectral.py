from __future__ import annotations

"""
src/lbsdc/modules/spectral.py

Periodic grid bookkeeping and the Fourier transforms used by the solver.

Conventions:
    - Box [0, L_1] x ... x [0, L_d], the same even N on every axis.
    - Storage index n on an axis holds x = n L / N, n = 0..N-1 (the sample at
      x = L is the same point as x = 0 under periodicity).
    - Values are C-ordered numpy arrays of shape (N,)*d, i.e. lexicographic
      with the last axis fastest.
    - Forward transform is unnormalized, the inverse carries 1/N^d:

          phi_hat(k) = sum_x phi(x) exp(-i 2 pi (Bk).x)
          phi(x)     = N^-d sum_k phi_hat(k) exp(i 2 pi (Bk).x)

      with B = diag(1/L_j). Spectra are stored in FFT order, so axis index m
      holds the integer wavenumber fftfreq(N, 1/N)[m]; the Nyquist mode sits at
      k = -N/2.
"""

from dataclasses import dataclass, field as dc_field
from functools import cached_property
from typing import Tuple

import numpy as np
import scipy.fft as sfft

from ..core.errors import GridError, GridMismatch, ImaginaryResidue

FOUR_PI_SQ = 4.0 * np.pi ** 2

# max |Im| allowed relative to max |Re| when dropping the imaginary part
IMAG_TOLERANCE = 1e-10


@dataclass(frozen=True)
class Grid:
    """Periodic rectangular domain descriptor."""

    d: int
    lengths: Tuple[float, ...]
    n: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "lengths", tuple(float(x) for x in self.lengths))
        if self.d not in (2, 3):
            raise GridError(f"dimension must be 2 or 3, got {self.d}")
        if len(self.lengths) != self.d:
            raise GridError(f"expected {self.d} box lengths, got {len(self.lengths)}")
        if any(not np.isfinite(x) or x <= 0.0 for x in self.lengths):
            raise GridError(f"box lengths must be positive, got {self.lengths}")
        if self.n < 4 or self.n % 2:
            raise GridError(f"N must be even and >= 4, got {self.n}")

    @classmethod
    def cube(cls, d: int, edge: float, n: int) -> "Grid":
        return cls(d, (edge,) * d, n)

    # -------------------------------------------------
    # Geometry
    # -------------------------------------------------
    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n ** self.d

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @property
    def reciprocal(self) -> Tuple[float, ...]:
        """Diagonal of B."""
        return tuple(1.0 / L for L in self.lengths)

    def coordinates(self) -> Tuple[np.ndarray, ...]:
        """Broadcastable axis coordinates, x = n L / N."""
        out = []
        for j, L in enumerate(self.lengths):
            x = np.arange(self.n) * (L / self.n)
            shape = [1] * self.d
            shape[j] = self.n
            out.append(x.reshape(shape))
        return tuple(out)

    def wavenumbers(self) -> Tuple[np.ndarray, ...]:
        """Broadcastable integer wavenumbers per axis, FFT order."""
        k = np.rint(sfft.fftfreq(self.n, d=1.0 / self.n)).astype(np.int64)
        out = []
        for j in range(self.d):
            shape = [1] * self.d
            shape[j] = self.n
            out.append(k.reshape(shape))
        return tuple(out)

    def bk_squared(self) -> np.ndarray:
        """|Bk|^2 = sum_j (k_j / L_j)^2 on the full FFT grid."""
        return self._bk_squared

    @cached_property
    def _bk_squared(self) -> np.ndarray:
        total = np.zeros(self.shape)
        for k, L in zip(self.wavenumbers(), self.lengths):
            total = total + (k / L) ** 2
        total.setflags(write=False)
        return total


@dataclass
class ScalarField:
    """Real samples of a field on the grid points."""

    grid: Grid
    values: np.ndarray = dc_field(repr=False)

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.size != self.grid.size:
            raise GridError(f"field has {values.size} values, grid needs {self.grid.size}")
        values = values.reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise GridError("field contains non-finite values")
        self.values = values

    @classmethod
    def zeros(cls, grid: Grid) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape))

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())


@dataclass
class Spectrum:
    """Complex Fourier coefficients in FFT order."""

    grid: Grid
    coeffs: np.ndarray = dc_field(repr=False)

    def __post_init__(self) -> None:
        coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        if coeffs.size != self.grid.size:
            raise GridError(f"spectrum has {coeffs.size} coefficients, grid needs {self.grid.size}")
        self.coeffs = coeffs.reshape(self.grid.shape)

    def coeff(self, k: Tuple[int, ...]) -> complex:
        """Coefficient at integer wavevector k, |k_j| <= N/2."""
        idx = tuple(int(kj) % self.grid.n for kj in k)
        return complex(self.coeffs[idx])

    def mirror(self) -> np.ndarray:
        """coeff(-k) laid out at the position of k."""
        out = self.coeffs
        for axis in range(self.grid.d):
            out = np.roll(np.flip(out, axis=axis), 1, axis=axis)
        return out


# =========================================================
#   Transforms
# =========================================================

def forward_dft(field: ScalarField, workers: int | None = None) -> Spectrum:
    return Spectrum(field.grid, sfft.fftn(field.values, workers=workers))


def inverse_dft(spec: Spectrum, workers: int | None = None) -> ScalarField:
    """
    Inverse transform; the imaginary part is dropped only after checking it is
    roundoff (max|Im| <= 1e-10 max|Re|).
    """
    raw = sfft.ifftn(spec.coeffs, workers=workers)
    re_max = float(np.max(np.abs(raw.real))) if raw.size else 0.0
    im_max = float(np.max(np.abs(raw.imag))) if raw.size else 0.0
    if im_max > IMAG_TOLERANCE * re_max and im_max > np.finfo(float).tiny:
        raise ImaginaryResidue(
            f"inverse transform left max|Im| = {im_max:.3e} against max|Re| = {re_max:.3e}"
        )
    return ScalarField(spec.grid, raw.real.copy())


def biharmonic_plus_symbol(grid: Grid, S: float, alpha: float) -> np.ndarray:
    """sigma(k) = (1 - 4 pi^2 |Bk|^2)^2 + (S - alpha), full FFT layout."""
    return (1.0 - FOUR_PI_SQ * grid.bk_squared()) ** 2 + (S - alpha)


def resample(field: ScalarField, n_new: int) -> ScalarField:
    """
    Spectral prolongation / restriction to n_new points per axis.

    Prolongation splits the Nyquist coefficient evenly between +-N/2;
    restriction folds +-n_new/2 onto the new Nyquist slot. Band-limited fields
    (|k_j| < min(N, n_new)/2) are reproduced exactly.
    """
    grid = field.grid
    new_grid = Grid(grid.d, grid.lengths, n_new)
    coeffs = sfft.fftn(field.values)
    for axis in range(grid.d):
        coeffs = _resize_axis(coeffs, axis, n_new)
    coeffs *= (n_new / grid.n) ** grid.d
    return inverse_dft(Spectrum(new_grid, coeffs))


def _resize_axis(a: np.ndarray, axis: int, n_new: int) -> np.ndarray:
    a = np.moveaxis(a, axis, 0)
    n = a.shape[0]
    out = np.zeros((n_new,) + a.shape[1:], dtype=a.dtype)
    if n_new == n:
        out[...] = a
    elif n_new > n:
        h = n // 2
        out[:h] = a[:h]
        out[n_new - h + 1:] = a[h + 1:]
        out[h] = 0.5 * a[h]
        out[n_new - h] = 0.5 * a[h]
    else:
        h = n_new // 2
        out[:h] = a[:h]
        out[h + 1:] = a[n - h + 1:]
        out[h] = a[h] + a[n - h]
    return np.moveaxis(out, 0, axis)


# =========================================================
#   Reductions
# =========================================================

def _same_grid(u: ScalarField, v: ScalarField) -> None:
    if u.grid != v.grid:
        raise GridMismatch(f"fields live on different grids: {u.grid} vs {v.grid}")


def grid_mean(field: ScalarField) -> float:
    return float(np.sum(field.values)) / field.grid.size


def grid_inner_product(u: ScalarField, v: ScalarField) -> float:
    """(|Omega| / N^d) sum_x u v; numpy's pairwise sum keeps the order fixed."""
    _same_grid(u, v)
    return weighted_sum(u.grid, u.values * v.values)


def weighted_sum(grid: Grid, values: np.ndarray) -> float:
    """Quadrature (|Omega| / N^d) sum_x values over a contiguous array."""
    return grid.volume / grid.size * float(np.sum(np.ascontiguousarray(values)))


def grid_l2_norm(field: ScalarField) -> float:
    return float(np.sqrt(weighted_sum(field.grid, field.values ** 2)))


def grid_max_norm(field: ScalarField) -> float:
    return float(np.max(np.abs(field.values)))
