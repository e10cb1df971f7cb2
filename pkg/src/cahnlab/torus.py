"""Uniform periodic grids on the flat torus and the norms used throughout.

All transforms are real-to-complex (``scipy.fft.rfftn``) over every axis; the
last axis therefore stores only non-negative frequencies and Parseval sums
carry a multiplicity weight of 2 on its interior columns.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import fft as sfft


MIN_POINTS = 8


@dataclass(frozen=True, eq=False)
class TorusGrid:
    """Immutable description of an ``n**dim`` periodic grid of side ``L``."""

    dim: int
    n: int
    side_length: float = 1.0

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if int(self.n) != self.n or self.n % 2:
            raise ValueError(f"n_per_axis must be even, got {self.n}")
        if self.n < MIN_POINTS:
            raise ValueError(f"n_per_axis must be >= {MIN_POINTS}, got {self.n}")
        if not (self.side_length > 0 and np.isfinite(self.side_length)):
            raise ValueError(f"side_length must be positive, got {self.side_length}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "side_length", float(self.side_length))

    def __eq__(self, other):
        if not isinstance(other, TorusGrid):
            return NotImplemented
        return (self.dim, self.n, self.side_length) == (
            other.dim,
            other.n,
            other.side_length,
        )

    def __hash__(self):
        return hash((self.dim, self.n, self.side_length))

    @property
    def h(self) -> float:
        return self.side_length / self.n

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    @property
    def volume(self) -> float:
        return self.side_length**self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def spectral_shape(self) -> tuple[int, ...]:
        return (self.n,) * (self.dim - 1) + (self.n // 2 + 1,)

    @property
    def size(self) -> int:
        return self.n**self.dim

    @cached_property
    def mode_numbers(self) -> np.ndarray:
        """Integer frequencies ``0..n/2, -n/2+1..-1`` (Nyquist stored as ``+n/2``)."""
        m = np.fft.fftfreq(self.n, d=1.0 / self.n).round().astype(int)
        m[self.n // 2] = self.n // 2
        return m

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Angular wavenumbers ``2*pi*m/L`` for a full (complex) axis."""
        return 2.0 * np.pi * self.mode_numbers / self.side_length

    @cached_property
    def k_axes(self) -> tuple[np.ndarray, ...]:
        """Broadcastable per-axis wavenumbers in the rfftn layout."""
        full = self.wavenumbers
        half = full[: self.n // 2 + 1]
        axes = []
        for a in range(self.dim):
            k = half if a == self.dim - 1 else full
            shape = [1] * self.dim
            shape[a] = k.size
            axes.append(k.reshape(shape))
        return tuple(axes)

    @cached_property
    def k2(self) -> np.ndarray:
        k2 = np.zeros(self.spectral_shape)
        for k in self.k_axes:
            k2 = k2 + k**2
        k2.setflags(write=False)
        return k2

    @cached_property
    def k_grad(self) -> tuple[np.ndarray, ...]:
        """Wavenumbers for first derivatives; the Nyquist entry is zeroed."""
        out = []
        for k in self.k_axes:
            kg = k.copy()
            kg[np.abs(np.abs(kg) - np.pi * self.n / self.side_length) < 1e-9] = 0.0
            kg.setflags(write=False)
            out.append(kg)
        return tuple(out)

    @cached_property
    def parseval_weight(self) -> np.ndarray:
        """Multiplicity of each stored rfftn coefficient in the full spectrum."""
        w = np.full(self.n // 2 + 1, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        return w.reshape((1,) * (self.dim - 1) + (-1,))

    @cached_property
    def offsets(self) -> tuple[np.ndarray, ...]:
        """Signed minimum-image offsets ``m*h`` for each axis, broadcastable."""
        m = np.fft.fftfreq(self.n, d=1.0 / self.n).round()
        out = []
        for a in range(self.dim):
            shape = [1] * self.dim
            shape[a] = self.n
            out.append((m * self.h).reshape(shape))
        return tuple(out)

    def coordinates(self) -> tuple[np.ndarray, ...]:
        x = np.arange(self.n) * self.h
        return tuple(np.meshgrid(*([x] * self.dim), indexing="ij"))

    def forward(self, values: np.ndarray) -> np.ndarray:
        return sfft.rfftn(values)

    def inverse(self, coeffs: np.ndarray) -> np.ndarray:
        return sfft.irfftn(coeffs, s=self.shape)


def make_grid(dim: int = 1, n_per_axis: int = 64, side_length: float = 1.0) -> TorusGrid:
    return TorusGrid(dim, n_per_axis, side_length)


class Field:
    """Real grid function with a lazily computed spectral representation.

    ``values`` is stored read-only so the cached coefficients never go stale;
    build a new ``Field`` to change it.
    """

    __slots__ = ("grid", "_values", "_hat")

    def __init__(self, grid: TorusGrid, values, hat=None):
        v = np.array(values, dtype=float)
        if v.shape != grid.shape:
            try:
                v = np.broadcast_to(v, grid.shape).copy()
            except ValueError:
                raise ValueError(
                    f"values of shape {v.shape} do not fit grid {grid.shape}"
                ) from None
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        self.grid = grid
        self._values = v
        self._hat = hat

    @classmethod
    def from_spectral(cls, grid: TorusGrid, coeffs: np.ndarray) -> "Field":
        return cls(grid, grid.inverse(coeffs))

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def hat(self) -> np.ndarray:
        if self._hat is None:
            self._hat = self.grid.forward(self._values)
            self._hat.setflags(write=False)
        return self._hat

    @property
    def spectral_valid(self) -> bool:
        return self._hat is not None

    def __add__(self, other):
        return Field(self.grid, self._values + _vals(other, self.grid))

    def __sub__(self, other):
        return Field(self.grid, self._values - _vals(other, self.grid))

    def __mul__(self, scalar):
        return Field(self.grid, self._values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.grid, -self._values)

    def __repr__(self):
        return f"Field(dim={self.grid.dim}, n={self.grid.n})"


def _vals(other, grid):
    if isinstance(other, Field):
        check_same_grid(grid, other.grid)
        return other.values
    return other


def check_same_grid(a: TorusGrid, b: TorusGrid):
    if a != b:
        raise ValueError(f"grid mismatch: {a} vs {b}")


def as_field(grid: TorusGrid, f) -> Field:
    if isinstance(f, Field):
        check_same_grid(grid, f.grid)
        return f
    return Field(grid, f)


# --- spectral sums --------------------------------------------------------


def spectral_sum(grid: TorusGrid, coeffs: np.ndarray, weight=None) -> float:
    """``|Omega| * sum_k w(k) |c_k|^2`` with ``c_k`` the normalised coefficients."""
    p = np.abs(coeffs) ** 2 * grid.parseval_weight
    if weight is not None:
        p = p * weight
    return float(p.sum() * grid.volume / grid.size**2)


def mean(f: Field) -> float:
    return float(np.mean(f.values))


def norm_L2(f: Field) -> float:
    return float(np.sqrt(f.grid.cell_volume * np.sum(f.values**2)))


def grad_norm_sq(f: Field) -> float:
    """``||grad f||_{L^2}^2`` from the spectral coefficients."""
    return spectral_sum(f.grid, f.hat, f.grid.k2)


def norm_H1(f: Field) -> float:
    return float(np.sqrt(norm_L2(f) ** 2 + grad_norm_sq(f)))


def norm_H1_dual(f: Field) -> float:
    """Norm in the dual of ``H^1``: weights ``1/(1+|k|^2)`` on the spectrum."""
    return float(np.sqrt(spectral_sum(f.grid, f.hat, 1.0 / (1.0 + f.grid.k2))))


def norm_Hminus1(f: Field) -> float:
    """Homogeneous ``H^{-1}`` norm ``<f, (-Lap)^{-1} f>^{1/2}`` of a mean-zero field."""
    _require_mean_zero(f)
    k2 = f.grid.k2
    w = np.zeros_like(k2)
    np.divide(1.0, k2, out=w, where=k2 > 0)
    return float(np.sqrt(spectral_sum(f.grid, f.hat, w)))


def gradient(f: Field) -> tuple[Field, ...]:
    g = f.grid
    return tuple(Field(g, g.inverse(1j * k * f.hat)) for k in g.k_grad)


def laplacian(f: Field) -> Field:
    return Field(f.grid, f.grid.inverse(-f.grid.k2 * f.hat))


def _require_mean_zero(f: Field, rtol: float = 1e-10):
    m = mean(f)
    if abs(m) * np.sqrt(f.grid.volume) > rtol * max(norm_L2(f), np.finfo(float).tiny):
        raise ValueError(f"operator undefined on nonzero-mean input (mean={m:.3e})")


def inverse_laplacian(f: Field) -> Field:
    """Mean-zero ``g`` with ``-Lap g = f``."""
    _require_mean_zero(f)
    k2 = f.grid.k2
    ghat = np.zeros_like(f.hat)
    np.divide(f.hat, k2, out=ghat, where=k2 > 0)
    return Field(f.grid, f.grid.inverse(ghat))
