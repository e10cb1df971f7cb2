"""Radial bump mollifier, the scaled singular kernel and the nonlocal operator.

The kernel is ``K_eps(z) = eps**-d * rho(|z|/eps) / |z|**2``.  Its action on
grid functions is the operator ``B_eps f = (K*1) f - K*f`` whose Fourier
symbol ``b(k) = h^d sum_z K(z) (1 - cos(k.z))`` is nonnegative and vanishes at
``k = 0``.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .torus import Field, TorusGrid, as_field, check_same_grid

log = logging.getLogger(__name__)

QUAD_RTOL = 1e-10
SAMPLINGS = ("trapezoid", "cell_average")


def sphere_area(dim: int) -> float:
    """Surface measure of the unit sphere in R^dim (2 points for dim=1)."""
    return 2.0 * math.pi ** (dim / 2) / math.gamma(dim / 2)


def bump(r, r0: float):
    """``exp(-1/(r0^2 - r^2))`` on ``[0, r0)``, zero beyond."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = r < r0
    out[inside] = np.exp(-1.0 / (r0 * r0 - r[inside] ** 2))
    return out


def radial_integral(func, r0: float, dim: int) -> float:
    """``int_{R^d} func(|z|) dz`` for ``func`` supported on ``[0, r0]``."""
    val, err = integrate.quad(
        lambda r: func(r) * r ** (dim - 1), 0.0, r0, epsabs=0.0, epsrel=1e-13, limit=200
    )
    if not np.isfinite(val) or val <= 0 or err > QUAD_RTOL * abs(val):
        raise ArithmeticError(
            f"radial quadrature did not reach rtol {QUAD_RTOL:g} (err={err:.2e})"
        )
    return sphere_area(dim) * val


@dataclass(frozen=True)
class Mollifier:
    """``rho(r) = c * exp(-1/(r0^2 - r^2))`` for ``r < r0``."""

    r0: float
    c: float
    dim: int
    sigma: float

    def __call__(self, r):
        return self.c * bump(r, self.r0)

    @property
    def peak(self) -> float:
        return self.c * math.exp(-1.0 / self.r0**2)

    def integral(self) -> float:
        return radial_integral(lambda r: float(self(r)), self.r0, self.dim)


def normalize_mollifier(r0: float = 1.0, dim: int = 1, sigma_target: float | None = None) -> Mollifier:
    """Pick ``c`` so that ``int_{R^d} rho(|z|) dz == sigma_target`` (default ``2*dim``)."""
    if not r0 > 0:
        raise ValueError(f"r0 must be positive, got {r0}")
    if dim not in (1, 2, 3):
        raise ValueError(f"dim must be 1, 2 or 3, got {dim}")
    if sigma_target is None:
        sigma_target = 2.0 * dim
    if not sigma_target > 0:
        raise ValueError(f"sigma_target must be positive, got {sigma_target}")
    denom = radial_integral(lambda r: float(bump(r, r0)), r0, dim)
    return Mollifier(float(r0), sigma_target / denom, dim, float(sigma_target))


def local_limit_coefficient(m: Mollifier, dim: int | None = None) -> float:
    """Constant ``c`` with ``B_eps -> -c * Laplacian`` as ``eps -> 0``."""
    dim = m.dim if dim is None else dim
    return m.sigma / (2.0 * dim)


@dataclass(frozen=True, eq=False)
class ScaledKernel:
    mollifier: Mollifier
    eps: float
    grid: TorusGrid
    samples: np.ndarray
    symbol: np.ndarray
    sample_hat: np.ndarray
    sampling: str = "trapezoid"

    @property
    def mass(self) -> float:
        """``K*1``, constant on the torus."""
        return float(self.grid.cell_volume * self.samples.sum())

    @property
    def second_moment(self) -> float:
        r2 = sum(z**2 for z in self.grid.offsets)
        return float(self.grid.cell_volume * np.sum(self.samples * r2))

    @property
    def continuum_fidelity(self) -> bool:
        # in d=2 the continuum kernel is not integrable; the discrete one is
        return self.grid.dim != 2

    @property
    def support_cells(self) -> float:
        """Kernel support diameter measured in grid cells."""
        return 2.0 * self.eps * self.mollifier.r0 / self.grid.h


def _trapezoid_samples(m: Mollifier, eps: float, grid: TorusGrid, r: np.ndarray) -> np.ndarray:
    d = grid.dim
    s = np.zeros(grid.shape)
    nz = r > 0
    s[nz] = eps**-d * m(r[nz] / eps) / r[nz] ** 2
    # the origin node of the trapezoid rule carries rho_eps(0) * (-Lap f)/(2d);
    # realised as a second difference on the axis neighbours
    fold = eps**-d * m.peak / (2.0 * d * grid.h**2)
    for a in range(d):
        for sign in (1, -1):
            idx = [0] * d
            idx[a] = sign % grid.n
            s[tuple(idx)] += fold
    # match the discrete second moment to sigma so B -> -c_eff Lap exactly at low k
    r2 = r**2
    moment = grid.cell_volume * np.sum(s * r2)
    return s * (m.sigma / moment)


def _cell_average_samples(m: Mollifier, eps: float, grid: TorusGrid, pts: int = 4) -> np.ndarray:
    d = grid.dim
    sub = ((np.arange(pts) + 0.5) / pts - 0.5) * grid.h
    acc = np.zeros(grid.shape)
    for shift in np.array(np.meshgrid(*([sub] * d), indexing="ij")).reshape(d, -1).T:
        rr = np.sqrt(sum((z + dz) ** 2 for z, dz in zip(grid.offsets, shift)))
        val = np.zeros(grid.shape)
        nz = rr > 0
        val[nz] = eps**-d * m(rr[nz] / eps) / rr[nz] ** 2
        acc += val
    return acc / pts**d


def kernel_symbol(grid: TorusGrid, samples: np.ndarray, chunk: int = 256) -> np.ndarray:
    """``h^d sum_z s(z) * 2 sin^2(k.z/2)`` on the rfftn wavenumber layout.

    Every term is nonnegative, so the result is too, exactly, and ``b(0) = 0``.
    """
    idx = np.nonzero(samples)
    vals = samples[idx]
    zs = [grid.offsets[a].ravel()[idx[a]] for a in range(grid.dim)]
    # s(z) = s(-z): keep the member of each pair whose first nonzero
    # coordinate is positive, and double it
    keep = np.zeros(vals.size, dtype=bool)
    settled = np.zeros(vals.size, dtype=bool)
    for z in zs:
        keep |= ~settled & (z > 0)
        settled |= z != 0
    vals = 2.0 * vals[keep]
    zs = [z[keep] for z in zs]
    out = np.zeros(grid.spectral_shape)
    for start in range(0, vals.size, chunk):
        sl = slice(start, start + chunk)
        phase = np.zeros(grid.spectral_shape + (min(chunk, vals.size - start),))
        for k, z in zip(grid.k_axes, zs):
            phase = phase + k[..., None] * z[sl]
        out += (2.0 * np.sin(0.5 * phase) ** 2) @ vals[sl]
    out *= grid.cell_volume
    out.setflags(write=False)
    return out


def build_kernel(m: Mollifier, eps: float, grid: TorusGrid, sampling: str = "trapezoid") -> ScaledKernel:
    """Sample ``K_eps`` on the grid offsets and precompute its symbol.

    ``sampling="trapezoid"`` (default) uses point values at nonzero offsets,
    with the origin node folded into the axis neighbours and the second
    moment renormalised to ``sigma``.  ``"cell_average"`` averages the kernel
    over 4^d sub-points per cell, skipping the singular centre.
    """
    if m.dim != grid.dim:
        raise ValueError(f"mollifier is {m.dim}-d but grid is {grid.dim}-d")
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if not eps * m.r0 < grid.side_length / 2:
        raise ValueError(
            f"kernel support eps*r0={eps * m.r0:g} must be < L/2={grid.side_length / 2:g}"
        )
    r = np.sqrt(sum(z**2 for z in grid.offsets))
    if sampling == "trapezoid":
        s = _trapezoid_samples(m, eps, grid, r)
    elif sampling == "cell_average":
        s = _cell_average_samples(m, eps, grid)
    else:
        raise ValueError(f"sampling must be one of {SAMPLINGS}, got {sampling!r}")
    assert np.all(s >= 0), "negative kernel sample"
    assert not np.any(s[r > eps * m.r0 + grid.h * math.sqrt(grid.dim)]), "support violation"
    s.setflags(write=False)
    sym = kernel_symbol(grid, s)
    shat = grid.cell_volume * grid.forward(s).real
    shat.setflags(write=False)
    if grid.dim == 2:
        log.info("d=2 kernel: discrete-only, no continuum fidelity claim")
    if 2.0 * eps * m.r0 < grid.h:
        log.warning("eps=%g is below grid resolution h=%g", eps, grid.h)
    return ScaledKernel(m, float(eps), grid, s, sym, shat, sampling)


def kernel_convolve(K: ScaledKernel, f) -> Field:
    """Circular convolution ``(K*f)(x) = h^d sum_y K(x-y) f(y)``."""
    f = as_field(K.grid, f)
    return Field(K.grid, K.grid.inverse(K.sample_hat * f.hat))


def nonlocal_B(K: ScaledKernel, f) -> Field:
    """``B_eps f = (K*1) f - K*f`` applied through its symbol."""
    f = as_field(K.grid, f)
    return Field(K.grid, K.grid.inverse(K.symbol * f.hat))


def dump_kernel(K: ScaledKernel, stream) -> None:
    """Write ``r,value`` rows for every nonzero sample, sorted by radius."""
    r = np.sqrt(sum(z**2 for z in K.grid.offsets))
    nz = K.samples > 0
    order = np.lexsort((K.samples[nz], r[nz]))
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["r", "value"])
    for rr, v in zip(r[nz][order], K.samples[nz][order]):
        w.writerow([repr(float(rr)), repr(float(v))])

