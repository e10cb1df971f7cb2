"""Local and nonlocal free energies, the nonlocal gradient seminorm and the
Poincare-type ratio between them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernel import ScaledKernel
from .potential import Potential
from .torus import Field, as_field, grad_norm_sq, spectral_sum


@dataclass(frozen=True)
class EnergyBreakdown:
    interaction: float
    potential_part: float
    total: float

    @classmethod
    def of(cls, interaction: float, potential_part: float) -> "EnergyBreakdown":
        return cls(float(interaction), float(potential_part), float(interaction + potential_part))


def potential_integral(u: Field, p: Potential) -> float:
    return float(u.grid.cell_volume * np.sum(p.F(u.values)))


def dirichlet_local(u: Field) -> float:
    """``(1/2) int |grad u|^2``."""
    return 0.5 * grad_norm_sq(u)


def dirichlet_nonlocal(u: Field, K: ScaledKernel) -> float:
    """``(1/4) iint K(x-y) (u(x)-u(y))^2``, evaluated as ``(1/2) <B u, u>``."""
    u = as_field(K.grid, u)
    return 0.5 * spectral_sum(u.grid, u.hat, K.symbol)


def energy_local(u: Field, p: Potential) -> EnergyBreakdown:
    return EnergyBreakdown.of(dirichlet_local(u), potential_integral(u, p))


def energy_nonlocal(u: Field, K: ScaledKernel, p: Potential) -> EnergyBreakdown:
    u = as_field(K.grid, u)
    return EnergyBreakdown.of(dirichlet_nonlocal(u, K), potential_integral(u, p))


def _grad_k2(grid) -> np.ndarray:
    return sum(k**2 for k in grid.k_grad)


def nonlocal_gradient_seminorm(u: Field, K: ScaledKernel) -> float:
    """``iint K(x-y) |grad u(x) - grad u(y)|^2 dx dy`` (no 1/2 in front).

    Each spectral partial derivative contributes ``2 <B d_j u, d_j u>``.
    """
    u = as_field(K.grid, u)
    return 2.0 * spectral_sum(u.grid, u.hat, K.symbol * _grad_k2(u.grid))


def poincare_ratio(u: Field, K: ScaledKernel) -> float:
    """``||grad u||^2`` divided by the nonlocal gradient seminorm.

    Its supremum over fields is the best constant in the Poincare-type bound.
    """
    u = as_field(K.grid, u)
    num = spectral_sum(u.grid, u.hat, _grad_k2(u.grid))
    if num <= 1e-300:
        raise ValueError("Poincare ratio undefined for a field with zero gradient")
    den = nonlocal_gradient_seminorm(u, K)
    if den <= 0:
        raise ValueError("nonlocal seminorm vanished for a field with nonzero gradient")
    return num / den


def initial_energy_bound(u0: Field, kernels, p: Potential) -> tuple[float, float]:
    """Return ``(C0, max_eps E_eps(u0))`` with ``C0 = 2 E_CH(u0)``; raises if exceeded."""
    c0 = 2.0 * energy_local(u0, p).total
    worst = max((energy_nonlocal(u0, K, p).total for K in kernels), default=0.0)
    if worst > c0 + 1e-14 * max(abs(c0), 1.0):
        raise AssertionError(f"initial nonlocal energy {worst} exceeds C0={c0}")
    return c0, worst
