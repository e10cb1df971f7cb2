"""Brute-force O(N^2) reference computations and the self-test that compares
them with the spectral fast paths."""

from __future__ import annotations

import numpy as np

from . import energy as en
from .kernel import build_kernel, kernel_convolve, nonlocal_B, normalize_mollifier
from .torus import Field, TorusGrid, inverse_laplacian, laplacian, norm_H1_dual, norm_L2

SELFTEST_RTOL = 1e-10


def offset_matrix(grid: TorusGrid, samples: np.ndarray) -> np.ndarray:
    """Dense matrix ``M[i, j] = s(x_i - x_j)`` over flattened grid indices."""
    idx = np.array(np.unravel_index(np.arange(grid.size), grid.shape))  # (d, N)
    diff = (idx[:, :, None] - idx[:, None, :]) % grid.n
    return samples[tuple(diff)]


def direct_convolution(grid: TorusGrid, samples: np.ndarray, f: np.ndarray) -> np.ndarray:
    M = offset_matrix(grid, samples)
    return (grid.cell_volume * M @ f.ravel()).reshape(grid.shape)


def direct_bilinear(grid: TorusGrid, samples: np.ndarray, f: np.ndarray, g: np.ndarray) -> float:
    """``(1/2) iint K(x-y) (f(x)-f(y)) (g(x)-g(y))`` as a double sum."""
    M = offset_matrix(grid, samples)
    df = f.ravel()[:, None] - f.ravel()[None, :]
    dg = g.ravel()[:, None] - g.ravel()[None, :]
    return float(0.5 * grid.cell_volume**2 * np.sum(M * df * dg))


def direct_quarter_energy(grid: TorusGrid, samples: np.ndarray, u: np.ndarray) -> float:
    return 0.5 * direct_bilinear(grid, samples, u, u)


def dual_norm_by_sup(f: Field) -> float:
    """``sup <f, phi> / ||phi||_{H^1}`` over the real trigonometric basis of the grid.

    The basis is orthogonal in both L2 and H1, so the supremum is the l2 norm of
    the normalised pairings.
    """
    g = f.grid
    x = g.coordinates()
    total = 0.0
    for key in np.ndindex(*g.shape):
        neg = tuple((-np.array(key)) % g.n)
        if neg < key:
            continue  # visit each conjugate pair once
        mvec = np.array(g.mode_numbers)[list(key)]
        phase = sum(2 * np.pi * mm * xa / g.side_length for mm, xa in zip(mvec, x))
        k2 = float(np.sum((2 * np.pi * mvec / g.side_length) ** 2))
        funcs = [np.cos(phase)] if neg == key else [np.cos(phase), np.sin(phase)]
        for phi in funcs:
            l2sq = g.cell_volume * np.sum(phi**2)
            pair = g.cell_volume * np.sum(f.values * phi)
            total += pair**2 / ((1 + k2) * l2sq)
    return float(np.sqrt(total))


def _rel(a, b) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    scale = max(np.max(np.abs(b)), np.finfo(float).tiny)
    return float(np.max(np.abs(a - b)) / scale)


def selftest(seed: int = 0, rtol: float = SELFTEST_RTOL) -> list[tuple[str, float, bool]]:
    """Run every oracle-vs-fast-path comparison; returns ``(name, rel_err, ok)`` rows."""
    rng = np.random.default_rng(seed)
    results = []
    for dim, n, eps in ((1, 16, 0.2), (2, 8, 0.3), (3, 8, 0.3)):
        g = TorusGrid(dim, n)
        K = build_kernel(normalize_mollifier(1.0, dim), eps, g)
        u = rng.standard_normal(g.shape)
        v = rng.standard_normal(g.shape)
        fu = Field(g, u)
        tag = f"d={dim} n={n}"
        checks = {
            "convolution": (kernel_convolve(K, fu).values, direct_convolution(g, K.samples, u)),
            "bilinear <Bu,v>": (
                g.cell_volume * np.sum(nonlocal_B(K, fu).values * v),
                direct_bilinear(g, K.samples, u, v),
            ),
            "quarter energy": (en.dirichlet_nonlocal(fu, K), direct_quarter_energy(g, K.samples, u)),
            "B via (K*1)f - K*f": (
                nonlocal_B(K, fu).values,
                K.mass * u - direct_convolution(g, K.samples, u),
            ),
            "L2 norm": (norm_L2(fu), np.sqrt(np.sum(u**2) * g.cell_volume)),
            "dual norm": (norm_H1_dual(fu), dual_norm_by_sup(fu)),
        }
        w = fu - float(np.mean(u))
        checks["inverse Laplacian"] = (-laplacian(inverse_laplacian(w)).values, w.values)
        for name, (fast, slow) in checks.items():
            err = _rel(fast, slow)
            results.append((f"{tag} {name}", err, err <= rtol))
    return results
