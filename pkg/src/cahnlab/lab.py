"""Epsilon sweeps comparing nonlocal and local trajectories, rate fitting and
the operator / energy consistency and Poincare sampling studies."""

from __future__ import annotations

import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import energy as en
from .dynamics import IntegrationError, SolverConfig, run
from .kernel import Mollifier, build_kernel, local_limit_coefficient, nonlocal_B
from .potential import Potential
from .torus import Field, TorusGrid, laplacian, norm_H1, norm_H1_dual, norm_L2

log = logging.getLogger(__name__)

INITIAL_KINDS = ("single_mode", "tanh_interface", "spinodal_noise", "constant")
DEFAULT_EPS = (0.2, 0.1, 0.05, 0.025)
MIN_RECORDS = 50


# --- initial data -------------------------------------------------------------


def band_limited_noise(grid: TorusGrid, rng: np.random.Generator, max_mode: int = 4) -> np.ndarray:
    """Mean-zero, unit-RMS trigonometric polynomial with modes ``|m|_inf <= max_mode``.

    The coefficients depend only on ``rng`` and ``max_mode``, so the same seed
    gives samples of the same continuous function on every grid.
    """
    if not 0 < max_mode < grid.n // 2:
        raise ValueError(f"max_mode must lie in (0, n/2), got {max_mode}")
    side = 2 * max_mode + 1
    coeffs = rng.standard_normal((side,) * grid.dim) + 1j * rng.standard_normal((side,) * grid.dim)
    coeffs.flat[coeffs.size // 2] = 0.0  # the m = 0 entry sits at the cube centre
    full = np.zeros(grid.shape, dtype=complex)
    idx = np.ix_(*([np.arange(-max_mode, max_mode + 1) % grid.n] * grid.dim))
    full[idx] = coeffs
    f = np.fft.ifftn(full).real * grid.size
    f -= f.mean()
    return f / np.sqrt(np.mean(f**2))


def initial_data(grid: TorusGrid, kind: str = "single_mode", seed: int = 0,
                 amplitude: float | None = None, mean_value: float = 0.5) -> Field:
    x = grid.coordinates()
    L = grid.side_length
    if kind == "single_mode":
        a = 0.25 if amplitude is None else amplitude
        mode = np.ones(grid.shape)
        for xa in x:
            mode = mode * np.cos(2 * np.pi * xa / L)
        return Field(grid, mean_value + a * mode)
    if kind == "tanh_interface":
        a = 0.5 if amplitude is None else amplitude
        return Field(grid, mean_value + a * np.tanh(3.0 * np.cos(2 * np.pi * x[0] / L)))
    if kind == "spinodal_noise":
        a = 0.01 if amplitude is None else amplitude
        rng = np.random.default_rng(seed)
        return Field(grid, mean_value + a * band_limited_noise(grid, rng))
    if kind == "constant":
        return Field(grid, np.full(grid.shape, mean_value))
    raise ValueError(f"initial_kind must be one of {INITIAL_KINDS}, got {kind!r}")


# --- rates --------------------------------------------------------------------


def fit_rate(pairs) -> float | None:
    """Least-squares slope of ``log err`` against ``log eps``.

    Pairs with a zero (or non-finite) error are dropped; ``None`` signals an
    undefined rate when fewer than three usable pairs remain.
    """
    usable = [(float(e), float(r)) for e, r in pairs if r > 0 and math.isfinite(r) and e > 0]
    if len(usable) < 3:
        return None
    x = np.log([e for e, _ in usable])
    y = np.log([r for _, r in usable])
    return float(np.polyfit(x, y, 1)[0])


# --- sweep ----------------------------------------------------------------------


@dataclass(frozen=True)
class SweepPlan:
    grid: TorusGrid
    mollifier: Mollifier
    cfg: SolverConfig = SolverConfig()
    potential: Potential = Potential()
    eps_list: tuple[float, ...] = DEFAULT_EPS
    seed: int = 0
    initial_kind: str = "single_mode"
    amplitude: float | None = None
    min_support_cells: float = 8.0
    allow_underresolved: bool = False
    sampling: str = "trapezoid"

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps_list)
        object.__setattr__(self, "eps_list", eps)
        if len(eps) < 1 or any(e <= 0 for e in eps):
            raise ValueError("eps_list must hold positive values")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("eps_list must be strictly decreasing")
        r0 = self.mollifier.r0
        if not eps[0] * r0 < self.grid.side_length / 2:
            raise ValueError(f"largest eps*r0={eps[0] * r0:g} must be < L/2")
        if self.mollifier.dim != self.grid.dim:
            raise ValueError("mollifier and grid dimensions differ")
        if self.initial_kind not in INITIAL_KINDS:
            raise ValueError(f"initial_kind must be one of {INITIAL_KINDS}")
        if self.underresolved and not self.allow_underresolved:
            raise ValueError(
                f"grid does not resolve eps={eps[-1]:g}: {self.support_cells:.2f} cells across "
                f"kernel support, need >= {self.min_support_cells:g}"
            )
        if self.cfg.n_steps // self.cfg.record_every < MIN_RECORDS:
            raise ValueError(
                f"record_every={self.cfg.record_every} gives fewer than {MIN_RECORDS} records"
            )

    @property
    def support_cells(self) -> float:
        return 2.0 * self.eps_list[-1] * self.mollifier.r0 / self.grid.h

    @property
    def underresolved(self) -> bool:
        return self.support_cells < self.min_support_cells

    def initial(self) -> Field:
        return initial_data(self.grid, self.initial_kind, self.seed, self.amplitude)

    def echo(self) -> dict:
        return {
            "dim": self.grid.dim,
            "n": self.grid.n,
            "L": self.grid.side_length,
            "r0": self.mollifier.r0,
            "sigma": self.mollifier.sigma,
            "eps_list": list(self.eps_list),
            "dt": self.cfg.dt,
            "t_end": self.cfg.t_end,
            "stabilization": self.cfg.S(self.potential),
            "dealias": self.cfg.dealias,
            "record_every": self.cfg.record_every,
            "potential": self.potential.kind,
            "potential_params": self.potential.params(),
            "seed": self.seed,
            "initial_kind": self.initial_kind,
            "amplitude": self.amplitude,
            "sampling": self.sampling,
        }


@dataclass
class SweepRow:
    eps: float
    err_L2H1: float
    err_CdualH1: float
    energy_gap: float
    runtime_seconds: float


@dataclass
class SweepReport:
    plan: SweepPlan
    rows: list[SweepRow] = field(default_factory=list)
    valid: bool = True
    failure: str | None = None
    C0: float | None = None
    max_initial_energy: float | None = None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    def rate(self, name: str = "err_L2H1") -> float | None:
        return fit_rate([(r.eps, getattr(r, name)) for r in self.rows])

    @property
    def fitted_rate(self) -> float | None:
        return self.rate("err_L2H1")

    def write_csv(self, stream, timing: bool = False):
        stream.write("eps,err_L2H1,err_CdualH1,energy_gap,runtime_seconds\n")
        for r in self.rows:
            rt = r.runtime_seconds if timing else math.nan
            vals = (r.eps, r.err_L2H1, r.err_CdualH1, r.energy_gap, rt)
            stream.write(",".join(format(float(v), ".17g") for v in vals) + "\n")

    def summary(self) -> dict:
        return {
            "valid": self.valid,
            "failure": self.failure,
            "fitted_rate": self.fitted_rate,
            "fitted_rates": {c: self.rate(c) for c in ("err_L2H1", "err_CdualH1", "energy_gap")},
            "underresolved": self.plan.underresolved,
            "continuum_fidelity": self.plan.grid.dim != 2,
            "C0": self.C0,
            "max_initial_energy": self.max_initial_energy,
            "plan": self.plan.echo(),
        }

    def write_json(self, stream):
        json.dump(self.summary(), stream, indent=2, sort_keys=True, allow_nan=True)
        stream.write("\n")


def trajectory_errors(grid: TorusGrid, times, states, ref_states, inter, ref_inter):
    """``(L2(0,T;H1), max_t (H1)^*, int_0^T |energy gap|)`` between two recorded runs."""
    h1 = np.array([norm_H1(Field(grid, a - b)) ** 2 for a, b in zip(states, ref_states)])
    dual = np.array([norm_H1_dual(Field(grid, a - b)) for a, b in zip(states, ref_states)])
    gap = np.abs(np.asarray(inter) - np.asarray(ref_inter))
    return (
        float(math.sqrt(np.trapezoid(h1, times))),
        float(dual.max()),
        float(np.trapezoid(gap, times)),
    )


def _member(plan: SweepPlan, eps: float, ref_times, ref_states, ref_inter) -> SweepRow:
    t0 = time.perf_counter()
    K = build_kernel(plan.mollifier, eps, plan.grid, plan.sampling)
    rep = run(plan.initial(), K, plan.potential, _keep(plan.cfg))
    if not np.array_equal(rep.times, ref_times):
        raise RuntimeError("record times of nonlocal and local runs differ")
    errs = trajectory_errors(plan.grid, rep.times, rep.states, ref_states, rep.interaction, ref_inter)
    return SweepRow(eps, *errs, time.perf_counter() - t0)


def _keep(cfg: SolverConfig) -> SolverConfig:
    return SolverConfig(cfg.dt, cfg.t_end, cfg.stabilization, cfg.dealias,
                        cfg.record_every, cfg.strict_energy, keep_states=True)


def default_workers() -> int:
    env = os.environ.get("CAHNLAB_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_sweep(plan: SweepPlan, workers: int | None = None) -> SweepReport:
    """Local reference run plus one nonlocal run per eps on the same grid and dt."""
    workers = default_workers() if workers is None else max(1, int(workers))
    report = SweepReport(plan)
    u0 = plan.initial()
    try:
        ref = run(u0, "local", plan.potential, _keep(plan.cfg))
    except IntegrationError as exc:
        report.valid, report.failure = False, f"local: {exc}"
        return report
    kernels_ok = [build_kernel(plan.mollifier, e, plan.grid, plan.sampling) for e in plan.eps_list]
    report.C0, report.max_initial_energy = en.initial_energy_bound(u0, kernels_ok, plan.potential)
    del kernels_ok
    args = (ref.times, ref.states, ref.interaction)
    if workers > 1 and len(plan.eps_list) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(plan.eps_list))) as pool:
            futures = [pool.submit(_member, plan, e, *args) for e in plan.eps_list]
            outcomes = []
            for fut in futures:
                try:
                    outcomes.append(fut.result())
                except IntegrationError as exc:
                    outcomes.append(exc)
    else:
        outcomes = []
        for e in plan.eps_list:
            try:
                outcomes.append(_member(plan, e, *args))
            except IntegrationError as exc:
                outcomes.append(exc)
                break
    for e, out in zip(plan.eps_list, outcomes):
        if isinstance(out, Exception):
            report.valid, report.failure = False, f"eps={e:g}: {out}"
            break
        report.rows.append(out)
    return report


# --- operator / energy consistency ----------------------------------------------


def smooth_basket(grid: TorusGrid) -> dict[str, Field]:
    x = grid.coordinates()
    L = grid.side_length
    th = [2 * np.pi * xa / L for xa in x]
    mode1 = np.prod([np.sin(t) for t in th], axis=0)
    mode2 = np.prod([np.cos(2 * t) for t in th], axis=0)
    analytic = np.exp(0.5 * np.sum([np.sin(t) for t in th], axis=0))
    return {
        "mode1": Field(grid, mode1),
        "mode2": Field(grid, mode2),
        "analytic": Field(grid, analytic - analytic.mean()),
    }


@dataclass
class ConsistencyRow:
    eps: float
    field: str
    err_L2: float
    err_dual: float
    energy_rel: float


def operator_consistency_study(m: Mollifier, grid: TorusGrid, eps_list=DEFAULT_EPS,
                               basket: dict[str, Field] | None = None,
                               sampling: str = "trapezoid") -> dict:
    """Tabulate ``||B_eps f + c Lap f||`` (L2 and dual) and the relative gap
    between nonlocal and local Dirichlet energies, per eps and test field."""
    basket = smooth_basket(grid) if basket is None else basket
    c = local_limit_coefficient(m, grid.dim)
    rows = []
    for eps in eps_list:
        K = build_kernel(m, eps, grid, sampling)
        for name, f in basket.items():
            resid = nonlocal_B(K, f) + c * laplacian(f)
            e_loc = c * en.dirichlet_local(f)
            e_nl = en.dirichlet_nonlocal(f, K)
            rel = abs(e_nl - e_loc) / e_loc if e_loc > 0 else abs(e_nl)
            rows.append(ConsistencyRow(float(eps), name, norm_L2(resid), norm_H1_dual(resid), rel))
    rates = {}
    for name in basket:
        sub = [r for r in rows if r.field == name]
        rates[name] = {
            col: fit_rate([(r.eps, getattr(r, col)) for r in sub])
            for col in ("err_L2", "err_dual", "energy_rel")
        }
    return {"rows": rows, "rates": rates, "c_eff": c}


def write_consistency_csv(study: dict, stream):
    stream.write("eps,field,err_L2,err_dual,energy_rel\n")
    for r in study["rows"]:
        stream.write(f"{r.eps:.17g},{r.field},{r.err_L2:.17g},{r.err_dual:.17g},{r.energy_rel:.17g}\n")


# --- Poincare sampling ----------------------------------------------------------


def poincare_study(m: Mollifier, grids, eps: float, samples: int = 100, seed: int = 0,
                   max_mode: int = 4, sampling: str = "trapezoid") -> dict:
    """Max Poincare ratio over ``samples`` band-limited fields, per grid.

    Each grid sees the same continuous random fields (same seed).
    """
    out = {}
    for g in grids:
        K = build_kernel(m, eps, g, sampling)
        rng = np.random.default_rng(seed)
        ratios = [en.poincare_ratio(Field(g, band_limited_noise(g, rng, max_mode)), K)
                  for _ in range(samples)]
        out[g.n] = float(max(ratios))
    return {"max_ratio": out, "C_p_est": max(out.values()), "eps": eps}


def check_b1_smallness(p: Potential, cp_est: float) -> bool:
    """True when ``2 B1 C_p < 1``; logs a warning otherwise (never fatal)."""
    ok = 2.0 * p.B1 * cp_est < 1.0
    log.info("B1=%g, estimated C_p=%g, 2*B1*C_p=%g", p.B1, cp_est, 2 * p.B1 * cp_est)
    if not ok:
        log.warning("B1 smallness condition fails: 2*B1*C_p=%g >= 1", 2 * p.B1 * cp_est)
    return ok
