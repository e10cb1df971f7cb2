"""Stabilised semi-implicit spectral time stepping for both gradient flows.

One step solves, mode by mode,

    (1 + dt |k|^2 A(k) + dt S |k|^2) u+(k) = u(k) - dt |k|^2 (w(k) - S u(k))

with ``w = F'(u)`` and ``A(k) = |k|^2`` for the local equation or the
nonlocal symbol ``b_eps(k)``.  Both flows share this code path.
"""

from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kernel import ScaledKernel
from .potential import Potential, PotentialDomainError
from .energy import EnergyBreakdown
from .torus import Field, TorusGrid, spectral_sum

log = logging.getLogger(__name__)

ENERGY_TOL = 1e-10


class IntegrationError(RuntimeError):
    """Raised when a run blows up, leaves the potential's domain or (in strict
    mode) the energy increases."""

    def __init__(self, message, *, step: int, time: float, kind: str):
        super().__init__(f"{message} at step {step} (t={time:.6g})")
        self.step = step
        self.time = time
        self.kind = kind


@dataclass(frozen=True)
class SolverConfig:
    dt: float = 1e-5
    t_end: float = 0.01
    stabilization: float | None = None  # None -> B1 of the potential
    dealias: bool = False
    record_every: int = 10
    strict_energy: bool = False
    keep_states: bool = False

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_end > 0:
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if not self.dt < self.t_end:
            raise ValueError(f"dt={self.dt} must be < t_end={self.t_end}")
        if self.stabilization is not None and not self.stabilization >= 0:
            raise ValueError(f"stabilization must be >= 0, got {self.stabilization}")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            raise ValueError(f"record_every must be a positive integer, got {self.record_every}")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.t_end / self.dt)))

    def S(self, p: Potential) -> float:
        return p.B1 if self.stabilization is None else float(self.stabilization)


@dataclass
class RunReport:
    scheme: str
    eps: float | None
    times: np.ndarray
    mass: np.ndarray
    energy: list[EnergyBreakdown]
    dual_rate: np.ndarray
    dissipation: np.ndarray
    final_state: Field
    states: list[np.ndarray] | None = None
    step_energy: np.ndarray = field(default_factory=lambda: np.zeros(0))
    max_mass_drift: float = 0.0
    max_energy_increase: float = -math.inf
    first_energy_violation: int | None = None
    max_overshoot: float = 0.0

    @property
    def energy_total(self) -> np.ndarray:
        return np.array([e.total for e in self.energy])

    @property
    def interaction(self) -> np.ndarray:
        return np.array([e.interaction for e in self.energy])

    @property
    def energy_identity_defect(self) -> float:
        """``E(0) - E(T) - sum dt ||du/dt||^2_{H^-1}``; nonnegative for this scheme."""
        e = self.energy_total
        return float(e[0] - e[-1] - self.dissipation[-1])

    def rows(self):
        for j, t in enumerate(self.times):
            e = self.energy[j]
            yield (t, self.mass[j], e.interaction, e.potential_part, e.total,
                   self.dual_rate[j], self.dissipation[j])

    def write_csv(self, stream):
        stream.write("t,mass,interaction,potential,energy,dual_rate,dissipation\n")
        for row in self.rows():
            stream.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v) -> str:
    return format(float(v), ".17g")


# --- one step ---------------------------------------------------------------


def _dealias_mask(grid: TorusGrid) -> np.ndarray:
    cut = grid.n / 3.0
    m = np.ones(grid.spectral_shape, dtype=bool)
    for k in grid.k_axes:
        mode = np.abs(k) * grid.side_length / (2 * np.pi)
        m &= mode <= cut
    return m


class _Stepper:
    """Precomputed spectral factors for a fixed (grid, operator, dt, S)."""

    def __init__(self, grid: TorusGrid, symbol: np.ndarray, p: Potential, dt: float, S: float, dealias: bool):
        self.grid = grid
        self.p = p
        k2 = grid.k2
        self.k2 = k2
        self.dt = dt
        self.dtk2 = dt * k2
        self.explicit = 1.0 + self.dtk2 * S
        self.denom = 1.0 + self.dtk2 * symbol + self.dtk2 * S
        self.mask = _dealias_mask(grid) if dealias else None
        self.inv_k2 = np.zeros_like(k2)
        np.divide(1.0, k2, out=self.inv_k2, where=k2 > 0)

    def __call__(self, u: np.ndarray, uhat: np.ndarray):
        what = self.grid.forward(self.p.dF(u))
        if self.mask is not None:
            what = what * self.mask
        new = self.grid.inverse((self.explicit * uhat - self.dtk2 * what) / self.denom)
        # re-derive the spectrum from the stored values so a run restarted
        # from a checkpoint continues bit for bit
        return new, self.grid.forward(new)


def _check_finite(u, step, t):
    if not np.all(np.isfinite(u)):
        raise IntegrationError("non-finite values (blow-up)", step=step, time=t, kind="blowup")


def step_local(u: Field, p: Potential, cfg: SolverConfig) -> Field:
    g = u.grid
    st = _Stepper(g, g.k2, p, cfg.dt, cfg.S(p), cfg.dealias)
    _check_finite(u.values, 0, 0.0)
    new, new_hat = st(u.values, u.hat)
    _check_finite(new, 1, cfg.dt)
    return Field(g, new, new_hat)


def step_nonlocal(u: Field, K: ScaledKernel, p: Potential, cfg: SolverConfig) -> Field:
    if K.grid != u.grid:
        raise ValueError("kernel and field live on different grids")
    st = _Stepper(u.grid, K.symbol, p, cfg.dt, cfg.S(p), cfg.dealias)
    _check_finite(u.values, 0, 0.0)
    new, new_hat = st(u.values, u.hat)
    _check_finite(new, 1, cfg.dt)
    return Field(u.grid, new, new_hat)


# --- full runs ---------------------------------------------------------------


def _scheme_parts(scheme, grid: TorusGrid):
    if scheme is None or (isinstance(scheme, str) and scheme == "local"):
        return "local", None, grid.k2
    if isinstance(scheme, ScaledKernel):
        if scheme.grid != grid:
            raise ValueError("kernel and initial data live on different grids")
        return "nonlocal", scheme.eps, scheme.symbol
    if isinstance(scheme, np.ndarray):
        # raw symbol, used for shared-code-path checks
        return "symbol", None, scheme
    raise ValueError(f"unknown scheme {scheme!r}")


def run(u0: Field, scheme, p: Potential, cfg: SolverConfig, t0: float = 0.0) -> RunReport:
    """Integrate from ``t0`` to ``cfg.t_end`` and record diagnostics.

    ``scheme`` is ``"local"`` or a :class:`ScaledKernel`.  Records are taken
    every ``cfg.record_every`` steps and at the final step.
    """
    grid = u0.grid
    name, eps, symbol = _scheme_parts(scheme, grid)
    S = cfg.S(p)
    if S * 2 < p.B1:
        log.debug("stabilization S=%g below B1/2", S)
    st = _Stepper(grid, symbol, p, cfg.dt, S, cfg.dealias)
    n_steps = max(1, int(round((cfg.t_end - t0) / cfg.dt)))

    def energy(u, uhat):
        inter = 0.5 * spectral_sum(grid, uhat, symbol)
        pot = grid.cell_volume * float(np.sum(p.F(u)))
        return EnergyBreakdown.of(inter, pot)

    u = np.array(u0.values)
    uhat = grid.forward(u)
    _check_finite(u, 0, t0)
    m0 = uhat.flat[0].real / grid.size
    try:
        e_prev = energy(u, uhat)
    except PotentialDomainError as exc:
        raise IntegrationError(str(exc), step=0, time=t0, kind="domain") from exc

    times, mass, energies, rates, diss, states = [], [], [], [], [], []
    step_energy = np.empty(n_steps + 1)
    step_energy[0] = e_prev.total
    cum = 0.0
    max_drift = 0.0
    max_inc = -math.inf
    first_bad = None
    overshoot = max(0.0, -float(u.min()), float(u.max()) - 1.0)

    def record(n, u, e, rate):
        times.append(t0 + n * cfg.dt)
        mass.append(float(np.mean(u)))
        energies.append(e)
        rates.append(rate)
        diss.append(cum)
        if cfg.keep_states:
            states.append(u.copy())

    pending_first = True
    for n in range(1, n_steps + 1):
        t = t0 + n * cfg.dt
        try:
            new, new_hat = st(u, uhat)
            _check_finite(new, n, t)
            e_new = energy(new, new_hat)
        except PotentialDomainError as exc:
            raise IntegrationError(str(exc), step=n, time=t, kind="domain") from exc
        d_hat = (new_hat - uhat) / cfg.dt
        rate = math.sqrt(spectral_sum(grid, d_hat, 1.0 / (1.0 + st.k2)))
        if pending_first:
            record(0, u, e_prev, rate)
            pending_first = False
        cum += cfg.dt * spectral_sum(grid, d_hat, st.inv_k2)
        inc = e_new.total - e_prev.total
        max_inc = max(max_inc, inc)
        if inc > ENERGY_TOL and first_bad is None:
            first_bad = n
            log.warning("energy increased by %.3e at step %d (t=%.6g)", inc, n, t)
            if cfg.strict_energy:
                raise IntegrationError(
                    f"energy increased by {inc:.3e}", step=n, time=t, kind="energy"
                )
        max_drift = max(max_drift, abs(new_hat.flat[0].real / grid.size - m0))
        overshoot = max(overshoot, -float(new.min()), float(new.max()) - 1.0)
        step_energy[n] = e_new.total
        u, uhat, e_prev = new, new_hat, e_new
        if n % cfg.record_every == 0 or n == n_steps:
            record(n, u, e_new, rate)

    return RunReport(
        scheme=name,
        eps=eps,
        times=np.array(times),
        mass=np.array(mass),
        energy=energies,
        dual_rate=np.array(rates),
        dissipation=np.array(diss),
        final_state=Field(grid, u),
        states=states if cfg.keep_states else None,
        step_energy=step_energy,
        max_mass_drift=max_drift,
        max_energy_increase=max_inc,
        first_energy_violation=first_bad,
        max_overshoot=overshoot,
    )


def certify_dt(u0: Field, scheme, p: Potential, cfg: SolverConfig, dt_hi: float,
               dt_lo: float = 0.0, iters: int = 12, steps: int = 200) -> float:
    """Largest dt in ``[dt_lo, dt_hi]`` (by bisection) whose run of ``steps``
    steps never increases the energy by more than ``ENERGY_TOL``.

    Bisection assumes stability is monotone in dt, so ``dt_hi`` should not
    sit far beyond the stable range."""

    def ok(dt):
        c = SolverConfig(dt=dt, t_end=dt * steps, stabilization=cfg.stabilization,
                         dealias=cfg.dealias, record_every=steps)
        try:
            return run(u0, scheme, p, c).first_energy_violation is None
        except IntegrationError:
            return False

    if ok(dt_hi):
        return dt_hi
    lo, hi = dt_lo, dt_hi
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


# --- checkpoints ------------------------------------------------------------

MAGIC = "cahnlab-checkpoint 1"


def write_checkpoint(path, u: Field, t: float, scheme: str = "local", eps=None,
                     potential: Potential | None = None) -> None:
    """Header of ``key=value`` lines, ``end_header``, then little-endian float64 values."""
    g = u.grid
    lines = [MAGIC, f"dim={g.dim}", f"n={g.n}", f"L={g.side_length!r}", f"t={float(t)!r}",
             f"scheme={scheme}", f"eps={'none' if eps is None else repr(float(eps))}"]
    if potential is not None:
        lines.append(f"potential={potential.kind}")
        lines += [f"{k}={float(v)!r}" for k, v in potential.params().items()]
    lines.append("end_header")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        fh.write(np.ascontiguousarray(u.values, dtype="<f8").tobytes())


def read_checkpoint(path) -> tuple[Field, dict]:
    raw = Path(path).read_bytes()
    buf = io.BytesIO(raw)
    if buf.readline().decode("ascii").strip() != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    header = {}
    while True:
        line = buf.readline()
        if not line:
            raise ValueError(f"{path}: truncated header")
        line = line.decode("ascii").strip()
        if line == "end_header":
            break
        key, _, val = line.partition("=")
        header[key] = val
    grid = TorusGrid(int(header["dim"]), int(header["n"]), float(header["L"]))
    data = np.frombuffer(buf.read(), dtype="<f8")
    if data.size != grid.size:
        raise ValueError(f"{path}: expected {grid.size} values, found {data.size}")
    header["t"] = float(header["t"])
    header["eps"] = None if header["eps"] == "none" else float(header["eps"])
    return Field(grid, data.reshape(grid.shape)), header
