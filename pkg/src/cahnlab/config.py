"""Flat ``key = value`` run configuration.

Keys carry a dotted section prefix (``solver.dt``, ``kernel.r0``...).  ``#``
starts a comment.  ``auto`` selects the documented default that depends on
other keys (``kernel.sigma`` -> ``2*dim``, ``solver.stabilization`` -> ``B1``).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

from .dynamics import SolverConfig
from .kernel import SAMPLINGS, normalize_mollifier
from .lab import INITIAL_KINDS, SweepPlan, default_workers
from .potential import KINDS, Potential
from .torus import TorusGrid


class ConfigError(ValueError):
    pass


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("true", "yes", "1", "on"):
        return True
    if v in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _int(s: str) -> int:
    return int(s.strip())


def _float(s: str) -> float:
    return float(s.strip())


def _str(s: str) -> str:
    return s.strip()


def _float_list(s: str) -> tuple[float, ...]:
    return tuple(float(p) for p in s.split(",") if p.strip())


def _auto(parse):
    def inner(s: str):
        return None if s.strip().lower() in ("auto", "none") else parse(s)

    return inner


def _choice(options):
    def inner(s: str):
        v = s.strip()
        if v not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return v

    return inner


# key -> (parser, default)
SCHEMA: dict[str, tuple] = {
    "grid.dim": (_int, 1),
    "grid.n": (_int, 512),
    "grid.L": (_float, 1.0),
    "kernel.r0": (_float, 1.0),
    "kernel.sigma": (_auto(_float), None),
    "kernel.eps": (_float, 0.05),
    "kernel.sampling": (_choice(SAMPLINGS), "trapezoid"),
    "potential.kind": (_choice(KINDS), "shifted_quartic"),
    "potential.a": (_float, 1.0),
    "potential.A1": (_float, 1.0),
    "potential.A2": (_float, 1.0),
    "potential.theta0": (_float, 3.0),
    "potential.theta": (_float, 1.0),
    "potential.delta": (_float, 1e-9),
    "solver.dt": (_float, 1e-5),
    "solver.t_end": (_float, 0.01),
    "solver.stabilization": (_auto(_float), None),
    "solver.dealias": (_bool, False),
    "solver.record_every": (_int, 10),
    "solver.strict_energy": (_bool, True),
    "simulate.scheme": (_choice(("local", "nonlocal")), "local"),
    "initial.kind": (_choice(INITIAL_KINDS), "single_mode"),
    "initial.seed": (_int, 0),
    "initial.amplitude": (_auto(_float), None),
    "sweep.eps_list": (_float_list, (0.2, 0.1, 0.05, 0.025)),
    "sweep.min_support_cells": (_float, 8.0),
    "sweep.allow_underresolved": (_bool, False),
    "poincare.eps": (_float, 0.1),
    "poincare.samples": (_int, 100),
    "poincare.max_mode": (_int, 4),
    "output.dir": (_str, "out"),
    "output.timing": (_bool, False),
    "output.kernel_dump": (_bool, False),
    "runtime.workers": (_auto(_int), None),
    "runtime.log_level": (_choice(("DEBUG", "INFO", "WARNING", "ERROR")), "INFO"),
}


def _render(v) -> str:
    if v is None:
        return "auto"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    return str(v)


def _keyed(exc: Exception, keys: dict[str, str]) -> ConfigError:
    msg = str(exc)
    for word, key in keys.items():
        if msg.startswith(word):
            return ConfigError(f"{key}: {msg}")
    return ConfigError(msg)


@dataclass(frozen=True)
class RunConfig:
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    # --- builders; errors name the offending key ---------------------------

    def grid(self, n: int | None = None) -> TorusGrid:
        try:
            return TorusGrid(self["grid.dim"], self["grid.n"] if n is None else n, self["grid.L"])
        except ValueError as exc:
            raise _keyed(exc, {"n_per_axis": "grid.n", "dim": "grid.dim", "side_length": "grid.L"}) from None

    def mollifier(self):
        try:
            return normalize_mollifier(self["kernel.r0"], self["grid.dim"], self["kernel.sigma"])
        except (ValueError, ArithmeticError) as exc:
            raise ConfigError(f"kernel: {exc}") from None

    def potential(self) -> Potential:
        try:
            return Potential(
                kind=self["potential.kind"],
                a=self["potential.a"],
                A1=self["potential.A1"],
                A2=self["potential.A2"],
                theta0=self["potential.theta0"],
                theta=self["potential.theta"],
                delta=self["potential.delta"],
            )
        except ValueError as exc:
            raise ConfigError(f"potential: {exc}") from None

    def solver(self, keep_states: bool = False) -> SolverConfig:
        try:
            return SolverConfig(
                dt=self["solver.dt"],
                t_end=self["solver.t_end"],
                stabilization=self["solver.stabilization"],
                dealias=self["solver.dealias"],
                record_every=self["solver.record_every"],
                strict_energy=self["solver.strict_energy"],
                keep_states=keep_states,
            )
        except ValueError as exc:
            raise _keyed(exc, {f: f"solver.{f}" for f in ("dt", "t_end", "stabilization", "record_every")}) from None

    def sweep_plan(self) -> SweepPlan:
        try:
            return SweepPlan(
                grid=self.grid(),
                mollifier=self.mollifier(),
                cfg=self.solver(),
                potential=self.potential(),
                eps_list=self["sweep.eps_list"],
                seed=self["initial.seed"],
                initial_kind=self["initial.kind"],
                amplitude=self["initial.amplitude"],
                min_support_cells=self["sweep.min_support_cells"],
                allow_underresolved=self["sweep.allow_underresolved"],
                sampling=self["kernel.sampling"],
            )
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"sweep: {exc}") from None

    def workers(self) -> int:
        env = os.environ.get("CAHNLAB_WORKERS")
        if env:
            return max(1, int(env))
        w = self["runtime.workers"]
        return default_workers() if w is None else max(1, w)

    def validate(self):
        self.grid()
        self.mollifier()
        self.potential()
        self.solver()
        if not self["kernel.eps"] > 0:
            raise ConfigError("kernel.eps: must be positive")
        if not self["kernel.eps"] * self["kernel.r0"] < self["grid.L"] / 2:
            raise ConfigError("kernel.eps: kernel support eps*r0 must be < L/2")
        if self["poincare.samples"] < 1:
            raise ConfigError("poincare.samples: must be >= 1")
        return self

    def render(self) -> str:
        return "".join(f"{k} = {_render(self.values[k])}\n" for k in sorted(self.values))


def parse_config(text: str, overrides: dict[str, str] | None = None) -> RunConfig:
    """Parse and validate; omitted keys take their defaults."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        raw[key] = val
    raw.update(overrides or {})
    values = {}
    for key in raw:
        if key not in SCHEMA:
            raise ConfigError(f"{key}: unknown key")
    for key, (parse, default) in SCHEMA.items():
        if key in raw:
            try:
                values[key] = parse(raw[key])
            except ValueError as exc:
                raise ConfigError(f"{key}: cannot parse {raw[key].strip()!r} ({exc})") from None
        else:
            values[key] = default
    return RunConfig(values).validate()
