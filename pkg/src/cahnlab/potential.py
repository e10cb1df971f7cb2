"""Double-well potentials and their second-derivative bounds.

Three families are available:

* ``shifted_quartic``   ``F(s) = a s^2 (1-s)^2`` (wells at 0 and 1, the default)
* ``paper_polynomial``  ``F(s) = A1 s^4 - A2 s^2``
* ``logarithmic``       ``F(s) = theta0 s(1-s) + theta [s log s + (1-s) log(1-s)]``

``B1`` is the lower bound ``F'' >= -B1`` and ``B2`` the growth constant in
``|F''(r)| <= B2 (r^2 + 1)``.  Both are derived in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

KINDS = ("shifted_quartic", "paper_polynomial", "logarithmic")


class PotentialDomainError(ValueError):
    """Logarithmic potential evaluated outside ``(delta, 1 - delta)``."""


@dataclass(frozen=True)
class Potential:
    kind: str = "shifted_quartic"
    a: float = 1.0
    A1: float = 1.0
    A2: float = 1.0
    theta0: float = 3.0
    theta: float = 1.0
    delta: float = 1e-9

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"potential kind must be one of {KINDS}, got {self.kind!r}")
        if self.kind == "shifted_quartic" and not self.a > 0:
            raise ValueError(f"a must be positive, got {self.a}")
        if self.kind == "paper_polynomial" and not (self.A1 > 0 and self.A2 > 0):
            raise ValueError("A1 and A2 must be positive")
        if self.kind == "logarithmic":
            if not 0 < self.theta < self.theta0:
                raise ValueError("need 0 < theta < theta0")
            if not 0 < self.delta < 0.5:
                raise ValueError("barrier delta must lie in (0, 1/2)")

    # --- evaluation ---------------------------------------------------------

    def _check_domain(self, r):
        if self.kind == "logarithmic":
            r = np.asarray(r)
            if np.any(r <= self.delta) or np.any(r >= 1 - self.delta):
                raise PotentialDomainError(
                    f"logarithmic potential needs values in ({self.delta:g}, {1 - self.delta:g})"
                )

    def F(self, r):
        self._check_domain(r)
        if self.kind == "shifted_quartic":
            return self.a * r**2 * (1 - r) ** 2
        if self.kind == "paper_polynomial":
            return self.A1 * r**4 - self.A2 * r**2
        return self.theta0 * r * (1 - r) + self.theta * (r * np.log(r) + (1 - r) * np.log(1 - r))

    def dF(self, r):
        self._check_domain(r)
        if self.kind == "shifted_quartic":
            return 2 * self.a * r * (1 - r) * (1 - 2 * r)
        if self.kind == "paper_polynomial":
            return 4 * self.A1 * r**3 - 2 * self.A2 * r
        return self.theta0 * (1 - 2 * r) + self.theta * np.log(r / (1 - r))

    def ddF(self, r):
        self._check_domain(r)
        if self.kind == "shifted_quartic":
            return 2 * self.a * (6 * r**2 - 6 * r + 1)
        if self.kind == "paper_polynomial":
            return 12 * self.A1 * r**2 - 2 * self.A2
        return -2 * self.theta0 + self.theta / (r * (1 - r))

    # --- curvature bounds -------------------------------------------------

    @property
    def B1(self) -> float:
        if self.kind == "shifted_quartic":
            return self.a  # F''(1/2) = -a
        if self.kind == "paper_polynomial":
            return 2 * self.A2  # F''(0)
        return max(2 * self.theta0 - 4 * self.theta, 0.0)  # F''(1/2)

    @property
    def B2(self) -> float:
        if self.kind == "shifted_quartic":
            # sup of 2a(6r^2-6r+1)/(r^2+1), attained at r = -(5+sqrt 61)/6
            return self.a * (7 + math.sqrt(61))
        if self.kind == "paper_polynomial":
            # (12 A1 t - 2 A2)/(t+1) is monotone in t = r^2
            return max(12 * self.A1, 2 * self.A2)
        return math.inf

    def params(self) -> dict:
        if self.kind == "shifted_quartic":
            return {"a": self.a}
        if self.kind == "paper_polynomial":
            return {"A1": self.A1, "A2": self.A2}
        return {"theta0": self.theta0, "theta": self.theta, "delta": self.delta}


def eval_F(p: Potential, r):
    return p.F(r)


def eval_dF(p: Potential, r):
    return p.dF(r)


def eval_ddF(p: Potential, r):
    return p.ddF(r)


def certify_H3(p: Potential, lo: float = -10.0, hi: float = 10.0, samples: int = 200001):
    """Return ``(B1, B2)`` after checking both bounds on a dense sample of ``[lo, hi]``."""
    if p.kind == "logarithmic":
        raise NotImplementedError("F'' of the logarithmic potential is unbounded near 0 and 1")
    r = np.linspace(lo, hi, samples)
    d2 = p.ddF(r)
    B1, B2 = p.B1, p.B2
    if d2.min() < -B1 - 1e-12:
        raise AssertionError(f"F'' reaches {d2.min()} below -B1={-B1}")
    if np.max(np.abs(d2) / (r**2 + 1)) > B2 * (1 + 1e-12):
        raise AssertionError("growth bound |F''| <= B2 (r^2+1) violated")
    return B1, B2
