"""Frictional damping laws E(|v|) v and their admissibility checks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = ["DampingLaw", "linear_law", "power_law", "validate_damping",
           "ValidationReport"]


@dataclass(frozen=True)
class DampingLaw:
    """Scalar modulus E of the damping g_i(v) = E(|v|) v_i.

    ``m_low``/``M_high`` bound E on (1, inf); ``L_lip`` is a certified
    global Lipschitz constant of g. The callable must accept arrays.
    """

    family: str
    E: Callable[[np.ndarray], np.ndarray]
    alpha: float = float("nan")
    p_exp: float = float("nan")
    m_low: float = float("nan")
    M_high: float = float("nan")
    L_lip: float = float("nan")


def linear_law(alpha: float) -> DampingLaw:
    a = float(alpha)
    return DampingLaw(family="linear", E=lambda s: np.full_like(np.asarray(s, float), a),
                      alpha=a, m_low=a, M_high=a, L_lip=a)


def power_law(p_exp: float) -> DampingLaw:
    """Saturated power law: E(s) = s^(p-1) for s <= 1, E(s) = 1 beyond.

    g(v) = E(|v|) v has derivative bound p on the unit ball and 1 outside,
    so L_lip = p certifies the global Lipschitz property for p >= 1.
    """
    p = float(p_exp)
    if p < 1.0:
        raise ValueError("power exponent must be >= 1")

    def E(s):
        s = np.asarray(s, dtype=float)
        return np.where(s <= 1.0, np.power(np.clip(s, 1e-300, None), p - 1.0), 1.0)

    return DampingLaw(family="power_saturated", E=E, p_exp=p,
                      m_low=1.0, M_high=1.0, L_lip=p)


@dataclass
class ValidationReport:
    """Outcome of the five admissibility checks plus a Lipschitz estimate."""

    entries: dict = field(default_factory=dict)
    lipschitz_estimate: float = float("nan")

    @property
    def passed(self) -> bool:
        return all(v["ok"] for v in self.entries.values())


def validate_damping(law: DampingLaw, samples: int = 400) -> ValidationReport:
    """Check the damping assumptions on log-spaced samples of (1e-8, 1e3).

    Violations become report entries; nothing raises. The Lipschitz
    estimate combines radial difference quotients of s E(s) with the
    tangential bound sup E (the two directional derivatives of g).
    """
    s = np.logspace(-8, 3, samples)
    Es = np.asarray(law.E(s), dtype=float)
    g = s * Es
    rep = ValidationReport()

    rep.entries["positive"] = {
        "ok": bool(np.all(Es > 0.0)),
        "detail": float(np.min(Es)),
    }
    dg = np.diff(g)
    rep.entries["monotone_sE"] = {
        "ok": bool(np.all(dg >= -1e-12 * np.maximum(np.abs(g[1:]), 1.0))),
        "detail": float(np.min(dg)),
    }
    ref = float(np.interp(1.0, s, g))
    rep.entries["vanishes_at_zero"] = {
        "ok": bool(g[0] <= 1e-6 * max(ref, 1e-30)),
        "detail": float(g[0]),
    }
    above = s > 1.0
    rep.entries["bounded_above_one"] = {
        "ok": bool(law.m_low > 0
                   and np.all(Es[above] >= law.m_low - 1e-12)
                   and np.all(Es[above] <= law.M_high + 1e-12)),
        "detail": (float(np.min(Es[above])), float(np.max(Es[above]))),
    }
    quot = np.abs(dg) / np.diff(s)
    lhat = float(max(np.max(quot), np.max(Es)))
    rep.lipschitz_estimate = lhat
    rep.entries["lipschitz_certified"] = {
        "ok": bool(law.L_lip >= lhat * (1.0 - 1e-9)),
        "detail": lhat,
    }
    return rep
