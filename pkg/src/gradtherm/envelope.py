"""Decay-envelope calculus for the nonlinearly damped relaxed system.

From a damping law and one empirical constant, builds the chain of scalar
functions (concave majorant h, its rescaling r, the implicit maps p and q)
whose comparison ODE S' + q(S) = 0 dominates the energy at multiples of
the observation window. The constant is estimated from an ensemble of
runs; an envelope violation on held-out runs falsifies the estimate, not
the comparison principle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import DegenerateRun, GradthermError, InvalidMajorant, PremiseViolated
from .damping import DampingLaw

__all__ = ["DecayEnvelope", "SRecord", "LemmaReport", "CLemmaEstimate",
           "EnvelopeReport", "default_majorant", "build_envelope",
           "integrate_S", "check_sequence_lemma", "estimate_C_lemma",
           "envelope_compare"]


def default_majorant(law: DampingLaw):
    """Concave increasing h with h(s^2 E(s)) >= s^2 + E^2(s) s^2 on [0, 1].

    linear law: h(z) = (1 + alpha^2) z / alpha  (equality along s^2 E(s));
    power law:  h(z) = 2 z^(2/(p+1)), since s^2 + s^(2p) <= 2 s^2 =
    2 (s^(p+1))^(2/(p+1)) there.
    """
    if law.family == "linear":
        al = law.alpha
        return lambda z: (1.0 + al ** 2) * np.asarray(z) / al
    if law.family == "power_saturated":
        ex = 2.0 / (law.p_exp + 1.0)
        return lambda z: 2.0 * np.power(np.clip(np.asarray(z, float), 0.0, None), ex)
    raise GradthermError(f"no default majorant for family {law.family!r}; pass h")


def _invert_increasing(f, target: float, tol: float = 1e-12) -> float:
    """Solve f(y) = target for increasing f with f(0) = 0, by bisection."""
    if target <= 0.0:
        return 0.0
    hi = max(target, 1e-8)
    for _ in range(600):
        if f(hi) >= target:
            break
        hi *= 2.0
    else:
        raise GradthermError("bisection bracket not found")
    lo = 0.0
    while hi - lo > tol + 1e-15 * hi:
        mid = 0.5 * (lo + hi)
        if f(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass
class DecayEnvelope:
    """Scalar function chain of one damping law and observation window."""

    law: DampingLaw
    h: object
    T_window: float
    domain_measure: float
    C_lemma: float
    Q_measure: float
    c_const: float
    M_const: float
    _q_table: object = field(default=None, repr=False)

    def r(self, s):
        return self.h(np.asarray(s, float) / self.Q_measure)

    def p_fn(self, s: float) -> float:
        """(c I + r)^(-1) applied to M s, by bisection to 1e-12."""
        return _invert_increasing(
            lambda y: self.c_const * y + float(self.r(y)), self.M_const * float(s))

    def q_fn(self, s: float) -> float:
        """s - (I + p)^(-1)(s); nonnegative and nondecreasing."""
        s = float(s)
        y = _invert_increasing(lambda z: z + self.p_fn(z), s)
        return max(s - y, 0.0)

    def _tabulated_q(self, s_ref: float):
        """Monotone log-log interpolant of q on [1e-13, 1.25] * s_ref."""
        cached = self._q_table
        if cached is not None and cached[0] * 1e-13 <= s_ref <= cached[0]:
            return cached[1]
        hi = 1.25 * s_ref
        grid = np.logspace(math.log10(hi) - 14.0, math.log10(hi), 700)
        qv = np.array([self.q_fn(s) for s in grid])
        qv = np.maximum(qv, 1e-320)
        interp = PchipInterpolator(np.log(grid), np.log(qv), extrapolate=False)
        lo, qlo = grid[0], qv[0]

        def q_fast(s):
            if s <= 0.0:
                return 0.0
            if s < lo:
                return qlo * (s / lo)   # linear continuation to zero
            return float(math.exp(interp(math.log(min(s, hi)))))

        self._q_table = (hi / 1.25, q_fast)
        return q_fast


@dataclass
class SRecord:
    """Dense-output solution of S' + q(S) = 0."""

    times: np.ndarray
    values: np.ndarray
    s0: float

    def __post_init__(self):
        self._interp = PchipInterpolator(self.times, self.values, extrapolate=False)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.where(t <= 0.0, self.s0, np.nan)
        inside = (t > 0.0) & (t <= self.times[-1])
        out = np.where(inside, self._interp(np.clip(t, 0.0, self.times[-1])), out)
        out = np.where(t > self.times[-1], self.values[-1], out)
        return float(out) if out.ndim == 0 else out


def build_envelope(law: DampingLaw, T_window: float, domain_measure: float,
                   C_lemma: float, h=None,
                   majorant_samples: int = 2000) -> DecayEnvelope:
    """Assemble the envelope; verifies the majorant inequality by sampling."""
    if C_lemma <= 0:
        raise GradthermError("C_lemma must be positive")
    if h is None:
        h = default_majorant(law)
    s = np.linspace(0.0, 1.0, majorant_samples)
    lhs = np.asarray(h(s ** 2 * law.E(s)), dtype=float)
    rhs = s ** 2 + law.E(s) ** 2 * s ** 2
    bad = lhs < rhs - 1e-12
    if np.any(bad):
        k = int(np.argmax(bad))
        raise InvalidMajorant(
            f"h(s^2 E(s)) < s^2 + E^2 s^2 at s={s[k]:.6g}: {lhs[k]:.6g} < {rhs[k]:.6g}")
    c1 = law.M_high + 1.0 / law.m_low
    c2 = max(c1, 1.0)
    Q = domain_measure * T_window
    return DecayEnvelope(law=law, h=h, T_window=T_window,
                         domain_measure=domain_measure, C_lemma=C_lemma,
                         Q_measure=Q, c_const=c2 / Q,
                         M_const=1.0 / (C_lemma * Q))


def integrate_S(envelope: DecayEnvelope, s0: float, horizon: float,
                method: str = "auto", max_steps: int = 200000) -> SRecord:
    """Integrate S' = -q(S), S(0) = s0, with adaptive step-doubling RK4.

    ``method="auto"`` evaluates q through a monotone tabulated
    interpolant (fast, relative accuracy ~1e-7); ``method="exact"`` uses
    the bisection-defined q at every stage.
    """
    if s0 < 0:
        raise GradthermError("s0 must be nonnegative")
    if s0 == 0.0:
        t = np.array([0.0, horizon if horizon > 0 else 1.0])
        return SRecord(times=t, values=np.zeros_like(t), s0=0.0)
    q = envelope._tabulated_q(s0) if method == "auto" else envelope.q_fn

    def rk4(sv, h):
        k1 = -q(sv)
        k2 = -q(max(sv + 0.5 * h * k1, 0.0))
        k3 = -q(max(sv + 0.5 * h * k2, 0.0))
        k4 = -q(max(sv + h * k3, 0.0))
        return max(sv + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4), 0.0)

    t, sv = 0.0, float(s0)
    dt = min(0.05, horizon / 64.0) if horizon > 0 else 0.05
    ts, vs = [0.0], [sv]
    rtol = 1e-9
    for _ in range(max_steps):
        if t >= horizon:
            break
        h = min(dt, horizon - t)
        full = rk4(sv, h)
        half = rk4(rk4(sv, 0.5 * h), 0.5 * h)
        err = abs(full - half)
        scale = rtol * max(abs(sv), 1e-300)
        if err > scale * 15.0 and h > 1e-12 * max(t, 1.0):
            dt = 0.5 * h
            continue
        t += h
        sv = min(half, vs[-1])
        ts.append(t)
        vs.append(sv)
        if err < scale:
            dt = min(dt * 1.7, max(horizon / 32.0, dt))
    else:
        raise GradthermError("step budget exhausted in envelope ODE")
    return SRecord(times=np.asarray(ts), values=np.asarray(vs), s0=float(s0))


@dataclass
class LemmaReport:
    holds: bool
    margins: np.ndarray
    first_violation: int | None


def check_sequence_lemma(envelope: DecayEnvelope, seq,
                         tol: float = 1e-9) -> LemmaReport:
    """Verify the comparison bound s_m <= S(m) for a premise sequence.

    Raises PremiseViolated (with the failing index) when the recursion
    premise s_{m+1} + p(s_{m+1}) <= s_m does not hold.
    """
    s = np.asarray(seq, dtype=float)
    if np.any(s < 0):
        raise GradthermError("sequence must be nonnegative")
    for m in range(len(s) - 1):
        lhs = s[m + 1] + envelope.p_fn(s[m + 1])
        if lhs > s[m] * (1.0 + 1e-12) + 1e-15:
            raise PremiseViolated(
                f"s[{m + 1}] + p(s[{m + 1}]) = {lhs:.6g} > s[{m}] = {s[m]:.6g}",
                index=m)
    S = integrate_S(envelope, float(s[0]), horizon=float(len(s)))
    bounds = np.array([S(float(m)) for m in range(len(s))])
    margins = bounds * (1.0 + tol) + 1e-300 - s
    holds = bool(np.all(margins >= 0.0))
    first = int(np.argmax(margins < 0.0)) if not holds else None
    return LemmaReport(holds=holds, margins=margins, first_violation=first)


@dataclass
class CLemmaEstimate:
    C: float
    n_runs: int
    n_windows: int
    K: float
    ratios: list = field(default_factory=list)


def _window_integral(t, y, t0, t1) -> float:
    """Integral of the piecewise-linear interpolant of (t, y) over [t0, t1]."""
    tt = np.concatenate([[t0], t[(t > t0) & (t < t1)], [t1]])
    yy = np.interp(tt, t, y)
    return float(np.trapezoid(yy, tt))


def estimate_C_lemma(runs, T_window: float, K: float | None = None) -> CLemmaEstimate:
    """Empirical lower bound for the energy/observation constant.

    Takes the max of E(end)/integral over every full observation window of
    every run; each window restarts a valid trajectory with no larger
    initial energy, so more windows only sharpen the estimate.
    """
    ratios = []
    n_windows = 0
    k_seen = 0.0
    runs = list(runs)
    for trace in runs:
        if trace.obs_integrand is None:
            raise GradthermError("trace has no observation column; "
                                 "was the run a relaxed-flux variant?")
        t = np.asarray(trace.times)
        e0 = float(trace.energy[0])
        k_seen = max(k_seen, e0)
        if K is not None and e0 > K * (1.0 + 1e-12):
            raise GradthermError(f"run starts above the energy class K={K}")
        m = 0
        while (m + 1) * T_window <= t[-1] + 1e-12:
            t0, t1 = m * T_window, min((m + 1) * T_window, t[-1])
            denom = _window_integral(t, trace.obs_integrand, t0, t1)
            if denom < 1e-14 * max(1.0, e0):
                raise DegenerateRun(
                    f"observation integral {denom:.3g} on window [{t0}, {t1}] "
                    "is numerically zero")
            num = float(np.interp(t1, t, trace.energy))
            ratios.append(num / denom)
            n_windows += 1
            m += 1
    if not ratios:
        raise GradthermError("no full observation window in any run")
    return CLemmaEstimate(C=float(max(ratios)), n_runs=len(runs),
                          n_windows=n_windows,
                          K=float(K if K is not None else k_seen),
                          ratios=ratios)


@dataclass
class EnvelopeReport:
    holds: bool
    times: np.ndarray
    margins: np.ndarray
    first_violation_t: float | None


def envelope_compare(trace, envelope: DecayEnvelope,
                     T_window: float | None = None) -> EnvelopeReport:
    """Check E(t) <= S(t/T - 1) at every sample beyond the first window.

    A violation is an outcome, not an error: it falsifies the constant
    the envelope was built with and prompts re-estimation.
    """
    T = envelope.T_window if T_window is None else T_window
    t = np.asarray(trace.times)
    e = np.asarray(trace.energy)
    sel = t > T
    if not np.any(sel):
        raise GradthermError("trace shorter than one observation window")
    e0 = float(e[0])
    if e0 == 0.0:
        return EnvelopeReport(holds=True, times=t[sel],
                              margins=np.zeros(int(np.count_nonzero(sel))),
                              first_violation_t=None)
    S = integrate_S(envelope, e0, horizon=float(t[-1] / T))
    bounds = np.array([S(tt / T - 1.0) for tt in t[sel]])
    margins = bounds - e[sel]
    bad = margins < -1e-9 * np.maximum(bounds, e0 * 1e-16)
    holds = not bool(np.any(bad))
    first = float(t[sel][np.argmax(bad)]) if not holds else None
    return EnvelopeReport(holds=holds, times=t[sel], margins=margins,
                          first_violation_t=first)
