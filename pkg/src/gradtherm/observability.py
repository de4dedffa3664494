"""Finite-dimensional checks relating stabilization to exact observability.

Works on pairs (A, B) with A skew-symmetric and B symmetric positive
semidefinite in plain Euclidean coordinates; discretized PDE variants are
brought to this form through the Cholesky factor of their energy Gram
matrix. All trajectory integrals use the implicit midpoint rule, whose
discrete energy identities reproduce the continuous inequality chain
exactly, so the verification is not polluted by time-stepping error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ._threads import single_thread_blas
from .discretization import SemiDiscreteSystem
from .errors import (GradthermError, InvalidCoefficients,
                     NotExponentiallyStable, NotSkewInEnergyCoords,
                     SizeCapExceeded)

__all__ = ["AbstractPair", "PairTrace", "ObservabilityEstimate",
           "TheoremReport", "simulate_pair", "observability_constant",
           "verify_theorem_A", "from_discretization", "random_stable_pair"]


@dataclass(frozen=True)
class AbstractPair:
    """Conservative generator and observation operator on R^N."""

    A: np.ndarray
    B: np.ndarray
    N: int

    @classmethod
    def make(cls, A, B, tol: float = 1e-12) -> "AbstractPair":
        A = np.asarray(A, dtype=float)
        B = np.asarray(B, dtype=float)
        n = A.shape[0]
        if A.shape != (n, n) or B.shape != (n, n):
            raise GradthermError("pair matrices must be square and same size")
        scale = max(1.0, float(np.max(np.abs(A))))
        if np.max(np.abs(A + A.T)) > tol * scale:
            raise NotSkewInEnergyCoords(
                f"A skewness residual {np.max(np.abs(A + A.T)):.3g}")
        bscale = max(1.0, float(np.max(np.abs(B))))
        if np.max(np.abs(B - B.T)) > tol * bscale:
            raise GradthermError("B must be symmetric")
        B = 0.5 * (B + B.T)
        if float(np.min(np.linalg.eigvalsh(B))) < -1e-12 * bscale:
            raise GradthermError("B must be positive semidefinite")
        return cls(A=0.5 * (A - A.T), B=B, N=n)


def _energies(X: np.ndarray) -> np.ndarray:
    return 0.5 * np.sum(X * X, axis=0)


@dataclass
class PairTrace:
    """Midpoint trajectories of the damped and free systems from one batch
    of initial states (columns), with running observation integrals."""

    times: np.ndarray
    E_U: np.ndarray          # (steps+1, k)
    E_phi: np.ndarray
    int_BU: np.ndarray       # cumulative midpoint quadrature, same shape
    int_Bphi: np.ndarray
    int_Bpsi: np.ndarray
    U_final: np.ndarray
    phi_final: np.ndarray


def simulate_pair(pair: AbstractPair, U0: np.ndarray, T: float,
                  dt: float) -> PairTrace:
    """Integrate U' = -(A+B) U and phi' = -A phi from the same data."""
    U = np.atleast_2d(np.asarray(U0, dtype=float).T).T.copy()
    if U.shape[0] != pair.N:
        raise GradthermError("initial state dimension mismatch")
    steps = max(1, int(round(T / dt)))
    dt = T / steps
    I = np.eye(pair.N)
    K_damped = pair.A + pair.B
    lu_d = scipy.linalg.lu_factor(I + 0.5 * dt * K_damped)
    lu_f = scipy.linalg.lu_factor(I + 0.5 * dt * pair.A)
    Md = I - 0.5 * dt * K_damped
    Mf = I - 0.5 * dt * pair.A
    phi = U.copy()
    k = U.shape[1]
    E_U = np.empty((steps + 1, k))
    E_phi = np.empty((steps + 1, k))
    iBU = np.zeros((steps + 1, k))
    iBphi = np.zeros((steps + 1, k))
    iBpsi = np.zeros((steps + 1, k))
    E_U[0], E_phi[0] = _energies(U), _energies(phi)

    def bq(X):
        return np.sum(X * (pair.B @ X), axis=0)

    with single_thread_blas():
        for s in range(1, steps + 1):
            U_new = scipy.linalg.lu_solve(lu_d, Md @ U)
            phi_new = scipy.linalg.lu_solve(lu_f, Mf @ phi)
            Um = 0.5 * (U + U_new)
            pm = 0.5 * (phi + phi_new)
            iBU[s] = iBU[s - 1] + dt * bq(Um)
            iBphi[s] = iBphi[s - 1] + dt * bq(pm)
            iBpsi[s] = iBpsi[s - 1] + dt * bq(pm - Um)
            U, phi = U_new, phi_new
            E_U[s], E_phi[s] = _energies(U), _energies(phi)

    return PairTrace(times=dt * np.arange(steps + 1), E_U=E_U, E_phi=E_phi,
                     int_BU=iBU, int_Bphi=iBphi, int_Bpsi=iBpsi,
                     U_final=U, phi_final=phi)


def _free_gramian(pair: AbstractPair, T: float) -> np.ndarray:
    """Exact observation Gramian of the free group over [0, T]."""
    lam, U = np.linalg.eig(pair.A)
    Bt = U.conj().T @ pair.B @ U
    diff = lam[:, None] - lam[None, :]
    W = np.where(np.abs(diff) < 1e-12, T,
                 (np.exp(diff * T) - 1.0) / np.where(diff == 0, 1.0, diff))
    G = U @ (Bt * W) @ U.conj().T
    G = np.real(G)
    return 0.5 * (G + G.T)


@dataclass
class ObservabilityEstimate:
    C: float
    observable: bool
    T: float
    trials: int
    worst_integral: float


def observability_constant(pair: AbstractPair, T: float, trials: int,
                           dt: float | None = None,
                           seed: int = 0) -> ObservabilityEstimate:
    """Estimate C with E_phi(0) <= C * int <B phi, phi> over [0, T].

    Maximizes the ratio over random unit-energy states plus the worst
    eigenvector of the exact free-group Gramian; huge or infinite ratios
    are reported as non-observable at this T rather than raised.
    """
    if trials < 1:
        raise GradthermError("need at least one trial")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((pair.N, trials))
    G = _free_gramian(pair, T)
    w, V = np.linalg.eigh(G)
    X = np.column_stack([X, V[:, 0]])
    X /= np.sqrt(_energies(X))[None, :]          # unit energy
    dt = T / 800.0 if dt is None else dt
    tr = simulate_pair(pair, X, T, dt)
    integrals = tr.int_Bphi[-1]
    e0 = tr.E_phi[0]
    floor = 1e-12 * float(np.max(e0))
    if np.any(integrals <= floor):
        return ObservabilityEstimate(C=math.inf, observable=False, T=T,
                                     trials=trials,
                                     worst_integral=float(np.min(integrals)))
    C = float(np.max(e0 / integrals))
    return ObservabilityEstimate(C=C, observable=True, T=T, trials=trials,
                                 worst_integral=float(np.min(integrals)))


@dataclass
class TheoremReport:
    """Margins of the three-inequality chain for every trial state."""

    T0: float
    T_used: float
    abscissa: float
    half_energy_ok: np.ndarray
    obs_lower_margin: np.ndarray     # int <BU,U> - E_U(0)/2
    psi_phi_margin: np.ndarray       # int <Bphi,phi> - int <Bpsi,psi>
    final_margin: np.ndarray         # 8 int <Bphi,phi> - E_phi(0)/2

    @property
    def all_hold(self) -> bool:
        tol = 1e-9
        return bool(np.all(self.half_energy_ok)
                    and np.all(self.obs_lower_margin >= -tol)
                    and np.all(self.psi_phi_margin >= -tol)
                    and np.all(self.final_margin >= -tol))


def verify_theorem_A(pair: AbstractPair, trials: int = 100, seed: int = 0,
                     steps_per_unit: int = 400) -> TheoremReport:
    """Verify the stabilization-to-observability inequality chain.

    Finds the half-energy time T0 of the damped system on the trial set
    (bisection on the sampled worst-trial energy curve), then checks, for
    each trial: the observation lower bound, the difference-solution
    comparison, and the final observability bound with factor 8.
    """
    eigs = np.linalg.eigvals(-(pair.A + pair.B))
    abscissa = float(np.max(eigs.real))
    if abscissa >= -1e-12:
        raise NotExponentiallyStable(
            f"damped generator abscissa {abscissa:.3g} is not negative")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((pair.N, trials))
    X /= np.sqrt(_energies(X))[None, :]

    T_hi = 1.0
    for _ in range(60):
        dt = 1.0 / steps_per_unit
        tr = simulate_pair(pair, X, T_hi, dt)
        ratios = tr.E_U / np.maximum(tr.E_U[0][None, :], 1e-300)
        worst = np.max(ratios, axis=1)
        if worst[-1] <= 0.5:
            break
        T_hi *= 2.0
    else:
        raise NotExponentiallyStable("half-energy time not reached by T=1e18")
    idx = int(np.searchsorted(-worst, -0.5))     # worst is nonincreasing
    T0 = float(tr.times[min(idx, len(worst) - 1)])
    T_used = T0 * 1.02
    tr = simulate_pair(pair, X, T_used, T_used / max(steps_per_unit, 100))

    e_u0 = tr.E_U[0]
    half_ok = tr.E_U[-1] <= 0.5 * e_u0 * (1 + 1e-9)
    return TheoremReport(
        T0=T0, T_used=T_used, abscissa=abscissa,
        half_energy_ok=half_ok,
        obs_lower_margin=tr.int_BU[-1] - 0.5 * e_u0,
        psi_phi_margin=tr.int_Bphi[-1] - tr.int_Bpsi[-1],
        final_margin=8.0 * tr.int_Bphi[-1] - 0.5 * tr.E_phi[0],
    )


def from_discretization(system: SemiDiscreteSystem,
                        cap: int = 2000) -> AbstractPair:
    """Energy-coordinate pair of a linearly damped semi-discrete system.

    Maps x -> R x with the Cholesky factor R of the energy Gram matrix, so
    the conservative block becomes skew-symmetric and the damping block
    symmetric PSD in plain coordinates.
    """
    if system.nonlinear:
        raise InvalidCoefficients("energy-coordinate bridge needs linear damping")
    if system.n_state > cap:
        raise SizeCapExceeded(f"{system.n_state} unknowns exceed cap {cap}")
    M = system.M_energy.toarray()
    try:
        R = scipy.linalg.cholesky(M, lower=False)
    except scipy.linalg.LinAlgError as exc:
        raise InvalidCoefficients(f"energy Gram not positive definite: {exc}") from exc
    Rinv = scipy.linalg.solve_triangular(R, np.eye(system.n_state), lower=False)
    L = system.L_mat.toarray()
    D = system.D_mat.toarray()
    A = -(R @ L @ Rinv)
    B = R @ D @ Rinv
    scale = max(1.0, float(np.max(np.abs(A))))
    if np.max(np.abs(A + A.T)) > 1e-10 * scale:
        raise NotSkewInEnergyCoords(
            f"conservative block not skew in energy coordinates: "
            f"residual {np.max(np.abs(A + A.T)):.3g}")
    bscale = max(1.0, float(np.max(np.abs(B))))
    B = 0.5 * (B + B.T)
    if float(np.min(np.linalg.eigvalsh(B))) < -1e-10 * bscale:
        raise InvalidCoefficients("damping block not PSD in energy coordinates")
    # the triple product leaves rounding-level entries that fill the LU
    # factors with denormal-range values and stall the dense solves
    A[np.abs(A) < 1e-15 * scale] = 0.0
    B[np.abs(B) < 1e-15 * bscale] = 0.0
    return AbstractPair(A=0.5 * (A - A.T), B=0.5 * (B + B.T), N=system.n_state)


def random_stable_pair(N: int, seed: int = 0,
                       rank_deficient: bool = False) -> AbstractPair:
    """Random skew/PSD pair whose damped generator is exponentially stable."""
    rng = np.random.default_rng(seed)
    for attempt in range(50):
        Q = rng.standard_normal((N, N))
        A = 0.5 * (Q - Q.T)
        r = max(1, N - rng.integers(0, max(N // 3, 1))) if rank_deficient else N
        V = rng.standard_normal((N, r))
        B = V @ V.T / N
        if not rank_deficient:
            B = B + 0.05 * np.eye(N)
        pair = AbstractPair.make(A, B)
        abscissa = float(np.max(np.linalg.eigvals(-(A + B)).real))
        if abscissa < -1e-8:
            return pair
    raise GradthermError("failed to draw a stable pair")
