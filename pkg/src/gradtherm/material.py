"""Material coefficients for strain-gradient thermoelasticity.

Holds the full anisotropic tensor set driving every PDE variant, the
isotropic instantiation used by the rectangular counterexample, and the
positivity checks that every solver relies on.

Tensor storage conventions (index order matches the contraction helpers
below; all tensors are symmetrized at construction):

* ``A4[i, J, K, j]``   second-order elasticity, pairs ``w_{i,J} u_{j,K}``
* ``C6[i, J, K, L, I, j]`` hyperelasticity, pairs ``w_{i,KJ} u_{j,IL}``
* ``M4[i, J, K, L]``   gradient coupling, pairs ``w_{i,KJ} tau_{,L}``
* ``K2[I, J]``         thermal stiffness, pairs ``tau_{,I} tau_{,J}``
* ``beta2[J, i]``      thermoelastic coupling, pairs ``theta w_{i,J}``
* ``m2[I, J]``         thermal dissipation, pairs ``theta_{,I} theta_{,J}``
* ``B4[i, J, K, j]``   Kelvin-Voigt damping, same pattern as A4
* ``E2[i, j]``         frictional damping, pairs ``w_i v_j``
"""

from __future__ import annotations

from dataclasses import dataclass, replace, fields
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import GradthermError, InvalidCoefficients, UnknownParameter

__all__ = [
    "IsotropicParams",
    "CoefficientSet",
    "PositivityReport",
    "derive_isotropic",
    "expand_isotropic",
    "check_positivity",
    "load_params",
    "parse_params",
    "elastic_form",
    "hyper_form",
    "coupling_form",
    "sym_pairs",
]

PSD_TOL = 1e-10


@dataclass(frozen=True)
class IsotropicParams:
    """Isotropic material constants plus derived hyperelastic combinations.

    ``b1..b5`` are populated by :func:`derive_isotropic`; the damping
    scalars ``fric`` (frictional matrix ``fric * I``), ``kv``
    (Kelvin-Voigt tensor ``kv * delta_ij delta_JK``) and the relaxation
    time ``kappa`` extend the set so that every PDE variant can be
    instantiated from one record.
    """

    rho: float = 1.0
    a: float = 1.0
    lam: float = 1.0
    mu: float = 1.0
    beta: float = 0.0
    delta: float = 0.0
    a1: float = 0.0
    a2: float = 0.0
    a3: float = 0.0
    a4: float = 0.0
    a5: float = 0.0
    m1: float = 0.0
    m2: float = 0.0
    fric: float = 0.0
    kv: float = 0.0
    kappa: float = 0.0
    b1: float | None = None
    b2: float | None = None
    b3: float | None = None
    b4: float | None = None
    b5: float | None = None


def derive_isotropic(params: IsotropicParams) -> IsotropicParams:
    """Populate b1..b5 from a1..a5. Idempotent."""
    a1, a2, a3, a4, a5 = params.a1, params.a2, params.a3, params.a4, params.a5
    return replace(
        params,
        b1=2.0 * (a1 + a2 + a3 + a4 + a5),
        b2=2.0 * (a1 + a2 + 2.0 * a3 + 2.0 * a4 + a5),
        b3=2.0 * (a3 + a4),
        b4=2.0 * (a1 + a2 + a5),
        b5=2.0 * (a1 + a2 + a5),
    )


def _sym_last_two(t: np.ndarray, ax1: int, ax2: int) -> np.ndarray:
    return 0.5 * (t + np.swapaxes(t, ax1, ax2))


def _symmetrize_A(A: np.ndarray) -> np.ndarray:
    # pairing symmetry (i,J) <-> (j,K)
    return 0.5 * (A + A.transpose(3, 2, 1, 0))


def _symmetrize_C(C: np.ndarray) -> np.ndarray:
    C = _sym_last_two(C, 1, 2)   # within test-derivative pair (J,K)
    C = _sym_last_two(C, 3, 4)   # within trial-derivative pair (L,I)
    return 0.5 * (C + C.transpose(5, 4, 3, 2, 1, 0))


def _symmetrize_M(M: np.ndarray) -> np.ndarray:
    return _sym_last_two(M, 1, 2)


@dataclass(frozen=True)
class CoefficientSet:
    """Full tensor set of one PDE variant, immutable after construction."""

    rho: float
    a: float
    A4: np.ndarray
    C6: np.ndarray
    M4: np.ndarray
    K2: np.ndarray
    beta2: np.ndarray
    m2: np.ndarray
    B4: np.ndarray
    E2: np.ndarray
    kappa: float
    dim: int

    @classmethod
    def make(cls, rho, a, A4, C6, M4, K2, beta2, m2, B4, E2, kappa, dim):
        """Build a set with all symmetry conventions enforced."""
        A4 = _symmetrize_A(np.asarray(A4, dtype=float))
        C6 = _symmetrize_C(np.asarray(C6, dtype=float))
        M4 = _symmetrize_M(np.asarray(M4, dtype=float))
        K2 = 0.5 * (np.asarray(K2, float) + np.asarray(K2, float).T)
        m2 = 0.5 * (np.asarray(m2, float) + np.asarray(m2, float).T)
        E2 = 0.5 * (np.asarray(E2, float) + np.asarray(E2, float).T)
        B4 = _symmetrize_A(np.asarray(B4, dtype=float))
        beta2 = np.asarray(beta2, dtype=float)
        for arr in (A4, C6, M4, K2, beta2, m2, B4, E2):
            arr.setflags(write=False)
        return cls(float(rho), float(a), A4, C6, M4, K2, beta2, m2, B4, E2,
                   float(kappa), int(dim))

    @classmethod
    def zero(cls, dim: int, rho: float = 1.0, a: float = 1.0):
        d = dim
        return cls.make(rho, a,
                        np.zeros((d,) * 4), np.zeros((d,) * 6), np.zeros((d,) * 4),
                        np.zeros((d, d)), np.zeros((d, d)), np.zeros((d, d)),
                        np.zeros((d,) * 4), np.zeros((d, d)), 0.0, d)


def _hyper_tensor(a1, a2, a3, a4, a5, d) -> np.ndarray:
    """Hyperstress modulus in (deriv, deriv, field) x (deriv, deriv, field) order."""
    I = np.eye(d)
    T = np.zeros((d,) * 6)
    for P in range(d):
        for Q in range(d):
            for k in range(d):
                for R in range(d):
                    for S in range(d):
                        for j in range(d):
                            T[P, Q, k, R, S, j] = (
                                0.5 * a1 * (I[Q, k] * I[R, S] * I[j, P]
                                            + I[P, k] * I[R, S] * I[j, Q])
                                + a1 * I[P, Q] * I[R, k] * I[S, j]
                                + a2 * (I[Q, k] * I[P, R] * I[S, j]
                                        + I[P, k] * I[Q, R] * I[S, j])
                                + 2.0 * a3 * I[P, Q] * I[R, S] * I[k, j]
                                + 2.0 * a4 * I[P, R] * I[Q, S] * I[k, j]
                                + a5 * (I[R, k] * I[S, Q] * I[j, P]
                                        + I[R, k] * I[S, P] * I[j, Q])
                            )
    return T


def expand_isotropic(params: IsotropicParams, dim: int = 2) -> CoefficientSet:
    """Instantiate the full tensor set of the isotropic material.

    The expansion is fixed by requiring that the assembled PDE right-hand
    sides reproduce the reduced isotropic system coefficient by
    coefficient (cross-checked against the per-mode matrices in
    :mod:`gradtherm.modes`).
    """
    if params.b1 is None:
        raise GradthermError("derive_isotropic must be applied before expansion")
    p = derive_isotropic(params)
    for name in ("b1", "b2", "b3", "b4", "b5"):
        if abs(getattr(p, name) - getattr(params, name)) > 1e-12:
            raise GradthermError(f"stale derived constant {name}")
    d = dim
    if d not in (1, 2):
        raise InvalidCoefficients(f"dim must be 1 or 2, got {d}")
    I = np.eye(d)
    # stress(J,i) = lam d_Ji div u + mu (u_{i,J} + u_{J,i})
    A4 = (params.lam * np.einsum("Ji,Kj->iJKj", I, I)
          + params.mu * (np.einsum("ij,JK->iJKj", I, I)
                         + np.einsum("Ki,Jj->iJKj", I, I)))
    T = _hyper_tensor(params.a1, params.a2, params.a3, params.a4, params.a5, d)
    C6 = T.transpose(2, 1, 0, 4, 3, 5)
    # hyperstress thermal part: m1 d_PQ tau_{,k} + m2 (d_Qk tau_{,P} + d_Pk tau_{,Q})
    Msig = np.zeros((d,) * 4)
    for P in range(d):
        for Q in range(d):
            for k in range(d):
                for L in range(d):
                    Msig[P, Q, k, L] = (params.m1 * I[P, Q] * I[k, L]
                                        + params.m2 * (I[Q, k] * I[P, L]
                                                       + I[P, k] * I[Q, L]))
    M4 = Msig.transpose(2, 1, 0, 3)
    K2 = np.eye(d)
    beta2 = params.beta * np.eye(d)
    m2t = params.delta * np.eye(d)
    B4 = params.kv * np.einsum("ij,JK->iJKj", I, I)
    E2 = params.fric * np.eye(d)
    return CoefficientSet.make(params.rho, params.a, A4, C6, M4, K2, beta2,
                               m2t, B4, E2, params.kappa, d)


# --- pointwise quadratic/bilinear forms -----------------------------------

def elastic_form(A4: np.ndarray, Gw: np.ndarray, Gu: np.ndarray) -> float:
    """A-form on gradients: Gw[i, J] = w_{i,J}."""
    return float(np.einsum("abcd,ab,dc->", A4, Gw, Gu))


def hyper_form(C6: np.ndarray, Hw: np.ndarray, Hu: np.ndarray) -> float:
    """C-form on Hessian stacks: Hw[i, J, K] = w_{i,JK}."""
    return float(np.einsum("abcdef,acb,fed->", C6, Hw, Hu))


def coupling_form(M4: np.ndarray, Hw: np.ndarray, Gt: np.ndarray) -> float:
    """M-form pairing a Hessian stack with a thermal gradient."""
    return float(np.einsum("abcd,acb,d->", M4, Hw, Gt))


def sym_pairs(d: int):
    """Ordered index pairs (P, Q), P <= Q, with contraction multiplicities."""
    pairs = [(P, Q) for P in range(d) for Q in range(P, d)]
    mult = [1.0 if P == Q else 2.0 for (P, Q) in pairs]
    return pairs, mult


@dataclass(frozen=True)
class PositivityReport:
    """Positivity margins of one coefficient set.

    ``alpha_joint`` is the generalized minimum eigenvalue of the combined
    (hyperelastic, coupling, thermal) quadratic form against the natural
    norm on (symmetric second gradients, thermal gradients); it realizes
    the joint positive-definiteness condition as one matrix.
    ``alpha_elastic`` is the margin of the second-order form on the full
    gradient space; ``alpha_elastic_sym`` restricts to symmetric
    gradients (the full-space margin vanishes for isotropic 2D tensors
    because rigid rotations carry no elastic energy).
    """

    alpha_joint: float
    alpha_elastic: float
    alpha_elastic_sym: float
    b4_margin: float
    m2_margin: float
    e2_margin: float
    rho_ok: bool
    a_ok: bool
    tol: float = PSD_TOL

    @property
    def joint_pd(self) -> bool:
        return self.alpha_joint > self.tol

    @property
    def damping_psd(self) -> bool:
        return self.b4_margin >= -self.tol and self.m2_margin >= -self.tol

    @property
    def e2_pd(self) -> bool:
        return self.e2_margin > self.tol


def _gradient_form_matrix(A4: np.ndarray) -> np.ndarray:
    d = A4.shape[0]
    Q = A4.transpose(0, 1, 3, 2).reshape(d * d, d * d)
    return 0.5 * (Q + Q.T)


def check_positivity(coeffs: CoefficientSet) -> PositivityReport:
    """Compute all positivity margins of a coefficient set.

    Violations are reported, never raised; the margins are exact
    eigenvalues of small dense matrices (d <= 2 keeps every index space
    at most 8-dimensional).
    """
    d = coeffs.dim
    pairs, mult = sym_pairs(d)
    npair = len(pairs)
    nk = npair * d          # symmetric Hessian coordinates, field-major blocks
    nt = d                  # thermal gradient coordinates

    def basis_hess(a):
        pair_idx, field = a % npair, a // npair
        P, Q = pairs[pair_idx]
        H = np.zeros((d, d, d))
        H[field, P, Q] = 1.0
        H[field, Q, P] = 1.0
        return H

    n = nk + nt
    Q = np.zeros((n, n))
    N = np.zeros((n, n))
    for a in range(nk):
        Ha = basis_hess(a)
        N[a, a] = mult[a % npair]
        for b in range(a, nk):
            Hb = basis_hess(b)
            Q[a, b] = Q[b, a] = hyper_form(coeffs.C6, Ha, Hb)
        for L in range(d):
            g = np.zeros(d)
            g[L] = 1.0
            val = coupling_form(coeffs.M4, Ha, g)
            Q[a, nk + L] = Q[nk + L, a] = val
    Q[nk:, nk:] = 0.5 * (coeffs.K2 + coeffs.K2.T)
    N[nk:, nk:] = np.eye(d)
    alpha_joint = float(scipy.linalg.eigh(Q, N, eigvals_only=True)[0])

    QA = _gradient_form_matrix(coeffs.A4)
    alpha_elastic = float(np.linalg.eigvalsh(QA)[0])
    # restriction to symmetric gradients
    emb = np.zeros((d * d, npair))
    for col, (P, Qd) in enumerate(pairs):
        emb[P * d + Qd, col] += 1.0
        emb[Qd * d + P, col] += 1.0 if P != Qd else 0.0
    QAs = emb.T @ QA @ emb
    NAs = emb.T @ emb
    alpha_elastic_sym = float(scipy.linalg.eigh(QAs, NAs, eigvals_only=True)[0])

    b4_margin = float(np.linalg.eigvalsh(_gradient_form_matrix(coeffs.B4))[0])
    m2_margin = float(np.linalg.eigvalsh(0.5 * (coeffs.m2 + coeffs.m2.T))[0])
    e2_margin = float(np.linalg.eigvalsh(0.5 * (coeffs.E2 + coeffs.E2.T))[0])

    return PositivityReport(
        alpha_joint=alpha_joint,
        alpha_elastic=alpha_elastic,
        alpha_elastic_sym=alpha_elastic_sym,
        b4_margin=b4_margin,
        m2_margin=m2_margin,
        e2_margin=e2_margin,
        rho_ok=coeffs.rho > 0.0,
        a_ok=coeffs.a > 0.0,
    )


# --- parameter files -------------------------------------------------------

_PARAM_KEYS = {f.name for f in fields(IsotropicParams)} - {"b1", "b2", "b3", "b4", "b5"}
_ALIASES = {"lambda": "lam"}


def parse_params(text: str) -> IsotropicParams:
    """Parse `key = value` lines; '#' starts a comment; unknown keys rejected."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UnknownParameter(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = _ALIASES.get(key.strip(), key.strip())
        if key not in _PARAM_KEYS:
            raise UnknownParameter(f"line {lineno}: unknown parameter {key!r}")
        if key in values:
            raise UnknownParameter(f"line {lineno}: duplicate parameter {key!r}")
        try:
            values[key] = float(val.strip())
        except ValueError as exc:
            raise UnknownParameter(f"line {lineno}: bad value for {key!r}") from exc
    return derive_isotropic(IsotropicParams(**values))


def load_params(path: str | Path) -> IsotropicParams:
    path = Path(path)
    return parse_params(path.read_text())
