"""Finite-difference semi-discretization on the interval and the square.

Every bilinear form of the continuum energy is assembled as D^T W D with
a difference operator D and a quadrature weight W, and the generator rows
are written in terms of those same matrices. Skewness of the conservative
block in the weighted energy inner product and positive semidefiniteness
of the damping block therefore hold to machine precision by construction,
which is what the energy identities and the decay studies rely on.

Discrete operators
------------------
* first-derivative forms (elasticity A, Kelvin-Voigt B, coupling beta):
  gradients of the bilinear interpolant at cell centroids, midpoint
  quadrature (in 1D these are interval forward differences);
* thermal gradient forms (K, m) and the relaxed flux: staggered forward
  differences, one grid per direction, so diagonal conductivities give
  the classical 5-point stencil (off-diagonal K/m are rejected in 2D);
* second-derivative forms (hyperelasticity C, coupling M): centered
  second differences on the extended node set with ghost values from the
  clamped conditions u = 0, du/dn = 0 (even reflection through the
  boundary node); trapezoidal weights, boundary rows at h/2. Composing
  them yields the classical 13-point clamped-plate pattern in 2D.

State layout (component-major): [u_1..u_d | v_1..v_d | tau | theta | q].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidCoefficients, SizeCapExceeded, SolveFailure
from .material import CoefficientSet, check_positivity, PSD_TOL

__all__ = ["Grid", "StateVector", "SemiDiscreteSystem", "assemble",
           "solve_static", "spectral_abscissa", "VARIANTS"]

VARIANTS = ("kelvin_voigt", "frictional", "cattaneo", "undamped")


@dataclass(frozen=True)
class Grid:
    """Uniform interior grid on (0, pi)^dim with nx (x ny) interior nodes."""

    dim: int
    nx: int
    ny: int = 0

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise InvalidCoefficients("dim must be 1 or 2")
        if self.nx < 3 or (self.dim == 2 and self.ny < 3):
            raise InvalidCoefficients("need at least 3 interior nodes per direction")

    @property
    def hx(self) -> float:
        return math.pi / (self.nx + 1)

    @property
    def hy(self) -> float:
        return math.pi / (self.ny + 1) if self.dim == 2 else 0.0

    @property
    def n_nodes(self) -> int:
        return self.nx * self.ny if self.dim == 2 else self.nx

    def nodes(self):
        """Interior node coordinates; (x,) in 1D, meshgrid (X, Y) in 2D."""
        x = self.hx * np.arange(1, self.nx + 1)
        if self.dim == 1:
            return (x,)
        y = self.hy * np.arange(1, self.ny + 1)
        return np.meshgrid(x, y, indexing="ij")

    @classmethod
    def default_1d(cls) -> "Grid":
        return cls(1, 200)

    @classmethod
    def default_2d(cls) -> "Grid":
        return cls(2, 48, 48)

    @classmethod
    def from_spec(cls, spec: str) -> "Grid":
        spec = spec.strip().lower()
        if "x" in spec:
            nx, ny = spec.split("x")
            return cls(2, int(nx), int(ny))
        return cls(1, int(spec))


# --- 1D building blocks -----------------------------------------------------

def _fwd_diff(n: int, h: float) -> sp.csr_matrix:
    """Forward differences on the n+1 intervals of a Dirichlet field."""
    rows, cols, vals = [], [], []
    for k in range(n + 1):
        if k < n:
            rows.append(k); cols.append(k); vals.append(1.0 / h)
        if k >= 1:
            rows.append(k); cols.append(k - 1); vals.append(-1.0 / h)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n + 1, n))


def _clamped_second(n: int, h: float) -> sp.csr_matrix:
    """Second differences on the extended nodes 0..n+1 of a clamped field."""
    rows, cols, vals = [], [], []
    rows += [0]; cols += [0]; vals += [2.0 / h ** 2]
    for j in range(1, n + 1):
        if j - 2 >= 0:
            rows.append(j); cols.append(j - 2); vals.append(1.0 / h ** 2)
        rows.append(j); cols.append(j - 1); vals.append(-2.0 / h ** 2)
        if j <= n - 1:
            rows.append(j); cols.append(j); vals.append(1.0 / h ** 2)
    rows += [n + 1]; cols += [n - 1]; vals += [2.0 / h ** 2]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n + 2, n))


def _centered_first(n: int, h: float, one_sided_boundary: bool) -> sp.csr_matrix:
    """Centered first derivative of a Dirichlet field on extended nodes.

    Boundary rows are second-order one-sided (thermal gradients) or zero
    (tangential derivatives of clamped fields).
    """
    rows, cols, vals = [], [], []
    if one_sided_boundary:
        rows += [0, 0]; cols += [0, 1]; vals += [4.0 / (2 * h), -1.0 / (2 * h)]
        rows += [n + 1, n + 1]; cols += [n - 1, n - 2]
        vals += [-4.0 / (2 * h), 1.0 / (2 * h)]
    for j in range(1, n + 1):
        if j <= n - 1:
            rows.append(j); cols.append(j); vals.append(1.0 / (2 * h))
        if j - 2 >= 0:
            rows.append(j); cols.append(j - 2); vals.append(-1.0 / (2 * h))
    return sp.csr_matrix((vals, (rows, cols)), shape=(n + 2, n))


def _interior_to_extended(n: int) -> sp.csr_matrix:
    return sp.vstack([sp.csr_matrix((1, n)), sp.eye(n, format="csr"),
                      sp.csr_matrix((1, n))]).tocsr()


def _corner_average(n: int) -> sp.csr_matrix:
    """Average a Dirichlet field onto the n+1 interval/cell midlines."""
    rows, cols, vals = [], [], []
    for k in range(n + 1):
        if k >= 1:
            rows.append(k); cols.append(k - 1); vals.append(0.5)
        if k < n:
            rows.append(k); cols.append(k); vals.append(0.5)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n + 1, n))


def _trap_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n + 2, h)
    w[0] = w[-1] = h / 2.0
    return w


def _wdiag(w: np.ndarray) -> sp.csr_matrix:
    return sp.diags(w).tocsr()


# --- operator bundles -------------------------------------------------------

@dataclass
class _Ops:
    grad: list            # cell-centroid gradient per direction, scalar field
    w_cell: np.ndarray
    hess: dict            # (P,Q) -> second-derivative op on extended nodes
    w_ext: np.ndarray
    dgrad: list           # node-centered gradient per direction (extended nodes)
    stag: list            # staggered forward difference per direction
    w_stag: list
    avg: sp.csr_matrix    # node field averaged to cells
    w_node: np.ndarray


def _build_ops(grid: Grid) -> _Ops:
    if grid.dim == 1:
        n, h = grid.nx, grid.hx
        G = _fwd_diff(n, h)
        H = _clamped_second(n, h)
        Dc = _centered_first(n, h, one_sided_boundary=True)
        return _Ops(
            grad=[G],
            w_cell=np.full(n + 1, h),
            hess={(0, 0): H},
            w_ext=_trap_weights(n, h),
            dgrad=[Dc],
            stag=[G],
            w_stag=[np.full(n + 1, h)],
            avg=_corner_average(n, ),
            w_node=np.full(n, h),
        )
    nx, ny, hx, hy = grid.nx, grid.ny, grid.hx, grid.hy
    Gx1, Gy1 = _fwd_diff(nx, hx), _fwd_diff(ny, hy)
    Ax1, Ay1 = _corner_average(nx), _corner_average(ny)
    Hx1, Hy1 = _clamped_second(nx, hx), _clamped_second(ny, hy)
    Dx1 = _centered_first(nx, hx, one_sided_boundary=True)
    Dy1 = _centered_first(ny, hy, one_sided_boundary=True)
    Tx1 = _centered_first(nx, hx, one_sided_boundary=False)
    Ty1 = _centered_first(ny, hy, one_sided_boundary=False)
    Px, Py = _interior_to_extended(nx), _interior_to_extended(ny)
    Ix, Iy = sp.eye(nx, format="csr"), sp.eye(ny, format="csr")

    kron = lambda A, B: sp.kron(A, B, format="csr")
    wx, wy = _trap_weights(nx, hx), _trap_weights(ny, hy)
    return _Ops(
        grad=[kron(Gx1, Ay1), kron(Ax1, Gy1)],
        w_cell=np.full((nx + 1) * (ny + 1), hx * hy),
        hess={(0, 0): kron(Hx1, Py), (1, 1): kron(Px, Hy1),
              (0, 1): kron(Tx1, Ty1)},
        w_ext=np.kron(wx, wy),
        dgrad=[kron(Dx1, Py), kron(Px, Dy1)],
        stag=[kron(Gx1, Iy), kron(Ix, Gy1)],
        w_stag=[np.full((nx + 1) * ny, hx * hy), np.full(nx * (ny + 1), hx * hy)],
        avg=kron(Ax1, Ay1),
        w_node=np.full(nx * ny, hx * hy),
    )


def _hess_op(ops: _Ops, P: int, Q: int) -> sp.csr_matrix:
    return ops.hess[(min(P, Q), max(P, Q))]


def _block_form_grad(coef4: np.ndarray, ops: _Ops, d: int) -> sp.csr_matrix:
    """sum coef4[i,J,K,j] grad_J(w_i) grad_K(u_j) over centroid quadrature."""
    Wc = _wdiag(ops.w_cell)
    prod = [[(ops.grad[J].T @ Wc @ ops.grad[K]).tocsr() for K in range(d)]
            for J in range(d)]
    blocks = [[None] * d for _ in range(d)]
    for i in range(d):
        for j in range(d):
            acc = None
            for J in range(d):
                for K in range(d):
                    c = coef4[i, J, K, j]
                    if c:
                        acc = c * prod[J][K] if acc is None else acc + c * prod[J][K]
            blocks[i][j] = acc if acc is not None else sp.csr_matrix(prod[0][0].shape)
    return sp.bmat(blocks, format="csr")


def _block_form_hess(C6: np.ndarray, ops: _Ops, d: int) -> sp.csr_matrix:
    We = _wdiag(ops.w_ext)
    keys = [(P, Q) for P in range(d) for Q in range(P, d)]
    prod = {}
    for a in keys:
        Ha = _hess_op(ops, *a)
        for b in keys:
            prod[(a, b)] = (Ha.T @ We @ _hess_op(ops, *b)).tocsr()
    N = ops.w_node.size
    blocks = [[sp.csr_matrix((N, N)) for _ in range(d)] for _ in range(d)]
    for i in range(d):
        for j in range(d):
            acc = None
            for J in range(d):
                for K in range(d):
                    a = (min(J, K), max(J, K))
                    for L in range(d):
                        for I in range(d):
                            c = C6[i, J, K, L, I, j]
                            if c:
                                b = (min(L, I), max(L, I))
                                term = c * prod[(a, b)]
                                acc = term if acc is None else acc + term
            if acc is not None:
                blocks[i][j] = acc
    return sp.bmat(blocks, format="csr")


def _block_form_coupling(M4: np.ndarray, ops: _Ops, d: int) -> sp.csr_matrix:
    We = _wdiag(ops.w_ext)
    keys = [(P, Q) for P in range(d) for Q in range(P, d)]
    prod = {(a, L): (_hess_op(ops, *a).T @ We @ ops.dgrad[L]).tocsr()
            for a in keys for L in range(d)}
    N = ops.w_node.size
    blocks = []
    for i in range(d):
        acc = None
        for J in range(d):
            for K in range(d):
                a = (min(J, K), max(J, K))
                for L in range(d):
                    c = M4[i, J, K, L]
                    if c:
                        term = c * prod[(a, L)]
                        acc = term if acc is None else acc + term
        blocks.append([acc if acc is not None else sp.csr_matrix((N, N))])
    return sp.bmat(blocks, format="csr")


def _staggered_form(coef2: np.ndarray, ops: _Ops, d: int, what: str) -> sp.csr_matrix:
    if d == 2 and abs(coef2[0, 1]) + abs(coef2[1, 0]) > 0:
        raise InvalidCoefficients(
            f"2D solver requires diagonal {what} (staggered gradients); "
            f"got off-diagonal entries")
    acc = None
    for I in range(d):
        c = coef2[I, I]
        term = c * (ops.stag[I].T @ _wdiag(ops.w_stag[I]) @ ops.stag[I])
        acc = term if acc is None else acc + term
    return acc.tocsr()


def _beta_matrix(beta2: np.ndarray, ops: _Ops, d: int) -> sp.csr_matrix:
    Wc = _wdiag(ops.w_cell)
    blocks = []
    for i in range(d):
        acc = None
        for J in range(d):
            c = beta2[J, i]
            if c:
                term = c * (ops.grad[J].T @ Wc @ ops.avg)
                acc = term if acc is None else acc + term
        N = ops.w_node.size
        blocks.append([acc if acc is not None else sp.csr_matrix((N, N))])
    return sp.bmat(blocks, format="csr")


# --- the semi-discrete system ----------------------------------------------

class StateVector:
    """Flat state with named views; layout [u | v | tau | theta | q]."""

    def __init__(self, system: "SemiDiscreteSystem", data: np.ndarray | None = None):
        self.system = system
        if data is None:
            data = np.zeros(system.n_state)
        data = np.asarray(data, dtype=float)
        if data.shape != (system.n_state,):
            raise InvalidCoefficients(
                f"state length {data.size} != {system.n_state}")
        self.data = data

    def _view(self, name):
        sl = self.system.slices[name]
        return self.data[sl]

    @property
    def u(self):
        return self._view("u").reshape(self.system.d, self.system.n_nodes)

    @property
    def v(self):
        return self._view("v").reshape(self.system.d, self.system.n_nodes)

    @property
    def tau(self):
        return self._view("tau")

    @property
    def theta(self):
        return self._view("theta")

    @property
    def q(self):
        return self._view("q") if self.system.has_flux else None

    def copy(self) -> "StateVector":
        return StateVector(self.system, self.data.copy())


def _as_array(state) -> np.ndarray:
    return state.data if isinstance(state, StateVector) else np.asarray(state, float)


@dataclass
class SemiDiscreteSystem:
    """Assembled generator split into conservative and damping parts."""

    grid: Grid
    coeffs: CoefficientSet
    variant: str
    law: object | None
    d: int
    n_nodes: int
    n_flux: int
    slices: dict
    n_state: int
    L_mat: sp.csr_matrix          # conservative generator
    D_mat: sp.csr_matrix          # linear damping part (PSD in the energy product)
    M_energy: sp.csr_matrix       # energy Gram matrix: E(x) = x^T M x / 2
    w_node: np.ndarray
    w_flux: np.ndarray | None
    WqM: sp.csr_matrix | None     # kappa-free m-weighted flux quadrature
    blocks: dict = field(default_factory=dict, repr=False)

    @property
    def has_flux(self) -> bool:
        return self.n_flux > 0

    @property
    def nonlinear(self) -> bool:
        return (self.variant == "cattaneo" and self.law is not None
                and getattr(self.law, "family", "linear") != "linear")

    def state(self, data=None) -> StateVector:
        return StateVector(self, data)

    def generator(self) -> sp.csr_matrix:
        """Linear part of the evolution matrix (excludes nonlinear damping)."""
        return (self.L_mat - self.D_mat).tocsr()

    def nonlinear_damping(self, x: np.ndarray) -> np.ndarray:
        """Pointwise term -E(|v|) v / rho in the v rows; zero elsewhere."""
        out = np.zeros_like(x)
        if not self.nonlinear:
            return out
        v = x[self.slices["v"]].reshape(self.d, self.n_nodes)
        speed = np.sqrt(np.sum(v * v, axis=0))
        out[self.slices["v"]] = (-(self.law.E(speed) / self.coeffs.rho) * v).ravel()
        return out

    def rhs(self, x: np.ndarray) -> np.ndarray:
        y = self.generator() @ x
        if self.nonlinear:
            y = y + self.nonlinear_damping(x)
        return y

    def dump_triplets(self, path, which: str = "conservative") -> None:
        """Write `row col value` text triplets of one assembled block."""
        mats = {"conservative": self.L_mat, "damping": self.D_mat,
                "energy": self.M_energy}
        m = mats[which].tocoo()
        with open(path, "w") as fh:
            fh.write(f"# gradtherm sparse triplets: {which} block, "
                     f"shape {m.shape[0]} {m.shape[1]}\n")
            for r, c, v in zip(m.row, m.col, m.data):
                fh.write(f"{r} {c} {v:.17g}\n")


def assemble(grid: Grid, coeffs: CoefficientSet, variant: str,
             law=None) -> SemiDiscreteSystem:
    """Assemble one PDE variant on a grid.

    The undamped variant keeps the conservative coefficients and zeroes
    every dissipative tensor. Cattaneo with a damping law whose family is
    not "linear" treats the frictional term as the pointwise nonlinearity
    E(|v|) v; with law=None the E2 matrix is used (linear relaxed system).
    """
    if variant not in VARIANTS:
        raise InvalidCoefficients(f"unknown variant {variant!r}")
    if grid.dim != coeffs.dim:
        raise InvalidCoefficients("grid and coefficient dimensions differ")
    rep = check_positivity(coeffs)
    if not (rep.rho_ok and rep.a_ok):
        raise InvalidCoefficients("need rho > 0 and a > 0")
    if not rep.joint_pd:
        raise InvalidCoefficients(
            f"joint (C, M, K) form not positive definite: alpha={rep.alpha_joint:.3g}")
    if rep.alpha_elastic < -PSD_TOL:
        raise InvalidCoefficients(
            f"elastic A-form indefinite: margin {rep.alpha_elastic:.3g}")
    if variant == "kelvin_voigt" and not rep.damping_psd:
        raise InvalidCoefficients("Kelvin-Voigt needs PSD B4 and m2")
    if variant == "frictional" and (rep.e2_margin < -PSD_TOL
                                    or rep.m2_margin < -PSD_TOL):
        raise InvalidCoefficients("frictional variant needs PSD E2 and m2")
    if variant == "cattaneo":
        if coeffs.kappa <= 0:
            raise InvalidCoefficients("cattaneo variant needs kappa > 0")
        if rep.m2_margin <= PSD_TOL:
            raise InvalidCoefficients("cattaneo variant needs positive definite m2")

    d, rho, a, kappa = grid.dim, coeffs.rho, coeffs.a, coeffs.kappa
    ops = _build_ops(grid)
    N = ops.w_node.size

    S_A = _block_form_grad(coeffs.A4, ops, d)
    S_C = _block_form_hess(coeffs.C6, ops, d)
    S_M = _block_form_coupling(coeffs.M4, ops, d)
    S_K = _staggered_form(coeffs.K2, ops, d, "K2")
    B_beta = _beta_matrix(coeffs.beta2, ops, d)
    E_free = (S_A + S_C).tocsr()

    zero_damping = variant == "undamped"
    m2_eff = np.zeros((d, d)) if zero_damping else coeffs.m2
    S_m = _staggered_form(m2_eff, ops, d, "m2")
    S_B = _block_form_grad(np.zeros((d,) * 4) if zero_damping else coeffs.B4, ops, d)
    E2_eff = np.zeros((d, d)) if zero_damping else coeffs.E2
    Wn = _wdiag(ops.w_node)
    E_mat = sp.bmat([[E2_eff[i, j] * Wn for j in range(d)] for i in range(d)],
                    format="csr")

    has_flux = variant == "cattaneo"
    if has_flux:
        Gq = sp.vstack(ops.stag, format="csr")
        w_flux = np.concatenate(ops.w_stag)
        wqm = np.concatenate([coeffs.m2[I, I] * ops.w_stag[I] for I in range(d)])
        WqM = _wdiag(wqm)
        n_flux = Gq.shape[0]
    else:
        Gq, w_flux, WqM, n_flux = None, None, None, 0

    sizes = {"u": d * N, "v": d * N, "tau": N, "theta": N, "q": n_flux}
    slices, off = {}, 0
    for name in ("u", "v", "tau", "theta", "q"):
        slices[name] = slice(off, off + sizes[name])
        off += sizes[name]
    n_state = off

    inv_wu = sp.diags(np.tile(1.0 / ops.w_node, d)).tocsr()
    inv_wt = sp.diags(1.0 / ops.w_node).tocsr()
    Iu = sp.eye(d * N, format="csr")
    It = sp.eye(N, format="csr")

    def Z(mrows, mcols):
        return sp.csr_matrix((mrows, mcols))

    row_u = [Z(d * N, d * N), Iu, Z(d * N, N), Z(d * N, N)]
    row_v = [(-1.0 / rho) * (inv_wu @ E_free), Z(d * N, d * N),
             (-1.0 / rho) * (inv_wu @ S_M), (1.0 / rho) * (inv_wu @ B_beta)]
    row_tau = [Z(N, d * N), Z(N, d * N), Z(N, N), It]
    row_theta = [(-1.0 / a) * (inv_wt @ S_M.T), (-1.0 / a) * (inv_wt @ B_beta.T),
                 (-1.0 / a) * (inv_wt @ S_K), Z(N, N)]
    if has_flux:
        row_u.append(Z(d * N, n_flux))
        row_v.append(Z(d * N, n_flux))
        row_tau.append(Z(N, n_flux))
        row_theta.append((-1.0 / a) * (inv_wt @ (Gq.T @ WqM)))
        row_q = [Z(n_flux, d * N), Z(n_flux, d * N), Z(n_flux, N),
                 (1.0 / kappa) * Gq, Z(n_flux, n_flux)]
        L_rows = [row_u, row_v, row_tau, row_theta, row_q]
    else:
        L_rows = [row_u, row_v, row_tau, row_theta]
    L_mat = sp.bmat(L_rows, format="csr")

    # damping block, PSD in the energy inner product
    D_rows = [[Z(sizes[r], sizes[c]) for c in ("u", "v", "tau", "theta", "q")[:len(L_rows)]]
              for r in ("u", "v", "tau", "theta", "q")[:len(L_rows)]]
    if variant == "kelvin_voigt":
        D_rows[1][1] = (1.0 / rho) * (inv_wu @ S_B)
        D_rows[3][3] = (1.0 / a) * (inv_wt @ S_m)
    elif variant == "frictional":
        D_rows[1][1] = (1.0 / rho) * (inv_wu @ E_mat)
        D_rows[3][3] = (1.0 / a) * (inv_wt @ S_m)
    elif variant == "cattaneo":
        nonlinear = law is not None and getattr(law, "family", "linear") != "linear"
        if not nonlinear:
            if law is not None:
                E_mat = sp.bmat([[(law.alpha if i == j else 0.0) * Wn
                                  for j in range(d)] for i in range(d)], format="csr")
            D_rows[1][1] = (1.0 / rho) * (inv_wu @ E_mat)
        D_rows[4][4] = (1.0 / kappa) * sp.eye(n_flux, format="csr")
    D_mat = sp.bmat(D_rows, format="csr")

    M_blocks = [[Z(sizes[r], sizes[c]) for c in ("u", "v", "tau", "theta", "q")[:len(L_rows)]]
                for r in ("u", "v", "tau", "theta", "q")[:len(L_rows)]]
    M_blocks[0][0] = E_free
    M_blocks[0][2] = S_M
    M_blocks[2][0] = S_M.T.tocsr()
    M_blocks[1][1] = rho * sp.diags(np.tile(ops.w_node, d)).tocsr()
    M_blocks[2][2] = S_K
    M_blocks[3][3] = a * Wn
    if has_flux:
        M_blocks[4][4] = kappa * WqM
    M_energy = sp.bmat(M_blocks, format="csr")

    return SemiDiscreteSystem(
        grid=grid, coeffs=coeffs, variant=variant, law=law,
        d=d, n_nodes=N, n_flux=n_flux, slices=slices, n_state=n_state,
        L_mat=L_mat, D_mat=D_mat, M_energy=M_energy,
        w_node=ops.w_node, w_flux=w_flux, WqM=WqM,
        blocks={"S_A": S_A, "S_C": S_C, "S_M": S_M, "S_K": S_K, "S_m": S_m,
                "S_B": S_B, "B_beta": B_beta, "E_mat": E_mat, "Gq": Gq,
                "E_free": E_free},
    )


def solve_static(system: SemiDiscreteSystem, F, tol: float = 1e-8) -> StateVector:
    """Solve the stationary generator equation (L - D) U = F.

    Eliminates the shift rows (v := F_u-slot, theta := F_tau-slot) and
    solves the remaining symmetric positive definite block for (u, tau)
    with a direct sparse factorization plus iterative refinement.
    """
    if system.variant not in ("kelvin_voigt", "undamped"):
        raise SolveFailure("static solve is defined for the Kelvin-Voigt setting")
    f = _as_array(F)
    b = system.blocks
    sl = system.slices
    rho, a = system.coeffs.rho, system.coeffs.a
    wu = np.tile(system.w_node, system.d)
    F1, F2 = f[sl["u"]], f[sl["v"]]
    F3, F4 = f[sl["tau"]], f[sl["theta"]]

    rhs_u = -rho * (wu * F2) + b["B_beta"] @ F3 - b["S_B"] @ F1
    rhs_t = -a * (system.w_node * F4) - b["B_beta"].T @ F1 - b["S_m"] @ F3
    A_red = sp.bmat([[b["E_free"], b["S_M"]],
                     [b["S_M"].T, b["S_K"]]], format="csc")
    rhs = np.concatenate([rhs_u, rhs_t])
    try:
        lu = spla.splu(A_red)
        x = lu.solve(rhs)
        for _ in range(2):
            x = x + lu.solve(rhs - A_red @ x)
    except RuntimeError as exc:
        raise SolveFailure(f"sparse factorization failed: {exc}") from exc

    U = system.state()
    n_u = system.d * system.n_nodes
    U.data[sl["u"]] = x[:n_u]
    U.data[sl["v"]] = F1
    U.data[sl["tau"]] = x[n_u:]
    U.data[sl["theta"]] = F3

    resid = system.generator() @ U.data - f
    nf = math.sqrt(max(float(f @ (system.M_energy @ f)), 0.0))
    nr = math.sqrt(max(float(resid @ (system.M_energy @ resid)), 0.0))
    if nf > 0 and nr > tol * nf:
        raise SolveFailure(
            f"static residual {nr / nf:.3g} above {tol:.1g} "
            f"(positivity margin too small for this grid?)")
    return U


def spectral_abscissa(system: SemiDiscreteSystem, cap: int = 4000) -> float:
    """Max real part of the linear generator spectrum (dense eigensolve)."""
    if system.n_state > cap:
        raise SizeCapExceeded(f"{system.n_state} unknowns exceed cap {cap}")
    K = system.generator().toarray()
    return float(np.max(np.linalg.eigvals(K).real))
