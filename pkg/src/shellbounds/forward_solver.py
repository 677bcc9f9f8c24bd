"""
Forward solver for the two-phase shallow-shell system.

The displacement ``(u1, u2, u3)`` minimizes the discrete energy

    E = 1/2 <s . e> + 1/2 <m . Hess u3> - <f' . u'> - <g u3>,
    e = sym grad u' + sym(grad theta (x) grad u3),

subject to Dirichlet data ``(u', u3, u3_n)`` on the boundary.  The membrane
part uses bilinear elements with 2x2 Gauss quadrature; the bending part is
the finite-difference Hessian energy with nodal ``u3_11``, ``u3_22`` and
cell-centred ``u3_12`` (the classical 13-point plate stencil), closed by a
ghost ring that carries the normal-slope data.
"""

from __future__ import annotations

import csv
import json
import time
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla
import sympy as sp

from .domain_fields import (
    BoundaryFrame,
    Grid,
    PhaseLayout,
    ShellProfile,
    _XY,
    divergence,
    gradient,
    hessian,
)
from .tensor_algebra import bending_moment, membrane_stress, rperp_conjugate, sym_part


class SolverError(RuntimeError):
    """Assembly or linear solve failed."""


# ----------------------------------------------------------------------------
# boundary data

LOADINGS = ("uniaxial-stretch", "shear", "bend-x", "bend-y", "twist", "fourier")


def loading_fields(name: str, amplitude: float = 1.0, fourier_k: int = 1) -> tuple[sp.Expr, sp.Expr, sp.Expr]:
    """Global analytic fields ``(u1, u2, u3)`` of a catalog loading.

    Names may be combined with ``+`` (e.g. ``"uniaxial-stretch+bend-x"``);
    the fields are then superposed.
    """
    x, y = _XY
    A = sp.Float(amplitude)
    u1 = u2 = u3 = sp.Integer(0)
    for part in name.split("+"):
        part = part.strip()
        if part == "uniaxial-stretch":
            u1 += A * x
        elif part == "shear":
            u1 += A * y / 2
            u2 += A * x / 2
        elif part == "bend-x":
            u3 += A * (x - sp.Rational(1, 2)) ** 2 / 2
        elif part == "bend-y":
            u3 += A * (y - sp.Rational(1, 2)) ** 2 / 2
        elif part == "twist":
            u3 += A * (x - sp.Rational(1, 2)) * (y - sp.Rational(1, 2))
        elif part == "fourier":
            kp = fourier_k * sp.pi
            u1 += A * sp.sin(kp * y) / kp
            u2 += A * sp.sin(kp * x) / kp
            u3 += A * sp.sin(kp * x) * sp.cos(kp * y) / kp**2
        else:
            raise ValueError(f"unknown loading {part!r}; choose from {LOADINGS}")
    return u1, u2, u3


@dataclass
class BoundaryConditions:
    """Per-edge Dirichlet data ``u'`` (m, 2), ``u3`` and ``u3_n`` (m,)."""

    n: int
    u: list[np.ndarray]
    u3: list[np.ndarray]
    u3n: list[np.ndarray]
    name: str = "custom"

    def __post_init__(self):
        for arrs in (self.u, self.u3, self.u3n):
            if len(arrs) != 4 or any(len(a) != self.n for a in arrs):
                raise ValueError("boundary data must hold four edges of n nodes each")
            if not all(np.all(np.isfinite(a)) for a in arrs):
                raise ValueError("boundary data must be finite")
        # consecutive edges share a corner node
        for k in range(4):
            nxt = (k + 1) % 4
            if not (np.allclose(self.u[k][-1], self.u[nxt][0], atol=1e-12)
                    and np.isclose(self.u3[k][-1], self.u3[nxt][0], atol=1e-12)):
                raise ValueError("corner values disagree between adjacent edges")

    @classmethod
    def from_fields(cls, frame: BoundaryFrame, u1, u2, u3, name: str = "custom") -> "BoundaryConditions":
        """Restrict global analytic fields (sympy expressions) to the boundary."""
        x, y = _XY
        fu1, fu2, fu3 = (sp.lambdify((x, y), sp.sympify(e), "numpy") for e in (u1, u2, u3))
        g3 = [sp.lambdify((x, y), sp.diff(sp.sympify(u3), v), "numpy") for v in (x, y)]
        us, u3s, u3ns = [], [], []
        for e in frame:
            X, Y = e.xy[:, 0], e.xy[:, 1]
            z = np.zeros_like(X)
            us.append(np.stack([fu1(X, Y) + z, fu2(X, Y) + z], axis=-1))
            u3s.append(fu3(X, Y) + z)
            u3ns.append((g3[0](X, Y) + z) * e.normal[0] + (g3[1](X, Y) + z) * e.normal[1])
        return cls(frame.grid.n, us, u3s, u3ns, name)

    @classmethod
    def catalog(cls, frame: BoundaryFrame, name: str, amplitude: float = 1.0,
                fourier_k: int = 1) -> "BoundaryConditions":
        return cls.from_fields(frame, *loading_fields(name, amplitude, fourier_k), name=name)

    @classmethod
    def from_table(cls, path: str | Path, frame: BoundaryFrame) -> "BoundaryConditions":
        """Read ``edge, k, u1, u2, u3, u3n`` rows (edge names as in the frame)."""
        n = frame.grid.n
        names = [e.name for e in frame]
        data = {nm: np.full((n, 4), np.nan) for nm in names}
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                data[row["edge"]][int(row["k"])] = [float(row[c]) for c in ("u1", "u2", "u3", "u3n")]
        if any(np.isnan(d).any() for d in data.values()):
            raise ValueError(f"{path}: boundary table is incomplete")
        return cls(n, [data[nm][:, :2] for nm in names], [data[nm][:, 2] for nm in names],
                   [data[nm][:, 3] for nm in names], name=f"table:{Path(path).name}")

    def nodal(self, frame: BoundaryFrame) -> tuple[np.ndarray, np.ndarray]:
        """Scatter ``u'`` and ``u3`` onto boundary nodes of full grids."""
        n = self.n
        ub, u3b = np.zeros((n, n, 2)), np.zeros((n, n))
        for e, u, w in zip(frame, self.u, self.u3):
            ub[e.i, e.j] = u
            u3b[e.i, e.j] = w
        return ub, u3b

    def is_zero(self) -> bool:
        return all(not np.any(a) for a in (*self.u, *self.u3, *self.u3n))


@dataclass
class Forcing:
    """Body loads ``f'`` (membrane) and ``g`` (bending) as ``(x, y)`` callables."""

    f1: Callable
    f2: Callable
    g: Callable


# ----------------------------------------------------------------------------
# assembly

_GAUSS = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])


@dataclass
class ShellSystem:
    grid: Grid
    layout: PhaseLayout
    theta: ShellProfile
    bc: BoundaryConditions
    K: sps.csr_matrix
    F: np.ndarray
    P: sps.csr_matrix
    z0: np.ndarray
    n_free: int
    coupled: bool
    forcing: Forcing | None = None

    @cached_property
    def A(self) -> sps.csc_matrix:
        return (self.P.T @ self.K @ self.P).tocsc()

    @cached_property
    def b(self) -> np.ndarray:
        return self.P.T @ (self.F - self.K @ self.z0)


def _gauss_points(grid: Grid):
    """Gauss point coordinates, shape values and gradients for every cell."""
    n, h = grid.n, grid.h
    ci, cj = np.meshgrid(np.arange(n - 1), np.arange(n - 1), indexing="ij")
    ci, cj = ci.ravel(), cj.ravel()
    rows, xs, ys = [], [], []
    vals, dxs, dys, cols = [], [], [], []
    q = 0
    for xi in _GAUSS:
        for eta in _GAUSS:
            for di in (0, 1):
                for dj in (0, 1):
                    Nx = xi if di else 1 - xi
                    Ny = eta if dj else 1 - eta
                    sx = 1.0 if di else -1.0
                    sy = 1.0 if dj else -1.0
                    rows.append(np.arange(len(ci)) * 4 + q)
                    cols.append((ci + di) * n + (cj + dj))
                    vals.append(np.full(len(ci), Nx * Ny))
                    dxs.append(np.full(len(ci), sx * Ny / h))
                    dys.append(np.full(len(ci), Nx * sy / h))
            xs.append((ci + xi) * h)
            ys.append((cj + eta) * h)
            q += 1
    ngp = 4 * len(ci)
    gx = np.empty(ngp)
    gy = np.empty(ngp)
    for q in range(4):
        gx[q::4] = xs[q]
        gy[q::4] = ys[q]
    r, c = np.concatenate(rows), np.concatenate(cols)
    shape = (ngp, n * n)
    Nm = sps.csr_matrix((np.concatenate(vals), (r, c)), shape=shape)
    Dx = sps.csr_matrix((np.concatenate(dxs), (r, c)), shape=shape)
    Dy = sps.csr_matrix((np.concatenate(dys), (r, c)), shape=shape)
    w = np.full(ngp, h * h / 4)
    return gx, gy, w, Nm, Dx, Dy


def _u3_index(grid: Grid):
    """Map (possibly ghost) node coordinates to column indices of ``z``."""
    n = grid.n
    base, ghost = 2 * n * n, 3 * n * n

    def col(I, J):
        I, J = np.asarray(I), np.asarray(J)
        out = base + np.clip(I, 0, n - 1) * n + np.clip(J, 0, n - 1)
        out = np.where(I == -1, ghost + J, out)
        out = np.where(I == n, ghost + n + J, out)
        out = np.where(J == -1, ghost + 2 * n + I, out)
        out = np.where(J == n, ghost + 3 * n + I, out)
        return out

    return col


def _plate_operators(grid: Grid):
    n, h = grid.n, grid.h
    col = _u3_index(grid)
    N = 3 * n * n + 4 * n
    I, J = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    I, J = I.ravel(), J.ravel()
    r = np.arange(n * n)
    c3 = np.array([1.0, -2.0, 1.0]) / h**2

    def second(di, dj):
        rows = np.concatenate([r, r, r])
        cols = np.concatenate([col(I - di, J - dj), col(I, J), col(I + di, J + dj)])
        vals = np.repeat(c3, n * n)
        return sps.csr_matrix((vals, (rows, cols)), shape=(n * n, N))

    H11, H22 = second(1, 0), second(0, 1)
    ci, cj = np.meshgrid(np.arange(n - 1), np.arange(n - 1), indexing="ij")
    ci, cj = ci.ravel(), cj.ravel()
    rc = np.arange(len(ci))
    rows = np.tile(rc, 4)
    cols = np.concatenate([col(ci + 1, cj + 1), col(ci + 1, cj), col(ci, cj + 1), col(ci, cj)])
    vals = np.repeat(np.array([1.0, -1.0, -1.0, 1.0]) / h**2, len(ci))
    H12 = sps.csr_matrix((vals, (rows, cols)), shape=(len(ci), N))
    cx, cy = (ci + 0.5) * h, (cj + 0.5) * h
    return H11, H22, H12, cx, cy


def _elimination(grid: Grid, frame: BoundaryFrame, bc: BoundaryConditions):
    """``z = P y + z0``: free interior unknowns, Dirichlet nodes and ghosts."""
    n, h = grid.n, grid.h
    nn = n * n
    N = 3 * nn + 4 * n
    interior = np.zeros((n, n), dtype=bool)
    interior[1:-1, 1:-1] = True
    node_free = np.flatnonzero(interior.ravel())
    nf1 = len(node_free)
    free_cols = {c: c * nf1 + np.arange(nf1) for c in range(3)}
    ymap = -np.ones(N, dtype=int)
    for c in range(3):
        ymap[c * nn + node_free] = free_cols[c]

    ub, u3b = bc.nodal(frame)
    z0 = np.zeros(N)
    z0[:nn] = ub[..., 0].ravel() * ~interior.ravel()
    z0[nn:2 * nn] = ub[..., 1].ravel() * ~interior.ravel()
    z0[2 * nn:3 * nn] = u3b.ravel() * ~interior.ravel()

    rows, cols = [], []
    for c in range(3):
        rows.append(c * nn + node_free)
        cols.append(free_cols[c])

    # ghost = inner neighbour + 2 h u3_n, edge order bottom, right, top, left
    ghost0 = 3 * nn
    slope = {e.name: dict(zip(zip(e.i.tolist(), e.j.tolist()), bc.u3n[k])) for k, e in enumerate(frame)}
    r = np.arange(n)
    spec = [
        ("left", ghost0 + r, 1 + 0 * r, r, lambda k: (0, k)),
        ("right", ghost0 + n + r, n - 2 + 0 * r, r, lambda k: (n - 1, k)),
        ("bottom", ghost0 + 2 * n + r, r, 1 + 0 * r, lambda k: (k, 0)),
        ("top", ghost0 + 3 * n + r, r, n - 2 + 0 * r, lambda k: (k, n - 1)),
    ]
    for name, gidx, ii, jj, node in spec:
        inner = 2 * nn + ii * n + jj
        for k in range(n):
            z0[gidx[k]] = 2 * h * slope[name][node(k)]
            if ymap[inner[k]] >= 0:
                rows.append(np.array([gidx[k]]))
                cols.append(np.array([ymap[inner[k]]]))
            else:
                z0[gidx[k]] += z0[inner[k]]
    rows, cols = np.concatenate(rows), np.concatenate(cols)
    P = sps.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(N, 3 * nf1))
    return P, z0, 3 * nf1


def assemble_energy(grid: Grid, layout: PhaseLayout, theta: ShellProfile, bc: BoundaryConditions,
                    forcing: Forcing | None = None) -> ShellSystem:
    """Assemble the quadratic energy ``1/2 z^T K z - F^T z`` and its constraints."""
    if layout.grid != grid or bc.n != grid.n:
        raise ValueError("layout, boundary data and grid sizes disagree")
    frame = BoundaryFrame(grid)
    n = grid.n
    nn = n * n
    N = 3 * nn + 4 * n

    gx, gy, w, Nm, Dx, Dy = _gauss_points(grid)
    ngp = len(w)
    lam, mu = layout.moduli(gx, gy)
    lam_e = 4 * lam * mu / (lam + 2 * mu)
    mu_e = 2 * mu
    tg = theta.grad(gx, gy)
    Z = sps.csr_matrix((ngp, nn))
    Zg = sps.csr_matrix((ngp, 4 * n))
    t1, t2 = sps.diags(tg[:, 0]), sps.diags(tg[:, 1])
    E11 = sps.hstack([Dx, Z, t1 @ Dx, Zg], format="csr")
    E22 = sps.hstack([Z, Dy, t2 @ Dy, Zg], format="csr")
    G12 = sps.hstack([Dy, Dx, t1 @ Dy + t2 @ Dx, Zg], format="csr")
    d11 = sps.diags(w * (lam_e + 2 * mu_e))
    d12 = sps.diags(w * lam_e)
    d33 = sps.diags(w * mu_e)
    Km = (E11.T @ d11 @ E11 + E22.T @ d11 @ E22 + E11.T @ d12 @ E22 + E22.T @ d12 @ E11
          + G12.T @ d33 @ G12)

    H11, H22, H12, cx, cy = _plate_operators(grid)
    X, Y = grid.mesh
    lam_n, mu_n = layout.moduli(X.ravel(), Y.ravel())
    at_n = 4 * mu_n * (3 * lam_n + 2 * mu_n) / (3 * (lam_n + 2 * mu_n))
    bt_n = 4 * mu_n / 3
    wn = grid.weights.ravel()
    lam_c, mu_c = layout.moduli(cx, cy)
    bt_c = 4 * mu_c / 3
    Hp, Hm = H11 + H22, H11 - H22
    Kp = (Hp.T @ sps.diags(wn * at_n / 2) @ Hp + Hm.T @ sps.diags(wn * bt_n / 2) @ Hm
          + H12.T @ sps.diags(grid.h**2 * 2 * bt_c) @ H12)

    K = (Km + Kp).tocsr()
    K.eliminate_zeros()

    F = np.zeros(N)
    if forcing is not None:
        F[:nn] = Nm.T @ (w * _as_array(forcing.f1(gx, gy), gx))
        F[nn:2 * nn] = Nm.T @ (w * _as_array(forcing.f2(gx, gy), gx))
        F[2 * nn:3 * nn] = wn * _as_array(forcing.g(X.ravel(), Y.ravel()), X.ravel())

    P, z0, n_free = _elimination(grid, frame, bc)
    coupled = bool(np.any(tg != 0.0))
    return ShellSystem(grid, layout, theta, bc, K, F, P, z0, n_free, coupled, forcing)


def _as_array(v, like):
    return np.asarray(v, dtype=float) + np.zeros_like(like)


# ----------------------------------------------------------------------------
# solve

@dataclass
class SolveReport:
    residual: float
    energy: float
    potential: float
    n_unknowns: int
    nnz: int
    method: str
    seconds: float
    refinements: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class ShellState:
    """Solved displacement fields and the tensor fields derived from them."""

    grid: Grid
    layout: PhaseLayout
    theta: ShellProfile
    bc: BoundaryConditions
    u: np.ndarray
    u3: np.ndarray
    u3_ghost: np.ndarray
    z: np.ndarray = field(repr=False)

    @cached_property
    def moduli(self) -> tuple[np.ndarray, np.ndarray]:
        return self.layout.nodal_moduli()

    @cached_property
    def grad_theta(self) -> np.ndarray:
        return self.theta.grad(*self.grid.mesh)

    @cached_property
    def grad_u(self) -> np.ndarray:
        """``grad_u[..., a, b] = d u_a / d x_b``."""
        return np.stack([gradient(self.u[..., 0], self.grid), gradient(self.u[..., 1], self.grid)], axis=-2)

    @cached_property
    def grad_u3(self) -> np.ndarray:
        return gradient(self.u3, self.grid)

    @cached_property
    def hess_u3(self) -> np.ndarray:
        return hessian(self.u3, self.grid)

    @cached_property
    def eps(self) -> np.ndarray:
        return sym_part(self.grad_u)

    @cached_property
    def coupling(self) -> np.ndarray:
        """``sym(grad theta (x) grad u3)``."""
        return sym_part(np.einsum("...i,...j->...ij", self.grad_theta, self.grad_u3))

    @cached_property
    def e_theta(self) -> np.ndarray:
        return self.eps + self.coupling

    @cached_property
    def s_theta(self) -> np.ndarray:
        return membrane_stress(self.e_theta, *self.moduli)

    @cached_property
    def m(self) -> np.ndarray:
        return bending_moment(self.hess_u3, *self.moduli)

    @cached_property
    def sigma(self) -> np.ndarray:
        """``R eps(u')``, equal to ``L Hess psi - K_theta`` for exact solutions."""
        return rperp_conjugate(self.eps)

    def to_csv(self, path: str | Path) -> None:
        from .domain_fields import write_field_csv

        write_field_csv(path, self.grid, u1=self.u[..., 0], u2=self.u[..., 1], u3=self.u3,
                        s11=self.s_theta[..., 0, 0], s12=self.s_theta[..., 0, 1], s22=self.s_theta[..., 1, 1],
                        m11=self.m[..., 0, 0], m12=self.m[..., 0, 1], m22=self.m[..., 1, 1])


def _factor_solve(A: sps.csc_matrix, b: np.ndarray):
    try:
        lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A")
    except (RuntimeError, MemoryError) as exc:
        warnings.warn(f"sparse factorization failed ({exc}); falling back to CG")
        return None, None
    return lu.solve(b), lu


def solve(system: ShellSystem, tol: float = 1e-9) -> tuple[ShellState, SolveReport]:
    """Minimize the assembled energy; blocks are solved separately when decoupled."""
    t0 = time.perf_counter()
    A, b = system.A, system.b
    nf = system.n_free
    blocks = [np.arange(nf)]
    if not system.coupled:
        k = nf // 3
        blocks = [np.arange(2 * k), np.arange(2 * k, nf)]
    y = np.zeros(nf)
    method = "splu"
    lus = []
    for idx in blocks:
        Ab = A[idx][:, idx].tocsc()
        bb = b[idx]
        if not np.any(bb):
            lus.append(None)
            continue
        yb, lu = _factor_solve(Ab, bb)
        if yb is None:
            method = "cg"
            diag = Ab.diagonal()
            M = sps.diags(1.0 / diag)
            yb, info = spla.cg(Ab, bb, M=M, rtol=1e-13, maxiter=50 * len(bb))
            if info != 0:
                raise SolverError(f"conjugate gradients did not converge (info={info})")
        y[idx] = yb
        lus.append(lu)

    def resid(yv):
        bn = np.linalg.norm(b)
        return 0.0 if bn == 0 else float(np.linalg.norm(A @ yv - b) / bn)

    refinements = 0
    res = resid(y)
    while res > tol * 1e-3 and refinements < 3 and all(lu is not None or not np.any(b[idx])
                                                        for lu, idx in zip(lus, blocks)):
        r = b - A @ y
        for lu, idx in zip(lus, blocks):
            if lu is not None:
                y[idx] += lu.solve(r[idx])
        refinements += 1
        new = resid(y)
        if new >= res:
            break
        res = new
    if not np.all(np.isfinite(y)):
        raise SolverError("solution contains non-finite values (singular assembly?)")
    if res > tol:
        raise SolverError(f"relative residual {res:.3e} exceeds {tol:.1e}")

    z = system.P @ y + system.z0
    n = system.grid.n
    nn = n * n
    u = np.stack([z[:nn].reshape(n, n), z[nn:2 * nn].reshape(n, n)], axis=-1)
    u3 = z[2 * nn:3 * nn].reshape(n, n)
    state = ShellState(system.grid, system.layout, system.theta, system.bc, u, u3,
                       z[3 * nn:].copy(), z)
    energy = 0.5 * float(z @ (system.K @ z))
    report = SolveReport(residual=res, energy=energy, potential=energy - float(system.F @ z),
                         n_unknowns=nf, nnz=int(A.nnz), method=method,
                         seconds=time.perf_counter() - t0, refinements=refinements)
    return state, report


def solve_shell(grid: Grid, layout: PhaseLayout, theta: ShellProfile, bc: BoundaryConditions,
                forcing: Forcing | None = None) -> tuple[ShellState, SolveReport]:
    return solve(assemble_energy(grid, layout, theta, bc, forcing))


def energy_by_quadrature(state: ShellState) -> float:
    """Recompute ``1/2 (<s . e> + <m . Hess u3>)`` from the solved fields.

    Strains are rebuilt cell by cell from bilinear interpolation and the
    bending terms from padded nodal arrays, without the assembly operators.
    """
    grid, h, n = state.grid, state.grid.h, state.grid.n
    u1, u2, u3 = state.u[..., 0], state.u[..., 1], state.u3
    total = 0.0
    for xi in _GAUSS:
        for eta in _GAUSS:
            def grads(f):
                f00, f10, f01, f11 = f[:-1, :-1], f[1:, :-1], f[:-1, 1:], f[1:, 1:]
                fx = ((1 - eta) * (f10 - f00) + eta * (f11 - f01)) / h
                fy = ((1 - xi) * (f01 - f00) + xi * (f11 - f10)) / h
                return fx, fy
            gx = (np.arange(n - 1)[:, None] + xi) * h + 0 * np.arange(n - 1)[None, :]
            gy = (np.arange(n - 1)[None, :] + eta) * h + 0 * np.arange(n - 1)[:, None]
            u1x, u1y = grads(u1)
            u2x, u2y = grads(u2)
            u3x, u3y = grads(u3)
            tg = state.theta.grad(gx, gy)
            e = np.empty(gx.shape + (2, 2))
            e[..., 0, 0] = u1x + tg[..., 0] * u3x
            e[..., 1, 1] = u2y + tg[..., 1] * u3y
            e[..., 0, 1] = e[..., 1, 0] = 0.5 * (u1y + u2x + tg[..., 0] * u3y + tg[..., 1] * u3x)
            s = membrane_stress(e, *state.layout.moduli(gx, gy))
            total += 0.5 * h * h / 4 * np.sum(s * e)
    ext = np.full((n + 2, n + 2), np.nan)
    ext[1:-1, 1:-1] = u3
    g = state.u3_ghost
    ext[0, 1:-1], ext[-1, 1:-1] = g[:n], g[n:2 * n]
    ext[1:-1, 0], ext[1:-1, -1] = g[2 * n:3 * n], g[3 * n:]
    H = np.zeros((n, n, 2, 2))
    H[..., 0, 0] = (ext[2:, 1:-1] - 2 * u3 + ext[:-2, 1:-1]) / h**2
    H[..., 1, 1] = (ext[1:-1, 2:] - 2 * u3 + ext[1:-1, :-2]) / h**2
    mdiag = bending_moment(H, *state.layout.nodal_moduli())
    total += 0.5 * np.sum(grid.weights * (mdiag[..., 0, 0] * H[..., 0, 0] + mdiag[..., 1, 1] * H[..., 1, 1]))
    h12 = (u3[1:, 1:] - u3[1:, :-1] - u3[:-1, 1:] + u3[:-1, :-1]) / h**2
    cc = (np.arange(n - 1) + 0.5) * h
    _, mu_c = state.layout.moduli(cc[:, None] + 0 * cc[None, :], cc[None, :] + 0 * cc[:, None])
    total += 0.5 * np.sum(h * h * 2 * (4 * mu_c / 3) * h12**2)
    return float(total)


# ----------------------------------------------------------------------------
# manufactured solutions

def manufactured_forcing(u1, u2, u3, layout: PhaseLayout, theta: ShellProfile) -> Forcing:
    """Body loads for which the analytic fields solve the forced system.

    ``f' = -div s(u*)`` and ``g = div div m(u3*) - div(s(u*) grad theta)``,
    differentiated symbolically.  Coefficients must be smooth: a
    heterogeneous layout needs a positive smoothing.
    """
    if not layout.is_homogeneous and layout.blend <= 0:
        raise ValueError("manufactured forcing needs smooth coefficients (set smoothing)")
    x, y = _XY
    u1, u2, u3 = (sp.sympify(e) for e in (u1, u2, u3))
    chi = geometry_sympy(layout)
    m_ = layout.material
    lam = m_.lambda1 * chi + m_.lambda2 * (1 - chi)
    mu = m_.mu1 * chi + m_.mu2 * (1 - chi)
    th = theta.sympy_expr()
    gt = [sp.diff(th, x), sp.diff(th, y)]
    g3 = [sp.diff(u3, x), sp.diff(u3, y)]
    grad_u = [[sp.diff(u1, x), sp.diff(u1, y)], [sp.diff(u2, x), sp.diff(u2, y)]]
    e = [[(grad_u[a][b] + grad_u[b][a]) / 2 + (gt[a] * g3[b] + gt[b] * g3[a]) / 2 for b in range(2)]
         for a in range(2)]
    tr = e[0][0] + e[1][1]
    c = 4 * lam * mu / (lam + 2 * mu)
    s = [[4 * mu * e[a][b] + (c * tr if a == b else 0) for b in range(2)] for a in range(2)]
    H = [[sp.diff(u3, v, w) for w in (x, y)] for v in (x, y)]
    trH = H[0][0] + H[1][1]
    cm = 4 * lam * mu / (3 * (lam + 2 * mu))
    mm = [[4 * mu / 3 * H[a][b] + (cm * trH if a == b else 0) for b in range(2)] for a in range(2)]
    X = (x, y)
    f = [-(sp.diff(s[a][0], x) + sp.diff(s[a][1], y)) for a in range(2)]
    q = [s[a][0] * gt[0] + s[a][1] * gt[1] for a in range(2)]
    g = (sum(sp.diff(mm[a][b], X[a], X[b]) for a in range(2) for b in range(2))
         - sp.diff(q[0], x) - sp.diff(q[1], y))
    return Forcing(*(sp.lambdify((x, y), expr, "numpy") for expr in (f[0], f[1], g)))


def geometry_sympy(layout: PhaseLayout) -> sp.Expr:
    """Symbolic blended indicator matching ``layout.chi`` (smooth layouts)."""
    x, y = _XY
    w = layout.blend

    def step(z):
        return (1 + sp.tanh(2 * z / w)) / 2

    def ind(g):
        if g.kind == "empty":
            return sp.Integer(0)
        if g.kind == "disk":
            (c1, c2), r = g.params["center"], g.params["radius"]
            return step((r**2 - (x - c1) ** 2 - (y - c2) ** 2) / (2 * r))
        if g.kind == "rectangle":
            lo, hi = g.params["lo"], g.params["hi"]
            return step(x - lo[0]) * step(hi[0] - x) * step(y - lo[1]) * step(hi[1] - y)
        out = sp.Integer(0)
        for p in g.params["parts"]:
            out = 1 - (1 - out) * (1 - ind(p))
        return out

    if layout.is_homogeneous:
        return sp.Integer(0)
    return ind(layout.geometry)


# ----------------------------------------------------------------------------
# boundary data extraction

@dataclass
class CauchyBundle:
    """Per-edge boundary traces of a solved state (edge order of the frame).

    Dirichlet part: ``u`` (m, 2), ``u3``, ``u3n``.  Physical Neumann part:
    ``sn`` (traction), ``shear`` = (div m - s grad theta).n + (mn.t)_t and
    ``mnn``.  Raw traces used by the pre-integrated boundary functionals:
    ``mn`` (m, 2), ``div_m_n``, ``theta_sn`` = grad theta . (s n),
    ``sigma_n`` (m, 2) and ``div_sigma_n`` for ``sigma = R eps(u')``.
    """

    u: list[np.ndarray]
    u3: list[np.ndarray]
    u3n: list[np.ndarray]
    sn: list[np.ndarray]
    shear: list[np.ndarray]
    mnn: list[np.ndarray]
    mn: list[np.ndarray]
    div_m_n: list[np.ndarray]
    theta_sn: list[np.ndarray]
    sigma_n: list[np.ndarray]
    div_sigma_n: list[np.ndarray]

    def to_csv(self, path: str | Path, frame: BoundaryFrame) -> None:
        cols = ["edge", "k", "i", "j", "x", "y", "u1", "u2", "u3", "u3n", "sn1", "sn2",
                "shear", "mnn", "mn1", "mn2", "div_m_n", "theta_sn", "sigma_n1", "sigma_n2", "div_sigma_n"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for q, e in enumerate(frame):
                for k in range(e.size):
                    vals = [*self.u[q][k], self.u3[q][k], self.u3n[q][k], *self.sn[q][k], self.shear[q][k],
                            self.mnn[q][k], *self.mn[q][k], self.div_m_n[q][k], self.theta_sn[q][k],
                            *self.sigma_n[q][k], self.div_sigma_n[q][k]]
                    w.writerow([e.name, k, e.i[k], e.j[k], f"{e.xy[k, 0]:.17g}", f"{e.xy[k, 1]:.17g}",
                                *(f"{v:.17g}" for v in vals)])

    def to_json(self) -> dict:
        return {k: [a.tolist() for a in v] for k, v in self.__dict__.items()}


def extract_cauchy(state: ShellState, frame: BoundaryFrame) -> CauchyBundle:
    grid = state.grid
    s, m = state.s_theta, state.m
    div_m = divergence(m, grid)
    q = np.einsum("...ij,...j->...i", s, state.grad_theta)
    div_sigma = divergence(state.sigma, grid)
    out = {k: [] for k in ("sn", "shear", "mnn", "mn", "div_m_n", "theta_sn", "sigma_n", "div_sigma_n")}
    for e in frame:
        n_, t_ = e.normal, e.tangent
        sn = e.restrict(s) @ n_
        mn = e.restrict(m) @ n_
        dmn = e.restrict(div_m) @ n_
        out["sn"].append(sn)
        out["mn"].append(mn)
        out["mnn"].append(mn @ n_)
        out["div_m_n"].append(dmn)
        out["shear"].append(dmn - e.restrict(q) @ n_ + e.d_t(mn @ t_))
        out["theta_sn"].append(np.einsum("ki,ki->k", e.restrict(state.grad_theta), sn))
        out["sigma_n"].append(e.restrict(state.sigma) @ n_)
        out["div_sigma_n"].append(e.restrict(div_sigma) @ n_)
    bc = state.bc
    return CauchyBundle(u=[a.copy() for a in bc.u], u3=[a.copy() for a in bc.u3],
                        u3n=[a.copy() for a in bc.u3n], **out)


def write_report(path: str | Path, report: SolveReport) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True))
