"""
Airy stress function: reconstruction from a membrane stress field, residuals
of the transformed (psi, u3) system, and the map from physical boundary data
to boundary data of ``psi``.

With ``s = R Hess psi`` the membrane equations turn into

    div div (L Hess psi - K) = 0,       K = R sym(grad theta (x) grad u3),
    div div (M Hess u3) - div (R Hess psi grad theta) = g,

and ``L Hess psi - K = R eps(u')``.  The last identity gives the Neumann
data of the first equation directly from the boundary displacement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .domain_fields import (
    BoundaryFrame,
    Grid,
    ScalarTrace,
    divergence,
    gradient,
    hessian,
    write_field_csv,
)
from .tensor_algebra import R_PERP, apply_iso_field, iso_fields, rperp_conjugate, sym_part


class DivergenceError(ValueError):
    """The stress field handed to the reconstruction is not in equilibrium."""


class UnbalancedTractionError(ValueError):
    """Boundary traction carries a net force or moment."""


# ----------------------------------------------------------------------------
# sparse stencils matching domain_fields.d1 / d2

def _d1_matrix(n: int, h: float) -> sps.csr_matrix:
    D = sps.lil_matrix((n, n))
    for k in range(1, n - 1):
        D[k, k - 1], D[k, k + 1] = -0.5, 0.5
    D[0, :3] = [-1.5, 2.0, -0.5]
    D[n - 1, n - 3:] = [0.5, -2.0, 1.5]
    return (D / h).tocsr()


def _d2_matrix(n: int, h: float) -> sps.csr_matrix:
    D = sps.lil_matrix((n, n))
    for k in range(1, n - 1):
        D[k, k - 1:k + 2] = [1.0, -2.0, 1.0]
    D[0, :4] = [2.0, -5.0, 4.0, -1.0]
    D[n - 1, n - 4:] = [-1.0, 4.0, -5.0, 2.0]
    return (D / h**2).tocsr()


def hessian_operators(grid: Grid):
    """Sparse ``(Dxx, Dxy, Dyy, Dx, Dy)`` acting on raveled ``[i, j]`` fields."""
    n, h = grid.n, grid.h
    I = sps.identity(n, format="csr")
    D1, D2 = _d1_matrix(n, h), _d2_matrix(n, h)
    return (sps.kron(D2, I, "csr"), sps.kron(D1, D1, "csr"), sps.kron(I, D2, "csr"),
            sps.kron(D1, I, "csr"), sps.kron(I, D1, "csr"))


# ----------------------------------------------------------------------------
# reconstruction

@dataclass
class AiryField:
    """Airy function on a grid, gauged so that it and its gradient vanish at ``anchor``."""

    grid: Grid
    psi: np.ndarray
    anchor: tuple[int, int]
    residual: float

    @property
    def hessian(self) -> np.ndarray:
        return hessian(self.psi, self.grid)

    @property
    def gradient(self) -> np.ndarray:
        return gradient(self.psi, self.grid)

    @property
    def stress(self) -> np.ndarray:
        """``R Hess psi``."""
        return rperp_conjugate(self.hessian)

    def trace(self, frame: BoundaryFrame) -> list[ScalarTrace]:
        return frame.trace(self.psi)

    def to_csv(self, path) -> None:
        write_field_csv(path, self.grid, psi=self.psi)


def weak_divergence(s: np.ndarray, grid: Grid, modes: int = 2) -> float:
    """Relative size of ``div s`` tested against sine bumps vanishing on the boundary.

    Returns ``max |<s grad phi>| / <|s| |grad phi|>`` over the bumps
    ``sin(k pi x1) sin(l pi x2)``, ``k, l <= modes``; zero for equilibrium.
    """
    X, Y = grid.mesh
    w = grid.weights
    norm_s = np.sqrt(np.sum(s * s, axis=(-1, -2)))
    worst = 0.0
    for k in range(1, modes + 1):
        for l in range(1, modes + 1):
            gx = k * np.pi * np.cos(k * np.pi * X) * np.sin(l * np.pi * Y)
            gy = l * np.pi * np.sin(k * np.pi * X) * np.cos(l * np.pi * Y)
            scale = np.sum(w * norm_s * np.hypot(gx, gy))
            if scale == 0:
                continue
            for a in range(2):
                val = np.sum(w * (s[..., a, 0] * gx + s[..., a, 1] * gy))
                worst = max(worst, abs(val) / scale)
    return worst


def airy_reconstruct(s_theta: np.ndarray, grid: Grid, anchor: tuple[int, int] | None = None,
                     check_divergence: bool = True, div_tol: float = 0.05) -> AiryField:
    """Least-squares fit of ``Hess psi`` to ``R s_theta``.

    Minimizes the trapezoid-weighted Frobenius misfit over all grid
    functions; the affine null space is removed by requiring ``psi`` and
    ``grad psi`` to vanish at ``anchor`` (default: centre node).
    """
    s_theta = sym_part(np.asarray(s_theta, dtype=float))
    if check_divergence:
        div = weak_divergence(s_theta, grid)
        if div > div_tol:
            raise DivergenceError(
                f"stress field is not divergence-free (weak residual {div:.3g} > {div_tol}); "
                "an Airy function exists only for equilibrium stresses")
    anchor = grid.center if anchor is None else tuple(anchor)
    n = grid.n
    target = rperp_conjugate(s_theta)
    Dxx, Dxy, Dyy, Dx, Dy = hessian_operators(grid)
    W = sps.diags(grid.weights.ravel())
    A = Dxx.T @ W @ Dxx + Dyy.T @ W @ Dyy + 2 * (Dxy.T @ W @ Dxy)
    rhs = (Dxx.T @ W @ target[..., 0, 0].ravel() + Dyy.T @ W @ target[..., 1, 1].ravel()
           + 2 * (Dxy.T @ W @ target[..., 0, 1].ravel()))
    p = anchor[0] * n + anchor[1]
    scale = 1.0 / grid.h**2
    C = sps.vstack([sps.csr_matrix(([scale], ([0], [p])), shape=(1, n * n)),
                    grid.h * scale * Dx[p], grid.h * scale * Dy[p]]).tocsr()
    KKT = sps.bmat([[A, C.T], [C, None]], format="csc")
    b = np.concatenate([rhs, np.zeros(3)])
    lu = spla.splu(KKT)
    sol = lu.solve(b)
    for _ in range(2):
        sol += lu.solve(b - KKT @ sol)
    psi = sol[: n * n].reshape(n, n)
    mis = np.stack([Dxx @ sol[: n * n] - target[..., 0, 0].ravel(),
                    Dxy @ sol[: n * n] - target[..., 0, 1].ravel(),
                    Dyy @ sol[: n * n] - target[..., 1, 1].ravel()])
    wr = grid.weights.ravel()
    num = np.sum(wr * (mis[0] ** 2 + 2 * mis[1] ** 2 + mis[2] ** 2))
    den = np.sum(wr * (target[..., 0, 0] ** 2 + 2 * target[..., 0, 1] ** 2 + target[..., 1, 1] ** 2).ravel())
    residual = float(np.sqrt(num / den)) if den > 0 else float(np.sqrt(num))
    return AiryField(grid, psi, anchor, residual)


# ----------------------------------------------------------------------------
# transformed system

def coupling_tensor(grad_theta: np.ndarray, grad_u3: np.ndarray) -> np.ndarray:
    """``K = R sym(grad theta (x) grad u3)``."""
    return rperp_conjugate(sym_part(np.einsum("...i,...j->...ij", grad_theta, grad_u3)))


def _sine_square_bumps(grid: Grid, modes: int = 2):
    """Test functions vanishing with their gradient on the boundary, with Hessians."""
    X, Y = grid.mesh
    for k in range(1, modes + 1):
        for l in range(1, modes + 1):
            a, b = k * np.pi, l * np.pi
            fx, fy = np.sin(a * X) ** 2, np.sin(b * Y) ** 2
            dfx, dfy = a * np.sin(2 * a * X), b * np.sin(2 * b * Y)
            ddfx, ddfy = 2 * a * a * np.cos(2 * a * X), 2 * b * b * np.cos(2 * b * Y)
            yield fx * fy, np.stack([dfx * fy, fx * dfy], -1), \
                np.stack([np.stack([ddfx * fy, dfx * dfy], -1), np.stack([dfx * dfy, fx * ddfy], -1)], -2)


@dataclass
class Shell2Residual:
    r1: float
    r2: float

    def as_tuple(self) -> tuple[float, float]:
        return self.r1, self.r2


def shell2_residual(state, psi: AiryField, theta, forcing=None) -> Shell2Residual:
    """Weak residuals of both transformed equations.

    Each equation ``div div T - div q = g`` is tested against bumps ``phi``
    that vanish with their gradient on the boundary:
    ``<T : Hess phi> + <q . grad phi> - <g phi>``, relative to the sum of
    the absolute sizes of the three terms.  Weak testing keeps the residual
    meaningful for discontinuous coefficients.
    """
    grid = state.grid
    X, Y = grid.mesh
    w = grid.weights
    lam, mu = state.moduli
    H = psi.hessian
    gt = theta.grad(X, Y)
    T1 = apply_iso_field(*iso_fields(lam, mu, "L"), H) - coupling_tensor(gt, state.grad_u3)
    T2 = state.m
    q2 = np.einsum("...ij,...j->...i", rperp_conjugate(H), gt)
    g = np.zeros_like(X) if forcing is None else np.asarray(forcing.g(X, Y)) + 0 * X
    r1 = r2 = 0.0
    for phi, dphi, hphi in _sine_square_bumps(grid):
        a1 = np.sum(w * np.einsum("...ij,...ij->...", T1, hphi))
        s1 = np.sum(w * np.abs(np.einsum("...ij,...ij->...", T1, hphi)))
        a2 = np.sum(w * np.einsum("...ij,...ij->...", T2, hphi))
        b2 = np.sum(w * np.einsum("...i,...i->...", q2, dphi))
        c2 = np.sum(w * g * phi)
        s2 = np.sum(w * (np.abs(np.einsum("...ij,...ij->...", T2, hphi))
                         + np.abs(np.einsum("...i,...i->...", q2, dphi)) + np.abs(g * phi)))
        r1 = max(r1, abs(a1) / s1 if s1 > 0 else abs(a1))
        r2 = max(r2, abs(a2 + b2 - c2) / s2 if s2 > 0 else abs(a2 + b2 - c2))
    return Shell2Residual(float(r1), float(r2))


# ----------------------------------------------------------------------------
# boundary data of psi

@dataclass
class TransformedCauchy:
    """Per-edge Neumann data of the first transformed equation.

    ``sigma_nn = t . u'_t`` and ``sigma_shear = -(n . u'_t)_t`` belong to
    ``sigma = L Hess psi - K = R eps(u')``; the ``K_*`` traces are built from
    ``(u3, u3_n)`` and ``theta``.  ``psi_nn`` and ``psi_shear`` are the
    corresponding traces of ``L Hess psi`` (``(T n . n)`` and
    ``div T . n + (T n . t)_t``).
    """

    sigma_nn: list[np.ndarray]
    sigma_shear: list[np.ndarray]
    K_nt: list[np.ndarray]
    K_nn: list[np.ndarray]
    div_K_n: list[np.ndarray]

    @property
    def psi_nn(self) -> list[np.ndarray]:
        return [a + b for a, b in zip(self.sigma_nn, self.K_nn)]

    def psi_shear(self, frame: BoundaryFrame) -> list[np.ndarray]:
        return [a + b + e.d_t(c) for a, b, c, e in zip(self.sigma_shear, self.div_K_n, self.K_nt, frame)]


def u3_boundary_gradient(u3: np.ndarray, u3n: np.ndarray, edge) -> np.ndarray:
    """``grad u3 = u3_t t + u3_n n`` from Dirichlet data on one edge."""
    return edge.d_t(u3)[:, None] * edge.tangent + np.asarray(u3n)[:, None] * edge.normal


def div_K_normal(grad_theta: np.ndarray, hess_theta: np.ndarray, grad_u3: np.ndarray,
                 grad_u3_t: np.ndarray, normal: np.ndarray) -> np.ndarray:
    """``div K . n`` on an edge from boundary quantities only.

    ``grad_u3_t`` is the tangential derivative of ``grad u3`` along the
    edge; no normal derivative of ``grad u3`` is needed.
    """
    t1, t2 = grad_theta[:, 0], grad_theta[:, 1]
    h11, h12, h22 = hess_theta[:, 0, 0], hess_theta[:, 0, 1], hess_theta[:, 1, 1]
    v1, v2 = grad_u3[:, 0], grad_u3[:, 1]
    n1, n2 = normal
    return 0.5 * (t2 * grad_u3_t[:, 0] - t1 * grad_u3_t[:, 1]
                  + (h12 * v2 - h22 * v1) * n1 + (-h11 * v2 + h12 * v1) * n2)


def cauchy_from_displacement(bundle, theta, frame: BoundaryFrame) -> TransformedCauchy:
    """Neumann data of the first transformed equation from Dirichlet data."""
    for name in ("u", "u3", "u3n"):
        if getattr(bundle, name, None) is None:
            raise ValueError(f"boundary bundle lacks the {name!r} trace")
    out = {k: [] for k in ("sigma_nn", "sigma_shear", "K_nt", "K_nn", "div_K_n")}
    for e, u, u3, u3n in zip(frame, bundle.u, bundle.u3, bundle.u3n):
        n_, t_ = e.normal, e.tangent
        # second tangential derivatives use the direct stencil; composing two
        # one-sided first derivatives loses an order at the edge ends
        u_t = e.d_t(u)
        out["sigma_nn"].append(u_t @ t_)
        out["sigma_shear"].append(-(e.d_tt(u) @ n_))
        X, Y = e.xy[:, 0], e.xy[:, 1]
        gt, ht = theta.grad(X, Y), theta.hess(X, Y)
        g3 = u3_boundary_gradient(u3, u3n, e)
        K = coupling_tensor(gt, g3)
        Kn = K @ n_
        out["K_nt"].append(Kn @ t_)
        out["K_nn"].append(Kn @ n_)
        g3_t = e.d_tt(u3)[:, None] * t_ + e.d_t(u3n)[:, None] * n_
        out["div_K_n"].append(div_K_normal(gt, ht, g3, g3_t, n_))
    return TransformedCauchy(**out)


@dataclass
class PsiBoundary:
    """Boundary values of ``psi`` and its gradient integrated from the traction."""

    traces: list[ScalarTrace]
    grad: list[np.ndarray]
    grad_t: list[np.ndarray]
    force_closure: float
    moment_closure: float


def dirichlet_psi_from_traction(sn: list[np.ndarray], frame: BoundaryFrame,
                                reference: AiryField | None = None,
                                balance_tol: float = 1e-2) -> PsiBoundary:
    """Integrate ``(grad psi)_t = R_perp^T (s n)`` around the boundary.

    The walk starts at the corner (0, 0) with ``psi = 0``, ``grad psi = 0``.
    Net force (gradient closure) and moment (value closure) must vanish
    relative to the traction size; the small discrete closure error is
    spread linearly in arc length.  With ``reference`` the affine gauge is
    chosen to agree with that field at the corners (0,0), (1,0) and (0,1).
    """
    edges = list(frame)
    gts = [np.asarray(v, dtype=float) @ R_PERP for v in sn]  # rows: R_perp^T (s n)
    scale = sum(float(np.sum(e.weights * np.linalg.norm(v, axis=1))) for e, v in zip(edges, sn))
    perim = 4.0
    floor = 1e-12  # tractions below this are round-off; relative closure is meaningless

    grads, arcs, start, s0 = [], [], np.zeros(2), 0.0
    for e, gt in zip(edges, gts):
        steps = 0.5 * e.h * (gt[1:] + gt[:-1])
        g = start + np.concatenate([np.zeros((1, 2)), np.cumsum(steps, axis=0)])
        grads.append(g)
        arcs.append(s0 + e.h * np.arange(e.size))
        start, s0 = g[-1], s0 + e.h * (e.size - 1)
    force = grads[-1][-1]
    rel_force = float(np.linalg.norm(force) / max(scale, floor))
    if rel_force > balance_tol:
        raise UnbalancedTractionError(
            f"boundary traction has a net force (relative size {rel_force:.3g}); "
            "psi is single-valued only for balanced loads")
    grads = [g - np.outer(a / perim, force) for g, a in zip(grads, arcs)]

    vals, start = [], 0.0
    for e, g, gt in zip(edges, grads, gts):
        f = g @ e.tangent
        df = gt @ e.tangent
        steps = 0.5 * e.h * (f[1:] + f[:-1]) + e.h**2 / 12 * (df[:-1] - df[1:])
        v = start + np.concatenate([[0.0], np.cumsum(steps)])
        vals.append(v)
        start = v[-1]
    moment = vals[-1][-1]
    gscale = sum(float(np.sum(e.weights * np.linalg.norm(g, axis=1))) for e, g in zip(edges, grads))
    rel_moment = float(abs(moment) / max(gscale, floor))
    if rel_moment > balance_tol:
        raise UnbalancedTractionError(
            f"boundary traction has a net moment (relative size {rel_moment:.3g})")
    vals = [v - a / perim * moment for v, a in zip(vals, arcs)]

    if reference is not None:
        n = reference.grid.n
        nodes = [(0, 0), (n - 1, 0), (0, n - 1)]
        own = {}
        for e, v in zip(edges, vals):
            for k, ij in enumerate(zip(e.i.tolist(), e.j.tolist())):
                own.setdefault(ij, v[k])
        h = reference.grid.h
        M = np.array([[1.0, i * h, j * h] for i, j in nodes])
        d = np.array([reference.psi[ij] - own[ij] for ij in nodes])
        c = np.linalg.solve(M, d)
        vals = [v + c[0] + c[1] * e.xy[:, 0] + c[2] * e.xy[:, 1] for e, v in zip(edges, vals)]
        grads = [g + c[1:] for g in grads]

    traces = [ScalarTrace(v, g @ e.normal, g @ e.tangent, gt @ e.tangent)
              for e, v, g, gt in zip(edges, vals, grads, gts)]
    return PsiBoundary(traces, grads, gts, rel_force, rel_moment)


def field_cauchy_traces(state, psi: AiryField, theta, frame: BoundaryFrame) -> TransformedCauchy:
    """The same traces as :func:`cauchy_from_displacement`, taken from fields.

    ``sigma = L Hess psi - K`` is built from the reconstructed ``psi`` and
    the solved ``u3``; normal and divergence traces are read off with grid
    stencils.  Used to check the boundary correspondence.
    """
    grid = state.grid
    X, Y = grid.mesh
    lam, mu = state.moduli
    K = coupling_tensor(theta.grad(X, Y), state.grad_u3)
    sigma = apply_iso_field(*iso_fields(lam, mu, "L"), psi.hessian) - K
    dsig, dK = divergence(sigma, grid), divergence(K, grid)
    out = {k: [] for k in ("sigma_nn", "sigma_shear", "K_nt", "K_nn", "div_K_n")}
    for e in frame:
        n_, t_ = e.normal, e.tangent
        sn, Kn = e.restrict(sigma) @ n_, e.restrict(K) @ n_
        out["sigma_nn"].append(sn @ n_)
        out["sigma_shear"].append(e.restrict(dsig) @ n_ + e.d_t(sn @ t_))
        out["K_nt"].append(Kn @ t_)
        out["K_nn"].append(Kn @ n_)
        out["div_K_n"].append(e.restrict(dK) @ n_)
    return TransformedCauchy(**out)


__all__ = [
    "AiryField", "DivergenceError", "PsiBoundary", "Shell2Residual", "TransformedCauchy",
    "UnbalancedTractionError", "airy_reconstruct", "cauchy_from_displacement", "coupling_tensor",
    "dirichlet_psi_from_traction", "div_K_normal", "field_cauchy_traces", "hessian_operators",
    "shell2_residual", "u3_boundary_gradient", "weak_divergence",
]
