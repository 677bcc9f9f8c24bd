"""
Moments of the Airy Hessian and of the bending Hessian that are determined
by boundary data, each with a boundary form and a volume form.

Every boundary form is accumulated edge by edge.  Where an identity
involves a tangential derivative it is integrated by parts on the edge
itself, so corners contribute explicit endpoint terms instead of
derivatives across a kink.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .airy_transform import (
    AiryField,
    PsiBoundary,
    cauchy_from_displacement,
    coupling_tensor,
    dirichlet_psi_from_traction,
    div_K_normal,
    u3_boundary_gradient,
)
from .domain_fields import (
    BoundaryFrame,
    Grid,
    ScalarTrace,
    boundary_integral,
    divergence,
    hessian,
    volume_average,
)
from .tensor_algebra import apply_iso_field, det2, iso_fields, rperp_conjugate, sym_part


class BoundaryOnlyError(ValueError):
    """A moment was requested from boundary data alone where it needs interior fields."""


class FieldFallbackWarning(UserWarning):
    """A moment was completed with interior field values."""


class InconsistentTracesError(ValueError):
    """Boundary traces give a clearly negative energy."""


AREA = 1.0  # |Omega| for the unit square

# Quadratic multipliers phi with their gradients; Hess phi is E11, E12 + E21, E22.
_MULTIPLIERS = {
    "11": (lambda x, y: x * x / 2, lambda x, y: np.stack([x, 0 * x], -1)),
    "12": (lambda x, y: x * y, lambda x, y: np.stack([y, x], -1)),
    "22": (lambda x, y: y * y / 2, lambda x, y: np.stack([0 * x, y], -1)),
}


# ----------------------------------------------------------------------------
# Dirichlet-determined moments

def a0_from_boundary(traces: list[ScalarTrace], frame: BoundaryFrame, skew_tol: float = 1e-2,
                     return_skew: bool = False):
    """``<Hess f>`` from ``int n (x) grad f``; also serves the bending Hessian.

    The skew part of the boundary integral must vanish; it is checked
    against ``skew_tol`` relative to the size of the integrand.
    """
    vals, mags = [], []
    for tr, e in zip(traces, frame):
        g = tr.gradient(e)
        vals.append(np.einsum("i,kj->kij", e.normal, g))
        mags.append(np.linalg.norm(g, axis=1))
    full = boundary_integral(vals, frame) / AREA
    skew = 0.5 * (full[0, 1] - full[1, 0])
    scale = max(float(np.linalg.norm(full)), float(boundary_integral(mags, frame)) * 1e-3, 1e-12)
    if abs(skew) > skew_tol * scale:
        raise InconsistentTracesError(f"boundary Hessian average has skew part {skew:.3e}")
    out = sym_part(full)
    return (out, float(skew)) if return_skew else out


def _hessian_column(tr: ScalarTrace, e) -> np.ndarray:
    """Column ``k`` of ``Hess f`` on an edge whose tangent is ``+-e_k``."""
    k = int(np.argmax(np.abs(e.tangent)))
    return e.tangent[k] * tr.gradient_t(e)


def c0_forms(traces: list[ScalarTrace], frame: BoundaryFrame) -> tuple[float, float]:
    """Both Cartesian boundary forms of ``<det Hess f>``.

    ``int f_1 f_22 n1 - f_1 f_12 n2`` and ``int f_2 f_11 n2 - f_2 f_12 n1``;
    on a straight edge only one normal component survives and the second
    derivative it needs is a tangential derivative of ``grad f``.
    """
    f1, f2 = [], []
    for tr, e in zip(traces, frame):
        g, col = tr.gradient(e), _hessian_column(tr, e)
        n1, n2 = e.normal
        f1.append(g[:, 0] * col[:, 1] * (n1 - n2))
        f2.append(g[:, 1] * col[:, 0] * (n2 - n1))
    return float(boundary_integral(f1, frame)) / AREA, float(boundary_integral(f2, frame)) / AREA


def c0_from_boundary(traces: list[ScalarTrace], frame: BoundaryFrame) -> float:
    return c0_forms(traces, frame)[0]


def dirichlet_trace(values: np.ndarray, dn: np.ndarray, e) -> ScalarTrace:
    return ScalarTrace(np.asarray(values, dtype=float), np.asarray(dn, dtype=float),
                       e.d_t(values), e.d_tt(values))


def u3_traces(bundle, frame: BoundaryFrame) -> list[ScalarTrace]:
    return [dirichlet_trace(u3, u3n, e) for u3, u3n, e in zip(bundle.u3, bundle.u3n, frame)]


# ----------------------------------------------------------------------------
# Green identity with edge-wise integration by parts

def _corner_grad_u(bundle, frame: BoundaryFrame) -> list[tuple[np.ndarray, np.ndarray]]:
    """``grad u'`` at the start and end corner of every edge.

    At a corner the tangential derivatives along the two incident edges
    span the plane, so the full gradient is known from Dirichlet data.
    """
    edges = list(frame)
    ut = [e.d_t(u) for e, u in zip(edges, bundle.u)]
    out = []
    for k, e in enumerate(edges):
        prev, nxt = (k - 1) % 4, (k + 1) % 4
        start = np.outer(ut[k][0], e.tangent) + np.outer(ut[prev][-1], edges[prev].tangent)
        end = np.outer(ut[k][-1], e.tangent) + np.outer(ut[nxt][0], edges[nxt].tangent)
        out.append((start, end))
    return out


def _green_edgewise(tnn, shear, corner_nt, weight, weight_n, frame) -> float:
    """``sum_edges int T n . grad w - div T . n w`` after edge-wise integration by parts.

    ``tnn`` = ``Tn . n``, ``shear`` = ``div T . n + (Tn . t)_t`` and
    ``corner_nt`` the pair ``(Tn . t)`` at the start and end node.
    """
    total = 0.0
    for e, a, b, (c0, c1), w, wn in zip(frame, tnn, shear, corner_nt, weight, weight_n):
        total += float(np.sum(e.weights * (a * wn - b * w)))
        total += c1 * w[-1] - c0 * w[0]
    return total


def _sigma_corner_nt(bundle, frame: BoundaryFrame):
    out = []
    for e, (gs, ge) in zip(frame, _corner_grad_u(bundle, frame)):
        vals = []
        for G in (gs, ge):
            sig = rperp_conjugate(sym_part(G))
            vals.append(float(e.normal @ sig @ e.tangent))
        out.append(tuple(vals))
    return out


def _m_corner_nt(bundle, frame: BoundaryFrame):
    return [(float(mn[0] @ e.tangent), float(mn[-1] @ e.tangent)) for e, mn in zip(frame, bundle.mn)]


def _multiplier_traces(frame: BoundaryFrame, key: str):
    phi, grad = _MULTIPLIERS[key]
    w, wn = [], []
    for e in frame:
        x, y = e.xy[:, 0], e.xy[:, 1]
        w.append(phi(x, y))
        wn.append(grad(x, y) @ e.normal)
    return w, wn


def _assemble_average(values: dict[str, float], half_mixed: bool) -> np.ndarray:
    off = values["12"] if half_mixed else values["12"] / 2
    return np.array([[values["11"], off], [off, values["22"]]]) / AREA


def sigma_average(bundle, theta, frame: BoundaryFrame, half_mixed: bool = False) -> np.ndarray:
    """``<L Hess psi - K>`` from the displacement on the boundary.

    ``half_mixed`` uses ``x1 x2 / 2`` as the mixed multiplier instead of
    ``x1 x2``; both give the same average.
    """
    tc = cauchy_from_displacement(bundle, theta, frame)
    corners = _sigma_corner_nt(bundle, frame)
    vals = {}
    for key in _MULTIPLIERS:
        w, wn = _multiplier_traces(frame, key)
        if half_mixed and key == "12":
            w, wn = [v / 2 for v in w], [v / 2 for v in wn]
        vals[key] = _green_edgewise(tc.sigma_nn, tc.sigma_shear, corners, w, wn, frame)
    return _assemble_average(vals, half_mixed)


def _require_state(state, what: str):
    if state is None:
        raise BoundaryOnlyError(f"{what} needs interior fields for a curved shell profile; pass state=")


def b0_from_cauchy(bundle, theta, frame: BoundaryFrame, strict: bool = False, state=None,
                   half_mixed: bool = False) -> np.ndarray:
    """``<L Hess psi>`` = ``<sigma>`` + ``<K>``.

    ``<sigma>`` always comes from boundary data.  For an affine profile,
    ``<K> = R sym(grad theta (x) int u3 n)`` is boundary data too.  For a
    curved profile ``<K>`` needs interior ``u3``: ``strict`` raises
    :class:`BoundaryOnlyError`, otherwise the field average of ``state`` is
    used with a :class:`FieldFallbackWarning`.
    """
    sig = sigma_average(bundle, theta, frame, half_mixed)
    if theta.is_affine:
        c = theta.grad(np.zeros(1), np.zeros(1))[0]
        mean_grad_u3 = boundary_integral([u3[:, None] * e.normal for u3, e in zip(bundle.u3, frame)], frame) / AREA
        return sig + rperp_conjugate(sym_part(np.outer(c, mean_grad_u3)))
    if strict:
        raise BoundaryOnlyError(
            f"<L Hess psi> is boundary-determined only for affine shell profiles; the "
            f"{theta.kind} profile couples to interior u3 through <R sym(grad theta (x) grad u3)>")
    _require_state(state, "<L Hess psi>")
    warnings.warn("b0 completed with the interior average of the coupling tensor", FieldFallbackWarning,
                  stacklevel=2)
    X, Y = state.grid.mesh
    K = coupling_tensor(theta.grad(X, Y), state.grad_u3)
    return sig + volume_average(K, state.grid)


def b0t_from_cauchy(bundle, theta, frame: BoundaryFrame, strict: bool = False, state=None,
                    half_mixed: bool = False) -> np.ndarray:
    """``<M Hess u3>`` from the bending Neumann data.

    ``div div m = div(s grad theta) = s : Hess theta``, which vanishes for
    affine profiles; otherwise the volume term ``<(s : Hess theta) phi>``
    is added from ``state`` (or :class:`BoundaryOnlyError` in strict mode).
    """
    corners = _m_corner_nt(bundle, frame)
    shear = [v + ts for v, ts in zip(bundle.shear, bundle.theta_sn)]  # div m . n + (mn . t)_t
    vals = {}
    for key in _MULTIPLIERS:
        w, wn = _multiplier_traces(frame, key)
        if half_mixed and key == "12":
            w, wn = [v / 2 for v in w], [v / 2 for v in wn]
        vals[key] = _green_edgewise(bundle.mnn, shear, corners, w, wn, frame)
    if not theta.is_affine:
        if strict:
            raise BoundaryOnlyError(
                f"<M Hess u3> is boundary-determined only for affine shell profiles; the "
                f"{theta.kind} profile adds the interior term <(s : Hess theta) phi>")
        _require_state(state, "<M Hess u3>")
        warnings.warn("b0t completed with an interior coupling term", FieldFallbackWarning, stacklevel=2)
        X, Y = state.grid.mesh
        src = np.einsum("...ij,...ij->...", state.s_theta, theta.hess(X, Y))
        for key, (phi, _) in _MULTIPLIERS.items():
            scale = 0.5 if (half_mixed and key == "12") else 1.0
            vals[key] += float(volume_average(src * phi(X, Y) * scale, state.grid)) * AREA
    return _assemble_average(vals, half_mixed)


# ----------------------------------------------------------------------------
# energy-type moments

def e0_from_cauchy(bundle, psi_bd: PsiBoundary, theta, frame: BoundaryFrame, tol: float = 1e-6,
                   return_parts: bool = False):
    """``<L Hess psi . Hess psi> + <M Hess u3 . Hess u3>`` from boundary data.

    Green's identity for ``sigma`` against ``psi`` and for ``m`` against
    ``u3``; the volume cross terms cancel, leaving ``int (grad theta . s n) u3``,
    which merges with ``div m . n`` into the Kirchhoff shear.
    """
    tc = cauchy_from_displacement(bundle, theta, frame)
    sig_c = _sigma_corner_nt(bundle, frame)
    psi_w = [tr.value for tr in psi_bd.traces]
    psi_n = [tr.dn for tr in psi_bd.traces]
    membrane = _green_edgewise(tc.sigma_nn, tc.sigma_shear, sig_c, psi_w, psi_n, frame)
    bending = _green_edgewise(bundle.mnn, bundle.shear, _m_corner_nt(bundle, frame),
                              bundle.u3, bundle.u3n, frame)
    e0 = (membrane + bending) / AREA
    scale = abs(membrane) + abs(bending)
    if e0 < -tol * max(1.0, scale):
        raise InconsistentTracesError(f"boundary energy is negative ({e0:.3e})")
    if return_parts:
        return e0, membrane / AREA, bending / AREA
    return e0


def B_term(psi_traces: list[ScalarTrace], u3_tr: list[ScalarTrace], theta, frame: BoundaryFrame) -> float:
    """Coupling null-Lagrangian from ``(psi, psi_n, u3, u3_n)`` on the boundary.

    ``B = int (K n) . grad psi - (div K . n) psi - (grad theta . s n) u3``
    with ``s n = R_perp (grad psi)_t``.
    """
    from .tensor_algebra import R_PERP

    vals = []
    for tp, tu, e in zip(psi_traces, u3_tr, frame):
        X, Y = e.xy[:, 0], e.xy[:, 1]
        gt, ht = theta.grad(X, Y), theta.hess(X, Y)
        g3 = tu.gradient(e)
        K = coupling_tensor(gt, g3)
        gpsi = tp.gradient(e)
        sn = tp.gradient_t(e) @ R_PERP.T
        dKn = div_K_normal(gt, ht, g3, e.d_t(g3), e.normal)
        vals.append(np.einsum("kij,j,ki->k", K, e.normal, gpsi) - dKn * tp.value
                    - np.einsum("ki,ki->k", gt, sn) * tu.value)
    return float(boundary_integral(vals, frame)) / AREA


def B_volume(psi: np.ndarray, u3: np.ndarray, theta, grid: Grid) -> float:
    """``-< div div K psi + div(R Hess psi grad theta) u3 >`` by grid stencils."""
    X, Y = grid.mesh
    gt = theta.grad(X, Y)
    from .domain_fields import gradient

    K = coupling_tensor(gt, gradient(u3, grid))
    ddK = divergence(divergence(K, grid), grid)
    q = np.einsum("...ij,...j->...i", rperp_conjugate(hessian(psi, grid)), gt)
    return -float(volume_average(ddK * psi + divergence(q, grid) * u3, grid))


# ----------------------------------------------------------------------------
# moment sets

_KEYS = ("a0", "b0", "c0", "e0", "B", "a0t", "b0t", "c0t")


@dataclass
class MomentSet:
    a0: np.ndarray
    b0: np.ndarray
    c0: float
    e0: float
    B: float
    a0t: np.ndarray
    b0t: np.ndarray
    c0t: float
    provenance: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @classmethod
    def zeros(cls, provenance: str = "from_boundary") -> "MomentSet":
        z = np.zeros((2, 2))
        return cls(z, z.copy(), 0.0, 0.0, 0.0, z.copy(), z.copy(), 0.0, {k: provenance for k in _KEYS})

    def to_dict(self) -> dict:
        out = {}
        for k in _KEYS:
            v = getattr(self, k)
            out[k] = np.asarray(v).tolist() if isinstance(v, np.ndarray) else float(v)
        out["provenance"] = dict(self.provenance)
        out["diagnostics"] = {k: (np.asarray(v).tolist() if isinstance(v, np.ndarray) else v)
                              for k, v in self.diagnostics.items()}
        return out

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "MomentSet":
        vals = {k: (np.array(d[k]) if isinstance(d[k], list) else float(d[k])) for k in _KEYS}
        return cls(**vals, provenance=dict(d.get("provenance", {})), diagnostics=dict(d.get("diagnostics", {})))

    def discrepancy(self, other: "MomentSet") -> dict:
        """Relative differences entry by entry, ``other`` being the reference.

        Determinant-type scalars are normalized by at least the squared size
        of the matching Hessian average, and ``B`` by a small multiple of the
        energy, so that a moment that vanishes by symmetry does not turn
        round-off into an order-one relative error.
        """
        floors = {"c0": float(np.linalg.norm(other.a0)) ** 2, "c0t": float(np.linalg.norm(other.a0t)) ** 2,
                  "B": 1e-6 * max(1.0, abs(float(other.e0)))}
        out = {}
        for k in _KEYS:
            a, b = np.asarray(getattr(self, k), dtype=float), np.asarray(getattr(other, k), dtype=float)
            den = max(float(np.linalg.norm(b)), floors.get(k, 0.0))
            out[k] = float(np.linalg.norm(a - b) / den) if den > 1e-14 else float(np.linalg.norm(a - b))
        return out


def moments_from_field(state, psi: AiryField, theta) -> MomentSet:
    """Every moment by volume quadrature of grid fields."""
    grid = state.grid
    lam, mu = state.moduli
    H = psi.hessian
    H3 = state.hess_u3
    LH = apply_iso_field(*iso_fields(lam, mu, "L"), H)
    MH = apply_iso_field(*iso_fields(lam, mu, "M"), H3)
    e0 = float(volume_average(np.einsum("...ij,...ij->...", LH, H) + np.einsum("...ij,...ij->...", MH, H3), grid))
    return MomentSet(
        a0=volume_average(H, grid), b0=volume_average(LH, grid), c0=float(volume_average(det2(H), grid)),
        e0=e0, B=B_volume(psi.psi, state.u3, theta, grid),
        a0t=volume_average(H3, grid), b0t=volume_average(MH, grid), c0t=float(volume_average(det2(H3), grid)),
        provenance={k: "from_field" for k in _KEYS},
    )


def moments_from_boundary(bundle, theta, frame: BoundaryFrame, strict: bool = False, state=None,
                          reference: AiryField | None = None) -> MomentSet:
    """Every moment from a boundary bundle.

    ``psi`` and ``psi_n`` are integrated from the traction; ``reference``
    only fixes their affine gauge (which ``B`` depends on).
    """
    psi_bd = dirichlet_psi_from_traction(bundle.sn, frame, reference=reference)
    u3_tr = u3_traces(bundle, frame)
    a0, skew = a0_from_boundary(psi_bd.traces, frame, return_skew=True)
    a0t, skew_t = a0_from_boundary(u3_tr, frame, return_skew=True)
    c0, c0_alt = c0_forms(psi_bd.traces, frame)
    c0t, c0t_alt = c0_forms(u3_tr, frame)
    prov = {k: "from_boundary" for k in _KEYS}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", FieldFallbackWarning)
        b0 = b0_from_cauchy(bundle, theta, frame, strict=strict, state=state)
        b0t = b0t_from_cauchy(bundle, theta, frame, strict=strict, state=state)
    if caught:
        prov["b0"] = prov["b0t"] = "from_field"
        for w in caught:
            warnings.warn(w.message, w.category, stacklevel=2)
    e0, e_mem, e_bend = e0_from_cauchy(bundle, psi_bd, theta, frame, return_parts=True)
    B = B_term(psi_bd.traces, u3_tr, theta, frame)
    diag = {"a0_skew": skew, "a0t_skew": skew_t, "c0_second_form": c0_alt, "c0t_second_form": c0t_alt,
            "e0_membrane": e_mem, "e0_bending": e_bend,
            "traction_force_closure": psi_bd.force_closure, "traction_moment_closure": psi_bd.moment_closure}
    return MomentSet(a0, b0, c0, e0, B, a0t, b0t, c0t, prov, diag)
