import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from shellbounds.airy_transform import (
    AiryField,
    DivergenceError,
    UnbalancedTractionError,
    airy_reconstruct,
    cauchy_from_displacement,
    dirichlet_psi_from_traction,
    shell2_residual,
)
from shellbounds.domain_fields import _XY, BoundaryFrame, Grid, ShellProfile, make_phase_layout, volume_average
from shellbounds.forward_solver import BoundaryConditions, extract_cauchy, solve_shell
from shellbounds.oracle_suite import convergence_order, sample
from shellbounds.tensor_algebra import PhaseMaterial, rperp_conjugate, symmat

X, Y = _XY
FLAT = ShellProfile("flat")
PARA = ShellProfile("paraboloid", {"curvature": (0.6, 0.4)})
finite = st.floats(-10, 10)


def _stress_of(psi_expr, g):
    H = sp.hessian(psi_expr, _XY)
    Hn = np.stack([np.stack([sample(H[a, b], g) for b in range(2)], -1) for a in range(2)], -2)
    return rperp_conjugate(Hn)


def _remove_affine(f, g):
    Xg, Yg = g.mesh
    A = np.stack([np.ones(f.size), Xg.ravel(), Yg.ravel()], 1)
    c = np.linalg.lstsq(A, f.ravel(), rcond=None)[0]
    return f - (A @ c).reshape(f.shape)


def test_identity_stress_gives_paraboloid():
    g = Grid(17)
    psi = airy_reconstruct(np.broadcast_to(np.eye(2), (17, 17, 2, 2)), g)
    Xg, Yg = g.mesh
    np.testing.assert_allclose(psi.psi, ((Xg - 0.5) ** 2 + (Yg - 0.5) ** 2) / 2, atol=1e-10)
    assert psi.residual <= 1e-10


@given(st.tuples(*[finite] * 6))
def test_quadratic_round_trip(c):
    g = Grid(17)
    expr = c[0] * X**2 + c[1] * X * Y + c[2] * Y**2 + c[3] * X + c[4] * Y + c[5]
    psi = airy_reconstruct(_stress_of(expr, g), g)
    scale = 1 + max(abs(v) for v in c)
    np.testing.assert_allclose(_remove_affine(psi.psi, g), _remove_affine(sample(expr, g), g), atol=1e-10 * scale)


def test_smooth_round_trip_second_order():
    expr = sp.cos(X - 2 * Y) * sp.exp(Y / 2)
    errs = []
    for n in (33, 65, 129):
        g = Grid(n)
        psi = airy_reconstruct(_stress_of(expr, g), g)
        errs.append(np.abs(_remove_affine(psi.psi - sample(expr, g), g)).max())
    assert convergence_order(errs) >= 1.8


def test_non_equilibrium_stress_flagged():
    g = Grid(33)
    Xg, _ = g.mesh
    s = np.zeros((33, 33, 2, 2))
    s[..., 0, 0] = Xg
    with pytest.raises(DivergenceError):
        airy_reconstruct(s, g)


def test_gauge_independence():
    g = Grid(33)
    s = _stress_of(sp.sin(X + Y) * Y**2, g)
    a = airy_reconstruct(s, g)
    b = airy_reconstruct(s, g, anchor=(5, 20))
    assert b.psi[5, 20] == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(_remove_affine(a.psi - b.psi, g), 0.0, atol=1e-10)
    np.testing.assert_allclose(volume_average(a.hessian, g), volume_average(b.hessian, g), atol=1e-12)


@given(st.tuples(*[finite] * 7))
def test_pointwise_coupling_identity(v):
    gt, g3, H = np.array(v[:2]), np.array(v[2:4]), symmat(*v[4:])
    lhs = np.sum(np.outer(gt, g3) * rperp_conjugate(H))
    rhs = (rperp_conjugate(H) @ gt) @ g3
    assert lhs == pytest.approx(rhs, abs=1e-14 * (1 + np.abs(v).max() ** 3))


def _state(n, mat, geo, theta, loading, **kw):
    g = Grid(n)
    fr = BoundaryFrame(g)
    lay = make_phase_layout(geo, mat, g, **kw)
    state, _ = solve_shell(g, lay, theta, BoundaryConditions.catalog(fr, loading))
    return g, fr, state


def test_shell2_residual_vanishes_on_constant_fields():
    mat = PhaseMaterial(0.5, 1.0, 0.5, 1.0)
    g, fr, state = _state(17, mat, None, FLAT, "uniaxial-stretch+shear+bend-x+twist")
    psi = airy_reconstruct(state.s_theta, g)
    r = shell2_residual(state, psi, FLAT)
    assert max(r.as_tuple()) <= 1e-10


def test_shell2_residual_decreases_mollified_disk():
    mat = PhaseMaterial(1.0, 2.0, 0.5, 1.0)
    disk = {"kind": "disk", "center": (0.5, 0.5), "radius": 0.25}
    res = []
    for n in (33, 65, 129):
        g, fr, state = _state(n, mat, disk, PARA, "uniaxial-stretch+bend-x", smoothing_length=0.06)
        res.append(shell2_residual(state, airy_reconstruct(state.s_theta, g), PARA).as_tuple())
    r1, r2 = zip(*res)
    assert r1[0] > r1[1] > r1[2] and r2[0] > r2[1] > r2[2]


def test_rigid_motion_traces_vanish():
    fr = BoundaryFrame(Grid(17))
    bc = BoundaryConditions.from_fields(fr, 0.3 - 0.5 * Y, -1 + 0.5 * X, 0)
    tc = cauchy_from_displacement(bc, FLAT, fr)
    for arrs in (tc.sigma_nn, tc.sigma_shear, tc.K_nn, tc.K_nt, tc.div_K_n):
        assert max(np.abs(a).max() for a in arrs) <= 1e-12


def test_uniaxial_stretch_tangential_trace():
    fr = BoundaryFrame(Grid(17))
    tc = cauchy_from_displacement(BoundaryConditions.from_fields(fr, X, 0, 0), FLAT, fr)
    np.testing.assert_allclose(tc.sigma_nn[0], 1.0, atol=1e-12)   # bottom edge, t = e1
    np.testing.assert_allclose(tc.sigma_nn[1], 0.0, atol=1e-12)   # right edge, t = e2


def test_traction_balance_checked():
    g = Grid(17)
    fr = BoundaryFrame(g)
    sn = [np.tile(e.normal, (e.size, 1)) for e in fr]
    dirichlet_psi_from_traction(sn, fr)
    sn[1] = sn[1] + np.array([1.0, 0.0])
    with pytest.raises(UnbalancedTractionError):
        dirichlet_psi_from_traction(sn, fr)


def test_constant_stress_boundary_psi_matches_reconstruction():
    g = Grid(17)
    fr = BoundaryFrame(g)
    ref = airy_reconstruct(np.broadcast_to(np.eye(2), (17, 17, 2, 2)), g)
    bd = dirichlet_psi_from_traction([np.tile(e.normal, (e.size, 1)) for e in fr], fr, reference=ref)
    for tr, rt in zip(bd.traces, ref.trace(fr)):
        np.testing.assert_allclose(tr.value, rt.value, atol=1e-10)
        np.testing.assert_allclose(tr.dn, rt.dn, atol=1e-10)


def test_boundary_psi_round_trip_second_order():
    expr = sp.sin(X + 2 * Y) + X**3 * Y / 3
    errs = []
    for n in (33, 65, 129):
        g = Grid(n)
        fr = BoundaryFrame(g)
        s = _stress_of(expr, g)
        exact = AiryField(g, sample(expr, g), g.center, 0.0)
        bd = dirichlet_psi_from_traction([e.restrict(s) @ e.normal for e in fr], fr, reference=exact)
        gx, gy = (sp.lambdify(_XY, sp.diff(expr, v)) for v in _XY)
        worst = 0.0
        for tr, e in zip(bd.traces, fr):
            grad = np.stack([gx(*e.xy.T), gy(*e.xy.T)], 1)
            worst = max(worst, np.abs(tr.value - e.restrict(exact.psi)).max(),
                        np.abs(tr.dn - grad @ e.normal).max())
        errs.append(worst)
    assert convergence_order(errs) >= 1.8


def test_solved_state_traction_is_balanced():
    mat = PhaseMaterial(1.0, 2.0, 0.5, 1.0)
    g, fr, state = _state(33, mat, {"kind": "disk", "center": (0.5, 0.5), "radius": 0.25}, PARA,
                          "uniaxial-stretch+twist")
    bd = dirichlet_psi_from_traction(extract_cauchy(state, fr).sn, fr)
    assert bd.force_closure < 1e-2 and bd.moment_closure < 1e-2
