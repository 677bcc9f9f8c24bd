import json
import warnings

import numpy as np
import pytest
import sympy as sp

from shellbounds.airy_transform import airy_reconstruct
from shellbounds.boundary_functionals import (
    B_term,
    B_volume,
    BoundaryOnlyError,
    FieldFallbackWarning,
    MomentSet,
    a0_from_boundary,
    b0_from_cauchy,
    b0t_from_cauchy,
    c0_forms,
    c0_from_boundary,
    dirichlet_trace,
    moments_from_boundary,
    moments_from_field,
)
from shellbounds.domain_fields import _XY, BoundaryFrame, Grid, ShellProfile, hessian, make_phase_layout, volume_average
from shellbounds.forward_solver import BoundaryConditions, extract_cauchy, solve_shell
from shellbounds.oracle_suite import convergence_order, random_smooth_field, sample

X, Y = _XY
FLAT = ShellProfile("flat")
AFFINE = ShellProfile("affine", {"slope": (0.3, -0.2)})
PARA = ShellProfile("paraboloid", {"curvature": (0.6, 0.4)})
from shellbounds.tensor_algebra import PhaseMaterial  # noqa: E402

UNIT = PhaseMaterial(0.0, 1.0, 0.0, 1.0)  # lambda = 0, mu = 1 in both phases
TWO = PhaseMaterial(1.0, 2.0, 0.5, 1.0)
DISK = {"kind": "disk", "center": (0.5, 0.5), "radius": 0.25}


def exact_traces(expr, frame):
    """Traces of an analytic field with the exact normal derivative."""
    gx, gy = (sp.lambdify(_XY, sp.diff(expr, v)) for v in _XY)
    f = sp.lambdify(_XY, expr)
    out = []
    for e in frame:
        x, y = e.xy.T
        z = 0 * x
        dn = (gx(x, y) + z) * e.normal[0] + (gy(x, y) + z) * e.normal[1]
        out.append(dirichlet_trace(f(x, y) + z, dn, e))
    return out


def _run(n, mat, geo, theta, fields, **kw):
    g = Grid(n)
    fr = BoundaryFrame(g)
    lay = make_phase_layout(geo, mat, g, **kw)
    state, _ = solve_shell(g, lay, theta, BoundaryConditions.from_fields(fr, *fields))
    return g, fr, state, extract_cauchy(state, fr)


@pytest.mark.parametrize("expr,expected", [(X * Y, [[0, 1], [1, 0]]), (X**3, [[3, 0], [0, 0]])])
def test_a0_examples(expr, expected):
    fr = BoundaryFrame(Grid(129))
    np.testing.assert_allclose(a0_from_boundary(exact_traces(expr, fr), fr), expected, atol=1e-3)


def test_a0_exact_for_quadratics():
    fr = BoundaryFrame(Grid(17))
    np.testing.assert_allclose(a0_from_boundary(exact_traces(X * Y, fr), fr), [[0, 1], [1, 0]], atol=1e-12)


@pytest.mark.parametrize("expr,expected", [((X**2 + Y**2) / 2, 1.0), (X * Y, -1.0)])
def test_c0_examples(expr, expected):
    fr = BoundaryFrame(Grid(17))
    tr = exact_traces(expr, fr)
    assert c0_from_boundary(tr, fr) == pytest.approx(expected, abs=1e-12)
    a, b = c0_forms(tr, fr)
    assert a == pytest.approx(b, abs=1e-12)


def test_bicubic_a0_c0_second_order():
    rng = np.random.default_rng(11)
    expr = sum(sp.Float(rng.normal()) * X**i * Y**j for i in range(4) for j in range(4))
    H = sp.hessian(expr, _XY)
    a_ex = np.array([[float(sp.integrate(H[a, b], (X, 0, 1), (Y, 0, 1))) for b in range(2)] for a in range(2)])
    c_ex = float(sp.integrate(H.det(), (X, 0, 1), (Y, 0, 1)))
    ea, ec, gap = [], [], []
    for n in (33, 65, 129):
        fr = BoundaryFrame(Grid(n))
        tr = exact_traces(expr, fr)
        ea.append(np.abs(a0_from_boundary(tr, fr) - a_ex).max())
        c1, c2 = c0_forms(tr, fr)
        ec.append(abs(c1 - c_ex))
        gap.append(abs(c1 - c2))
    assert convergence_order(ea) >= 1.8 and convergence_order(ec) >= 1.8
    assert gap[-1] < gap[0]


def test_skew_part_vanishes():
    fr = BoundaryFrame(Grid(65))
    expr = random_smooth_field(np.random.default_rng(3))
    _, skew = a0_from_boundary(exact_traces(expr, fr), fr, return_skew=True)
    assert abs(skew) < 1e-3


def test_b0_and_e0_membrane_example():
    # psi = x1^2 / 2 corresponds to u' = (0, x2 / 4) when lambda = 0, mu = 1
    g, fr, state, cb = _run(17, UNIT, None, FLAT, (0, Y / 4, 0))
    np.testing.assert_allclose(b0_from_cauchy(cb, FLAT, fr), [[0.25, 0], [0, 0]], atol=1e-12)
    ms = moments_from_boundary(cb, FLAT, fr)
    assert ms.e0 == pytest.approx(0.25, abs=1e-10)
    np.testing.assert_allclose(ms.a0, [[1, 0], [0, 0]], atol=1e-10)


def test_e0_bending_example():
    g, fr, state, cb = _run(17, UNIT, None, FLAT, (0, 0, X**2 / 2))
    ms = moments_from_boundary(cb, FLAT, fr)
    assert ms.e0 == pytest.approx(4 / 3, abs=1e-10)
    np.testing.assert_allclose(ms.b0t, [[4 / 3, 0], [0, 0]], atol=1e-10)
    np.testing.assert_allclose(ms.a0t, [[1, 0], [0, 0]], atol=1e-12)
    assert ms.c0t == pytest.approx(0.0, abs=1e-12)


def test_zero_state_moments():
    g, fr, state, cb = _run(17, TWO, DISK, PARA, (0, 0, 0))
    ms = moments_from_boundary(cb, FLAT, fr)
    for k, v in ms.to_dict().items():
        if k not in ("provenance", "diagnostics"):
            assert not np.any(v), k


def test_rigid_motion_has_zero_energy():
    g, fr, state, cb = _run(17, TWO, DISK, FLAT, (0.1 - 0.3 * Y, 0.2 + 0.3 * X, 0.5 + X - Y))
    assert moments_from_boundary(cb, FLAT, fr).e0 == pytest.approx(0.0, abs=1e-10)


def test_b0_affine_matches_volume():
    errs = []
    for n in (33, 65, 129):
        g, fr, state, cb = _run(n, TWO, DISK, AFFINE, (X + Y**2 / 3, X * Y / 4, (X - 0.5) ** 2 / 2),
                                smoothing_length=0.06)
        psi = airy_reconstruct(state.s_theta, g)
        ref = moments_from_field(state, psi, AFFINE)
        errs.append(np.abs(b0_from_cauchy(cb, AFFINE, fr) - ref.b0).max())
    assert errs[0] > errs[1] > errs[2]
    assert errs[-1] / np.abs(ref.b0).max() < 1e-2


def test_half_mixed_multiplier_same_b0():
    g, fr, state, cb = _run(33, TWO, DISK, AFFINE, (X, Y * X / 2, X * Y))
    np.testing.assert_allclose(b0_from_cauchy(cb, AFFINE, fr, half_mixed=True),
                               b0_from_cauchy(cb, AFFINE, fr), atol=1e-12)
    np.testing.assert_allclose(b0t_from_cauchy(cb, AFFINE, fr, half_mixed=True),
                               b0t_from_cauchy(cb, AFFINE, fr), atol=1e-12)


def test_curved_profile_modes():
    g, fr, state, cb = _run(33, TWO, DISK, PARA, (X, 0, (X - 0.5) ** 2 / 2))
    with pytest.raises(BoundaryOnlyError, match="affine"):
        b0_from_cauchy(cb, PARA, fr, strict=True)
    with pytest.raises(BoundaryOnlyError):
        b0t_from_cauchy(cb, PARA, fr, strict=True)
    with pytest.raises(BoundaryOnlyError):
        b0_from_cauchy(cb, PARA, fr)
    with pytest.warns(FieldFallbackWarning):
        b0_from_cauchy(cb, PARA, fr, state=state)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", FieldFallbackWarning)
        ms = moments_from_boundary(cb, PARA, fr, state=state)
    assert ms.provenance["b0"] != "from_boundary" and ms.provenance["a0"] == "from_boundary"


@pytest.mark.parametrize("theta,psi", [(ShellProfile("affine", {"slope": (0.0, 0.0)}), X**3 * Y),
                                       (PARA, sp.Integer(0))])
def test_B_zero_cases(theta, psi):
    fr = BoundaryFrame(Grid(33))
    val = B_term(exact_traces(psi, fr), exact_traces(sp.sin(X) * Y**2, fr), theta, fr)
    assert val == pytest.approx(0.0, abs=1e-14)


def test_B_boundary_matches_volume():
    theta = ShellProfile("paraboloid", {"curvature": (1.0, 0.0)})
    psi, u3 = X**2 * Y - Y**3 / 3 + X * Y, X**3 / 3 + X * Y**2
    errs = []
    for n in (33, 65, 129):
        g = Grid(n)
        fr = BoundaryFrame(g)
        bd = B_term(exact_traces(psi, fr), exact_traces(u3, fr), theta, fr)
        errs.append(abs(bd - B_volume(sample(psi, g), sample(u3, g), theta, g)))
    assert convergence_order(errs) >= 1.8


def test_moments_from_field_definition():
    g, fr, state, cb = _run(33, TWO, DISK, PARA, (X, X * Y / 5, (X - 0.5) * (Y - 0.5)))
    psi = airy_reconstruct(state.s_theta, g)
    ms = moments_from_field(state, psi, PARA)
    np.testing.assert_array_equal(ms.a0, volume_average(hessian(psi.psi, g), g))
    assert set(ms.provenance.values()) == {"from_field"}
    assert ms.e0 > 0


def test_moment_set_json_round_trip():
    g, fr, state, cb = _run(17, UNIT, None, AFFINE, (0, Y / 4, X**2 / 2))
    ms = moments_from_boundary(cb, AFFINE, fr)
    back = MomentSet.from_dict(json.loads(ms.to_json()))
    assert back.to_dict() == ms.to_dict()
    assert max(back.discrepancy(ms).values()) == 0.0
