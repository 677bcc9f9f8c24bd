import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shellbounds.tensor_algebra import (
    R_PERP,
    SQRT2,
    TRANSLATION_T,
    ConvexityError,
    IsoTensor2D,
    PhaseMaterial,
    bending_moment,
    det2,
    det_via_T,
    frobenius,
    iso_L,
    iso_M,
    membrane_compliance,
    membrane_stress,
    rperp_conjugate,
    sym_to_vec,
    symmat,
    translate,
    vec_to_sym,
    zeta_ranges,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)
sym = st.tuples(finite, finite, finite).map(lambda a: symmat(*a))


@st.composite
def moduli(draw):
    mu = draw(st.floats(0.05, 10.0))
    lam = draw(st.floats(-2 * mu / 3 + 1e-3, 20.0))
    return lam, mu


def test_mandel_examples():
    np.testing.assert_allclose(sym_to_vec(np.eye(2)), [SQRT2, 0, 0], atol=1e-15)
    np.testing.assert_allclose(sym_to_vec(symmat(1, 2, 3)), [2 * SQRT2, -SQRT2, 2 * SQRT2], atol=1e-15)


def test_det_examples():
    assert det_via_T([SQRT2, 0, 0]) == pytest.approx(1.0, abs=1e-15)
    assert det_via_T([0, 0, SQRT2]) == pytest.approx(-1.0, abs=1e-15)


def test_det_via_T_random():
    rng = np.random.default_rng(0)
    A = symmat(*rng.normal(size=(3, 100)))
    cof = A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] ** 2
    np.testing.assert_allclose(det_via_T(sym_to_vec(A)), cof, atol=1e-14)


@given(sym, sym)
def test_mandel_isometry(A, B):
    va, vb = sym_to_vec(A), sym_to_vec(B)
    scale = 1 + np.abs(A).max() * np.abs(B).max()
    assert abs(va @ vb - frobenius(A, B)) <= 1e-14 * scale
    np.testing.assert_allclose(vec_to_sym(va), A, atol=1e-13 * (1 + np.abs(A).max()))


@given(sym)
def test_T_form_is_determinant(A):
    scale = 1 + np.abs(A).max() ** 2
    assert abs(det_via_T(sym_to_vec(A)) - det2(A)) <= 1e-14 * scale


def test_T_is_involution():
    np.testing.assert_array_equal(TRANSLATION_T @ TRANSLATION_T, np.eye(3))


@pytest.mark.parametrize("lam,mu,alpha,beta", [(0, 1, 0.25, 0.25), (1, 1, 3 / 20, 0.25)])
def test_iso_L_examples(lam, mu, alpha, beta):
    L = iso_L(lam, mu)
    assert L.alpha == pytest.approx(alpha, abs=1e-15) and L.beta == pytest.approx(beta, abs=1e-15)


@pytest.mark.parametrize("lam,mu,alpha,beta", [(0, 1, 4 / 3, 4 / 3), (1, 1, 20 / 9, 4 / 3)])
def test_iso_M_examples(lam, mu, alpha, beta):
    M = iso_M(lam, mu)
    assert M.alpha == pytest.approx(alpha, abs=1e-15) and M.beta == pytest.approx(beta, abs=1e-15)


@settings(max_examples=50)
@given(moduli(), sym)
def test_iso_tensors_match_componentwise_formulas(mods, A):
    lam, mu = mods
    scale = 1 + np.abs(A).max()
    np.testing.assert_allclose(iso_L(lam, mu).apply(A), membrane_compliance(A, lam, mu),
                               atol=1e-12 * scale * max(1, 1 / mu))
    np.testing.assert_allclose(iso_M(lam, mu).apply(A), bending_moment(A, np.asarray(lam), np.asarray(mu)),
                               atol=1e-12 * scale * max(1, mu, abs(lam)))


@settings(max_examples=50)
@given(moduli(), sym)
def test_compliance_inverts_stress(mods, A):
    lam, mu = mods
    S = membrane_stress(A, np.asarray(lam), np.asarray(mu))
    back = membrane_compliance(S, lam, mu)
    np.testing.assert_allclose(back, A, atol=1e-9 * (1 + np.abs(A).max()))


@settings(max_examples=50)
@given(moduli(), sym)
def test_rotated_compliance_equals_itself(mods, A):
    lam, mu = mods
    L = iso_L(lam, mu)
    np.testing.assert_allclose(rperp_conjugate(L.apply(rperp_conjugate(A))), L.apply(A),
                               atol=1e-13 * (1 + np.abs(A).max()) * max(1, 1 / mu))


def test_convexity_rejected():
    with pytest.raises(ConvexityError):
        iso_L(0.0, 0.0)
    with pytest.raises(ConvexityError):
        iso_M(-1.0, 1.0)
    with pytest.raises(ConvexityError):
        PhaseMaterial(1.0, 1.0, -1.0, 1.0)


def test_translate_examples():
    L = IsoTensor2D(0.25, 0.25)
    assert translate(L, 0.0) == L
    np.testing.assert_allclose(translate(L, 0.1).diag, [0.15, 0.35, 0.35])


@given(st.floats(0.01, 5), st.floats(0.01, 5), st.floats(0.001, 0.999))
def test_translate_positive_inside_range(alpha, beta, s):
    L = IsoTensor2D(alpha, beta)
    zeta = -beta + s * (alpha + beta)
    assert translate(L, zeta).is_positive_definite()
    assert not translate(L, alpha).is_positive_definite()
    assert not translate(L, -beta).is_positive_definite()


def test_zeta_ranges_example():
    (lo, hi), _ = zeta_ranges(PhaseMaterial(0, 1, 0, 2))
    assert lo == pytest.approx(-0.125) and hi == pytest.approx(0.125)


def test_zeta_ranges_identical_phases():
    single = zeta_ranges(PhaseMaterial(0.5, 1, 0.5, 1))
    L, M = iso_L(0.5, 1), iso_M(0.5, 1)
    assert single == ((-L.beta, L.alpha), (-M.beta, M.alpha))


@given(moduli(), moduli())
def test_zeta_ranges_nonempty(m1, m2):
    (a, b), (c, d) = zeta_ranges(PhaseMaterial(*m1, *m2))
    assert a < 0 < b and c < 0 < d


def test_rperp_examples():
    np.testing.assert_array_equal(rperp_conjugate(np.eye(2)), np.eye(2))
    np.testing.assert_array_equal(rperp_conjugate(symmat(1, 0, 0)), symmat(0, 0, 1))


@given(sym)
def test_rperp_involution_keeps_invariants(A):
    R = rperp_conjugate(A)
    np.testing.assert_allclose(rperp_conjugate(R), A)
    assert np.trace(R) == pytest.approx(np.trace(A), abs=1e-12 * (1 + np.abs(A).max()))
    assert det2(R) == pytest.approx(det2(A), abs=1e-12 * (1 + np.abs(A).max() ** 2))


def test_rperp_matches_matrix_form():
    A = symmat(0.3, -1.2, 2.0)
    np.testing.assert_allclose(rperp_conjugate(A), R_PERP.T @ A @ R_PERP)


def test_degenerate_reason():
    assert PhaseMaterial(1, 2, 0.5, 1).degenerate_reason() is None
    assert "beta" in PhaseMaterial(1, 1, 0.5, 1).degenerate_reason()
    assert PhaseMaterial(1, 2, 0.5, 1).swapped() == PhaseMaterial(0.5, 1, 1, 2)
