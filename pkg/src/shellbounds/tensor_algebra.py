"""
Algebra of symmetric 2x2 matrices and isotropic fourth-order tensors.

Symmetric matrices are plain ``numpy`` arrays of shape ``(..., 2, 2)``.
Their Mandel coordinates are arrays of shape ``(..., 3)`` in the
orthonormal basis

    P1 = I/sqrt(2),  P2 = diag(1, -1)/sqrt(2),  P3 = [[0, 1], [1, 0]]/sqrt(2),

in which the Frobenius product becomes the Euclidean dot product and every
isotropic tensor is diagonal, ``diag(alpha, beta, beta)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SQRT2 = np.sqrt(2.0)

#: Translation matrix representing the determinant quadratic form.
TRANSLATION_T = np.diag([1.0, -1.0, -1.0])
_T_DIAG = np.array([1.0, -1.0, -1.0])

#: Rotation by -pi/2, used to conjugate matrices (``R_perp^T M R_perp``).
R_PERP = np.array([[0.0, 1.0], [-1.0, 0.0]])


class ConvexityError(ValueError):
    """Lame moduli violate strong convexity (mu > 0, 2 mu + 3 lambda > 0)."""


def symmat(a11, a12, a22) -> np.ndarray:
    """Stack components into symmetric matrices of shape ``(..., 2, 2)``."""
    a11, a12, a22 = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (a11, a12, a22)))
    out = np.empty(a11.shape + (2, 2))
    out[..., 0, 0] = a11
    out[..., 0, 1] = a12
    out[..., 1, 0] = a12
    out[..., 1, 1] = a22
    return out


def sym_part(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def frobenius(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Frobenius product ``A : B`` over the last two axes."""
    return np.einsum("...ij,...ij->...", A, B)


def sym_to_vec(A: np.ndarray) -> np.ndarray:
    """Mandel coordinates ``(a11 + a22, a11 - a22, 2 a12) / sqrt(2)``."""
    A = np.asarray(A, dtype=float)
    a11, a22 = A[..., 0, 0], A[..., 1, 1]
    a12 = 0.5 * (A[..., 0, 1] + A[..., 1, 0])
    return np.stack([(a11 + a22) / SQRT2, (a11 - a22) / SQRT2, SQRT2 * a12], axis=-1)


def vec_to_sym(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    a11 = (v[..., 0] + v[..., 1]) / SQRT2
    a22 = (v[..., 0] - v[..., 1]) / SQRT2
    return symmat(a11, v[..., 2] / SQRT2, a22)


def det_via_T(v: np.ndarray) -> np.ndarray:
    """Determinant of ``vec_to_sym(v)`` computed as ``v . T v / 2``."""
    v = np.asarray(v, dtype=float)
    return 0.5 * np.sum(v * _T_DIAG * v, axis=-1)


def det2(A: np.ndarray) -> np.ndarray:
    """Cofactor determinant of ``(..., 2, 2)`` matrices."""
    return A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]


def rperp_conjugate(A: np.ndarray) -> np.ndarray:
    """Apply the rotation tensor: ``A -> R_perp^T A R_perp``.

    For a symmetric ``A`` this swaps the diagonal entries and flips the sign
    of the off-diagonal one, so it is an involution that keeps trace and
    determinant.
    """
    return np.einsum("ki,...kl,lj->...ij", R_PERP, A, R_PERP)


@dataclass(frozen=True)
class IsoTensor2D:
    """Isotropic tensor on symmetric 2x2 matrices, ``diag(alpha, beta, beta)``.

    ``alpha`` acts on the trace part, ``beta`` on the deviatoric part.
    """

    alpha: float
    beta: float

    @property
    def diag(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.beta])

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(self.diag)

    def is_positive_definite(self) -> bool:
        return self.alpha > 0 and self.beta > 0

    def apply_vec(self, v: np.ndarray) -> np.ndarray:
        return self.diag * np.asarray(v, dtype=float)

    def apply(self, A: np.ndarray) -> np.ndarray:
        return vec_to_sym(self.apply_vec(sym_to_vec(A)))

    def quadratic(self, A: np.ndarray) -> np.ndarray:
        """``A . (this A)`` for symmetric ``A``."""
        v = sym_to_vec(A)
        return np.sum(self.diag * v * v, axis=-1)


def check_convexity(lam: float, mu: float) -> None:
    if not (mu > 0 and 2 * mu + 3 * lam > 0):
        raise ConvexityError(
            f"moduli (lambda={lam}, mu={mu}) are not strongly convex: "
            "need mu > 0 and 2*mu + 3*lambda > 0"
        )


def iso_L(lam: float, mu: float) -> IsoTensor2D:
    """Membrane compliance seen by the Hessian of the Airy function."""
    check_convexity(lam, mu)
    return IsoTensor2D((lam + 2 * mu) / (4 * mu * (2 * mu + 3 * lam)), 1.0 / (4 * mu))


def iso_M(lam: float, mu: float) -> IsoTensor2D:
    """Bending stiffness mapping the Hessian of ``u3`` to the moment ``m``."""
    check_convexity(lam, mu)
    return IsoTensor2D(4 * mu * (3 * lam + 2 * mu) / (3 * (lam + 2 * mu)), 4 * mu / 3)


def translate(L: IsoTensor2D, zeta: float) -> IsoTensor2D:
    """Translated tensor ``L - zeta T``."""
    return IsoTensor2D(L.alpha - zeta, L.beta + zeta)


# Direct (componentwise) constitutive maps.  They accept per-node modulus
# arrays that broadcast against the leading axes of the matrix argument.

def membrane_stress(e: np.ndarray, lam, mu) -> np.ndarray:
    """``s = 4 mu e + 4 lam mu / (lam + 2 mu) tr(e) I``."""
    lam, mu = np.asarray(lam, dtype=float), np.asarray(mu, dtype=float)
    tr = e[..., 0, 0] + e[..., 1, 1]
    coef = 4 * lam * mu / (lam + 2 * mu)
    return 4 * mu[..., None, None] * e + (coef * tr)[..., None, None] * np.eye(2)


def membrane_compliance(A: np.ndarray, lam, mu) -> np.ndarray:
    """``A^sym / (4 mu) - lam / (4 mu (3 lam + 2 mu)) tr(A) I``."""
    lam, mu = np.asarray(lam, dtype=float), np.asarray(mu, dtype=float)
    tr = A[..., 0, 0] + A[..., 1, 1]
    coef = lam / (4 * mu * (3 * lam + 2 * mu))
    return sym_part(A) / (4 * mu[..., None, None]) - (coef * tr)[..., None, None] * np.eye(2)


def bending_moment(H: np.ndarray, lam, mu) -> np.ndarray:
    """``m = 4 mu / 3 H + 4 lam mu / (3 (lam + 2 mu)) tr(H) I``."""
    lam, mu = np.asarray(lam, dtype=float), np.asarray(mu, dtype=float)
    tr = H[..., 0, 0] + H[..., 1, 1]
    coef = 4 * lam * mu / (3 * (lam + 2 * mu))
    return (4 * mu / 3)[..., None, None] * H + (coef * tr)[..., None, None] * np.eye(2)


def iso_fields(lam, mu, kind: str = "L") -> tuple[np.ndarray, np.ndarray]:
    """Per-node ``(alpha, beta)`` arrays of the L or M tensor."""
    lam, mu = np.asarray(lam, dtype=float), np.asarray(mu, dtype=float)
    if kind == "L":
        return (lam + 2 * mu) / (4 * mu * (2 * mu + 3 * lam)), 1.0 / (4 * mu)
    if kind == "M":
        return 4 * mu * (3 * lam + 2 * mu) / (3 * (lam + 2 * mu)), 4 * mu / 3
    raise ValueError(f"unknown tensor kind {kind!r}")


def apply_iso_field(alpha, beta, A: np.ndarray) -> np.ndarray:
    """Apply a spatially varying isotropic tensor to a tensor field."""
    v = sym_to_vec(A)
    scale = np.stack(np.broadcast_arrays(alpha, beta, beta), axis=-1)
    return vec_to_sym(scale * v)


@dataclass(frozen=True)
class PhaseMaterial:
    """Lame moduli of the two phases; phase 1 is the inclusion."""

    lambda1: float
    mu1: float
    lambda2: float
    mu2: float

    def __post_init__(self):
        check_convexity(self.lambda1, self.mu1)
        check_convexity(self.lambda2, self.mu2)

    @property
    def L1(self) -> IsoTensor2D:
        return iso_L(self.lambda1, self.mu1)

    @property
    def L2(self) -> IsoTensor2D:
        return iso_L(self.lambda2, self.mu2)

    @property
    def M1(self) -> IsoTensor2D:
        return iso_M(self.lambda1, self.mu1)

    @property
    def M2(self) -> IsoTensor2D:
        return iso_M(self.lambda2, self.mu2)

    def swapped(self) -> "PhaseMaterial":
        return PhaseMaterial(self.lambda2, self.mu2, self.lambda1, self.mu1)

    def degenerate_reason(self) -> str | None:
        """Why the closed-form bound is unavailable, or ``None``."""
        reasons = []
        for name, (A, B) in {"L": (self.L1, self.L2), "M": (self.M1, self.M2)}.items():
            if np.isclose(A.alpha, B.alpha, rtol=1e-12, atol=0.0):
                reasons.append(f"{name}: alpha1 == alpha2")
            if np.isclose(A.beta, B.beta, rtol=1e-12, atol=0.0):
                reasons.append(f"{name}: beta1 == beta2")
        return "; ".join(reasons) or None


def zeta_ranges(mat: PhaseMaterial) -> tuple[tuple[float, float], tuple[float, float]]:
    """Open intervals of admissible translations for the L and M blocks."""
    L1, L2, M1, M2 = mat.L1, mat.L2, mat.M1, mat.M2
    a_star, b_star = min(L1.alpha, L2.alpha), min(L1.beta, L2.beta)
    at_star, bt_star = min(M1.alpha, M2.alpha), min(M1.beta, M2.beta)
    return (-b_star, a_star), (-bt_star, at_star)
