"""
Translation bounds on the volume fraction of phase 1.

For every admissible translation ``(zeta, zetat)`` the measured moments
must satisfy

    e0 - b0 . a0 - b0t . a0t >= zeta * slope_L(f1) + const_L(f1)
                              + zetat * slope_M(f1) + const_M(f1),

with the right side built from the two-phase minimum of ``<A . S A>``
under prescribed ``<A>`` and ``<S A>``.  A fraction ``f1`` is feasible if
the inequality holds at the four corners of the translation rectangle;
since the gap is affine in each translation, the corners are the worst
case.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .boundary_functionals import MomentSet
from .tensor_algebra import (
    TRANSLATION_T,
    IsoTensor2D,
    PhaseMaterial,
    det_via_T,
    sym_to_vec,
    translate,
    zeta_ranges,
)

_T = np.diag(TRANSLATION_T)


class DegenerateContrastError(ValueError):
    """The two phases share an eigenvalue, so the closed form does not apply."""


def _diag(S) -> np.ndarray:
    return S.diag if isinstance(S, IsoTensor2D) else np.asarray(S, dtype=float)


def mn_min_value(S1, S2, f1, f2, a0, g0):
    """Minimum of ``<A . S A>`` over two-phase fields with ``<A> = a0``, ``<S A> = g0``.

    ``S1``, ``S2`` are diagonal in the Mandel basis (``IsoTensor2D`` or
    length-3 arrays); ``a0``, ``g0`` are Mandel vectors.  ``f1`` may be an
    array, in which case the result has its shape.
    """
    s1, s2 = _diag(S1), _diag(S2)
    d = s1 - s2
    if np.any(d == 0):
        raise DegenerateContrastError("phase tensors coincide in some eigenvalue")
    f1 = np.asarray(f1, dtype=float)[..., None]
    f2 = np.asarray(f2, dtype=float)[..., None]
    a0, g0 = np.asarray(a0, dtype=float), np.asarray(g0, dtype=float)
    mean = f1 * s1 + f2 * s2
    k = 1.0 / (d * d * f1 * f2)
    return np.sum(g0 * a0, axis=-1) + np.sum(k * (g0 - mean * a0) * ((f2 * s1 + f1 * s2) * g0 - s1 * s2 * a0), axis=-1)


@dataclass
class BoundInputs:
    """Moments plus material, with the Mandel forms the bound needs."""

    moments: MomentSet
    material: PhaseMaterial
    true_f1: float | None = None

    @property
    def degenerate_reason(self) -> str | None:
        return self.material.degenerate_reason()

    @property
    def zeta_ranges(self):
        return zeta_ranges(self.material)

    @property
    def vectors(self) -> dict:
        m = self.moments
        return {"a": sym_to_vec(m.a0), "b": sym_to_vec(m.b0), "at": sym_to_vec(m.a0t), "bt": sym_to_vec(m.b0t)}

    @property
    def lhs(self) -> float:
        v = self.vectors
        return float(self.moments.e0 - v["b"] @ v["a"] - v["bt"] @ v["at"])


def block_terms(f1, T1: IsoTensor2D, T2: IsoTensor2D, a: np.ndarray, b: np.ndarray, c: float):
    """``(slope, const)`` of one block's right side as functions of ``f1``."""
    l1, l2 = T1.diag, T2.diag
    d = l1 - l2
    if np.any(d == 0):
        raise DegenerateContrastError("phase tensors coincide in some eigenvalue")
    f1 = np.asarray(f1, dtype=float)[..., None]
    f2 = 1.0 - f1
    mean = f1 * l1 + f2 * l2
    k = 1.0 / (d * d * f1 * f2)
    r = b - mean * a
    slope = np.sum(k * r * (mean * _T * a - _T * b), axis=-1) + 2 * c - 2 * det_via_T(a)
    const = np.sum(k * r * ((f2 * l1 + f1 * l2) * b - l1 * l2 * a), axis=-1)
    return slope, const


def bound_gap(f1, zeta, zetat, inputs: BoundInputs):
    """Left side minus right side of the bound; non-negative means feasible."""
    if inputs.degenerate_reason:
        raise DegenerateContrastError(inputs.degenerate_reason)
    mat, m, v = inputs.material, inputs.moments, inputs.vectors
    sL, cL = block_terms(f1, mat.L1, mat.L2, v["a"], v["b"], m.c0)
    sM, cM = block_terms(f1, mat.M1, mat.M2, v["at"], v["bt"], m.c0t)
    return inputs.lhs - (zeta * sL + cL + zetat * sM + cM)


def bound_gap_via_minimum(f1, zeta, zetat, inputs: BoundInputs):
    """The same gap written as ``e0 - 2 zeta c0 - 2 zetat c0t - min_L - min_M``."""
    mat, m, v = inputs.material, inputs.moments, inputs.vectors
    f1 = np.asarray(f1, dtype=float)
    minL = mn_min_value(translate(mat.L1, zeta), translate(mat.L2, zeta), f1, 1 - f1,
                        v["a"], v["b"] - zeta * _T * v["a"])
    minM = mn_min_value(translate(mat.M1, zetat), translate(mat.M2, zetat), f1, 1 - f1,
                        v["at"], v["bt"] - zetat * _T * v["at"])
    return m.e0 - 2 * zeta * m.c0 - 2 * zetat * m.c0t - minL - minM


def corner_points(inputs: BoundInputs) -> list[tuple[float, float]]:
    (zlo, zhi), (ztlo, zthi) = inputs.zeta_ranges
    return [(z, zt) for z in (zlo, zhi) for zt in (ztlo, zthi)]


def single_equation_gap(f1, zeta, a0, b0, c0, e0, L1: IsoTensor2D, L2: IsoTensor2D):
    """Translation bound for one plane-stress equation with moments ``(a0, b0, c0, e0)``."""
    a, b = sym_to_vec(a0), sym_to_vec(b0)
    f1 = np.asarray(f1, dtype=float)
    return e0 - 2 * zeta * c0 - mn_min_value(translate(L1, zeta), translate(L2, zeta), f1, 1 - f1,
                                               a, b - zeta * _T * a)


# ----------------------------------------------------------------------------
# feasibility scan

@dataclass
class FeasibilityReport:
    intervals: list[tuple[float, float]]
    verdict: str
    true_f1: float | None = None
    contains_true: bool | None = None
    gap_at_true: dict = field(default_factory=dict)
    degenerate: bool = False
    reason: str | None = None
    scan: dict = field(default_factory=dict)
    corners: list[tuple[float, float]] = field(default_factory=list)
    curves: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "intervals": [list(map(float, iv)) for iv in self.intervals],
            "verdict": self.verdict,
            "true_f1": self.true_f1,
            "contains_true": self.contains_true,
            "gap_at_true": self.gap_at_true,
            "degenerate": self.degenerate,
            "reason": self.reason,
            "scan": self.scan,
            "corners": [list(map(float, c)) for c in self.corners],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def write_curves(self, path: str | Path) -> None:
        """Per-corner gap curves as CSV (``f1`` then one column per corner)."""
        if not self.curves:
            raise ValueError("report has no gap curves (degenerate input?)")
        f = self.curves["f1"]
        names = [k for k in self.curves if k != "f1"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["f1", *names])
            for i in range(len(f)):
                w.writerow([f"{f[i]:.17g}", *(f"{self.curves[k][i]:.17g}" for k in names)])


def _corner_name(z, zt) -> str:
    return f"zeta={z:.6g},zetat={zt:.6g}"


def _bisect(fun, lo: float, hi: float, tol: float) -> float:
    """Root of ``fun`` between ``lo`` and ``hi`` (opposite signs)."""
    flo = fun(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = fun(mid)
        if (fm >= 0) == (flo >= 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def feasible_set(gap_min, epsilon: float = 1e-3, grid: int = 4096, refine: float = 1e-6,
                 tol: float = 0.0) -> list[tuple[float, float]]:
    """Closed intervals of ``f1`` in ``[epsilon, 1 - epsilon]`` where ``gap_min >= -tol``."""
    f = np.linspace(epsilon, 1 - epsilon, grid)
    ok = gap_min(f) >= -tol
    fun = lambda x: float(gap_min(np.array([x]))[0]) + tol  # noqa: E731
    intervals = []
    i = 0
    while i < grid:
        if not ok[i]:
            i += 1
            continue
        j = i
        while j + 1 < grid and ok[j + 1]:
            j += 1
        lo = f[i] if i == 0 else _bisect(fun, f[i - 1], f[i], refine)
        hi = f[j] if j == grid - 1 else _bisect(fun, f[j], f[j + 1], refine)
        intervals.append((float(lo), float(hi)))
        i = j + 1
    return intervals


def default_tol(inputs: BoundInputs) -> float:
    return 1e-8 * max(1.0, abs(inputs.moments.e0))


def feasible_fraction_set(inputs: BoundInputs, epsilon: float = 1e-3, grid: int = 4096,
                          refine: float = 1e-6, tol: float | None = None) -> FeasibilityReport:
    """Scan ``f1`` for feasibility at the four translation corners."""
    scan = {"epsilon": epsilon, "grid": grid, "refine": refine}
    if inputs.degenerate_reason:
        return FeasibilityReport([(0.0, 1.0)], "uninformative: (0,1)", inputs.true_f1, None, {}, True,
                                 f"degenerate contrast ({inputs.degenerate_reason})", scan,
                                 corner_points(inputs))
    tol = default_tol(inputs) if tol is None else tol
    scan["tol"] = tol
    corners = corner_points(inputs)

    def gap_min(f):
        return np.min([bound_gap(f, z, zt, inputs) for z, zt in corners], axis=0)

    intervals = feasible_set(gap_min, epsilon, grid, refine, tol)
    fgrid = np.linspace(epsilon, 1 - epsilon, grid)
    curves = {"f1": fgrid}
    for z, zt in corners:
        curves[_corner_name(z, zt)] = bound_gap(fgrid, z, zt, inputs)

    true_f1, contains, at_true = inputs.true_f1, None, {}
    if true_f1 is not None and 0 < true_f1 < 1:
        at_true = {_corner_name(z, zt): float(bound_gap(true_f1, z, zt, inputs)) for z, zt in corners}
        contains = min(at_true.values()) >= -tol
    if not intervals:
        verdict = "empty feasible set"
    elif true_f1 is None:
        verdict = "feasible set: " + ", ".join(f"[{lo:.6f}, {hi:.6f}]" for lo, hi in intervals)
    else:
        sym = "∈" if contains else "∉"
        verdict = f"true f1 = {true_f1:.5f} {sym} feasible interval"
    return FeasibilityReport(intervals, verdict, true_f1, contains, at_true, False, None, scan, corners, curves)
