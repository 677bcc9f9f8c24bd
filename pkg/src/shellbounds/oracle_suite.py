"""
Independent checks: the brute-force two-phase minimizer, extrapolated
quadrature, random smooth test fields and convergence-order estimates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import sympy as sp

from .domain_fields import _XY, BoundaryFrame, Grid, boundary_integral, volume_average
from .tensor_algebra import IsoTensor2D


# ----------------------------------------------------------------------------
# two-phase minimizer

@dataclass
class KktSolution:
    A1: np.ndarray
    A2: np.ndarray
    energy: float
    residuals: tuple[float, float]


def _diag(S) -> np.ndarray:
    return S.diag if isinstance(S, IsoTensor2D) else np.asarray(S, dtype=float)


def kkt_two_phase(S1, S2, f1: float, f2: float, a0, g0) -> KktSolution:
    """Constant-per-phase minimizer of ``<A . S A>`` under both average constraints.

    By strict convexity inside each phase the minimizer is constant there,
    so the constraints ``f1 A1 + f2 A2 = a0`` and
    ``f1 S1 A1 + f2 S2 A2 = g0`` fix ``(A1, A2)`` through a 6x6 solve.
    """
    s1, s2 = np.diag(_diag(S1)), np.diag(_diag(S2))
    a0, g0 = np.asarray(a0, dtype=float), np.asarray(g0, dtype=float)
    I = np.eye(3)
    M = np.block([[f1 * I, f2 * I], [f1 * s1, f2 * s2]])
    if abs(np.linalg.det(M)) < 1e-300 or np.linalg.cond(M) > 1e14:
        raise np.linalg.LinAlgError("constraint system is singular (no contrast)")
    sol = np.linalg.solve(M, np.concatenate([a0, g0]))
    A1, A2 = sol[:3], sol[3:]
    energy = f1 * A1 @ s1 @ A1 + f2 * A2 @ s2 @ A2
    r1 = float(np.linalg.norm(f1 * A1 + f2 * A2 - a0))
    r2 = float(np.linalg.norm(f1 * s1 @ A1 + f2 * s2 @ A2 - g0))
    return KktSolution(A1, A2, float(energy), (r1, r2))


def random_instance(rng: np.random.Generator) -> dict:
    """Random diagonal positive tensors with contrast in every component."""
    s1 = rng.uniform(0.2, 3.0, 3)
    s2 = rng.uniform(0.2, 3.0, 3)
    close = np.abs(s1 - s2) < 0.05
    s2[close] += 0.5
    f1 = rng.uniform(0.05, 0.95)
    return {"S1": s1, "S2": s2, "f1": f1, "f2": 1.0 - f1,
            "a0": rng.normal(size=3), "g0": rng.normal(size=3)}


def oracle_sweep(trials: int = 100, seed: int = 0) -> dict:
    """Closed-form minimum against the brute-force minimizer on random instances."""
    from .translation_bounds import mn_min_value

    rng = np.random.default_rng(seed)
    rows = []
    for k in range(trials):
        inst = random_instance(rng)
        closed = float(mn_min_value(inst["S1"], inst["S2"], inst["f1"], inst["f2"], inst["a0"], inst["g0"]))
        kkt = kkt_two_phase(inst["S1"], inst["S2"], inst["f1"], inst["f2"], inst["a0"], inst["g0"])
        rel = abs(closed - kkt.energy) / max(abs(kkt.energy), 1e-300)
        rows.append({"trial": k, **{key: np.asarray(v).tolist() for key, v in inst.items()},
                     "closed_form": closed, "oracle": kkt.energy, "relative_error": rel,
                     "constraint_residual": max(kkt.residuals)})
    worst = max(r["relative_error"] for r in rows) if rows else 0.0
    return {"trials": trials, "seed": seed, "max_relative_error": worst, "instances": rows}


# ----------------------------------------------------------------------------
# quadrature

@dataclass
class QuadratureResult:
    value: float
    error_estimate: float
    levels: list[int]
    raw: list[float]
    monotone: bool


def _as_callable(f):
    if isinstance(f, sp.Basic):
        return sp.lambdify(_XY, f, "numpy")
    return f


def refine_quadrature(f, levels=(17, 33, 65, 129), kind: str = "volume") -> QuadratureResult:
    """Richardson-extrapolated trapezoid integral over the square or its boundary.

    ``f`` is a callable ``(x, y)`` or a sympy expression in ``x1, x2``.  The
    trapezoid error expands in even powers of ``h``, so two extrapolation
    sweeps remove the ``h^2`` and ``h^4`` terms.  Refinement is flagged as
    non-monotone when successive corrections fail to shrink.
    """
    func = _as_callable(f)
    raw = []
    for n in levels:
        grid = Grid(n)
        if kind == "volume":
            raw.append(float(volume_average(grid.evaluate(func), grid)))
        elif kind == "boundary":
            frame = BoundaryFrame(grid)
            vals = [np.asarray(func(e.xy[:, 0], e.xy[:, 1]), dtype=float) + np.zeros(e.size) for e in frame]
            raw.append(float(boundary_integral(vals, frame)))
        else:
            raise ValueError(f"unknown quadrature kind {kind!r}")
    table = [np.array(raw)]
    for p in (2, 4):
        prev = table[-1]
        if len(prev) < 2:
            break
        table.append((2**p * prev[1:] - prev[:-1]) / (2**p - 1))
    best = table[-1]
    value = float(best[-1])
    err = float(abs(best[-1] - best[-2])) if len(best) > 1 else float(abs(table[-2][-1] - table[-2][-2]))
    diffs = np.abs(np.diff(raw))
    monotone = bool(np.all(diffs[1:] <= diffs[:-1] * (1 + 1e-12) + 1e-15))
    return QuadratureResult(value, err, list(levels), raw, monotone)


# ----------------------------------------------------------------------------
# convergence orders

def convergence_order(errors, ratio: float = 2.0) -> float:
    """Observed order from errors at ``h, h/ratio, h/ratio^2, ...``.

    Least-squares slope of ``log(error)`` against refinement level.  NaN if
    any error is non-finite or zero; errors that do not decrease raise.
    """
    e = np.asarray(errors, dtype=float)
    if len(e) < 2:
        raise ValueError("need at least two refinement levels")
    if not np.all(np.isfinite(e)) or np.any(e <= 0):
        return float("nan")
    if np.any(np.diff(e) >= 0):
        raise ValueError(f"errors do not decrease under refinement: {e.tolist()}")
    k = np.arange(len(e))
    slope = np.polyfit(k, np.log(e) / np.log(ratio), 1)[0]
    return float(-slope)


# ----------------------------------------------------------------------------
# random smooth fields

def random_smooth_field(rng: np.random.Generator, kind: str = "mixed", scale: float = 1.0) -> sp.Expr:
    """Random bicubic polynomial, trigonometric product, or their sum."""
    x, y = _XY
    out = sp.Integer(0)
    if kind in ("bicubic", "mixed"):
        c = rng.normal(size=(4, 4)) / 4
        out += sum(sp.Float(c[i, j]) * x**i * y**j for i in range(4) for j in range(4))
    if kind in ("trig", "mixed"):
        k1, k2 = rng.uniform(0.5, 2.0, 2)
        p1, p2 = rng.uniform(0, 2 * np.pi, 2)
        amp = rng.uniform(0.2, 0.6)
        out += sp.Float(amp) * sp.sin(sp.Float(k1) * sp.pi * x + sp.Float(p1)) * sp.cos(
            sp.Float(k2) * sp.pi * y + sp.Float(p2))
    if kind not in ("bicubic", "trig", "mixed"):
        raise ValueError(f"unknown field kind {kind!r}")
    return sp.Float(scale) * out


def sample(expr: sp.Expr, grid: Grid) -> np.ndarray:
    return grid.evaluate(sp.lambdify(_XY, expr, "numpy"))
