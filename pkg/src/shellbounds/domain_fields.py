"""
Uniform grids on the unit square, discrete differential operators, boundary
frames, quadrature, shell profiles and two-phase layouts.

Fields are plain arrays indexed ``[i, j]`` with ``x1 = i h`` and ``x2 = j h``:
scalars have shape ``(n, n)``, vectors ``(n, n, 2)`` and symmetric tensors
``(n, n, 2, 2)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import sympy as sp

from .tensor_algebra import PhaseMaterial


@dataclass(frozen=True)
class Grid:
    """Node grid on [0, 1]^2 with ``n`` nodes per side (odd, at least 17)."""

    n: int

    def __post_init__(self):
        if self.n < 17 or self.n % 2 == 0:
            raise ValueError(f"grid size must be odd and >= 17, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / (self.n - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n)

    @property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.x, indexing="ij")

    @property
    def center(self) -> tuple[int, int]:
        c = (self.n - 1) // 2
        return c, c

    @property
    def weights(self) -> np.ndarray:
        """Composite trapezoid weights; they sum to |Omega| = 1."""
        w = np.full(self.n, self.h)
        w[[0, -1]] *= 0.5
        return np.outer(w, w)

    def evaluate(self, func: Callable) -> np.ndarray:
        X, Y = self.mesh
        return np.asarray(func(X, Y), dtype=float) * np.ones_like(X)


# ----------------------------------------------------------------------------
# finite differences

def d1(f: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Centered first difference, one-sided second order at the ends."""
    return np.gradient(f, h, axis=axis, edge_order=2)


def d2(f: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Compact three-point second difference, four-point one-sided at the ends."""
    f = np.moveaxis(np.asarray(f, dtype=float), axis, 0)
    out = np.empty_like(f)
    out[1:-1] = f[2:] - 2 * f[1:-1] + f[:-2]
    out[0] = 2 * f[0] - 5 * f[1] + 4 * f[2] - f[3]
    out[-1] = 2 * f[-1] - 5 * f[-2] + 4 * f[-3] - f[-4]
    return np.moveaxis(out / h**2, 0, axis)


def gradient(f: np.ndarray, grid: Grid) -> np.ndarray:
    return np.stack([d1(f, grid.h, 0), d1(f, grid.h, 1)], axis=-1)


def hessian(f: np.ndarray, grid: Grid) -> np.ndarray:
    h = grid.h
    fxy = 0.5 * (d1(d1(f, h, 0), h, 1) + d1(d1(f, h, 1), h, 0))
    out = np.empty(f.shape + (2, 2))
    out[..., 0, 0] = d2(f, h, 0)
    out[..., 1, 1] = d2(f, h, 1)
    out[..., 0, 1] = out[..., 1, 0] = fxy
    return out


def divergence(v: np.ndarray, grid: Grid) -> np.ndarray:
    """Divergence of a vector field, or row-wise divergence of a tensor field."""
    h = grid.h
    if v.ndim == 3:
        return d1(v[..., 0], h, 0) + d1(v[..., 1], h, 1)
    return np.stack([d1(v[..., k, 0], h, 0) + d1(v[..., k, 1], h, 1) for k in range(2)], axis=-1)


def volume_average(f: np.ndarray, grid: Grid) -> np.ndarray | float:
    """Trapezoid average over the unit square (scalar, vector or tensor fields)."""
    w = grid.weights
    return np.tensordot(w, np.asarray(f, dtype=float), axes=([0, 1], [0, 1]))


# ----------------------------------------------------------------------------
# boundary

@dataclass(frozen=True)
class Edge:
    name: str
    i: np.ndarray
    j: np.ndarray
    normal: np.ndarray
    tangent: np.ndarray
    h: float

    @property
    def size(self) -> int:
        return len(self.i)

    @property
    def xy(self) -> np.ndarray:
        return np.stack([self.i * self.h, self.j * self.h], axis=-1)

    @property
    def weights(self) -> np.ndarray:
        w = np.full(self.size, self.h)
        w[[0, -1]] *= 0.5
        return w

    def restrict(self, f: np.ndarray) -> np.ndarray:
        return f[self.i, self.j]

    def d_t(self, values: np.ndarray) -> np.ndarray:
        """Derivative along the edge in the direction of its tangent."""
        return np.gradient(values, self.h, axis=0, edge_order=2)

    def d_tt(self, values: np.ndarray) -> np.ndarray:
        return d2(values, self.h, 0)


@dataclass(frozen=True)
class ScalarTrace:
    value: np.ndarray
    dn: np.ndarray
    dt: np.ndarray
    dtt: np.ndarray

    def gradient(self, edge: Edge) -> np.ndarray:
        """Full gradient ``f_t t + f_n n`` along the edge."""
        return self.dt[:, None] * edge.tangent + self.dn[:, None] * edge.normal

    def gradient_t(self, edge: Edge) -> np.ndarray:
        """Tangential derivative of the gradient, ``f_tt t + (f_n)_t n``."""
        return self.dtt[:, None] * edge.tangent + edge.d_t(self.dn)[:, None] * edge.normal


@dataclass(frozen=True)
class BoundaryFrame:
    """Four straight edges traversed counterclockwise from the origin.

    Every edge carries its own constant outward normal ``n`` and tangent
    ``t = -R_perp n``; corner nodes appear once on each incident edge.
    """

    grid: Grid
    edges: tuple[Edge, ...] = field(init=False)

    def __post_init__(self):
        n, h = self.grid.n, self.grid.h
        r = np.arange(n)
        last = np.full(n, n - 1)
        zero = np.zeros(n, dtype=int)
        specs = [
            ("bottom", r, zero, (0.0, -1.0), (1.0, 0.0)),
            ("right", last, r, (1.0, 0.0), (0.0, 1.0)),
            ("top", r[::-1], last, (0.0, 1.0), (-1.0, 0.0)),
            ("left", zero, r[::-1], (-1.0, 0.0), (0.0, -1.0)),
        ]
        edges = tuple(
            Edge(name, i, j, np.array(nv), np.array(tv), h) for name, i, j, nv, tv in specs
        )
        object.__setattr__(self, "edges", edges)

    def __iter__(self):
        return iter(self.edges)

    def restrict(self, f: np.ndarray) -> list[np.ndarray]:
        return [e.restrict(f) for e in self.edges]

    def trace(self, f: np.ndarray) -> list[ScalarTrace]:
        """Per-edge traces ``(f, f_n, f_t, f_tt)`` of a scalar field."""
        g = gradient(f, self.grid)
        out = []
        for e in self.edges:
            val = e.restrict(f)
            dn = e.restrict(g) @ e.normal
            out.append(ScalarTrace(val, dn, e.d_t(val), e.d_tt(val)))
        return out

    def normal_component(self, field_: np.ndarray) -> list[np.ndarray]:
        """``v . n`` for vector fields, ``T n`` for tensor fields."""
        out = []
        for e in self.edges:
            vals = e.restrict(field_)
            out.append(vals @ e.normal)
        return out


def boundary_integral(values: Sequence[np.ndarray], frame: BoundaryFrame) -> np.ndarray | float:
    """Per-edge composite trapezoid sum of boundary values."""
    total = 0.0
    for v, e in zip(values, frame.edges):
        total = total + np.tensordot(e.weights, np.asarray(v, dtype=float), axes=(0, 0))
    return total


# ----------------------------------------------------------------------------
# shell profiles

@dataclass(frozen=True)
class ShellProfile:
    """Height profile ``theta`` of the shell mid-surface.

    Kinds and parameters:

    * ``flat``: none
    * ``affine``: ``slope=(a1, a2)``, ``offset``
    * ``paraboloid``: ``curvature=(k1, k2)``, ``center=(c1, c2)``
    * ``sinusoidal``: ``amplitude``, ``k``
    """

    kind: str = "flat"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        allowed = {
            "flat": set(),
            "affine": {"slope", "offset"},
            "paraboloid": {"curvature", "center"},
            "sinusoidal": {"amplitude", "k"},
        }
        if self.kind not in allowed:
            raise ValueError(f"unknown shell profile {self.kind!r}")
        extra = set(self.params) - allowed[self.kind]
        if extra:
            raise ValueError(f"unexpected parameters for {self.kind} profile: {sorted(extra)}")
        expr = self.sympy_expr()
        x, y = _XY
        derivs = {
            "value": expr,
            "d1": sp.diff(expr, x), "d2": sp.diff(expr, y),
            "d11": sp.diff(expr, x, 2), "d12": sp.diff(expr, x, y), "d22": sp.diff(expr, y, 2),
        }
        object.__setattr__(self, "_funcs", {k: sp.lambdify((x, y), v, "numpy") for k, v in derivs.items()})

    @property
    def is_affine(self) -> bool:
        return self.kind in ("flat", "affine")

    def sympy_expr(self) -> sp.Expr:
        x, y = _XY
        p = self.params
        if self.kind == "flat":
            return sp.Integer(0)
        if self.kind == "affine":
            a1, a2 = p.get("slope", (0.1, 0.05))
            return sp.Float(p.get("offset", 0.0)) + sp.Float(a1) * x + sp.Float(a2) * y
        if self.kind == "paraboloid":
            k1, k2 = p.get("curvature", (0.2, 0.2))
            c1, c2 = p.get("center", (0.5, 0.5))
            return sp.Float(k1) * (x - c1) ** 2 / 2 + sp.Float(k2) * (y - c2) ** 2 / 2
        amp, k = p.get("amplitude", 0.05), p.get("k", 1)
        return sp.Float(amp) * sp.sin(k * sp.pi * x) * sp.sin(k * sp.pi * y)

    def _eval(self, key, x, y):
        x = np.asarray(x, dtype=float)
        return np.asarray(self._funcs[key](x, y), dtype=float) + np.zeros_like(x)

    def theta(self, x, y) -> np.ndarray:
        return self._eval("value", x, y)

    def grad(self, x, y) -> np.ndarray:
        return np.stack([self._eval("d1", x, y), self._eval("d2", x, y)], axis=-1)

    def hess(self, x, y) -> np.ndarray:
        h11, h12, h22 = self._eval("d11", x, y), self._eval("d12", x, y), self._eval("d22", x, y)
        return np.stack([np.stack([h11, h12], -1), np.stack([h12, h22], -1)], -2)


_XY = sp.symbols("x1 x2", real=True)


# ----------------------------------------------------------------------------
# two-phase layouts

class GeometryError(ValueError):
    """Inclusion geometry is malformed or leaves the closed unit square."""


def _step(z, width):
    if width <= 0:
        return (z >= 0).astype(float)
    return 0.5 * (1.0 + np.tanh(2.0 * z / width))


@dataclass(frozen=True)
class Geometry:
    kind: str
    params: dict

    @classmethod
    def from_spec(cls, spec: dict | None) -> "Geometry":
        if not spec or spec.get("kind", "empty") == "empty":
            return cls("empty", {})
        spec = dict(spec)
        kind = spec.pop("kind")
        if kind == "disk":
            c, r = np.asarray(spec["center"], dtype=float), float(spec["radius"])
            if r <= 0 or np.any(c - r < -1e-12) or np.any(c + r > 1 + 1e-12):
                raise GeometryError(f"disk center={c.tolist()} radius={r} escapes the unit square")
            return cls("disk", {"center": c, "radius": r})
        if kind == "rectangle":
            lo, hi = np.asarray(spec["lo"], dtype=float), np.asarray(spec["hi"], dtype=float)
            if np.any(lo >= hi) or np.any(lo < 0) or np.any(hi > 1):
                raise GeometryError(f"rectangle lo={lo.tolist()} hi={hi.tolist()} is not inside the unit square")
            return cls("rectangle", {"lo": lo, "hi": hi})
        if kind == "union":
            parts = [cls.from_spec(p) for p in spec["parts"]]
            parts = [p for p in parts if p.kind != "empty"]
            for a in range(len(parts)):
                for b in range(a + 1, len(parts)):
                    if _overlap(parts[a], parts[b]):
                        raise GeometryError("union parts must be disjoint")
            return cls("union", {"parts": parts})
        raise GeometryError(f"unknown geometry kind {kind!r}")

    def area(self) -> float:
        if self.kind == "empty":
            return 0.0
        if self.kind == "disk":
            return float(np.pi * self.params["radius"] ** 2)
        if self.kind == "rectangle":
            return float(np.prod(self.params["hi"] - self.params["lo"]))
        return float(sum(p.area() for p in self.params["parts"]))

    def indicator(self, x, y, width: float = 0.0) -> np.ndarray:
        """Phase-1 indicator, blended over ``width`` when positive."""
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        if self.kind == "empty":
            return np.zeros(np.broadcast(x, y).shape)
        if self.kind == "disk":
            c, r = self.params["center"], self.params["radius"]
            # (r^2 - rho^2) / 2r matches the signed distance to first order at
            # the interface and stays smooth at the centre
            return _step((r**2 - (x - c[0]) ** 2 - (y - c[1]) ** 2) / (2 * r), width)
        if self.kind == "rectangle":
            lo, hi = self.params["lo"], self.params["hi"]
            return (_step(x - lo[0], width) * _step(hi[0] - x, width)
                    * _step(y - lo[1], width) * _step(hi[1] - y, width))
        out = np.zeros(np.broadcast(x, y).shape)
        for p in self.params["parts"]:
            out = 1.0 - (1.0 - out) * (1.0 - p.indicator(x, y, width))
        return out


def _overlap(a: Geometry, b: Geometry) -> bool:
    def box(g):
        if g.kind == "disk":
            c, r = g.params["center"], g.params["radius"]
            return c - r, c + r
        if g.kind == "rectangle":
            return g.params["lo"], g.params["hi"]
        los, his = zip(*(box(p) for p in g.params["parts"]))
        return np.min(los, axis=0), np.max(his, axis=0)

    if a.kind == "disk" and b.kind == "disk":
        d = np.linalg.norm(a.params["center"] - b.params["center"])
        return d < a.params["radius"] + b.params["radius"]
    if {a.kind, b.kind} == {"disk", "rectangle"}:
        disk, rect = (a, b) if a.kind == "disk" else (b, a)
        c = disk.params["center"]
        nearest = np.clip(c, rect.params["lo"], rect.params["hi"])
        return np.linalg.norm(c - nearest) < disk.params["radius"]
    (alo, ahi), (blo, bhi) = box(a), box(b)
    return bool(np.all(alo < bhi) and np.all(blo < ahi))


@dataclass(frozen=True)
class PhaseLayout:
    """Phase arrangement on a grid.

    ``smoothing_width`` blends the interface over that many grid spacings;
    ``smoothing_length`` (absolute, overrides the former) keeps the blended
    coefficients fixed under refinement, as convergence studies need.
    """

    grid: Grid
    geometry: Geometry
    material: PhaseMaterial
    f1_exact: float
    smoothing_width: float = 2.0
    smoothing_length: float | None = None

    @property
    def blend(self) -> float:
        if self.smoothing_length is not None:
            return float(self.smoothing_length)
        return float(self.smoothing_width) * self.grid.h

    @property
    def chi1(self) -> np.ndarray:
        """Sharp nodal indicator of phase 1."""
        X, Y = self.grid.mesh
        return self.geometry.indicator(X, Y)

    @property
    def grid_fraction(self) -> float:
        return float(volume_average(self.chi1, self.grid))

    def chi(self, x, y) -> np.ndarray:
        """Coefficient-blending indicator (sharp when no smoothing)."""
        return self.geometry.indicator(x, y, self.blend)

    def moduli(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        c = self.chi(x, y)
        m = self.material
        return m.lambda1 * c + m.lambda2 * (1 - c), m.mu1 * c + m.mu2 * (1 - c)

    def nodal_moduli(self) -> tuple[np.ndarray, np.ndarray]:
        return self.moduli(*self.grid.mesh)

    @property
    def is_homogeneous(self) -> bool:
        m = self.material
        return self.geometry.kind == "empty" or (m.lambda1 == m.lambda2 and m.mu1 == m.mu2)


def make_phase_layout(geometry: dict | Geometry | None, material: PhaseMaterial, grid: Grid,
                      smoothing_width: float = 2.0, smoothing_length: float | None = None) -> PhaseLayout:
    if smoothing_width < 0 or (smoothing_length is not None and smoothing_length < 0):
        raise ValueError("smoothing must be non-negative")
    geo = geometry if isinstance(geometry, Geometry) else Geometry.from_spec(geometry)
    return PhaseLayout(grid, geo, material, geo.area(), smoothing_width, smoothing_length)


# ----------------------------------------------------------------------------
# export

def write_field_csv(path: str | Path, grid: Grid, **fields: np.ndarray) -> None:
    """Write nodal fields as ``i, j, x, y, <columns>`` rows.

    Vector and tensor fields are flattened into ``name_k`` columns.
    """
    cols, data = [], []
    for name, arr in fields.items():
        arr = np.asarray(arr, dtype=float).reshape(grid.n, grid.n, -1)
        if arr.shape[-1] == 1:
            cols.append(name)
        else:
            cols.extend(f"{name}_{k}" for k in range(arr.shape[-1]))
        data.append(arr)
    stacked = np.concatenate(data, axis=-1) if data else np.zeros((grid.n, grid.n, 0))
    X, Y = grid.mesh
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "x", "y", *cols])
        for i in range(grid.n):
            for j in range(grid.n):
                w.writerow([i, j, f"{X[i, j]:.17g}", f"{Y[i, j]:.17g}",
                            *(f"{v:.17g}" for v in stacked[i, j])])
