"""
Run configuration and the end-to-end pipeline shared by the command line
and the demo scripts.
"""

from __future__ import annotations

import copy
import datetime as _dt
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .airy_transform import AiryField, airy_reconstruct
from .boundary_functionals import MomentSet, moments_from_boundary, moments_from_field
from .domain_fields import BoundaryFrame, Grid, PhaseLayout, ShellProfile, make_phase_layout
from .forward_solver import BoundaryConditions, CauchyBundle, ShellState, SolveReport, extract_cauchy, solve_shell
from .tensor_algebra import PhaseMaterial
from .translation_bounds import BoundInputs, FeasibilityReport, feasible_fraction_set


class ConfigError(ValueError):
    """Invalid run configuration."""


DEFAULTS = {
    "seed": 0,
    "output_dir": "runs/default",
    "grid": {"n": 65},
    "material": {"lambda1": 1.0, "mu1": 2.0, "lambda2": 0.5, "mu2": 1.0},
    "inclusion": {"kind": "disk", "params": {"center": [0.5, 0.5], "radius": 0.25}, "smoothing_width": 2.0,
                  "smoothing_length": None},
    "theta": {"kind": "flat", "params": {}},
    "loading": {"name": "uniaxial-stretch+bend-x", "amplitude": 1.0, "fourier_k": 1, "table": None},
    "bounds": {"scan_grid": 4096, "epsilon": 1e-3, "tol": None, "refine": 1e-6, "moment_source": "boundary",
               "strict": False},
}

_TYPES = {
    ("seed",): int, ("output_dir",): str, ("grid", "n"): int,
    ("material", "lambda1"): float, ("material", "mu1"): float,
    ("material", "lambda2"): float, ("material", "mu2"): float,
    ("inclusion", "kind"): str, ("inclusion", "params"): dict, ("inclusion", "smoothing_width"): float,
    ("inclusion", "smoothing_length"): (float, type(None)),
    ("theta", "kind"): str, ("theta", "params"): dict,
    ("loading", "name"): str, ("loading", "amplitude"): float, ("loading", "fourier_k"): int,
    ("loading", "table"): (str, type(None)),
    ("bounds", "scan_grid"): int, ("bounds", "epsilon"): float, ("bounds", "tol"): (float, type(None)),
    ("bounds", "refine"): float, ("bounds", "moment_source"): str, ("bounds", "strict"): bool,
}


def _merge(base: dict, over: dict, path=()) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ConfigError(f"unknown configuration key {'.'.join(path + (k,))!r}")
        if isinstance(base[k], dict) and path + (k,) not in _TYPES:
            if not isinstance(v, dict):
                raise ConfigError(f"{'.'.join(path + (k,))} must be a table")
            out[k] = _merge(base[k], v, path + (k,))
        else:
            out[k] = copy.deepcopy(v)
    return out


def _check_types(cfg: dict) -> None:
    for path, typ in _TYPES.items():
        v = cfg
        for p in path:
            v = v[p]
        types = typ if isinstance(typ, tuple) else (typ,)
        if float in types and isinstance(v, int) and not isinstance(v, bool):
            continue
        if typ is int and isinstance(v, bool):
            raise ConfigError(f"{'.'.join(path)} must be an integer")
        if not isinstance(v, types):
            raise ConfigError(f"{'.'.join(path)} has type {type(v).__name__}, expected "
                              + " or ".join(t.__name__ for t in types))


@dataclass
class RunConfig:
    data: dict

    @classmethod
    def from_dict(cls, raw: dict | None = None) -> "RunConfig":
        cfg = _merge(DEFAULTS, raw or {})
        _check_types(cfg)
        self = cls(cfg)
        self.validate()
        return self

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        try:
            with open(path, "rb") as fh:
                raw = json.load(fh) if path.suffix == ".json" else tomllib.load(fh)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
        return cls.from_dict(raw)

    def validate(self) -> None:
        """Build every object once so that bad values fail before any solve."""
        if self.data["bounds"]["moment_source"] not in ("boundary", "field"):
            raise ConfigError("bounds.moment_source must be 'boundary' or 'field'")
        if not 0 < self.data["bounds"]["epsilon"] < 0.5:
            raise ConfigError("bounds.epsilon must lie in (0, 0.5)")
        if self.data["bounds"]["scan_grid"] < 2:
            raise ConfigError("bounds.scan_grid must be at least 2")
        try:
            self.grid()
            self.layout()
            self.theta()
            if self.data["loading"]["table"] is None:
                from .forward_solver import loading_fields

                loading_fields(self.data["loading"]["name"])
        except ConfigError:
            raise
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc

    def with_n(self, n: int) -> "RunConfig":
        d = copy.deepcopy(self.data)
        d["grid"]["n"] = int(n)
        return RunConfig.from_dict(d)

    def grid(self) -> Grid:
        return Grid(self.data["grid"]["n"])

    def material(self) -> PhaseMaterial:
        m = self.data["material"]
        return PhaseMaterial(float(m["lambda1"]), float(m["mu1"]), float(m["lambda2"]), float(m["mu2"]))

    def layout(self, grid: Grid | None = None) -> PhaseLayout:
        inc = self.data["inclusion"]
        geo = {"kind": inc["kind"], **inc["params"]}
        return make_phase_layout(geo, self.material(), grid or self.grid(), float(inc["smoothing_width"]),
                                 inc["smoothing_length"])

    def theta(self) -> ShellProfile:
        return ShellProfile(self.data["theta"]["kind"], dict(self.data["theta"]["params"]))

    def boundary_conditions(self, frame: BoundaryFrame) -> BoundaryConditions:
        ld = self.data["loading"]
        if ld["table"]:
            return BoundaryConditions.from_table(ld["table"], frame)
        return BoundaryConditions.catalog(frame, ld["name"], float(ld["amplitude"]), int(ld["fourier_k"]))


# ----------------------------------------------------------------------------
# pipeline stages

@dataclass
class ForwardRun:
    config: RunConfig
    grid: Grid
    frame: BoundaryFrame
    layout: PhaseLayout
    theta: ShellProfile
    state: ShellState
    report: SolveReport
    bundle: CauchyBundle


def run_forward(config: RunConfig) -> ForwardRun:
    grid = config.grid()
    frame = BoundaryFrame(grid)
    layout, theta = config.layout(grid), config.theta()
    bc = config.boundary_conditions(frame)
    state, report = solve_shell(grid, layout, theta, bc)
    return ForwardRun(config, grid, frame, layout, theta, state, report, extract_cauchy(state, frame))


@dataclass
class MomentRun:
    boundary: MomentSet
    field: MomentSet
    psi: AiryField


def run_moments(fwd: ForwardRun, strict: bool | None = None) -> MomentRun:
    strict = fwd.config.data["bounds"]["strict"] if strict is None else strict
    psi = airy_reconstruct(fwd.state.s_theta, fwd.grid)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        mb = moments_from_boundary(fwd.bundle, fwd.theta, fwd.frame, strict=strict, state=fwd.state, reference=psi)
    return MomentRun(mb, moments_from_field(fwd.state, psi, fwd.theta), psi)


def run_bounds(config: RunConfig, moments: MomentSet, true_f1: float | None) -> FeasibilityReport:
    b = config.data["bounds"]
    return feasible_fraction_set(BoundInputs(moments, config.material(), true_f1), epsilon=b["epsilon"],
                                 grid=b["scan_grid"], refine=b["refine"], tol=b["tol"])


# ----------------------------------------------------------------------------
# reports

def envelope(config: RunConfig, kind: str, payload: dict) -> dict:
    """Wrap a report with the resolved config, version and timestamp."""
    return {
        "kind": kind,
        "version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "config": config.data if config is not None else None,
        "result": payload,
    }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: str | Path, data: dict) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


def read_bundle_csv(path: str | Path, frame: BoundaryFrame) -> CauchyBundle:
    """Inverse of :meth:`CauchyBundle.to_csv`."""
    import csv

    names = [e.name for e in frame]
    rows = {nm: [] for nm in names}
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            rows[r["edge"]].append(r)
    def col(nm, *keys):
        a = np.array([[float(r[k]) for k in keys] for r in sorted(rows[nm], key=lambda r: int(r["k"]))])
        return a[:, 0] if len(keys) == 1 else a
    get = lambda *keys: [col(nm, *keys) for nm in names]  # noqa: E731
    return CauchyBundle(u=get("u1", "u2"), u3=get("u3"), u3n=get("u3n"), sn=get("sn1", "sn2"),
                        shear=get("shear"), mnn=get("mnn"), mn=get("mn1", "mn2"), div_m_n=get("div_m_n"),
                        theta_sn=get("theta_sn"), sigma_n=get("sigma_n1", "sigma_n2"),
                        div_sigma_n=get("div_sigma_n"))
