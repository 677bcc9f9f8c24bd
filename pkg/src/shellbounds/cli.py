"""
Command-line driver: ``shellbounds {forward,identities,bounds,oracle,convergence}``.

Every report is JSON with the resolved configuration, the package version
and a ``timestamp`` field; apart from that field, reruns with the same
configuration and seed are byte-identical.  Failures print an error JSON
on stdout and exit nonzero.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from .airy_transform import shell2_residual
from .boundary_functionals import c0_forms, a0_from_boundary
from .oracle_suite import convergence_order, oracle_sweep
from .pipeline import (
    ConfigError,
    RunConfig,
    envelope,
    read_bundle_csv,
    run_bounds,
    run_forward,
    run_moments,
    write_json,
)
from .tensor_algebra import rperp_conjugate
from .translation_bounds import DegenerateContrastError

EXIT_CONFIG, EXIT_NUMERIC, EXIT_OTHER = 2, 3, 1

# Identity checks compare two discretizations of the same quantity, so the
# thresholds are discretization-sized rather than round-off sized.
IDENTITY_TOL = 5e-2
ALGEBRA_TOL = 1e-12


def _solve_summary(report) -> dict:
    d = report.to_dict()
    d.pop("seconds", None)  # wall time would break byte-identical reruns
    return d


def _out_dir(args, config: RunConfig | None) -> Path:
    if args.out:
        return Path(args.out)
    return Path(config.data["output_dir"]) if config is not None else Path("runs/oracle")


def _load_config(args) -> RunConfig:
    raw = {}
    if args.config:
        cfg = RunConfig.load(args.config)
        raw = cfg.data
    if args.seed is not None:
        raw = {**raw, "seed": args.seed}
    return RunConfig.from_dict(raw)


# ----------------------------------------------------------------------------
# commands

def cmd_forward(config: RunConfig, out: Path) -> dict:
    fwd = run_forward(config)
    out.mkdir(parents=True, exist_ok=True)
    fwd.state.to_csv(out / "fields.csv")
    fwd.bundle.to_csv(out / "cauchy.csv", fwd.frame)
    payload = {"solve": _solve_summary(fwd.report), "grid_fraction": fwd.layout.grid_fraction,
               "true_f1": fwd.layout.f1_exact, "files": ["fields.csv", "cauchy.csv"]}
    write_json(out / "forward.json", envelope(config, "forward", payload))
    return payload


def _check(name, value, tol) -> dict:
    value = float(value)
    return {"name": name, "value": value, "tol": tol, "pass": bool(np.isfinite(value) and value <= tol)}


def cmd_identities(config: RunConfig, out: Path) -> dict:
    fwd = run_forward(config)
    mr = run_moments(fwd)
    checks = []
    for k, v in mr.boundary.discrepancy(mr.field).items():
        checks.append(_check(f"moment:{k}", v, IDENTITY_TOL))
    r = shell2_residual(fwd.state, mr.psi, fwd.theta)
    checks.append(_check("shell2:membrane", r.r1, IDENTITY_TOL))
    checks.append(_check("shell2:bending", r.r2, IDENTITY_TOL))
    traces = mr.psi.trace(fwd.frame)
    c1, c2 = c0_forms(traces, fwd.frame)
    checks.append(_check("c0:two_forms", abs(c1 - c2) / max(abs(c1), abs(c2), 1.0), IDENTITY_TOL))
    a0b, skew = a0_from_boundary(traces, fwd.frame, skew_tol=np.inf, return_skew=True)
    checks.append(_check("a0:skew", abs(skew) / max(float(np.linalg.norm(a0b)), 1.0), IDENTITY_TOL))
    # pointwise cancellation (grad theta x grad u3) . R H = (R H grad theta) . grad u3
    RH = rperp_conjugate(mr.psi.hessian)
    gt, gu = fwd.state.grad_theta, fwd.state.grad_u3
    lhs = np.einsum("...i,...j,...ij->...", gt, gu, RH)
    rhs = np.einsum("...ij,...j,...i->...", RH, gt, gu)
    scale = max(1.0, float(np.max(np.abs(lhs))))
    checks.append(_check("pointwise_cancellation", np.max(np.abs(lhs - rhs)) / scale, ALGEBRA_TOL))
    e2 = 2 * fwd.report.energy
    checks.append(_check("energy:e0_vs_2E", abs(mr.field.e0 - e2) / max(abs(e2), 1e-300), IDENTITY_TOL))

    feas = run_bounds(config, mr.boundary, fwd.layout.f1_exact)
    payload = {"checks": checks, "all_pass": all(c["pass"] for c in checks),
               "bounds": {"verdict": feas.verdict, "degenerate": feas.degenerate, "reason": feas.reason},
               "moments": {"boundary": mr.boundary.to_dict(), "field": mr.field.to_dict()},
               "solve": _solve_summary(fwd.report)}
    write_json(out / "identities.json", envelope(config, "identities", payload))
    return payload


def cmd_bounds(config: RunConfig, out: Path, run_dir: Path | None = None) -> dict:
    fwd = run_forward(config)
    if run_dir is not None:
        # Boundary data come from the stored Cauchy table; the re-solve only
        # supplies the field fallback and the ψ gauge reference.
        fwd.bundle = read_bundle_csv(run_dir / "cauchy.csv", fwd.frame)
    mr = run_moments(fwd)
    source = config.data["bounds"]["moment_source"]
    moments = mr.boundary if source == "boundary" else mr.field
    feas = run_bounds(config, moments, fwd.layout.f1_exact)
    out.mkdir(parents=True, exist_ok=True)
    if feas.curves:
        feas.write_curves(out / "gap_curves.csv")
    payload = {"moment_source": source, "moments": moments.to_dict(), "feasibility": feas.to_dict(),
               "verdict": feas.verdict}
    write_json(out / "bounds.json", envelope(config, "bounds", payload))
    return payload


def cmd_oracle(trials: int, seed: int, out: Path) -> dict:
    payload = oracle_sweep(trials, seed)
    write_json(out / "oracle.json", envelope(None, "oracle", payload))
    return payload


def cmd_convergence(levels: list[int], config: RunConfig, out: Path) -> dict:
    rows = []
    for n in levels:
        cfg = config.with_n(n)
        fwd = run_forward(cfg)
        mr = run_moments(fwd)
        disc = mr.boundary.discrepancy(mr.field)
        rows.append({"n": n, "h": 1.0 / (n - 1), "energy": fwd.report.energy, "residual": fwd.report.residual,
                     **{f"disc_{k}": v for k, v in disc.items()}})
    orders = {}
    for key in (k for k in rows[0] if k.startswith("disc_")):
        try:
            orders[key] = convergence_order([r[key] for r in rows])
        except ValueError:
            orders[key] = float("nan")
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "convergence.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.17g}" if isinstance(v, float) else v) for k, v in r.items()})
    payload = {"levels": levels, "rows": rows, "orders": orders}
    write_json(out / "convergence.json", envelope(config, "convergence", payload))
    return payload


# ----------------------------------------------------------------------------
# entry point

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shellbounds", description=__doc__.splitlines()[1])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("forward", "identities", "bounds", "oracle", "convergence"):
        s = sub.add_parser(name)
        s.add_argument("--config", help="TOML (or JSON) run configuration")
        s.add_argument("--out", help="output directory (default: output_dir from the config)")
        s.add_argument("--seed", type=int)
        if name == "bounds":
            s.add_argument("--run", help="run directory written by 'forward' (reads its cauchy.csv)")
        if name == "oracle":
            s.add_argument("--trials", type=int, default=100)
        if name == "convergence":
            s.add_argument("--levels", default="33,65,129", help="comma-separated grid sizes")
    return p


def _parse_levels(text: str) -> list[int]:
    try:
        levels = [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"--levels must be integers: {text!r}") from exc
    if len(levels) < 2 or any(n < 17 or n % 2 == 0 for n in levels):
        raise ConfigError("--levels needs at least two odd grid sizes >= 17")
    return levels


def _run(args) -> dict:
    if args.command == "oracle":
        seed = 0 if args.seed is None else args.seed
        if args.trials < 1:
            raise ConfigError("--trials must be positive")
        return cmd_oracle(args.trials, seed, Path(args.out or "runs/oracle"))
    run_dir = Path(args.run) if getattr(args, "run", None) else None
    if run_dir is not None and not args.config:
        args.config = str(run_dir / "forward.json")
        cfg = RunConfig.from_dict(json.loads(Path(args.config).read_text())["config"])
        if args.seed is not None:
            cfg = RunConfig.from_dict({**cfg.data, "seed": args.seed})
    else:
        cfg = _load_config(args)
    out = _out_dir(args, cfg)
    if args.command == "forward":
        return cmd_forward(cfg, out)
    if args.command == "identities":
        return cmd_identities(cfg, out)
    if args.command == "bounds":
        return cmd_bounds(cfg, out, run_dir)
    return cmd_convergence(_parse_levels(args.levels), cfg, out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    err = None
    try:
        result = _run(args)
    except ConfigError as exc:
        code, kind, err = EXIT_CONFIG, "config", exc
    except (DegenerateContrastError, np.linalg.LinAlgError, FloatingPointError, ArithmeticError) as exc:
        code, kind, err = EXIT_NUMERIC, "numerical", exc
    except (OSError, ValueError, KeyError, RuntimeError) as exc:
        code, kind, err = EXIT_OTHER, "runtime", exc
    else:
        summary = {"command": args.command, "status": "ok"}
        if "verdict" in result:
            summary["verdict"] = result["verdict"]
        if "all_pass" in result:
            summary["all_pass"] = result["all_pass"]
        print(json.dumps(summary, sort_keys=True))
        print(f"done in {time.perf_counter() - t0:.2f} s", file=sys.stderr)
        return 0
    print(json.dumps({"command": args.command, "status": "error", "kind": kind,
                      "error": type(err).__name__, "message": str(err)}, sort_keys=True))
    return code


if __name__ == "__main__":
    sys.exit(main())
