"""Command-line entry point: check, simulate, project, momentum and algebra.

Exit codes: 0 all checks pass, 1 a check failed, 2 bad input, 3 numerical
failure.  Reports are deterministic: fixed key order, fixed seeds and no
wall-clock data unless ``--timings`` is given.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import SimConfig, read_solution, simulate, write_solution
from .errors import (
    ConfigError,
    ExprSyntaxError,
    FeasibilityError,
    IntegrationError,
    ModelSchemaError,
    NHFieldError,
    UnboundVariableError,
    UnsupportedModelError,
)
from .geometry import (
    TOL_COMPAT,
    TOL_REGULAR,
    constraint_forms,
    constraint_jacobian,
    constraint_package,
    function_gradient,
    jet,
    regularity,
)
from .ksla import KSymplecticSpace, Subspace, classify, orthogonal, restrict, structure_validity
from .model import BUILTINS, FieldPoint, ModelSpec, load_model, model_to_dict, unpack
from .momentum import (
    ANNIHILATION_TOL,
    annihilation_residual,
    invariance_residual,
    is_horizontal,
    momentum_residual,
    momentum_series,
    residual_summary,
)
from .projector import TOL_FEAS, constrained_sopde_multiplier, free_sopde, point_data, project_free_solution

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3
INPUT_ERRORS = (ConfigError, ModelSchemaError, ExprSyntaxError, UnboundVariableError, FeasibilityError, UnsupportedModelError)


class InputError(Exception):
    pass


# -- helpers -------------------------------------------------------------------------


def _clean(x):
    """JSON-safe, deterministic values: numpy scalars and arrays become lists and floats."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        f = float(x)
        if math.isfinite(f):
            return f
        return "nan" if math.isnan(f) else ("inf" if f > 0 else "-inf")
    return x


def git_hash(*blobs: bytes) -> str:
    """Git-style blob hash of the concatenated inputs."""
    data = b"\0".join(blobs)
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def _model_bytes(source: str, model: ModelSpec) -> bytes:
    p = Path(source)
    if p.exists():
        return p.read_bytes()
    return json.dumps(model_to_dict(model), sort_keys=True).encode()


def _load(source: str) -> ModelSpec:
    try:
        return load_model(source)
    except (ModelSchemaError, ExprSyntaxError, UnboundVariableError):
        raise
    except (OSError, ValueError) as exc:
        raise ModelSchemaError(str(exc)) from exc


def _parse_point(text: str, model: ModelSpec) -> FieldPoint:
    try:
        vals = [float(t) for t in text.replace(";", ",").split(",") if t.strip()]
    except ValueError:
        raise ConfigError("point", f"cannot parse {text!r} as numbers") from None
    if len(vals) != model.dim:
        raise ConfigError("point", f"needs {model.dim} values (q then v blocks), got {len(vals)}")
    return unpack(np.array(vals), model.n)


def feasible_points(model: ModelSpec, count: int, seed: int, tol: float = 1e-12, tries: int = 20):
    """Newton projection of uniform random seeds onto ``Phi = 0`` (minimum-norm steps)."""
    rng = np.random.default_rng(seed)
    out = []
    attempts = 0
    while len(out) < count and attempts < count * tries:
        attempts += 1
        x = rng.uniform(-1.0, 1.0, size=model.dim)
        ok = model.m == 0
        for _ in range(30):
            if model.m == 0:
                break
            phi = np.array([f(x) for f in model.Phi], dtype=float)
            if np.max(np.abs(phi)) <= tol:
                ok = True
                break
            J = np.array([function_gradient(f, x)[1] for f in model.Phi])
            x = x - np.linalg.lstsq(J, phi, rcond=None)[0]
            if not np.all(np.isfinite(x)):
                break
        if ok:
            out.append(unpack(x, model.n))
    return out


def _check(name, passed, value, tolerance, note=None):
    c = {"name": name, "pass": bool(passed), "value": value, "tolerance": tolerance}
    if note:
        c["note"] = note
    return c


def _report(command, model_name, input_hash, checks, details, args):
    rep = {
        "command": command,
        "model": model_name,
        "input_hash": input_hash,
        "seed": args.seed,
        "pass": all(c["pass"] for c in checks),
        "checks": checks,
        "details": details,
    }
    if args.timings:
        rep["timings"] = {"elapsed_s": time.perf_counter() - args.started}
    return rep


def _emit(report, args, rows=None):
    out = sys.stdout
    if args.format == "csv" and rows is not None:
        w = csv.writer(out, lineterminator="\n")
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    elif args.format == "csv":
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["check", "pass", "value", "tolerance"])
        for c in report["checks"]:
            w.writerow([c["name"], str(c["pass"]).lower(), _fmt(c["value"]), _fmt(c["tolerance"])])
    else:
        out.write(json.dumps(_clean(report), indent=2) + "\n")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    if v is None:
        return ""
    return str(v)


# -- commands ------------------------------------------------------------------------


def cmd_check(args) -> int:
    model = _load(args.model)
    tol_compat = args.tol_compat if args.tol_compat is not None else TOL_COMPAT
    if args.point:
        points = [_parse_point(args.point, model)]
    else:
        points = feasible_points(model, args.samples, args.seed)
        if not points:
            raise ArithmeticError("no feasible point found by Newton projection")
    reg_min, rank_ok, compat_min, degenerate = math.inf, True, math.inf, []
    compat_skipped = 0
    per_point = []
    for w in points:
        j = jet(model, w)
        reg = regularity(model, w, j=j)
        reg_min = min(reg_min, reg["condition"])
        if not reg["regular"]:
            degenerate = reg.get("degenerate_velocities", degenerate)
        entry = {"point": w.flat(), "regularity_condition": reg["condition"]}
        if model.m:
            _, dphi = constraint_jacobian(model, w)
            eta = constraint_forms(model, w, dphi).reshape(model.m, -1)
            rank = int(np.linalg.matrix_rank(eta))
            rank_ok &= rank == model.m
            entry["eta_rank"] = rank
            if reg["regular"] and rank == model.m:
                pk = constraint_package(model, w, j, tol_compat=tol_compat)
                compat_min = min(compat_min, pk.condition)
                entry["compat_condition"] = pk.condition
            else:
                compat_skipped += 1
        per_point.append(entry)
    checks = [
        _check("regularity", reg_min > TOL_REGULAR, reg_min, TOL_REGULAR,
               None if reg_min > TOL_REGULAR else "degenerate velocity Hessian; use the explicit field equations"),
    ]
    if model.m:
        checks.append(_check("constraint_rank", rank_ok, float(model.m), 0.0))
        if compat_skipped == len(points):
            checks.append(_check("compatibility", True, None, tol_compat, "not applicable: needs an invertible velocity Hessian"))
        else:
            checks.append(_check("compatibility", compat_min > tol_compat, compat_min, tol_compat))
    details = {
        "n": model.n,
        "k": model.k,
        "m": model.m,
        "form_mode": model.form_mode if model.m else "none",
        "points": len(points),
        "degenerate_velocities": degenerate,
        "per_point": per_point,
    }
    if model.m == 0:
        details["note"] = "no constraints: rank and compatibility are vacuous"
    elif model.form_mode == "explicit":
        details["note"] = "reaction forms given explicitly, not derived by the Chetaev rule"
    rep = _report("check", model.name, git_hash(_model_bytes(args.model, model)), checks, details, args)
    _emit(rep, args)
    return EXIT_OK if rep["pass"] else EXIT_FAIL


def cmd_simulate(args) -> int:
    model = _load(args.model)
    try:
        raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ConfigError("config", f"cannot read {args.config}: {exc}") from exc
    if isinstance(raw, dict):
        if args.tol_feas is not None:
            raw["tol_feas"] = args.tol_feas
        if args.tol_compat is not None:
            raw["tol_compat"] = args.tol_compat
    config = SimConfig.from_dict(raw)
    out = Path(args.out)
    status, code, message = "ok", EXIT_OK, ""
    try:
        sol = simulate(model, config)
    except IntegrationError as exc:
        sol, status, code, message = exc.partial, "partial", EXIT_NUMERIC, str(exc)
    write_solution(sol, out, m=model.m)
    drift = float(np.ptp(sol.energy)) if len(sol.t) else 0.0
    tdrift = float(np.ptp(sol.time_energy)) if sol.time_energy is not None and len(sol.t) else drift
    summary = {
        "status": status,
        "partial": status != "ok",
        "stop_reason": sol.status,
        "message": message,
        "steps": sol.steps,
        "t_final": float(sol.t[-1]) if len(sol.t) else 0.0,
        "phi_max": float(np.max(sol.phi_max)) if len(sol.t) else 0.0,
        "energy_drift": drift,
        "time_energy_drift": tdrift,
        "bc": sol.bc,
        "nodes": None if sol.s is None else int(len(sol.s)),
        "csv": out.name,
    }
    checks = [_check("constraint_drift", summary["phi_max"] <= config.drift_tol, summary["phi_max"], config.drift_tol)]
    h = git_hash(_model_bytes(args.model, model), Path(args.config).read_bytes())
    rep = _report("simulate", model.name, h, checks, summary, args)
    Path(str(out) + ".json").write_text(json.dumps(_clean(rep), indent=2) + "\n", encoding="utf-8")
    _emit(rep, args)
    if code != EXIT_OK:
        return code
    return EXIT_OK if rep["pass"] else EXIT_FAIL


def cmd_project(args) -> int:
    model = _load(args.model)
    tol_compat = args.tol_compat if args.tol_compat is not None else TOL_COMPAT
    tol_feas = args.tol_feas if args.tol_feas is not None else TOL_FEAS
    if args.point:
        w = _parse_point(args.point, model)
    else:
        pts = feasible_points(model, 1, args.seed)
        if not pts:
            raise ArithmeticError("no feasible point found by Newton projection")
        w = pts[0]
    data = point_data(model, w, tol_compat)
    free = free_sopde(model, w, data.jet)
    projected = project_free_solution(model, w, data)
    constrained, lam = constrained_sopde_multiplier(model, w, data, tol_feas=tol_feas, tol_compat=tol_compat)
    diff = float(np.max(np.abs(projected.accel - constrained.accel))) if projected.accel.size else 0.0
    details = {
        "point": w.flat(),
        "free": free.accel,
        "projected": projected.accel,
        "constrained": constrained.accel,
        "multipliers": lam,
        "projected_minus_constrained": diff,
    }
    checks = []
    if model.k == 1:
        checks.append(_check("projection_matches_multiplier_solve", diff < 1e-10, diff, 1e-10))
    else:
        details["note"] = "for k > 1 the projected and minimum-norm constrained solutions are reported, not required to agree"
    rep = _report("project", model.name, git_hash(_model_bytes(args.model, model), w.flat().tobytes()), checks, details, args)
    rows = [["kind", "A", "index", "value"]]
    for kind, arr in (("free", free.accel), ("projected", projected.accel), ("constrained", constrained.accel)):
        for A in range(arr.shape[0]):
            for i in range(arr.shape[1]):
                rows.append([kind, A + 1, i + 1, float(arr[A, i])])
    for a in range(lam.shape[0]):
        for B in range(lam.shape[1]):
            rows.append(["lambda", B + 1, a + 1, float(lam[a, B])])
    _emit(rep, args, rows)
    return EXIT_OK if rep["pass"] else EXIT_FAIL


def cmd_momentum(args) -> int:
    model = _load(args.model)
    sol = read_solution(args.solution, model)
    side = Path(str(args.solution) + ".json")
    bc = args.bc
    if bc is None and side.exists():
        try:
            bc = json.loads(side.read_text(encoding="utf-8"))["details"].get("bc")
        except (ValueError, KeyError, TypeError):
            bc = None
    sol.bc = (bc or "free") if sol.k > 1 else None
    if len(sol.t) < 3:
        raise ConfigError("solution", "needs at least three stored times")
    res = momentum_residual(model, sol, args.section)
    summary = residual_summary(res)
    stride = max(1, len(sol.t) // 20)
    annih, invar = 0.0, 0.0
    for i in range(0, len(sol.t), stride):
        pts = [FieldPoint(sol.q[i], sol.v[i])] if sol.k == 1 else [FieldPoint(sol.q[i, a], sol.v[i, a]) for a in range(0, len(sol.s), max(1, len(sol.s) // 8))]
        for w in pts:
            annih = max(annih, annihilation_residual(model, w, args.section))
            invar = max(invar, invariance_residual(model, w, args.section))
    details = {"section": args.section, "horizontal": is_horizontal(model, args.section), "residual": summary, "bc": sol.bc}
    checks = [
        _check("annihilation", annih < ANNIHILATION_TOL, annih, ANNIHILATION_TOL),
        _check("lagrangian_symmetry", invar < ANNIHILATION_TOL, invar, ANNIHILATION_TOL),
    ]
    if sol.k == 1:
        J = momentum_series(model, sol, args.section)[:, 0]
        details["momentum_drift"] = float(np.ptp(J))
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if sol.k == 1:
                w.writerow(["t", "residual"])
                for t, r in zip(sol.t[1:-1], res):
                    w.writerow([_fmt(t), _fmt(r)])
            else:
                w.writerow(["t", "node", "residual"])
                for ti, t in enumerate(sol.t[1:-1]):
                    for a, r in enumerate(res[ti]):
                        w.writerow([_fmt(t), a, _fmt(r)])
    h = git_hash(_model_bytes(args.model, model), Path(args.solution).read_bytes(), args.section.encode())
    rep = _report("momentum", model.name, h, checks, details, args)
    rows = [["t", "residual_max"]] + [[float(t), float(np.max(np.abs(r)))] for t, r in zip(sol.t[1:-1], np.atleast_1d(res) if sol.k == 1 else res)]
    _emit(rep, args, rows)
    return EXIT_OK if rep["pass"] else EXIT_FAIL


def cmd_algebra(args) -> int:
    try:
        raw = Path(args.input).read_bytes()
        d = json.loads(raw)
        forms = np.array(d["forms"], dtype=float)
        if forms.ndim == 2:
            forms = forms[None]
        N = forms.shape[-1]
        V = np.array(d.get("V", []), dtype=float).reshape(-1, N)
        W = np.array(d.get("W", []), dtype=float).reshape(-1, N)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError("algebra", f"cannot read {args.input}: {exc}") from exc
    if forms.shape[1:] != (N, N):
        raise ConfigError("forms", "every form must be a square N x N matrix")
    space = KSymplecticSpace(forms, Subspace.span(V.T, N))
    Ws = Subspace.span(W.T, N)
    Wp = orthogonal(space, Ws)
    flags = classify(space, Ws)
    valid = structure_validity(space)
    details = {
        "N": N,
        "k": forms.shape[0],
        "dim_V": space.V.d,
        "dim_W": Ws.d,
        "dim_W_perp": Wp.d,
        "W_perp_basis": Wp.basis.T,
        "classification": flags,
        "structure": valid,
    }
    checks = [_check("structure_validity", valid["valid"], max(valid["antisymmetry"], valid["vanishes_on_V"]), 1e-12)]
    if flags["ksymplectic"] and Ws.d:
        details["restriction"] = structure_validity(restrict(space, Ws))
    rep = _report("algebra", None, git_hash(raw), checks, details, args)
    rows = [["property", "value"]] + [[k, v] for k, v in flags.items()]
    _emit(rep, args, rows)
    return EXIT_OK if rep["pass"] else EXIT_FAIL


# -- entry point ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="RNG seed for point sampling (default 42)")
    common.add_argument("--tol-compat", type=float, default=argparse.SUPPRESS, help="compatibility threshold on rcond(C)")
    common.add_argument("--tol-feas", type=float, default=argparse.SUPPRESS, help="feasibility tolerance on |Phi|")
    common.add_argument("--format", choices=("json", "csv"), default=argparse.SUPPRESS, help="report format on stdout")
    common.add_argument("--timings", action="store_true", default=argparse.SUPPRESS, help="add wall-clock timings to the report")

    p = argparse.ArgumentParser(prog="nhfield", description="k-symplectic nonholonomic field theory toolkit", parents=[common])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", parents=[common], help="regularity, constraint rank and compatibility")
    c.add_argument("model", help=f"model JSON file or builtin name ({', '.join(sorted(BUILTINS))})")
    c.add_argument("--point", help="comma-separated q then v blocks")
    c.add_argument("--samples", type=int, default=8, help="feasible points to sample when no point is given")
    c.set_defaults(func=cmd_check)

    s = sub.add_parser("simulate", parents=[common], help="integrate and write a solution CSV")
    s.add_argument("model")
    s.add_argument("config", help="simulation config JSON")
    s.add_argument("--out", required=True, help="solution CSV path; a .json sidecar is written next to it")
    s.set_defaults(func=cmd_simulate)

    pr = sub.add_parser("project", parents=[common], help="free, projected and constrained coefficients at a point")
    pr.add_argument("model")
    pr.add_argument("--point", help="comma-separated q then v blocks")
    pr.set_defaults(func=cmd_project)

    mo = sub.add_parser("momentum", parents=[common], help="momentum balance residual along a stored solution")
    mo.add_argument("model")
    mo.add_argument("solution", help="solution CSV written by simulate")
    mo.add_argument("--section", required=True)
    mo.add_argument("--bc", choices=("free", "clamped", "periodic"), help="grid boundary condition (default: from the sidecar)")
    mo.add_argument("--out", help="write the residual series as CSV")
    mo.set_defaults(func=cmd_momentum)

    al = sub.add_parser("algebra", parents=[common], help="classify a subspace of a k-symplectic vector space")
    al.add_argument("input", help="JSON with forms, V and W (basis vectors as rows)")
    al.set_defaults(func=cmd_algebra)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    for name, default in (("seed", 42), ("tol_compat", None), ("tol_feas", None), ("format", "json"), ("timings", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    args.started = time.perf_counter()
    try:
        code = args.func(args)
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NHFieldError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return code


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
