"""Command-line interface.

Every command prints (or writes with ``--out``) one JSON document holding the
values, their standard errors, the seed and the normalization conventions.
Exit status: 0 on success, 2 for malformed input, 3 for numerical failure
(with a diagnostic JSON document on stdout).
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import bodies as B
from . import hermitian as H
from . import intrinsic as I
from . import kinematic as KM
from . import selftest as ST
from . import valgebra as VA
from .mc import MCConfig, MCEstimate, default_workers

CONVENTIONS = dict(KM.CONVENTIONS, hadwiger_basis="phi = sum_i a_i V_i, V_i in the normalization above")

NUMERICAL_ERRORS = (B.ConvergenceError, I.SteinerConditionError, I.ExtrapolationError, VA.GradingError,
                    VA.PairingError, KM.FitConditionError, KM.WindowError, np.linalg.LinAlgError,
                    FloatingPointError)
MALFORMED_ERRORS = (ValueError, KeyError, TypeError, json.JSONDecodeError, FileNotFoundError)


class UsageError(Exception):
    """Malformed configuration (exit status 2)."""


# ---------------------------------------------------------------------------
# Argument types


def _json_arg(text: str):
    """Inline JSON (starting with '{' or '[') or the path of a JSON file."""
    s = text.strip()
    if s.startswith(("{", "[")):
        try:
            return json.loads(s)
        except json.JSONDecodeError as exc:
            raise argparse.ArgumentTypeError(f"invalid inline JSON: {exc}") from exc
    path = Path(text)
    if not path.is_file():
        raise argparse.ArgumentTypeError(f"file not found: {text}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"{text}: invalid JSON: {exc}") from exc


def _count(text: str) -> int:
    """Positive sample counts; accepts scientific notation such as 1e6."""
    try:
        value = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text}") from exc
    if not value >= 1 or value != int(value):
        raise argparse.ArgumentTypeError(f"sample budget must be a positive integer, got {text}")
    return int(value)


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.replace(",", " ").split()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers: {text}") from exc


def _body(spec) -> B.ConvexBody:
    if not isinstance(spec, dict):
        raise UsageError("a body must be a JSON object")
    try:
        return B.body_from_json(spec)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"malformed body: {exc}") from exc


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("VALLAB_SEED")
    if env is None:
        raise UsageError("a seed is required: pass --seed or set VALLAB_SEED")
    try:
        seed = int(env)
    except ValueError as exc:
        raise UsageError(f"VALLAB_SEED must be an integer, got {env!r}") from exc
    if seed < 0:
        raise UsageError("seeds must be non-negative")
    return seed


def _mc(args, default: int) -> MCConfig:
    samples = args.samples if args.samples is not None else default
    return MCConfig(samples=samples, seed=_seed(args), workers=args.workers)


def _est(e: MCEstimate) -> dict:
    return {"value": e.mean, "stderr": e.stderr, "samples": e.samples}


# ---------------------------------------------------------------------------
# Commands


def cmd_intrinsic(args) -> tuple[dict, list]:
    K = _body(args.body)
    mc = _mc(args, 1_000_000)
    vals = I.intrinsic_volumes(K, mc, args.method)
    idx = range(K.dim + 1) if args.i is None else [args.i]
    if args.i is not None and not 0 <= args.i <= K.dim:
        raise UsageError(f"--i must lie in 0..{K.dim}")
    rows = [{"i": i, **_est(vals[i])} for i in idx]
    out = {"command": "intrinsic", "dim": K.dim, "method": I.resolve_method(K, args.method), "volumes": rows}
    if args.i is not None:
        out.update(_est(vals[args.i]))
    return out, rows


def cmd_steiner(args) -> tuple[dict, list]:
    K = _body(args.body)
    fit = I.steiner_fit(K, args.radii, _mc(args, 1_000_000), args.method)
    rows = [{"j": j, "value": float(c), "stderr": float(s)} for j, (c, s) in enumerate(zip(fit.coeffs, fit.stderr))]
    return {"command": "steiner", "dim": K.dim, "method": fit.method, "coefficients": rows,
            "radii": fit.radii.tolist(), "residual": fit.residual, "condition": fit.condition}, rows


def _valuation(spec, n: int, method: str):
    """A valuation from a name (vol, chi, V0..Vn) or a G-representation JSON object."""
    if isinstance(spec, dict):
        if "a" in spec:
            return VA.synthesize(spec["a"], method)
        return VA.from_grep(VA.GRep.from_json(spec, n), "grep", method="auto")
    name = str(spec)
    if name == "vol":
        return VA.volume(n, method)
    if name == "chi":
        return VA.euler(n)
    if name.startswith("V") and name[1:].isdigit() and 0 <= int(name[1:]) <= n:
        return VA.intrinsic(int(name[1:]), method, n)
    raise UsageError(f"unknown valuation {name!r}: use vol, chi, V0..V{n} or a JSON representation")


def _valuation_arg(text: str):
    s = text.strip()
    if s.startswith("{") or Path(s).is_file():
        return _json_arg(s)
    return s


def cmd_hadwiger(args) -> tuple[dict, list]:
    n = args.n
    if args.a is not None:
        if len(args.a) != n + 1:
            raise UsageError(f"--a needs {n + 1} coefficients for n={n}")
        phi = VA.synthesize(args.a, args.method)
    else:
        phi = _valuation(args.valuation, n, args.method)
    res = VA.hadwiger_decompose(phi, n, args.radii, _mc(args, 200_000))
    rows = [{"i": i, "value": float(a), "stderr": float(s)} for i, (a, s) in enumerate(zip(res.coeffs, res.stderr))]
    out = {"command": "hadwiger", "n": n, "coefficients": rows, "condition": res.condition,
           "holdout": {"value": res.holdout.mean, "stderr": res.holdout.stderr,
                       "prediction": res.holdout_prediction, "residual": res.holdout_residual}}
    if args.a is not None:
        out["max_error"] = float(np.max(np.abs(res.coeffs - np.asarray(args.a))))
    return out, rows


def cmd_product(args) -> tuple[dict, list]:
    K = _body(args.body)
    n = K.dim
    phi = _valuation(args.phi, n, "auto")
    psi = _valuation(args.psi, n, "auto")
    est = VA.alesker_product(phi, psi, K, _mc(args, 1_000_000), allow_high_dim=args.allow_high_dim)
    out = {"command": "product", "dim": n, **_est(est)}
    return out, [out]


def cmd_ukp(args) -> tuple[dict, list]:
    K = _body(args.body)
    if args.m is not None and K.dim != 2 * args.m:
        raise UsageError(f"body lives in R^{K.dim}, not C^{args.m}")
    est = H.u_kp(K, args.k, args.p, _mc(args, 200_000), args.estimator, args.method)
    out = {"command": "ukp", "m": K.dim // 2, "k": args.k, "p": args.p, "estimator": args.estimator, **_est(est)}
    return out, [out]


def cmd_kinematic_check(args) -> tuple[dict, list]:
    A, Bd = _body(args.omega1), _body(args.omega2)
    n = args.n if args.n is not None else A.dim
    kappa = KM.derive_kappa(n)
    rep = KM.principal_kinematic_check(A, Bd, n, _mc(args, 1_000_000), kappa)
    out = {"command": "kinematic check", "n": n, "kappa": kappa.kappa.tolist(),
           "kappa_residual": kappa.residual, **rep.to_json()}
    return out, [{"lhs": rep.lhs.mean, "lhs_stderr": rep.lhs.stderr, "rhs": rep.rhs.mean,
                  "rhs_stderr": rep.rhs.stderr, "z": rep.z}]


def cmd_kinematic_integral(args) -> tuple[dict, list]:
    A, Bd = _body(args.omega1), _body(args.omega2)
    if args.group == "IU":
        if A.dim % 2:
            raise UsageError("IU(m) needs bodies in even dimension")
        measure = KM.MotionMeasure.iu(A.dim // 2)
    else:
        measure = KM.MotionMeasure.iso(A.dim)
    est = KM.kinematic_integral(A, Bd, measure, _mc(args, 1_000_000))
    out = {"command": "kinematic integral", "measure": measure.tag, **_est(est)}
    return out, [out]


def cmd_kappa(args) -> tuple[dict, list]:
    table = KM.derive_kappa(args.n, args.pairs)
    rows = [{"k": k, "kappa": float(v)} for k, v in enumerate(table.kappa)]
    return {"command": "kinematic kappa", "n": args.n, "kappa": rows, "residual": table.residual}, rows


def _pair_list(items, label: str) -> tuple[list, list]:
    pairs, names = [], []
    for j, item in enumerate(items):
        if isinstance(item, dict):
            a, b = item["omega1"], item["omega2"]
            names.append((item.get("name1", f"{label}{j}a"), item.get("name2", f"{label}{j}b")))
        else:
            a, b = item
            names.append((f"{label}{j}a", f"{label}{j}b"))
        pairs.append((_body(a), _body(b)))
    return pairs, names


def cmd_fit_hermitian(args) -> tuple[dict, list]:
    mc = _mc(args, 1_000_000)
    if args.pairs is None:
        fit = KM.fit_hermitian_constants(mc=mc)
    else:
        spec = args.pairs
        if not isinstance(spec, dict) or "training" not in spec or "holdout" not in spec:
            raise UsageError("pairs file needs 'training' and 'holdout' lists")
        train, tn = _pair_list(spec["training"], "train")
        hold, hn = _pair_list(spec["holdout"], "holdout")
        fit = KM.fit_hermitian_constants(train, mc, hold, names=(tn, hn))
    out = {"command": "kinematic fit-hermitian", **fit.to_json()}
    rows = [{"k1": ix[0], "k2": ix[1], "p1": ix[2], "p2": ix[3], "value": float(v), "stderr": float(s)}
            for ix, v, s in zip(fit.indices, fit.constants, fit.stderr)]
    return out, rows


def cmd_selftest(args) -> tuple[dict, list]:
    results = ST.run(_seed(args), args.only)
    rows = [r.to_json() for r in results]
    return {"command": "selftest", "passed": all(r.passed for r in results), "checks": rows}, rows


# ---------------------------------------------------------------------------
# Parser


def _common(p: argparse.ArgumentParser, samples: bool = True) -> None:
    if samples:
        p.add_argument("--samples", type=_count, default=None, help="Monte Carlo budget (e.g. 1e6)")
    p.add_argument("--seed", type=int, default=None, help="random seed (default: $VALLAB_SEED)")
    p.add_argument("--workers", type=int, default=default_workers(), help="worker processes")
    p.add_argument("--out", type=Path, default=None, help="write the JSON result here")
    p.add_argument("--csv", type=Path, default=None, help="also write a CSV table")


def _method(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", choices=I.METHODS, default="auto")


def _add_kinematic(sub) -> None:
    kin = sub.add_parser("kinematic", help="kinematic integrals and formulas")
    ksub = kin.add_subparsers(dest="action", required=True)
    chk = ksub.add_parser("check", help="principal kinematic formula check over ISO(n)")
    chk.add_argument("--n", type=int, default=None)
    chk.add_argument("--omega1", type=_json_arg, required=True)
    chk.add_argument("--omega2", type=_json_arg, required=True)
    _common(chk)
    chk.set_defaults(func=cmd_kinematic_check)
    itg = ksub.add_parser("integral", help="Monte Carlo kinematic integral")
    itg.add_argument("--group", choices=KM.GROUPS, default="ISO")
    itg.add_argument("--omega1", type=_json_arg, required=True)
    itg.add_argument("--omega2", type=_json_arg, required=True)
    _common(itg)
    itg.set_defaults(func=cmd_kinematic_integral)
    kap = ksub.add_parser("kappa", help="derive the principal kinematic constants")
    kap.add_argument("--n", type=int, required=True)
    kap.add_argument("--pairs", type=_json_arg, default=None, help="list of [r, s] ball radii")
    _common(kap, samples=False)
    kap.set_defaults(func=cmd_kappa)
    fit = ksub.add_parser("fit-hermitian", help="fit the Hermitian kinematic constants in C^2")
    _fit_args(fit)


def _fit_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--pairs", type=_json_arg, default=None,
                   help="JSON with 'training' and 'holdout' lists of body pairs (default: built-in family)")
    _common(p)
    p.set_defaults(func=cmd_fit_hermitian)


def _ukp_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--body", type=_json_arg, required=True)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--estimator", choices=H.ESTIMATORS, default="slice")
    _method(p)
    _common(p)
    p.set_defaults(func=cmd_ukp)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vallab", description="Numerical valuations on convex bodies.")
    parser.add_argument("--version", action="version", version=f"vallab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("intrinsic", help="intrinsic volumes V_i")
    p.add_argument("--body", type=_json_arg, required=True)
    p.add_argument("--i", type=int, default=None)
    _method(p)
    _common(p)
    p.set_defaults(func=cmd_intrinsic)

    p = sub.add_parser("steiner", help="Steiner polynomial coefficients")
    p.add_argument("--body", type=_json_arg, required=True)
    p.add_argument("--radii", type=_floats, default=None)
    _method(p)
    _common(p)
    p.set_defaults(func=cmd_steiner)

    p = sub.add_parser("hadwiger", help="decompose a valuation in the intrinsic-volume basis")
    p.add_argument("--n", type=int, required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--a", type=_floats, help="synthesize sum a_i V_i and recover a")
    g.add_argument("--valuation", type=_valuation_arg, help="vol, chi, V<i> or a G-representation")
    p.add_argument("--radii", type=_floats, default=None, help="probe ball radii")
    _method(p)
    _common(p)
    p.set_defaults(func=cmd_hadwiger)

    p = sub.add_parser("product", help="product of two valuations evaluated on a body")
    p.add_argument("--phi", type=_valuation_arg, required=True)
    p.add_argument("--psi", type=_valuation_arg, required=True)
    p.add_argument("--body", type=_json_arg, required=True)
    p.add_argument("--allow-high-dim", action="store_true")
    _common(p)
    p.set_defaults(func=cmd_product)

    _ukp_args(sub.add_parser("ukp", help="Hermitian valuation U_{k,p}"))
    herm = sub.add_parser("hermitian", help="Hermitian valuations")
    hsub = herm.add_subparsers(dest="action", required=True)
    _ukp_args(hsub.add_parser("ukp", help="Hermitian valuation U_{k,p}"))

    _add_kinematic(sub)
    _fit_args(sub.add_parser("fit-hermitian", help="fit the Hermitian kinematic constants in C^2"))

    p = sub.add_parser("selftest", help="run the quick closed-form checks")
    p.add_argument("--only", nargs="*", default=None, choices=list(ST.CHECKS), help="run a subset")
    _common(p, samples=False)
    p.set_defaults(func=cmd_selftest)
    return parser


# ---------------------------------------------------------------------------
# Output


def _clean(obj):
    """JSON-safe copy: numpy scalars and arrays to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _emit(doc: dict, out: Path | None) -> None:
    text = json.dumps(_clean(doc), indent=2, sort_keys=True)
    if out is None:
        print(text)
    else:
        out.write_text(text + "\n")


def _write_csv(rows: list, path: Path) -> None:
    fields: list[str] = []
    for r in rows:
        fields += [k for k in r if k not in fields]
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for r in rows:
            w.writerow({k: json.dumps(_clean(v)) if isinstance(v, (list, dict)) else _clean(v)
                        for k, v in r.items()})


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.workers < 1:
            raise UsageError("--workers must be positive")
        seed = _seed(args)
        doc, rows = args.func(args)
    except UsageError as exc:
        print(f"vallab: error: {exc}", file=sys.stderr)
        return 2
    except NUMERICAL_ERRORS as exc:
        _emit({"command": args.command, "error": type(exc).__name__, "message": str(exc),
               "bracket": list(getattr(exc, "gap_bounds", ()) or ()), "conventions": CONVENTIONS}, None)
        return 3
    except MALFORMED_ERRORS as exc:
        print(f"vallab: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    doc = dict(doc, seed=seed, version=__version__, conventions=CONVENTIONS)
    _emit(doc, args.out)
    if args.csv is not None:
        _write_csv(rows, args.csv)
    if args.command == "selftest" and not doc["passed"]:
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
