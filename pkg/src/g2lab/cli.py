"""Batch front-end: runs experiment families and emits JSON/CSV reports.

Exit codes: 0 success, 2 invalid configuration, 1 numerical failure
(diagnostic JSON on stderr).  Every JSON report embeds the structure
constants hash so results are traceable to the sign convention.
"""

import argparse
import csv
import io
import json
import os
import sys
import tempfile

import numpy as np

from . import config, kantor
from .calib import FourFrame, ThreeFrame, classify_3plane, classify_4plane
from .cayley import table_as_dict, table_sha256
from .coassoc import almost_complex_from_form, normal_to_selfdual
from .dirac import HMINUS, HPLUS, CylinderGrid, lowest_eigenvalue, poincare_check
from .instanton import FlatModel, SolveOptions, make_test_curve, scaling_sweep, solve_instanton


class ConfigInvalid(ValueError):
    pass


class NumericalFailure(RuntimeError):
    pass


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".g2lab-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _round17(obj):
    """Pin float formatting to 17 significant digits (value-preserving)."""
    if isinstance(obj, float):
        return float(f"{obj:.17g}")
    if isinstance(obj, dict):
        return {k: _round17(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round17(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _round17(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return _round17(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def emit_json(report: dict, out: str = None) -> str:
    report = dict(report)
    report["table_sha256"] = table_sha256()
    text = json.dumps(_round17(report), indent=2, sort_keys=True) + "\n"
    if out:
        _atomic_write(out, text)
    else:
        sys.stdout.write(text)
    return text


def emit_csv(rows, header, out: str = None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in row])
    text = buf.getvalue()
    if out:
        _atomic_write(out, text)
    else:
        sys.stdout.write(text)
    return text


def _parse_matrix(text: str, cols: tuple) -> np.ndarray:
    try:
        data = np.asarray(json.loads(text), float)
    except (json.JSONDecodeError, ValueError) as exc:
        raise ConfigInvalid(f"matrix is not valid JSON: {exc}") from exc
    if data.ndim != 2 or data.shape[0] != 7 or data.shape[1] not in cols:
        raise ConfigInvalid(f"expected a 7xk matrix with k in {cols}, got {data.shape}")
    return data


def _parse_twist(text: str) -> tuple:
    try:
        parts = [float(p) for p in text.split(",")]
    except ValueError as exc:
        raise ConfigInvalid(f"bad twist: {exc}") from exc
    if len(parts) != 2:
        raise ConfigInvalid("twist must be two comma-separated numbers")
    return tuple(parts)


WARP_IDS = ("one", "const4", "sinx2")


def _warp_array(name: str, n: int):
    if name == "one" or name is None:
        return None
    if name == "const4":
        return 4.0 * np.ones((n, n))
    if name == "sinx2":
        x2 = np.arange(n) * 2.0 * np.pi / n
        return 1.0 + 0.5 * np.sin(x2)[:, None] * np.ones((1, n))
    raise ConfigInvalid(f"unknown warp id {name!r}; choose from {WARP_IDS}")


# ---------------------------------------------------------------------------
# subcommands


def cmd_dump_table(args) -> int:
    emit_json({"structure_constants": table_as_dict()}, args.out)
    return 0


def cmd_classify(args) -> int:
    mat = _parse_matrix(args.plane, (3, 4))
    vectors = mat.T  # columns are frame vectors
    if vectors.shape[0] == 3:
        report = classify_3plane(ThreeFrame(vectors), tol=args.tol)
    else:
        report = classify_4plane(FourFrame(vectors), tol=args.tol)
    emit_json(report.as_dict(), args.out)
    return 0


def cmd_normal_form(args) -> int:
    try:
        v = np.asarray(json.loads(args.v), float).reshape(7)
    except (json.JSONDecodeError, ValueError) as exc:
        raise ConfigInvalid(f"bad vector: {exc}") from exc
    frame = FourFrame(_parse_matrix(args.frame, (4,)).T)
    form = normal_to_selfdual(v, frame)
    J = almost_complex_from_form(form)
    emit_json(
        {
            "eta0_coefficients": form.coefficients,
            "eta0_norm": form.norm,
            "oriented_frame": form.frame.vectors,
            "J": J.matrix,
        },
        args.out,
    )
    return 0


def cmd_spectrum(args) -> int:
    grid = CylinderGrid(eps=args.eps, m=args.m, n=args.n, twist=_parse_twist(args.twist),
                        warp=_warp_array(args.warp, args.n))
    report = lowest_eigenvalue(grid, bc=args.bc, n_eigs=8, seed=args.seed)
    payload = report.as_dict()
    payload.update({"eps": args.eps, "n": args.n, "m": args.m,
                    "twist": list(grid.twist), "warp": args.warp or "one",
                    "seed": args.seed})
    emit_json(payload, args.out)
    if args.csv:
        emit_csv([(i, ev) for i, ev in enumerate(report.eigenvalues)],
                 ("index", "eigenvalue"), args.csv)
    return 0


def cmd_poincare(args) -> int:
    x = np.linspace(0.0, args.eps, args.m)
    profiles = {
        "linear": x,
        "sine": np.sin(np.pi * x / (2.0 * args.eps)),
        "zero": np.zeros_like(x),
    }
    if args.profile not in profiles:
        raise ConfigInvalid(f"unknown profile {args.profile!r}")
    lhs, rhs = poincare_check(profiles[args.profile], args.eps)
    emit_json({"profile": args.profile, "eps": args.eps, "m": args.m,
               "lhs": lhs, "rhs": rhs, "holds": bool(lhs <= rhs * (1 + 10.0 / args.m**2))},
              args.out)
    return 0


def cmd_kantor_demo(args) -> int:
    x1, tr1, c1 = kantor.newton_solve(
        lambda x: np.array([x[0] ** 2 - 1.0]),
        lambda x: np.array([[2.0 * x[0]]]),
        np.array([1.2]),
        tol=1e-12,
        r=0.5,
        seed=args.seed,
    )
    x2, tr2, c2 = kantor.newton_solve(
        lambda x: np.array([x[0] ** 2 - x[1], x[1] ** 2 - x[0]]),
        lambda x: np.array([[2.0 * x[0], -1.0], [2.0 * x[1], -1.0]]),
        np.array([1.1, 0.9]),
        tol=1e-12,
        r=1.0,
        seed=args.seed,
    )
    emit_json(
        {
            "scalar": {"root": x1, "trace": tr1.as_dict(), "certificate": c1.as_dict()},
            "two_dim": {"root": x2, "trace": tr2.as_dict(), "certificate": c2.as_dict()},
        },
        args.out,
    )
    return 0


def cmd_instanton_solve(args) -> int:
    model = FlatModel(eps=args.eps)
    curve = make_test_curve(args.n, noise=args.delta, seed=args.seed)
    opts = SolveOptions(tol=args.tol, m=args.m, seed=args.seed)
    result = solve_instanton(model, curve, opts)
    payload = dict(result.report)
    payload.update({"eps": args.eps, "n": args.n, "m": args.m, "delta": args.delta,
                    "seed": args.seed})
    emit_json(payload, args.out)
    if args.trace:
        rows = list(enumerate(result.trace.residual_norms))
        emit_csv(rows, ("iteration", "sup_residual"), args.trace)
    return 0


def cmd_instanton_sweep(args) -> int:
    eps_list = [float(e) for e in args.eps_list.split(",")]
    if not eps_list:
        raise ConfigInvalid("eps-list must be nonempty")
    rows = scaling_sweep(eps_list, n=args.n, m=args.m, seed=args.seed)
    header = ("eps", "sup_tau", "sup_tau_over_eps", "metric_defect",
              "metric_defect_over_eps", "operator_gap", "operator_gap_over_eps")
    emit_csv([[r[h] for h in header] for r in rows], header, args.out)
    return 0


# ---------------------------------------------------------------------------
# verify-all


def _verify_checks(quick: bool):
    from . import verify

    return verify.all_checks(quick)


def cmd_verify_all(args) -> int:
    results = _verify_checks(args.quick)
    ok = all(r["passed"] for r in results)
    for r in results:
        sys.stdout.write(f"[{'PASS' if r['passed'] else 'FAIL'}] {r['name']}\n")
    emit_json({"passed": ok, "checks": results, "quick": args.quick}, args.out)
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="g2lab", description=__doc__)
    p.add_argument("--seed", type=int, default=config.DEFAULT_SEED)
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("dump-table", help="emit the structure-constants ledger")
    q.add_argument("--out")
    q.set_defaults(func=cmd_dump_table)

    q = sub.add_parser("classify", help="classify a 3- or 4-plane")
    q.add_argument("--plane", required=True, help="7x3 or 7x4 matrix as JSON (columns are vectors)")
    q.add_argument("--tol", type=float, default=config.CLASSIFY_TOL)
    q.add_argument("--out")
    q.set_defaults(func=cmd_classify)

    q = sub.add_parser("normal-form", help="normal vector to self-dual form and J")
    q.add_argument("--v", required=True, help="vector in R^7 as JSON")
    q.add_argument("--frame", required=True, help="7x4 matrix as JSON")
    q.add_argument("--out")
    q.set_defaults(func=cmd_normal_form)

    q = sub.add_parser("spectrum", help="lowest eigenvalues of the cylinder operator")
    q.add_argument("--eps", type=float, required=True)
    q.add_argument("--n", type=int, default=32)
    q.add_argument("--m", type=int, default=16)
    q.add_argument("--twist", default="0,0")
    q.add_argument("--warp", choices=WARP_IDS, default="one")
    q.add_argument("--bc", choices=(HMINUS, HPLUS), default=HMINUS)
    q.add_argument("--out")
    q.add_argument("--csv")
    q.set_defaults(func=cmd_spectrum)

    q = sub.add_parser("poincare", help="effective Poincare inequality check")
    q.add_argument("--profile", default="linear")
    q.add_argument("--eps", type=float, default=1.0)
    q.add_argument("--m", type=int, default=64)
    q.add_argument("--out")
    q.set_defaults(func=cmd_poincare)

    q = sub.add_parser("kantor-demo", help="scalar and 2d certified Newton demos")
    q.add_argument("--out")
    q.set_defaults(func=cmd_kantor_demo)

    inst = sub.add_parser("instanton", help="ruled-patch pipeline")
    inst_sub = inst.add_subparsers(dest="subcommand", required=True)

    q = inst_sub.add_parser("solve", help="Newton-correct a perturbed curve")
    q.add_argument("--eps", type=float, default=0.2)
    q.add_argument("--n", type=int, default=24)
    q.add_argument("--m", type=int, default=8)
    q.add_argument("--delta", type=float, default=1e-2)
    q.add_argument("--tol", type=float, default=1e-10)
    q.add_argument("--out")
    q.add_argument("--trace")
    q.set_defaults(func=cmd_instanton_solve)

    q = inst_sub.add_parser("sweep", help="epsilon-scaling table for the estimates")
    q.add_argument("--eps-list", default="0.1,0.2,0.4")
    q.add_argument("--n", type=int, default=16)
    q.add_argument("--m", type=int, default=6)
    q.add_argument("--out")
    q.set_defaults(func=cmd_instanton_sweep)

    q = sub.add_parser("verify-all", help="run the property battery")
    q.add_argument("--quick", action="store_true")
    q.add_argument("--out")
    q.set_defaults(func=cmd_verify_all)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigInvalid, ValueError) as exc:
        sys.stderr.write(json.dumps({"error": "config", "message": str(exc)}) + "\n")
        return 2
    except Exception as exc:  # numerical failures
        sys.stderr.write(json.dumps({"error": exc.__class__.__name__, "message": str(exc)}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
