"""Self-contained property battery behind `g2lab verify-all`.

Each check returns a dict with name / passed / detail; the quick flag
shrinks sample counts and grid sizes so the battery runs in seconds.
The authoritative acceptance suite lives in the test tree; this module
is a smoke-level mirror for batch runs.
"""

import numpy as np

from . import kantor
from .calib import (ThreeFrame, classify_3plane, omega3, projected_normal_gram, tau,
                    tau_normal_component)
from .cayley import BASIS, cross
from .coassoc import almost_complex_from_form, normal_to_selfdual
from .dirac import (HMINUS, HPLUS, CylinderGrid, cross_term, dminus, dplus,
                    fourier_lambda_dplus, inner, kernel_equivalence,
                    lowest_eigenvalue, poincare_check, random_spinor)
from .instanton import FlatModel, SolveOptions, make_test_curve, scaling_sweep, solve_instanton


def _check(name, passed, **detail):
    return {"name": name, "passed": bool(passed), **detail}


def check_cross_axioms(quick: bool):
    rng = np.random.default_rng(1)
    n = 1000 if quick else 10_000
    u = rng.standard_normal((n, 7))
    v = rng.standard_normal((n, 7))
    c = cross(u, v)
    ortho = np.max(np.abs(np.sum(c * u, -1)) + np.abs(np.sum(c * v, -1)))
    scale = np.linalg.norm(u, axis=-1) * np.linalg.norm(v, axis=-1)
    area = np.max(np.abs(np.sum(c * c, -1) - (scale**2 - np.sum(u * v, -1) ** 2)))
    unit = np.linalg.norm(cross(BASIS[0], BASIS[1]) - BASIS[2])
    passed = ortho <= 1e-12 * scale.max() and area <= 1e-12 * scale.max() ** 2 and unit == 0.0
    return _check("cross-product axioms", passed, ortho=float(ortho), area=float(area))


def check_harvey_lawson(quick: bool):
    rng = np.random.default_rng(2)
    n = 1000 if quick else 10_000
    worst_cal = 0.0
    ok = True
    for _ in range(n):
        q, _ = np.linalg.qr(rng.standard_normal((7, 3)))
        f = q.T
        cal = abs(float(omega3(f[0], f[1], f[2])))
        tn = float(np.linalg.norm(tau(f[0], f[1], f[2])))
        worst_cal = max(worst_cal, cal)
        ok = ok and abs(cal**2 + tn**2 - 1.0) < 1e-10
    return _check("Harvey-Lawson equivalence", ok and worst_cal <= 1 + 1e-10,
                  max_calibration=worst_cal)


def check_perturbed_formula(quick: bool):
    t = 1e-3
    got = tau_normal_component(t, 0.0, 0.0, 0.0)
    want = t * BASIS[4]
    err1 = np.linalg.norm(got - want)
    got = tau_normal_component(0.0, 0.0, t, 0.0)
    want = -t * BASIS[6]
    err2 = np.linalg.norm(got - want)
    gram = projected_normal_gram(0.1, -0.1, 0.1, -0.1)
    return _check("perturbed-plane first-order formula",
                  err1 <= 1e-5 and err2 <= 1e-5 and gram >= 0.5,
                  err1=float(err1), err2=float(err2), gram=float(gram))


def check_normal_dictionary(quick: bool):
    from .calib import FourFrame

    C0 = FourFrame(BASIS[3:7])
    images = []
    for i in range(3):
        form = normal_to_selfdual(BASIS[i], C0)
        images.append(form.coefficients)
        J = almost_complex_from_form(form)
        if np.max(np.abs(J.matrix @ J.matrix + np.eye(4))) > 1e-12:
            return _check("normal-bundle dictionary", False)
    gram = np.linalg.det(np.stack(images) @ np.stack(images).T)
    return _check("normal-bundle dictionary", gram >= 0.5, gram=float(gram))


def check_spectrum(quick: bool):
    n = 16 if quick else 32
    grid = CylinderGrid(eps=1.0, m=16, n=n, twist=(0.5, 0.0))
    rep = lowest_eigenvalue(grid)
    ok = abs(rep.lambda_D - 0.25) <= 0.03 * 0.25
    return _check("eigenvalue theorem spot check", ok, lambda_D=rep.lambda_D)


def check_proof_mechanics(quick: bool):
    grid = CylinderGrid(eps=1.0, m=12, n=12, twist=(0.3, 0.7))
    V = random_spinor(grid, bc=HMINUS, seed=3)
    W = random_spinor(grid, bc=HMINUS, seed=4)
    lhs = inner(dplus(V.u, grid), W.v, grid)
    rhs = inner(V.u, dminus(W.v, grid), grid)
    adj = abs(lhs - rhs)
    ct = abs(cross_term(V, grid))
    x = np.linspace(0.0, 1.0, 65)
    l, r = poincare_check(x, 1.0)
    return _check("adjointness, cross term, Poincare",
                  adj <= 1e-10 and ct <= 1e-10 and l <= r * 1.01,
                  adjointness=float(adj), cross_term=float(ct))


def check_kernel(quick: bool):
    tw0 = kernel_equivalence(CylinderGrid(eps=1.0, m=8, n=16, twist=(0.0, 0.0)))
    tw1 = kernel_equivalence(CylinderGrid(eps=1.0, m=8, n=16, twist=(0.5, 0.0)))
    ok = tw0[0] >= 1 and tw0[1] >= 1 and tw1 == (0, 0)
    return _check("kernel corollary", ok, untwisted=list(tw0), twisted=list(tw1))


def check_kantor(quick: bool):
    x, tr, cert = kantor.newton_solve(
        lambda x: np.array([x[0] ** 2 - 1.0]),
        lambda x: np.array([[2.0 * x[0]]]),
        np.array([1.2]), tol=1e-12, r=0.5)
    ok = abs(x[0] - 1.0) <= 1e-12 and tr.iterations <= 6 and cert.certified
    return _check("certified Newton scalar oracle", ok, iterations=tr.iterations)


def check_instanton(quick: bool):
    n = 12 if quick else 16
    model = FlatModel(eps=0.2)
    curve = make_test_curve(n, noise=1e-2, seed=5)
    res = solve_instanton(model, curve, SolveOptions(m=5 if quick else 8))
    drop = res.report["dbar_residual_before"] / max(res.report["dbar_residual_after"], 1e-300)
    ok = res.report["sup_tau_perp"] <= 1e-10 and drop >= 1e4
    return _check("instanton desk-scale solve", ok,
                  sup_tau=res.report["sup_tau_perp"], dbar_drop=float(drop))


def check_sweep(quick: bool):
    eps_list = (0.1, 0.2) if quick else (0.1, 0.2, 0.4)
    rows = scaling_sweep(eps_list, n=12, m=5)
    ok = True
    for key in ("sup_tau_over_eps", "metric_defect_over_eps", "operator_gap_over_eps"):
        vals = [r[key] for r in rows]
        ok = ok and max(vals) <= 2.0 * min(vals) + 1e-12
    return _check("epsilon-scaling boundedness", ok,
                  rows=[{k: float(v) for k, v in r.items()} for r in rows])


def all_checks(quick: bool = True):
    checks = (
        check_cross_axioms,
        check_harvey_lawson,
        check_perturbed_formula,
        check_normal_dictionary,
        check_spectrum,
        check_proof_mechanics,
        check_kernel,
        check_kantor,
        check_instanton,
        check_sweep,
    )
    return [fn(quick) for fn in checks]
