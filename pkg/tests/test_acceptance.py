"""The thirteen acceptance criteria, each at its stated tolerance."""
import filecmp
import math
import time
from importlib import resources

import numpy as np
import pytest

from qkflow import cli, config, flow, identities, monitors, shape, symfunc, translator

CONFIGS = resources.files("qkflow") / "configs"


@pytest.fixture(scope="module")
def bowls():
    """Entire profiles for (2,0) and (3,1) out to r = 100, and the (3,2) profile on its ball."""
    return {
        (2, 0): translator.integrate_profile(0, 2, 100.0, 1e-3),
        (3, 1): translator.integrate_profile(1, 3, 100.0, 1e-3),
        (3, 2): translator.integrate_profile(2, 3, 0.7, 1e-3),
    }


def cap_run(h, t_final=0.2, record_every=1_000_000):
    text = f"""
[run]
n = 2
k = 1
t_final = {t_final}
record_every = {record_every}
[domain]
lower = -0.5, -0.5
upper = 0.5, 0.5
h = {h!r}
[initial]
profile = shrinking_cap
R0 = 1.0
[boundary]
type = exact
"""
    patches = []
    state, _ = flow.evolve(config.parse_string(text).validate(),
                           on_record=lambda s: patches.append((s.t, s.patch)))
    return state, patches


def test_01_identity_suite(verdict):
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = {}
    for n in range(1, 9):
        for name, v in identities.sum_rule_errors(rng.uniform(-2, 2, (1000, n))).items():
            worst[name] = max(worst.get(name, 0.0), v)
        for k in range(n):
            lam = symfunc.random_cone_points(rng, n, k + 1, 1000, margin=1e-3)
            for name, v in identities.quotient_rule_errors(lam, k).items():
                worst[name] = max(worst.get(name, 0.0), v)
    elapsed = time.perf_counter() - start
    names = list(identities.SUM_RULES) + list(identities.QUOTIENT_RULES)
    ok = all(worst[m] <= 1e-10 for m in names) and elapsed < 10
    detail = f"worst rel {max(worst[m] for m in names):.2e} (tol 1e-10), {elapsed:.2f} s (limit 10 s)"
    verdict(1, "identity suite", ok, detail)


def test_02_newton_maclaurin(verdict):
    rng = np.random.default_rng(2)
    low, equal, viol = 0.0, 0.0, -math.inf
    for n in range(2, 9):
        lam = rng.uniform(-5, 5, (10_000, n))
        eq = np.repeat(rng.uniform(-5, 5, (100, 1)), n, axis=1)
        for k in range(1, n):
            low = min(low, float(np.min(identities.newton_defects(lam, k))))
            equal = max(equal, float(np.max(np.abs(identities.newton_defects(eq, k)))))
            cone = symfunc.random_cone_points(rng, n, k + 1, 1000, margin=1e-6)
            for l in range(k + 1):
                viol = max(viol, identities.maclaurin_violation(cone, l, k))
    ok = low >= -1e-12 and equal <= 1e-12 and viol <= 1e-12
    verdict(2, "Newton defect and Maclaurin chain", ok,
            f"min scaled defect {low:.2e}, equal-entry defect {equal:.2e}, "
            f"worst Maclaurin excess {viol:.2e}")


def test_03_matrix_sym_vs_minors(verdict):
    rng = np.random.default_rng(3)
    worst = 0.0
    count = 0
    for n in range(1, 7):
        for b in identities.random_symmetric(rng, n, 1000):
            scale = symfunc.magnitude(symfunc.eigenvalues(b))
            for k in range(1, n + 1):
                err = abs(symfunc.matrix_sym(b, k) - symfunc.principal_minor_sum(b, k))
                worst = max(worst, err / scale[k])
            count += 1
    verdict(3, "matrix_sym vs principal minors", worst <= 1e-9,
            f"worst rel {worst:.2e} over {count} matrices (tol 1e-9)")


def test_04_gradient(verdict):
    rng = np.random.default_rng(4)
    fd, euler = 0.0, 0.0
    for n in range(1, 9):
        for k in range(n):
            lam = symfunc.random_cone_points(rng, n, k + 1, 100, margin=1e-2)
            fd = max(fd, max(identities.gradient_fd_error(x, k) for x in lam))
            euler = max(euler, identities.quotient_rule_errors(lam, k)["euler_relation"])
    verdict(4, "qk_gradient", fd <= 1e-6 and euler <= 1e-10,
            f"finite-difference rel {fd:.2e} (tol 1e-6), Euler rel {euler:.2e} (tol 1e-10)")


def test_05_structured_and_concavity(verdict):
    rng = np.random.default_rng(5)
    cases = [(n, k) for n in range(2, 7) for k in range(n - 1)]
    per = -(-1000 // len(cases))
    failed = count = 0
    for n, k in cases:
        for a in identities.random_arrowhead(rng, n, k, per):
            failed += not symfunc.structured_derivative_check(a, k).passed
            count += 1
    worst = 0.0
    samples = 0
    cone_cases = [(n, k) for n in range(2, 7) for k in range(1, n)]
    for n, k in cone_cases:
        for lam in symfunc.random_cone_points(rng, n, k + 1, -(-1000 // len(cone_cases)), margin=1e-2):
            worst = max(worst, symfunc.concavity_probe(lam, k) * float(np.max(np.abs(lam))))
            samples += 1
    ok = failed == 0 and count >= 1000 and worst <= 1e-6 and samples >= 1000
    verdict(5, "arrowhead inequalities and concavity", ok,
            f"{failed}/{count} arrowhead failures, max scaled Hessian eigenvalue {worst:.2e} "
            f"over {samples} samples (tol 1e-6)")


def test_06_weingarten_sphere(verdict):
    rng = np.random.default_rng(6)
    radius = 1.3
    worst = 0.0
    for n in (2, 3):
        for _ in range(20):
            x = rng.uniform(-1, 1, n)
            x *= rng.uniform(0, 0.9) * radius / np.linalg.norm(x)
            s = np.sqrt(radius**2 - x @ x)
            jet = shape.JetPoint(x / s, np.eye(n) / s + np.outer(x, x) / s**3)
            lam = shape.principal_curvatures(shape.weingarten(jet))
            worst = max(worst, float(np.max(np.abs(lam - 1 / radius))))
    verdict(6, "Weingarten sphere oracle", worst <= 1e-10, f"max |lam - 1/R| {worst:.2e} (tol 1e-10)")


def test_07_shrinking_cap(verdict):
    start = time.perf_counter()
    errs = []
    for h in (1 / 32, 1 / 64, 1 / 128):
        state, patches = cap_run(h)
        exact = flow.shrinking_cap(2, 1)(state.patch.coords(), state.t)
        errs.append(float(np.max(np.abs(state.patch.u - exact))))
    elapsed = time.perf_counter() - start
    orders = [math.log2(errs[0] / errs[1]), math.log2(errs[1] / errs[2])]
    snaps = [monitors.snapshot_from_patch(p, t) for t, p in patches]
    law = max(v for _, v in monitors.sphere_radius_law(snaps, 1, 1.0))
    ok = all(1.7 <= p <= 2.3 for p in orders) and law <= 5e-3 and elapsed < 120
    verdict(7, "manufactured shrinking cap", ok,
            f"orders {orders[0]:.3f}, {orders[1]:.3f}; radius-law residual {law:.2e} at h=1/128 "
            f"(tol 5e-3); {elapsed:.1f} s (limit 120 s)")


def test_08_translator_profiles(bowls, verdict):
    vertex = {nk: abs(translator.measured_vertex_curvature(p) - translator.vertex_curvature(*nk))
              for nk, p in bowls.items()}
    trip = {nk: float(np.max(translator.roundtrip_residual(p))) for nk, p in bowls.items()}
    small = translator.integrate_profile(0, 2, 2.0, 1e-3)
    relax = translator.relax_to_translator(small, 1 / 16, 1.0, initial="paraboloid", rtol=1e-8)
    ok = (max(vertex.values()) <= 1e-8 and max(trip.values()) <= 1e-6
          and relax.max_error <= 1e-3)
    verdict(8, "translator profiles", ok,
            f"vertex error {max(vertex.values()):.2e} (tol 1e-8), round-trip "
            f"{max(trip.values()):.2e} (tol 1e-6), 2-d relaxation error {relax.max_error:.2e} "
            f"(tol 1e-3); (3,2) sampled on r <= 0.7 inside its vertical radius "
            f"{translator.integrate_profile(2, 3, 2.0, 1e-3).vertical_radius:.6f}")


def test_09_growth(bowls, verdict):
    slopes = {nk: translator.growth_exponent(bowls[nk], 10.0, 100.0) for nk in ((2, 0), (3, 1))}
    blowup = translator.integrate_profile(2, 3, 2.0, 1e-3)
    finite_ball = blowup.vertical_radius is not None and blowup.vertical_radius < 10
    ok = all(g > 1.2 for g in slopes.values()) and finite_ball
    verdict(9, "superlinear growth", ok,
            ", ".join(f"{nk}: {g:.4f}" for nk, g in slopes.items())
            + f" (must exceed 1.2); (3,2) turns vertical at r = {blowup.vertical_radius:.4f}")


def test_10_gradient_bound(verdict):
    radii = (1.0, 1.5, 2.0, 2.5, 3.0, 4.0)
    consts = []
    for h in (1e-3, 5e-4):
        prof = translator.integrate_profile(0, 2, 12.0, h)
        fit = monitors.elliptic_gradient_bound_check(monitors.panels_from_profile(prof, 3.0, radii))
        consts.append(fit.constant)
    drift = abs(consts[1] - consts[0]) / consts[0]
    ok = fit.passed and fit.used >= 5 and math.isfinite(consts[1]) and drift <= 0.1
    verdict(10, "gradient bound", ok,
            f"C = {consts[1]:.6g} from {fit.used} panels, change under refinement {drift:.1e} "
            f"(tol 0.1)")


def test_11_pinching(bowls, verdict):
    worst_gap = math.inf
    runs = 0
    pinch_ok = True
    for name in ("shrinking_cap.cfg", "paraboloid_n2_k1.cfg"):
        cfg = config.load(CONFIGS / name).validate()
        patches = []
        flow.evolve(cfg, on_record=lambda s: patches.append((s.t, s.patch)))
        for t, p in patches:
            res = monitors.pinching_monitor(monitors.snapshot_from_patch(p, t), cfg.k)
            pinch_ok &= res.passed
            worst_gap = min(worst_gap, res.gap)
        runs += 1
        if name == "shrinking_cap.cfg":
            snaps = [monitors.snapshot_from_patch(p, t) for t, p in patches]
            x0 = cfg.monitor_param("max_v", "x0", cast=tuple)
            series, max_v_ok = monitors.max_v_monitor(snaps, cfg.k, 0.5, x0,
                                                      cfg.tolerances["max_v_tol"])
    for nk in ((3, 1), (3, 2)):
        res = monitors.pinching_monitor(monitors.snapshot_from_profile(bowls[nk]), nk[1])
        pinch_ok &= res.passed
        worst_gap = min(worst_gap, res.gap)
        runs += 1
    vals = [v for _, v in series]
    rise = max(b - a for a, b in zip(vals, vals[1:]))
    ok = pinch_ok and max_v_ok
    verdict(11, "pinching and gradient-function monitor", ok,
            f"min H^2 - |A|^2 = {worst_gap:.3e} over {runs} runs; sup(phi_+ w) largest step "
            f"{rise:.2e} over {len(vals)} snapshots")


def test_12_curvature_estimates(bowls, verdict):
    snap = monitors.snapshot_from_profile(bowls[(3, 1)])
    elliptic = monitors.curvature_estimate_check([snap], 0.5, (2, 4, 8), "elliptic", 1)
    _, patches = cap_run(1 / 32, record_every=16)
    snaps = [monitors.snapshot_from_patch(p, t) for t, p in patches]
    parabolic = monitors.curvature_estimate_check(snaps, 0.5, (2, 4, 8), "parabolic", 1)
    ok = elliptic.passed and parabolic.passed
    verdict(12, "curvature estimates", ok,
            f"elliptic c = {elliptic.constant:.4g} ({elliptic.used} pairs), "
            f"parabolic c = {parabolic.constant:.4g} ({parabolic.used} pairs)")


def _tree_equal(a, b):
    cmp = filecmp.dircmp(a, b)
    if cmp.left_only or cmp.right_only or cmp.funny_files:
        return False
    _, mismatch, errors = filecmp.cmpfiles(a, b, cmp.common_files, shallow=False)
    return not mismatch and not errors and all(_tree_equal(a / d, b / d) for d in cmp.common_dirs)


def test_13_determinism(tmp_path, verdict):
    relax_cfg = tmp_path / "relax.cfg"
    relax_cfg.write_text("""
[run]
kind = translator
n = 2
k = 0
seed = 7
[domain]
r_max = 2.0
h = 0.002
[translator]
relax = true
relax_h = 0.125
relax_initial = paraboloid
panel_center = 0.5
panel_radii = 0.2, 0.4, 0.6, 0.8, 1.0
""")
    jobs = {"flow": CONFIGS / "shrinking_cap.cfg", "translator": relax_cfg}
    same = []
    for cmd, cfg in jobs.items():
        outs = []
        for threads in (1, 8):
            out = tmp_path / f"{cmd}_{threads}"
            code = cli.main(["--seed", "11", "--threads", str(threads), "--out-dir", str(out),
                             cmd, "--config", str(cfg)])
            assert code == 0
            outs.append(out)
        same.append(_tree_equal(*outs))
    verdict(13, "determinism across thread counts", all(same),
            f"flow outputs identical: {same[0]}, translator outputs identical: {same[1]}")
