"""Acceptance suite: one test per criterion, each at its stated tolerance.

Each test records a PASS/FAIL line (printed in the terminal summary and
to stdout) before asserting.
"""

import itertools
import time

import numpy as np
import pytest

from rflab.algebra import invariant_sym_basis
from rflab.ancient import family_scan, linearize_at_collapse, shoot_ancient, sphere_grid, verify_collapse
from rflab.catalog import diagonal_scal, get_entry, get_space, g2_model
from rflab.curvature import oneill_diagnostics, ricci, ricci_differential, ricci_differential_fd, scal
from rflab.einstein import DiagonalBackend, find_einstein, hessian_spectrum_coindex, normalized_scal
from rflab.flows import ProjectedFlowContext, normalized_flow, projected_flow
from rflab.integrate import IntegratorConfig, integrate

from conftest import FIBRATIONS, diag_metric, random_submersion_metric, record_criterion

# reference values, typed in from the closed-form coefficients
SU3_KE_REF = (27 / 2) ** (1 / 3) / 3 * np.array([1.0, 1.0, 2.0])
SU4_KE_REF = (1024 / 3) ** (1 / 6) / 4 * np.array([3.0, 2.0, 1.0, 1.0, 2.0, 1.0])
G2_KE_REF = (4608 / 5) ** (1 / 6) / 12 * np.array([1.0, 3.0, 4.0, 5.0, 6.0, 9.0])


def report(number, passed, detail):
    record_criterion(number, passed, detail)
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
    assert passed, detail


def matches_permutation(y, ref, tol):
    y = y * (np.prod(ref) / np.prod(y)) ** (1 / len(y)) if len(y) == len(ref) else y
    return min(np.max(np.abs(y[list(p)] - ref)) for p in itertools.permutations(range(len(y)))) <= tol


# independent scalar-curvature oracles for diagonal metrics on SU(n)/T and SO(4)/T^2:
# scal = sum_i d_i b_i/(2 x_i) - 1/4 sum_{ordered i,j,k} [ijk] x_k/(x_i x_j), normalized by vol^{1/m}
def sun_oracle(n):
    pairs = list(itertools.combinations(range(n), 2))

    def f(x):
        xs = dict(zip(pairs, x))
        s = sum(1.0 / xi for xi in x)  # d_i = 2, b_i = 1
        for a, b, c in itertools.combinations(range(n), 3):
            tri = [xs[(a, b)], xs[(a, c)], xs[(b, c)]]
            for k in range(3):
                i, j = [tri[m] for m in range(3) if m != k]
                # two orderings of (i, j) for each k, each with [ijk] = 1/n
                s -= 0.25 * 2 * (1.0 / n) * tri[k] / (i * j)
        vol = np.prod(np.asarray(x) ** 2) ** (1 / (2 * len(x)))
        return vol * s

    return f


def so4_oracle(x):
    # product of two round 2-spheres: scal = 1/x1 + 1/x2
    return np.sqrt(x[0] * x[1]) * (1 / x[0] + 1 / x[1])


def test_criterion_01_su3_kahler_einstein():
    t0 = time.perf_counter()
    p = find_einstein(get_space("su3_full_flag"), [1.0, 1.2, 1.7])
    dt = time.perf_counter() - t0
    spec = np.sort(p.hessian_spectrum)
    ok = (
        matches_permutation(p.coefficients, SU3_KE_REF, 1e-8)
        and p.residual <= 1e-8
        and np.max(np.abs(spec - [-1 / 3, 0, 4 / 3])) <= 1e-5
        and p.coindex == 1
        and dt < 5
    )
    report(1, ok, f"coeffs={np.round(p.coefficients, 10)} residual={p.residual:.1e} spectrum={np.round(spec, 7)} "
                  f"coindex={p.coindex} time={dt:.2f}s")


def test_criterion_02_su4_kahler_einstein():
    t0 = time.perf_counter()
    seed = SU4_KE_REF * np.array([1.04, 0.97, 1.02, 0.99, 1.03, 0.98])
    p = find_einstein(get_space("su4_full_flag"), seed)
    dt = time.perf_counter() - t0
    pos = np.sort(p.hessian_spectrum[p.hessian_spectrum > 1e-6])
    ok = (
        matches_permutation(p.coefficients, SU4_KE_REF, 1e-8)
        and p.coindex == 2
        and p.nullity == 0
        and len(pos) == 2
        and pos[1] - pos[0] > 1e-3
        and dt < 10
    )
    report(2, ok, f"coindex={p.coindex} nullity={p.nullity} positive={np.round(pos, 6)} time={dt:.2f}s")


def test_criterion_03_g2_model():
    be = DiagonalBackend(g2_model())
    r = float(np.linalg.norm(be.residual(G2_KE_REF)))
    hs = hessian_spectrum_coindex(be, G2_KE_REF)
    ok = r <= 1e-8 and hs["coindex"] == 1
    report(3, ok, f"gradient residual={r:.1e} coindex={hs['coindex']}")


def test_criterion_04_so4():
    flag = get_space("so4_full_flag")
    P = np.eye(4)
    R0 = ricci(flag, P) - scal(flag, P) / 4 * P
    hs = hessian_spectrum_coindex(flag, np.ones(2))
    sp = get_space("so4_group")
    ctx = ProjectedFlowContext.from_base_metric(sp, np.eye(4))
    fp = linearize_at_collapse(sp, ctx)
    scan = family_scan(fp, sphere_grid(fp, 5, seed=0))
    ok = (
        np.max(np.abs(R0)) <= 1e-12
        and hs["coindex"] == 1
        and fp.unstable.shape[1] == 4
        and scan.family_dim == 3
    )
    report(4, ok, f"|Ric0(1,1)|={np.max(np.abs(R0)):.1e} coindex={hs['coindex']} "
                  f"unstable={fp.unstable.shape[1]} family_dim={scan.family_dim} ({scan.accepted}/5 accepted)")


def test_criterion_05_dual_backend_scal():
    rng = np.random.default_rng(5)
    worst = {}
    for sid, oracle in [("su3_full_flag", sun_oracle(3)), ("su4_full_flag", sun_oracle(4)),
                        ("so4_full_flag", so4_oracle)]:
        sp = get_space(sid)
        w = 0.0
        for _ in range(100):
            x = np.exp(rng.uniform(-1.5, 1.5, size=len(sp.module_dims)))
            eng = normalized_scal(sp, diag_metric(sp, x))
            ref = oracle(x)
            cat = diagonal_scal(get_entry(sid), x)
            w = max(w, abs(eng - ref) / abs(ref), abs(cat - ref) / abs(ref))
        worst[sid] = w
    ok = max(worst.values()) <= 1e-10
    report(5, ok, "max rel error " + ", ".join(f"{k}={v:.1e}" for k, v in worst.items()))


def test_criterion_06_oneill_identity():
    rng = np.random.default_rng(6)
    worst = {}
    for sid in FIBRATIONS:
        sp = get_space(sid)
        worst[sid] = max(oneill_diagnostics(sp, random_submersion_metric(sp, rng))["identity_residual"]
                         for _ in range(100))
    ok = max(worst.values()) <= 1e-8
    report(6, ok, f"max residual {max(worst.values()):.1e} over {len(FIBRATIONS)} fibrations x 100 metrics")


def test_criterion_07_ricci_differential():
    rng = np.random.default_rng(7)
    worst = 0.0
    for sid in FIBRATIONS:
        sp = get_space(sid)
        for _ in range(50):
            P = random_submersion_metric(sp, rng)
            B = random_submersion_metric(sp, rng) - random_submersion_metric(sp, rng)
            a = ricci_differential(sp, P, B)
            f = ricci_differential_fd(sp, P, B)
            worst = max(worst, np.linalg.norm(a - f) / max(np.linalg.norm(a), 1e-12))
    report(7, worst <= 1e-5, f"max relative error {worst:.1e} over {len(FIBRATIONS)} fibrations x 50 pairs")


def test_criterion_08_collapsed_fixed_point():
    base = get_space("su3_full_flag")
    p = find_einstein(base, [1.0, 1.2, 1.7])
    sp = get_space("su3_group")
    ctx = ProjectedFlowContext.from_base_metric(sp, diag_metric(base, p.coefficients))
    fp = linearize_at_collapse(sp, ctx, strict=False)
    k = fp.unstable.shape[1]
    ok = fp.checks["t_block_minus_lambda"] <= 1e-8 and abs(fp.lam - p.lam) <= 1e-6 and k == fp.nu + fp.q == 4
    report(8, ok, f"t-block residual={fp.checks['t_block_minus_lambda']:.1e} lambda={fp.lam:.9f} "
                  f"(engine {p.lam:.9f}) unstable={k} nu+q={fp.nu + fp.q}")


def test_criterion_09_ancient_shooting():
    t0 = time.perf_counter()
    sp = get_space("su3_group")
    ctx = ProjectedFlowContext.from_base_metric(sp, diag_metric(sp.base_space(), SU3_KE_REF))
    fp = linearize_at_collapse(sp, ctx)
    cand = shoot_ancient(fp, np.array([1.0, 0.0, 1.0, 0.0]) / np.sqrt(2))
    dt = time.perf_counter() - t0
    c = cand.certificates
    lam = fp.lam
    ok = (
        cand.accepted
        and c["decay_rate_rel_error"] <= 0.05
        and c["scal_limit_error"] <= 1e-4
        and c["fiber_diameter_end"] <= 1e-7
        and abs(c["log_sigma_slope"] + 2 * lam) <= 0.05 * 2 * lam
        and verify_collapse(cand, fp)["passed"]
        and dt < 60
    )
    report(9, ok, f"rate={c.get('decay_rate', float('nan')):.6f} (eig {c.get('nearest_eigenvalue', float('nan')):.6f}) "
                  f"scal err={c.get('scal_limit_error', float('nan')):.1e} fiber={c.get('fiber_diameter_end', float('nan')):.1e} "
                  f"log-sigma slope={c.get('log_sigma_slope', float('nan')):.6f} time={dt:.1f}s")


def test_criterion_10_conservation():
    cfg = IntegratorConfig(fixed_step=1e-4)
    sp = get_space("su3_group")
    ctx = ProjectedFlowContext.from_base_metric(sp, diag_metric(sp.base_space(), SU3_KE_REF))
    P = ctx.fixed_point()
    P[:2, :2] = [[0.3, 0.05], [0.05, 0.2]]
    P[2:, 2:] *= np.repeat([1.1, 0.9, 1.0], 2)
    tr = projected_flow(ctx, ctx.normalize(P), cfg, "forward", 1.0)
    norm_drift = float(np.max(np.abs(tr.diagnostics["norm"] - 1.0)))
    flag = get_space("su3_full_flag")
    x = np.array([1.0, 1.5, 0.7])
    x /= np.prod(x) ** (1 / 3)
    nr = normalized_flow(flag, diag_metric(flag, x), cfg, "forward", 1.0)
    det_drift = max(abs(np.linalg.det(nr.metric(i)) - 1.0) for i in range(len(nr)))
    steps = (len(tr) - 1, len(nr) - 1)
    ok = norm_drift <= 1e-8 and det_drift <= 1e-7 and min(steps) >= 10_000
    report(10, ok, f"norm drift={norm_drift:.1e} det drift={det_drift:.1e} steps={steps}")


def test_criterion_11_integrator_order():
    # exact solution P(t) = (1 - 2 lambda t) P0 from the Einstein metric; integrated in
    # log coordinates so the solution is not polynomial in t
    sp = get_space("su3_full_flag")
    basis = invariant_sym_basis(sp)
    y0 = basis.coords(diag_metric(sp, SU3_KE_REF))
    lam = scal(sp, basis.metric(y0)) / sp.dim
    T = 1.0

    def rhs(t, w):
        y = np.exp(w)
        return basis.coords(-2.0 * ricci(sp, basis.metric(y))) / y

    exact = np.log(y0) + np.log(1 - 2 * lam * T)
    errs = []
    for h in (0.1, 0.05):
        res = integrate(rhs, 0.0, np.log(y0), T, IntegratorConfig(fixed_step=h))
        errs.append(float(np.max(np.abs(res.states[-1] - exact))))
    ratio = errs[0] / errs[1]
    report(11, ratio >= 16, f"errors h=0.1: {errs[0]:.2e}, h=0.05: {errs[1]:.2e}, ratio={ratio:.1f}")
