"""Acceptance criteria 1-12.  Each test prints one PASS/FAIL line (also collected in the
terminal summary).  Run standalone with `python3 tests/test_acceptance.py`."""

import itertools
import math
import time

import numpy as np
import pytest

from alloylab.eigen import lambda_min
from alloylab.ids import (comparison_upper_bound_check, explicit_ground_state_check, lifshitz_fit,
                          monotone_in_L, nonadjacent_count, rare_config_probability, sandwich_check,
                          synthetic_lifshitz, van_hove_contrast)
from alloylab.lattice import GridSpec, make_cube
from alloylab.operator import BoundarySpec, assemble, cell_decompose, form_value, norm2
from alloylab.potential import alloy_field, configuration, periodic_index, sample_configuration, to_periodic
from alloylab.quasi1d import (Quasi1DInstance, coercivity_scan, dtn_closed_form_1d, dtn_map, gse_family,
                              inverse_square_fit, nu_dichotomy, poincare_check)
from alloylab.spectral_min import (brute_force_e0, classify, ground_state_curve, preset_model,
                                   reference_ground_state, second_derivative_fd,
                                   second_derivative_spectral_sum)

RESULTS = []


def report(num, ok, detail, elapsed, budget):
    ok = bool(ok) and elapsed < budget
    line = f"{'PASS' if ok else 'FAIL'} criterion {num}: {detail} [{elapsed:.1f}s / {budget:.0f}s]"
    RESULTS.append(line)
    print(line)
    return ok


# 1 -------------------------------------------------------------------------------

def criterion_1():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst_rel, worst_br = 0.0, np.inf
    for spec, L in ((GridSpec(8, 1), 5), (GridSpec(4, 2), 3)):
        model = preset_model("dipole", spec)
        dom = make_cube(L, spec)
        V = alloy_field(model.V0, model.u, sample_configuration(model.dist, dom, 0, 0), dom)
        _, phi = reference_ground_state(model, 0.4)          # non-constant χ on every face
        for bc in (BoundarySpec.mezincescu(phi, spec), BoundarySpec.neumann()):
            op = assemble(dom, V, bc)
            cells = cell_decompose(op)
            for _ in range(20):
                f = rng.standard_normal(op.dim)
                g = form_value(op, f)
                s = sum(form_value(c, f[c.embedding]) for c in cells)
                worst_rel = max(worst_rel, abs(g - s) / abs(g))
            worst_br = min(worst_br, lambda_min(op) - min(lambda_min(c) for c in cells))
    ok = worst_rel <= 1e-12 and worst_br >= -1e-10
    return report(1, ok, f"bracketing max rel err {worst_rel:.1e}, min(λ_glob - min λ_cell) {worst_br:.3e}",
                  time.perf_counter() - t0, 10)


# 2 -------------------------------------------------------------------------------

INHERIT_FLOOR = 1e-12      # deviations below this are rounding: "decrease by 1.5x" is vacuous


def _inheritance_deviation(name, t, n):
    spec = GridSpec(n, 1)
    m = preset_model(name, spec)
    E, phi = reference_ground_state(m, t)
    dom = make_cube(5, spec)
    op = assemble(dom, alloy_field(m.V0, m.u, configuration(dom, t), dom), BoundarySpec.mezincescu(phi, spec))
    f = to_periodic(phi, spec)[periodic_index(dom.nodes, spec)]
    return abs(form_value(op, f) / norm2(op, f) - E)


def criterion_2():
    t0 = time.perf_counter()
    ok, parts = True, []
    for name, t in (("dipole", 0.0), ("dipole", 1.0), ("positive", 0.0), ("balanced", 1.0), ("kn", 1.0)):
        d8, d16 = _inheritance_deviation(name, t, 8), _inheritance_deviation(name, t, 16)
        within = d8 <= 1.0 * (1 / 8) and d16 <= 1.0 * (1 / 16)
        decreasing = d16 <= d8 / 1.5 or max(d8, d16) <= INHERIT_FLOOR
        ok &= within and decreasing
        parts.append(f"{name}@{t:g}: {d8:.1e}->{d16:.1e}")
    return report(2, ok, "inheritance deviation (n=8->16) " + ", ".join(parts), time.perf_counter() - t0, 30)


# 3 -------------------------------------------------------------------------------

def criterion_3():
    t0 = time.perf_counter()
    spec = GridSpec(16, 1)
    ok, worst_sd, worst_id = True, -np.inf, 0.0
    for name in ("kn", "dipole", "balanced"):
        m = preset_model(name, spec)
        assert m.u.sign_indefinite
        for tref in (m.a, m.b):
            _, phi = reference_ground_state(m, tref)
            c = ground_state_curve(m, phi)
            worst_sd = max(worst_sd, float(c.second_differences.max() / c.scale))
            ok &= bool(np.all(c.second_differences <= 1e-9)) and c.strictly_concave(1e-8)
            for t in np.linspace(m.a + 0.1, m.b - 0.1, 5):
                ss = second_derivative_spectral_sum(m, phi, t, 30)
                fd = second_derivative_fd(m, phi, t, 1e-3)
                worst_id = max(worst_id, abs(ss - fd) / abs(fd))
    ok &= worst_id <= 0.05
    return report(3, ok, f"max second difference/scale {worst_sd:.2e}, max |E''_sum - E''_fd|/|E''_fd| "
                         f"{worst_id:.2e}", time.perf_counter() - t0, 120)


# 4 -------------------------------------------------------------------------------

def criterion_4():
    t0 = time.perf_counter()
    spec = GridSpec(16, 1)
    ok, parts = True, []
    for name, expect in (("positive", {"(i)"}), ("negative", {"(ii)"}), ("kn", {"(i)", "(ii)"})):
        m = preset_model(name, spec)
        r = classify(m)
        bf = brute_force_e0(m, 5, 64, 0)
        lo, hi = r.E0_bounds
        slack = spec.h + 3 * bf.stderr
        inside = lo - slack <= bf.e0 <= hi + slack
        case_ok = r.case in expect and (name != "kn" or set(r.cases_satisfied) == expect)
        ok &= inside and case_ok
        parts.append(f"{name}: case {r.case} [{lo:.4f},{hi:.4f}] vs brute {bf.e0:.4f}")
    return report(4, ok, "; ".join(parts), time.perf_counter() - t0, 120)


# 5 -------------------------------------------------------------------------------

def criterion_5():
    t0 = time.perf_counter()
    spec = GridSpec(8, 1)
    m = preset_model("symmetric", spec)         # reflection-symmetric cell: χ ≡ 0 on faces
    E0 = classify(m).E0_estimate
    E = np.linspace(E0 - 1.0, E0 + 4.0, 16)     # bottom of the spectrum
    Ls = (3, 5, 7, 9)
    res = {L: sandwich_check(m, L, E, 100, 0) for L in Ls}
    sand = all(res[L]["ok"] for L in Ls)
    up = monotone_in_L([res[L]["curves"]["dirichlet"] for L in Ls], "up", 2.0)
    down = monotone_in_L([res[L]["curves"]["neumann"] for L in Ls], "down", 2.0)
    nviol = sum(res[L]["violations_D_le_M"] + res[L]["violations_M_le_N"] for L in Ls)
    ok = sand and up["ok"] and down["ok"]
    return report(5, ok, f"sandwich violations {nviol}; Dirichlet up excess {up['worst_excess']:.2e}, "
                         f"Neumann down excess {down['worst_excess']:.2e}", time.perf_counter() - t0, 300)


# 6 -------------------------------------------------------------------------------

def criterion_6():
    t0 = time.perf_counter()
    m = preset_model("positive", GridSpec(8, 1))
    rep = comparison_upper_bound_check(m, L=7, R=100, seed=0)
    ok = (rep.hypothesis_ok and rep.C is not None and len(rep.t_grid) == 33 and len(rep.energies) == 40
          and rep.cell_min_over_t.min() >= -1e-9 and rep.ok)
    detail = (f"C = {rep.C:.4g}, min cell λ {rep.cell_min_over_t.min():.2e}, "
              f"max(N - N_a - 3σ) {rep.pointwise_excess.max():.3f}" if rep.C else rep.note)
    return report(6, ok, detail, time.perf_counter() - t0, 300)


# 7 -------------------------------------------------------------------------------

def criterion_7():
    t0 = time.perf_counter()
    inst = Quasi1DInstance(preset_model("kn", GridSpec(8, 1)), 3, "a", (0.5,))
    fam = gse_family(inst, range(3, 42, 2))
    fit = inverse_square_fit(fam)
    ok = fam.hypothesis_ok and bool(np.all(fam.gaps > 0)) and fit.ok and fit.slope >= -2.3
    return report(7, ok, f"Ω_0 gap {fam.omega0_energy - fam.E0:.3f}, min gap {fam.gaps.min():.3e}, "
                         f"slope {fit.slope:.3f} ± {fit.slope_stderr:.3f}, C_fit {fit.C_fit:.3f}",
                  time.perf_counter() - t0, 180)


# 8 -------------------------------------------------------------------------------

def criterion_8():
    t0 = time.perf_counter()
    spec = GridSpec(8, 1)
    rng = np.random.default_rng(8)
    ok, parts = True, []
    for M in (1, 3, 9):
        nn = spec.n * ((M + 1) // 2) + 1
        r = poincare_check(M, [rng.standard_normal(nn) for _ in range(100)], spec, tol=1e-9)
        lhs, rhs = r.constant_field
        exact = abs(lhs - 4 / M) <= 4e-15 * (4 / M) and abs(rhs - 2 / M) <= 4e-15 * (2 / M)
        ok &= r.holds and exact
        parts.append(f"M={M}: min(lhs/rhs) {np.min(r.lhs / r.rhs):.3f}")
    return report(8, ok, "; ".join(parts), time.perf_counter() - t0, 10)


# 9 -------------------------------------------------------------------------------

def criterion_9():
    t0 = time.perf_counter()
    ok, parts = True, []
    for spec, name in ((GridSpec(8, 1), "kn"), (GridSpec(8, 2), "kn"), (GridSpec(16, 1), "dipole")):
        inst = Quasi1DInstance(preset_model(name, spec), 3, "a", (0.5,))
        alpha = lambda_min(inst.operator(inst.omega0()))    # inf σ(P_0): Mezincescu data on all of ∂Ω_0
        lam0 = inst.E0 + 0.8 * (alpha - inst.E0)
        scan = coercivity_scan(inst, np.linspace(inst.E0, lam0, 9))
        ok &= scan["asymmetry"].max() <= 1e-8 and scan["epsilon"].min() > 0 and scan["nonincreasing"]
        parts.append(f"{name} d={spec.d}: asym {scan['asymmetry'].max():.1e}, ε {scan['epsilon'].min():.3f}")
    free = Quasi1DInstance(preset_model("free", GridSpec(8, 1)), 3, "a", (0.0,))
    T = dtn_map(free, -1.0).matrix[0, 0]
    err = abs(T - dtn_closed_form_1d(-1.0, 8))
    ok &= err <= 1e-6
    parts.append(f"1D closed form err {err:.1e}")
    return report(9, ok, "; ".join(parts), time.perf_counter() - t0, 60)


# 10 ------------------------------------------------------------------------------

def criterion_10a():
    t0 = time.perf_counter()
    fib = all(nonadjacent_count(L).ok for L in range(1, 61))
    fib &= nonadjacent_count(5).total == 13 and nonadjacent_count(10).total == 144
    pairs = rare_config_probability("non-Bernoulli-pairs", {"mu": 0.5}, 9, 100000, 0)
    quad = rare_config_probability("Bernoulli-quadruples", {"mu_a": 0.5, "mu_b": 0.5}, 17, 100000, 0)
    fibo = rare_config_probability("fibonacci", {"mu": 0.5}, 9, 100000, 0)
    alt_ok = pairs.literal_event_empirical <= pairs.analytic_bound + 3 * math.sqrt(
        pairs.analytic_bound * (1 - pairs.analytic_bound) / 100000)
    ok = fib and pairs.per_block == 0.5 and quad.per_block == 0.75 and quad.dominated and fibo.dominated and alt_ok
    return report("10a", ok, f"Fibonacci L<=60 exact; quadruples {quad.empirical:.4f} <= {quad.analytic_bound:.4f}; "
                             f"Fibonacci bound {fibo.analytic_bound:.4f} >= {fibo.empirical:.4f}; alternating-pair "
                             f"event {pairs.literal_event_empirical:.4f} <= {pairs.analytic_bound:.4f}",
                  time.perf_counter() - t0, 60)


def criterion_10b():
    t0 = time.perf_counter()
    pairs = rare_config_probability("non-Bernoulli-pairs", {"mu": 0.5}, 9, 100000, 0)
    return report("10b", pairs.dominated,
                  f"no-adjacent-mid-pair event at L=9, μ=1/2: MC {pairs.empirical:.4f} ± {pairs.empirical_stderr:.4f} "
                  f"(exact {pairs.exact:.4f}) vs bound (1/2)^{pairs.blocks} = {pairs.analytic_bound:.4f}; "
                  f"per-block factor 1-(1-μ)^2 gives {pairs.corrected_bound:.4f}", time.perf_counter() - t0, 60)


# 11 ------------------------------------------------------------------------------

def criterion_11():
    t0 = time.perf_counter()
    spec = GridSpec(32, 1)
    m = preset_model("kn", spec)
    dom = make_cube(5, spec)
    base = assemble(dom, None, BoundarySpec.neumann())
    worst_l, worst_rq = 0.0, 0.0
    for bits in itertools.product([m.a, m.b], repeat=5):
        r = explicit_ground_state_check(m, dom, list(bits), 5e-3, op=base)
        worst_l, worst_rq = max(worst_l, abs(r.lambda_min)), max(worst_rq, abs(r.rayleigh))
    nu = nu_dichotomy(m, "b", [1, 3, 5, 7, 9])
    vh = van_hove_contrast()
    ok = (worst_l <= 5e-3 and worst_rq <= 5e-3 and nu.case == "inherited" and abs(nu.nu - 1) <= 5e-3
          and vh["difference"] >= 0.4)
    return report(11, ok, f"32 configs max|λ_min| {worst_l:.1e}, max|RQ| {worst_rq:.1e}; ν = {nu.nu:.6f} "
                          f"({nu.case}); slopes Lifshitz {vh['lifshitz'].slope:.3f} vs van Hove "
                          f"{vh['van_hove'].slope:.3f}", time.perf_counter() - t0, 180)


# 12 ------------------------------------------------------------------------------

def criterion_12():
    t0 = time.perf_counter()
    ok, parts = True, []
    for beta in (0.5, 1 / 2, 2 / 2):          # 1/2, and d/2 for d = 1, 2
        E0 = -0.2
        E = E0 + np.geomspace(1e-3, 1e-1, 25)
        f = lifshitz_fit((E, synthetic_lifshitz(E, E0, beta, 1.0)), E0)
        ok &= f.ok and abs(f.slope + beta) <= 0.01
        parts.append(f"β={beta:g}: {f.slope:.4f}")
    return report(12, ok, "; ".join(parts), time.perf_counter() - t0, 5)


# -- pytest wrappers ------------------------------------------------------------

@pytest.mark.parametrize("crit", [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
                                  criterion_6, criterion_7, criterion_8, criterion_9, criterion_10a,
                                  criterion_11, criterion_12], ids=lambda f: f.__name__)
def test_criterion(crit):
    assert crit()


@pytest.mark.xfail(strict=True, reason="the stated (1/2)^{2N} bound does not dominate the probability of the "
                                       "'no adjacent mid-range pair' event (exact 89/512 at L=9); see notes")
def test_criterion_10b():
    assert criterion_10b()


if __name__ == "__main__":
    for f in (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7,
              criterion_8, criterion_9, criterion_10a, criterion_10b, criterion_11, criterion_12):
        f()
