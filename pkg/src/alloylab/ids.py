"""Integrated density of states: ensemble estimates, bc sandwiches, exponent fits,
comparison operators and the rare-configuration combinatorics behind the tail bounds."""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy import stats

from .eigen import EigenSolverError, FactorizationBreakdown, count_eigenvalues, lambda_min
from .lattice import Domain, make_cube
from .operator import BoundarySpec, assemble, form_value, norm2
from .potential import (Configuration, _parse, alloy_field, configuration, kn_single_site,
                        sample_configuration, split_signs)
from .spectral_min import ModelSpec, _cell_pencil, e_phi_many, reference_ground_state

RHO = (1 + math.sqrt(5)) / 2


# -- field builders (module level so worker processes can pickle them) -------

def _site_sum(profile: np.ndarray, omega: Configuration, dom: Domain) -> np.ndarray:
    out = np.zeros(dom.nnodes)
    lookup = dict(zip(omega.sites, omega.values))
    for k, c in enumerate(dom.cells):
        out[dom.cell_nodes[k]] += lookup[c] * profile
    return out


def realization_field(model: ModelSpec, kind: str, omega: Configuration, dom: Domain, shift: float = 0.0):
    """(nodal potential, per-cell potential) of one realization.

    kind: 'alloy'     V_0 + Σ ω_i u(·-i)
          'indicator' V_0 + a Σ u(·-i) - shift + Σ (ω_i - a) 1_{C_i}
          'uplus'     V_0 - a Σ u_-(·-i) + Σ ω_i u_+(·-i)
    """
    if kind == "alloy":
        return alloy_field(model.V0, model.u, omega, dom), None
    if kind == "indicator":
        base = alloy_field(model.V0, model.u, configuration(dom, model.a), dom) - shift
        return base, np.asarray(omega.values, float) - model.a
    if kind == "uplus":
        up, um = split_signs(model.u)
        V = model.V0.on(dom) - model.a * _site_sum(um, configuration(dom, 1.0), dom)
        return V + _site_sum(up, omega, dom), None
    raise ValueError(f"unknown field kind {kind!r}")


def resolve_bc(model: ModelSpec, bc) -> BoundarySpec:
    """'dirichlet' | 'neumann' | 'periodic' | 'mezincescu' (φ_a reference) or a BoundarySpec."""
    if isinstance(bc, BoundarySpec):
        return bc
    if bc == "dirichlet":
        return BoundarySpec.dirichlet()
    if bc == "neumann":
        return BoundarySpec.neumann()
    if bc == "periodic":
        return BoundarySpec.periodic()
    if bc == "mezincescu":
        return BoundarySpec.mezincescu(reference_ground_state(model, model.a)[1], model.spec)
    raise ValueError(f"unknown boundary condition {bc!r}")


# -- ensemble -----------------------------------------------------------------

@dataclass(eq=False)
class IDSCurve:
    L: int
    bc: str
    energies: np.ndarray
    mean_counts: np.ndarray
    stderr: np.ndarray
    realizations: int
    seed: int
    d: int = 1
    n: int = 0
    counts: np.ndarray | None = None        # raw integer counts, (R_used, nE)
    indices: np.ndarray | None = None       # realization index of each row
    dropped: list = field(default_factory=list)
    cross_check_mismatches: int = 0

    @property
    def volume(self) -> int:
        return self.L ** self.d

    def to_csv_rows(self):
        return [(float(e), float(m), float(s)) for e, m, s in zip(self.energies, self.mean_counts, self.stderr)]


def _chunk_counts(args):
    model, L, bc, energies, seed, indices, kind, shift = args
    dom = make_cube(L, model.spec)
    base = assemble(dom, None, bc)
    out = []
    for r in indices:
        omega = sample_configuration(model.dist, dom, seed, r)
        try:
            V, cp = realization_field(model, kind, omega, dom, shift)
            counts, reports = count_eigenvalues(base.with_potential(V, cp), energies)
            bad = sum(1 for rep in reports if rep.dense_count is not None and rep.dense_count != rep.count)
            out.append((r, counts, None, bad))
        except (EigenSolverError, FactorizationBreakdown, np.linalg.LinAlgError) as exc:
            out.append((r, None, str(exc), 0))
    return out


def _workers(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get("ALLOYLAB_WORKERS", "1"))
    return max(1, int(workers))


def estimate_ids(model: ModelSpec, L: int, bc, E_grid, R: int, seed: int, workers: int | None = None,
                 kind: str = "alloy", shift: float = 0.0) -> IDSCurve:
    """Mean of N(H_{ω,Λ_L}, E)/L^d over realizations r = 0..R-1 (independent of worker count)."""
    if R < 1:
        raise ValueError("R must be >= 1")
    E = np.asarray(E_grid, float)
    if np.any(np.diff(E) < 0):
        raise ValueError("E_grid must be sorted")
    bcs = resolve_bc(model, bc)
    workers = _workers(workers)
    idx = np.arange(R)
    chunks = [c for c in np.array_split(idx, min(R, 4 * workers)) if c.size]
    jobs = [(model, L, bcs, E, seed, c.tolist(), kind, shift) for c in chunks]
    if workers == 1:
        results = [row for job in jobs for row in _chunk_counts(job)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = [row for part in ex.map(_chunk_counts, jobs) for row in part]
    results.sort(key=lambda row: row[0])
    good = [row for row in results if row[1] is not None]
    dropped = [(int(row[0]), row[2]) for row in results if row[1] is None]
    if not good:
        raise RuntimeError(f"all {R} realizations failed; first error: {dropped[0][1]}")
    counts = np.array([row[1] for row in good], dtype=np.int64)
    vol = L ** model.d
    dens = counts / vol
    mean = dens.mean(axis=0)
    se = dens.std(axis=0, ddof=1) / np.sqrt(len(good)) if len(good) > 1 else np.zeros_like(mean)
    return IDSCurve(L, bcs.tag, E, mean, se, len(good), int(seed), model.d, model.spec.n, counts,
                    np.array([row[0] for row in good]), dropped, int(sum(row[3] for row in good)))


def sandwich_check(model: ModelSpec, L: int, E_grid, R: int, seed: int, workers=None) -> dict:
    """Realization-wise Dirichlet ≤ Mezincescu ≤ Neumann counts for shared ω."""
    curves = {bc: estimate_ids(model, L, bc, E_grid, R, seed, workers)
              for bc in ("dirichlet", "mezincescu", "neumann")}
    D, M, N = (curves[b].counts for b in ("dirichlet", "mezincescu", "neumann"))
    same = all(np.array_equal(curves["dirichlet"].indices, curves[b].indices) for b in curves)
    viol_dm = int(np.sum(D > M)) if same else -1
    viol_mn = int(np.sum(M > N)) if same else -1
    return {"curves": curves, "violations_D_le_M": viol_dm, "violations_M_le_N": viol_mn,
            "ok": same and viol_dm == 0 and viol_mn == 0}


def monotone_in_L(curves: list, direction: str, nsigma: float = 2.0) -> dict:
    """Check mean_counts nondecreasing ('up') or nonincreasing ('down') along curves, within nσ."""
    worst = 0.0
    for c0, c1 in zip(curves, curves[1:]):
        diff = c1.mean_counts - c0.mean_counts
        if direction == "down":
            diff = -diff
        sig = np.sqrt(c0.stderr ** 2 + c1.stderr ** 2)
        excess = -diff - nsigma * sig
        worst = max(worst, float(excess.max()))
    return {"ok": worst <= 1e-15, "worst_excess": worst}


# -- exponent fits ------------------------------------------------------------

@dataclass
class LifshitzFit:
    E0_ref: float
    window: tuple
    points: list
    slope: float | None
    slope_stderr: float | None
    intercept: float | None = None
    ok: bool = False
    reason: str = ""

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, default=float)


def lifshitz_fit(curve, E0: float, window=None, min_points: int = 4) -> LifshitzFit:
    """Least-squares slope of ln|ln N(E)| against ln(E - E0) over usable window points."""
    if isinstance(curve, IDSCurve):
        E, N = curve.energies, curve.mean_counts
    else:
        E, N = (np.asarray(x, float) for x in curve)
    lo, hi = window if window is not None else (-np.inf, np.inf)
    use = (E > E0) & (E >= lo) & (E <= hi) & (N > 0) & (N < 0.5)
    x = np.log(E[use] - E0)
    y = np.log(np.abs(np.log(N[use])))
    pts = list(zip(x.tolist(), y.tolist()))
    win = (float(lo), float(hi))
    if len(pts) < min_points:
        return LifshitzFit(float(E0), win, pts, None, None, None, False,
                           f"only {len(pts)} usable points (need {min_points})")
    res = stats.linregress(x, y)
    return LifshitzFit(float(E0), win, pts, float(res.slope), float(res.stderr), float(res.intercept), True)


def synthetic_lifshitz(E, E0: float, beta: float, c: float = 1.0) -> np.ndarray:
    x = np.asarray(E, float) - E0
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x > 0, np.exp(-c * np.abs(x) ** (-beta)), 0.0)


def synthetic_van_hove(E, E0: float, d: int = 1, c: float = 1.0) -> np.ndarray:
    x = np.asarray(E, float) - E0
    return np.where(x > 0, c * np.abs(x) ** (d / 2.0), 0.0)


def van_hove_contrast(E0: float = 0.0, window=(1e-3, 1e-1), d: int = 1, npts: int = 25,
                      c_vh: float = 1e-3) -> dict:
    """Fits of synthetic Lifshitz (β = 1/2) and van Hove curves on one window."""
    E = E0 + np.geomspace(window[0], window[1], npts)
    lif = lifshitz_fit((E, synthetic_lifshitz(E, E0, 0.5)), E0)
    vh = lifshitz_fit((E, synthetic_van_hove(E, E0, d, c_vh)), E0)
    return {"lifshitz": lif, "van_hove": vh, "difference": abs(vh.slope - lif.slope)}


# -- comparison operators -------------------------------------------------------

@dataclass(eq=False)
class ComparisonReport:
    E_aa: float
    E_ab: float
    C: float | None
    cell_min_over_t: np.ndarray | None
    t_grid: np.ndarray
    energies: np.ndarray
    N: IDSCurve | None = None
    N_a: IDSCurve | None = None
    pointwise_excess: np.ndarray | None = None     # N - N_a - 3σ (≤ 0 is a pass)
    realization_violations: int = -1
    negative_energy_count: int = -1
    hypothesis_ok: bool = False
    ok: bool = False
    note: str = ""


def cell_inequality_min(model: ModelSpec, C: float, ts, phi_a=None) -> np.ndarray:
    """λ_min of C(H_t - E_aa) - (H_a - E_aa + (t - a)) on C_0 (Mezincescu(φ_a)), per t."""
    phi_a = reference_ground_state(model, model.a)[1] if phi_a is None else phi_a
    K0, U, w = _cell_pencil(model, phi_a)
    E_aa = e_phi_many(model, phi_a, [model.a])[0]
    Ka = K0 + model.a * U - E_aa * np.diag(w)
    s = 1.0 / np.sqrt(w)
    out = []
    for t in np.atleast_1d(ts):
        A = C * (Ka + (t - model.a) * U) - (Ka + (t - model.a) * np.diag(w))
        out.append(sla.eigh(A * s[:, None] * s[None, :], eigvals_only=True, subset_by_index=[0, 0])[0])
    return np.array(out)


def comparison_upper_bound_check(model: ModelSpec, L: int = 7, R: int = 100, seed: int = 0,
                                 E_grid=None, C_grid=None, n_t: int = 33, workers=None,
                                 tol: float = 1e-9) -> ComparisonReport:
    a, b = model.a, model.b
    _, phi_a = reference_ground_state(model, a)
    E_aa, E_ab = e_phi_many(model, phi_a, [a, b])
    ts = np.linspace(a, b, n_t)
    E = np.linspace(E_aa - 1.0, E_aa + 60.0, 40) if E_grid is None else np.asarray(E_grid, float)
    rep = ComparisonReport(float(E_aa), float(E_ab), None, None, ts, E)
    if not E_aa < E_ab:
        rep.note = "hypothesis E_φa(a) < E_φa(b) fails"
        return rep
    C_grid = np.geomspace(1.0, 1e4, 161) if C_grid is None else np.asarray(C_grid, float)
    for C in C_grid:
        m = cell_inequality_min(model, C, ts, phi_a)
        if m.min() >= -tol:
            rep.C, rep.cell_min_over_t = float(C), m
            break
    if rep.C is None:
        rep.note = "no feasible C in scan (model likely not in case (I))"
        return rep
    rep.hypothesis_ok = True
    bc = BoundarySpec.mezincescu(phi_a, model.spec)
    rep.N = estimate_ids(model, L, bc, E, R, seed, workers)
    rep.N_a = estimate_ids(model, L, bc, rep.C * (E - E_aa), R, seed, workers, kind="indicator", shift=E_aa)
    sig = np.sqrt(rep.N.stderr ** 2 + rep.N_a.stderr ** 2)
    rep.pointwise_excess = rep.N.mean_counts - rep.N_a.mean_counts - 3 * sig
    rep.realization_violations = int(np.sum(rep.N.counts > rep.N_a.counts))
    neg = np.array([-1e-9])
    rep.negative_energy_count = int(estimate_ids(model, L, bc, neg, min(R, 10), seed, workers,
                                                 kind="indicator", shift=E_aa).counts.sum())
    rep.ok = bool(np.all(rep.pointwise_excess <= 0) and rep.negative_energy_count == 0)
    return rep


@dataclass(eq=False)
class LowerComparisonReport:
    ordering_ok: bool
    min_potential_gap: float
    violations: dict
    equal_at_a: bool
    energies: np.ndarray
    realizations: int
    ok: bool


def lower_bound_comparison(model: ModelSpec, L: int = 7, R: int = 50, seed: int = 0, E_grid=None) -> LowerComparisonReport:
    """N(H_ω, E) ≥ N(H_{a,ω}, E) with H_{a,ω} = -Δ + V_0 - aΣu_- + Σω_i u_+, per shared ω."""
    dom = make_cube(L, model.spec)
    E = np.linspace(-5.0, 60.0, 27) if E_grid is None else np.asarray(E_grid, float)
    viol = {"dirichlet": 0, "neumann": 0}
    gap = np.inf
    bases = {k: assemble(dom, None, resolve_bc(model, k)) for k in viol}
    for r in range(R):
        om = sample_configuration(model.dist, dom, seed, r)
        V = realization_field(model, "alloy", om, dom)[0]
        Vc = realization_field(model, "uplus", om, dom)[0]
        gap = min(gap, float((Vc - V).min()))
        for k, base in bases.items():
            c1 = count_eigenvalues(base.with_potential(V), E)[0]
            c2 = count_eigenvalues(base.with_potential(Vc), E)[0]
            viol[k] += int(np.sum(c1 < c2))
    oa = configuration(dom, model.a)
    Va = realization_field(model, "alloy", oa, dom)[0]
    Vca = realization_field(model, "uplus", oa, dom)[0]
    equal = bool(np.allclose(Va, Vca, rtol=0, atol=1e-12 * max(1.0, np.abs(Va).max())))
    ordering = gap >= -1e-12
    return LowerComparisonReport(ordering, gap, viol, equal, E, R,
                                 ordering and all(v == 0 for v in viol.values()))


# -- combinatorics ------------------------------------------------------------

@dataclass
class NonadjacentCount:
    L: int
    counts: list           # counts[N] = #{N-subsets of {1..L}, no two adjacent}
    total: int
    fibonacci: int         # F_{L+2} by integer recurrence
    rounding: int          # ⌊ρ^{L+2}/√5 + 1/2⌋
    enumerated: int | None

    @property
    def ok(self) -> bool:
        return self.total == self.fibonacci == self.rounding and self.enumerated in (None, self.total)


def fibonacci(n: int) -> int:
    a, b = 0, 1
    for _ in range(n):
        a, b = b, a + b
    return a


def _enumerate_nonadjacent(L: int) -> int:
    m = np.arange(1 << L, dtype=np.int64)
    return int(np.count_nonzero((m & (m >> 1)) == 0))


def nonadjacent_count(L: int, enumerate_max: int = 20) -> NonadjacentCount:
    if L < 1:
        raise ValueError("L must be positive")
    if L > 60:
        raise ValueError("L > 60 is outside the exact-arithmetic range of this check")
    counts = [math.comb(L - N + 1, N) for N in range((L + 1) // 2 + 1)]
    total = sum(counts)
    rounding = math.floor(RHO ** (L + 2) / math.sqrt(5) + 0.5)
    enum = _enumerate_nonadjacent(L) if L <= enumerate_max else None
    return NonadjacentCount(L, counts, total, fibonacci(L + 2), rounding, enum)


@dataclass
class RareEventBound:
    L: int
    mu: float
    analytic_bound: float
    empirical: float
    empirical_stderr: float
    regime: str
    applicable: bool = True
    per_block: float | None = None
    blocks: int | None = None
    exact: float | None = None             # closed-form probability of the simulated event
    corrected_bound: float | None = None   # per-block product with the event's true block factor
    worst_case: float | None = None
    literal_event_empirical: float | None = None

    @property
    def dominated(self) -> bool:
        return self.applicable and self.empirical <= self.analytic_bound + 3 * self.empirical_stderr

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, default=float)


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 5])))


def _no_adjacent(flags: np.ndarray) -> np.ndarray:
    return ~np.any(flags[:, 1:] & flags[:, :-1], axis=1)


def _batched(mc_samples: int, L: int, draw, event, batch: int = 50000) -> np.ndarray:
    hits = []
    left = mc_samples
    while left > 0:
        k = min(batch, left)
        hits.append(event(draw(k)))
        left -= k
    return np.concatenate(hits)


def _mc(hits: np.ndarray) -> tuple:
    p = float(hits.mean())
    return p, float(np.sqrt(max(p * (1 - p), 0.0) / hits.size))


def no_adjacent_mid_probability(L: int, mu: float) -> float:
    """Exact P{no two adjacent mid-range couplings}: Σ_N C(L-N+1, N)(1-μ)^N μ^{L-N}."""
    return float(sum(math.comb(L - N + 1, N) * (1 - mu) ** N * mu ** (L - N) for N in range((L + 1) // 2 + 1)))


def rare_config_probability(regime: str, params: dict, L: int, mc_samples: int = 100000,
                            seed: int = 0) -> RareEventBound:
    """Analytic bound and Monte Carlo estimate of a one-column configuration class.

    non-Bernoulli-pairs / fibonacci: the column has no two adjacent mid-range couplings
    (each site is extreme with probability μ).  Bernoulli-quadruples: every window of four
    consecutive sites has ω_1 = ω_2 or ω_3 = ω_4.
    """
    rng = _rng(seed)
    if regime in ("non-Bernoulli-pairs", "fibonacci"):
        mu = float(params["mu"])
        if not 0 < mu < 1:
            raise ValueError("mu must lie in (0, 1)")
        mid = lambda k: rng.random((k, L)) >= mu
        flags = _batched(mc_samples, L, mid, lambda f: np.stack([_no_adjacent(f), _alternating(f)], 1))
        emp, se = _mc(flags[:, 0])
        lit = float(flags[:, 1].mean())
        exact = no_adjacent_mid_probability(L, mu)
        if regime == "non-Bernoulli-pairs":
            N = L // 4                       # largest N with 2N ≤ L/2
            pb = 2 * mu * (1 - mu)
            return RareEventBound(L, mu, pb ** (2 * N), emp, se, regime, True, pb, 2 * N, exact,
                                  (1 - (1 - mu) ** 2) ** (2 * N), 2 ** 1.5 * 0.5 ** (L / 2), lit)
        mstar = max(mu, 1 - mu)
        ok = RHO * mstar < 1
        bound = (RHO ** (L + 2) / math.sqrt(5) + 0.5) * mstar ** L if ok else float("nan")
        return RareEventBound(L, mu, bound, emp, se, regime, ok, None, None, exact)
    if regime == "Bernoulli-quadruples":
        mu_a = float(params.get("mu_a", 0.5))
        mu_b = float(params.get("mu_b", 1 - mu_a))
        if abs(mu_a + mu_b - 1) > 1e-12:
            raise ValueError("mu_a + mu_b must equal 1")
        N = L // 8                           # largest N with 4N ≤ L/2
        mq = 1 - 4 * mu_a ** 2 * mu_b ** 2
        draw = lambda k: rng.random((k, L)) < mu_b
        hits = _batched(mc_samples, L, draw, _quadruple_event)
        emp, se = _mc(hits)
        return RareEventBound(L, mq, mq ** (2 * N), emp, se, regime, True, mq, 2 * N)
    raise ValueError(f"unknown regime {regime!r}")


def _alternating(mid: np.ndarray) -> np.ndarray:
    """Every adjacent pair has exactly one mid-range coupling."""
    return np.all(mid[:, 1:] != mid[:, :-1], axis=1)


def _quadruple_event(w: np.ndarray) -> np.ndarray:
    L = w.shape[1]
    if L < 4:
        return np.ones(w.shape[0], dtype=bool)
    eq = w[:, 1:] == w[:, :-1]                 # eq[:, r] : ω_r = ω_{r+1}
    return np.all(eq[:, :L - 3] | eq[:, 2:L - 1], axis=1)


# -- explicit ground states of the constant-collar construction ----------------

@dataclass(eq=False)
class ExplicitGroundStateReport:
    omega: np.ndarray
    rayleigh: float
    residual: float
    lambda_min: float
    tolerance: float

    @property
    def ok(self) -> bool:
        return (abs(self.rayleigh) <= self.tolerance and abs(self.lambda_min) <= self.tolerance)


def _kn_psi(model: ModelSpec) -> np.ndarray:
    key, args = _parse(model.u.name)
    if key != "kn-bump":
        raise ValueError("explicit ground states need the kn-bump single-site construction")
    psi, u = kn_single_site(args[0] if args else 0.5, model.spec)
    if not np.array_equal(u.samples, model.u.samples):
        raise ValueError("model.u does not match the kn-bump construction")
    return psi


def explicit_ground_state_check(model: ModelSpec, dom: Domain, omega, tolerance: float = 5e-3,
                                op=None) -> ExplicitGroundStateReport:
    """φ = ψ on cells with ω_i = b, the collar constant on cells with ω_i = a (Neumann bc)."""
    psi = _kn_psi(model)
    c0 = float(psi[0])
    if not isinstance(omega, Configuration):
        omega = configuration(dom, omega)
    vals = np.asarray(omega.values, float)
    if not np.all(np.isin(vals, [model.a, model.b])):
        raise ValueError("couplings must take the Bernoulli values a or b")
    phi = np.empty(dom.nnodes)
    for k in range(dom.ncells):
        phi[dom.cell_nodes[k]] = psi if vals[k] == model.b else c0
    if op is None:
        op = assemble(dom, None, BoundarySpec.neumann())
    op = op.with_potential(alloy_field(model.V0, model.u, omega, dom))
    x = op.restrict(phi)
    rq = form_value(op, x) / norm2(op, x)
    r = op.stiffness @ x - rq * op.mass * x
    res = float(np.linalg.norm(r / np.sqrt(op.mass)) / np.sqrt(norm2(op, x)))
    return ExplicitGroundStateReport(vals, float(rq), res, lambda_min(op), tolerance)
