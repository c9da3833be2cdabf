"""Quasi-one-dimensional domains Ω_{0M} = Ω_0 ∪ Ω_M: ground-energy families, the trace
Poincaré inequality, ground-state transforms, the Dirichlet-to-Neumann map on the
interface S, the ν-dichotomy, and the energy lemmas for rare column configurations."""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy import stats

from .eigen import ground_state, lambda_min, lowest_eigenpairs
from .lattice import Domain, boundary_faces, make_column, make_quasi1d, make_segment, quasi1d_ranges
from .operator import BoundarySpec, assemble, chi_values, form_value, norm2
from .potential import alloy_field, configuration, periodic_index, to_periodic
from .spectral_min import ModelSpec, reference_ground_state

POSITIVITY_TOL = 1e-10      # λ_0M > E_0 + 10·POSITIVITY_TOL in the strict-positivity check
DTN_MARGIN = 1e-6


def _coupling(model: ModelSpec, attach) -> float:
    if attach in ("a", "a-side"):
        return model.a
    if attach in ("b", "b-side"):
        return model.b
    return float(attach)


def _reference(model: ModelSpec, t: float | None = None):
    """(E_0, φ) for the periodic reference at coupling t (default a)."""
    return reference_ground_state(model, model.a if t is None else t)


def _field(model: ModelSpec, dom: Domain, couplings: dict) -> np.ndarray:
    return alloy_field(model.V0, model.u, configuration(dom, couplings), dom)


@dataclass(eq=False)
class Quasi1DInstance:
    model: ModelSpec
    m: int
    attach: str = "a"
    W0_config: tuple = ()
    orientation: str = "below"

    def __post_init__(self):
        if self.m < 3 or self.m % 2 == 0:
            raise ValueError("m must be odd and >= 3")
        self.W0_config = tuple(float(x) for x in self.W0_config)
        if len(self.W0_config) != (self.m - 1) // 2:
            raise ValueError(f"W0_config must cover exactly {(self.m - 1) // 2} cells")
        E0, phi = _reference(self.model)
        self.E0 = float(E0)
        self.phi_ref = phi
        self.bc = BoundarySpec.mezincescu(phi, self.model.spec)

    @property
    def t_M(self) -> float:
        return _coupling(self.model, self.attach)

    def omega0_cells(self) -> list:
        lo0, hi0, _, _ = quasi1d_ranges(self.m, 1, self.orientation)
        return list(range(lo0, hi0 + 1))

    def couplings(self, dom: Domain) -> dict:
        z = (0,) * (self.model.d - 1)
        vals = {z + (r,): w for r, w in zip(self.omega0_cells(), self.W0_config)}
        return {c: vals.get(c, self.t_M) for c in dom.cells}

    def omega0(self) -> Domain:
        cells = self.omega0_cells()
        return make_column(cells[0], cells[-1], self.model.spec)

    def omegaM(self, M: int) -> Domain:
        _, _, lo, hi = quasi1d_ranges(self.m, M, self.orientation)
        return make_column(lo, hi, self.model.spec)

    def operator(self, dom: Domain):
        return assemble(dom, _field(self.model, dom, self.couplings(dom)), self.bc)

    def s_key(self) -> int:
        """Last-axis node key of the interface S."""
        return -self.model.spec.half if self.orientation == "below" else self.model.spec.half

    def s_sign(self) -> int:
        """Outward normal of Ω_0 on S along the last axis."""
        return 1 if self.orientation == "below" else -1


# -- ground-energy family ---------------------------------------------------------

@dataclass(eq=False)
class GSEFamily:
    Ms: list
    energies: list
    E0: float
    omega0_energy: float
    hypothesis_ok: bool
    bracketing_ok: bool
    bracketing_slack: list
    strict_positivity: bool

    @property
    def gaps(self) -> np.ndarray:
        return np.asarray(self.energies) - self.E0

    def pairs(self) -> list:
        return list(zip(self.Ms, self.energies))

    def to_csv_rows(self):
        return [(int(M), float(e), float(e - self.E0)) for M, e in zip(self.Ms, self.energies)]


def _family_member(args):
    inst, M = args
    dom = make_quasi1d(inst.m, M, inst.orientation, inst.model.spec)
    lam = lambda_min(inst.operator(dom))
    lamM = lambda_min(inst.operator(inst.omegaM(M)))
    return lam, lamM


def gse_family(inst: Quasi1DInstance, Ms, margin: float = 1e-8, workers: int = 1) -> GSEFamily:
    """λ_min of the Ω_{0M} operator (Mezincescu(φ_a) data) across M, with hypothesis checks."""
    Ms = [int(M) for M in Ms]
    lam0 = lambda_min(inst.operator(inst.omega0()))
    jobs = [(inst, M) for M in Ms]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            res = list(ex.map(_family_member, jobs))
    else:
        res = [_family_member(j) for j in jobs]
    lams = [float(r[0]) for r in res]
    slack = [float(lam - min(lam0, lamM)) for lam, lamM in res]
    hyp = bool(lam0 > inst.E0 + margin)
    small = [lam for M, lam in zip(Ms, lams) if M <= 9]
    strict = bool(all(lam > inst.E0 + 10 * POSITIVITY_TOL for lam in small)) if hyp else False
    return GSEFamily(Ms, lams, inst.E0, float(lam0), hyp, bool(min(slack) >= -1e-10), slack, strict)


@dataclass
class InverseSquareFit:
    C_fit: float | None
    slope: float | None
    slope_stderr: float | None
    used: int
    ok: bool
    reason: str = ""


def inverse_square_fit(family, E0: float | None = None, min_slope: float = -2.3) -> InverseSquareFit:
    """Least-squares slope of ln(λ_min - E0) against ln M; C_fit = exp(intercept)."""
    if isinstance(family, GSEFamily):
        E0 = family.E0 if E0 is None else E0
        family = family.pairs()
    M = np.array([p[0] for p in family], float)
    lam = np.array([p[1] for p in family], float)
    use = lam - E0 > 0
    if use.sum() < 4:
        return InverseSquareFit(None, None, None, int(use.sum()), False, "fewer than 4 positive gaps")
    res = stats.linregress(np.log(M[use]), np.log(lam[use] - E0))
    slope = float(res.slope)
    return InverseSquareFit(float(np.exp(res.intercept)), slope, float(res.stderr), int(use.sum()),
                            slope >= min_slope)


# -- Poincaré variant and ground-state transform ---------------------------------

def _omega_M(M: int, spec) -> Domain:
    return make_column(0, (M + 1) // 2 - 1, spec)


def trace_weights(dom: Domain, key: int) -> np.ndarray:
    """Nodal weights of ‖Γψ‖² on the face x_d = key/n (trapezoid, × h^{d-1})."""
    fs = boundary_faces(dom)
    keys = dom.nodes[fs.node]
    sel = (fs.axis == dom.d - 1) & (keys[:, -1] == key)
    w = np.zeros(dom.nnodes)
    np.add.at(w, fs.node[sel], fs.weight[sel] * dom.spec.h ** (dom.d - 1))
    return w


@dataclass(eq=False)
class PoincareReport:
    M: int
    lhs: np.ndarray
    rhs: np.ndarray
    holds: bool
    sharp_constant: float      # min of LHS/‖ψ‖² over all fields (Robin eigenvalue)
    constant: float            # 4/(M(M+1))
    constant_field: tuple      # (LHS, RHS) for ψ ≡ 1


def poincare_check(M: int, fields, spec, tol: float = 1e-9) -> PoincareReport:
    """(4/M)‖Γ_M ψ‖² + ‖∇ψ‖² ≥ 4/(M(M+1)) ‖ψ‖² on Ω_M = (-1/2, M/2) along the last axis."""
    dom = _omega_M(M, spec)
    op = assemble(dom, None, BoundarySpec.neumann())
    tw = trace_weights(dom, -spec.half)
    c = 4.0 / (M * (M + 1))
    fields = [np.asarray(f, float) for f in fields]
    lhs = np.array([4.0 / M * np.sum(tw * f * f) + form_value(op, f) for f in fields])
    rhs = np.array([c * norm2(op, f) for f in fields])
    holds = bool(np.all(lhs - rhs >= -tol * np.maximum(1.0, np.abs(rhs))))
    K = op.stiffness.toarray() + np.diag(4.0 / M * tw)
    s = 1.0 / np.sqrt(op.mass)
    sharp = float(sla.eigh(K * s[:, None] * s[None, :], eigvals_only=True, subset_by_index=[0, 0])[0])
    one = np.ones(dom.nnodes)
    cf = (4.0 / M * np.sum(tw) + form_value(op, one), c * norm2(op, one))
    return PoincareReport(M, lhs, rhs, holds, sharp, c, cf)


def _gradient_norm_sq(op, g: np.ndarray) -> float:
    """‖∇g‖² from the link part of the form (no potential, no boundary terms)."""
    free = assemble(op.domain, None, BoundarySpec.neumann())
    return form_value(free, g)


@dataclass(eq=False)
class TransformReport:
    M: int
    lhs: np.ndarray               # ‖∇(ψ/φ)‖²
    rhs: np.ndarray               # (inf φ)^{-2} [Q(ψ) - E_0 ‖ψ‖²]
    budget: np.ndarray            # c·h·‖ψ‖²
    holds: bool
    combined_lhs: np.ndarray      # (4/M)‖Γψ‖² + Q(ψ) - E_0‖ψ‖²
    combined_rhs: np.ndarray      # (inf φ / sup φ)² 4/(M(M+1)) ‖ψ‖²
    combined_holds: bool
    ratio: float


def ground_state_transform_check(M: int, model: ModelSpec, fields, t_ref: float | None = None,
                                 c_budget: float = 1.0) -> TransformReport:
    E0, phi = _reference(model, t_ref)
    t = model.a if t_ref is None else t_ref
    spec = model.spec
    dom = _omega_M(M, spec)
    bc = BoundarySpec.mezincescu(phi, spec)
    op = assemble(dom, _field(model, dom, {c: t for c in dom.cells}), bc)
    per = to_periodic(phi, spec)
    phiM = per[periodic_index(dom.nodes, spec)]
    lo, hi = float(per.min()), float(per.max())
    tw = trace_weights(dom, -spec.half)
    fields = [np.asarray(f, float) for f in fields]
    excess = np.array([form_value(op, f) - E0 * norm2(op, f) for f in fields])
    lhs = np.array([_gradient_norm_sq(op, f / phiM) for f in fields])
    rhs = excess / lo ** 2
    budget = c_budget * spec.h * np.array([norm2(op, f) for f in fields])
    holds = bool(np.all(lhs <= rhs + budget / lo ** 2))
    clhs = np.array([4.0 / M * np.sum(tw * f * f) for f in fields]) + excess
    ratio = (lo / hi) ** 2
    crhs = ratio * 4.0 / (M * (M + 1)) * np.array([norm2(op, f) for f in fields])
    chold = bool(np.all(clhs >= crhs - budget))
    return TransformReport(M, lhs, rhs, budget, holds, clhs, crhs, chold, ratio)


# -- Dirichlet-to-Neumann map -------------------------------------------------------

@dataclass(eq=False)
class DtNOperator:
    lam: float
    matrix: np.ndarray          # T_λ: g ↦ outward two-point difference of ψ at S
    chi_S: np.ndarray           # Mezincescu data of Ω_0 on S
    weights: np.ndarray         # trapezoid weights × h^{d-1} of the S nodes
    s_nodes: np.ndarray         # node ids (in Ω_0) of S
    alpha_dirichlet: float      # λ_min of the Ω_0 problem with Dirichlet data on S

    @property
    def weighted(self) -> np.ndarray:
        return self.weights[:, None] * self.matrix

    @property
    def asymmetry(self) -> float:
        A = self.weighted
        return float(np.linalg.norm(A - A.T) / max(np.linalg.norm(A), 1e-300))

    def coercivity(self) -> float:
        """ε = smallest value of ⟨g, T g⟩ + Σ_S χ g² over ‖g‖ = 1 (symmetrized form)."""
        A = 0.5 * (self.weighted + self.weighted.T) + np.diag(self.chi_S * self.weights)
        s = 1.0 / np.sqrt(self.weights)
        return float(np.linalg.eigvalsh(A * s[:, None] * s[None, :])[0])


def dtn_map(inst: Quasi1DInstance, lam: float, margin: float = DTN_MARGIN) -> DtNOperator:
    dom = inst.omega0()
    spec = dom.spec
    op = inst.operator(dom)       # Mezincescu data on all of ∂Ω_0, including S
    keys = dom.nodes
    S = np.flatnonzero(keys[:, -1] == inst.s_key())
    I = np.setdiff1d(np.arange(dom.nnodes), S)
    A = (op.stiffness - lam * sp.diags(op.mass)).tocsr()
    A_II = A[I][:, I].toarray()
    alpha = float(sla.eigh(op.stiffness[I][:, I].toarray(), np.diag(op.mass[I]), eigvals_only=True,
                           subset_by_index=[0, 0])[0])
    if lam > alpha - margin:
        raise ValueError(f"λ = {lam} is not below the Dirichlet-on-S threshold {alpha} (margin {margin})")
    A_IS = A[I][:, S].toarray()
    sol = -np.linalg.solve(A_II, A_IS)             # ψ_I for each basis g
    sgn = inst.s_sign()
    inner = keys[S].copy()
    inner[:, -1] -= sgn
    inner_ids = dom.node_ids(inner)
    pos = {int(k): j for j, k in enumerate(I)}
    rows = np.array([pos[int(k)] for k in inner_ids])
    T = (np.eye(len(S)) - sol[rows, :]) / spec.h
    fs = boundary_faces(dom)
    sel = (fs.axis == dom.d - 1) & (fs.sign == sgn) & (keys[fs.node][:, -1] == inst.s_key())
    wmap = dict(zip(fs.node[sel].tolist(), (fs.weight[sel] * spec.h ** (dom.d - 1)).tolist()))
    w = np.array([wmap[int(k)] for k in S])
    per = to_periodic(inst.phi_ref, spec)
    chi = chi_values(per, spec, keys[S], dom.d - 1, sgn)
    return DtNOperator(float(lam), T, chi, w, S, alpha)


def dtn_closed_form_1d(lam: float, n: int, cells: int = 1) -> float:
    """Discrete 1D T_λ for V ≡ 0, Neumann far end: ψ_j = cosh(θj), cosh θ = 1 - λh²/2."""
    h = 1.0 / n
    N = n * cells
    c = 1.0 - lam * h * h / 2.0
    th = np.arccosh(c)
    return float((1.0 - np.cosh(th * (N - 1)) / np.cosh(th * N)) / h)


def dtn_continuum_1d(lam: float, length: float = 1.0) -> float:
    k = np.sqrt(-lam)
    return float(k * np.tanh(k * length))


def coercivity_scan(inst: Quasi1DInstance, lams) -> dict:
    eps, asym = [], []
    for lam in lams:
        T = dtn_map(inst, lam)
        eps.append(T.coercivity())
        asym.append(T.asymmetry)
    eps = np.array(eps)
    return {"lambdas": np.asarray(lams, float), "epsilon": eps, "asymmetry": np.array(asym),
            "nonincreasing": bool(np.all(np.diff(eps) <= 1e-10 * max(1.0, np.abs(eps).max())))}


# -- ν-dichotomy ----------------------------------------------------------------------

@dataclass
class NuReport:
    attach: str
    Ms: list
    energies: list
    E0: float
    case: str                    # inherited | gapped | unresolved
    delta: float | None
    nu: float | None
    shape_deviation: float | None
    tol_h: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, default=float)


def extract_nu(dom: Domain, nodal: np.ndarray) -> tuple:
    """ν by least squares over adjacent cell pairs, and the max node-wise shape deviation."""
    order = np.argsort(dom.cells_along_axis())
    blocks = np.array([nodal[dom.cell_nodes[k]] for k in order])
    if len(blocks) < 2:
        return 1.0, 0.0
    num = float(np.sum(blocks[:-1] * blocks[1:]))
    den = float(np.sum(blocks[:-1] ** 2))
    nu = num / den
    scaled = blocks / nu ** np.arange(len(blocks))[:, None]
    dev = float(np.abs(scaled - scaled[0]).max() / np.abs(scaled[0]).max())
    return nu, dev


def nu_dichotomy(model: ModelSpec, attach: str, Ms, tol_h: float = 1e-8) -> NuReport:
    E0, phi = _reference(model)
    bc = BoundarySpec.mezincescu(phi, model.spec)
    t = _coupling(model, attach)
    Es, states = [], []
    for M in Ms:
        dom = _omega_M(int(M), model.spec)
        op = assemble(dom, _field(model, dom, {c: t for c in dom.cells}), bc)
        gs = ground_state(op)
        Es.append(float(gs.value))
        states.append((dom, op.extend(gs.nodal)))
    gaps = np.array(Es) - E0
    nu = dev = delta = None
    if np.all(np.abs(gaps) <= tol_h):
        case = "inherited"
        dom, st = states[-1]
        nu, dev = extract_nu(dom, st)
    elif gaps.min() > tol_h and gaps.min() >= 0.5 * gaps[:2].min():
        case, delta = "gapped", float(gaps.min())
    else:
        case = "unresolved"
    return NuReport(str(attach), [int(M) for M in Ms], Es, float(E0), case, delta, nu, dev, tol_h)


# -- configuration-class energy lemmas --------------------------------------------------

@dataclass
class ConfigurationReport:
    in_class: bool
    regime: str
    segments: list               # runs (start, end, label) along the column
    defect: tuple | None         # (r_first, r_last) of the witnessing block
    lambda_min: float
    E0: float
    gap: float
    L_eff: int | None            # longer constant side, in M units (2·cells - 1)
    C_obs: float | None
    C_fit: float | None
    consistent: bool | None      # C_obs within a factor 3 of C_fit (both directions)
    bound_ok: bool | None = None  # gap ≥ C_fit / (3 L_eff²)
    hypothesis_ok: bool | None = None   # Ω_0-gap hypothesis for the witnessing block
    note: str = ""


def _label(model: ModelSpec, w: float, eps: float) -> str:
    if w < model.a + eps:
        return "a"
    if w > model.b - eps:
        return "b"
    return "mid"


def decompose_column(model: ModelSpec, omega, eps: float | None = None):
    """Runs of equal labels (a-band, b-band, mid) along the column, and the witnessing block."""
    w = np.asarray(omega, float)
    L = len(w)
    r0 = -(L - 1) // 2
    eps = 0.1 * (model.b - model.a) if eps is None else eps
    labels = [_label(model, x, eps) for x in w]
    segs = []
    start = 0
    for k in range(1, L + 1):
        if k == L or labels[k] != labels[start] or labels[k] == "mid":
            segs.append((r0 + start, r0 + k - 1, labels[start]))
            start = k
    defect = None
    bern = model.dist.is_bernoulli
    if bern:
        for k in range(L - 3):
            if w[k] != w[k + 1] and w[k + 2] != w[k + 3]:
                defect = (r0 + k, r0 + k + 3)
                break
    else:
        for k in range(L - 1):
            if labels[k] == "mid" and labels[k + 1] == "mid":
                defect = (r0 + k, r0 + k + 1)
                break
    return segs, defect, "Bernoulli-quadruples" if bern else "non-Bernoulli-pairs"


def configuration_energy_lemmas(model: ModelSpec, L: int, column_config, eps: float | None = None,
                                fit_Ms=tuple(range(3, 42, 2))) -> ConfigurationReport:
    segs, defect, regime = decompose_column(model, column_config, eps)
    spec = model.spec
    dom = make_segment((0,) * (spec.d - 1), L, spec)
    inst_E0, phi = _reference(model)
    bc = BoundarySpec.mezincescu(phi, spec)
    cells = sorted(dom.cells, key=lambda c: c[-1])
    vals = {c: float(v) for c, v in zip(cells, column_config)}
    lam = lambda_min(assemble(dom, _field(model, dom, vals), bc))
    gap = float(lam - inst_E0)
    if defect is None:
        return ConfigurationReport(False, regime, segs, None, float(lam), float(inst_E0), gap,
                                   None, None, None, None, "configuration not in the lemma class")
    r_lo = -(L - 1) // 2
    side = max(defect[0] - r_lo, (L - 1) // 2 - defect[1])
    L_eff = 2 * side - 1 if side > 0 else 1
    W0 = tuple(vals[(0,) * (spec.d - 1) + (r,)] for r in range(defect[0], defect[1] + 1))
    inst = Quasi1DInstance(model, 2 * len(W0) + 1, "a", W0)
    fam = gse_family(inst, list(fit_Ms))
    fit = inverse_square_fit(fam)
    C_obs = gap * L_eff ** 2
    consistent = bound = None
    if fit.C_fit is not None:
        consistent = bool(fit.C_fit / 3 <= C_obs <= 3 * fit.C_fit)
        bound = bool(C_obs >= fit.C_fit / 3)
    note = "" if fam.hypothesis_ok else "block does not satisfy the Ω_0-gap hypothesis"
    return ConfigurationReport(True, regime, segs, defect, float(lam), float(inst_E0), gap,
                               L_eff, float(C_obs), fit.C_fit, consistent, bound, fam.hypothesis_ok, note)
