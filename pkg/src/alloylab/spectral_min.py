"""Reference ground states, the curves t -> E_φ(t), and the spectral-minimum trichotomy."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as sla

from .eigen import ground_state, lambda_min
from .lattice import GridSpec, make_cube
from .operator import AssembledOperator, BoundarySpec, assemble
from .potential import (CouplingDistribution, PeriodicPotential, SingleSitePotential,
                        alloy_field, configuration, sample_configuration, u_preset, v0_preset)

DEFAULT_T_POINTS = 33
DEFAULT_K = 30


@dataclass(eq=False)
class ModelSpec:
    V0: PeriodicPotential
    u: SingleSitePotential
    dist: CouplingDistribution
    spec: GridSpec
    name: str = "custom"

    def __post_init__(self):
        if self.V0.spec != self.spec or self.u.spec != self.spec:
            raise ValueError("V0, u and the model must share one GridSpec")
        if not (self.u.sign_indefinite or self.u.waived):
            raise ValueError("(H2): u must have nontrivial positive and negative parts "
                             "(set waived=True for sign-definite controls)")

    @property
    def d(self) -> int:
        return self.spec.d

    @property
    def a(self) -> float:
        return self.dist.a

    @property
    def b(self) -> float:
        return self.dist.b

    def cell_potential(self, t: float) -> np.ndarray:
        return self.V0.samples + t * self.u.samples


PRESETS = {
    "kn": ("zero", "kn-bump(0.5)", ("bernoulli", 0.0, 1.0, 0.5)),
    "positive": ("cosine(2,0.15)", "bump(20)", ("uniform", 0.0, 1.0)),
    "negative": ("cosine(2,0.15)", "neg-bump(20)", ("uniform", 0.0, 1.0)),
    "dipole": ("cosine(2,0.15)", "dipole(20,0.3)", ("uniform", 0.0, 1.0)),
    "free": ("zero", "zero", ("uniform", 0.0, 1.0)),
    "symmetric": ("cosine(2,0)", "dipole(20,0.3)", ("uniform", 0.0, 1.0)),   # reflection-symmetric cell: χ ≡ 0
    "balanced": ("cosine(2,0.15)", "dipole(20,0.05)", ("uniform", 0.0, 1.0)),  # case (iii)
}


def make_distribution(desc) -> CouplingDistribution:
    kind = desc[0]
    if kind == "bernoulli":
        return CouplingDistribution.bernoulli(*desc[1:])
    if kind == "uniform":
        return CouplingDistribution.uniform(*desc[1:])
    if kind == "discrete":
        return CouplingDistribution.discrete(*desc[1:])
    raise ValueError(f"unknown distribution {kind!r}")


def preset_model(name: str, spec: GridSpec, V0: str | None = None, u: str | None = None,
                 dist=None) -> ModelSpec:
    """Named model with optional overrides of the V0/u preset strings or the distribution."""
    if name not in PRESETS:
        raise ValueError(f"unknown model preset {name!r}; choose from {sorted(PRESETS)}")
    v0_name, u_name, d_desc = PRESETS[name]
    dist = dist if isinstance(dist, CouplingDistribution) else make_distribution(dist or d_desc)
    return ModelSpec(v0_preset(V0 or v0_name, spec), u_preset(u or u_name, spec), dist, spec, name)


# -- cell problems ------------------------------------------------------------

def cell_operator(model: ModelSpec, t: float, bc: BoundarySpec) -> AssembledOperator:
    dom = make_cube(1, model.spec)
    return assemble(dom, model.cell_potential(t), bc)


def mezincescu(model: ModelSpec, phi_ref: np.ndarray) -> BoundarySpec:
    return BoundarySpec.mezincescu(phi_ref, model.spec)


def reference_ground_state(model: ModelSpec, t: float):
    """(E_per, φ_t): periodic unit-cell ground state, φ_t on the (n+1)^d cell grid, max 1."""
    op = cell_operator(model, t, BoundarySpec.periodic())
    gs = ground_state(op)
    if gs.positivity_violation:
        raise ValueError(f"periodic ground state at t={t} is not of one sign")
    phi = op.extend(gs.nodal)
    phi = phi / phi.max()
    if phi.min() <= 0:
        raise ValueError(f"periodic ground state at t={t} is not strictly positive")
    return gs.value, phi


def _cell_pencil(model: ModelSpec, phi_ref: np.ndarray):
    """Dense (K_0, U, w) of the single-cell Mezincescu problem: K_t = K_0 + t·U."""
    op = cell_operator(model, 0.0, mezincescu(model, phi_ref))
    K0 = op.stiffness.toarray()
    U = np.diag(op.mass * model.u.samples)
    return K0, U, op.mass


def _pencil_min(K: np.ndarray, w: np.ndarray) -> float:
    s = 1.0 / np.sqrt(w)
    return float(sla.eigh(K * s[:, None] * s[None, :], eigvals_only=True, subset_by_index=[0, 0])[0])


def e_phi(model: ModelSpec, phi_ref: np.ndarray, t: float) -> float:
    """Ground energy of the unit-cell operator of H_t with Mezincescu(φ_ref) data."""
    return lambda_min(cell_operator(model, t, mezincescu(model, phi_ref)))


def e_phi_many(model: ModelSpec, phi_ref: np.ndarray, ts) -> np.ndarray:
    K0, U, w = _cell_pencil(model, phi_ref)
    return np.array([_pencil_min(K0 + t * U, w) for t in np.atleast_1d(ts)])


@dataclass(eq=False)
class GroundStateCurve:
    ts: np.ndarray
    energies: np.ndarray
    phi_ref_tag: str
    second_differences: np.ndarray

    @property
    def scale(self) -> float:
        return max(1.0, float(np.abs(self.energies).max()))

    def concave(self, tol: float = 1e-9) -> bool:
        return bool(np.all(self.second_differences <= tol * self.scale))

    def strictly_concave(self, tol: float = 1e-8) -> bool:
        return bool(np.all(self.second_differences < -tol * self.scale))

    def to_csv_rows(self):
        sd = np.concatenate([[np.nan], self.second_differences, [np.nan]])
        return [(float(t), float(e), float(s)) for t, e, s in zip(self.ts, self.energies, sd)]


def ground_state_curve(model: ModelSpec, phi_ref: np.ndarray, ts=None, tag: str = "custom") -> GroundStateCurve:
    ts = np.linspace(model.a, model.b, DEFAULT_T_POINTS) if ts is None else np.asarray(ts, float)
    E = e_phi_many(model, phi_ref, ts)
    return GroundStateCurve(ts, E, tag, E[:-2] - 2 * E[1:-1] + E[2:])


def spectral_sum_terms(model: ModelSpec, phi_ref: np.ndarray, t: float, K: int = DEFAULT_K) -> np.ndarray:
    """Terms -2⟨uφ_0, φ_n⟩² / (E_n - E_0), n = 1..K, of the second-derivative identity."""
    K0, U, w = _cell_pencil(model, phi_ref)
    s = 1.0 / np.sqrt(w)
    vals, vecs = sla.eigh((K0 + t * U) * s[:, None] * s[None, :])
    if vals[1] - vals[0] <= 1e-9 * max(1.0, abs(vals[0])):
        raise ValueError("degenerate ground state: the second-derivative identity does not apply")
    K = min(K, len(vals) - 1)
    c = vecs[:, 1:K + 1].T @ (model.u.samples * vecs[:, 0])
    return -2.0 * c ** 2 / (vals[1:K + 1] - vals[0])


def second_derivative_spectral_sum(model: ModelSpec, phi_ref: np.ndarray, t: float,
                                   K: int = DEFAULT_K) -> float:
    return float(spectral_sum_terms(model, phi_ref, t, K).sum())


def second_derivative_fd(model: ModelSpec, phi_ref: np.ndarray, t: float, dt: float = 1e-3) -> float:
    E = e_phi_many(model, phi_ref, [t - dt, t, t + dt])
    return float((E[0] - 2 * E[1] + E[2]) / dt ** 2)


# -- classification -------------------------------------------------------------

@dataclass
class SpectralMinReport:
    E_phia_a: float
    E_phia_b: float
    E_phib_a: float
    E_phib_b: float
    case: str
    E0_estimate: float | None
    E0_interval: tuple | None
    cases_satisfied: list
    margins: dict
    t_a: float | None = None
    t_b: float | None = None
    tie_tol: float = 0.0

    @property
    def E0_bounds(self) -> tuple:
        if self.E0_interval is not None:
            return self.E0_interval
        return (self.E0_estimate, self.E0_estimate)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, default=float)


def tie_tolerance(E: float, solver_tol: float = 1e-12) -> float:
    return max(1e-8, 10 * solver_tol) * (1 + abs(E))


def classify_corners(E_aa: float, E_ab: float, E_ba: float, E_bb: float):
    """Case, E0 estimate or interval, and which of (i)/(ii) hold, per the tie rule."""
    tie = tie_tolerance(max(abs(E_aa), abs(E_bb)))
    cond_i = E_aa <= E_ab + tie
    cond_ii = E_ba >= E_bb - tie
    sat = [c for c, ok in (("(i)", cond_i), ("(ii)", cond_ii)) if ok]
    if cond_i:
        return "(i)", E_aa, None, sat, tie
    if cond_ii:
        return "(ii)", E_bb, None, sat, tie
    lo, hi = float(max(E_ab, E_ba)), float(min(E_aa, E_bb))
    return "(iii)", None, (lo, hi), sat, tie


def _bisect(f, lo: float, hi: float, iters: int = 60) -> float:
    flo = f(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if np.sign(fm) == np.sign(flo) and fm != 0:
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def classify(model: ModelSpec) -> SpectralMinReport:
    a, b = model.a, model.b
    _, phi_a = reference_ground_state(model, a)
    _, phi_b = reference_ground_state(model, b)
    E_aa, E_ab = e_phi_many(model, phi_a, [a, b])
    E_ba, E_bb = e_phi_many(model, phi_b, [a, b])
    case, est, interval, sat, tie = classify_corners(E_aa, E_ab, E_ba, E_bb)
    margins = {"phi_a: E(b)-E(a)": float(E_ab - E_aa), "phi_b: E(a)-E(b)": float(E_ba - E_bb)}
    rep = SpectralMinReport(float(E_aa), float(E_ab), float(E_ba), float(E_bb), case,
                            None if est is None else float(est), interval, sat, margins, tie_tol=tie)
    if case == "(iii)":
        target = 0.5 * (interval[0] + interval[1])
        rep.t_a = _bisect(lambda t: e_phi_many(model, phi_a, [t])[0] - target, a, b)
        rep.t_b = _bisect(lambda t: e_phi_many(model, phi_b, [t])[0] - target, a, b)
    return rep


@dataclass(eq=False)
class BruteForceE0:
    e0: float
    lambdas: np.ndarray       # λ_min per sampled realization
    const_a: float
    const_b: float

    def __float__(self):
        return self.e0

    @property
    def stderr(self) -> float:
        return float(self.lambdas.std(ddof=1) / np.sqrt(len(self.lambdas))) if len(self.lambdas) > 1 else 0.0


def brute_force_e0(model: ModelSpec, L: int, R: int, seed: int) -> BruteForceE0:
    """min of λ_min(H_{ω,Λ_L}) with periodic bc over R samples and ω ≡ a, ω ≡ b."""
    dom = make_cube(L, model.spec)
    base = assemble(dom, None, BoundarySpec.periodic())
    lam = lambda om: lambda_min(base.with_potential(alloy_field(model.V0, model.u, om, dom)))
    la = lam(configuration(dom, model.a))
    lb = lam(configuration(dom, model.b))
    samples = np.array([lam(sample_configuration(model.dist, dom, seed, r)) for r in range(R)])
    return BruteForceE0(float(min(la, lb, samples.min() if R else np.inf)), samples, la, lb)
