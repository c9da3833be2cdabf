"""Background potential V_0, single-site potential u, coupling laws and configurations."""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field

import numpy as np

from .lattice import Domain, GridSpec, cell_template


def cell_coords(spec: GridSpec) -> np.ndarray:
    """(P, d) coordinates of the unit-cell nodes in C order."""
    return cell_template(spec).offsets / spec.n


def periodic_index(keys: np.ndarray, spec: GridSpec) -> tuple:
    """Index into an (n,)*d periodic array for integer node keys."""
    idx = (np.asarray(keys) + spec.half) % spec.n
    return tuple(np.moveaxis(idx, -1, 0))


def to_periodic(samples: np.ndarray, spec: GridSpec, rtol: float = 1e-10) -> np.ndarray:
    """(n+1)^d cell samples -> (n)^d periodic array; checks opposite faces agree."""
    a = np.asarray(samples, dtype=float)
    shape_full, shape_per = (spec.n + 1,) * spec.d, (spec.n,) * spec.d
    if a.shape == shape_per:
        return a.copy()
    a = a.reshape(shape_full)
    scale = max(1.0, float(np.abs(a).max()))
    for j in range(spec.d):
        lo = np.take(a, 0, axis=j)
        hi = np.take(a, spec.n, axis=j)
        if np.abs(lo - hi).max() > rtol * scale:
            raise ValueError("samples are not periodic: opposite faces differ")
    return a[(slice(0, spec.n),) * spec.d].copy()


def from_periodic(per: np.ndarray, spec: GridSpec) -> np.ndarray:
    """(n)^d periodic array -> flat (n+1)^d cell samples (C order)."""
    keys = cell_template(spec).offsets
    return np.asarray(per)[periodic_index(keys, spec)]


@dataclass(frozen=True, eq=False)
class PeriodicPotential:
    samples: np.ndarray        # flat (n+1)^d values on the unit cell
    spec: GridSpec
    lower_bound: float = 0.0
    name: str = "custom"

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float).ravel()
        if s.size != (self.spec.n + 1) ** self.spec.d:
            raise ValueError("V0 samples must cover the (n+1)^d cell grid")
        if not np.all(np.isfinite(s)):
            raise ValueError("V0 samples must be finite")
        to_periodic(s, self.spec)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "lower_bound", float(s.min()))

    @property
    def periodic(self) -> np.ndarray:
        return to_periodic(self.samples, self.spec)

    def on(self, dom: Domain) -> np.ndarray:
        return self.periodic[periodic_index(dom.nodes, self.spec)]


@dataclass(frozen=True, eq=False)
class SingleSitePotential:
    samples: np.ndarray        # flat (n+1)^d values on the unit cell
    spec: GridSpec
    has_positive_part: bool = False
    has_negative_part: bool = False
    waived: bool = False       # sign-definite controls may waive (H2)
    name: str = "custom"

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float).ravel()
        if s.size != (self.spec.n + 1) ** self.spec.d:
            raise ValueError("u samples must cover the (n+1)^d cell grid")
        t = cell_template(self.spec)
        on_bd = np.any(np.abs(t.offsets) == self.spec.half, axis=1)
        if np.any(s[on_bd] != 0.0):
            raise ValueError("single-site potential must vanish on the cell boundary")
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "has_positive_part", bool(np.any(s > 0)))
        object.__setattr__(self, "has_negative_part", bool(np.any(s < 0)))

    @property
    def sign_indefinite(self) -> bool:
        return self.has_positive_part and self.has_negative_part


# -- coupling distributions -------------------------------------------------

@dataclass(frozen=True, eq=False)
class CouplingDistribution:
    kind: str
    a: float
    b: float
    p_b: float = 0.5
    points: tuple = ()
    weights: tuple = ()

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"need a < b, got a={self.a}, b={self.b}")
        if self.kind == "bernoulli":
            if not 0.0 <= self.p_b <= 1.0:
                raise ValueError("p_b must lie in [0, 1]")
        elif self.kind == "discrete":
            pts = np.asarray(self.points, float)
            w = np.asarray(self.weights, float)
            if pts.size < 2 or np.unique(pts).size < 2:
                raise ValueError("discrete support needs at least two points (H3)")
            if w.shape != pts.shape or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
                raise ValueError("weights must be nonnegative and sum to 1")
            if pts.min() != self.a or pts.max() != self.b:
                raise ValueError("a and b must be the extreme support points")
        elif self.kind != "uniform":
            raise ValueError(f"unknown distribution kind {self.kind!r}")

    @classmethod
    def bernoulli(cls, a: float, b: float, p_b: float = 0.5):
        return cls("bernoulli", float(a), float(b), float(p_b))

    @classmethod
    def uniform(cls, a: float, b: float):
        return cls("uniform", float(a), float(b))

    @classmethod
    def discrete(cls, points, weights):
        pts = tuple(float(x) for x in points)
        if len(set(pts)) < 2:
            raise ValueError("discrete support needs at least two points (H3)")
        return cls("discrete", min(pts), max(pts), 0.5, pts, tuple(float(w) for w in weights))

    @property
    def is_bernoulli(self) -> bool:
        return self.kind == "bernoulli"

    def from_uniform(self, U: np.ndarray) -> np.ndarray:
        """Inverse-CDF transform of uniforms in [0, 1)."""
        U = np.asarray(U, float)
        if self.kind == "bernoulli":
            return np.where(U < self.p_b, self.b, self.a)
        if self.kind == "uniform":
            return self.a + (self.b - self.a) * U
        pts = np.asarray(self.points)
        order = np.argsort(pts)
        cw = np.cumsum(np.asarray(self.weights)[order])
        k = np.minimum(np.searchsorted(cw, U, side="right"), len(pts) - 1)
        return pts[order][k]

    def gap_probability(self, eps: float) -> float:
        """μ(ε) = P{ω ∈ [a, a+ε) ∪ (b-ε, b]}."""
        if eps <= 0:
            return 0.0
        if self.kind == "bernoulli":
            return 1.0
        if self.kind == "uniform":
            return min(1.0, 2.0 * eps / (self.b - self.a))
        pts = np.asarray(self.points)
        w = np.asarray(self.weights)
        near = (pts < self.a + eps) | (pts > self.b - eps)
        return float(w[near].sum())

    def to_dict(self) -> dict:
        return {"kind": self.kind, "a": self.a, "b": self.b, "p_b": self.p_b,
                "points": list(self.points), "weights": list(self.weights)}


@dataclass(frozen=True, eq=False)
class Configuration:
    sites: tuple               # cell indices, aligned with values
    values: np.ndarray
    seed: int | None = None
    index: int | None = None

    def as_dict(self) -> dict:
        return {s: float(v) for s, v in zip(self.sites, self.values)}

    def value(self, site) -> float:
        return float(self.values[self.sites.index(tuple(site))])


def configuration(dom: Domain, values) -> Configuration:
    """Configuration from explicit values (dict site->value, or sequence aligned with dom.cells)."""
    if isinstance(values, dict):
        try:
            vals = [float(values[c]) for c in dom.cells]
        except KeyError as exc:
            raise KeyError(f"missing coupling for site {exc.args[0]}") from None
    else:
        vals = np.broadcast_to(np.asarray(values, float), (dom.ncells,))
    return Configuration(dom.cells, np.array(vals, dtype=float))


def _site_code(cells: np.ndarray) -> np.ndarray:
    c = np.asarray(cells, dtype=np.int64) + (1 << 20)
    code = np.zeros(len(c), dtype=np.uint64)
    for j in range(c.shape[1]):
        code |= c[:, j].astype(np.uint64) << np.uint64(21 * j)
    return code


def site_uniforms(seed: int, index: int, cells: np.ndarray) -> np.ndarray:
    """One uniform per site from Philox keyed on (seed, index), counter = site code."""
    key = np.random.SeedSequence([int(seed) & ((1 << 64) - 1), int(index)]).generate_state(2, np.uint64)
    out = np.empty(len(cells))
    for k, code in enumerate(_site_code(cells)):
        bg = np.random.Philox(key=key, counter=np.array([code, 0, 0, 0], dtype=np.uint64))
        out[k] = np.random.Generator(bg).random()
    return out


def sample_configuration(dist: CouplingDistribution, dom: Domain, seed: int, index: int) -> Configuration:
    U = site_uniforms(seed, index, dom.cell_array)
    return Configuration(dom.cells, dist.from_uniform(U), int(seed), int(index))


# -- single-site constructions ----------------------------------------------

BUMP_RADIUS = 3.0 / 8.0


def bump(spec: GridSpec, radius: float = BUMP_RADIUS) -> np.ndarray:
    """Tensor product of exp(1 - 1/(1-s^2)), s = x_j/radius; max 1, zero for |x_j| >= radius."""
    x = cell_coords(spec) / radius
    with np.errstate(divide="ignore", over="ignore"):
        f = np.where(np.abs(x) < 1, np.exp(1.0 - 1.0 / np.maximum(1.0 - x * x, 1e-300)), 0.0)
    return f.prod(axis=1)


def periodic_laplacian(samples: np.ndarray, spec: GridSpec) -> np.ndarray:
    """Centred 2d+1 point Laplacian of periodic cell samples (flat (n+1)^d in/out)."""
    per = to_periodic(samples, spec)
    lap = np.zeros_like(per)
    for j in range(spec.d):
        lap += np.roll(per, 1, axis=j) + np.roll(per, -1, axis=j) - 2 * per
    return from_periodic(lap * spec.n ** 2, spec)


def kn_single_site(amplitude: float, spec: GridSpec):
    """ψ = 1 + amplitude·B and u = Δ_h ψ / ψ (constant collar of width 1/8)."""
    if spec.n < 8:
        raise ValueError("kn_single_site needs n >= 8 so the stencil sees the constant collar")
    psi = 1.0 + amplitude * bump(spec)
    if psi.min() <= 0:
        raise ValueError("amplitude makes psi nonpositive")
    u = periodic_laplacian(psi, spec) / psi
    t = cell_template(spec)
    u[np.any(np.abs(t.offsets) == spec.half, axis=1)] = 0.0   # exact zeros on the collar
    return psi, SingleSitePotential(u, spec, name=f"kn-bump({amplitude:g})")


def split_signs(u: SingleSitePotential | np.ndarray):
    s = u.samples if isinstance(u, SingleSitePotential) else np.asarray(u, float)
    return np.maximum(s, 0.0), np.maximum(-s, 0.0)


def alloy_field(V0: PeriodicPotential, u: SingleSitePotential, omega: Configuration | dict,
                dom: Domain) -> np.ndarray:
    """V_0(x mod 1) + ω_{cell(x)} u(x - cell(x)) at every node of dom."""
    if not isinstance(omega, Configuration):
        omega = configuration(dom, omega)
    lookup = dict(zip(omega.sites, omega.values))
    field_ = V0.on(dom).copy()
    for k, c in enumerate(dom.cells):
        if c not in lookup:
            raise KeyError(f"missing coupling for site {c}")
        field_[dom.cell_nodes[k]] += lookup[c] * u.samples
    return field_


# -- presets ------------------------------------------------------------------

_CALL = re.compile(r"^\s*([a-z\-]+)\s*(?:\(([^)]*)\))?\s*$")


def _parse(name: str):
    m = _CALL.match(name)
    if not m:
        raise ValueError(f"cannot parse preset {name!r}")
    args = [float(x) for x in m.group(2).split(",")] if m.group(2) else []
    return m.group(1), args


def v0_preset(name: str, spec: GridSpec) -> PeriodicPotential:
    """'zero' or 'cosine(amplitude, phase)': amplitude * Σ_j cos 2π(x_j - phase)."""
    key, args = _parse(name)
    x = cell_coords(spec)
    if key == "zero":
        return PeriodicPotential(np.zeros(len(x)), spec, name="zero")
    if key == "cosine":
        amp = args[0] if args else 1.0
        ph = args[1] if len(args) > 1 else 0.0
        return PeriodicPotential(amp * np.cos(2 * np.pi * (x - ph)).sum(axis=1), spec, name=name)
    raise ValueError(f"unknown V0 preset {name!r}")


def u_preset(name: str, spec: GridSpec) -> SingleSitePotential:
    """'zero', 'kn-bump(A)', 'bump(A)', 'neg-bump(A)', 'dipole(A, offset)'."""
    key, args = _parse(name)
    amp = args[0] if args else 1.0
    if key == "zero":
        return SingleSitePotential(np.zeros((spec.n + 1) ** spec.d), spec, waived=True, name="zero")
    if key == "kn-bump":
        return kn_single_site(amp if args else 0.5, spec)[1]
    B = bump(spec)
    if key == "bump":
        return SingleSitePotential(amp * B, spec, waived=True, name=name)
    if key == "neg-bump":
        return SingleSitePotential(-amp * B, spec, waived=True, name=name)
    if key == "dipole":
        off = args[1] if len(args) > 1 else 0.3
        xd = cell_coords(spec)[:, -1] / BUMP_RADIUS
        return SingleSitePotential(amp * B * (xd + off), spec, name=name)
    raise ValueError(f"unknown u preset {name!r}")


def load_potential_csv(path, spec: GridSpec) -> np.ndarray:
    """Cell samples from CSV rows 'x_1,...,x_d,value' (header optional)."""
    t = cell_template(spec)
    out = np.full(len(t.offsets), np.nan)
    pos = {tuple(o): k for k, o in enumerate(t.offsets.tolist())}
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            try:
                vals = [float(x) for x in row]
            except ValueError:
                continue          # header
            if len(vals) != spec.d + 1:
                raise ValueError(f"expected {spec.d + 1} columns, got {len(vals)}")
            key = tuple(int(round(x * spec.n)) for x in vals[:-1])
            if key not in pos:
                raise ValueError(f"coordinate {vals[:-1]} is not a cell node")
            out[pos[key]] = vals[-1]
    if np.isnan(out).any():
        raise ValueError("CSV does not cover every cell node")
    return out
