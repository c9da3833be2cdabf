"""Form-based assembly of H = -Δ + V on unions of unit cells.

The discrete form is

    Q_h(φ) = Σ_links w·h^{d-2} (φ_x - φ_y)^2 + Σ_∂ χ·w·h^{d-1} φ^2 + Σ_nodes w·h^d V φ^2

with tensor trapezoid weights taken cell by cell, so the global form is exactly
the sum of cell forms once the Mezincescu terms on interior faces (which cancel
pairwise) are added back.  The L^2 inner product uses the same node weights; the
operator is the pencil (K, W) with W diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .lattice import Domain, boundary_faces, cell_template, make_cell_union
from .potential import periodic_index, to_periodic


@dataclass(frozen=True, eq=False)
class BoundarySpec:
    kind: str                           # dirichlet | neumann | periodic | mezincescu
    phi_ref: np.ndarray | None = None   # (n)^d periodic samples for mezincescu

    def __post_init__(self):
        if self.kind not in ("dirichlet", "neumann", "periodic", "mezincescu"):
            raise ValueError(f"unknown boundary condition {self.kind!r}")
        if self.kind == "mezincescu":
            if self.phi_ref is None:
                raise ValueError("mezincescu needs phi_ref")
            if np.any(~np.isfinite(self.phi_ref)) or np.any(np.asarray(self.phi_ref) <= 0):
                raise ValueError("phi_ref must be strictly positive")

    @classmethod
    def dirichlet(cls):
        return cls("dirichlet")

    @classmethod
    def neumann(cls):
        return cls("neumann")

    @classmethod
    def periodic(cls):
        return cls("periodic")

    @classmethod
    def mezincescu(cls, phi_ref: np.ndarray, spec):
        return cls("mezincescu", to_periodic(phi_ref, spec))

    @property
    def tag(self) -> str:
        return self.kind


def chi_values(phi_per: np.ndarray, spec, keys: np.ndarray, axis, sign) -> np.ndarray:
    """χ = -sign·(φ(x+he) - φ(x-he)) / (2h φ(x)) on the periodic extension."""
    keys = np.asarray(keys, dtype=np.int64)
    axis = np.broadcast_to(axis, keys.shape[:-1])
    sign = np.broadcast_to(sign, keys.shape[:-1])
    e = np.zeros(keys.shape, dtype=np.int64)
    np.put_along_axis(e, axis[..., None], 1, axis=-1)
    p = phi_per[periodic_index(keys + e, spec)]
    m = phi_per[periodic_index(keys - e, spec)]
    c = phi_per[periodic_index(keys, spec)]
    return -sign * (p - m) * (spec.n / 2.0) / c


@dataclass(frozen=True, eq=False)
class BoundaryData:
    node: np.ndarray
    axis: np.ndarray
    sign: np.ndarray
    chi: np.ndarray

    def as_dict(self) -> dict:
        return {(int(k), int(a), int(s)): float(c)
                for k, a, s, c in zip(self.node, self.axis, self.sign, self.chi)}


def chi_from_phi(phi_per: np.ndarray, dom: Domain) -> BoundaryData:
    phi = to_periodic(phi_per, dom.spec)
    if np.any(phi <= 0):
        raise ValueError("phi_ref must be strictly positive")
    fs = boundary_faces(dom)
    chi = chi_values(phi, dom.spec, dom.nodes[fs.node], fs.axis, fs.sign)
    return BoundaryData(fs.node, fs.axis, fs.sign, chi)


@dataclass(frozen=True, eq=False)
class AssembledOperator:
    """Pencil (K, W) over free nodes.  K is the form matrix, W = mass (diagonal)."""

    stiffness: sp.csr_matrix
    mass: np.ndarray
    domain: Domain | None = None
    bc: BoundarySpec | None = None
    dofs: np.ndarray | None = None          # representative node id of each dof
    prolong: sp.csr_matrix | None = None    # (nnodes x ndof) nodal extension
    potential: np.ndarray | None = None     # nodal potential (length nnodes)
    cell_potential: np.ndarray | None = None
    embedding: np.ndarray | None = None     # for cell operators: global dof ids
    base: sp.csr_matrix | None = None       # K without potential terms
    mass_full: np.ndarray | None = None     # nodal weights·h^d before bc reduction

    @classmethod
    def from_matrix(cls, A, mass=None) -> "AssembledOperator":
        A = sp.csr_matrix(np.atleast_2d(np.asarray(A.todense() if sp.issparse(A) else A, float)))
        if A.shape[0] != A.shape[1] or abs(A - A.T).max() > 0:
            raise ValueError("matrix must be square and symmetric")
        w = np.ones(A.shape[0]) if mass is None else np.asarray(mass, float)
        return cls(A, w, base=A, dofs=np.arange(A.shape[0]))

    @property
    def dim(self) -> int:
        return self.stiffness.shape[0]

    @property
    def matrix(self) -> sp.csr_matrix:
        """Symmetric operator matrix W^{-1/2} K W^{-1/2} in the W-orthonormal basis."""
        s = sp.diags(1.0 / np.sqrt(self.mass))
        return sp.csr_matrix(s @ self.stiffness @ s)

    def restrict(self, nodal: np.ndarray) -> np.ndarray:
        """Nodal field (length nnodes) -> dof values."""
        return np.asarray(nodal, float)[self.dofs]

    def extend(self, values: np.ndarray) -> np.ndarray:
        """Dof values -> nodal field (zeros on eliminated Dirichlet nodes)."""
        return self.prolong @ np.asarray(values, float)

    def with_potential(self, potential=None, cell_potential=None) -> "AssembledOperator":
        """Same geometry and bc, new potential (only the diagonal changes)."""
        diag = _potential_diag(self.domain, self.mass_full, potential, cell_potential)
        K = self.base + sp.diags(self.prolong.T @ diag)
        return replace(self, stiffness=sp.csr_matrix(K), potential=potential,
                       cell_potential=cell_potential)

    def cell_terms(self) -> list:
        """Per cell: (node-pair, weight) link entries and (node, axis, sign, weight) faces."""
        t = cell_template(self.domain.spec)
        out = []
        for k in range(self.domain.ncells):
            g = self.domain.cell_nodes[k]
            out.append({
                "links": list(zip(zip(g[t.link_a].tolist(), g[t.link_b].tolist()), t.link_weight.tolist())),
                "faces": list(zip(g[t.face_node].tolist(), t.face_axis.tolist(),
                                  t.face_sign.tolist(), t.face_weight.tolist())),
                "node_weights": list(zip(g.tolist(), t.node_weight.tolist())),
            })
        return out


def _potential_diag(dom: Domain, mass_full, potential, cell_potential) -> np.ndarray:
    diag = np.zeros(dom.nnodes)
    if potential is not None:
        V = np.asarray(potential, float)
        if V.shape != (dom.nnodes,):
            raise ValueError(f"potential has shape {V.shape}, expected ({dom.nnodes},)")
        diag += mass_full * V
    if cell_potential is not None:
        t = cell_template(dom.spec)
        cp = np.asarray(cell_potential, float)
        cp = np.broadcast_to(cp.reshape(dom.ncells, -1), (dom.ncells, len(t.offsets)))
        w = t.node_weight * dom.spec.h ** dom.d
        np.add.at(diag, dom.cell_nodes.ravel(), (cp * w).ravel())
    return diag


def _outer_chi_diag(dom: Domain, bc: BoundarySpec) -> np.ndarray:
    diag = np.zeros(dom.nnodes)
    if bc.kind != "mezincescu":
        return diag
    fs = boundary_faces(dom)
    chi = chi_values(bc.phi_ref, dom.spec, dom.nodes[fs.node], fs.axis, fs.sign)
    np.add.at(diag, fs.node, chi * fs.weight * dom.spec.h ** (dom.d - 1))
    return diag


def _links_matrix(dom: Domain) -> sp.csr_matrix:
    t = cell_template(dom.spec)
    h, d = dom.spec.h, dom.d
    a = dom.cell_nodes[:, t.link_a].ravel()
    b = dom.cell_nodes[:, t.link_b].ravel()
    w = np.broadcast_to(t.link_weight * h ** (d - 2), (dom.ncells, len(t.link_a))).ravel()
    rows = np.concatenate([a, b, a, b])
    cols = np.concatenate([a, b, b, a])
    vals = np.concatenate([w, w, -w, -w])
    K = sp.coo_matrix((vals, (rows, cols)), shape=(dom.nnodes, dom.nnodes)).tocsr()
    K.sum_duplicates()
    return K


def _mass_full(dom: Domain) -> np.ndarray:
    t = cell_template(dom.spec)
    m = np.zeros(dom.nnodes)
    np.add.at(m, dom.cell_nodes.ravel(),
              np.broadcast_to(t.node_weight * dom.spec.h ** dom.d, dom.cell_nodes.shape).ravel())
    return m


def _reduction(dom: Domain, bc: BoundarySpec):
    """(dofs, P) with P the nodal extension matrix (nnodes x ndof)."""
    N = dom.nnodes
    if bc.kind == "dirichlet":
        free = np.setdiff1d(np.arange(N), dom.boundary_nodes)
        if free.size == 0:
            raise ValueError("Dirichlet problem has no free nodes at this resolution")
        P = sp.csr_matrix((np.ones(free.size), (free, np.arange(free.size))), shape=(N, free.size))
        return free, P
    if bc.kind == "periodic":
        if not dom.is_box:
            raise ValueError("periodic bc requires a box-shaped domain")
        keys = dom.nodes
        lo, hi = keys.min(axis=0), keys.max(axis=0)
        rep = np.where(keys == hi, lo, keys)
        rep_id = dom.node_ids(rep)
        dofs = np.unique(rep_id)
        col = np.searchsorted(dofs, rep_id)
        P = sp.csr_matrix((np.ones(N), (np.arange(N), col)), shape=(N, dofs.size))
        return dofs, P
    return np.arange(N), sp.identity(N, format="csr")


def assemble(dom: Domain, potential=None, bc: BoundarySpec | None = None,
             cell_potential=None) -> AssembledOperator:
    bc = bc or BoundarySpec.neumann()
    if bc.kind == "mezincescu" and bc.phi_ref.shape != (dom.spec.n,) * dom.d:
        raise ValueError("phi_ref grid does not match the domain grid")
    mass_full = _mass_full(dom)
    full = _links_matrix(dom) + sp.diags(_outer_chi_diag(dom, bc))
    dofs, P = _reduction(dom, bc)
    base = sp.csr_matrix(P.T @ full @ P)
    base = sp.csr_matrix((base + base.T) * 0.5)
    op = AssembledOperator(base, P.T @ mass_full, dom, bc, dofs, sp.csr_matrix(P),
                           base=base, mass_full=mass_full)
    return op.with_potential(potential, cell_potential)


def form_value(op: AssembledOperator, field_: np.ndarray) -> float:
    f = np.asarray(field_, float)
    if f.shape != (op.dim,):
        raise ValueError(f"field has shape {f.shape}, operator dimension is {op.dim}")
    return float(f @ (op.stiffness @ f))


def norm2(op: AssembledOperator, field_: np.ndarray) -> float:
    """Weighted L^2 norm squared Σ w h^d φ^2."""
    f = np.asarray(field_, float)
    return float(np.sum(op.mass * f * f))


def cell_decompose(op: AssembledOperator) -> list:
    """One operator per cell carrying the Mezincescu term on the whole of ∂C_i."""
    if op.bc is None or op.bc.kind not in ("neumann", "mezincescu"):
        raise ValueError("cell decomposition requires a Neumann or Mezincescu global operator")
    dom = op.domain
    V = op.potential if op.potential is not None else np.zeros(dom.nnodes)
    out = []
    for k, c in enumerate(dom.cells):
        sub = make_cell_union([c], dom.spec)
        g = dom.cell_nodes[k]
        cp = None if op.cell_potential is None else np.asarray(op.cell_potential).reshape(dom.ncells, -1)[k:k + 1]
        cell_op = assemble(sub, V[g], op.bc, cp)
        out.append(replace(cell_op, embedding=g))
    return out


def export_coo(op: AssembledOperator, path, which: str = "stiffness") -> None:
    """Write 'row col value' lines (0-based) of the form or symmetric matrix."""
    A = sp.coo_matrix(op.stiffness if which == "stiffness" else op.matrix)
    with open(path, "w") as fh:
        fh.write(f"# {A.shape[0]} {A.shape[1]} {A.nnz}\n")
        for r, c, v in zip(A.row, A.col, A.data):
            fh.write(f"{r} {c} {v:.17g}\n")
