"""Discretized domains built from unit cells C_i = i + (-1/2, 1/2)^d.

Grid nodes sit at integer multiples of h = 1/n with n even, so every cell face
x_j = m + 1/2 carries nodes.  A node is addressed by its integer key K with
x = K / n; the nodes of cell i are the keys n*i + j, j in [-n/2, n/2]^d.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    n: int
    d: int = 1

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2 or self.n % 2:
            raise ValueError(f"n must be an even integer >= 2 (cell faces must carry nodes), got {self.n}")
        if self.d not in (1, 2, 3):
            raise ValueError(f"d must be 1, 2 or 3, got {self.d}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def half(self) -> int:
        return self.n // 2


@dataclass(frozen=True, eq=False)
class CellTemplate:
    """Local quadrature data for one closed unit cell, nodes in C order."""

    offsets: np.ndarray        # (P, d) local keys in [-n/2, n/2]
    node_weight: np.ndarray    # (P,) tensor trapezoid weights
    link_a: np.ndarray
    link_b: np.ndarray
    link_axis: np.ndarray
    link_weight: np.ndarray    # trapezoid weight of the link's transverse position
    face_node: np.ndarray
    face_axis: np.ndarray
    face_sign: np.ndarray
    face_weight: np.ndarray    # trapezoid weight within the (d-1)-face


@lru_cache(maxsize=None)
def cell_template(spec: GridSpec) -> CellTemplate:
    n, d, hn = spec.n, spec.d, spec.half
    offsets = np.array(list(itertools.product(range(-hn, hn + 1), repeat=d)), dtype=np.int64)
    on_bd = np.abs(offsets) == hn
    half_w = np.where(on_bd, 0.5, 1.0)
    node_weight = half_w.prod(axis=1)

    strides = [(n + 1) ** (d - 1 - j) for j in range(d)]
    la, lb, lax, lw = [], [], [], []
    fn, fax, fs, fw = [], [], [], []
    idx = np.arange(len(offsets))
    for j in range(d):
        others = [k for k in range(d) if k != j]
        tw = half_w[:, others].prod(axis=1) if others else np.ones(len(offsets))
        start = offsets[:, j] < hn
        la.append(idx[start])
        lb.append(idx[start] + strides[j])
        lax.append(np.full(start.sum(), j))
        lw.append(tw[start])
        for s in (-1, 1):
            on = offsets[:, j] == s * hn
            fn.append(idx[on])
            fax.append(np.full(on.sum(), j))
            fs.append(np.full(on.sum(), s))
            fw.append(tw[on])
    cat = np.concatenate
    return CellTemplate(offsets, node_weight, cat(la), cat(lb), cat(lax), cat(lw),
                        cat(fn), cat(fax), cat(fs), cat(fw))


@dataclass(frozen=True)
class Domain:
    spec: GridSpec
    cells: tuple
    kind: str = "union"
    params: tuple = ()

    def __post_init__(self):
        if not self.cells:
            raise ValueError("domain needs at least one cell")
        cells = tuple(sorted({tuple(int(x) for x in c) for c in self.cells}))
        if any(len(c) != self.spec.d for c in cells):
            raise ValueError("cell index dimension does not match spec.d")
        object.__setattr__(self, "cells", cells)
        if not _edge_connected(cells):
            raise ValueError("cells must form an edge-connected set")

    @property
    def d(self) -> int:
        return self.spec.d

    @property
    def ncells(self) -> int:
        return len(self.cells)

    @cached_property
    def cell_array(self) -> np.ndarray:
        return np.array(self.cells, dtype=np.int64).reshape(-1, self.d)

    @cached_property
    def cell_set(self) -> frozenset:
        return frozenset(self.cells)

    @cached_property
    def cell_pos(self) -> dict:
        return {c: k for k, c in enumerate(self.cells)}

    @cached_property
    def nodes(self) -> np.ndarray:
        """(N, d) integer node keys, lexicographically sorted."""
        t = cell_template(self.spec)
        keys = (self.cell_array[:, None, :] * self.spec.n + t.offsets[None, :, :]).reshape(-1, self.d)
        return np.unique(keys, axis=0)

    @property
    def nnodes(self) -> int:
        return len(self.nodes)

    @cached_property
    def coords(self) -> np.ndarray:
        return self.nodes / self.spec.n

    @cached_property
    def _lookup(self):
        lo = self.nodes.min(axis=0)
        shape = self.nodes.max(axis=0) - lo + 1
        table = np.full(int(np.prod(shape)), -1, dtype=np.int64)
        table[np.ravel_multi_index(tuple((self.nodes - lo).T), shape)] = np.arange(self.nnodes)
        return lo, tuple(int(s) for s in shape), table

    def node_ids(self, keys) -> np.ndarray:
        """Global ids of integer node keys (shape (..., d)); -1 where absent."""
        keys = np.asarray(keys, dtype=np.int64)
        lo, shape, table = self._lookup
        rel = keys - lo
        ok = np.all((rel >= 0) & (rel < np.array(shape)), axis=-1)
        out = np.full(keys.shape[:-1], -1, dtype=np.int64)
        if ok.any():
            out[ok] = table[np.ravel_multi_index(tuple(rel[ok].T), shape)]
        return out

    @cached_property
    def cell_nodes(self) -> np.ndarray:
        """(ncells, P) global node ids of each cell's local grid (C order)."""
        t = cell_template(self.spec)
        keys = self.cell_array[:, None, :] * self.spec.n + t.offsets[None, :, :]
        return self.node_ids(keys)

    @cached_property
    def is_box(self) -> bool:
        ext = self.cell_array.max(axis=0) - self.cell_array.min(axis=0) + 1
        return int(np.prod(ext)) == self.ncells

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        return np.unique(boundary_faces(self).node)

    def has_cells(self, cells: np.ndarray) -> np.ndarray:
        return np.array([tuple(c) in self.cell_set for c in np.asarray(cells).reshape(-1, self.d)], dtype=bool)

    def cells_along_axis(self) -> np.ndarray:
        """Cell coordinates along the last axis (quasi-1D domains and segments)."""
        return self.cell_array[:, -1]


def _edge_connected(cells) -> bool:
    cs = set(cells)
    start = cells[0]
    seen = {start}
    stack = [start]
    d = len(start)
    while stack:
        c = stack.pop()
        for j in range(d):
            for s in (-1, 1):
                nb = c[:j] + (c[j] + s,) + c[j + 1:]
                if nb in cs and nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
    return len(seen) == len(cs)


@dataclass(frozen=True, eq=False)
class FaceSet:
    """Outer boundary faces and internal interfaces of a domain.

    Outer entries are unique per (node, axis, sign); corner nodes appear once per
    outward axis.  Interfaces are listed once per adjacent cell pair; the cell
    `iface_minus` sees outward normal +e_axis, `iface_plus` sees -e_axis.
    """

    node: np.ndarray
    axis: np.ndarray
    sign: np.ndarray
    weight: np.ndarray
    iface_node: np.ndarray
    iface_axis: np.ndarray
    iface_minus: np.ndarray
    iface_plus: np.ndarray
    iface_weight: np.ndarray

    @property
    def faces(self) -> list:
        return list(zip(self.node.tolist(), self.axis.tolist(), self.sign.tolist()))

    @property
    def interface_faces(self) -> list:
        """(node, axis, (sign_minus, sign_plus), (cell_minus, cell_plus)) records."""
        return [(int(k), int(a), (1, -1), (int(c1), int(c2)))
                for k, a, c1, c2 in zip(self.iface_node, self.iface_axis, self.iface_minus, self.iface_plus)]


@lru_cache(maxsize=256)
def boundary_faces(dom: Domain) -> FaceSet:
    t = cell_template(dom.spec)
    ca = dom.cell_array
    acc: dict = {}
    inode, iax, im, ip, iw = [], [], [], [], []
    for j in range(dom.d):
        for s in (-1, 1):
            sel = (t.face_axis == j) & (t.face_sign == s)
            local = t.face_node[sel]
            w = t.face_weight[sel]
            nb = ca.copy()
            nb[:, j] += s
            present = dom.has_cells(nb)
            for k in range(dom.ncells):
                gids = dom.cell_nodes[k, local]
                if not present[k]:
                    for g, ww in zip(gids.tolist(), w.tolist()):
                        key = (g, j, s)
                        acc[key] = acc.get(key, 0.0) + ww
                elif s == 1:
                    other = dom.cell_pos[tuple(nb[k])]
                    inode.append(gids)
                    iax.append(np.full(len(gids), j))
                    im.append(np.full(len(gids), k))
                    ip.append(np.full(len(gids), other))
                    iw.append(w)
    keys = sorted(acc)
    arr = np.array(keys, dtype=np.int64).reshape(-1, 3)
    cat = (lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dtype=dt))
    return FaceSet(arr[:, 0], arr[:, 1], arr[:, 2], np.array([acc[k] for k in keys]),
                   cat(inode, np.int64), cat(iax, np.int64), cat(im, np.int64),
                   cat(ip, np.int64), cat(iw, float))


def _check_odd(name: str, v: int, minimum: int = 1):
    if int(v) != v or v < minimum or v % 2 == 0:
        raise ValueError(f"{name} must be an odd integer >= {minimum}, got {v}")


def make_cube(L: int, spec: GridSpec) -> Domain:
    """Λ_L = (-L/2, L/2)^d for odd L."""
    _check_odd("L", L)
    r = range(-(L - 1) // 2, (L - 1) // 2 + 1)
    return Domain(spec, tuple(itertools.product(r, repeat=spec.d)), "cube", (L,))


def make_segment(q, L: int, spec: GridSpec) -> Domain:
    """Column q + (-1/2,1/2)^{d-1} x (-L/2, L/2) along the last axis."""
    _check_odd("L", L)
    q = tuple(int(x) for x in np.atleast_1d(q)) if spec.d > 1 else ()
    if len(q) != spec.d - 1:
        raise ValueError("q must have d-1 components")
    cells = tuple(q + (r,) for r in range(-(L - 1) // 2, (L - 1) // 2 + 1))
    return Domain(spec, cells, "segment", (q, L))


def make_column(lo: int, hi: int, spec: GridSpec, q=None) -> Domain:
    """Cells (q, r) for lo <= r <= hi: the strip (lo - 1/2, hi + 1/2) along the last axis."""
    if hi < lo:
        raise ValueError("empty column")
    q = tuple(q) if q is not None else (0,) * (spec.d - 1)
    return Domain(spec, tuple(q + (r,) for r in range(lo, hi + 1)), "union", ("column", lo, hi))


def make_quasi1d(m: int, M: int, orientation: str, spec: GridSpec) -> Domain:
    """Ω_{0M}: Ω_0 ((m-1)/2 cells) stacked against Ω_M ((M+1)/2 cells) along the last axis.

    below: Ω_0 = (-m/2, -1/2), Ω_M = (-1/2, M/2); above is the mirror image.
    """
    _check_odd("m", m, 3)
    _check_odd("M", M, 1)
    lo0, hi0, loM, hiM = quasi1d_ranges(m, M, orientation)
    z = (0,) * (spec.d - 1)
    cells = tuple(z + (r,) for r in range(min(lo0, loM), max(hi0, hiM) + 1))
    return Domain(spec, cells, "quasi1d", (m, M, orientation))


def quasi1d_ranges(m: int, M: int, orientation: str):
    """(lo, hi) cell ranges of Ω_0 and Ω_M along the last axis."""
    k0, kM = (m - 1) // 2, (M + 1) // 2
    if orientation == "below":
        return -k0, -1, 0, kM - 1
    if orientation == "above":
        return 1, k0, -(kM - 1), 0
    raise ValueError(f"orientation must be 'below' or 'above', got {orientation!r}")


def make_cell_union(cells, spec: GridSpec) -> Domain:
    return Domain(spec, tuple(tuple(c) for c in cells), "union", ())
