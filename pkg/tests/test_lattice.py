import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from alloylab.lattice import (GridSpec, boundary_faces, make_cell_union, make_cube, make_quasi1d,
                              make_segment)


def span(dom):
    x = dom.coords[:, -1]
    return x.min(), x.max()


def test_gridspec_validation():
    assert GridSpec(2, 1).h == 0.5
    for bad in [(3, 1), (0, 1), (1, 1), (4, 4), (4, 0)]:
        with pytest.raises(ValueError):
            GridSpec(*bad)


def test_cube_single_cell():
    dom = make_cube(1, GridSpec(4, 1))
    assert dom.ncells == 1 and dom.nnodes == 5
    assert span(dom) == (-0.5, 0.5)


def test_cube_2d_node_count():
    dom = make_cube(3, GridSpec(2, 2))
    assert dom.ncells == 9
    assert dom.nnodes == 49


@pytest.mark.parametrize("L", [0, 2, -1, 4])
def test_cube_rejects_even(L):
    with pytest.raises(ValueError):
        make_cube(L, GridSpec(2, 1))


@given(L=st.sampled_from([1, 3, 5, 7]), n=st.sampled_from([2, 4, 6]), d=st.sampled_from([1, 2]))
def test_cube_counts(L, n, d):
    dom = make_cube(L, GridSpec(n, d))
    assert dom.ncells == L ** d
    assert dom.nnodes == (L * n + 1) ** d
    # every cell face plane carries nodes
    assert np.all(np.isin(np.arange(-L, L + 1, 2) / 2, dom.coords[:, 0]))


@pytest.mark.parametrize("m,M,orient,lo,hi", [
    (3, 1, "below", -1.5, 0.5),
    (5, 3, "below", -2.5, 1.5),
    (3, 1, "above", -0.5, 1.5),
])
def test_quasi1d_examples(m, M, orient, lo, hi):
    dom = make_quasi1d(m, M, orient, GridSpec(4, 1))
    assert dom.ncells == (m - 1) // 2 + (M + 1) // 2
    assert span(dom) == (lo, hi)


def test_quasi1d_rejects_even():
    with pytest.raises(ValueError):
        make_quasi1d(4, 1, "below", GridSpec(4, 1))
    with pytest.raises(ValueError):
        make_quasi1d(3, 2, "below", GridSpec(4, 1))
    with pytest.raises(ValueError):
        make_quasi1d(1, 1, "below", GridSpec(4, 1))


@given(m=st.sampled_from([3, 5, 7]), M=st.sampled_from([1, 3, 5, 9]))
def test_quasi1d_mirror(m, M):
    s = GridSpec(4, 2)
    lo = make_quasi1d(m, M, "below", s).cell_array
    hi = make_quasi1d(m, M, "above", s).cell_array
    assert sorted(map(tuple, lo * [1, -1])) == sorted(map(tuple, hi))


def test_disconnected_rejected():
    with pytest.raises(ValueError):
        make_cell_union([(0,), (2,)], GridSpec(2, 1))
    with pytest.raises(ValueError):   # diagonal neighbours are not edge-connected
        make_cell_union([(0, 0), (1, 1)], GridSpec(2, 2))


def test_faces_single_cell_1d():
    dom = make_cube(1, GridSpec(2, 1))
    fs = boundary_faces(dom)
    assert sorted(dom.coords[fs.node, 0] * fs.sign) == [0.5, 0.5]
    assert fs.interface_faces == []


def test_faces_three_cells_1d():
    dom = make_cube(3, GridSpec(2, 1))
    fs = boundary_faces(dom)
    assert sorted(dom.coords[fs.node, 0]) == [-1.5, 1.5]
    assert sorted(dom.coords[fs.iface_node, 0]) == [-0.5, 0.5]


def _brute_interfaces(dom):
    """Independent enumeration: shared closed-cell nodes of each adjacent pair."""
    n = dom.spec.n
    out = []
    for c1, c2 in itertools.combinations(dom.cells, 2):
        diff = np.subtract(c2, c1)
        if np.abs(diff).sum() != 1:
            continue
        axis = int(np.flatnonzero(diff)[0])
        if diff[axis] < 0:
            c1, c2 = c2, c1
        k1 = {tuple(np.multiply(c1, n) + o) for o in itertools.product(range(-n // 2, n // 2 + 1), repeat=dom.d)}
        k2 = {tuple(np.multiply(c2, n) + o) for o in itertools.product(range(-n // 2, n // 2 + 1), repeat=dom.d)}
        for key in k1 & k2:
            out.append((key, axis, dom.cell_pos[c1], dom.cell_pos[c2]))
    return sorted(out)


def test_interfaces_2d_exhaustive():
    dom = make_cube(3, GridSpec(2, 2))
    fs = boundary_faces(dom)
    got = sorted((tuple(dom.nodes[k]), int(a), int(m), int(p))
                 for k, a, m, p in zip(fs.iface_node, fs.iface_axis, fs.iface_minus, fs.iface_plus))
    assert got == _brute_interfaces(dom)
    # 12 adjacent pairs, 3 shared nodes each
    assert len(got) == 36
    for rec in fs.interface_faces:
        assert rec[2] == (1, -1)


@given(L=st.sampled_from([1, 3, 5]), n=st.sampled_from([2, 4]), d=st.sampled_from([1, 2]))
def test_boundary_nodes_are_topological_boundary(L, n, d):
    dom = make_cube(L, GridSpec(n, d))
    fs = boundary_faces(dom)
    on_bd = np.any(np.abs(dom.coords) == L / 2, axis=1)
    assert set(np.flatnonzero(on_bd)) == set(fs.node.tolist())
    # corner nodes appear once per outward axis
    per_node = np.bincount(fs.node, minlength=dom.nnodes)
    nbd_axes = (np.abs(dom.coords) == L / 2).sum(axis=1)
    assert np.array_equal(per_node, nbd_axes)
    assert (fs.iface_node.size > 0) == (dom.ncells >= 2)


def test_segment_and_union():
    s = GridSpec(2, 2)
    seg = make_segment((1,), 3, s)
    assert seg.cells == ((1, -1), (1, 0), (1, 1))
    L = make_cell_union([(0, 0), (1, 0), (1, 1)], s)
    assert L.ncells == 3 and not L.is_box
    fs = boundary_faces(L)
    assert np.all(fs.weight > 0)
