import numpy as np
import pytest
from hypothesis import given, strategies as st

from alloylab.lattice import GridSpec, make_cube
from alloylab.potential import (CouplingDistribution, PeriodicPotential, SingleSitePotential,
                                alloy_field, configuration, kn_single_site, sample_configuration,
                                split_signs, to_periodic, u_preset, v0_preset)

S32 = GridSpec(32, 1)


def test_bernoulli_degenerate():
    dom = make_cube(7, GridSpec(2, 1))
    om = sample_configuration(CouplingDistribution.bernoulli(0, 1, 1.0), dom, 3, 0)
    assert np.all(om.values == 1.0)


def test_single_point_support_rejected():
    with pytest.raises(ValueError):
        CouplingDistribution.discrete([0.3], [1.0])
    with pytest.raises(ValueError):
        CouplingDistribution.uniform(1.0, 1.0)
    with pytest.raises(ValueError):
        CouplingDistribution.discrete([0, 1], [0.3, 0.3])


@given(seed=st.integers(0, 2 ** 63 - 1), index=st.integers(0, 10 ** 6))
def test_bernoulli_concentration(seed, index):
    # 6-sigma binomial bound (see test_bernoulli_concentration_rate for [0.4, 0.6])
    dom = make_cube(101, GridSpec(2, 1))
    om = sample_configuration(CouplingDistribution.bernoulli(0, 1, 0.5), dom, seed, index)
    assert abs(om.values.mean() - 0.5) <= 6 * 0.5 / np.sqrt(101)


def test_bernoulli_concentration_rate():
    # [0.40, 0.60] cannot hold for literally every seed: the exact binomial tail
    # P(|S/101 - 1/2| > 0.1) is 0.046.  Check the observed rate matches it.
    from scipy.stats import binom
    dom = make_cube(101, GridSpec(2, 1))
    d = CouplingDistribution.bernoulli(0, 1, 0.5)
    means = np.array([sample_configuration(d, dom, s, 0).values.mean() for s in range(2000)])
    p_out = 1 - (binom.cdf(60, 101, 0.5) - binom.cdf(40, 101, 0.5))
    rate = np.mean((means < 0.40) | (means > 0.60))
    assert abs(rate - p_out) < 4 * np.sqrt(p_out * (1 - p_out) / 2000)
    assert abs(means.mean() - 0.5) < 4 * 0.05 / np.sqrt(2000)


@given(seed=st.integers(0, 2 ** 32), index=st.integers(0, 1000))
def test_sampling_reproducible_and_site_keyed(seed, index):
    d = CouplingDistribution.uniform(-1, 2)
    big = make_cube(5, GridSpec(2, 1))
    small = make_cube(3, GridSpec(2, 1))
    a = sample_configuration(d, big, seed, index)
    b = sample_configuration(d, big, seed, index)
    assert np.array_equal(a.values, b.values)
    assert np.all((a.values >= -1) & (a.values <= 2))
    # counter keyed on the site: sub-box draws agree with the big box
    c = sample_configuration(d, small, seed, index)
    for s, v in zip(c.sites, c.values):
        assert a.value(s) == v


def test_distinct_indices_differ():
    dom = make_cube(9, GridSpec(2, 1))
    d = CouplingDistribution.uniform(0, 1)
    assert not np.array_equal(sample_configuration(d, dom, 1, 0).values,
                              sample_configuration(d, dom, 1, 1).values)


def test_gap_probability():
    assert CouplingDistribution.uniform(0, 2).gap_probability(0.1) == pytest.approx(0.1)
    d = CouplingDistribution.discrete([0, 0.5, 1], [0.25, 0.5, 0.25])
    assert d.gap_probability(0.1) == pytest.approx(0.5)
    assert d.gap_probability(0.6) == pytest.approx(1.0)


def test_discrete_sampling_frequencies():
    d = CouplingDistribution.discrete([0, 0.5, 1], [0.25, 0.5, 0.25])
    x = d.from_uniform(np.random.default_rng(0).random(40000))
    for p, w in zip(d.points, d.weights):
        assert abs(np.mean(x == p) - w) < 0.01


def test_kn_zero_amplitude():
    psi, u = kn_single_site(0.0, S32)
    assert np.all(u.samples == 0) and np.all(psi == 1)


def test_kn_sign_change():
    _, u = kn_single_site(0.5, S32)
    h = S32.h
    assert np.maximum(u.samples, 0).sum() * h > 0
    assert np.maximum(-u.samples, 0).sum() * h > 0
    assert u.sign_indefinite


def test_kn_neumann_collar():
    for n in (8, 16, 32):
        psi, _ = kn_single_site(0.5, GridSpec(n, 1))
        # one-sided differences at both faces vanish
        assert psi[1] - psi[0] == 0 and psi[-1] - psi[-2] == 0


def test_kn_rejects_nonpositive_psi():
    with pytest.raises(ValueError):
        kn_single_site(-1.0, S32)


@pytest.mark.parametrize("spec", [GridSpec(16, 1), GridSpec(32, 1), GridSpec(16, 2)])
def test_kn_summation_by_parts(spec):
    psi, u = kn_single_site(0.5, spec)
    per = to_periodic(psi, spec)
    upr = to_periodic(u.samples, spec)
    hd = spec.h ** spec.d
    lhs = np.sum(upr * per ** 2) * hd
    grad2 = sum(np.sum((np.roll(per, -1, axis=j) - per) ** 2) for j in range(spec.d)) * spec.n ** 2 * hd
    assert lhs == pytest.approx(-grad2, rel=1e-10)
    assert lhs < 0


def test_split_signs():
    z = np.zeros(5)
    assert all(np.all(p == 0) for p in split_signs(z))
    up, um = split_signs(np.array([-1.0, 2.0]))
    assert np.array_equal(up, [0, 2]) and np.array_equal(um, [1, 0])
    _, u = kn_single_site(0.5, S32)
    up, um = split_signs(u)
    assert np.array_equal(up - um, u.samples)
    assert np.all(up >= 0) and np.all(um >= 0) and np.all(up * um == 0)


def test_alloy_field_periodic_extension():
    dom = make_cube(3, S32)
    V0 = v0_preset("cosine(2,0.15)", S32)
    f = alloy_field(V0, u_preset("zero", S32), configuration(dom, 0.7), dom)
    x = dom.coords[:, 0]
    assert np.allclose(f, 2 * np.cos(2 * np.pi * (x - 0.15)), atol=1e-12)


def test_alloy_field_constant_coupling():
    dom = make_cube(3, S32)
    _, u = kn_single_site(0.5, S32)
    f = alloy_field(v0_preset("zero", S32), u, configuration(dom, 0.4), dom)
    for k in range(3):
        assert np.allclose(f[dom.cell_nodes[k]], 0.4 * u.samples, atol=0)


def test_alloy_field_middle_cell():
    dom = make_cube(3, S32)
    _, u = kn_single_site(0.5, S32)
    f = alloy_field(v0_preset("zero", S32), u, configuration(dom, [0, 1, 0]), dom)
    mid = dom.cell_nodes[1]
    assert np.array_equal(f[mid], u.samples)
    rest = np.setdiff1d(np.arange(dom.nnodes), mid)
    assert np.all(f[rest] == 0)


def test_alloy_field_missing_site():
    dom = make_cube(3, GridSpec(8, 1))
    _, u = kn_single_site(0.5, GridSpec(8, 1))
    with pytest.raises(KeyError):
        alloy_field(v0_preset("zero", GridSpec(8, 1)), u, {(0,): 1.0}, dom)


@given(i=st.integers(0, 4), delta=st.floats(-3, 3), seed=st.integers(0, 100))
def test_alloy_field_affine(i, delta, seed):
    s = GridSpec(8, 1)
    dom = make_cube(5, s)
    u = u_preset("dipole(20,0.3)", s)
    V0 = v0_preset("cosine(1,0.1)", s)
    om = sample_configuration(CouplingDistribution.uniform(0, 1), dom, seed, 0).values
    om2 = om.copy()
    om2[i] += delta
    diff = alloy_field(V0, u, configuration(dom, om2), dom) - alloy_field(V0, u, configuration(dom, om), dom)
    expect = np.zeros(dom.nnodes)
    expect[dom.cell_nodes[i]] = delta * u.samples
    assert np.allclose(diff, expect, atol=1e-12 * (1 + abs(delta)) * 20)


def test_single_site_must_vanish_on_boundary():
    s = GridSpec(4, 1)
    with pytest.raises(ValueError):
        SingleSitePotential(np.ones(5), s)


def test_periodic_potential_checks():
    s = GridSpec(4, 1)
    with pytest.raises(ValueError):
        PeriodicPotential(np.array([0, 1, 2, 3, 4.0]), s)
    V = v0_preset("cosine(2,0)", s)
    assert V.lower_bound == pytest.approx(-2.0)
