"""Spectral lab for random alloy-type Schrödinger operators with sign-indefinite single-site potentials.

Modules: lattice (grids and domains), potential (periodic/single-site potentials, couplings),
operator (form-based assembly), eigen (eigensolvers, inertia counting), spectral_min
(reference ground states and the spectral minimum), ids (density of states and tail bounds),
quasi1d (quasi-one-dimensional estimates), cli (experiment runner).
"""

__version__ = "0.1.0"
