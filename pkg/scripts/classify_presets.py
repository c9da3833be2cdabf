#!/usr/bin/env python3
"""Spectral-minimum case for each preset model, with the Monte Carlo brute-force cross-check."""
import argparse

from alloylab.lattice import GridSpec
from alloylab.spectral_min import PRESETS, brute_force_e0, classify, preset_model

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("--n", type=int, default=16)
ap.add_argument("--L", type=int, default=5)
ap.add_argument("--R", type=int, default=64)
ap.add_argument("--seed", type=int, default=0)
args = ap.parse_args()

spec = GridSpec(args.n, 1)
print(f"{'model':10s} {'case':6s} {'E0 lower':>12s} {'E0 upper':>12s} {'brute force':>12s}")
for name in PRESETS:
    m = preset_model(name, spec)
    r = classify(m)
    bf = brute_force_e0(m, args.L, args.R, args.seed)
    lo, hi = r.E0_bounds
    print(f"{name:10s} {r.case:6s} {lo:12.6f} {hi:12.6f} {bf.e0:12.6f}")
