#!/usr/bin/env python3
"""Finite-volume IDS near the spectral edge and the Lifshitz slope fit for one preset."""
import argparse

import numpy as np

from alloylab.ids import estimate_ids, lifshitz_fit
from alloylab.lattice import GridSpec
from alloylab.spectral_min import classify, preset_model

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("--model", default="positive")
ap.add_argument("--n", type=int, default=8)
ap.add_argument("--L", type=int, default=15)
ap.add_argument("--R", type=int, default=200)
ap.add_argument("--bc", default="mezincescu")
ap.add_argument("--seed", type=int, default=0)
ap.add_argument("--workers", type=int, default=1)
args = ap.parse_args()

m = preset_model(args.model, GridSpec(args.n, 1))
E0 = classify(m).E0_estimate
E = E0 + np.geomspace(0.05, 10, 25)
curve = estimate_ids(m, args.L, args.bc, E, args.R, args.seed, args.workers)
for e, nbar, se in zip(curve.energies, curve.mean_counts, curve.stderr):
    print(f"{e - E0:10.4f}  {nbar:.5f} ± {se:.5f}")
fit = lifshitz_fit(curve, E0)
print(f"E0 = {E0:.6f}; slope of ln|ln N| vs ln(E-E0): {fit.slope} ({fit.reason or 'ok'})")
