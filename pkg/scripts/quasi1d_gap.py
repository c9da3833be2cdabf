#!/usr/bin/env python3
"""Gap λ_min(Ω_0M) - E0 against column length M, with the inverse-square fit."""
import argparse

from alloylab.lattice import GridSpec
from alloylab.quasi1d import Quasi1DInstance, gse_family, inverse_square_fit
from alloylab.spectral_min import preset_model

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("--model", default="kn")
ap.add_argument("--n", type=int, default=8)
ap.add_argument("--m", type=int, default=3)
ap.add_argument("--W0", type=float, default=0.5)
ap.add_argument("--Mmax", type=int, default=41)
args = ap.parse_args()

inst = Quasi1DInstance(preset_model(args.model, GridSpec(args.n, 1)), args.m, "a", (args.W0,))
fam = gse_family(inst, range(3, args.Mmax + 1, 2))
for M, g in zip(fam.Ms, fam.gaps):
    print(f"M={M:3d}  gap={g:.6e}")
fit = inverse_square_fit(fam)
print(f"slope {fit.slope:.3f} ± {fit.slope_stderr:.3f}, C_fit {fit.C_fit:.4f}, ok={fit.ok}")
