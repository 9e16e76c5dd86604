"""Var(V^T) of the untruncated forward exponent against the horizon T.

Without truncation the weights degrade as T grows; this prints the variance,
the ESS fraction and the normalisation mean at each horizon so the point
where the truncation level starts to matter can be read off.

    python3 scripts/exponent_variance.py --model ks --paths 2000
"""

import argparse
import math

import numpy as np

from girsanovlab.girsanov import ess, weighted_ensemble
from girsanovlab.spectral import ModelSpec, basis


def main():
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--model", choices=["ks", "ns2"], default="ks")
    p.add_argument("--paths", type=int, default=2000)
    p.add_argument("--dt", type=float, default=1 / 256)
    p.add_argument("--horizons", type=float, nargs="+", default=[0.125, 0.25, 0.5, 1.0, 2.0])
    p.add_argument("--seed", type=int, default=0)
    a = p.parse_args()
    spec = ModelSpec.ks() if a.model == "ks" else ModelSpec.fracns(d=2)
    print(f"{'T':>8} {'Var V':>12} {'E e^V':>10} {'se':>8} {'ESS/M':>8}")
    for T in a.horizons:
        ens = weighted_ensemble(spec, np.zeros(basis(spec).ndof), T, a.dt, a.paths, a.seed)
        w = ens.weights
        print(f"{T:8.4g} {np.var(ens.V, ddof=1):12.5g} {w.mean():10.5f} "
              f"{w.std(ddof=1) / math.sqrt(a.paths):8.4f} {ess(w) / a.paths:8.3f}")


if __name__ == "__main__":
    main()
