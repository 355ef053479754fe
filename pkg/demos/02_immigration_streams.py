"""Tour of the immigration families and their Laplace functionals.

For each stream we draw a few thousand patterns on [0, T] and compare the
empirical value of E exp(-sum f(epochs)) against the deterministic or Monte
Carlo evaluator for that family.
"""
import math

import numpy as np

from branchimm import kernels as kern
from branchimm import point_processes as pp
from branchimm.laplace import (TestFunction, empirical_laplace, laplace_cox_mc,
                               laplace_dpp_fredholm, laplace_dpp_series, laplace_fpp_mc,
                               laplace_poisson)

T = 4.0
tf = TestFunction.from_f(lambda x: 0.5 * np.exp(-x / 2), T)
rng = np.random.default_rng(2024)
n = 4000


def sampled(draw):
    pats = [draw(rng) for _ in range(n)]
    counts = np.array([len(p) for p in pats])
    return empirical_laplace(tf, pats), counts


rows = []

est, c = sampled(lambda r: pp.sample_poisson(1.0, T, r))
rows.append(("poisson rate 1", laplace_poisson(tf, 1.0).value, est, c))

k = kern.GinibreGaussian(1.0)
est, c = sampled(lambda r: pp.sample_dpp(k, T, r))
series = laplace_dpp_series(tf, k)
fred = laplace_dpp_fredholm(tf, k)
rows.append(("ginibre scale 1", fred.value, est, c))
print(f"ginibre series {series.value:.10f} (tail {series.error:.1e}), "
      f"fredholm {fred.value:.10f}")

k3 = kern.spectral_cosine([0.9, 0.6, 0.3], T)
est, c = sampled(lambda r: pp.sample_dpp(k3, T, r))
rows.append(("rank-3 spectral", laplace_dpp_fredholm(tf, k3).value, est, c))

cox = pp.Cox(pp.ShotNoise(1.0, 1.5))
est, c = sampled(lambda r: pp.sample_cox(cox, T, r))
rows.append(("shot-noise cox", laplace_cox_mc(tf, cox, 20_000, rng).value, est, c))

est, c = sampled(lambda r: pp.sample_fpp(0.7, 1.0, T, r))
rows.append(("fractional 0.7", laplace_fpp_mc(tf, 0.7, 1.0, 20_000, rng).value, est, c))

print(f"\n{'stream':<16} {'mean N':>7} {'var N':>7} {'evaluator':>10} {'empirical':>10} {'se':>7}")
for name, ref, est, c in rows:
    print(f"{name:<16} {c.mean():7.3f} {c.var():7.3f} {ref:10.6f} {est.value:10.6f}"
          f" {est.std_error:7.4f}")
print("\nDeterminantal streams are under-dispersed (var < mean); Cox and fractional"
      " streams are over-dispersed.")
print(f"The rank-3 kernel's mean count is the eigenvalue sum {sum(k3.eigenvalues):.1f};"
      " a projection kernel would always give exactly 3 points.")
