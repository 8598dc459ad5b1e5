# Two clouds of equal mass, one lifted above height 1, relax towards each
# other. The histogram L1 distance between them collapses within a few time
# units, after which the estimate sits at the Monte Carlo noise floor.

from logvlasov.engine import HistogramSpec, estimate_l1, evolve, init_fluctuation
from logvlasov.flow import PotentialParams

P = PotentialParams()
spec = HistogramSpec.default(P)
ens = init_fluctuation(P, 200_000, seed=0)

print("    t      L1       se   floor")
for t in (0, 0.25, 0.5, 1, 2, 4, 32):
    evolve(P, ens, float(t))
    est = estimate_l1(P, ens, spec, n_boot=16)
    print(f"{t:5g}  {est.value:.4f}  {est.se:.4f}  {est.noise_floor:.4f}")
