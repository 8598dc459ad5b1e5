# How much mass is guaranteed to come back from the wall within T0, and how
# unlikely it is to bounce k times quickly.

from logvlasov.config import RunConfig
from logvlasov.cycles import SurvivalConfig, flight_counts, survival_curve
from logvlasov.diagnostics import minorant_l1_norm
from logvlasov.flow import PotentialParams

P = PotentialParams()
for t0 in (24.0, 32.0, 48.0):
    print(f"T0 = {t0:g}: ||m|| = {minorant_l1_norm(P, t0):.3e}  bound T0^-11/4 = {t0 ** -11 / 4:.3e}")

sc = SurvivalConfig.measured(P, RunConfig().survival_delta)
for t in (5.0, 10.0):
    k = sc.k_of_t(t)
    counts = flight_counts(P, t, k, 10**6, seed=0)
    p, se = survival_curve(counts, [20, 40, k])
    print(f"t = {t:g}: P(k flights before t) for k = 20, 40, {k}:", p)
