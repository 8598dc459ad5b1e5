# The stationary state sits in the wall's field; sampled particles keep their
# height and speed statistics however long they are run.

import numpy as np

from logvlasov import rng
from logvlasov.engine import advance_population, birth_population
from logvlasov.flow import PotentialParams

P = PotentialParams()
n = 200_000
pop = birth_population(P, n, 1, rng.TAG_STATIONARY)

def stats(pop):
    phi = np.log1p(pop.x[:, 2]) / P.ln_a
    return phi.mean(), np.sum(pop.v ** 2, axis=1).mean()

print("t =  0  E[Phi] = %.4f  E|v|^2 = %.4f" % stats(pop))
t = 0.0
for dt in (5.0, 5.0, 10.0):
    advance_population(P, pop, dt, seed=1)
    t += dt
    print("t = %2g  E[Phi] = %.4f  E|v|^2 = %.4f" % ((t,) + stats(pop)))
print("exact    E[Phi] = %.4f  E|v|^2 = 3" % (P.big_a / (P.big_a - 1)))
print("mean wall contacts per particle", pop.events.mean())
