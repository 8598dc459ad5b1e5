# A particle launched from the wall rises, slows in the logarithmic field and
# falls back. The closed-form flow gives the return time directly; compare it
# against the empirical mean over many wall launches.

import numpy as np

from logvlasov.flow import PotentialParams, PhaseState, boundary_flight_time, exit_time, flow
from logvlasov.boundary import sample_outgoing_batch

P = PotentialParams()          # ln a = 1/8
print("A =", P.big_a, " c_m =", P.c_m)

s = PhaseState((0.2, 0.7), 0.0, (0.3, -0.1, 2.0))
ev = exit_time(P, s, "forward")
print("launch at vertical speed 2 returns after", ev.duration, "at", ev.footpoint)

# apex: vertical speed vanishes halfway through the flight
top = flow(P, s, 0.5 * ev.duration)
print("apex height", top.x3, "expected", np.exp(0.25) - 1)

for w in (0.1, 1.0, 3.0, 6.0):
    print(f"|v3| = {w:4.1f}  t_b = {boundary_flight_time(P, w):.6g}")

v = sample_outgoing_batch(10**6, seed=0)
tb = boundary_flight_time(P, v[:, 2])
print("mean flight time", tb.mean(), "vs 1/c_m =", 1 / P.c_m)
