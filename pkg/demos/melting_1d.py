"""One-phase melting against the similarity solution.

Unit heating at the left wall, front starting from the self-similar
profile at t0 = 0.25.  The computed front should track s(t) = 2*lam*sqrt(t)
to a few parts in 1e6 at nx = 200.
"""

import numpy as np

from meltfront import StefanSpec1D, similarity_oracle, solve_stefan, write_front_csv

sim = similarity_oracle(1.0)
t0 = 0.25
b = float(sim.front(t0))
print(f"lambda = {sim.lam:.12f}, starting front b = {b:.6f}")

spec = StefanSpec1D(
    k1=1.0,
    b=b,
    duration=0.75,
    boundary=1.0,
    initial=lambda x: sim.temperature(x, t0),
    nx=200,
    t0=t0,
)
result = solve_stefan(spec)

times = result.front.times
pos = result.front.positions
exact = sim.front(times)

print(f"{'t':>6} {'s(t)':>12} {'exact':>12} {'rel err':>10}")
for t_mark in (0.25, 0.4, 0.55, 0.7, 0.85, 1.0):
    k = int(np.argmin(np.abs(times - t_mark)))
    rel = abs(pos[k] - exact[k]) / exact[k]
    print(f"{times[k]:6.3f} {pos[k]:12.8f} {exact[k]:12.8f} {rel:10.2e}")

print("steps:", result.report["steps"])
print("max principle violations:", result.report["max_principle_violations"])

write_front_csv(result.front, "melting_1d_front.csv")
print("front written to melting_1d_front.csv")
