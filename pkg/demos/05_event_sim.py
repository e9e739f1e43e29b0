"""Check the effective-rate formula against simulated arrivals."""

import numpy as np

from nnshift import KPNNS, LRNNS, build_knn_graph, effective_rates, event_simulation, sample_points

ps = sample_points(500, 1, seed=21)
res = event_simulation(ps, KPNNS(1, 0.6), lam=1.0, mu=1.0, t=2000.0, seed=22)
print("arrivals", res.arrivals.sum(), "joins", res.joins.sum())
print("max |z| over servers:", round(float(np.abs(res.z_scores).max()), 2))

# Left/right shifting on a line: interior servers keep rate lam but the two
# end servers do not unless ell == r.
s = LRNNS(0.2, 0.5)
rates = effective_rates(build_knn_graph(ps, 1), s, 1.0)
order = np.argsort(ps.points[:, 0])
print("left end, second, right end:", rates[order[0]], rates[order[1]], rates[order[-1]])
res = event_simulation(ps, s, 1.0, 1.0, 2000.0, seed=23)
print("simulated at the ends:", res.empirical_rate[order[0]], res.empirical_rate[order[-1]])
