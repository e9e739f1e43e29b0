"""Who gets overloaded when customers shift to a nearby server.

Customers arrive at rate lam everywhere; with probability p they walk to
one of the k nearest other servers. A server is overloaded once its
effective arrival rate exceeds its service rate mu.
"""

import numpy as np

from nnshift import KPNNS, build_knn_graph, classify_overload, effective_rates, sample_points, theta

ps = sample_points(2000, 2, seed=3)
g = build_knn_graph(ps, k=1)

for p in (1.0, 0.5, 0.25):
    rep = classify_overload(effective_rates(g, KPNNS(1, p), lam=1.0), mu=1.0, lam=1.0)
    print(f"p={p:<4g} overloaded fraction {rep.overload_fraction:.4f}  {rep.tally()}")

# At lam = mu the threshold is k, whatever p is, so the fraction above does
# not move.  Lowering the arrival rate raises the threshold.
for lam in (1.0, 0.8, 0.6, 0.4):
    th = theta(1, 1.0, lam, 1.0)
    rep = classify_overload(effective_rates(g, KPNNS(1, 1.0), lam), mu=1.0)
    print(f"lam={lam:<4g} theta={th:5.2f} overloaded {rep.overload_fraction:.4f}")

# Shifting only moves customers around, it does not create them.
print("total rate conserved:", np.isclose(effective_rates(g, KPNNS(1, 0.7), 1.0).sum(), ps.n))
