"""Fluctuations of the overload fraction across random placements.

In one dimension N * Var(O_N) tends to 19/240 and O_N is asymptotically
normal; this prints the sample moments and a text histogram.
"""

from nnshift import ExperimentConfig, KPNNS, clt_check, run_replications

cfg = ExperimentConfig(d=1, k=1, n_nodes=1000, n_reps=1000, strategy=KPNNS(1, 1.0), master_seed=11)
s = run_replications(cfg)
diag = clt_check(s, 19 / 240)
print(f"mean {s.mean:.5f}  N*Var {s.scaled_variance:.5f} (limit {19 / 240:.5f})")
print(f"skewness {diag.skewness:+.3f} (band {diag.skew_band:.3f}), excess kurtosis {diag.excess_kurtosis:+.3f} (band {diag.kurtosis_band:.3f})")

counts = s.overload_counts
lo, hi = counts.min(), counts.max()
edges = range(lo, hi + 1, max(1, (hi - lo) // 20))
for a in edges:
    n = int(((counts >= a) & (counts < a + max(1, (hi - lo) // 20))).sum())
    print(f"{a / cfg.n_nodes:6.3f} {'#' * (n // 4)}")
