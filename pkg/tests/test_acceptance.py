"""Acceptance criteria, one test per criterion.

Each test records a ``[PASS]``/``[FAIL]`` line that is printed in the
terminal summary, then asserts the same condition.
"""

import math

import numpy as np
import pytest

from nnshift import asymptotics
from nnshift.asymptotics import alpha, empirical_constants, known_constants, mc_table, union_integral
from nnshift.cli import main
from nnshift.experiment import ExperimentConfig, event_simulation, run_replications, small_n_expectation
from nnshift.geometry import sample_points
from nnshift.nngraph import (
    build_knn_graph,
    counts_from_stars,
    in_degree_counts,
    mutual_pairs,
    star_counts,
    weak_components,
)
from nnshift.strategy import KPNNS, LRNNS, overload_via_indegree, overload_via_stars

pytestmark = pytest.mark.acceptance

P_VALUES = (1.0, 0.75, 0.5, 0.25)


@pytest.fixture(scope="module")
def runs_1d():
    return {
        p: run_replications(ExperimentConfig(n_nodes=1000, n_reps=1000, strategy=KPNNS(1, p), master_seed=2024))
        for p in P_VALUES
    }


def test_mean_overload_1d(runs_1d, criterion):
    means = {p: s.mean for p, s in runs_1d.items()}
    ok = all(abs(m - 0.25) <= 0.005 for m in means.values())
    detail = ", ".join(f"p={p:g}: {m:.5f}" for p, m in means.items()) + " (target 0.25 +- 0.005)"
    assert criterion("1 mean overload d=1", ok, detail)


def test_clt_variance_1d(runs_1d, criterion):
    sigma2 = 19 / 240
    n = 1000
    skew_band, kurt_band = 5 * math.sqrt(6 / n), 5 * math.sqrt(24 / n)
    parts, ok = [], True
    for p, s in runs_1d.items():
        rel = abs(s.scaled_variance - sigma2) / sigma2
        good = rel <= 0.15 and abs(s.skewness) <= skew_band and abs(s.excess_kurtosis) <= kurt_band
        ok &= good
        parts.append(f"p={p:g}: N*Var={s.scaled_variance:.5f} ({rel:+.1%}), skew={s.skewness:+.3f}, kurt={s.excess_kurtosis:+.3f}")
    detail = "; ".join(parts) + f" (target {sigma2:.5f} +- 15%, bands {skew_band:.3f}/{kurt_band:.3f})"
    assert criterion("2 CLT variance d=1", ok, detail)


def test_limit_2d(criterion):
    s = run_replications(ExperimentConfig(d=2, n_nodes=1000, n_reps=1000, master_seed=2024))
    table = known_constants(2, 1)
    target = float(table.q[2:].sum())
    unchanged_target = float(table.q[1])
    ok = abs(s.mean - target) <= 0.01 and abs(s.unchanged_fraction - unchanged_target) <= 0.01
    detail = (
        f"mean O_N={s.mean:.5f} (target {target:.5f} +- 0.01), "
        f"unchanged={s.unchanged_fraction:.5f} (target {unchanged_target} +- 0.01)"
    )
    assert criterion("3 limit d=2", ok, detail)


def test_zero_overload_regime(criterion):
    bad, total = [], 0
    for d in (1, 2, 3):
        for k in (1, 2, 3):
            for p in P_VALUES:
                for factor in (1.0, 0.9, 0.5):
                    lam = factor / (1 - p + alpha(d) * p)
                    cfg = ExperimentConfig(
                        d=d, k=k, n_nodes=200, n_reps=20, strategy=KPNNS(k, p), lam=lam, mu=1.0,
                        master_seed=1000 * d + 100 * k + int(100 * p),
                    )
                    s = run_replications(cfg)
                    total += s.n_reps
                    if s.overload_counts.max() != 0:
                        bad.append((d, k, p, factor))
    detail = f"{total} replications over 108 settings, settings with O_N > 0: {bad or 'none'}"
    assert criterion("4 zero-overload regime", not bad, detail)


def test_left_right_strategy(criterion):
    # Asymmetric pairs included on purpose: the boundary servers then see
    # lam * (1 - |ell - r|) and lam * (1 + |ell - r|), not lam.
    pairs = [(0.5, 0.5), (0.3, 0.3), (0.0, 0.0), (0.3, 0.5), (0.5, 0.3), (0.0, 1.0), (0.2, 0.6), (0.1, 0.2)]
    overload_bad, rate_bad = [], []
    for ell, r in pairs:
        for ratio in (0.5, 0.8, 1.0):
            cfg = ExperimentConfig(n_nodes=500, n_reps=20, strategy=LRNNS(ell, r), lam=ratio, mu=1.0, master_seed=7)
            s = run_replications(cfg)
            if s.overload_counts.max() != 0:
                overload_bad.append((ell, r, ratio, round(float(s.overload.max()), 4)))
        ps = sample_points(1000, 1, 11)
        t = 1000.0
        res = event_simulation(ps, LRNNS(ell, r), 1.0, 1.0, t, seed=12)
        if np.any(np.abs(res.empirical_rate - 1.0) > 5 * math.sqrt(1.0 / t)):
            worst = float(np.max(np.abs(res.empirical_rate - 1.0)))
            rate_bad.append((ell, r, round(worst, 3)))
    detail = (
        f"(ell, r, lam/mu, max O_N) with O_N > 0: {overload_bad or 'none'}; "
        f"(ell, r, max |rate - lam|) off lam by more than 5 sd: {rate_bad or 'none'}"
    )
    assert criterion("5 left-right strategy", not overload_bad and not rate_bad, detail)


@pytest.fixture(scope="module")
def instances():
    rng = np.random.default_rng(606)
    out = []
    for i in range(10_000):
        d = int(rng.integers(1, 4))
        k = int(rng.integers(1, 4))
        ak = alpha(d) * k
        n = int(rng.integers(ak + 2, 160))
        out.append((d, k, ak, build_knn_graph(sample_points(n, d, 10_000 + i), k)))
    return out


def test_structural_invariants(instances, criterion):
    failures = []
    for d, k, ak, g in instances:
        if g.out_neighbours.shape != (g.n, k) or np.any(g.out_neighbours == np.arange(g.n)[:, None]):
            failures.append(("out-degree", d, k, g.n))
        if g.in_degree.max() > ak:
            failures.append(("in-degree", d, k, g.n))
        if (d, k) == (1, 1):
            q = in_degree_counts(g, ak).q
            if q[0] != q[2]:
                failures.append(("Q0=Q2", d, k, g.n))
        if k == 1:
            pairs = mutual_pairs(g)
            for comp in weak_components(g):
                if len(comp) >= 2 and sum(a in comp for a, _ in pairs) != 1:
                    failures.append(("mutual pair", d, k, g.n))
                    break
    detail = f"{len(instances)} instances, failures: {failures[:5] or 'none'}"
    assert criterion("6 structural invariants", not failures, detail)


def test_star_round_trip(instances, criterion):
    trips, sums, failures = 0, 0, []
    for d, k, ak, g in instances[:10_000]:
        q = in_degree_counts(g, ak)
        stars = star_counts(g, ak)
        trips += 1
        if counts_from_stars(stars, ak) != q:
            failures.append(("round trip", d, k, g.n))
        for p in (1.0, 0.5, 0.25):
            for lam in (0.4, 0.8, 1.0, 1.3):
                sums += 1
                a = overload_via_indegree(q, k, p, lam, 1.0, ak)
                b = overload_via_stars(stars, k, p, lam, 1.0, ak)
                if a != b:
                    failures.append(("star sum", d, k, g.n, p, lam))
    detail = f"{trips} round trips, {sums} star-sum comparisons, failures: {failures[:5] or 'none'}"
    assert criterion("7 star-count round trip", not failures, detail)


def test_constants_triangle(criterion):
    mc1 = mc_table(1, 1_000_000, seed=1)
    exact1 = np.array([0.25, 0.5, 0.25])
    ok1 = bool(np.all(np.abs(mc1.q - exact1) <= 3 * mc1.stderr) and np.all(np.abs(mc1.q - exact1) <= 0.005))
    c12, _ = union_integral(1, 2, 1_000_000, seed=1)
    ok_c = abs(c12 - 0.5) <= 0.01

    table = known_constants(2, 1)
    mc2 = mc_table(2, 1_000_000, seed=2)
    big = table.q >= 1e-3
    z_mc = np.abs(mc2.q - table.q) / np.hypot(mc2.stderr, table.stderr)
    ok2 = bool(np.all(z_mc[big] <= 3))

    emp_ok = True
    parts = []
    for d, mc, ref in ((1, mc1, known_constants(1, 1)), (2, mc2, table)):
        emp = empirical_constants(d, 1, 1000, 200, seed=3)
        mask = ref.q >= 1e-3
        z_ref = np.abs(emp.q - ref.q) / np.hypot(emp.stderr, ref.stderr)
        z_mc2 = np.abs(emp.q - mc.q) / np.hypot(emp.stderr, mc.stderr)
        emp_ok &= bool(np.all(z_ref[mask] <= 3) and np.all(z_mc2[mask] <= 3))
        parts.append(f"d={d} empirical max z vs reference {z_ref[mask].max():.2f}, vs MC {z_mc2[mask].max():.2f}")
    ok = ok1 and ok_c and ok2 and emp_ok
    detail = (
        f"mc d=1 {np.round(mc1.q, 5).tolist()}; C_2 (d=1) = {c12:.5f}; "
        f"mc d=2 max z {z_mc[big].max():.2f}; " + "; ".join(parts)
    )
    assert criterion("8 constants triangle", ok, detail)


def test_event_rates(criterion):
    ps = sample_points(1000, 1, 99)
    t = 1000.0
    ok, parts = True, []
    for p in (1.0, 0.5):
        res = event_simulation(ps, KPNNS(1, p), 1.0, 1.0, t, seed=100)
        tol = 5 * np.sqrt(res.lambda_eff / t)
        within = bool(np.all(np.abs(res.empirical_rate - res.lambda_eff) <= tol))
        conserved = int(res.joins.sum()) == int(res.arrivals.sum())
        ok &= within and conserved
        parts.append(f"p={p:g}: max |z|={np.max(np.abs(res.z_scores)):.2f}, joins=arrivals={conserved}")
    assert criterion("9 effective rates by event simulation", ok, "; ".join(parts))


def test_small_n(criterion):
    e2 = small_n_expectation(2, 100_000, seed=5)
    e3 = small_n_expectation(3, 100_000, seed=5)
    ok = e2 == 0.0 and abs(e3 - 1 / 3) <= 0.01
    assert criterion("10 small N", ok, f"E O_2={e2}, E O_3={e3:.5f} (target 1/3 +- 0.01)")


def test_cli_determinism(tmp_path, criterion):
    argv = ["simulate", "--d", "1", "--k", "1", "--n-nodes", "1000", "--reps", "1000", "--p", "1", "--seed", "2024"]
    outs = []
    for threads in (1, 4):
        out = tmp_path / f"t{threads}"
        assert main(argv + ["--threads", str(threads), "--output-dir", str(out)]) == 0
        outs.append(out)
    same = all((outs[0] / f).read_bytes() == (outs[1] / f).read_bytes() for f in ("summary.json", "histogram.csv"))
    assert criterion("11 determinism across thread counts", same, f"summary.json and histogram.csv identical: {same}")
