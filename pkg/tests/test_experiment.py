import numpy as np
import pytest

from nnshift.asymptotics import empirical_constants
from nnshift.experiment import (
    ConfigError,
    ExperimentConfig,
    clt_check,
    event_simulation,
    histogram_csv,
    run_replications,
    small_n_expectation,
    spatial_csv,
    spatial_export,
    summary_json,
)
from nnshift.geometry import PointSet, sample_points
from nnshift.nngraph import build_knn_graph
from nnshift.strategy import KPNNS, LRNNS, classify_overload, effective_rates

FOUR = PointSet(1, [0.1, 0.2, 0.4, 0.8])


def test_config_validation():
    with pytest.raises(ConfigError) as exc:
        ExperimentConfig(n_nodes=2, k=2, strategy=KPNNS(2, 1.0)).validate()
    assert exc.value.field == "k"
    with pytest.raises(ConfigError) as exc:
        ExperimentConfig(n_nodes=3).validate()
    assert exc.value.field == "n_nodes"
    with pytest.raises(ConfigError):
        ExperimentConfig(d=2, strategy=LRNNS(0.2, 0.2)).validate()
    with pytest.raises(ConfigError):
        ExperimentConfig(k=2).validate()  # default strategy has k = 1


def test_replications_small_1d():
    s = run_replications(ExperimentConfig(n_nodes=1000, n_reps=100, master_seed=4))
    assert s.histogram.sum() == 100
    assert 0 <= s.mean <= 1
    assert np.nonzero(s.histogram)[0].max() <= 500
    assert abs(s.mean - 0.25) < 0.01
    assert s.indegree_fractions[0] == s.indegree_fractions[2]


def test_replications_deterministic_across_threads():
    cfg = ExperimentConfig(d=2, n_nodes=300, n_reps=40, master_seed=12)
    a = run_replications(cfg, threads=1)
    b = run_replications(cfg, threads=4)
    assert np.array_equal(a.overload_counts, b.overload_counts)
    assert np.array_equal(a.indegree_counts, b.indegree_counts)
    assert histogram_csv(a) == histogram_csv(b)
    assert summary_json(a) == summary_json(b)


def test_replications_match_empirical_constants():
    cfg = ExperimentConfig(d=2, n_nodes=1000, n_reps=100, master_seed=21)
    s = run_replications(cfg)
    t = empirical_constants(2, 1, 1000, 100, seed=21)
    assert np.array_equal(s.indegree_fractions, t.q)


def test_lr_symmetric_never_overloads():
    s = run_replications(ExperimentConfig(n_nodes=200, n_reps=30, strategy=LRNNS(0.4, 0.4)))
    assert s.overload_counts.max() == 0


def test_zero_overload_regime_1d():
    p = 0.6
    s = run_replications(ExperimentConfig(n_nodes=500, n_reps=30, strategy=KPNNS(1, p), lam=1 / (1 + p) - 0.01))
    assert s.overload_counts.max() == 0
    diag = clt_check(run_replications(ExperimentConfig(n_nodes=200, n_reps=100, lam=0.4)))
    assert diag.skipped and diag.scaled_variance == 0.0


def test_clt_check_fields():
    s = run_replications(ExperimentConfig(n_nodes=1000, n_reps=200, master_seed=2))
    diag = clt_check(s, 19 / 240)
    assert not diag.skipped
    assert diag.skew_band == pytest.approx(5 * np.sqrt(6 / 200))
    assert diag.kurtosis_band == pytest.approx(5 * np.sqrt(24 / 200))
    assert diag.rel_error == pytest.approx(abs(s.scaled_variance - 19 / 240) / (19 / 240))
    with pytest.raises(ValueError):
        clt_check(run_replications(ExperimentConfig(n_nodes=100, n_reps=10)))


def test_event_simulation_without_shifting():
    ps = sample_points(200, 2, 3)
    res = event_simulation(ps, KPNNS(1, 0.0), 1.0, 1.0, 50.0, seed=1)
    assert np.array_equal(res.joins, res.arrivals)


def test_event_simulation_matches_rates():
    ps = sample_points(1000, 1, 6)
    res = event_simulation(ps, KPNNS(1, 1.0), 1.0, 1.0, 1000.0, seed=2)
    g = build_knn_graph(ps, 1)
    assert np.array_equal(res.lambda_eff, g.in_degree.astype(float))
    assert res.joins.sum() == res.arrivals.sum()
    tol = 5 * np.sqrt(res.lambda_eff / res.t)
    assert np.all(np.abs(res.empirical_rate - res.lambda_eff) <= tol)


def test_event_simulation_kpnns_k2():
    ps = sample_points(300, 2, 8)
    res = event_simulation(ps, KPNNS(2, 0.7), 1.5, 1.0, 400.0, seed=3)
    assert res.joins.sum() == res.arrivals.sum()
    assert np.max(np.abs(res.z_scores)) < 5


def test_event_simulation_lr_matches_flow_balance():
    ps = sample_points(300, 1, 10)
    s = LRNNS(0.3, 0.5)
    res = event_simulation(ps, s, 1.0, 1.0, 1000.0, seed=4)
    assert np.allclose(res.lambda_eff, effective_rates(build_knn_graph(ps, 1), s, 1.0))
    assert np.max(np.abs(res.z_scores)) < 5
    assert res.joins.sum() == res.arrivals.sum()


def test_event_simulation_rejects_bad_horizon():
    with pytest.raises(ValueError):
        event_simulation(FOUR, KPNNS(1, 1.0), 1.0, 1.0, 0.0, seed=0)


def test_event_csv():
    res = event_simulation(FOUR, KPNNS(1, 1.0), 1.0, 1.0, 10.0, seed=0)
    lines = res.to_csv(seed=0).splitlines()
    assert lines[0].startswith("# seed=0")
    assert lines[1] == "index,arrivals,joins,empirical_rate,lambda_eff,z"
    assert len(lines) == 6


def test_small_n():
    assert small_n_expectation(2, 1000, 0) == 0.0
    # The middle of three points is the nearest neighbour of both ends.
    assert small_n_expectation(3, 1000, 0) == pytest.approx(1 / 3)
    with pytest.raises(ValueError):
        small_n_expectation(4, 10, 0)
    with pytest.raises(ValueError):
        small_n_expectation(3, 10, 0, p=1.0, lam=0.4)


def test_spatial_export_four_points():
    g = build_knn_graph(FOUR, 1)
    rep = classify_overload(effective_rates(g, KPNNS(1, 1.0), 1.0), 1.0, 1.0)
    rows = spatial_export(FOUR, rep, g.in_degree)
    assert [r.cls for r in rows] == ["unchanged", "overloaded", "unchanged", "underloaded"]
    assert [r.in_degree for r in rows] == [1, 2, 1, 0]
    text = spatial_csv(rows, 1, seed=42)
    assert text.splitlines()[1] == "index,x1,in_degree,lambda_eff,class"


def test_spatial_export_tallies_2d():
    ps = sample_points(1000, 2, 33)
    g = build_knn_graph(ps, 1)
    rep = classify_overload(effective_rates(g, KPNNS(1, 0.75), 1.0), 1.0, 1.0)
    rows = spatial_export(ps, rep, g.in_degree)
    assert len(rows) == 1000
    tally = {c: sum(r.cls == c for r in rows) for c in ("overloaded", "unchanged", "underloaded")}
    assert tally == rep.tally()
    assert tally["overloaded"] == int(rep.overloaded.sum())


def test_event_mode_in_replications():
    cfg = ExperimentConfig(n_nodes=200, n_reps=5, event_horizon=200.0, master_seed=1)
    s = run_replications(cfg)
    plain = run_replications(ExperimentConfig(n_nodes=200, n_reps=5, master_seed=1))
    assert np.array_equal(s.overload_counts, plain.overload_counts)
    assert s.event_max_z.shape == (5,) and np.all(s.event_max_z < 6)
