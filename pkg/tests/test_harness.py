"""Oracle tests for experiment configuration, accounting, aggregation, and persistence."""

import numpy as np
import pandas as pd
import pytest

import phaselim.harness as hns
from phaselim import (
    AccountingError,
    ActionSet,
    ConfigurationError,
    ExperimentConfig,
    ExperimentError,
    Instance,
    RegretTrace,
    ValidationError,
    aggregate,
    final_linear_fit,
    final_slope,
    joint_pseudo_regret_increment,
    read_summary_csv,
    read_traces_csv,
    run_experiment,
    write_events_csv,
    write_summary_csv,
    write_traces_csv,
)

BASE = dict(m=3, n=400, d=2, mu=[1.0, 0.0], delta=0.1, reps=2, seed=9, k=5, sigma=0.3)


def small_config(**overrides):
    return ExperimentConfig(**{**BASE, **overrides})


# ---------------------------------------------------------------------------
# Configuration


def test_config_validation():
    small_config()
    for overrides in (
        dict(m=0),
        dict(n=0),
        dict(d=0),
        dict(reps=0),
        dict(mu=[1.0, 0.0, 0.0]),
        dict(C=0.09 * np.eye(2)),  # together with sigma
        dict(sigma=None),  # neither sigma nor C
        dict(sigma=-0.1),
        dict(sigma=None, C=np.eye(3)),
        dict(algorithms=()),
        dict(algorithms=("cppe", "ucb")),
        dict(algorithms=("cppe", "cppe")),
        dict(action_source="grid"),
        dict(d=3, mu=[1.0, 0.0, 0.0]),  # circle needs d=2
        dict(k=None),
        dict(action_source="csv_file"),
        dict(workers=0),
        dict(delta=1.5),  # propagated to the policy layer
        dict(switch_scale=-1.0),
    ):
        with pytest.raises((ConfigurationError, ValidationError)):
            small_config(**overrides)


def test_from_dict_reports_unknown_and_missing_keys():
    cfg = ExperimentConfig.from_dict(dict(BASE))
    assert cfg.m == 3 and cfg.algorithms == ("cppe", "fedpe", "indpe")
    with pytest.raises(ConfigurationError, match="unknown config keys: horizon, users"):
        ExperimentConfig.from_dict({**BASE, "users": 1, "horizon": 2})
    with pytest.raises(ConfigurationError, match="missing required config keys"):
        ExperimentConfig.from_dict({"m": 3, "n": 400})


def test_from_json_paths(tmp_path):
    doc = tmp_path / "cfg.json"
    doc.write_text('{"m": 3, "n": 400, "d": 2, "mu": [1.0, 0.0], "delta": 0.1, '
                   '"reps": 2, "seed": 9, "k": 5, "sigma": 0.3}')
    cfg = ExperimentConfig.from_json(doc)
    assert cfg.seed == 9
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_json(bad)
    arr = tmp_path / "arr.json"
    arr.write_text("[1, 2]")
    with pytest.raises(ConfigurationError, match="JSON object"):
        ExperimentConfig.from_json(arr)
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_json(tmp_path / "absent.json")


def test_build_action_set_variants(tmp_path):
    circle = small_config().build_action_set()
    assert circle.k == 5 and circle.d == 2

    net_cfg = small_config(action_source="epsilon_net", k=None, net_eps=0.5)
    net = net_cfg.build_action_set()
    assert net.d == 2 and net.k <= 25

    # default net radius is 1/sqrt(m*n)
    auto = small_config(
        action_source="epsilon_net", k=None, d=1, mu=[1.0], m=4, n=100
    ).build_action_set()
    eps = 1.0 / np.sqrt(4 * 100)
    assert auto.k == 2 * int(np.ceil(1.0 / (2 * eps))) + 1

    path = tmp_path / "actions.csv"
    path.write_text("1.0,0.0\n0.0,1.0\n-1.0,0.0\n")
    csv_cfg = small_config(action_source="csv_file", k=None, actions_csv=str(path))
    assert csv_cfg.build_action_set().k == 3


def test_population_and_policy_projections():
    cfg = small_config(sigma=None, C=(0.04 * np.eye(2)).tolist(), switch_scale=0.7)
    model = cfg.population()
    assert np.allclose(model.C, 0.04 * np.eye(2))
    pol = cfg.policy()
    assert pol.switch_scale == 0.7 and pol.n == 400 and pol.delta == 0.1


# ---------------------------------------------------------------------------
# RegretTrace


def test_regret_trace_invariants():
    good = RegretTrace(algorithm="cppe", rep=0, cumulative=np.array([0.0, 1.0, 1.0, 2.5]))
    assert good.final == 2.5
    with pytest.raises(ValidationError):
        RegretTrace(algorithm="cppe", rep=0, cumulative=np.array([1.0, 0.5]))
    with pytest.raises(ValidationError):
        RegretTrace(algorithm="cppe", rep=0, cumulative=np.array([-1.0, 0.5]))
    with pytest.raises(ValidationError):
        RegretTrace(algorithm="cppe", rep=0, cumulative=np.zeros((2, 2)))
    with pytest.raises(ValidationError):
        RegretTrace(algorithm="cppe", rep=0, cumulative=np.array([]))


# ---------------------------------------------------------------------------
# Accounting


def accounting_fixture():
    aset = ActionSet(np.array([[1.0, 0.0], [0.0, 1.0]]))
    inst = Instance.from_thetas(np.array([[1.0, 0.0]]), aset)
    return aset, inst


def test_increment_hand_oracles():
    aset, inst = accounting_fixture()
    assert joint_pseudo_regret_increment(inst, aset, [(0, 0)]) == 0.0
    assert joint_pseudo_regret_increment(inst, aset, [(0, 1)]) == pytest.approx(1.0)


def test_increment_additivity():
    rng = np.random.default_rng(21)
    aset = ActionSet(rng.standard_normal((6, 3)))
    thetas = rng.standard_normal((4, 3))
    inst = Instance.from_thetas(thetas, aset)
    pulls = [(i, int(rng.integers(6))) for i in range(4)]
    total = joint_pseudo_regret_increment(inst, aset, pulls)
    singles = 0.0
    for agent, action in pulls:
        one = Instance.from_thetas(thetas[agent : agent + 1], aset)
        singles += joint_pseudo_regret_increment(one, aset, [(0, action)])
    assert total == pytest.approx(singles, abs=1e-12)


def test_increment_accounting_errors():
    aset, inst = accounting_fixture()
    with pytest.raises(AccountingError):
        joint_pseudo_regret_increment(inst, aset, [])  # agent missing
    with pytest.raises(AccountingError):
        joint_pseudo_regret_increment(inst, aset, [(0, 0), (0, 1)])  # agent twice
    with pytest.raises(AccountingError):
        joint_pseudo_regret_increment(inst, aset, [(0, 99)])  # unknown action


# ---------------------------------------------------------------------------
# Aggregation and slope fitting


def constant_trace(alg, rep, value, n=5):
    return RegretTrace(algorithm=alg, rep=rep, cumulative=np.full(n, float(value)))


def test_aggregate_hand_oracles():
    one = aggregate([constant_trace("cppe", 0, 4.0)], m=2)
    assert np.allclose(one.mean_trace("cppe"), 4.0)
    assert np.allclose(one.std_trace("cppe"), 0.0)

    two = aggregate([constant_trace("cppe", 0, 4.0), constant_trace("cppe", 1, 10.0)], m=2)
    assert np.allclose(two.mean_trace("cppe"), 7.0)
    assert np.allclose(two.std_trace("cppe"), 3.0)

    norm = aggregate([constant_trace("cppe", 0, 4.0), constant_trace("cppe", 1, 10.0)], m=2, normalize=True)
    assert np.allclose(norm.mean_trace("cppe"), 3.5)
    assert np.allclose(norm.std_trace("cppe"), 1.5)
    assert norm.normalized and norm.final_mean("cppe") == pytest.approx(3.5)


def test_aggregate_permutation_invariant_and_ordered():
    traces = [
        constant_trace("indpe", 1, 3.0),
        constant_trace("cppe", 0, 1.0),
        constant_trace("fedpe", 0, 2.0),
        constant_trace("cppe", 1, 5.0),
    ]
    a = aggregate(traces, m=4)
    b = aggregate(traces[::-1], m=4)
    pd.testing.assert_frame_equal(a.table, b.table)
    assert a.algorithms() == ["cppe", "fedpe", "indpe"]


def test_aggregate_errors():
    with pytest.raises(ValidationError):
        aggregate([], m=1)
    with pytest.raises(ValidationError):
        aggregate([constant_trace("cppe", 0, 1.0, n=5), constant_trace("cppe", 1, 1.0, n=6)], m=1)
    with pytest.raises(ValidationError):
        aggregate([constant_trace("cppe", 0, 1.0)], m=1).mean_trace("fedpe")


def test_final_fit_oracles():
    slope, intercept, r2 = final_linear_fit(np.full(90, 5.0))
    assert slope == pytest.approx(0.0, abs=1e-12)
    assert intercept == pytest.approx(5.0)
    assert r2 == 1.0
    t = np.arange(1, 301, dtype=float)
    assert final_slope(0.7 * t) == pytest.approx(0.7, abs=1e-9)
    assert final_linear_fit(0.7 * t)[2] == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValidationError):
        final_slope(t, window_fraction=0.0)
    with pytest.raises(ValidationError):
        final_slope(t, window_fraction=1.2)


# ---------------------------------------------------------------------------
# Experiment runs


def test_run_experiment_shapes_and_budget():
    cfg = small_config()
    res = run_experiment(cfg)
    assert len(res.traces) == 2 * 3
    assert {t.algorithm for t in res.traces} == {"cppe", "fedpe", "indpe"}
    assert all(t.cumulative.shape == (400,) for t in res.traces)
    assert res.failures == []
    pulls = res.events.groupby(["algorithm", "rep"])["pulls_total"].sum()
    assert (pulls == 3 * 400).all()
    assert set(res.collaborative_phases) == {(a, r) for a in cfg.algorithms for r in range(2)}
    assert all(res.collaborative_phases[("indpe", r)] == 0 for r in range(2))
    assert all(res.collaborative_phases[("fedpe", r)] >= 1 for r in range(2))


def test_run_experiment_deterministic(tmp_path):
    cfg = small_config()
    first = run_experiment(cfg, out_dir=tmp_path / "a")
    second = run_experiment(cfg, out_dir=tmp_path / "b")
    for x, y in zip(first.traces, second.traces):
        assert x.algorithm == y.algorithm and x.rep == y.rep
        assert np.array_equal(x.cumulative, y.cumulative)
    for name in ("traces.csv", "summary.csv", "events.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_noise_streams_are_pinned_per_algorithm():
    # dropping algorithms from the list must not change the remaining one's stream
    full = run_experiment(small_config())
    only = run_experiment(small_config(algorithms=("indpe",)))
    full_ind = [t for t in full.traces if t.algorithm == "indpe"]
    for x, y in zip(full_ind, only.traces):
        assert np.array_equal(x.cumulative, y.cumulative)


def test_failure_isolation_and_total_failure(monkeypatch):
    def boom(*args, **kwargs):
        raise RuntimeError("scripted failure")

    monkeypatch.setitem(hns._RUNNERS, "fedpe", boom)
    res = run_experiment(small_config())
    assert [(rep, alg) for rep, alg, _ in res.failures] == [(0, "fedpe"), (1, "fedpe")]
    assert all("scripted failure" in msg for _, _, msg in res.failures)
    assert {t.algorithm for t in res.traces} == {"cppe", "indpe"}

    clean = run_experiment(small_config(algorithms=("cppe", "indpe")))
    for x, y in zip(sorted(res.traces, key=lambda t: (t.algorithm, t.rep)),
                    sorted(clean.traces, key=lambda t: (t.algorithm, t.rep))):
        assert np.array_equal(x.cumulative, y.cumulative)

    with pytest.raises(ExperimentError, match="scripted failure"):
        run_experiment(small_config(algorithms=("fedpe",)))


# ---------------------------------------------------------------------------
# CSV persistence


def test_traces_csv_round_trip(tmp_path):
    cfg = small_config(reps=1)
    res = run_experiment(cfg)
    path = tmp_path / "traces.csv"
    write_traces_csv(path, res.traces)
    back = read_traces_csv(path)
    assert [(t.algorithm, t.rep) for t in back] == sorted((t.algorithm, t.rep) for t in res.traces)
    by_key = {(t.algorithm, t.rep): t for t in res.traces}
    for t in back:
        assert np.array_equal(t.cumulative, by_key[(t.algorithm, t.rep)].cumulative)
    with pytest.raises(ValidationError):
        write_traces_csv(tmp_path / "none.csv", [])


def test_summary_csv_round_trip(tmp_path):
    res = run_experiment(small_config())
    path = tmp_path / "summary.csv"
    write_summary_csv(path, res.summary)
    back = read_summary_csv(path)
    assert back.m == 3 and not back.normalized
    for alg in res.summary.algorithms():
        assert np.array_equal(back.mean_trace(alg), res.summary.mean_trace(alg))
        assert np.array_equal(back.std_trace(alg), res.summary.std_trace(alg))


def test_events_csv_schema(tmp_path):
    res = run_experiment(small_config(reps=1))
    path = tmp_path / "events.csv"
    write_events_csv(path, res.events)
    frame = pd.read_csv(path)
    assert list(frame.columns) == hns.EVENT_COLUMNS
    assert set(frame["stage"]) <= {"collaborative", "personal", "exhausted"}


def test_csv_missing_columns_rejected(tmp_path):
    path = tmp_path / "short.csv"
    path.write_text("algorithm,rep,round\ncppe,0,1\n")
    with pytest.raises(ValidationError, match="joint_cum_regret"):
        read_traces_csv(path)
    path2 = tmp_path / "short2.csv"
    path2.write_text("algorithm,round,mean\ncppe,1,0.0\n")
    with pytest.raises(ValidationError, match="missing columns"):
        read_summary_csv(path2)
