"""Experiment orchestration: config, replication loop, regret accounting, CSV output.

A replication samples one agent population (shared by every algorithm, so
comparisons are paired) and runs each requested algorithm against it with an
independent noise stream.  Seeds derive from (master seed, replication,
stream index), so outputs are a pure function of the config and replication
failures never disturb the other replications' streams.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import MISSING, dataclass, field, fields
from pathlib import Path

import numpy as np
import pandas as pd

from .design import ActionSet, uniform_circle
from .environment import Instance, PopulationModel, sample_instance
from .errors import AccountingError, ConfigurationError, ExperimentError, ValidationError
from .policies import PolicyConfig, epsilon_net, run_cppe, run_fedpe, run_indpe

__all__ = [
    "ALGORITHMS",
    "ExperimentConfig",
    "RegretTrace",
    "SummaryStats",
    "ExperimentResult",
    "joint_pseudo_regret_increment",
    "run_experiment",
    "aggregate",
    "final_slope",
    "final_linear_fit",
    "write_traces_csv",
    "write_summary_csv",
    "write_events_csv",
    "read_traces_csv",
    "read_summary_csv",
]

ALGORITHMS = ("cppe", "fedpe", "indpe")
_RUNNERS = {"cppe": run_cppe, "fedpe": run_fedpe, "indpe": run_indpe}
_ACTION_SOURCES = ("uniform_circle", "epsilon_net", "csv_file")

TRACE_COLUMNS = ["algorithm", "rep", "round", "joint_cum_regret"]
SUMMARY_COLUMNS = ["algorithm", "round", "mean", "std", "m", "normalized"]
EVENT_COLUMNS = ["algorithm", "rep", "phase", "stage", "eps", "pulls_total", "min_active", "max_active"]


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat experiment description; JSON documents map onto it one-to-one."""

    m: int
    n: int
    d: int
    mu: np.ndarray
    delta: float
    reps: int
    seed: int
    k: int | None = None
    sigma: float | None = None
    C: np.ndarray | None = None
    sigma0: float = 1.0
    family: str = "gaussian"
    algorithms: tuple = ALGORITHMS
    action_source: str = "uniform_circle"
    actions_csv: str | None = None
    net_eps: float | None = None
    normalize: bool = False
    workers: int = 1
    pull_constant_collab: float = 8.0
    pull_constant_local: float = 2.0
    log_arg_variant: str = "proof"
    design_tol: float = 0.01
    max_phases: int = 40
    switch_scale: float = 0.1

    def __post_init__(self):
        if self.m < 1 or self.n < 1 or self.d < 1 or self.reps < 1:
            raise ConfigurationError("m, n, d, reps must all be >= 1")
        mu = np.asarray(self.mu, dtype=float)
        if mu.shape != (self.d,):
            raise ConfigurationError("mu must have length d")
        if (self.sigma is None) == (self.C is None):
            raise ConfigurationError("provide exactly one of sigma or C")
        if self.sigma is not None and self.sigma < 0:
            raise ConfigurationError("sigma must be >= 0")
        C = None if self.C is None else np.asarray(self.C, dtype=float)
        if C is not None and C.shape != (self.d, self.d):
            raise ConfigurationError("C must be a (d, d) matrix")
        algorithms = tuple(self.algorithms)
        if not algorithms or any(a not in ALGORITHMS for a in algorithms):
            raise ConfigurationError(f"algorithms must be a non-empty subset of {ALGORITHMS}")
        if len(set(algorithms)) != len(algorithms):
            raise ConfigurationError("algorithms must not repeat")
        if self.action_source not in _ACTION_SOURCES:
            raise ConfigurationError(f"action_source must be one of {_ACTION_SOURCES}")
        if self.action_source == "uniform_circle":
            if self.d != 2:
                raise ConfigurationError("uniform_circle actions require d = 2")
            if self.k is None or self.k < 1:
                raise ConfigurationError("uniform_circle actions require k >= 1")
        if self.action_source == "csv_file" and not self.actions_csv:
            raise ConfigurationError("csv_file actions require actions_csv")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "algorithms", algorithms)
        # PolicyConfig re-validates its own fields (delta, n, constants, ...).
        self.policy()

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
        required = {
            f.name
            for f in fields(cls)
            if f.default is MISSING and f.default_factory is MISSING
        }
        missing = sorted(required - set(raw))
        if missing:
            raise ConfigurationError(f"missing required config keys: {', '.join(missing)}")
        try:
            return cls(**raw)
        except TypeError as err:
            raise ConfigurationError(str(err)) from None

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigurationError(f"cannot read config {path}: {err}") from None
        if not isinstance(raw, dict):
            raise ConfigurationError("config document must be a JSON object")
        return cls.from_dict(raw)

    def population(self) -> PopulationModel:
        if self.sigma is not None:
            return PopulationModel.isotropic(self.mu, self.sigma, sigma0=self.sigma0, family=self.family)
        return PopulationModel(mu=self.mu, C=self.C, sigma0=self.sigma0, family=self.family)

    def policy(self) -> PolicyConfig:
        return PolicyConfig(
            delta=self.delta,
            n=self.n,
            pull_constant_collab=self.pull_constant_collab,
            pull_constant_local=self.pull_constant_local,
            log_arg_variant=self.log_arg_variant,
            design_tol=self.design_tol,
            max_phases=self.max_phases,
            switch_scale=self.switch_scale,
        )

    def build_action_set(self) -> ActionSet:
        if self.action_source == "uniform_circle":
            return uniform_circle(self.k)
        if self.action_source == "epsilon_net":
            eps = self.net_eps if self.net_eps is not None else 1.0 / np.sqrt(self.m * self.n)
            return epsilon_net(self.d, eps)
        return ActionSet.from_csv(self.actions_csv)


@dataclass(frozen=True)
class RegretTrace:
    """Cumulative joint pseudo-regret of one algorithm in one replication."""

    algorithm: str
    rep: int
    cumulative: np.ndarray

    def __post_init__(self):
        cum = np.asarray(self.cumulative, dtype=float)
        if cum.ndim != 1 or cum.size < 1:
            raise ValidationError("cumulative must be a non-empty vector")
        if cum[0] < -1e-12:
            raise ValidationError("cumulative regret must start >= 0")
        if np.any(np.diff(cum) < -1e-9):
            raise ValidationError("cumulative regret must be nondecreasing")
        object.__setattr__(self, "cumulative", cum)

    @property
    def final(self) -> float:
        return float(self.cumulative[-1])


@dataclass(frozen=True)
class SummaryStats:
    """Per-round mean and population std across replications, per algorithm."""

    table: pd.DataFrame
    m: int
    normalized: bool

    def algorithms(self) -> list:
        return list(dict.fromkeys(self.table["algorithm"]))

    def mean_trace(self, algorithm: str) -> np.ndarray:
        sub = self.table[self.table["algorithm"] == algorithm]
        if sub.empty:
            raise ValidationError(f"no summary rows for algorithm {algorithm!r}")
        return sub["mean"].to_numpy()

    def std_trace(self, algorithm: str) -> np.ndarray:
        sub = self.table[self.table["algorithm"] == algorithm]
        if sub.empty:
            raise ValidationError(f"no summary rows for algorithm {algorithm!r}")
        return sub["std"].to_numpy()

    def final_mean(self, algorithm: str) -> float:
        return float(self.mean_trace(algorithm)[-1])

    def final_std(self, algorithm: str) -> float:
        return float(self.std_trace(algorithm)[-1])


@dataclass(frozen=True)
class ExperimentResult:
    """Everything a sweep produces: summary, raw traces, events, phase counts."""

    summary: SummaryStats
    traces: list
    events: pd.DataFrame
    collaborative_phases: dict
    failures: list = field(default_factory=list)


def joint_pseudo_regret_increment(instance: Instance, action_set: ActionSet, pulls) -> float:
    """Regret added by one synchronized round of (agent, action id) pulls."""
    agents = sorted(agent for agent, _ in pulls)
    if agents != list(range(instance.m)):
        raise AccountingError("every agent must appear exactly once per round")
    known = set(int(i) for i in action_set.ids)
    total = 0.0
    for agent, action_id in pulls:
        if int(action_id) not in known:
            raise AccountingError(f"unknown action id {action_id}")
        pos = action_set.positions([action_id])[0]
        total += instance.optimal_values[agent] - float(
            action_set.matrix[pos] @ instance.thetas[agent]
        )
    if total < -1e-12:
        raise AccountingError(f"negative joint regret increment {total}")
    return total


def aggregate(traces, m: int, normalize: bool = False) -> SummaryStats:
    """Pointwise mean and population std of cumulative traces, per algorithm."""
    if not traces:
        raise ValidationError("aggregate needs at least one trace")
    lengths = {t.cumulative.size for t in traces}
    if len(lengths) != 1:
        raise ValidationError("traces must all have the same length")
    n = lengths.pop()
    order = {a: i for i, a in enumerate(ALGORITHMS)}
    algs = sorted({t.algorithm for t in traces}, key=lambda a: order.get(a, len(order)))
    scale = float(m) if normalize else 1.0
    frames = []
    for alg in algs:
        stack = np.stack([t.cumulative for t in traces if t.algorithm == alg])
        frames.append(
            pd.DataFrame(
                {
                    "algorithm": alg,
                    "round": np.arange(1, n + 1),
                    "mean": stack.mean(axis=0) / scale,
                    "std": stack.std(axis=0, ddof=0) / scale,
                    "m": m,
                    "normalized": int(normalize),
                }
            )
        )
    return SummaryStats(table=pd.concat(frames, ignore_index=True), m=m, normalized=normalize)


def final_linear_fit(mean_trace: np.ndarray, window_fraction: float = 1.0 / 3.0):
    """Least-squares line over the trailing window; returns (slope, intercept, r2)."""
    trace = np.asarray(mean_trace, dtype=float)
    if not 0 < window_fraction <= 1:
        raise ValidationError("window_fraction must lie in (0, 1]")
    count = max(2, int(round(window_fraction * trace.size)))
    y = trace[-count:]
    x = np.arange(trace.size - count + 1, trace.size + 1, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    total = y - y.mean()
    ss_tot = float(total @ total)
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(residual @ residual) / ss_tot
    return float(slope), float(intercept), r2


def final_slope(mean_trace: np.ndarray, window_fraction: float = 1.0 / 3.0) -> float:
    """Slope of the mean cumulative regret over the last window_fraction of rounds."""
    return final_linear_fit(mean_trace, window_fraction)[0]


def _replication(cfg: ExperimentConfig, action_set: ActionSet, rep: int) -> dict:
    """Run one replication: shared instance, independent noise per algorithm."""
    model = cfg.population()
    policy = cfg.policy()
    instance_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, rep, 0)))
    instance = sample_instance(model, cfg.m, action_set, instance_rng)
    out = {"rep": rep, "traces": {}, "events": {}, "collab": {}, "failures": []}
    for alg in cfg.algorithms:
        # The noise stream index is the algorithm's canonical rank, so a run
        # of the same algorithm sees the same noise whatever else is listed.
        stream = 1 + ALGORITHMS.index(alg)
        rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, rep, stream)))
        try:
            run = _RUNNERS[alg](policy, action_set, model, instance, rng)
        except Exception as err:  # failure isolation: one bad run never aborts the sweep
            out["failures"].append((alg, f"{type(err).__name__}: {err}"))
            continue
        out["traces"][alg] = run.cumulative
        out["events"][alg] = run.events
        out["collab"][alg] = run.collaborative_phases
    return out


def run_experiment(cfg: ExperimentConfig, out_dir=None, workers: int | None = None) -> ExperimentResult:
    """Run all replications, aggregate, and optionally persist the three CSVs."""
    action_set = cfg.build_action_set()
    workers = cfg.workers if workers is None else workers
    reps = range(cfg.reps)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replication, [cfg] * cfg.reps, [action_set] * cfg.reps, reps))
    else:
        results = [_replication(cfg, action_set, rep) for rep in reps]

    traces, event_rows, collab, failures = [], [], {}, []
    for res in sorted(results, key=lambda r: r["rep"]):
        rep = res["rep"]
        for alg in cfg.algorithms:
            if alg not in res["traces"]:
                continue
            traces.append(RegretTrace(algorithm=alg, rep=rep, cumulative=res["traces"][alg]))
            collab[(alg, rep)] = res["collab"][alg]
            for ev in res["events"][alg]:
                event_rows.append(
                    {
                        "algorithm": alg,
                        "rep": rep,
                        "phase": ev.phase,
                        "stage": ev.stage,
                        "eps": ev.eps,
                        "pulls_total": ev.pulls_total,
                        "min_active": ev.min_active,
                        "max_active": ev.max_active,
                    }
                )
        failures.extend((rep, alg, msg) for alg, msg in res["failures"])

    if not traces:
        detail = failures[0][2] if failures else "no replications ran"
        raise ExperimentError(f"all {cfg.reps} replications failed; first failure: {detail}")

    order = {a: i for i, a in enumerate(cfg.algorithms)}
    traces.sort(key=lambda t: (order[t.algorithm], t.rep))
    summary = aggregate(traces, m=cfg.m, normalize=cfg.normalize)
    events = pd.DataFrame(event_rows, columns=EVENT_COLUMNS)
    result = ExperimentResult(
        summary=summary,
        traces=traces,
        events=events,
        collaborative_phases=collab,
        failures=failures,
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_traces_csv(out / "traces.csv", traces)
        write_summary_csv(out / "summary.csv", summary)
        write_events_csv(out / "events.csv", events)
    return result


# --------------------------------------------------------------------------
# CSV persistence (schemas are the contract with external consumers)


def write_traces_csv(path, traces) -> None:
    if not traces:
        raise ValidationError("cannot persist an empty trace list")
    sizes = [t.cumulative.size for t in traces]
    frame = pd.DataFrame(
        {
            "algorithm": np.repeat([t.algorithm for t in traces], sizes),
            "rep": np.repeat([t.rep for t in traces], sizes),
            "round": np.concatenate([np.arange(1, s + 1) for s in sizes]),
            "joint_cum_regret": np.concatenate([t.cumulative for t in traces]),
        }
    )
    frame.to_csv(path, index=False, columns=TRACE_COLUMNS)


def read_traces_csv(path) -> list:
    frame = pd.read_csv(path, float_precision="round_trip")
    _require_columns(frame, TRACE_COLUMNS, path)
    out = []
    for (alg, rep), sub in frame.groupby(["algorithm", "rep"], sort=True):
        sub = sub.sort_values("round")
        out.append(RegretTrace(algorithm=alg, rep=int(rep), cumulative=sub["joint_cum_regret"].to_numpy()))
    return out


def write_summary_csv(path, summary: SummaryStats) -> None:
    summary.table.to_csv(path, index=False, columns=SUMMARY_COLUMNS)


def read_summary_csv(path) -> SummaryStats:
    frame = pd.read_csv(path, float_precision="round_trip")
    _require_columns(frame, SUMMARY_COLUMNS, path)
    m = int(frame["m"].iloc[0]) if len(frame) else 0
    normalized = bool(frame["normalized"].iloc[0]) if len(frame) else False
    return SummaryStats(table=frame, m=m, normalized=normalized)


def write_events_csv(path, events: pd.DataFrame) -> None:
    events.to_csv(path, index=False, columns=EVENT_COLUMNS)


def _require_columns(frame: pd.DataFrame, columns, path) -> None:
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise ValidationError(f"{path} is missing columns: {', '.join(missing)}")
