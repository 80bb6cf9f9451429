"""Phase-based elimination runners and the unit-ball discretization.

One engine drives three modes.  The adaptive runner starts with collaborative
phases (shared active set, averaged estimator, pooled pull counts) and
switches every agent to personal phases once the heterogeneity threshold
exceeds eps/2; the federated baseline collaborates forever; the independent
baseline is personal from the first phase.  All modes share the same phase
mechanics: G-optimal design on the active set, ceiling pull counts,
least-squares estimation from the phase's pulls, and elimination of actions
more than 2*eps behind the empirical best.

Rounds are synchronized: each agent plays exactly one action per round, and
phase pulls are scheduled round-robin.  If a phase does not fit in the
remaining budget, its pulls run in weight-descending order until the budget
ends and no elimination happens.  Once eps underflows the phase cap (or one
action is left), the empirical best action is played for the rest.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .design import ActionSet, Design, pseudo_inverse, solve_g_optimal
from .environment import h_threshold
from .errors import ConvergenceError, ResourceError, ValidationError

__all__ = [
    "PolicyConfig",
    "PhaseState",
    "PullPlan",
    "PhaseEvent",
    "PolicyRun",
    "collaborative_pull_counts",
    "local_pull_counts",
    "eliminate",
    "epsilon_net",
    "run_cppe",
    "run_fedpe",
    "run_indpe",
]

_LOG_VARIANTS = ("proof", "maintext")
_STAGES = ("collaborative", "personal", "exhausted")
_NET_POINT_CAP = 4_000_000


@dataclass(frozen=True)
class PolicyConfig:
    """Shared policy knobs.

    ``pull_constant_collab``/``pull_constant_local`` and the ``proof`` log
    variant give the counts with guarantees; ``maintext`` drops the leading
    constants and inverts the log argument.  ``switch_scale`` multiplies the
    heterogeneity threshold in the stage-switch comparison only: 1.0 compares
    the raw threshold, smaller values hold the collaborative stage longer.
    """

    delta: float
    n: int
    pull_constant_collab: float = 8.0
    pull_constant_local: float = 2.0
    log_arg_variant: str = "proof"
    design_tol: float = 0.01
    max_phases: int = 40
    switch_scale: float = 0.1

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValidationError("delta must lie in (0, 1)")
        if self.n < 1:
            raise ValidationError("n must be >= 1")
        if self.pull_constant_collab <= 0 or self.pull_constant_local <= 0:
            raise ValidationError("pull constants must be > 0")
        if self.log_arg_variant not in _LOG_VARIANTS:
            raise ValidationError(f"log_arg_variant must be one of {_LOG_VARIANTS}")
        if self.design_tol <= 0:
            raise ValidationError("design_tol must be > 0")
        if self.max_phases < 1:
            raise ValidationError("max_phases must be >= 1")
        if self.switch_scale < 0:
            raise ValidationError("switch_scale must be >= 0")


@dataclass(frozen=True)
class PhaseState:
    """Terminal snapshot of a run's phase machine."""

    ell: int
    eps: float
    stage: str
    rounds_used: np.ndarray
    collaborative_phases: int
    active_sets: list

    def __post_init__(self):
        if self.ell < 1 or self.eps != 2.0 ** (-self.ell):
            raise ValidationError("eps must equal 2**(-ell) exactly")
        if self.stage not in _STAGES:
            raise ValidationError(f"stage must be one of {_STAGES}")


@dataclass(frozen=True)
class PullPlan:
    """Per-action pull counts for one agent in one phase."""

    ids: np.ndarray
    counts: np.ndarray
    weights: np.ndarray
    total: int

    def __post_init__(self):
        if np.any((self.weights > 0) & (self.counts < 1)):
            raise ValidationError("every positive-weight support action needs >= 1 pull")
        if self.total != int(self.counts.sum()):
            raise ValidationError("total must equal the sum of counts")

    def as_dict(self) -> dict:
        return {int(a): int(c) for a, c in zip(self.ids, self.counts)}


@dataclass(frozen=True)
class PhaseEvent:
    """One aggregated phase record: pulls summed and active-set sizes ranged over agents."""

    phase: int
    stage: str
    eps: float
    pulls_total: int
    min_active: int
    max_active: int


@dataclass(frozen=True)
class PolicyRun:
    """Everything a runner produces for one replication."""

    cumulative: np.ndarray
    events: list
    collaborative_phases: int
    final_state: PhaseState
    records: list | None = field(default=None, repr=False)


def collaborative_pull_counts(
    design: Design, g: float, eps: float, m: int, k: int, ell: int, delta: float, cfg: PolicyConfig
) -> PullPlan:
    """Pull counts for a collaborative phase: the 1/m factor is the pooling gain.

    proof variant: n(x) = ceil(c_collab * pi(x) * g / (m eps^2) * log(2 k ell (ell+1) / delta));
    maintext variant drops the constant and uses log(k ell (ell+1) / (2 delta)).
    """
    _check_pull_args(eps, m, k, ell, delta)
    if cfg.log_arg_variant == "proof":
        constant = cfg.pull_constant_collab
        log_arg = np.log(2.0 * k * ell * (ell + 1) / delta)
    else:
        constant = 1.0
        log_arg = np.log(k * ell * (ell + 1) / (2.0 * delta))
    factor = constant * g / (m * eps * eps) * log_arg
    return _plan_from_factor(design, factor)


def local_pull_counts(
    design: Design, g: float, eps: float, m: int, k: int, ell: int, delta: float, cfg: PolicyConfig
) -> PullPlan:
    """Pull counts for a personal phase: no pooling, m enters the log argument only."""
    _check_pull_args(eps, m, k, ell, delta)
    if cfg.log_arg_variant == "proof":
        constant = cfg.pull_constant_local
        log_arg = np.log(2.0 * k * m * ell * (ell + 1) / delta)
    else:
        constant = 1.0
        log_arg = np.log(k * m * ell * (ell + 1) / (2.0 * delta))
    factor = constant * g / (eps * eps) * log_arg
    return _plan_from_factor(design, factor)


def _check_pull_args(eps, m, k, ell, delta):
    if eps <= 0:
        raise ValidationError("eps must be > 0")
    if m < 1 or k < 1 or ell < 1:
        raise ValidationError("m, k, ell must be >= 1")
    if not 0 < delta < 1:
        raise ValidationError("delta must lie in (0, 1)")


def _plan_from_factor(design: Design, factor: float) -> PullPlan:
    counts = np.ceil(design.weights * factor).astype(np.int64)
    return PullPlan(
        ids=design.ids.copy(),
        counts=counts,
        weights=design.weights.copy(),
        total=int(counts.sum()),
    )


def eliminate(active: ActionSet, theta_hat: np.ndarray, eps: float) -> ActionSet:
    """Keep every action within 2*eps of the empirical best under theta_hat."""
    if eps <= 0:
        raise ValidationError("eps must be > 0")
    values = active.matrix @ np.asarray(theta_hat, dtype=float)
    keep = values >= values.max() - 2.0 * eps
    return ActionSet(active.matrix[keep], ids=active.ids[keep])


# --------------------------------------------------------------------------
# Unit-ball discretization


def epsilon_net(d: int, eps: float) -> ActionSet:
    """Finite subset of the unit ball within ``eps`` of every ball point.

    d=1 is a symmetric grid, d=2 concentric shells with an angular grid of
    ceil(2 pi r / eps) points per shell, d>=3 a scaled integer lattice
    (checkerboard-thinned from d=4 up) clipped to the ball, with outside
    nodes projected onto the sphere.  The size never exceeds (1+2/eps)^d.
    """
    if d < 1:
        raise ValidationError("d must be >= 1")
    if not 0 < eps <= 1:
        raise ValidationError("eps must lie in (0, 1]")
    bound = (1.0 + 2.0 / eps) ** d
    if d * np.log1p(2.0 / eps) > np.log(_NET_POINT_CAP):
        raise ResourceError(
            f"a {d}-dimensional net at eps={eps:g} may need up to (1+2/eps)^d points; "
            "use a larger eps"
        )

    if d == 1:
        half = int(np.ceil(1.0 / (2.0 * eps)))
        points = np.linspace(-1.0, 1.0, 2 * half + 1)[:, None]
    elif d == 2:
        shells = [np.zeros((1, 2))]
        n_shells = int(np.ceil(1.0 / eps))
        for j in range(n_shells):
            r = 1.0 - j * eps
            count = int(np.ceil(2.0 * np.pi * r / eps))
            angles = 2.0 * np.pi * np.arange(count) / count
            shells.append(r * np.column_stack([np.cos(angles), np.sin(angles)]))
        points = np.vstack(shells)
    else:
        points = _lattice_net(d, eps)

    if points.shape[0] > bound:
        raise ResourceError(
            f"lattice construction produced {points.shape[0]} points, over the covering "
            f"budget {bound:.0f} at d={d}, eps={eps:g}; use a smaller d or eps"
        )
    return ActionSet(points)


def _lattice_net(d: int, eps: float) -> np.ndarray:
    """Scaled lattice intersected with the ball, boundary shell projected inward.

    Spacing 2*eps/sqrt(d) puts every point of the ball within eps of a
    lattice node; nodes just outside the ball are projected onto the sphere
    (projection is 1-Lipschitz, so coverage is preserved).  For d>=4 the
    even-coordinate-sum sublattice halves the count at the same covering
    radius.
    """
    spacing = 2.0 * eps / np.sqrt(d)
    reach = int(np.floor((1.0 + eps) / spacing))
    axis = np.arange(-reach, reach + 1)
    if (axis.size ** d) > 3e7:
        raise ResourceError("lattice enumeration too large; use a larger eps")
    grid = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
    if d >= 4:
        grid = grid[grid.sum(axis=1) % 2 == 0]
    nodes = grid * spacing
    norms = np.linalg.norm(nodes, axis=1)
    keep = norms <= 1.0 + eps
    nodes, norms = nodes[keep], norms[keep]
    outside = norms > 1.0
    projected = nodes[outside] / norms[outside, None]
    return np.unique(np.vstack([nodes[~outside], projected]), axis=0)


# --------------------------------------------------------------------------
# Phase engine


def run_cppe(cfg, action_set, model, instance, rng, record: bool = False) -> PolicyRun:
    """Adaptive runner: collaborative while the threshold allows, personal after."""
    return _phased_run(cfg, action_set, model, instance, rng, mode="auto", record=record)


def run_fedpe(cfg, action_set, model, instance, rng, record: bool = False) -> PolicyRun:
    """Federated baseline: collaborative phases only, as if agents were identical."""
    return _phased_run(cfg, action_set, model, instance, rng, mode="fed", record=record)


def run_indpe(cfg, action_set, model, instance, rng, record: bool = False) -> PolicyRun:
    """Independent baseline: every agent runs personal phases from the start."""
    return _phased_run(cfg, action_set, model, instance, rng, mode="ind", record=record)


def _phased_run(cfg, action_set, model, instance, rng, mode, record=False) -> PolicyRun:
    if action_set.d != model.d or action_set.d != instance.thetas.shape[1]:
        raise ValidationError("action set, model, and instance dimensions must match")
    m, n = instance.m, cfg.n
    if mode == "fed":
        h_eff = 0.0
    elif mode == "ind":
        h_eff = np.inf
    else:
        h_eff = cfg.switch_scale * h_threshold(action_set, model.C, m, cfg.delta)
    k0 = action_set.k
    agent_rngs = rng.spawn(m)
    gaps = instance.optimal_values[:, None] - instance.thetas @ action_set.matrix.T
    joint_gaps = gaps.sum(axis=0)
    inc = np.zeros(n)
    events: dict[int, list] = {}
    records: list | None = [] if record else None
    caches = ({}, {})  # design by active-id tuple; phase plan by (ids, ell, kind)

    pos_active = np.arange(k0)
    used = 0
    ell = 1
    collab_phases = 0
    mu_hat = None
    switched = False
    while used < n:
        eps = 2.0 ** (-ell)
        if h_eff > eps / 2.0:
            switched = True
            break
        if pos_active.size == 1 or ell > cfg.max_phases:
            pos = _terminal_position(action_set, pos_active, mu_hat)
            _merge_event(events, ell, "exhausted", eps, (n - used) * m, pos_active.size)
            inc[used:] += joint_gaps[pos]
            used = n
            break
        plan, sup_pos, seq, XtX, P = _phase_plan(
            caches, action_set, pos_active, cfg, ell, "collaborative", m, k0
        )
        remaining = n - used
        if plan.total > remaining:
            cut = _truncated_block(sup_pos, plan, remaining)
            inc[used:] += joint_gaps[cut]
            _merge_event(events, ell, "collaborative", eps, remaining * m, pos_active.size)
            used = n
            break
        inc[used : used + plan.total] += joint_gaps[seq]
        Xs = action_set.matrix[sup_pos]
        scale = model.sigma0 * np.sqrt(plan.counts)
        Z = np.empty((m, sup_pos.size))
        for i in range(m):
            Z[i] = agent_rngs[i].standard_normal(sup_pos.size)
        theta_hats = ((XtX @ instance.thetas.T).T + (Z * scale) @ Xs) @ P.T
        mu_hat = theta_hats.mean(axis=0)
        keep = _within_margin(action_set.matrix[pos_active] @ mu_hat, eps)
        new_active = pos_active[keep]
        if records is not None:
            before = action_set.ids[pos_active].copy()
            after = action_set.ids[new_active].copy()
            for i in range(m):
                records.append(
                    dict(
                        phase=ell,
                        stage="collaborative",
                        agent=i,
                        eps=eps,
                        active_before=before,
                        active_after=after,
                        estimate=mu_hat,
                    )
                )
        _merge_event(events, ell, "collaborative", eps, plan.total * m, pos_active.size)
        pos_active = new_active
        used += plan.total
        collab_phases += 1
        ell += 1

    final_actives = [pos_active] * m
    if switched and used < n:
        final_actives = [
            _personal_run(
                action_set, cfg, m, k0, model.sigma0, instance.thetas[i], gaps[i],
                pos_active, ell, used, agent_rngs[i], caches, inc, events, records, i, mu_hat,
            )
            for i in range(m)
        ]

    event_list = [
        PhaseEvent(phase=p, stage=row[0], eps=row[1], pulls_total=row[2], min_active=row[3], max_active=row[4])
        for p, row in sorted(events.items())
    ]
    last_phase = max(events) if events else 1
    state = PhaseState(
        ell=last_phase,
        eps=2.0 ** (-last_phase),
        stage="exhausted",
        rounds_used=np.full(m, n, dtype=np.int64),
        collaborative_phases=collab_phases,
        active_sets=[action_set.subset(action_set.ids[p]) for p in final_actives],
    )
    return PolicyRun(
        cumulative=np.cumsum(inc),
        events=event_list,
        collaborative_phases=collab_phases,
        final_state=state,
        records=records,
    )


def _personal_run(
    action_set, cfg, m, k0, sigma0, theta, gap_row, pos0, ell0, used0,
    agent_rng, caches, inc, events, records, agent, estimate,
) -> np.ndarray:
    """One agent's personal continuation; returns its final active positions."""
    n = cfg.n
    pos_active = pos0
    used = used0
    ell = ell0
    while used < n:
        eps = 2.0 ** (-ell)
        if pos_active.size == 1 or ell > cfg.max_phases:
            pos = _terminal_position(action_set, pos_active, estimate)
            _merge_event(events, ell, "exhausted", eps, n - used, pos_active.size)
            inc[used:] += gap_row[pos]
            return pos_active
        plan, sup_pos, seq, XtX, P = _phase_plan(
            caches, action_set, pos_active, cfg, ell, "personal", m, k0
        )
        remaining = n - used
        if plan.total > remaining:
            cut = _truncated_block(sup_pos, plan, remaining)
            inc[used:] += gap_row[cut]
            _merge_event(events, ell, "personal", eps, remaining, pos_active.size)
            return pos_active
        inc[used : used + plan.total] += gap_row[seq]
        Xs = action_set.matrix[sup_pos]
        z = agent_rng.standard_normal(sup_pos.size)
        theta_hat = P @ (XtX @ theta + Xs.T @ (sigma0 * np.sqrt(plan.counts) * z))
        keep = _within_margin(action_set.matrix[pos_active] @ theta_hat, eps)
        new_active = pos_active[keep]
        if records is not None:
            records.append(
                dict(
                    phase=ell,
                    stage="personal",
                    agent=agent,
                    eps=eps,
                    active_before=action_set.ids[pos_active].copy(),
                    active_after=action_set.ids[new_active].copy(),
                    estimate=theta_hat,
                )
            )
        _merge_event(events, ell, "personal", eps, plan.total, pos_active.size)
        estimate = theta_hat
        pos_active = new_active
        used += plan.total
        ell += 1
    return pos_active


def _phase_plan(caches, action_set, pos_active, cfg, ell, stage, m, k0):
    """Design + pull plan + schedule for (active set, phase), memoized.

    Personal phases of agents holding the same active set share all of this,
    so the cache avoids re-solving the design and re-building the schedule.
    """
    design_cache, plan_cache = caches
    ids_key = tuple(int(i) for i in action_set.ids[pos_active])
    plan_key = (ids_key, ell, stage)
    hit = plan_cache.get(plan_key)
    if hit is not None:
        return hit
    design = design_cache.get(ids_key)
    if design is None:
        sub = ActionSet(action_set.matrix[pos_active], ids=action_set.ids[pos_active])
        try:
            design = solve_g_optimal(sub, tol=cfg.design_tol)
        except ConvergenceError as err:
            raise ConvergenceError(
                f"design solve failed at phase {ell} ({stage} stage, "
                f"{pos_active.size} active actions): {err}",
                best_design=err.best_design,
            ) from err
        design_cache[ids_key] = design
    if stage == "collaborative":
        plan = collaborative_pull_counts(design, design.g, 2.0 ** (-ell), m, k0, ell, cfg.delta, cfg)
    else:
        plan = local_pull_counts(design, design.g, 2.0 ** (-ell), m, k0, ell, cfg.delta, cfg)
    sup_pos = action_set.positions(plan.ids)
    seq = _round_robin(sup_pos, plan.counts)
    Xs = action_set.matrix[sup_pos]
    XtX = (Xs * plan.counts[:, None]).T @ Xs
    P = pseudo_inverse(XtX)
    entry = (plan, sup_pos, seq, XtX, P)
    plan_cache[plan_key] = entry
    return entry


def _round_robin(positions: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Interleave pulls pass-by-pass: every action still owed a pull plays each cycle."""
    total = int(counts.sum())
    cols = np.repeat(np.arange(positions.size), counts)
    starts = np.cumsum(counts) - counts
    occurrence = np.arange(total) - np.repeat(starts, counts)
    return positions[cols[np.lexsort((cols, occurrence))]]


def _truncated_block(positions: np.ndarray, plan: PullPlan, remaining: int) -> np.ndarray:
    """Weight-descending (then lowest-id) pull order, cut at the remaining budget."""
    order = np.lexsort((plan.ids, -plan.weights))
    return np.repeat(positions[order], plan.counts[order])[:remaining]


def _within_margin(values: np.ndarray, eps: float) -> np.ndarray:
    return values >= values.max() - 2.0 * eps


def _terminal_position(action_set: ActionSet, pos_active: np.ndarray, estimate) -> int:
    """Action played out after the last elimination: empirical best, lowest id on ties."""
    ids = action_set.ids[pos_active]
    if pos_active.size == 1 or estimate is None:
        return int(pos_active[np.argmin(ids)])
    values = action_set.matrix[pos_active] @ estimate
    return int(pos_active[np.lexsort((ids, -values))[0]])


def _merge_event(events: dict, phase: int, stage: str, eps: float, pulls: int, active_size: int):
    row = events.get(phase)
    if row is None:
        events[phase] = [stage, eps, pulls, active_size, active_size]
        return
    row[2] += pulls
    row[3] = min(row[3], active_size)
    row[4] = max(row[4], active_size)
    if row[0] == "exhausted" and stage != "exhausted":
        row[0] = stage
