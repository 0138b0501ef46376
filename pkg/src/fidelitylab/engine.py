"""Deterministic fixed-step simulation loop and episode metrics.

One tick advances the world in a fixed order: environment drift and shocks,
then per node sensing, error measurement, identity guarding, the adaptive
controller, the corrective behavior, and finally the social layer and
metrics. Everything downstream of the seed is deterministic, so a scenario
and a seed fully determine every exported byte.

Episodes are defined by the shock schedule: each shock opens a recovery
window over which the integrated |error| (trapezoid rule) and the time to
contract restoration are measured. Per-episode costs feed both the
strategy learning (rewards normalized against a passive worst-case
baseline computed in a calibration pre-run) and the final trend verdict:
a robust (Theil-Sen) slope of cost against episode index, normalized by
the first episode's cost. A clearly negative trend means the system keeps
getting better at absorbing shocks while running its elastic and resilient
repertoire — the property this laboratory exists to measure.
"""

from __future__ import annotations

import copy
import math
from collections import deque
from dataclasses import dataclass, field, replace
from fractions import Fraction
from statistics import median
from typing import Optional, Sequence

import numpy as np

from . import behavior as behavior_mod
from .behavior import Behavior, CorrectiveAction, HistoryEntry, Observation, Passive
from .collective import (
    NeighborView,
    ResourcePool,
    SocialAction,
    SocialActionKind,
    SocialBehavior,
    SocialState,
    apply_social_action,
    decide_social_action,
)
from .controller import (
    LearningState,
    Mode,
    ModeController,
    MonitorState,
    Safety,
    SafetyPredicate,
    Strategy,
    StrategyKind,
    assess_safety,
    evaluate_and_learn,
    monitor_step,
)
from .environment import (
    Constant,
    DriftProcess,
    EnvState,
    ShockEvent,
    apply_shock,
    label_regime,
    step_environment,
)
from .errors import ConfigurationError, InsufficientDataError
from .identity import (
    ContractStatus,
    DetectorConfig,
    IdentityClass,
    IdentityFailureDetector,
    IdentityFailureEvent,
    IdentityKind,
    check_contract,
    classify_trace,
    contract_utilization,
)
from .reflection import DeltaSample, ReflectiveMap, ideal_reflection, sense
from .rng import substream

TIME_EPS = 1e-9

#: Consecutive holding ticks required before a contract counts as restored.
RESTORATION_STREAK = 5


# -- scenario description ---------------------------------------------------


@dataclass
class FigureSpec:
    name: str
    unit: str = ""
    initial: float = 0.0
    process: DriftProcess = field(default_factory=Constant)


@dataclass
class ChannelSpec:
    """Actual channel parameters plus the contract's nominal ones."""

    gain: float = 1.0
    bias: float = 0.0
    noise_std: float = 0.0
    quantization: float = 0.0
    sampling_period: float = 0.1
    latency: float = 0.0
    nominal_gain: float = 1.0
    nominal_bias: float = 0.0
    bias_drift: Optional[DriftProcess] = None  # disturbance process on the bias


@dataclass
class ContractSpec:
    identity: IdentityClass
    window: int = 100
    at_risk_margin: float = 0.8
    # Optional full threshold ladder for the per-tick identity timeline;
    # None reuses the contract's own thresholds at every level.
    ladder: Optional[IdentityClass] = None

    def timeline_candidate(self) -> IdentityClass:
        if self.ladder is not None:
            return self.ladder
        base = (
            self.identity.hard_threshold
            or self.identity.soft_mean
            or self.identity.acceptability_bound
            or 1.0
        )
        return IdentityClass(
            kind=self.identity.kind,
            hard_threshold=self.identity.hard_threshold or base,
            soft_mean=self.identity.soft_mean or base,
            soft_std=self.identity.soft_std or base,
            acceptability_bound=self.identity.acceptability_bound or base,
        )


@dataclass
class ControllerSpec:
    smoothing: float = 0.1
    safety: SafetyPredicate = field(default_factory=SafetyPredicate)
    hysteresis: int = 10
    learning_enabled: bool = True
    algorithm: str = "ucb1"
    exploration: float = float(np.sqrt(2.0))
    epsilon: float = 0.1
    catalog: tuple[Strategy, ...] = ()


@dataclass
class NodeSpec:
    name: str
    figure: int = 0
    channel: ChannelSpec = field(default_factory=ChannelSpec)
    contract: Optional[ContractSpec] = None
    detector: Optional[DetectorConfig] = None
    behavior: Behavior = field(default_factory=Passive)
    social: Optional[SocialBehavior] = None
    member: bool = False
    controller: Optional[ControllerSpec] = None


@dataclass
class PoolSpec:
    total: float
    join_allocation: float = 1.0
    solo_capacity: float = 0.5
    floor: float = 0.0
    assist_quantum: float = 0.25
    reciprocation_weight: float = 2.0
    calm_window: int = 20


@dataclass
class Scenario:
    name: str = "scenario"
    duration: float = 10.0
    dt: float = 0.1
    seed: int = 0
    figures: list[FigureSpec] = field(default_factory=list)
    shocks: list[ShockEvent] = field(default_factory=list)
    nodes: list[NodeSpec] = field(default_factory=list)
    pool: Optional[PoolSpec] = None
    turbulence_threshold: float = 0.05
    regime_window: int = 20
    antifragility_threshold: float = 0.02
    record_identity: bool = True
    instrument: bool = False


# -- run products -----------------------------------------------------------


@dataclass(frozen=True)
class TickRow:
    time: float
    node: str
    figure: int
    raw: float
    quale: float
    delta: float
    mode: str
    contract_status: str


@dataclass(frozen=True)
class ChangeRecord:
    time: float
    node: str
    strategy_id: str
    kind: str
    ok: bool
    pre: str
    post: str


@dataclass(frozen=True)
class RecoveryMetrics:
    episode: int
    node: str
    cost: float  # integrated |delta| over the recovery window
    restoration_time: Optional[float]  # seconds after the shock, None if never
    strategy: Optional[str]


class Verdict:
    FRAGILE = "Fragile"
    ROBUST = "Robust"
    ANTIFRAGILE = "Antifragile"


@dataclass(frozen=True)
class AntifragilityReport:
    slope: float
    normalized_slope: float
    verdict: str
    episodes: int


@dataclass
class RunResult:
    scenario_name: str
    seed: int
    ticks: list[TickRow] = field(default_factory=list)
    node_times: dict[str, list[float]] = field(default_factory=dict)
    node_deltas: dict[str, list[float]] = field(default_factory=dict)
    node_status: dict[str, list[Optional[ContractStatus]]] = field(default_factory=dict)
    node_modes: dict[str, list[Optional[Mode]]] = field(default_factory=dict)
    node_verdicts: dict[str, list[Safety]] = field(default_factory=dict)
    identity_rows: list[tuple[float, str, str]] = field(default_factory=list)
    regime_rows: list[tuple[float, str]] = field(default_factory=list)
    failure_events: list[tuple[str, IdentityFailureEvent]] = field(default_factory=list)
    changes: list[ChangeRecord] = field(default_factory=list)
    pool_log: list[tuple[float, str, float, float]] = field(default_factory=list)
    pool_violations: int = 0
    recovery: list[RecoveryMetrics] = field(default_factory=list)
    learning_docs: dict[str, dict] = field(default_factory=dict)
    overhead_counters: dict[str, int] = field(default_factory=dict)
    baselines: dict[str, float] = field(default_factory=dict)
    antifragility: Optional[AntifragilityReport] = None
    node_antifragility: dict[str, AntifragilityReport] = field(default_factory=dict)
    stage_log: list[str] = field(default_factory=list)
    config_echo: Optional[dict] = None


# -- validation ---------------------------------------------------------------


def validate_scenario(scenario: Scenario) -> list[str]:
    """Collect every configuration problem, not just the first."""
    problems: list[str] = []
    if scenario.dt <= 0:
        problems.append("dt: must be > 0")
    if scenario.duration < 0:
        problems.append("duration: must be >= 0")
    if scenario.dt > 0:
        ticks = scenario.duration / scenario.dt
        if abs(ticks - round(ticks)) > 1e-6:
            problems.append("duration: must be an integer number of dt ticks")
    if not scenario.figures:
        problems.append("figures: at least one figure is required")
    if scenario.turbulence_threshold <= 0:
        problems.append("turbulence_threshold: must be > 0")
    if scenario.regime_window < 1:
        problems.append("regime_window: must be >= 1")

    n = len(scenario.figures)
    for i, fig in enumerate(scenario.figures):
        for msg in fig.process.validate():
            problems.append(f"figures[{i}].process: {msg}")

    figure_end: dict[int, float] = {}
    last_at = -math.inf
    for i, shock in enumerate(scenario.shocks):
        prefix = f"shocks[{i}]"
        for msg in shock.validate():
            problems.append(f"{prefix}: {msg}")
        if not 0 <= shock.figure < max(n, 1):
            problems.append(f"{prefix}.figure: index {shock.figure} out of range")
        if shock.at <= last_at:
            problems.append(f"{prefix}.at: shock times must strictly increase")
        # Windows may overlap across figures (partial shocks); never on one figure.
        if shock.at < figure_end.get(shock.figure, -math.inf) - TIME_EPS:
            problems.append(f"{prefix}: recovery windows must not overlap on one figure")
        if shock.at + shock.recovery_window > scenario.duration + TIME_EPS:
            problems.append(f"{prefix}: recovery window extends past the run")
        last_at = shock.at
        figure_end[shock.figure] = shock.at + shock.recovery_window

    if scenario.pool is not None:
        pool = scenario.pool
        if pool.total <= 0:
            problems.append("pool.total: must be > 0")
        for key in ("join_allocation", "solo_capacity", "floor"):
            if getattr(pool, key) < 0:
                problems.append(f"pool.{key}: must be >= 0")
        if pool.assist_quantum <= 0:
            problems.append("pool.assist_quantum: must be > 0")
        if pool.calm_window < 1:
            problems.append("pool.calm_window: must be >= 1")

    names = set()
    for i, node in enumerate(scenario.nodes):
        prefix = f"nodes[{i}]"
        if node.name in names:
            problems.append(f"{prefix}.name: duplicate node name {node.name!r}")
        names.add(node.name)
        if not 0 <= node.figure < max(n, 1):
            problems.append(f"{prefix}.figure: index {node.figure} out of range")
        ch = node.channel
        cmap = ReflectiveMap(
            figure=node.figure,
            gain=ch.gain,
            bias=ch.bias,
            noise_std=ch.noise_std,
            quantization=ch.quantization,
            sampling_period=ch.sampling_period,
            latency=ch.latency,
        )
        for msg in cmap.validate():
            problems.append(f"{prefix}.channel: {msg}")
        if ch.sampling_period > 0 and scenario.dt > 0:
            ratio = ch.sampling_period / scenario.dt
            if abs(ratio - round(ratio)) > 1e-6 or round(ratio) < 1:
                problems.append(
                    f"{prefix}.channel.sampling_period: must be a positive "
                    "integer multiple of dt"
                )
        if ch.bias_drift is not None:
            for msg in ch.bias_drift.validate():
                problems.append(f"{prefix}.channel.bias_drift: {msg}")
        if node.contract is not None:
            for msg in node.contract.identity.validate():
                problems.append(f"{prefix}.contract: {msg}")
            if node.contract.window < 1:
                problems.append(f"{prefix}.contract.window: must be >= 1")
            if node.contract.identity.kind is IdentityKind.NON_RT:
                problems.append(
                    f"{prefix}.contract: the unconstrained class is spelled "
                    "by omitting the contract"
                )
        if node.detector is not None:
            for msg in node.detector.validate():
                problems.append(f"{prefix}.detector: {msg}")
            if node.contract is None:
                problems.append(f"{prefix}.detector: requires a contract")
        for msg in node.behavior.validate(context_variables=1 + n):
            problems.append(f"{prefix}.behavior: {msg}")
        if node.social is not None and scenario.pool is None:
            problems.append(f"{prefix}.social: requires a pool section")
        if node.member and scenario.pool is None:
            problems.append(f"{prefix}.member: requires a pool section")
        if node.controller is not None:
            ctrl = node.controller
            if not 0 < ctrl.smoothing <= 1:
                problems.append(f"{prefix}.controller.smoothing: must be in (0, 1]")
            for msg in ctrl.safety.validate():
                problems.append(f"{prefix}.controller.safety: {msg}")
            if ctrl.hysteresis < 1:
                problems.append(f"{prefix}.controller.hysteresis: must be >= 1")
            if ctrl.algorithm not in ("ucb1", "epsilon_greedy"):
                problems.append(
                    f"{prefix}.controller.algorithm: unknown {ctrl.algorithm!r}"
                )
            ids = [s.id for s in ctrl.catalog]
            if len(set(ids)) != len(ids):
                problems.append(f"{prefix}.controller.catalog: duplicate strategy ids")
            for j, strategy in enumerate(ctrl.catalog):
                sp = f"{prefix}.controller.catalog[{j}]"
                if strategy.kind is StrategyKind.RECONFIGURE:
                    if strategy.behavior_spec is None and strategy.channel_spec is None:
                        problems.append(f"{sp}: reconfigure needs a behavior or channel")
                    if strategy.behavior_spec is not None:
                        try:
                            beh = behavior_mod.behavior_from_spec(strategy.behavior_spec)
                            for msg in beh.validate(context_variables=1 + n):
                                problems.append(f"{sp}.behavior: {msg}")
                        except ConfigurationError as exc:
                            problems.append(f"{sp}.behavior: {exc}")
                elif strategy.kind is StrategyKind.SOCIAL:
                    if strategy.social_spec is None:
                        problems.append(f"{sp}: social strategy needs an action")
                    elif node.social is None:
                        problems.append(f"{sp}: social strategy on an asocial node")
    return problems


# -- per-node runtime state ---------------------------------------------------


class SimNode:
    """Mutable runtime state for one simulated node."""

    def __init__(self, spec: NodeSpec, scenario: Scenario, passive_override: bool):
        self.spec = spec
        self.name = spec.name
        self.figure = spec.figure
        self.dt = scenario.dt
        ch = spec.channel
        self.gain = ch.gain
        self.bias = ch.bias
        self.noise_std = ch.noise_std
        self.quantization = ch.quantization
        self.latency = ch.latency
        self.sampling_period = ch.sampling_period
        self.period_ticks = max(1, round(ch.sampling_period / scenario.dt))
        self.bias_drift = copy.deepcopy(ch.bias_drift)
        self.nominal_gain = ch.nominal_gain
        self.nominal_bias = ch.nominal_bias

        self.correction_bias = 0.0
        self.correction_gain = 1.0
        self.pending_qualia: list = []
        # Boot convention: before the first quale arrives the node reports
        # the nominal reflection of the initial raw value.
        self.current_value: Optional[float] = None

        self.elastic_behavior = copy.deepcopy(spec.behavior)
        if passive_override:
            self.elastic_behavior = Passive()
        self.behavior: Behavior = self.elastic_behavior
        self.pending_behavior: Optional[Behavior] = None
        self.pending_channel: Optional[dict] = None

        self.contract = spec.contract
        self.window: deque[DeltaSample] = deque(
            maxlen=spec.contract.window if spec.contract else 100
        )
        # Best-effort systems do not watch their own error: the guard is
        # withheld from them even when a detector section is configured.
        self.detector: Optional[IdentityFailureDetector] = None
        if (
            spec.detector is not None
            and spec.contract is not None
            and spec.contract.identity.kind
            in (IdentityKind.HARD_RT, IdentityKind.SOFT_RT)
            and not passive_override
        ):
            self.detector = IdentityFailureDetector(spec.contract.identity, spec.detector)

        self.controller_spec = None if passive_override else spec.controller
        self.monitor: Optional[MonitorState] = None
        self.mode_controller: Optional[ModeController] = None
        self.learning: Optional[LearningState] = None
        if self.controller_spec is not None:
            ctrl = self.controller_spec
            self.monitor = MonitorState(ctrl.smoothing, ctrl.safety.horizon)
            self.mode_controller = ModeController(ctrl.hysteresis)
            if ctrl.catalog:
                self.learning = LearningState(
                    list(ctrl.catalog),
                    exploration=ctrl.exploration,
                    algorithm=ctrl.algorithm,
                    epsilon=ctrl.epsilon,
                )
        self.active_strategy: Optional[Strategy] = None
        self.social = None if passive_override else spec.social
        self.social_state = SocialState()
        self.overhead = 0  # model-building operations; stays 0 while elastic

        self.times: list[float] = []
        self.deltas: list[float] = []
        self.statuses: list[Optional[ContractStatus]] = []
        self.modes: list[Optional[Mode]] = []
        self.verdicts: list[Safety] = []
        self.last_reported = 0.0
        self.last_raw = 0.0
        self.utilization: Optional[float] = None
        self.status: Optional[ContractStatus] = None
        self.obs_history: deque[HistoryEntry] = deque(maxlen=32)
        self.episode_strategy: dict[int, Optional[str]] = {}
        self.episode_regime: dict[int, str] = {}
        self.episode_failed: dict[int, bool] = {}

    # -- channel ------------------------------------------------------------

    def reflective_map(self) -> ReflectiveMap:
        return ReflectiveMap(
            figure=self.figure,
            gain=self.gain,
            bias=self.bias,
            noise_std=self.noise_std,
            quantization=self.quantization,
            sampling_period=self.period_ticks * self.dt,
            latency=self.latency,
        )

    def sense_if_due(self, tick: int, t: float, raw: float, rng) -> None:
        if tick % self.period_ticks == 0:
            self.pending_qualia.append(sense(self.reflective_map(), raw, t, rng))

    def visible_value(self, t: float, initial_raw: float) -> float:
        arrived = [q for q in self.pending_qualia if q.acquired_at <= t + TIME_EPS]
        if arrived:
            self.current_value = arrived[-1].value
            self.pending_qualia = [
                q for q in self.pending_qualia if q.acquired_at > t + TIME_EPS
            ]
        if self.current_value is None:
            return ideal_reflection(self.nominal_gain, self.nominal_bias, initial_raw)
        return self.current_value

    def apply_pending(self) -> None:
        if self.pending_behavior is not None:
            self.behavior = self.pending_behavior
            self.pending_behavior = None
        if self.pending_channel is not None:
            spec = self.pending_channel
            self.pending_channel = None
            for key in ("gain", "bias", "noise_std", "quantization", "latency"):
                if key in spec:
                    setattr(self, key, float(spec[key]))
            if "sampling_period" in spec:
                self.period_ticks = max(1, round(float(spec["sampling_period"]) / self.dt))

    def apply_action(self, action: CorrectiveAction, capacity: float) -> float:
        applied = min(max(action.bias, -capacity), capacity)
        self.correction_bias += applied
        self.correction_gain *= action.gain
        if action.resample is not None:
            self.period_ticks = max(1, round(action.resample / self.dt))
        return applied


def _behavior_label(behavior: Behavior) -> str:
    return type(behavior).__name__


def enact_strategy(
    node: SimNode, strategy: Strategy, t: float
) -> tuple[ChangeRecord, Optional[SocialAction]]:
    """Stage a strategy on a node.

    Reconfiguration lands atomically at the next tick boundary; a social
    action is returned for the pool stage of this tick. The change record
    notes the pre/post shape of the node.
    """
    pre = f"behavior={_behavior_label(node.behavior)} period_ticks={node.period_ticks}"
    if strategy.kind is StrategyKind.RECONFIGURE:
        if strategy.behavior_spec is not None:
            node.pending_behavior = behavior_mod.behavior_from_spec(strategy.behavior_spec)
        if strategy.channel_spec is not None:
            node.pending_channel = dict(strategy.channel_spec)
        next_behavior = node.pending_behavior or node.behavior
        next_period = node.period_ticks
        if node.pending_channel and "sampling_period" in node.pending_channel:
            next_period = max(
                1, round(float(node.pending_channel["sampling_period"]) / node.dt)
            )
        post = f"behavior={_behavior_label(next_behavior)} period_ticks={next_period}"
        record = ChangeRecord(
            time=t, node=node.name, strategy_id=strategy.id,
            kind="reconfigure", ok=True, pre=pre, post=post,
        )
        return record, None

    spec = strategy.social_spec or {}
    kind = SocialActionKind(spec["kind"])
    amount = Fraction(str(spec["amount"])) if "amount" in spec else Fraction(0)
    action = SocialAction(kind=kind, amount=amount, target=spec.get("target"))
    record = ChangeRecord(
        time=t, node=node.name, strategy_id=strategy.id,
        kind="social", ok=True, pre=pre, post=f"social={spec}",
    )
    return record, action


# -- episode metrics ----------------------------------------------------------


def episode_cost(
    times: Sequence[float], deltas: Sequence[float], start: float, end: float
) -> float:
    """Trapezoid-rule integral of |delta| over [start, end]."""
    pts = [
        (t, abs(d))
        for t, d in zip(times, deltas)
        if start - TIME_EPS <= t <= end + TIME_EPS
    ]
    total = 0.0
    for (t0, d0), (t1, d1) in zip(pts[:-1], pts[1:]):
        total += 0.5 * (d0 + d1) * (t1 - t0)
    return total


def restoration_time(
    times: Sequence[float],
    statuses: Sequence[Optional[ContractStatus]],
    shock_at: float,
    window_end: float,
    streak: int = RESTORATION_STREAK,
) -> Optional[float]:
    """First post-shock instant from which the contract holds for `streak`
    consecutive ticks, as seconds after the shock. None when never restored
    (or the node carries no contract). The streak may extend past the
    window end, but its start must fall inside the window."""
    run = 0
    start_idx: Optional[int] = None
    for i, (t, status) in enumerate(zip(times, statuses)):
        if t <= shock_at + TIME_EPS:
            continue
        if status is ContractStatus.HOLDING:
            if run == 0:
                start_idx = i
            run += 1
            if run >= streak:
                start_t = times[start_idx]
                if start_t <= window_end + TIME_EPS:
                    return start_t - shock_at
                return None
        else:
            run = 0
            start_idx = None
        if t > window_end + TIME_EPS and run == 0:
            return None
    return None


def compute_recovery_metrics(
    times: Sequence[float],
    deltas: Sequence[float],
    statuses: Sequence[Optional[ContractStatus]],
    shocks: Sequence[ShockEvent],
    node: str = "",
    strategies: Optional[dict[int, Optional[str]]] = None,
) -> list[RecoveryMetrics]:
    """Per-episode cost and restoration for one node's recorded trace."""
    metrics = []
    for index, shock in enumerate(shocks):
        end = shock.at + shock.recovery_window
        cost = episode_cost(times, deltas, shock.at, end)
        restored = restoration_time(times, statuses, shock.at, end)
        strategy = (strategies or {}).get(index)
        metrics.append(
            RecoveryMetrics(
                episode=index, node=node, cost=cost,
                restoration_time=restored, strategy=strategy,
            )
        )
    return metrics


def theil_sen_slope(values: Sequence[float]) -> float:
    """Median of all pairwise slopes against the index."""
    n = len(values)
    slopes = [
        (values[j] - values[i]) / (j - i)
        for i in range(n)
        for j in range(i + 1, n)
    ]
    return float(median(slopes))


def antifragility_score(
    costs: Sequence[float], threshold: float = 0.02
) -> AntifragilityReport:
    """Trend verdict over per-episode costs.

    The Theil-Sen slope (robust to a single bad episode) is normalized by
    the first episode's cost; a normalized slope below -threshold is
    Antifragile, above +threshold is Fragile, Robust otherwise.
    """
    if len(costs) < 4:
        raise InsufficientDataError(
            f"need at least 4 episodes, got {len(costs)}"
        )
    slope = theil_sen_slope(costs)
    first = costs[0]
    if first > 0:
        normalized = slope / first
    else:
        normalized = 0.0 if slope == 0 else math.copysign(math.inf, slope)
    if normalized < -threshold:
        verdict = Verdict.ANTIFRAGILE
    elif normalized > threshold:
        verdict = Verdict.FRAGILE
    else:
        verdict = Verdict.ROBUST
    return AntifragilityReport(
        slope=slope, normalized_slope=normalized,
        verdict=verdict, episodes=len(costs),
    )


# -- the loop -----------------------------------------------------------------


def run_scenario(
    scenario: Scenario, resume_learning: Optional[dict[str, dict]] = None
) -> RunResult:
    """Validate, calibrate if learning needs a reward baseline, and execute."""
    problems = validate_scenario(scenario)
    if problems:
        raise ConfigurationError(problems)
    baselines: dict[str, float] = {}
    needs_baseline = scenario.shocks and any(
        node.controller is not None
        and node.controller.catalog
        and node.controller.learning_enabled
        for node in scenario.nodes
    )
    if needs_baseline:
        calibration = _execute(scenario, baselines={}, passive_override=True)
        for node in scenario.nodes:
            episode_costs = [
                m.cost for m in calibration.recovery if m.node == node.name
            ]
            baselines[node.name] = max(episode_costs) if episode_costs else 1.0
    result = _execute(
        scenario, baselines=baselines, passive_override=False,
        resume_learning=resume_learning,
    )
    result.baselines = baselines
    return result


def _execute(
    scenario: Scenario,
    baselines: dict[str, float],
    passive_override: bool,
    resume_learning: Optional[dict[str, dict]] = None,
) -> RunResult:
    result = RunResult(scenario_name=scenario.name, seed=scenario.seed)
    dt = scenario.dt
    n_ticks = round(scenario.duration / dt)

    env = EnvState(time=0.0, figures=tuple(f.initial for f in scenario.figures))
    initial_figures = env.figures
    processes = [copy.deepcopy(f.process) for f in scenario.figures]
    figure_rngs = [
        substream(scenario.seed, "figure", i, "drift")
        for i in range(len(scenario.figures))
    ]
    env_history: deque[EnvState] = deque(maxlen=scenario.regime_window + 1)
    env_history.append(env)

    nodes = [SimNode(spec, scenario, passive_override) for spec in scenario.nodes]
    node_rngs = {
        node.name: {
            "noise": substream(scenario.seed, "node", node.name, "noise"),
            "bias": substream(scenario.seed, "node", node.name, "bias-drift"),
            "select": substream(scenario.seed, "node", node.name, "select"),
        }
        for node in nodes
    }
    if resume_learning and not passive_override:
        for node in nodes:
            doc = resume_learning.get(node.name)
            if doc is not None:
                if node.learning is None:
                    raise ConfigurationError(
                        [f"nodes[{node.name}]: resume state for a node without learning"]
                    )
                node.learning.load_document(doc)

    pool: Optional[ResourcePool] = None
    pool_spec = scenario.pool
    if pool_spec is not None and not passive_override:
        pool = ResourcePool(
            total=Fraction(str(pool_spec.total)),
            floor=Fraction(str(pool_spec.floor)),
            join_allocation=Fraction(str(pool_spec.join_allocation)),
        )
        for node in nodes:
            if node.spec.member:
                pool.join(node.name)

    episodes = list(enumerate(scenario.shocks))
    applied_shocks = [False] * len(scenario.shocks)
    open_episodes: set[int] = set()
    closed_episodes: set[int] = set()
    pending_social: list[tuple[SimNode, SocialAction, Optional[int]]] = []

    # Initial sensing at t=0 so slow channels have a value to hold.
    for node in nodes:
        node.sense_if_due(0, 0.0, env.figures[node.figure], node_rngs[node.name]["noise"])

    def stage(label: str) -> None:
        if scenario.instrument:
            result.stage_log.append(label)

    for tick in range(1, n_ticks + 1):
        t = tick * dt

        stage("boundary")
        for node in nodes:
            node.apply_pending()

        stage("environment")
        env = step_environment(env, processes, dt, figure_rngs)
        opened_now = []
        for index, shock in episodes:
            if not applied_shocks[index] and shock.at <= t + TIME_EPS:
                env = apply_shock(env, shock)
                applied_shocks[index] = True
                open_episodes.add(index)
                opened_now.append(index)
        env_history.append(env)
        regime = label_regime(list(env_history), scenario.turbulence_threshold)
        env = replace(env, regime=regime)
        env_history[-1] = env
        result.regime_rows.append((t, regime.value))
        for index in opened_now:
            # A strategy already in force when the shock lands owns the episode.
            for node in nodes:
                if node.active_strategy is not None:
                    node.episode_strategy.setdefault(index, node.active_strategy.id)
                    node.episode_regime.setdefault(index, regime.value)

        for node in nodes:
            rngs = node_rngs[node.name]

            stage("sensing")
            if node.bias_drift is not None:
                node.bias = node.bias_drift.step(node.bias, dt, rngs["bias"])
            raw = env.figures[node.figure]
            node.sense_if_due(tick, t, raw, rngs["noise"])
            reported = (
                node.correction_gain * node.visible_value(t, initial_figures[node.figure])
                + node.correction_bias
            )
            node.last_reported = reported
            node.last_raw = raw

            stage("delta")
            ideal = ideal_reflection(node.nominal_gain, node.nominal_bias, raw)
            sample = DeltaSample(time=t, figure=node.figure, delta=reported - ideal)
            node.window.append(sample)
            node.times.append(t)
            node.deltas.append(sample.delta)

            stage("identity")
            if node.contract is not None:
                node.status = check_contract(
                    list(node.window), node.contract.identity,
                    node.contract.at_risk_margin,
                )
                node.utilization = contract_utilization(
                    list(node.window), node.contract.identity
                )
                if scenario.record_identity:
                    label = classify_trace(
                        list(node.window),
                        node.contract.timeline_candidate(),
                        window=len(node.window),
                    ).label()
                    result.identity_rows.append((t, node.name, label))
                if node.detector is not None:
                    event = node.detector.update(sample)
                    if event is not None:
                        result.failure_events.append((node.name, event))
            else:
                node.status = None
                node.utilization = None
                if scenario.record_identity:
                    result.identity_rows.append((t, node.name, IdentityKind.NON_RT.value))
            node.statuses.append(node.status)

            stage("controller")
            mode: Optional[Mode] = None
            if node.monitor is not None:
                monitor_step(node.monitor, sample, regime.value)
                verdict = assess_safety(
                    node.monitor, node.controller_spec.safety, node.status
                )
                node.verdicts.append(verdict)
                previous = node.mode_controller.mode
                mode = node.mode_controller.step(verdict)
                if mode is Mode.RESILIENT:
                    if (
                        node.active_strategy is None
                        and node.controller_spec.catalog
                    ):
                        node.overhead += 1
                        if node.controller_spec.learning_enabled:
                            strategy = node.learning.select(regime.value, rngs["select"])
                        else:
                            strategy = node.controller_spec.catalog[0]
                        node.active_strategy = strategy
                        record, social_action = enact_strategy(node, strategy, t)
                        current_episode = _containing_episode(episodes, t)
                        if social_action is not None:
                            pending_social.append((node, social_action, current_episode))
                        result.changes.append(record)
                        if current_episode is not None and current_episode in open_episodes:
                            node.episode_strategy.setdefault(current_episode, strategy.id)
                            node.episode_regime.setdefault(current_episode, regime.value)
                elif previous is Mode.RESILIENT and mode is Mode.ELASTIC:
                    # Back to the cheap path: restore the elastic design.
                    node.pending_behavior = copy.deepcopy(node.elastic_behavior)
                    node.active_strategy = None
            node.modes.append(mode)

            stage("behavior")
            obs = Observation(
                latest=sample,
                goal_margin=node.utilization,
                history=tuple(node.obs_history),
                context=env.figures,
                correction=node.correction_bias,
            )
            action = node.behavior.act(obs)
            node.obs_history.append(
                HistoryEntry(
                    time=t, delta=sample.delta,
                    context=env.figures, correction=node.correction_bias,
                )
            )
            capacity = _capacity(pool, pool_spec, node)
            node.apply_action(action, capacity)

        stage("collective")
        if pool is not None:
            for node, social_action, episode_index in pending_social:
                ok = apply_social_action(
                    pool, node.name, social_action,
                    states={m.name: m.social_state for m in nodes},
                )
                if not ok:
                    result.changes.append(
                        ChangeRecord(
                            time=t, node=node.name,
                            strategy_id=node.active_strategy.id
                            if node.active_strategy else "",
                            kind="social", ok=False,
                            pre="", post="infeasible",
                        )
                    )
                    if episode_index is not None:
                        node.episode_failed[episode_index] = True
            pending_social.clear()
            neighbors = [
                NeighborView(name=m.name, status=m.status, utilization=m.utilization)
                for m in nodes
            ]
            for node in nodes:
                if node.social is None:
                    continue
                if node.status is ContractStatus.HOLDING:
                    node.social_state.calm_ticks += 1
                else:
                    node.social_state.calm_ticks = 0
                decision = decide_social_action(
                    node.name, node.status, node.social, pool, neighbors,
                    node.social_state, utilization=node.utilization,
                    calm_window=pool_spec.calm_window,
                    assist_quantum=Fraction(str(pool_spec.assist_quantum)),
                    reciprocation_weight=pool_spec.reciprocation_weight,
                )
                if decision is not None:
                    apply_social_action(
                        pool, node.name, decision,
                        states={m.name: m.social_state for m in nodes},
                    )
            if not pool.conserved():
                result.pool_violations += 1
            reserve = float(pool.reserve)
            for node in nodes:
                result.pool_log.append(
                    (t, node.name, float(pool.allocation(node.name)), reserve)
                )
        else:
            pending_social.clear()

        stage("metrics")
        for node in nodes:
            mode = node.modes[-1]
            status = node.statuses[-1]
            result.ticks.append(
                TickRow(
                    time=t, node=node.name, figure=node.figure,
                    raw=node.last_raw,
                    quale=node.last_reported,
                    delta=node.deltas[-1],
                    mode=mode.value if mode is not None else "",
                    contract_status=status.value if status is not None else "",
                )
            )

        for index, shock in episodes:
            end = shock.at + shock.recovery_window
            if index in open_episodes and index not in closed_episodes and t >= end - TIME_EPS:
                closed_episodes.add(index)
                for node in nodes:
                    strategy_id = node.episode_strategy.get(index)
                    if (
                        strategy_id is not None
                        and node.learning is not None
                        and node.controller_spec is not None
                        and node.controller_spec.learning_enabled
                    ):
                        node.overhead += 1
                        cost = episode_cost(node.times, node.deltas, shock.at, end)
                        baseline = baselines.get(node.name, 1.0)
                        strategy = next(
                            s for s in node.learning.catalog if s.id == strategy_id
                        )
                        if node.episode_failed.get(index):
                            node.learning.update(
                                node.episode_regime.get(index, regime.value),
                                strategy_id, 0.0, index,
                            )
                        else:
                            evaluate_and_learn(
                                node.learning, cost, baseline, strategy,
                                node.episode_regime.get(index, regime.value), index,
                            )
                    # The episode's outcome is measured: while conditions stay
                    # unsafe the loop plans again, so a still-resilient node
                    # reselects on the next tick.
                    if node.episode_strategy.get(index) is not None:
                        node.active_strategy = None

    # -- wrap-up ---------------------------------------------------------

    for node in nodes:
        result.node_times[node.name] = node.times
        result.node_deltas[node.name] = node.deltas
        result.node_status[node.name] = node.statuses
        result.node_modes[node.name] = node.modes
        result.node_verdicts[node.name] = node.verdicts
        result.overhead_counters[node.name] = node.overhead
        if node.learning is not None:
            result.learning_docs[node.name] = node.learning.to_document()
        result.recovery.extend(
            compute_recovery_metrics(
                node.times, node.deltas, node.statuses, scenario.shocks,
                node=node.name, strategies=node.episode_strategy,
            )
        )

    if len(scenario.shocks) >= 4 and nodes:
        per_episode = []
        for index, _ in episodes:
            costs = [m.cost for m in result.recovery if m.episode == index]
            per_episode.append(float(np.mean(costs)))
        result.antifragility = antifragility_score(
            per_episode, scenario.antifragility_threshold
        )
        for node in nodes:
            costs = [m.cost for m in result.recovery if m.node == node.name]
            result.node_antifragility[node.name] = antifragility_score(
                costs, scenario.antifragility_threshold
            )
    return result


def _containing_episode(
    episodes: list[tuple[int, ShockEvent]], t: float
) -> Optional[int]:
    for index, shock in episodes:
        if shock.at - TIME_EPS <= t <= shock.at + shock.recovery_window + TIME_EPS:
            return index
    return None


def _capacity(
    pool: Optional[ResourcePool], spec: Optional[PoolSpec], node: SimNode
) -> float:
    if pool is None or spec is None:
        return math.inf
    if pool.is_member(node.name):
        return float(pool.allocation(node.name))
    return spec.solo_capacity
