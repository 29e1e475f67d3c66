"""Day-by-day replay of the issue tracker.

The loop ingests each test day's events, builds a triage instance from
the currently feasible bugs, lets the configured strategy produce a
plan, commits the plan into slot calendars and the in-progress ledger,
and rolls the clock forward. Committed work occupies its slot for the
estimated number of days and emits a simulated fix at the end; only the
ground-truth replay uses historical durations.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from .costs import CostMatrix
from .ingest import EventKind, RawEvent
from .model import BugRecord, BugStatus, CycleError, DependencyGraph, DeveloperProfile
from .strategies import (
    InstanceBug,
    InstanceDeveloper,
    TriageInstance,
    rank_cbr,
    rank_costriage,
    replay_actual,
    solve_dabt,
    solve_rabt,
    solve_sdabt,
    validate_plan,
)
from .text import SuitabilityModel, preprocess
from .topics import TopicModel


class Strategy(str, Enum):
    ACTUAL = "actual"
    CBR = "cbr"
    COSTRIAGE = "costriage"
    RABT = "rabt"
    DABT = "dabt"
    SDABT = "sdabt"


@dataclass
class SimulationConfig:
    strategy: Strategy = Strategy.SDABT
    alpha: float = 0.5
    horizon: object = "auto"  # positive int, or "auto" = Q3 of training fixing times
    seed: int = 0
    node_budget: int = 5_000_000
    time_budget: Optional[float] = None
    test_window: Tuple[int, int] = (0, 0)
    off_days: Set[int] = field(default_factory=set)  # absolute day indices
    developer_off_days: Dict[str, Set[int]] = field(default_factory=dict)
    lp_dir: Optional[str] = None  # dump each day's compiled program here

    def __post_init__(self) -> None:
        self.strategy = Strategy(self.strategy)
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        if self.horizon != "auto" and int(self.horizon) < 1:
            raise ValueError("horizon must be >= 1 or 'auto'")


def resolve_horizon(config: SimulationConfig, training_records: Dict[str, BugRecord]) -> int:
    if config.horizon != "auto":
        return int(config.horizon)
    times = [
        r.fixing_time_days
        for r in training_records.values()
        if r.fixing_time_days is not None
    ]
    if not times:
        raise ValueError("cannot derive a horizon from a window with no fixing times")
    return max(1, int(np.percentile(times, 75)))


class ValidationFailure(RuntimeError):
    def __init__(self, day: int, problems: List[str]):
        self.day = day
        self.problems = problems
        super().__init__(f"day {day}: " + "; ".join(problems))


# ---------------------------------------------------------------------------
# parameter providers
# ---------------------------------------------------------------------------

class MatrixParamProvider:
    """Suitability and cost straight from preset matrices (tests, synthetic)."""

    def __init__(
        self,
        profiles: Sequence[DeveloperProfile],
        suitability: Dict[str, Dict[str, float]],
        cost: Dict[str, Dict[str, int]],
    ):
        self.profiles = list(profiles)
        self._suitability = suitability
        self._cost = cost

    def developers(self) -> List[DeveloperProfile]:
        return self.profiles

    def suitability(self, bug: BugRecord) -> Dict[str, float]:
        return dict(self._suitability[bug.id])

    def cost(self, bug: BugRecord, developer: str) -> int:
        return self._cost[bug.id][developer]


class TrainedParamProvider:
    """Parameters from the trained text models and the cost matrix."""

    def __init__(
        self,
        profiles: Sequence[DeveloperProfile],
        suitability_model: SuitabilityModel,
        topic_model: TopicModel,
        cost_matrix: CostMatrix,
    ):
        self.profiles = list(profiles)
        self.suitability_model = suitability_model
        self.topic_model = topic_model
        self.cost_matrix = cost_matrix
        self._cache: Dict[str, Tuple[Dict[str, float], int]] = {}

    def developers(self) -> List[DeveloperProfile]:
        return self.profiles

    def _params(self, bug: BugRecord) -> Tuple[Dict[str, float], int]:
        if bug.id not in self._cache:
            tokens = preprocess(bug.summary, bug.description)
            self._cache[bug.id] = (
                self.suitability_model.scores(tokens),
                self.topic_model.topic_of(tokens),
            )
        return self._cache[bug.id]

    def suitability(self, bug: BugRecord) -> Dict[str, float]:
        return dict(self._params(bug)[0])

    def cost(self, bug: BugRecord, developer: str) -> int:
        return self.cost_matrix.integer_days(developer, self._params(bug)[1])


# ---------------------------------------------------------------------------
# ledger
# ---------------------------------------------------------------------------

@dataclass
class AssignmentRecord:
    bug_id: str
    developer: str
    slot: int
    assign_day: int  # absolute day the plan was committed
    start_day: int  # absolute first working day
    completion_day: int  # absolute last working day
    duration: int


@dataclass
class SimulationLedgerDay:
    day: int
    assigned: List[AssignmentRecord] = field(default_factory=list)
    completed: List[str] = field(default_factory=list)
    deferred_count: int = 0
    open_bug_count: int = 0
    busy_slots: Dict[str, int] = field(default_factory=dict)
    busy_developers: int = 0
    bdg_mean_degree: float = 0.0
    bdg_mean_depth: float = 0.0
    conservation: Dict[str, int] = field(default_factory=dict)


@dataclass
class SimulationLedger:
    strategy: Strategy
    alpha: float
    horizon: int
    developers: Dict[str, int] = field(default_factory=dict)  # id -> slot_count
    days: List[SimulationLedgerDay] = field(default_factory=list)
    assignments: Dict[str, AssignmentRecord] = field(default_factory=dict)
    never_assigned: List[str] = field(default_factory=list)
    total_bugs: int = 0
    ground_truth: Dict[str, Dict[str, object]] = field(default_factory=dict)
    run_wall_time: float = 0.0

    @property
    def capacity(self) -> int:
        return sum(self.developers.values())

    def to_json(self) -> str:
        def rec(a: AssignmentRecord) -> Dict[str, object]:
            return {
                "bug_id": a.bug_id,
                "developer": a.developer,
                "slot": a.slot,
                "assign_day": a.assign_day,
                "start_day": a.start_day,
                "completion_day": a.completion_day,
                "duration": a.duration,
            }

        return json.dumps(
            {
                "format": "simulation-ledger/1",
                "strategy": self.strategy.value,
                "alpha": self.alpha,
                "horizon": self.horizon,
                "developers": self.developers,
                "total_bugs": self.total_bugs,
                "never_assigned": self.never_assigned,
                "assignments": {b: rec(a) for b, a in self.assignments.items()},
                "ground_truth": self.ground_truth,
                "run_wall_time": self.run_wall_time,
                "days": [
                    {
                        "day": d.day,
                        "assigned": [rec(a) for a in d.assigned],
                        "completed": d.completed,
                        "deferred_count": d.deferred_count,
                        "open_bug_count": d.open_bug_count,
                        "busy_slots": d.busy_slots,
                        "busy_developers": d.busy_developers,
                        "bdg_mean_degree": d.bdg_mean_degree,
                        "bdg_mean_depth": d.bdg_mean_depth,
                        "conservation": d.conservation,
                    }
                    for d in self.days
                ],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "SimulationLedger":
        doc = json.loads(text)
        if doc.get("format") != "simulation-ledger/1":
            raise ValueError("unrecognized ledger document")

        def rec(d: Dict[str, object]) -> AssignmentRecord:
            return AssignmentRecord(
                bug_id=d["bug_id"],
                developer=d["developer"],
                slot=d["slot"],
                assign_day=d["assign_day"],
                start_day=d["start_day"],
                completion_day=d["completion_day"],
                duration=d["duration"],
            )

        ledger = cls(
            strategy=Strategy(doc["strategy"]),
            alpha=doc["alpha"],
            horizon=doc["horizon"],
            developers=doc["developers"],
            total_bugs=doc["total_bugs"],
            never_assigned=doc["never_assigned"],
            assignments={b: rec(a) for b, a in doc["assignments"].items()},
            ground_truth=doc["ground_truth"],
            run_wall_time=doc["run_wall_time"],
        )
        for d in doc["days"]:
            ledger.days.append(
                SimulationLedgerDay(
                    day=d["day"],
                    assigned=[rec(a) for a in d["assigned"]],
                    completed=d["completed"],
                    deferred_count=d["deferred_count"],
                    open_bug_count=d["open_bug_count"],
                    busy_slots=d["busy_slots"],
                    busy_developers=d["busy_developers"],
                    bdg_mean_degree=d["bdg_mean_degree"],
                    bdg_mean_depth=d["bdg_mean_depth"],
                    conservation=d["conservation"],
                )
            )
        return ledger

    def write_daily_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                [
                    "day",
                    "assigned",
                    "completed",
                    "deferred",
                    "open_bugs",
                    "busy_developers",
                    "busy_slots",
                    "developer_utilization",
                    "slot_utilization",
                    "bdg_mean_degree",
                    "bdg_mean_depth",
                ]
            )
            dev_total = max(1, len(self.developers))
            cap_total = max(1, self.capacity)
            for d in self.days:
                busy = sum(d.busy_slots.values())
                writer.writerow(
                    [
                        d.day,
                        len(d.assigned),
                        len(d.completed),
                        d.deferred_count,
                        d.open_bug_count,
                        d.busy_developers,
                        busy,
                        d.busy_developers / dev_total,
                        busy / cap_total,
                        d.bdg_mean_degree,
                        d.bdg_mean_depth,
                    ]
                )


# ---------------------------------------------------------------------------
# the day loop
# ---------------------------------------------------------------------------

class _State:
    def __init__(self, profiles: Sequence[DeveloperProfile]):
        self.records: Dict[str, BugRecord] = {}
        self.graph = DependencyGraph()
        self.status: Dict[str, str] = {}  # open | assigned | completed | excluded
        self.in_progress: Dict[str, AssignmentRecord] = {}
        self.occupancy: Dict[Tuple[str, int], Set[int]] = {
            (p.id, j): set() for p in profiles for j in range(p.slot_count)
        }


def run(
    config: SimulationConfig,
    events: Sequence[RawEvent],
    provider,
) -> SimulationLedger:
    """Replay the event stream over the configured test window."""
    import time as _time

    t0 = _time.monotonic()
    profiles = provider.developers()
    if config.horizon == "auto":
        raise ValueError("run() needs a concrete horizon; resolve 'auto' first")
    horizon = int(config.horizon)

    by_day: Dict[int, List[RawEvent]] = {}
    for event in events:
        by_day.setdefault(event.day, []).append(event)
    total_bugs = len({e.bug_id for e in events if e.kind is EventKind.REPORTED})
    ground_truth = _ground_truth(events)

    state = _State(profiles)
    ledger = SimulationLedger(
        strategy=config.strategy,
        alpha=config.alpha,
        horizon=horizon,
        developers={p.id: p.slot_count for p in profiles},
        total_bugs=total_bugs,
        ground_truth=ground_truth,
    )

    start, end = config.test_window
    for day in range(start, end + 1):
        _ingest_day(state, by_day.get(day, []))
        record_day = SimulationLedgerDay(day=day)

        feasible = _feasible_bugs(state, day)
        if feasible:
            instance, plan = _plan_day(
                config, state, provider, feasible, day, horizon, ground_truth
            )
            if config.strategy is not Strategy.ACTUAL:
                # ground truth may overload the estimated capacity; model
                # plans must never do so
                problems = validate_plan(
                    instance, plan,
                    strict_horizon=config.strategy is Strategy.SDABT,
                )
                if problems:
                    raise ValidationFailure(day, problems)
            for a in plan.assignments:
                bug = state.records[a.bug_id]
                duration = (
                    a.duration
                    if a.duration is not None
                    else provider.cost(bug, a.developer)
                )
                start_abs = day + a.start_day - 1
                rec = AssignmentRecord(
                    bug_id=a.bug_id,
                    developer=a.developer,
                    slot=a.slot,
                    assign_day=day,
                    start_day=start_abs,
                    completion_day=start_abs + duration - 1,
                    duration=duration,
                )
                occ = state.occupancy[(a.developer, a.slot)]
                span = set(range(start_abs, start_abs + duration))
                if occ & span and config.strategy is not Strategy.ACTUAL:
                    raise ValidationFailure(
                        day, [f"{a.bug_id}: slot already occupied in its window"]
                    )
                occ |= span
                state.in_progress[a.bug_id] = rec
                state.status[a.bug_id] = "assigned"
                ledger.assignments.setdefault(a.bug_id, rec)
                record_day.assigned.append(rec)
            record_day.deferred_count = len(plan.deferred)

        # day-end bookkeeping
        record_day.busy_slots = {
            p.id: sum(
                1 for j in range(p.slot_count) if day in state.occupancy[(p.id, j)]
            )
            for p in profiles
        }
        record_day.busy_developers = sum(
            1 for v in record_day.busy_slots.values() if v > 0
        )
        record_day.bdg_mean_degree = state.graph.mean_degree()
        record_day.bdg_mean_depth = state.graph.mean_depth()

        for bug_id, rec in list(state.in_progress.items()):
            if rec.completion_day == day:
                del state.in_progress[bug_id]
                state.status[bug_id] = "completed"
                state.graph.remove_node(bug_id)
                record_day.completed.append(bug_id)
        record_day.completed.sort()

        counts = _conservation(state, total_bugs)
        record_day.open_bug_count = counts["open"]
        record_day.conservation = counts
        ledger.days.append(record_day)

    ledger.never_assigned = sorted(
        b for b, s in state.status.items() if s == "open"
    )
    ledger.run_wall_time = _time.monotonic() - t0
    return ledger


def _ingest_day(state: _State, events: List[RawEvent]) -> None:
    for event in events:
        if event.kind is EventKind.REPORTED:
            state.records[event.bug_id] = BugRecord(
                id=event.bug_id,
                summary=str(event.payload.get("summary", "")),
                description=str(event.payload.get("description", "")),
                component=str(event.payload.get("component", "")),
                report_day=event.day,
            )
            state.status[event.bug_id] = "open"
            state.graph.add_node(event.bug_id)
        elif event.bug_id not in state.records:
            continue
        elif event.kind is EventKind.META_FLAGGED:
            state.records[event.bug_id].is_meta = True
            state.status[event.bug_id] = "excluded"
            state.graph.remove_node(event.bug_id)
        elif event.kind is EventKind.DEPENDENCY_ADDED:
            blocker = str(event.payload["blocker"])
            if blocker in state.graph and event.bug_id in state.graph:
                try:
                    state.graph.add_dependency(blocker, event.bug_id)
                except CycleError:
                    pass  # tracker data can propose cycles; keep the DAG
        elif event.kind is EventKind.DEPENDENCY_REMOVED:
            blocker = str(event.payload["blocker"])
            state.graph.remove_dependency(blocker, event.bug_id)
        elif event.kind is EventKind.REOPENED:
            if state.status.get(event.bug_id) == "completed":
                state.status[event.bug_id] = "open"
                state.graph.add_node(event.bug_id)


def _feasible_bugs(state: _State, day: int) -> List[BugRecord]:
    out = [
        state.records[b]
        for b, s in state.status.items()
        if s == "open" and state.records[b].report_day <= day
    ]
    out.sort(key=lambda r: r.id)
    return out


def _conservation(state: _State, total_bugs: int) -> Dict[str, int]:
    counts = {"open": 0, "assigned": 0, "completed": 0, "excluded": 0}
    for s in state.status.values():
        counts[s] += 1
    counts["not_reported"] = total_bugs - sum(counts.values())
    counts["total"] = total_bugs
    return counts


def _ground_truth(events: Sequence[RawEvent]) -> Dict[str, Dict[str, object]]:
    from .ingest import events_to_records

    truth: Dict[str, Dict[str, object]] = {}
    for bug_id, record in events_to_records(events).items():
        truth[bug_id] = {
            "assignee": record.actual_assignee,
            "assign_day": record.actual_assign_day,
            "fix_day": record.actual_fix_day,
            "fixing_time_days": record.fixing_time_days,
            "component": record.component,
            "report_day": record.report_day,
        }
    return truth


def _plan_day(
    config: SimulationConfig,
    state: _State,
    provider,
    feasible: List[BugRecord],
    day: int,
    horizon: int,
    ground_truth: Dict[str, Dict[str, object]],
):
    feasible_ids = {r.id for r in feasible}
    bugs: List[InstanceBug] = []
    for record in feasible:
        open_parents, ledger_parents = [], []
        for parent in sorted(state.graph.parents(record.id)):
            if parent in feasible_ids:
                open_parents.append(parent)
            elif parent in state.in_progress:
                tau = state.in_progress[parent].completion_day - day + 1
                ledger_parents.append((parent, max(0, tau)))
        bugs.append(
            InstanceBug(
                id=record.id,
                suitability=provider.suitability(record),
                cost={
                    p.id: provider.cost(record, p.id) for p in provider.developers()
                },
                open_parents=open_parents,
                ledger_parents=ledger_parents,
                component=record.component,
                report_day=record.report_day,
            )
        )

    developers = []
    for profile in provider.developers():
        closed = config.off_days | config.developer_off_days.get(profile.id, set())
        occupied = []
        for j in range(profile.slot_count):
            occ_abs = state.occupancy[(profile.id, j)]
            rel = {a - day + 1 for a in occ_abs if a >= day}
            rel |= {
                off - day + 1 for off in closed if day <= off <= day + horizon - 1
            }
            occupied.append(rel)
        developers.append(
            InstanceDeveloper(profile.id, profile.slot_count, occupied)
        )

    instance = TriageInstance(
        day=day, bugs=bugs, developers=developers,
        alpha=config.alpha, horizon=horizon,
    )

    if config.lp_dir is not None:
        _dump_lp(config, instance, day)

    if config.strategy is Strategy.SDABT:
        plan = solve_sdabt(
            instance, node_budget=config.node_budget, time_budget=config.time_budget
        )
    elif config.strategy is Strategy.DABT:
        plan = solve_dabt(
            instance, node_budget=config.node_budget, time_budget=config.time_budget
        )
    elif config.strategy is Strategy.RABT:
        plan = solve_rabt(
            instance, node_budget=config.node_budget, time_budget=config.time_budget
        )
    elif config.strategy is Strategy.CBR:
        plan = rank_cbr(instance)
    elif config.strategy is Strategy.COSTRIAGE:
        plan = rank_costriage(instance)
    else:
        truth = {
            b: (t["assignee"], t["assign_day"], t["fixing_time_days"])
            for b, t in ground_truth.items()
            if t["assignee"] is not None
            and t["assign_day"] is not None
            and t["fixing_time_days"] is not None
        }
        plan = replay_actual(instance, truth)
    return instance, plan


def _dump_lp(config: SimulationConfig, instance, day: int) -> None:
    from .strategies import build_budget_program, build_schedule_program

    if config.strategy is Strategy.SDABT:
        prog, _ = build_schedule_program(instance)
    elif config.strategy in (Strategy.DABT, Strategy.RABT):
        prog, _ = build_budget_program(
            instance,
            with_dependencies=config.strategy is Strategy.DABT,
            suitability_only=config.strategy is Strategy.RABT,
        )
    else:
        return
    path = os.path.join(config.lp_dir, f"day{day:04d}.lp")
    with open(path, "w") as fh:
        fh.write(prog.to_lp_text())
