"""Evaluation metrics over a simulation ledger and the paired
signed-rank test used to compare strategies.

All metrics are pure functions of the ledger (plus ground truth carried
inside it), so recomputation is bitwise reproducible.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from .ingest import EventKind, RawEvent
from .sim import SimulationLedger


class AllZeroDifferencesError(ValueError):
    """Every paired difference is zero; the signed-rank test is undefined."""


@dataclass
class DivergenceResult:
    mean: float
    stddev: float
    skipped: int


@dataclass
class MetricsReport:
    strategy: str
    alpha: float
    horizon: int
    assigned_count: int
    unassigned_count: int
    developers_used: int
    task_mean: float
    task_stddev: float
    mean_fixing_days: float
    overdue_pct: float
    accuracy_pct: float
    infeasible_dependency_pct: float
    mean_bdg_depth: float
    mean_bdg_degree: float
    divergence_mean: float
    divergence_stddev: float
    divergence_skipped: int
    daily_developer_utilization: List[float]
    slot_utilization_series: List[float]
    run_wall_time: float

    def __post_init__(self) -> None:
        for name in ("overdue_pct", "accuracy_pct", "infeasible_dependency_pct"):
            value = getattr(self, name)
            if not 0.0 <= value <= 100.0:
                raise ValueError(f"{name} outside [0, 100]: {value}")

    def to_json(self) -> str:
        return json.dumps({"format": "metrics-report/1", **self.__dict__})

    def csv_row(self, project: str) -> List[object]:
        return [
            project,
            self.strategy,
            self.alpha,
            self.horizon,
            self.assigned_count,
            self.unassigned_count,
            self.developers_used,
            self.task_mean,
            self.task_stddev,
            self.mean_fixing_days,
            self.overdue_pct,
            self.accuracy_pct,
            self.infeasible_dependency_pct,
            self.mean_bdg_depth,
            self.mean_bdg_degree,
            self.divergence_mean,
            self.divergence_stddev,
            self.run_wall_time,
        ]

    CSV_HEADER = [
        "project",
        "strategy",
        "alpha",
        "horizon",
        "assigned",
        "unassigned",
        "developers_used",
        "task_mean",
        "task_stddev",
        "mean_fixing_days",
        "overdue_pct",
        "accuracy_pct",
        "infeasible_dependency_pct",
        "mean_bdg_depth",
        "mean_bdg_degree",
        "divergence_mean",
        "divergence_stddev",
        "run_wall_time",
    ]


def write_report_csv(path: str, rows: Sequence[Tuple[str, MetricsReport]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MetricsReport.CSV_HEADER)
        for project, report in rows:
            writer.writerow(report.csv_row(project))


# ---------------------------------------------------------------------------
# individual metrics
# ---------------------------------------------------------------------------

def accuracy(ledger: SimulationLedger, experience: Dict[str, Set[str]]) -> float:
    """Share of assignments whose developer knows the bug's component."""
    if not ledger.assignments:
        return 0.0
    hits = 0
    for bug_id, rec in ledger.assignments.items():
        component = ledger.ground_truth.get(bug_id, {}).get("component", "")
        if component in experience.get(rec.developer, set()):
            hits += 1
    return 100.0 * hits / len(ledger.assignments)


def overdue(ledger: SimulationLedger, horizon: Optional[int] = None) -> float:
    """Share of assigned bugs finishing more than the horizon after report."""
    if not ledger.assignments:
        return 0.0
    L = ledger.horizon if horizon is None else horizon
    late = 0
    for bug_id, rec in ledger.assignments.items():
        report_day = ledger.ground_truth.get(bug_id, {}).get("report_day", rec.assign_day)
        if rec.completion_day - report_day > L:
            late += 1
    return 100.0 * late / len(ledger.assignments)


def infeasible_dependency(
    ledger: SimulationLedger, events: Sequence[RawEvent]
) -> float:
    """Share of assignments started before a blocker's simulated finish.

    Blockers known by the assignment day count, and so do blockers
    discovered while the bug was being fixed (work is never preempted).
    """
    if not ledger.assignments:
        return 0.0
    dep_events: Dict[str, List[Tuple[int, str, bool]]] = {}
    for event in events:
        if event.kind is EventKind.DEPENDENCY_ADDED:
            dep_events.setdefault(event.bug_id, []).append(
                (event.day, str(event.payload["blocker"]), True)
            )
        elif event.kind is EventKind.DEPENDENCY_REMOVED:
            dep_events.setdefault(event.bug_id, []).append(
                (event.day, str(event.payload["blocker"]), False)
            )

    bad = 0
    for bug_id, rec in ledger.assignments.items():
        blockers: Set[str] = set()
        for day, blocker, added in sorted(dep_events.get(bug_id, [])):
            if day > rec.completion_day:
                break
            if added:
                blockers.add(blocker)
            elif day <= rec.assign_day:
                blockers.discard(blocker)
        violated = False
        for blocker in blockers:
            if blocker not in ledger.ground_truth:
                continue  # outside the dataset, unobservable
            parent = ledger.assignments.get(blocker)
            if parent is None or parent.completion_day >= rec.start_day:
                violated = True
                break
        if violated:
            bad += 1
    return 100.0 * bad / len(ledger.assignments)


def utilization_daily(ledger: SimulationLedger) -> List[float]:
    total = max(1, len(ledger.developers))
    return [day.busy_developers / total for day in ledger.days]


def utilization_slots(ledger: SimulationLedger) -> List[float]:
    capacity = max(1, ledger.capacity)
    return [sum(day.busy_slots.values()) / capacity for day in ledger.days]


def utilization_slots_per_developer(
    ledger: SimulationLedger,
) -> Dict[str, List[float]]:
    return {
        dev: [
            day.busy_slots.get(dev, 0) / max(1, slots) for day in ledger.days
        ]
        for dev, slots in ledger.developers.items()
    }


def weekly_average(series: Sequence[float], week: int = 7) -> List[float]:
    return [
        float(np.mean(series[i : i + week])) for i in range(0, len(series), week)
    ]


def divergence(ledger: SimulationLedger) -> DivergenceResult:
    """Absolute gap in days between model and historical assignment times."""
    gaps = []
    skipped = 0
    for bug_id, rec in ledger.assignments.items():
        actual = ledger.ground_truth.get(bug_id, {}).get("assign_day")
        if actual is None:
            skipped += 1
            continue
        gaps.append(abs(rec.assign_day - actual))
    if not gaps:
        return DivergenceResult(0.0, 0.0, skipped)
    return DivergenceResult(float(np.mean(gaps)), float(np.std(gaps)), skipped)


def compute_report(
    ledger: SimulationLedger,
    experience: Dict[str, Set[str]],
    events: Sequence[RawEvent],
) -> MetricsReport:
    per_dev: Dict[str, int] = {dev: 0 for dev in ledger.developers}
    for rec in ledger.assignments.values():
        per_dev[rec.developer] = per_dev.get(rec.developer, 0) + 1
    counts = list(per_dev.values())
    durations = [rec.duration for rec in ledger.assignments.values()]
    div = divergence(ledger)
    depth = [d.bdg_mean_depth for d in ledger.days]
    degree = [d.bdg_mean_degree for d in ledger.days]
    return MetricsReport(
        strategy=ledger.strategy.value,
        alpha=ledger.alpha,
        horizon=ledger.horizon,
        assigned_count=len(ledger.assignments),
        unassigned_count=ledger.total_bugs - len(ledger.assignments),
        developers_used=sum(1 for c in counts if c > 0),
        task_mean=float(np.mean(counts)) if counts else 0.0,
        task_stddev=float(np.std(counts)) if counts else 0.0,
        mean_fixing_days=float(np.mean(durations)) if durations else 0.0,
        overdue_pct=overdue(ledger),
        accuracy_pct=accuracy(ledger, experience),
        infeasible_dependency_pct=infeasible_dependency(ledger, events),
        mean_bdg_depth=float(np.mean(depth)) if depth else 0.0,
        mean_bdg_degree=float(np.mean(degree)) if degree else 0.0,
        divergence_mean=div.mean,
        divergence_stddev=div.stddev,
        divergence_skipped=div.skipped,
        daily_developer_utilization=utilization_daily(ledger),
        slot_utilization_series=utilization_slots(ledger),
        run_wall_time=ledger.run_wall_time,
    )


def component_experience(records) -> Dict[str, Set[str]]:
    """Components each developer fixed at least one bug in (training)."""
    experience: Dict[str, Set[str]] = {}
    for record in records.values():
        if record.actual_assignee and record.component:
            experience.setdefault(record.actual_assignee, set()).add(record.component)
    return experience


# ---------------------------------------------------------------------------
# paired signed-rank test
# ---------------------------------------------------------------------------

EXACT_LIMIT = 25


def wilcoxon_signed_rank(
    series_a: Sequence[float],
    series_b: Sequence[float],
    alternative: str = "two_sided",
) -> float:
    """P-value for paired differences a - b.

    Zero differences are dropped and tied magnitudes get mid-ranks. Small
    samples use the exact null distribution of the positive-rank sum;
    larger ones a normal approximation with continuity and tie
    corrections.
    """
    if alternative not in ("greater", "less", "two_sided"):
        raise ValueError(f"unknown alternative {alternative!r}")
    if len(series_a) != len(series_b):
        raise ValueError("paired series must have equal length")
    diffs = [a - b for a, b in zip(series_a, series_b) if a != b]
    if not diffs:
        raise AllZeroDifferencesError("all paired differences are zero")

    magnitudes = sorted(abs(d) for d in diffs)
    rank_of: Dict[float, float] = {}
    i = 0
    while i < len(magnitudes):
        j = i
        while j < len(magnitudes) and magnitudes[j] == magnitudes[i]:
            j += 1
        rank_of[magnitudes[i]] = (i + 1 + j) / 2.0  # mid-rank of the tie block
        i = j
    ranks = [rank_of[abs(d)] for d in diffs]
    w_plus = sum(r for r, d in zip(ranks, diffs) if d > 0)
    n = len(diffs)

    if n <= EXACT_LIMIT:
        p_greater, p_less = _exact_tail_probs(ranks, w_plus)
    else:
        mean = n * (n + 1) / 4.0
        tie_sizes = [magnitudes.count(m) for m in set(magnitudes)]
        variance = n * (n + 1) * (2 * n + 1) / 24.0 - sum(
            t ** 3 - t for t in tie_sizes
        ) / 48.0
        sd = math.sqrt(variance)
        p_greater = _norm_sf((w_plus - mean - 0.5) / sd)
        p_less = _norm_sf((mean - w_plus - 0.5) / sd)

    if alternative == "greater":
        return p_greater
    if alternative == "less":
        return p_less
    return min(1.0, 2.0 * min(p_greater, p_less))


def _norm_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def _exact_tail_probs(ranks: Sequence[float], w_plus: float) -> Tuple[float, float]:
    """Exact P(W+ >= w) and P(W+ <= w) by dynamic programming.

    Mid-ranks are half-integers, so everything is doubled to work over
    integer sums.
    """
    doubled = [int(round(2 * r)) for r in ranks]
    total = sum(doubled)
    counts = np.zeros(total + 1, dtype=float)
    counts[0] = 1.0
    for r in doubled:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    counts /= counts.sum()
    w2 = int(round(2 * w_plus))
    return float(counts[w2:].sum()), float(counts[: w2 + 1].sum())
