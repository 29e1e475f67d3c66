"""Core domain types: bugs, developers, the dependency graph, ledgers and plans.

All durations are whole days; day indices are integers counted from the
start of the loaded history. Fractional estimated costs are rounded up
before they reach any scheduling code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Set, Tuple


class BugStatus(str, Enum):
    OPEN = "open"
    ASSIGNED = "assigned"
    FIXED = "fixed"
    EXCLUDED = "excluded"


class CycleError(ValueError):
    """Raised when a dependency insertion would create a directed cycle."""

    def __init__(self, path: List[str]):
        self.path = path
        super().__init__("dependency cycle: " + " -> ".join(str(p) for p in path))


class UnknownBugError(KeyError):
    """Raised when a dependency references a bug id the graph has never seen."""


@dataclass
class BugRecord:
    id: str
    summary: str = ""
    description: str = ""
    component: str = ""
    report_day: int = 0
    actual_assign_day: Optional[int] = None
    actual_fix_day: Optional[int] = None
    actual_assignee: Optional[str] = None
    status: BugStatus = BugStatus.OPEN
    depends_on: Set[str] = field(default_factory=set)
    blocks: Set[str] = field(default_factory=set)
    is_meta: bool = False
    topic: Optional[int] = None
    fixing_time_days: Optional[int] = None

    def validate(self) -> None:
        if self.actual_assign_day is not None and self.actual_assign_day < self.report_day:
            raise ValueError(f"bug {self.id}: assigned before reported")
        if (
            self.actual_fix_day is not None
            and self.actual_assign_day is not None
            and self.actual_fix_day < self.actual_assign_day
        ):
            raise ValueError(f"bug {self.id}: fixed before assigned")
        if self.fixing_time_days is not None and self.fixing_time_days < 1:
            raise ValueError(f"bug {self.id}: nonpositive fixing time")


@dataclass
class DeveloperProfile:
    id: str
    slot_count: int = 1
    experienced_components: Set[str] = field(default_factory=set)
    topic_cost: List[float] = field(default_factory=list)
    fix_count_training: int = 0

    def __post_init__(self) -> None:
        if self.slot_count < 1:
            raise ValueError(f"developer {self.id}: slot_count must be >= 1")

    def cost_days(self, topic: int) -> int:
        """Integer fixing-time estimate for one topic (ceiled, at least 1 day)."""
        return max(1, math.ceil(self.topic_cost[topic]))


class DependencyGraph:
    """Directed acyclic "blocks" graph over open bugs.

    Arcs run from the blocking bug to the bug it blocks. Insertions that
    would close a directed cycle are rejected with the offending path.
    """

    def __init__(self) -> None:
        self._succ: Dict[str, Set[str]] = {}
        self._pred: Dict[str, Set[str]] = {}

    # -- node management -------------------------------------------------

    def add_node(self, bug_id: str) -> None:
        self._succ.setdefault(bug_id, set())
        self._pred.setdefault(bug_id, set())

    def remove_node(self, bug_id: str) -> None:
        for other in self._succ.pop(bug_id, set()):
            self._pred[other].discard(bug_id)
        for other in self._pred.pop(bug_id, set()):
            self._succ[other].discard(bug_id)

    def __contains__(self, bug_id: str) -> bool:
        return bug_id in self._succ

    @property
    def nodes(self) -> Set[str]:
        return set(self._succ)

    @property
    def arcs(self) -> Set[Tuple[str, str]]:
        return {(u, v) for u, vs in self._succ.items() for v in vs}

    def parents(self, bug_id: str) -> Set[str]:
        """Open blockers of ``bug_id`` (the P(i) set)."""
        return set(self._pred.get(bug_id, set()))

    def children(self, bug_id: str) -> Set[str]:
        return set(self._succ.get(bug_id, set()))

    # -- arc management --------------------------------------------------

    def add_dependency(self, blocker: str, blocked: str) -> None:
        """Insert the arc blocker -> blocked, rejecting cycles.

        Re-inserting an existing arc is an idempotent accept.
        """
        if blocker not in self._succ:
            raise UnknownBugError(blocker)
        if blocked not in self._succ:
            raise UnknownBugError(blocked)
        if blocked in self._succ[blocker]:
            return
        path = self._find_path(blocked, blocker)
        if path is not None:
            raise CycleError(path + [blocked])
        self._succ[blocker].add(blocked)
        self._pred[blocked].add(blocker)

    def remove_dependency(self, blocker: str, blocked: str) -> None:
        self._succ.get(blocker, set()).discard(blocked)
        self._pred.get(blocked, set()).discard(blocker)

    def _find_path(self, src: str, dst: str) -> Optional[List[str]]:
        """Directed path src -> ... -> dst, or None."""
        stack = [(src, [src])]
        seen = {src}
        while stack:
            node, path = stack.pop()
            if node == dst:
                return path
            for nxt in self._succ.get(node, ()):
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append((nxt, path + [nxt]))
        return None

    # -- statistics ------------------------------------------------------

    def mean_degree(self) -> float:
        """Arc count over node count; 0 for the empty graph."""
        n = len(self._succ)
        if n == 0:
            return 0.0
        arcs = sum(len(vs) for vs in self._succ.values())
        return arcs / n

    def mean_depth(self) -> float:
        """Mean over nodes of the longest directed path (arc count) starting there."""
        n = len(self._succ)
        if n == 0:
            return 0.0
        depth: Dict[str, int] = {}

        def longest(node: str) -> int:
            if node in depth:
                return depth[node]
            depth[node] = 0  # placeholder; graph is acyclic so no revisit loops
            best = 0
            for nxt in self._succ[node]:
                best = max(best, 1 + longest(nxt))
            depth[node] = best
            return best

        return sum(longest(v) for v in self._succ) / n

    def is_acyclic(self) -> bool:
        """Full recheck by Kahn's algorithm; used by audits and property tests."""
        indeg = {v: len(self._pred[v]) for v in self._succ}
        queue = [v for v, d in indeg.items() if d == 0]
        seen = 0
        while queue:
            v = queue.pop()
            seen += 1
            for nxt in self._succ[v]:
                indeg[nxt] -= 1
                if indeg[nxt] == 0:
                    queue.append(nxt)
        return seen == len(self._succ)


@dataclass
class LedgerEntry:
    developer: str
    slot: int
    start_day: int
    completion_day: int
    cost_used: int

    def __post_init__(self) -> None:
        if self.completion_day != self.start_day + self.cost_used - 1:
            raise ValueError("completion_day must equal start_day + cost_used - 1")


class AssignedBugLedger:
    """Assigned-but-unsolved bugs with their scheduled completion days.

    Supplies the tau_p values that gate children of in-progress blockers.
    """

    def __init__(self) -> None:
        self.entries: Dict[str, LedgerEntry] = {}

    def add(self, bug_id: str, entry: LedgerEntry) -> None:
        for other_id, other in self.entries.items():
            if other.developer == entry.developer and other.slot == entry.slot:
                if not (
                    entry.completion_day < other.start_day
                    or other.completion_day < entry.start_day
                ):
                    raise ValueError(
                        f"slot clash: {bug_id} overlaps {other_id} on "
                        f"{entry.developer}/slot{entry.slot}"
                    )
        self.entries[bug_id] = entry

    def remove(self, bug_id: str) -> Optional[LedgerEntry]:
        return self.entries.pop(bug_id, None)

    def completion_day(self, bug_id: str) -> Optional[int]:
        entry = self.entries.get(bug_id)
        return entry.completion_day if entry else None

    def __contains__(self, bug_id: str) -> bool:
        return bug_id in self.entries

    def occupancy_disjoint(self) -> bool:
        by_slot: Dict[Tuple[str, int], List[Tuple[int, int]]] = {}
        for e in self.entries.values():
            by_slot.setdefault((e.developer, e.slot), []).append(
                (e.start_day, e.completion_day)
            )
        for spans in by_slot.values():
            spans.sort()
            for (s1, e1), (s2, _e2) in zip(spans, spans[1:]):
                if s2 <= e1:
                    return False
        return True


class SolverStatus(str, Enum):
    OPTIMAL = "optimal"
    FEASIBLE_TIMEOUT = "feasible_timeout"
    INFEASIBLE_EMPTY = "infeasible_empty"


@dataclass
class Assignment:
    bug_id: str
    developer: str
    slot: int
    start_day: int
    # ground-truth replay carries the historical duration; model-driven
    # strategies leave this None and the simulator uses the estimated cost
    duration: Optional[int] = None


@dataclass
class TriagePlan:
    assignments: List[Assignment] = field(default_factory=list)
    deferred: List[str] = field(default_factory=list)
    objective_value: float = 0.0
    solver_status: SolverStatus = SolverStatus.OPTIMAL

    def covers_exactly(self, bug_ids: Iterable[str]) -> bool:
        planned = [a.bug_id for a in self.assignments] + list(self.deferred)
        return sorted(planned) == sorted(bug_ids) and len(planned) == len(set(planned))
