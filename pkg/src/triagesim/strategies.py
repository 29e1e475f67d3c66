"""Daily triage strategies: two schedule IP models, a knapsack baseline,
two ranking baselines, and the ground-truth replay.

A strategy receives one day's TriageInstance and produces a TriagePlan.
Start days inside plans are relative to the instance day (t = 1 means
"today"); ranking baselines may queue work past the horizon, the
schedule-aware model never does.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

from . import ilp
from .model import Assignment, SolverStatus, TriagePlan


@dataclass
class InstanceBug:
    id: str
    suitability: Dict[str, float]  # strictly positive, one entry per developer
    cost: Dict[str, int]  # integer days, >= 1, one entry per developer
    open_parents: List[str] = field(default_factory=list)
    ledger_parents: List[Tuple[str, int]] = field(default_factory=list)  # (bug, tau)
    component: str = ""
    report_day: int = 0


@dataclass
class InstanceDeveloper:
    id: str
    slot_count: int
    occupied: List[Set[int]]  # per slot: occupied relative days (1-based, unbounded)

    def free(self, slot: int, day: int) -> bool:
        return day not in self.occupied[slot]

    def window_free(self, slot: int, start: int, length: int) -> bool:
        occ = self.occupied[slot]
        return all(start + k not in occ for k in range(length))

    def free_days(self, slot: int, horizon: int) -> int:
        occ = self.occupied[slot]
        return sum(1 for t in range(1, horizon + 1) if t not in occ)

    def first_fit(self, slot: int, length: int) -> int:
        """Earliest start day with `length` consecutive free days on the slot."""
        occ = self.occupied[slot]
        ceiling = (max(occ) if occ else 0) + 1
        t = 1
        while t <= ceiling:
            if self.window_free(slot, t, length):
                return t
            t += 1
        return ceiling


@dataclass
class TriageInstance:
    day: int
    bugs: List[InstanceBug]
    developers: List[InstanceDeveloper]
    alpha: float
    horizon: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        for bug in self.bugs:
            for d in self.developers:
                if bug.suitability.get(d.id, 0.0) <= 0.0:
                    raise ValueError(f"bug {bug.id}: nonpositive suitability for {d.id}")
                if bug.cost.get(d.id, 0) < 1:
                    raise ValueError(f"bug {bug.id}: cost < 1 day for {d.id}")


def coefficient(alpha: float, s: Dict[str, float], c: Dict[str, int], dev: str) -> float:
    """Objective weight for assigning one bug to one developer.

    alpha * s_d / max(s)  +  (1 - alpha) * (1/c_d) / (1/min(c)); lies in (0, 1].
    """
    if not s or not c:
        raise ValueError("empty suitability or cost vector")
    return alpha * s[dev] / max(s.values()) + (1.0 - alpha) * min(c.values()) / c[dev]


# ---------------------------------------------------------------------------
# schedule-aware IP (slot/day variables)
# ---------------------------------------------------------------------------

VarMeta = Tuple[str, str, int, int]  # (bug id, developer id, slot, start day)


def _ordered_bugs(instance: TriageInstance) -> List[InstanceBug]:
    # High-value bugs first so the depth-first search finds strong
    # incumbents early; deterministic via the id tie-break.
    def best(bug: InstanceBug) -> float:
        return max(
            coefficient(instance.alpha, bug.suitability, bug.cost, d.id)
            for d in instance.developers
        )

    return sorted(instance.bugs, key=lambda b: (-best(b), b.id))


def build_schedule_program(
    instance: TriageInstance, explicit: bool = False
) -> Tuple[ilp.BinaryProgram, List[VarMeta]]:
    """Compile the slot/day assignment model to a 0-1 program.

    Default compilation never creates variables that would violate the
    availability or horizon rules (equivalent to fixing them to zero);
    with ``explicit=True`` every (bug, developer, slot, day) variable is
    created and those rules appear as explicit constraints instead. The
    two compilations are interchangeable; tests prove equal optima.
    """
    L = instance.horizon
    # one past the horizon: the precedence rows must stay vacuous for an
    # unassigned child even when a blocker finishes exactly on day L
    bigm = L + 1
    prog = ilp.BinaryProgram()
    meta: List[VarMeta] = []
    by_bug: Dict[str, List[int]] = {}
    # vars covering relative day t per (dev, slot)
    covering: Dict[Tuple[str, int, int], List[int]] = {}
    in_instance = {b.id: b for b in instance.bugs}
    devs = {d.id: d for d in instance.developers}

    for bug in _ordered_bugs(instance):
        tau_gate = max((tau for _, tau in bug.ledger_parents), default=0)
        var_ids: List[int] = []
        # tie-break order among optima: earliest start day, lowest slot,
        # developer id order
        for t in range(1, L + 1):
            for d_idx, dev in enumerate(instance.developers):
                c = bug.cost[dev.id]
                for j in range(dev.slot_count):
                    ok_horizon = t + c - 1 <= L
                    ok_window = dev.window_free(j, t, min(c, L - t + 1))
                    ok_gate = t > tau_gate
                    if not explicit and not (ok_horizon and ok_window and ok_gate):
                        continue
                    v = prog.add_var(
                        f"x[{bug.id},{dev.id},{j},{t}]",
                        coefficient(instance.alpha, bug.suitability, bug.cost, dev.id),
                    )
                    meta.append((bug.id, dev.id, j, t))
                    var_ids.append(v)
                    for tt in range(t, min(t + c - 1, L) + 1):
                        covering.setdefault((dev.id, j, tt), []).append(v)
                    if explicit:
                        if not ok_horizon:
                            prog.add_constraint({v: 1}, ilp.LE, 0)
                        elif not ok_window:
                            prog.add_constraint({v: 1}, ilp.LE, 0)
        by_bug[bug.id] = var_ids

    # single assignment per bug (declare first: these drive the solver bound)
    for bug_vars in by_bug.values():
        if len(bug_vars) > 1:
            prog.add_constraint({v: 1 for v in bug_vars}, ilp.LE, 1)

    # one bug per slot-day
    for (dev_id, j, t), members in sorted(covering.items()):
        if len(members) > 1 and devs[dev_id].free(j, t) and t <= L:
            prog.add_constraint({m: 1 for m in members}, ilp.LE, 1)

    cost_of = {
        v: in_instance[b].cost[d] for v, (b, d, _j, _t) in zip(range(len(meta)), meta)
    }
    start_of = {v: t for v, (_b, _d, _j, t) in zip(range(len(meta)), meta)}

    for bug in instance.bugs:
        child_vars = by_bug[bug.id]
        for parent_id in bug.open_parents:
            parent_vars = by_bug.get(parent_id, [])
            # child start must follow the parent's scheduled finish
            coeffs: Dict[int, float] = {v: bigm - start_of[v] for v in child_vars}
            for u in parent_vars:
                coeffs[u] = coeffs.get(u, 0.0) + start_of[u] + cost_of[u] - 1
            if coeffs:
                prog.add_constraint(coeffs, ilp.LE, bigm - 1)
            # child assigned only if the parent is assigned too
            cond = {v: 1.0 for v in child_vars}
            for u in parent_vars:
                cond[u] = cond.get(u, 0.0) - 1.0
            if cond:
                prog.add_constraint(cond, ilp.LE, 0)
        if explicit:
            for _parent_id, tau in bug.ledger_parents:
                if tau >= L:
                    if child_vars:
                        prog.add_constraint({v: 1 for v in child_vars}, ilp.LE, 0)
                    continue
                gate = {v: float(bigm - start_of[v]) for v in child_vars}
                if gate:
                    prog.add_constraint(gate, ilp.LE, bigm - 1 - tau)

    return prog, meta


class SolveWithoutIncumbentError(RuntimeError):
    """The solve budget ran out before any feasible point was found."""


def _require_incumbent(result: ilp.SolveResult) -> None:
    if (
        result.status is ilp.SolveStatus.TIMEOUT_BEST_FEASIBLE
        and result.assignment is None
    ):
        raise SolveWithoutIncumbentError(
            f"no incumbent after {result.nodes} nodes"
        )


def _plan_from_result(
    instance: TriageInstance, result: ilp.SolveResult, meta: Sequence[VarMeta]
) -> TriagePlan:
    status = {
        ilp.SolveStatus.OPTIMAL: SolverStatus.OPTIMAL,
        ilp.SolveStatus.TIMEOUT_BEST_FEASIBLE: SolverStatus.FEASIBLE_TIMEOUT,
        ilp.SolveStatus.INFEASIBLE: SolverStatus.INFEASIBLE_EMPTY,
    }[result.status]
    plan = TriagePlan(solver_status=status)
    assigned: Set[str] = set()
    if result.assignment is not None:
        plan.objective_value = result.objective
        for v, (bug_id, dev_id, j, t) in enumerate(meta):
            if result.assignment[v] == 1:
                plan.assignments.append(Assignment(bug_id, dev_id, j, t))
                assigned.add(bug_id)
    else:
        plan.solver_status = SolverStatus.INFEASIBLE_EMPTY
        plan.objective_value = 0.0
    plan.deferred = [b.id for b in instance.bugs if b.id not in assigned]
    return plan


def solve_sdabt(
    instance: TriageInstance,
    node_budget: int = 5_000_000,
    time_budget: Optional[float] = None,
    explicit: bool = False,
) -> TriagePlan:
    prog, meta = build_schedule_program(instance, explicit=explicit)
    result = ilp.solve(prog, node_budget=node_budget, time_budget=time_budget)
    _require_incumbent(result)
    if result.assignment is not None:
        ok, idx = ilp.verify(prog, result.assignment)
        if not ok:
            raise RuntimeError(f"solver returned infeasible point (constraint {idx})")
    return _plan_from_result(instance, result, meta)


# ---------------------------------------------------------------------------
# scalar-budget IP models (no slot/day variables)
# ---------------------------------------------------------------------------

def _budgets(instance: TriageInstance) -> Dict[str, int]:
    # every strategy sees the same total capacity: the sum of free days
    # across all of the developer's slots within the horizon
    return {
        d.id: sum(d.free_days(j, instance.horizon) for j in range(d.slot_count))
        for d in instance.developers
    }


def build_budget_program(
    instance: TriageInstance, with_dependencies: bool, suitability_only: bool
) -> Tuple[ilp.BinaryProgram, List[Tuple[str, str]]]:
    prog = ilp.BinaryProgram()
    meta: List[Tuple[str, str]] = []
    by_bug: Dict[str, List[int]] = {}
    by_bug_dev: Dict[Tuple[str, str], int] = {}

    for bug in _ordered_bugs(instance):
        var_ids = []
        for dev in instance.developers:
            if suitability_only:
                w = bug.suitability[dev.id] / max(bug.suitability.values())
            else:
                w = coefficient(instance.alpha, bug.suitability, bug.cost, dev.id)
            v = prog.add_var(f"x[{bug.id},{dev.id}]", w)
            meta.append((bug.id, dev.id))
            var_ids.append(v)
            by_bug_dev[(bug.id, dev.id)] = v
        by_bug[bug.id] = var_ids

    for var_ids in by_bug.values():
        prog.add_constraint({v: 1 for v in var_ids}, ilp.LE, 1)

    budgets = _budgets(instance)
    for dev in instance.developers:
        coeffs = {by_bug_dev[(b.id, dev.id)]: float(b.cost[dev.id]) for b in instance.bugs}
        if coeffs:
            prog.add_constraint(coeffs, ilp.LE, budgets[dev.id])

    if with_dependencies:
        for bug in instance.bugs:
            for parent_id in bug.open_parents:
                for dev in instance.developers:
                    child = by_bug_dev[(bug.id, dev.id)]
                    parent = by_bug_dev.get((parent_id, dev.id))
                    coeffs = {child: 1.0}
                    if parent is not None:
                        coeffs[parent] = -1.0
                    prog.add_constraint(coeffs, ilp.LE, 0)

    return prog, meta


def _schedule_onto_slots(
    instance: TriageInstance, chosen: List[Tuple[str, str]]
) -> List[Assignment]:
    """Place (bug, developer) picks on concrete slots, first-come first-fit.

    The slot with the most free days inside the horizon takes the bug;
    work that does not fit inside the horizon queues past it.
    """
    local = {
        d.id: [set(occ) for occ in d.occupied] for d in instance.developers
    }
    devs = {d.id: d for d in instance.developers}
    bugs = {b.id: b for b in instance.bugs}
    out: List[Assignment] = []
    for bug_id, dev_id in chosen:
        dev = devs[dev_id]
        c = bugs[bug_id].cost[dev_id]
        occ_sets = local[dev_id]

        def free_in_horizon(j: int) -> int:
            return sum(1 for t in range(1, instance.horizon + 1) if t not in occ_sets[j])

        slot = max(range(dev.slot_count), key=lambda j: (free_in_horizon(j), -j))
        occ = occ_sets[slot]
        ceiling = (max(occ) if occ else 0) + 1
        t = 1
        while t <= ceiling:
            if all(t + k not in occ for k in range(c)):
                break
            t += 1
        occ.update(range(t, t + c))
        out.append(Assignment(bug_id, dev_id, slot, t))
    return out


def solve_dabt(
    instance: TriageInstance,
    node_budget: int = 5_000_000,
    time_budget: Optional[float] = None,
) -> TriagePlan:
    prog, meta = build_budget_program(instance, with_dependencies=True, suitability_only=False)
    result = ilp.solve(prog, node_budget=node_budget, time_budget=time_budget)
    _require_incumbent(result)
    return _budget_plan(instance, result, meta)


def solve_rabt(
    instance: TriageInstance,
    node_budget: int = 5_000_000,
    time_budget: Optional[float] = None,
) -> TriagePlan:
    prog, meta = build_budget_program(instance, with_dependencies=False, suitability_only=True)
    result = ilp.solve(prog, node_budget=node_budget, time_budget=time_budget)
    _require_incumbent(result)
    return _budget_plan(instance, result, meta)


def _budget_plan(
    instance: TriageInstance, result: ilp.SolveResult, meta: Sequence[Tuple[str, str]]
) -> TriagePlan:
    status = {
        ilp.SolveStatus.OPTIMAL: SolverStatus.OPTIMAL,
        ilp.SolveStatus.TIMEOUT_BEST_FEASIBLE: SolverStatus.FEASIBLE_TIMEOUT,
        ilp.SolveStatus.INFEASIBLE: SolverStatus.INFEASIBLE_EMPTY,
    }[result.status]
    plan = TriagePlan(solver_status=status)
    chosen: List[Tuple[str, str]] = []
    if result.assignment is not None:
        plan.objective_value = result.objective
        for v, (bug_id, dev_id) in enumerate(meta):
            if result.assignment[v] == 1:
                chosen.append((bug_id, dev_id))
    bugs = {b.id: b for b in instance.bugs}
    # within each developer, cheap bugs first (post-ordering step)
    per_dev: Dict[str, List[str]] = {}
    for bug_id, dev_id in chosen:
        per_dev.setdefault(dev_id, []).append(bug_id)
    ordered: List[Tuple[str, str]] = []
    for dev in instance.developers:
        for bug_id in sorted(per_dev.get(dev.id, []), key=lambda b: (bugs[b].cost[dev.id], b)):
            ordered.append((bug_id, dev.id))
    plan.assignments = _schedule_onto_slots(instance, ordered)
    assigned = {a.bug_id for a in plan.assignments}
    plan.deferred = [b.id for b in instance.bugs if b.id not in assigned]
    return plan


# ---------------------------------------------------------------------------
# ranking baselines
# ---------------------------------------------------------------------------

def rank_cbr(instance: TriageInstance) -> TriagePlan:
    """Pure content ranking: every bug goes to its top-suitability developer."""
    return _rank(instance, use_cost=False)


def rank_costriage(instance: TriageInstance) -> TriagePlan:
    """Suitability/cost trade-off ranking with the instance alpha."""
    return _rank(instance, use_cost=True)


def _rank(instance: TriageInstance, use_cost: bool) -> TriagePlan:
    chosen: List[Tuple[str, str]] = []
    objective = 0.0
    for bug in instance.bugs:
        if use_cost:
            score = {
                d.id: coefficient(instance.alpha, bug.suitability, bug.cost, d.id)
                for d in instance.developers
            }
        else:
            smax = max(bug.suitability.values())
            score = {d.id: bug.suitability[d.id] / smax for d in instance.developers}
        # deterministic argmax: highest score, then first developer in id order
        best = sorted(
            (d.id for d in instance.developers),
            key=lambda did: (-score[did], did),
        )[0]
        chosen.append((bug.id, best))
        objective += score[best]
    plan = TriagePlan(objective_value=objective)
    plan.assignments = _schedule_onto_slots(instance, chosen)
    plan.deferred = []
    return plan


# ---------------------------------------------------------------------------
# ground-truth replay
# ---------------------------------------------------------------------------

def replay_actual(
    instance: TriageInstance,
    ground_truth: Dict[str, Tuple[str, int, int]],  # bug -> (assignee, day, duration)
) -> TriagePlan:
    """Emit the historical assignments that happened on this instance's day."""
    devs = {d.id: d for d in instance.developers}
    chosen: List[Tuple[str, str, int]] = []
    deferred: List[str] = []
    for bug in instance.bugs:
        truth = ground_truth.get(bug.id)
        if truth is None:
            deferred.append(bug.id)
            continue
        assignee, assign_day, duration = truth
        if assign_day != instance.day or assignee not in devs:
            deferred.append(bug.id)
            continue
        chosen.append((bug.id, assignee, duration))
    plan = TriagePlan(deferred=deferred)
    local = {d.id: [set(occ) for occ in d.occupied] for d in instance.developers}
    for bug_id, dev_id, duration in chosen:
        dev = devs[dev_id]
        occ_sets = local[dev_id]
        slot = max(
            range(dev.slot_count),
            key=lambda j: (
                sum(1 for t in range(1, instance.horizon + 1) if t not in occ_sets[j]),
                -j,
            ),
        )
        # history overrides the schedule: work starts today regardless
        occ_sets[slot].update(range(1, 1 + duration))
        plan.assignments.append(Assignment(bug_id, dev_id, slot, 1, duration=duration))
    return plan


# ---------------------------------------------------------------------------
# independent plan validation
# ---------------------------------------------------------------------------

def validate_plan(
    instance: TriageInstance, plan: TriagePlan, strict_horizon: bool = True
) -> List[str]:
    """Check plan invariants straight from the instance data.

    Deliberately separate from the solver's own constraint check: this
    reads the plan tuples, not the compiled program.
    """
    problems: List[str] = []
    bugs = {b.id: b for b in instance.bugs}
    devs = {d.id: d for d in instance.developers}
    seen: Dict[str, Assignment] = {}

    for a in plan.assignments:
        if a.bug_id in seen:
            problems.append(f"{a.bug_id}: assigned more than once")
        seen[a.bug_id] = a
    for bug_id in plan.deferred:
        if bug_id in seen:
            problems.append(f"{bug_id}: both assigned and deferred")
    if not plan.covers_exactly([b.id for b in instance.bugs]):
        problems.append("plan does not cover the instance bug set exactly once")

    occupancy: Dict[Tuple[str, int], Set[int]] = {}
    for a in plan.assignments:
        bug = bugs[a.bug_id]
        dev = devs[a.developer]
        c = a.duration if a.duration is not None else bug.cost[a.developer]
        span = set(range(a.start_day, a.start_day + c))
        key = (a.developer, a.slot)
        prior = occupancy.setdefault(key, set())
        if prior & span:
            problems.append(f"{a.bug_id}: overlaps another planned bug on {key}")
        prior |= span
        if strict_horizon:
            if span & dev.occupied[a.slot]:
                problems.append(f"{a.bug_id}: overlaps pre-existing occupancy on {key}")
            if a.start_day + c - 1 > instance.horizon:
                problems.append(f"{a.bug_id}: finishes past the horizon")
            for _, tau in bug.ledger_parents:
                if a.start_day <= tau:
                    problems.append(f"{a.bug_id}: starts before in-progress blocker finishes")

    if strict_horizon:
        for a in plan.assignments:
            bug = bugs[a.bug_id]
            for parent_id in bug.open_parents:
                pa = seen.get(parent_id)
                if pa is None:
                    problems.append(f"{a.bug_id}: assigned while parent {parent_id} deferred")
                    continue
                p_cost = pa.duration if pa.duration is not None else bugs[parent_id].cost[pa.developer]
                if a.start_day < pa.start_day + p_cost:
                    problems.append(
                        f"{a.bug_id}: starts before parent {parent_id} finishes"
                    )
    return problems
