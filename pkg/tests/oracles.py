"""Independent oracles and random-instance generators shared by the tests.

The plan enumerator walks the plan space directly (bug by bug, checking
the scheduling rules on the plan tuples) and never touches the compiled
0-1 programs, so it can arbitrate the solver-based strategies.
"""

import random

from triagesim.strategies import (
    InstanceBug,
    InstanceDeveloper,
    TriageInstance,
    coefficient,
)


def placements(instance, bug):
    """All (dev, slot, start, cost) tuples legal for this bug in isolation."""
    tau_gate = max((tau for _, tau in bug.ledger_parents), default=0)
    out = []
    for dev in instance.developers:
        c = bug.cost[dev.id]
        for j in range(dev.slot_count):
            for t in range(tau_gate + 1, instance.horizon - c + 2):
                if dev.window_free(j, t, c):
                    out.append((dev.id, j, t, c))
    return out


def _topo_bugs(instance):
    by_id = {b.id: b for b in instance.bugs}
    order, seen = [], set()

    def visit(bug):
        if bug.id in seen:
            return
        seen.add(bug.id)
        for pid in bug.open_parents:
            if pid in by_id:
                visit(by_id[pid])
        order.append(bug)

    for b in instance.bugs:
        visit(b)
    return order


def enumerate_best_objective(instance):
    """Exhaustive search over all feasible plans; returns the best objective."""
    bugs = _topo_bugs(instance)
    opts = {b.id: placements(instance, b) for b in bugs}
    weights = {
        (b.id, d.id): coefficient(instance.alpha, b.suitability, b.cost, d.id)
        for b in bugs
        for d in instance.developers
    }
    best = [0.0]  # deferring everything is always feasible
    occupied = {}  # (dev, slot) -> set of days
    placed = {}  # bug id -> (dev, slot, start, cost) or None

    def rec(k, obj):
        if k == len(bugs):
            if obj > best[0]:
                best[0] = obj
            return
        bug = bugs[k]
        # option: defer
        placed[bug.id] = None
        rec(k + 1, obj)
        for dev_id, j, t, c in opts[bug.id]:
            ok = True
            for pid in bug.open_parents:
                parent = placed.get(pid)
                if parent is None:
                    ok = False
                    break
                _, _, pt, pc = parent
                if t < pt + pc:
                    ok = False
                    break
            if not ok:
                continue
            span = set(range(t, t + c))
            occ = occupied.setdefault((dev_id, j), set())
            if occ & span:
                continue
            occ |= span
            placed[bug.id] = (dev_id, j, t, c)
            rec(k + 1, obj + weights[(bug.id, dev_id)])
            occ -= span
        placed[bug.id] = None

    rec(0, 0.0)
    return best[0]


def enumeration_size(instance):
    size = 1
    for b in instance.bugs:
        size *= len(placements(instance, b)) + 1
    return size


def random_instance(
    rng: random.Random,
    max_bugs=6,
    max_devs=3,
    max_slots=2,
    max_horizon=5,
    dep_prob=0.25,
    ledger_prob=0.2,
    busy_prob=0.3,
    size_cap=150_000,
):
    """Random small triage instance, resampled until the oracle can afford it."""
    while True:
        n_bugs = rng.randint(1, max_bugs)
        n_devs = rng.randint(1, max_devs)
        horizon = rng.randint(2, max_horizon)
        devs = []
        for d in range(n_devs):
            slots = rng.randint(1, max_slots)
            occupied = [
                {t for t in range(1, horizon + 1) if rng.random() < busy_prob}
                for _ in range(slots)
            ]
            devs.append(InstanceDeveloper(f"d{d}", slots, occupied))
        bugs = []
        for i in range(n_bugs):
            suit = {d.id: rng.uniform(0.1, 1.0) for d in devs}
            cost = {d.id: rng.randint(1, horizon + 1) for d in devs}
            open_parents = [
                bugs[p].id for p in range(i) if rng.random() < dep_prob
            ][:2]
            ledger_parents = []
            if rng.random() < ledger_prob:
                ledger_parents.append((f"ledger{i}", rng.randint(1, horizon)))
            bugs.append(
                InstanceBug(
                    id=f"b{i}",
                    suitability=suit,
                    cost=cost,
                    open_parents=open_parents,
                    ledger_parents=ledger_parents,
                )
            )
        inst = TriageInstance(
            day=1, bugs=bugs, developers=devs, alpha=rng.choice([0.0, 0.3, 0.5, 0.8, 1.0]),
            horizon=horizon,
        )
        if enumeration_size(inst) <= size_cap:
            return inst
