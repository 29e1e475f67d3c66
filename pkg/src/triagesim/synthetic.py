"""Synthetic corpus generation.

Produces an event stream plus preset parameter matrices with planted
structure that makes the qualitative differences between the triage
strategies observable on a corpus that runs in seconds:

- an over-suitable but slow "expert" developer that pure content
  ranking piles everything onto;
- one dependency chain per day whose elements are each cheap for a
  different worker, so schedule-aware triage stages the whole chain on
  arrival day while per-day budgeting releases one element at a time;
- a cheap "specialist" whose calendar is fragmented by off days, so
  budget-based triage keeps routing quick jobs at them while
  schedule-aware triage books longer jobs on free generalists.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Set

from .ingest import EventKind, RawEvent
from .model import DeveloperProfile
from .sim import MatrixParamProvider


@dataclass
class SyntheticDataset:
    events: List[RawEvent]
    provider: MatrixParamProvider
    horizon: int
    n_days: int
    developer_off_days: Dict[str, Set[int]] = field(default_factory=dict)
    bug_ids: List[str] = field(default_factory=list)


def generate(
    seed: int = 0,
    n_bugs: int = 500,
    n_days: int = 42,
    horizon: int = 8,
    chain_length: int = 7,
    n_generalists: int = 10,
    specialist_period: int = 3,
    specialist_cost: int = 6,
    expert_cost: int = 5,
) -> SyntheticDataset:
    """Bug stream with planted chains and heterogeneous costs.

    Developers: "expert" (maximal suitability on filler bugs, slow),
    "spec" (cheap on specialist bugs but off every other day),
    ``chain_length`` chain workers c0.. (each the only fast choice for
    one chain position) and ``n_generalists`` generalists g0.. .
    """
    rng = random.Random(seed)
    workers = [f"c{i}" for i in range(chain_length)]
    generalists = [f"g{i}" for i in range(n_generalists)]
    dev_ids = ["expert", "spec"] + workers + generalists
    profiles = [DeveloperProfile(d, slot_count=1) for d in dev_ids]
    spec_off = {d for d in range(1, n_days + horizon + 1) if d % 2 == 0}

    events: List[RawEvent] = []
    suitability: Dict[str, Dict[str, float]] = {}
    cost: Dict[str, Dict[str, int]] = {}
    bug_ids: List[str] = []
    serial = 0

    def new_bug(day: int) -> str:
        nonlocal serial
        bug_id = f"b{serial:04d}"
        serial += 1
        bug_ids.append(bug_id)
        events.append(
            RawEvent(
                bug_id,
                EventKind.REPORTED,
                day,
                {"summary": f"synthetic bug {bug_id}", "component": "core"},
            )
        )
        return bug_id

    # one chain per day, every day: element i is a one-day job for
    # worker i and prohibitively slow for anyone else
    for day in range(1, n_days + 1):
        prev: Optional[str] = None
        for i in range(chain_length):
            bug_id = new_bug(day)
            owner = workers[i]
            suitability[bug_id] = {d: (1.0 if d == owner else 0.2) for d in dev_ids}
            cost[bug_id] = {d: (1 if d == owner else horizon + 1) for d in dev_ids}
            if prev is not None:
                events.append(
                    RawEvent(bug_id, EventKind.DEPENDENCY_ADDED, day, {"blocker": prev})
                )
            prev = bug_id

    # specialist bugs: two-day jobs for "spec", four-day jobs for the
    # generalists; spec's broken calendar never offers two consecutive
    # free days inside the horizon
    for day in range(1, n_days + 1, specialist_period):
        bug_id = new_bug(day)
        suitability[bug_id] = {d: (1.0 if d == "spec" else 0.3) for d in dev_ids}
        cost[bug_id] = {
            d: (specialist_cost if d in generalists else horizon + 1)
            for d in dev_ids
        }
        cost[bug_id]["spec"] = 2

    # independent filler: the expert dominates on affinity but is slow
    while serial < n_bugs:
        day = rng.randint(1, n_days)
        bug_id = new_bug(day)
        suitability[bug_id] = {d: (1.0 if d == "expert" else 0.5) for d in dev_ids}
        cost[bug_id] = {d: (1 if d in generalists else horizon + 1) for d in dev_ids}
        cost[bug_id]["expert"] = expert_cost

    events.sort(
        key=lambda e: (e.day, 0 if e.kind is EventKind.REPORTED else 1, e.bug_id)
    )
    provider = MatrixParamProvider(profiles, suitability, cost)
    return SyntheticDataset(
        events=events,
        provider=provider,
        horizon=horizon,
        n_days=n_days,
        developer_off_days={"spec": spec_off},
        bug_ids=bug_ids,
    )
