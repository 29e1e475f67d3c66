"""Dataset acquisition and cleaning.

Raw bug histories come from a Bugzilla-style REST endpoint (cached on
disk for offline reruns) or from an archived line-delimited JSON event
log. The event timeline is reconstructed into bug records, active
developers are identified, and five sequential filters shrink the data
into the clean training/testing log the simulator replays.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from dataclasses import dataclass, field
from datetime import date, datetime
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from .model import BugRecord, BugStatus


class EventKind(str, Enum):
    REPORTED = "reported"
    DEPENDENCY_ADDED = "dependency_added"
    DEPENDENCY_REMOVED = "dependency_removed"
    ASSIGNED = "assigned"
    FIXED = "fixed"
    REOPENED = "reopened"
    META_FLAGGED = "meta_flagged"


@dataclass
class RawEvent:
    bug_id: str
    kind: EventKind
    day: int
    payload: Dict[str, object] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, object]:
        return {
            "bug_id": self.bug_id,
            "kind": self.kind.value,
            "day": self.day,
            "payload": self.payload,
        }

    @classmethod
    def from_dict(cls, doc: Dict[str, object]) -> "RawEvent":
        return cls(
            bug_id=str(doc["bug_id"]),
            kind=EventKind(doc["kind"]),
            day=int(doc["day"]),
            payload=dict(doc.get("payload", {})),
        )


def save_event_log(events: Iterable[RawEvent], path: str) -> None:
    with open(path, "w") as fh:
        for event in events:
            fh.write(json.dumps(event.to_dict()) + "\n")


def load_event_log(path: str) -> List[RawEvent]:
    events = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                events.append(RawEvent.from_dict(json.loads(line)))
    return events


@dataclass
class DatasetManifest:
    project: str
    train_window: Tuple[int, int]
    test_window: Tuple[int, int]
    stage_counts: Dict[int, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        ts, te = self.train_window
        vs, ve = self.test_window
        if ts > te or vs > ve:
            raise ValueError("window start must not exceed its end")
        if vs != te + 1:
            raise ValueError("test window must start right after training")
        counts = [self.stage_counts[k] for k in sorted(self.stage_counts)]
        if any(b > a for a, b in zip(counts, counts[1:])):
            raise ValueError("stage counts must be nonincreasing")

    def to_json(self) -> str:
        return json.dumps(
            {
                "format": "dataset-manifest/1",
                "project": self.project,
                "train_window": list(self.train_window),
                "test_window": list(self.test_window),
                "stage_counts": {str(k): v for k, v in self.stage_counts.items()},
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        doc = json.loads(text)
        if doc.get("format") != "dataset-manifest/1":
            raise ValueError("unrecognized manifest document")
        return cls(
            project=doc["project"],
            train_window=tuple(doc["train_window"]),
            test_window=tuple(doc["test_window"]),
            stage_counts={int(k): v for k, v in doc["stage_counts"].items()},
        )


class MalformedRecordError(ValueError):
    def __init__(self, record_id: str, reason: str):
        self.record_id = record_id
        super().__init__(f"record {record_id}: {reason}")


class EmptyHistoryError(ValueError):
    pass


class FetchError(RuntimeError):
    pass


class AuthorizationError(FetchError):
    pass


class BugzillaClient:
    """Read-only REST client with a verbatim on-disk response cache.

    ``epoch`` anchors the integer day indexing: day = (date - epoch).days.
    The API token, when needed, is read from the environment.
    """

    def __init__(
        self,
        base_url: str,
        cache_dir: str,
        epoch: date,
        token_env: str = "BUGZILLA_API_KEY",
        max_retries: int = 3,
        backoff_seconds: float = 1.0,
        session=None,
    ):
        self.base_url = base_url.rstrip("/")
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.epoch = epoch
        self.token_env = token_env
        self.max_retries = max_retries
        self.backoff_seconds = backoff_seconds
        self._session = session

    def _cache_path(self, url: str, params: Dict[str, str]) -> Path:
        key = url + "?" + json.dumps(params, sort_keys=True)
        return self.cache_dir / (hashlib.sha256(key.encode()).hexdigest() + ".json")

    def _get(self, path: str, params: Dict[str, str]) -> Dict[str, object]:
        url = f"{self.base_url}{path}"
        cache = self._cache_path(url, params)
        if cache.exists():
            return json.loads(cache.read_text())
        if self._session is None:
            import requests

            self._session = requests.Session()
        token = os.environ.get(self.token_env)
        if token:
            params = dict(params, api_key=token)
        last_error: Optional[Exception] = None
        for attempt in range(self.max_retries):
            try:
                response = self._session.get(url, params=params, timeout=30)
            except Exception as exc:
                last_error = exc
                time.sleep(self.backoff_seconds * (2 ** attempt))
                continue
            if response.status_code in (401, 403, 429):
                raise AuthorizationError(
                    f"{url} returned {response.status_code}"
                )
            if response.status_code >= 500:
                last_error = FetchError(f"{url} returned {response.status_code}")
                time.sleep(self.backoff_seconds * (2 ** attempt))
                continue
            if response.status_code != 200:
                raise FetchError(f"{url} returned {response.status_code}")
            doc = response.json()
            cache.write_text(json.dumps(doc))
            return doc
        raise FetchError(f"{url} failed after {self.max_retries} attempts") from last_error

    def _day(self, stamp: str) -> int:
        parsed = datetime.strptime(stamp[:10], "%Y-%m-%d").date()
        return (parsed - self.epoch).days

    def fetch_project(
        self, project: str, window: Tuple[int, int]
    ) -> List[RawEvent]:
        """Event list for bugs reported inside the window, history included."""
        listing = self._get(
            "/rest/bug",
            {
                "product": project,
                "include_fields": "id,summary,creation_time,component,"
                "status,resolution,assigned_to,keywords,depends_on,blocks",
                "limit": "0",
            },
        )
        events: List[RawEvent] = []
        for bug in listing.get("bugs", []):
            bug_id = str(bug.get("id", ""))
            if not bug_id:
                raise MalformedRecordError("?", "bug without id")
            if "creation_time" not in bug:
                raise MalformedRecordError(bug_id, "missing creation_time")
            day = self._day(bug["creation_time"])
            if not window[0] <= day <= window[1]:
                continue
            events.append(
                RawEvent(
                    bug_id,
                    EventKind.REPORTED,
                    day,
                    {
                        "summary": bug.get("summary", ""),
                        "description": bug.get("description", ""),
                        "component": bug.get("component", ""),
                    },
                )
            )
            if "meta" in [k.lower() for k in bug.get("keywords", [])]:
                events.append(RawEvent(bug_id, EventKind.META_FLAGGED, day, {}))
            history = self._get(f"/rest/bug/{bug_id}/history", {})
            events.extend(self._history_events(bug_id, history))
        events.sort(key=lambda e: (e.day, e.bug_id))
        return events

    def _history_events(
        self, bug_id: str, history: Dict[str, object]
    ) -> List[RawEvent]:
        events: List[RawEvent] = []
        for bug in history.get("bugs", []):
            for change_set in bug.get("history", []):
                day = self._day(change_set["when"])
                for change in change_set.get("changes", []):
                    field_name = change.get("field_name")
                    if field_name == "assigned_to" and change.get("added"):
                        events.append(
                            RawEvent(
                                bug_id,
                                EventKind.ASSIGNED,
                                day,
                                {"developer": change["added"]},
                            )
                        )
                    elif field_name == "status":
                        added = change.get("added", "")
                        if added in ("RESOLVED", "VERIFIED", "CLOSED"):
                            events.append(
                                RawEvent(bug_id, EventKind.FIXED, day, {})
                            )
                        elif added == "REOPENED":
                            events.append(
                                RawEvent(bug_id, EventKind.REOPENED, day, {})
                            )
                    elif field_name == "depends_on":
                        for other in str(change.get("added", "")).split(","):
                            other = other.strip()
                            if other:
                                events.append(
                                    RawEvent(
                                        bug_id,
                                        EventKind.DEPENDENCY_ADDED,
                                        day,
                                        {"blocker": other},
                                    )
                                )
                        for other in str(change.get("removed", "")).split(","):
                            other = other.strip()
                            if other:
                                events.append(
                                    RawEvent(
                                        bug_id,
                                        EventKind.DEPENDENCY_REMOVED,
                                        day,
                                        {"blocker": other},
                                    )
                                )
        return events


def events_to_records(events: Sequence[RawEvent]) -> Dict[str, BugRecord]:
    """Replay the event stream into finished bug records."""
    records: Dict[str, BugRecord] = {}
    for event in events:
        record = records.get(event.bug_id)
        if event.kind is EventKind.REPORTED:
            records[event.bug_id] = BugRecord(
                id=event.bug_id,
                summary=str(event.payload.get("summary", "")),
                description=str(event.payload.get("description", "")),
                component=str(event.payload.get("component", "")),
                report_day=event.day,
            )
            continue
        if record is None:
            raise MalformedRecordError(
                event.bug_id, f"{event.kind.value} before reported"
            )
        if event.kind is EventKind.META_FLAGGED:
            record.is_meta = True
        elif event.kind is EventKind.ASSIGNED:
            record.actual_assignee = str(event.payload["developer"])
            record.actual_assign_day = event.day
            record.status = BugStatus.ASSIGNED
        elif event.kind is EventKind.FIXED:
            record.actual_fix_day = event.day
            record.status = BugStatus.FIXED
            if record.actual_assign_day is not None:
                # inclusive day count: a same-day fix took one working day
                record.fixing_time_days = event.day - record.actual_assign_day + 1
        elif event.kind is EventKind.REOPENED:
            record.status = BugStatus.OPEN
        elif event.kind is EventKind.DEPENDENCY_ADDED:
            blocker = str(event.payload["blocker"])
            record.depends_on.add(blocker)
            if blocker in records:
                records[blocker].blocks.add(event.bug_id)
        elif event.kind is EventKind.DEPENDENCY_REMOVED:
            blocker = str(event.payload["blocker"])
            record.depends_on.discard(blocker)
            if blocker in records:
                records[blocker].blocks.discard(event.bug_id)
    return records


def _quartiles(values: Sequence[float]) -> Tuple[float, float]:
    q1, q3 = np.percentile(np.asarray(values, dtype=float), [25, 75])
    return float(q1), float(q3)


def identify_active_developers(records: Dict[str, BugRecord]) -> Set[str]:
    """Developers whose fix count strictly exceeds the IQR of all counts."""
    counts: Dict[str, int] = {}
    for record in records.values():
        if record.status is BugStatus.FIXED and record.actual_assignee:
            counts[record.actual_assignee] = counts.get(record.actual_assignee, 0) + 1
    if not counts:
        raise EmptyHistoryError("no fixed bugs with assignees in the window")
    q1, q3 = _quartiles(list(counts.values()))
    iqr = q3 - q1
    return {dev for dev, count in counts.items() if count > iqr}


def apply_filters(
    records: Dict[str, BugRecord],
    active_developers: Set[str],
    project: str = "",
    train_window: Tuple[int, int] = (0, 0),
    test_window: Tuple[int, int] = (1, 1),
) -> Tuple[Dict[str, BugRecord], DatasetManifest]:
    """Sequential cleanup; each stage only drops records.

    Stage 0 removes umbrella bugs that merely group others, 1 keeps only
    resolved bugs with usable dates, 2 restricts to active developers,
    3 demands a sane assignment date, 4 removes fixing-time outliers.
    """
    stage_counts: Dict[int, int] = {}

    survivors = {b: r for b, r in records.items() if not r.is_meta}
    stage_counts[0] = len(survivors)

    survivors = {
        b: r
        for b, r in survivors.items()
        if r.status is BugStatus.FIXED and r.actual_fix_day is not None
    }
    stage_counts[1] = len(survivors)

    survivors = {
        b: r for b, r in survivors.items() if r.actual_assignee in active_developers
    }
    stage_counts[2] = len(survivors)

    survivors = {
        b: r
        for b, r in survivors.items()
        if r.actual_assign_day is not None
        and r.actual_assign_day <= r.actual_fix_day
        and r.fixing_time_days is not None
    }
    stage_counts[3] = len(survivors)

    if survivors:
        times = [r.fixing_time_days for r in survivors.values()]
        q1, q3 = _quartiles(times)
        threshold = q3 + 1.5 * (q3 - q1)
        survivors = {
            b: r for b, r in survivors.items() if r.fixing_time_days <= threshold
        }
    stage_counts[4] = len(survivors)

    manifest = DatasetManifest(
        project=project,
        train_window=train_window,
        test_window=test_window,
        stage_counts=stage_counts,
    )
    return survivors, manifest


def estimate_slot_counts(
    records: Dict[str, BugRecord], developers: Iterable[str]
) -> Dict[str, int]:
    """Simultaneous-task capacity per developer from historical overlap.

    A bug occupies its assignee on days assign_day <= t < fix_day. The
    per-day counts are taken over days with at least one active task;
    developers with no history default to a single slot.
    """
    slots: Dict[str, int] = {}
    for dev in developers:
        per_day: Dict[int, int] = {}
        for record in records.values():
            if record.actual_assignee != dev:
                continue
            if record.actual_assign_day is None or record.actual_fix_day is None:
                continue
            start = record.actual_assign_day
            end = max(record.actual_fix_day, start + 1)
            for day in range(start, end):
                per_day[day] = per_day.get(day, 0) + 1
        if not per_day:
            slots[dev] = 1
            continue
        counts = list(per_day.values())
        q1, q3 = _quartiles(counts)
        slots[dev] = max(1, math.floor(q3 + 1.5 * (q3 - q1)))
    return slots
