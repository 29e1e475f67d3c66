import json
from datetime import date

import pytest
from hypothesis import given, strategies as st

from triagesim.ingest import (
    BugzillaClient,
    DatasetManifest,
    EmptyHistoryError,
    EventKind,
    MalformedRecordError,
    RawEvent,
    apply_filters,
    estimate_slot_counts,
    events_to_records,
    identify_active_developers,
    load_event_log,
    save_event_log,
)
from triagesim.model import BugRecord, BugStatus


def fixed_bug(bug_id, assignee, assign_day=1, fix_day=3, **kwargs):
    return BugRecord(
        id=bug_id,
        report_day=0,
        actual_assignee=assignee,
        actual_assign_day=assign_day,
        actual_fix_day=fix_day,
        fixing_time_days=fix_day - assign_day + 1,
        status=BugStatus.FIXED,
        **kwargs,
    )


def records_with_fix_counts(counts):
    records = {}
    n = 0
    for dev, count in counts.items():
        for _ in range(count):
            records[f"b{n}"] = fixed_bug(f"b{n}", dev)
            n += 1
    return records


# -- active developers ---------------------------------------------------


def test_active_developers_strictly_above_iqr():
    records = records_with_fix_counts({"d1": 1, "d2": 2, "d3": 3, "d4": 10, "d5": 20})
    assert identify_active_developers(records) == {"d4", "d5"}


def test_all_equal_counts_keeps_everyone():
    records = records_with_fix_counts({"d1": 4, "d2": 4, "d3": 4})
    assert identify_active_developers(records) == {"d1", "d2", "d3"}


def test_empty_history_rejected():
    with pytest.raises(EmptyHistoryError):
        identify_active_developers({})


@given(
    st.lists(st.integers(min_value=1, max_value=30), min_size=2, max_size=8),
    st.randoms(use_true_random=False),
)
def test_active_set_invariant_under_relabeling(counts, rnd):
    base = {f"d{i}": c for i, c in enumerate(counts)}
    names = list(base)
    shuffled = names[:]
    rnd.shuffle(shuffled)
    relabel = dict(zip(names, shuffled))
    permuted = {relabel[dev]: c for dev, c in base.items()}
    active = identify_active_developers(records_with_fix_counts(base))
    active_permuted = identify_active_developers(records_with_fix_counts(permuted))
    assert {relabel[d] for d in active} == active_permuted


# -- slot counts ---------------------------------------------------------


def daily_count_records(dev, day_counts):
    records = {}
    n = 0
    for day, count in enumerate(day_counts, start=1):
        for _ in range(count):
            records[f"b{n}"] = fixed_bug(f"b{n}", dev, assign_day=day, fix_day=day + 1)
            n += 1
    return records


def test_slot_count_from_mixed_daily_counts():
    records = daily_count_records("d1", [1, 1, 2, 1, 3])
    assert estimate_slot_counts(records, ["d1"]) == {"d1": 3}


def test_slot_count_constant_one():
    records = daily_count_records("d1", [1, 1, 1, 1])
    assert estimate_slot_counts(records, ["d1"]) == {"d1": 1}


def test_slot_count_outlier_day_ignored_by_iqr():
    records = daily_count_records("d1", [2, 2, 2, 2, 6])
    assert estimate_slot_counts(records, ["d1"]) == {"d1": 2}


def test_slot_count_defaults_to_one_without_history():
    assert estimate_slot_counts({}, ["d9"]) == {"d9": 1}


# -- filters -------------------------------------------------------------


def sample_records():
    records = {
        "meta": fixed_bug("meta", "d1", is_meta=True),
        "open": BugRecord(id="open", report_day=0),
        "inactive": fixed_bug("inactive", "ghost"),
        "good1": fixed_bug("good1", "d1", assign_day=1, fix_day=3),
        "good2": fixed_bug("good2", "d2", assign_day=2, fix_day=4),
        "good3": fixed_bug("good3", "d1", assign_day=1, fix_day=2),
        "slow": fixed_bug("slow", "d2", assign_day=1, fix_day=60),
    }
    noassign = fixed_bug("noassign", "d1")
    noassign.actual_assign_day = None
    noassign.fixing_time_days = None
    records["noassign"] = noassign
    return records


def test_filter_stages_drop_expected_records():
    survivors, manifest = apply_filters(
        sample_records(), {"d1", "d2"}, project="p", train_window=(0, 5), test_window=(6, 9)
    )
    assert set(survivors) == {"good1", "good2", "good3"}
    counts = [manifest.stage_counts[k] for k in range(5)]
    assert counts == [7, 6, 5, 4, 3]
    assert all(b <= a for a, b in zip(counts, counts[1:]))


def test_filters_idempotent():
    once, _ = apply_filters(sample_records(), {"d1", "d2"})
    twice, manifest = apply_filters(once, {"d1", "d2"})
    assert set(twice) == set(once)
    assert manifest.stage_counts[0] == manifest.stage_counts[4]


def test_all_meta_fixture_empties_at_stage_zero():
    records = {b: fixed_bug(b, "d1", is_meta=True) for b in ("a", "b", "c")}
    survivors, manifest = apply_filters(records, {"d1"})
    assert survivors == {}
    assert all(manifest.stage_counts[k] == 0 for k in range(5))


def test_manifest_rejects_bad_windows_and_counts():
    with pytest.raises(ValueError):
        DatasetManifest("p", (0, 5), (7, 9))
    with pytest.raises(ValueError):
        DatasetManifest("p", (0, 5), (6, 9), stage_counts={0: 3, 1: 5})


def test_manifest_json_round_trip():
    manifest = DatasetManifest("p", (0, 5), (6, 9), stage_counts={0: 4, 1: 2})
    clone = DatasetManifest.from_json(manifest.to_json())
    assert clone == manifest


# -- event log and reconstruction ---------------------------------------


def test_event_log_round_trip(tmp_path):
    events = [
        RawEvent("b1", EventKind.REPORTED, 0, {"summary": "s", "description": "d"}),
        RawEvent("b1", EventKind.ASSIGNED, 1, {"developer": "d1"}),
        RawEvent("b1", EventKind.FIXED, 4, {}),
    ]
    path = tmp_path / "log.jsonl"
    save_event_log(events, str(path))
    assert load_event_log(str(path)) == events


def test_reconstruction_builds_fixed_record():
    events = [
        RawEvent("b1", EventKind.REPORTED, 0, {"summary": "crash", "component": "ui"}),
        RawEvent("b1", EventKind.ASSIGNED, 2, {"developer": "d1"}),
        RawEvent("b1", EventKind.FIXED, 5, {}),
    ]
    record = events_to_records(events)["b1"]
    assert record.status is BugStatus.FIXED
    assert record.actual_assignee == "d1"
    assert record.fixing_time_days == 4
    assert record.component == "ui"


def test_same_day_fix_counts_one_day():
    events = [
        RawEvent("b1", EventKind.REPORTED, 0, {}),
        RawEvent("b1", EventKind.ASSIGNED, 2, {"developer": "d1"}),
        RawEvent("b1", EventKind.FIXED, 2, {}),
    ]
    assert events_to_records(events)["b1"].fixing_time_days == 1


def test_dependency_add_then_remove_leaves_record_clean():
    events = [
        RawEvent("b1", EventKind.REPORTED, 0, {}),
        RawEvent("b2", EventKind.REPORTED, 0, {}),
        RawEvent("b2", EventKind.DEPENDENCY_ADDED, 1, {"blocker": "b1"}),
        RawEvent("b2", EventKind.DEPENDENCY_REMOVED, 2, {"blocker": "b1"}),
    ]
    records = events_to_records(events)
    assert records["b2"].depends_on == set()
    assert records["b1"].blocks == set()


def test_reopened_returns_bug_to_open():
    events = [
        RawEvent("b1", EventKind.REPORTED, 0, {}),
        RawEvent("b1", EventKind.ASSIGNED, 1, {"developer": "d1"}),
        RawEvent("b1", EventKind.FIXED, 3, {}),
        RawEvent("b1", EventKind.REOPENED, 6, {}),
    ]
    assert events_to_records(events)["b1"].status is BugStatus.OPEN


def test_event_before_report_rejected():
    with pytest.raises(MalformedRecordError):
        events_to_records([RawEvent("b1", EventKind.FIXED, 3, {})])


# -- REST client ---------------------------------------------------------


class FakeResponse:
    def __init__(self, doc, status_code=200):
        self._doc = doc
        self.status_code = status_code

    def json(self):
        return self._doc


class FakeSession:
    def __init__(self, routes):
        self.routes = routes
        self.calls = []

    def get(self, url, params=None, timeout=None):
        self.calls.append(url)
        for path, doc in self.routes.items():
            if url.endswith(path):
                return FakeResponse(doc)
        return FakeResponse({}, status_code=404)


def fake_routes():
    bugs = [
        {
            "id": i,
            "summary": f"bug {i}",
            "creation_time": f"2020-01-0{i}T10:00:00Z",
            "component": "core",
            "keywords": [],
        }
        for i in (1, 2, 3)
    ]
    routes = {"/rest/bug": {"bugs": bugs}}
    for i in (1, 2):
        routes[f"/rest/bug/{i}/history"] = {"bugs": [{"history": []}]}
    routes["/rest/bug/3/history"] = {
        "bugs": [
            {
                "history": [
                    {
                        "when": "2020-01-05T08:00:00Z",
                        "changes": [
                            {"field_name": "depends_on", "added": "1", "removed": ""}
                        ],
                    },
                    {
                        "when": "2020-01-06T08:00:00Z",
                        "changes": [
                            {"field_name": "depends_on", "added": "", "removed": "1"},
                            {"field_name": "assigned_to", "added": "d1", "removed": ""},
                        ],
                    },
                    {
                        "when": "2020-01-08T08:00:00Z",
                        "changes": [
                            {"field_name": "status", "added": "RESOLVED", "removed": ""}
                        ],
                    },
                ]
            }
        ]
    }
    return routes


def make_client(tmp_path, session):
    return BugzillaClient(
        "https://bugs.example/",
        str(tmp_path / "cache"),
        epoch=date(2020, 1, 1),
        session=session,
    )


def test_fetch_project_returns_all_reported_and_changes(tmp_path):
    client = make_client(tmp_path, FakeSession(fake_routes()))
    events = client.fetch_project("p", (0, 30))
    reported = [e for e in events if e.kind is EventKind.REPORTED]
    assert [e.bug_id for e in reported] == ["1", "2", "3"]
    kinds3 = [e.kind for e in events if e.bug_id == "3"]
    assert kinds3 == [
        EventKind.REPORTED,
        EventKind.DEPENDENCY_ADDED,
        EventKind.DEPENDENCY_REMOVED,
        EventKind.ASSIGNED,
        EventKind.FIXED,
    ]


def test_window_excluding_all_bugs_is_empty(tmp_path):
    client = make_client(tmp_path, FakeSession(fake_routes()))
    assert client.fetch_project("p", (100, 200)) == []


def test_cache_makes_reruns_offline(tmp_path):
    session = FakeSession(fake_routes())
    client = make_client(tmp_path, session)
    first = client.fetch_project("p", (0, 30))
    # a client over the same cache dir with no session must not touch the network
    offline = make_client(tmp_path, session=None)
    assert offline.fetch_project("p", (0, 30)) == first
