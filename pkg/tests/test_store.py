import json

import pytest

from dirmon import (
    ComponentStatus,
    ConsistencyError,
    EventRecord,
    EventStore,
    NotFoundError,
)
from dirmon.store import replay_check

from conftest import make_config
from oracles import fold_store_dir


def make_store(tmp_path, **overrides):
    return EventStore.create(tmp_path / "run", make_config(**overrides))


def event(tick, node, summary="something happened", transition=None, detail=""):
    return EventRecord(
        tick=tick,
        node=node,
        component_id=f"dir-{node}",
        summary=summary,
        detail=detail,
        transition=transition,
        elapsed_seconds=float(tick),
    )


def test_init_writes_all_ok_snapshot(tmp_path):
    store = make_store(tmp_path)
    snapshot = store.read_global()
    assert len(snapshot.rows) == 4
    assert all(r.status is ComponentStatus.OK for r in snapshot.rows)
    assert all(r.last_event_id == 0 for r in snapshot.rows)
    assert snapshot.tick == 0 and not snapshot.system_failed


def test_reinit_truncates_previous_run(tmp_path):
    store = make_store(tmp_path)
    store.append(event(1, 2, transition=(ComponentStatus.OK, ComponentStatus.FAULTY)))
    store = EventStore.create(tmp_path / "run", make_config())
    assert list(store.iter_events()) == []
    assert store.read_global().row(2).status is ComponentStatus.OK


def test_append_updates_snapshot_row(tmp_path):
    store = make_store(tmp_path)
    store.append(event(3, 2, transition=(ComponentStatus.OK, ComponentStatus.FAULTY)))
    row = store.read_global().row(2)
    assert row.status is ComponentStatus.FAULTY
    assert row.last_event_id == 1


def test_append_rejects_illegal_edge_and_leaves_log_unchanged(tmp_path):
    store = make_store(tmp_path)
    store.append(event(1, 2, transition=(ComponentStatus.OK, ComponentStatus.FAULTY)))
    before = store.events_path.read_bytes()
    with pytest.raises(ConsistencyError):
        store.append(event(2, 2, transition=(ComponentStatus.FAULTY, ComponentStatus.OK)))
    assert store.events_path.read_bytes() == before
    next_id = store.append(event(2, 2, summary="still here"))
    assert next_id == 2


def test_append_rejects_transition_not_matching_current_status(tmp_path):
    store = make_store(tmp_path)
    with pytest.raises(ConsistencyError):
        store.append(event(1, 2, transition=(ComponentStatus.FAULTY, ComponentStatus.ISOLATED)))


def test_hundred_appends_number_one_to_hundred(tmp_path):
    store = make_store(tmp_path)
    ids = [store.append(event(t, t % 4)) for t in range(1, 101)]
    assert ids == list(range(1, 101))


def test_read_global_equals_independent_fold(tmp_path):
    store = make_store(tmp_path)
    store.append(event(1, 2, transition=(ComponentStatus.OK, ComponentStatus.FAULTY)))
    store.append(event(2, 2, transition=(ComponentStatus.FAULTY, ComponentStatus.ISOLATED)))
    store.append(event(2, 1, summary="manager elected"))
    store.append(event(3, 2, transition=(ComponentStatus.ISOLATED, ComponentStatus.RECOVERING)))
    store.append(event(5, 2, transition=(ComponentStatus.RECOVERING, ComponentStatus.OK)))
    assert store.read_global().to_dict() == fold_store_dir(tmp_path / "run")


def test_system_failed_flag_propagates(tmp_path):
    store = make_store(tmp_path)
    store.append(event(1, 0, summary="system failed"))
    assert store.read_global().system_failed


def test_node_page_newest_first(tmp_path):
    store = make_store(tmp_path)
    for t, node in [(1, 2), (1, 0), (2, 2), (3, 1), (4, 2)]:
        store.append(event(t, node))
    page = store.read_node(2)
    assert [e.event_id for e in page.events] == [5, 3, 1]


def test_node_page_empty_for_quiet_node(tmp_path):
    store = make_store(tmp_path)
    store.append(event(1, 0))
    assert store.read_node(3).events == []


def test_node_pages_partition_the_log(tmp_path):
    store = make_store(tmp_path)
    for t in range(1, 30):
        store.append(event(t, t % 4))
    all_events = list(store.iter_events())
    seen = []
    for node in range(4):
        page = store.read_node(node)
        assert all(e.node == node for e in page.events)
        seen.extend(e.event_id for e in page.events)
    assert sorted(seen) == [e.event_id for e in all_events]


def test_read_node_out_of_range(tmp_path):
    from dirmon import InvalidTarget

    store = make_store(tmp_path)
    with pytest.raises(InvalidTarget):
        store.read_node(9)


def test_read_event_round_trip(tmp_path):
    store = make_store(tmp_path)
    record = event(2, 3, summary="trap caught", detail="first line\nsecond line")
    store.append(record)
    assert store.read_event(record.event_id) == record


def test_read_event_zero_not_found(tmp_path):
    store = make_store(tmp_path)
    with pytest.raises(NotFoundError):
        store.read_event(0)


def test_every_id_on_a_node_page_is_readable(tmp_path):
    store = make_store(tmp_path)
    for t in range(1, 10):
        store.append(event(t, t % 4, detail=f"detail of {t}"))
    for node in range(4):
        for row in store.read_node(node).events:
            assert store.read_event(row.event_id).detail == row.detail


def test_durability_reader_reconstructs_from_files(tmp_path):
    store = make_store(tmp_path)
    store.append(event(1, 2, transition=(ComponentStatus.OK, ComponentStatus.FAULTY)))
    store.append(event(2, 1))
    fresh = EventStore.open(tmp_path / "run")
    assert fresh.read_global().to_dict() == store.read_global().to_dict()
    assert [e.to_dict() for e in fresh.read_node(2).events] == [
        e.to_dict() for e in store.read_node(2).events
    ]


def test_tick_regression_rejected(tmp_path):
    store = make_store(tmp_path)
    store.append(event(5, 0))
    with pytest.raises(ConsistencyError):
        store.append(event(4, 0))


def test_empty_summary_rejected(tmp_path):
    store = make_store(tmp_path)
    with pytest.raises(ConsistencyError, match="summary"):
        store.append(event(1, 0, summary=""))


def test_replay_check_agrees_on_clean_run(tmp_path):
    store = make_store(tmp_path)
    store.append(event(1, 2, transition=(ComponentStatus.OK, ComponentStatus.FAULTY)))
    store.append(event(2, 2, transition=(ComponentStatus.FAULTY, ComponentStatus.ISOLATED)))
    report = replay_check(tmp_path / "run")
    assert report.agree and report.events_checked == 2


def test_replay_check_detects_mutated_snapshot(tmp_path):
    store = make_store(tmp_path)
    store.append(event(1, 2, transition=(ComponentStatus.OK, ComponentStatus.FAULTY)))
    snap_path = store.snapshot_path
    mutated = json.loads(snap_path.read_text())
    mutated["nodes"][2]["status"] = "OK"
    snap_path.write_text(json.dumps(mutated, indent=2) + "\n")
    report = replay_check(tmp_path / "run")
    assert not report.agree
    assert any("differs from persisted" in issue for issue in report.issues)


def test_replay_check_names_corrupt_line(tmp_path):
    store = make_store(tmp_path)
    store.append(event(1, 2))
    store.append(event(2, 3))
    lines = store.events_path.read_text().splitlines()
    lines[1] = "{not json"
    store.events_path.write_text("\n".join(lines) + "\n")
    report = replay_check(tmp_path / "run")
    assert not report.agree
    assert any("line 2" in issue for issue in report.issues)


def test_replay_check_empty_directory_errors(tmp_path):
    with pytest.raises(NotFoundError):
        replay_check(tmp_path / "nothing")
