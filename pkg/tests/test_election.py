"""Election rule: lowest-index OK backup agent, checked exhaustively."""
import itertools

import pytest
from hypothesis import given, strategies as st

from dirmon import ComponentRole, ComponentStatus, ThreadId
from dirmon.sim import elect_lowest_ok_backup

from conftest import spawn
from oracles import brute_force_election

STATUSES = list(ComponentStatus)


def test_rule_matches_brute_force_for_up_to_five_nodes():
    # every backup subset of every cluster size <= 5, every status assignment
    cases = 0
    for node_count in range(2, 6):
        others = list(range(1, node_count))
        for k in range(1, len(others) + 1):
            for backups in itertools.combinations(others, k):
                for statuses in itertools.product(STATUSES, repeat=len(backups)):
                    candidates = list(zip(backups, statuses))
                    got = elect_lowest_ok_backup(candidates)
                    want = brute_force_election(
                        [(n, s.value) for n, s in candidates]
                    )
                    assert got == want, (candidates, got, want)
                    cases += 1
    assert cases == 1550  # sum over sizes 2..5 of all subset/status assignments


def test_two_ok_backups_lowest_wins():
    candidates = [(3, ComponentStatus.OK), (1, ComponentStatus.OK)]
    assert elect_lowest_ok_backup(candidates) == 1


def test_single_ok_backup_is_elected():
    assert elect_lowest_ok_backup([(2, ComponentStatus.OK)]) == 2


def test_no_ok_backup_yields_no_winner():
    candidates = [(1, ComponentStatus.KILLED), (3, ComponentStatus.FAULTY)]
    assert elect_lowest_ok_backup(candidates) is None


@given(
    st.lists(
        st.tuples(st.integers(min_value=0, max_value=30), st.sampled_from(STATUSES)),
        max_size=8,
    )
)
def test_rule_equals_min_over_ok_candidates(candidates):
    got = elect_lowest_ok_backup(candidates)
    ok_nodes = sorted(n for n, s in candidates if s is ComponentStatus.OK)
    assert got == (ok_nodes[0] if ok_nodes else None)


# -- live failover -------------------------------------------------------------


def test_manager_reboot_elects_lowest_ok_backup(tmp_path):
    system, _ = spawn(tmp_path, node_count=5, manager_node=2, backup_nodes=(1, 3))
    system.reboot_node(2)
    managers = [c.node for c in system.components if c.role is ComponentRole.MANAGER]
    assert managers == [1]


def test_failover_skips_non_ok_backup(tmp_path):
    system, _ = spawn(tmp_path, node_count=5, manager_node=0, backup_nodes=(1, 3))
    system.reboot_node(1)  # lowest backup is recovering when the manager dies
    system.reboot_node(0)
    managers = [c.node for c in system.components if c.role is ComponentRole.MANAGER]
    assert managers == [3]


def test_detected_manager_failure_triggers_election(tmp_path):
    system, store = spawn(tmp_path, node_count=4, manager_node=0, backup_nodes=(1, 3))
    for _ in range(2):
        system.step()
    system.kill_thread(ThreadId(0, 0))
    for _ in range(4):  # detection at +3, election fires the same tick
        system.step()
    summaries = [e.summary for e in store.iter_events()]
    assert "manager elected" in summaries
    assert system.component(1).role is ComponentRole.MANAGER
    assert system.component(0).role is ComponentRole.AGENT


def test_exactly_one_manager_after_stabilization(tmp_path):
    system, _ = spawn(tmp_path, node_count=5, manager_node=0, backup_nodes=(1, 4))
    system.reboot_node(0)
    quiet = system.config.node_count * system.config.recovery_ticks
    for _ in range(quiet):
        system.step()
    managers = [c for c in system.components if c.role is ComponentRole.MANAGER]
    assert len(managers) == 1


def test_recovered_ex_manager_stays_agent(tmp_path):
    system, _ = spawn(tmp_path)
    system.reboot_node(0)
    for _ in range(10):
        system.step()
    assert system.component(0).status is ComponentStatus.OK
    assert system.component(0).role is ComponentRole.AGENT
    assert system.component(1).role is ComponentRole.MANAGER
