"""Direct and indirect decisions, truncation and linearization."""
import pytest

from dagbft.core.committer import (
    Committer,
    DeciderConfig,
    LeaderSchedule,
    commit_timestamp,
    linearize,
    try_decide,
)
from dagbft.core.dag import DagState
from dagbft.errors import ConfigError

from conftest import fill_rounds, make_block, own_first


def test_lockstep_commits_every_slot_with_a_decision_round(dag, committee):
    fill_rounds(dag, 1, 5)
    committer = Committer(committee, DeciderConfig(num_of_proposers=2))
    decided = committer.try_decide(dag, 0)
    assert [(s.slot.round, s.slot.offset) for s in decided] == [
        (1, 0), (1, 1), (2, 0), (2, 1), (3, 0), (3, 1)
    ]
    assert all(s.is_commit and s.direct for s in decided)
    assert [s.slot.authority for s in decided] == [1, 2, 2, 3, 3, 0]
    assert committer.evaluate(dag, 0)[-1].is_undecided


def test_longer_waves_decide_later(dag, committee):
    fill_rounds(dag, 1, 5)
    decided = Committer(committee, DeciderConfig(wave_length=4, num_of_proposers=1)).try_decide(dag, 0)
    assert [s.slot.round for s in decided] == [1, 2]


def test_absent_leader_is_skipped_directly(dag, committee):
    fill_rounds(dag, 1, 1, authors=[0, 2, 3])
    fill_rounds(dag, 2, 3)
    decided = Committer(committee, DeciderConfig(num_of_proposers=2)).try_decide(dag, 0)
    assert len(decided) == 2
    assert decided[0].is_skip and decided[0].direct and decided[0].slot.authority == 1
    assert decided[1].is_commit and decided[1].slot.authority == 2


def weakly_certified_view(committee):
    """
    Leader (1, round 1) gets one certificate at round 3: round 3 blocks by
    authors 1-3 skip the only round-2 block that misses the leader.
    """
    dag = DagState.with_genesis(committee)
    fill_rounds(dag, 1, 1)
    r1 = {ref.author: ref for ref in dag.refs_at(1)}
    for author in (0, 1, 2):
        make_block(dag, author, 2, parents=own_first(author, r1.values()))
    make_block(dag, 3, 2, parents=own_first(3, [r1[0], r1[2], r1[3]]))
    r2 = {ref.author: ref for ref in dag.refs_at(2)}
    make_block(dag, 0, 3, parents=own_first(0, [r2[0], r2[1], r2[2]]))
    for author in (1, 2, 3):
        make_block(dag, author, 3, parents=own_first(author, [r2[1], r2[2], r2[3]]))
    return dag, r1[1]


def test_indirect_commit_through_anchor(committee):
    dag, leader = weakly_certified_view(committee)
    committer = Committer(committee, DeciderConfig(num_of_proposers=2))
    slot = committer.slot(1, 0)
    assert committer.direct_decide(slot, dag).is_undecided
    # no anchor yet
    assert committer.try_decide(dag, 0) == []

    fill_rounds(dag, 4, 6)
    status = committer.evaluate(dag, 0)[0]
    assert status.is_commit and not status.direct
    assert status.block == leader


def test_indirect_skip_without_certificate(committee):
    dag = DagState.with_genesis(committee)
    fill_rounds(dag, 1, 1)
    r1 = {ref.author: ref for ref in dag.refs_at(1)}
    for author in (0, 1):
        make_block(dag, author, 2, parents=own_first(author, r1.values()))
    for author in (2, 3):
        make_block(dag, author, 2, parents=own_first(author, [r1[0], r1[2], r1[3]]))
    fill_rounds(dag, 3, 6)
    committer = Committer(committee, DeciderConfig(num_of_proposers=2))
    status = committer.evaluate(dag, 0)[0]
    assert status.is_skip and not status.direct


def test_decide_above_last_committed_round(dag, committee):
    fill_rounds(dag, 1, 5)
    config = DeciderConfig(num_of_proposers=2)
    decided = try_decide(2, 5, dag, committee, config, LeaderSchedule(4))
    assert [s.slot.round for s in decided] == [3, 3]
    assert try_decide(0, 2, dag, committee, config, LeaderSchedule(4)) == []


def test_fixed_schedule():
    schedule = LeaderSchedule(4, "fixed")
    assert [schedule.authority(r, 1) for r in range(1, 4)] == [1, 1, 1]
    assert LeaderSchedule(4).authority(3, 2) == 1


def test_wave_arithmetic():
    config = DeciderConfig(wave_length=3, round_offset=0)
    assert config.proposer_round(2) == 6
    assert config.decision_round(2) == 8
    assert config.wave_number(8) == 2
    assert DeciderConfig(round_offset=1).wave_number(1) == 0
    assert DeciderConfig(wave_length=3, round_offset=2).proposer_round(1) == 5


@pytest.mark.parametrize("wave_length", [3, 4, 5])
@pytest.mark.parametrize("round_offset", [0, 1, 2])
def test_decision_round_of_any_proposal_round(wave_length, round_offset):
    config = DeciderConfig(wave_length=wave_length, round_offset=round_offset)
    for round_ in range(1, 12):
        assert config.decision_round_of(round_) == round_ + wave_length - 1
    aligned = DeciderConfig(wave_length=wave_length, round_offset=round_offset % wave_length)
    wave = aligned.wave_number(round_offset + wave_length)
    assert aligned.decision_round_of(aligned.proposer_round(wave)) == aligned.decision_round(wave)


def test_config_validation(committee):
    with pytest.raises(ConfigError):
        DeciderConfig(wave_length=2)
    with pytest.raises(ConfigError):
        DeciderConfig(num_of_proposers=0)
    with pytest.raises(ConfigError):
        LeaderSchedule(4, "random")
    with pytest.raises(ConfigError):
        Committer(committee, DeciderConfig(num_of_proposers=5))


def test_linearize_orders_history_and_skips_delivered(dag):
    fill_rounds(dag, 1, 3)
    delivered = set(dag.refs_at(0))
    leader = dag.refs_at(3)[3]
    ordered = linearize(leader, delivered, dag)
    assert len(ordered) == 9
    assert ordered[-1] == leader
    assert [ref.round for ref in ordered] == sorted(ref.round for ref in ordered)

    delivered.update(ordered)
    other = dag.refs_at(3)[0]
    assert linearize(other, delivered, dag) == [other]
    assert linearize(leader, delivered, dag) == []


def test_commit_timestamp_never_decreases(dag):
    low = make_block(dag, 0, 1, timestamp=3, add=False)
    high = make_block(dag, 1, 1, timestamp=5, add=False)
    assert commit_timestamp([low, high], 4) == 5
    assert commit_timestamp([low, high], 9) == 9
