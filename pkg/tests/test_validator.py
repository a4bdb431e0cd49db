"""Validator state machine: intake, round gate, commits and recovery."""
from typing import List

from dagbft.config import ValidatorSettings
from dagbft.core.committee import Committee
from dagbft.core.committer import DeciderConfig
from dagbft.core.dag import DagState, RejectReason
from dagbft.core.validator import Validator
from dagbft.core.wal import RecordKind, WriteAheadLog
from dagbft.signers import KeyedHashSigner

from conftest import fill_rounds, make_block, owned_tx


def lockstep(validators: List[Validator], rounds: int, start: int = 0) -> int:
    """Every validator proposes, everyone receives everything, then commits."""
    now = start
    for _ in range(rounds):
        proposals = [v.maybe_advance_round(now) for v in validators]
        for validator in validators:
            for block in proposals:
                if block is not None and block.author != validator.authority:
                    validator.on_block(block, now + 1, origin=block.author)
        now += 10
        for validator in validators:
            validator.try_commit(now)
    return now


def test_missing_parents_suspend_and_request_from_sender(committee):
    scratch = DagState.with_genesis(committee)
    fill_rounds(scratch, 1, 1)
    child = make_block(scratch, 1, 2)
    validator = Validator(0, committee)

    assert validator.on_block(child, 5, origin=1) == []
    assert child.reference in validator.suspended
    requests = validator.take_sync_requests()
    assert set(requests[1]) == set(child.parents)
    assert validator.take_sync_requests() == {}

    accepted = []
    for block in scratch.blocks_at(1):
        accepted.extend(validator.on_block(block, 6, origin=block.author))
    assert accepted[-1] == child.reference
    assert not validator.suspended
    assert child.reference in validator.dag


def test_rejection_cascades_to_buffered_children(committee):
    scratch = DagState.with_genesis(committee)
    genesis = {ref.author: ref for ref in scratch.refs_at(0)}
    fill_rounds(scratch, 1, 1, authors=[0, 1, 3])
    bad = make_block(scratch, 2, 1, parents=[genesis[2], genesis[0]], add=False)
    r1 = {ref.author: ref for ref in scratch.refs_at(1)}
    child = make_block(
        scratch, 2, 2, parents=[bad.reference, r1[0], r1[1]], epoch=0, timestamp=2, add=False
    )

    validator = Validator(3, committee)
    validator.on_block(child, 1, origin=2)
    assert child.reference in validator.suspended
    validator.on_block(bad, 2, origin=2)

    assert validator.rejected[bad.reference] is RejectReason.INSUFFICIENT_PREVIOUS_ROUND_PARENTS
    assert validator.rejected[child.reference] is RejectReason.PARENT_REJECTED
    assert not validator.suspended
    assert validator.rejections["ParentRejected"] == 1


def test_bad_signature_is_rejected(committee):
    signer = KeyedHashSigner(b"committee")
    scratch = DagState.with_genesis(committee)
    block = make_block(scratch, 1, 1, add=False).with_signature(b"forged")
    validator = Validator(0, committee, signer=signer)
    validator.on_block(block, 0, origin=1)
    assert validator.rejected[block.reference] is RejectReason.BAD_SIGNATURE


def test_future_timestamp_waits_for_wakeup(committee):
    scratch = DagState.with_genesis(committee)
    early = make_block(scratch, 1, 1, timestamp=2000, add=False)
    validator = Validator(0, committee)
    assert validator.on_block(early, 0, origin=1) == []
    assert validator.take_wakeups() == [1500]
    assert validator.wake(1000) == []
    assert validator.wake(1500) == [early.reference]
    assert early.reference in validator.dag


def test_gate_waits_for_leader_until_timeout(committee):
    validator = Validator(0, committee, settings=ValidatorSettings.simulator(leader_timeout_ms=1000))
    own = validator.maybe_advance_round(0)
    assert own.round == 1

    scratch = DagState.with_genesis(committee)
    for author in (2, 3):
        validator.on_block(make_block(scratch, author, 1, add=False), 10, origin=author)
    # round 1 leader is authority 1 and has not shown up
    assert validator.maybe_advance_round(10) is None
    assert validator.timeout_deadline == 1010
    assert validator.maybe_advance_round(1009) is None

    block = validator.maybe_advance_round(1010)
    assert block.round == 2
    assert block.parents[0] == own.reference
    assert validator.timeout_deadline is None


def test_gate_opens_as_soon_as_the_leader_arrives(committee):
    validator = Validator(0, committee)
    validator.maybe_advance_round(0)
    scratch = DagState.with_genesis(committee)
    for author in (1, 2):
        validator.on_block(make_block(scratch, author, 1, add=False), 10, origin=author)
    assert validator.maybe_advance_round(10).round == 2


def test_max_rounds_stops_proposals(committee):
    validators = [Validator(a, committee, max_rounds=3) for a in committee.authorities]
    lockstep(validators, 6)
    assert all(v.current_round == 3 for v in validators)


def test_lockstep_commits_two_rounds_behind(committee):
    validators = [Validator(a, committee) for a in committee.authorities]
    lockstep(validators, 6)
    first = validators[0]
    assert first.current_round == 6
    assert len(first.commits) == 8
    assert all(decision.depth == 2 for decision in first.decisions.values())
    assert first.undecided_slots(5) == []
    assert all(v.commits == first.commits for v in validators)
    assert first.try_commit(1000) == []


def test_commit_timestamps_are_monotone(committee):
    validators = [Validator(a, committee) for a in committee.authorities]
    lockstep(validators, 8)
    stamps = [record.commit_timestamp for record in validators[2].commits]
    assert stamps == sorted(stamps)


def test_queue_bounce(committee):
    validator = Validator(0, committee, settings=ValidatorSettings.simulator(queue_capacity=1))
    assert validator.submit(owned_tx(1), 0)
    assert not validator.submit(owned_tx(2), 0)


def test_own_transaction_executes_after_peer_votes(committee):
    validators = [Validator(a, committee) for a in committee.authorities]
    tx = owned_tx(1)
    validators[0].submit(tx, 0)
    lockstep(validators, 4)
    assert not validators[0].pending_transactions
    statuses = [change.status.value for _, change in validators[3].tx_changes if change.tx_id == tx.id]
    assert statuses == ["executed", "finalized"]


def test_recover_rebuilds_the_same_state():
    committee = Committee(4)
    wals = [WriteAheadLog.in_memory() for _ in range(4)]
    validators = [Validator(a, committee, wal=wals[a]) for a in committee.authorities]
    validators[0].submit(owned_tx(1), 0)
    lockstep(validators, 7)

    original = validators[0]
    recovered = Validator.recover(wals[0], 0, committee)
    assert set(recovered.dag.blocks) == set(original.dag.blocks)
    assert recovered.commits == original.commits
    assert recovered.current_round == original.current_round
    assert recovered.last_own == original.last_own
    assert recovered.threshold_seen == original.threshold_seen
    assert recovered.epoch == original.epoch
    assert list(recovered.pending_transactions) == list(original.pending_transactions)

    # carries on where it stopped
    validators[0] = recovered
    lockstep(validators, 2, start=70)
    assert recovered.current_round == 9


def test_skip_only_commit_pass_is_logged_and_replayed(committee):
    scratch = DagState.with_genesis(committee)
    fill_rounds(scratch, 1, 2, authors=[0, 2, 3])
    wal = WriteAheadLog.in_memory()
    decider = DeciderConfig(num_of_proposers=1)
    validator = Validator(1, committee, decider=decider, wal=wal)
    for round_ in (1, 2):
        for block in scratch.blocks_at(round_):
            validator.on_block(block, 5, origin=block.author)

    assert validator.try_commit(20) == []
    decision = validator.decisions[(1, 0)]
    assert decision.status.is_skip and decision.status.direct
    assert decision.decided_at == 20
    assert list(wal.records())[-1].kind == RecordKind.COMMIT

    recovered = Validator.recover(wal, 1, committee, decider=decider)
    assert recovered.decisions == validator.decisions
    assert recovered.decisions[(1, 0)].depth == decision.depth
