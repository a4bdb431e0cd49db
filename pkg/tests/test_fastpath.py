"""Fast-path voting, finality and epoch close."""
from dagbft.core.block import Transaction, TxVote
from dagbft.core.committer import CommitRecord
from dagbft.core.fastpath import (
    Admission,
    EpochPhase,
    FastPathState,
    TxStatus,
    certificate_blocks,
    epoch_close_step,
    executable,
    finalize_mixed,
    finalized,
    vote_decision,
)

from conftest import fill_rounds, make_block, owned_tx


def voted_view(dag, tx, voters=(1, 2, 3)):
    """tx included by authority 0 at round 1, explicitly voted at round 2."""
    carrier = make_block(dag, 0, 1, transactions=[tx])
    for author in (1, 2, 3):
        make_block(dag, author, 1)
    vote = TxVote(carrier.reference, 0, True)
    for author in range(4):
        make_block(dag, author, 2, votes=[vote] if author in voters else [])
    return carrier


def replay(state, dag):
    for block in dag:
        if block.round > 0:
            state.process_block(block, dag)
    return [(change.status, change.block_round) for change in state.drain_changes()]


def commit(index, blocks):
    refs = tuple(block.reference for block in blocks)
    return CommitRecord(index, refs[-1], refs, 0)


def test_vote_decision_locks_owned_inputs():
    locks = {}
    first = owned_tx(5, tag=b"a")
    rival = owned_tx(5, tag=b"b")
    assert vote_decision(first, locks).accept
    assert vote_decision(first, locks).accept
    decision = vote_decision(rival, locks)
    assert not decision.accept and decision.conflicting == first.id


def test_quorum_of_votes_executes_and_certificates_finalize(dag, committee):
    tx = owned_tx(1)
    voted_view(dag, tx)
    assert executable(tx, dag, committee)
    assert not finalized(tx, dag, [], committee)

    fill_rounds(dag, 3, 3)
    assert len(certificate_blocks(tx, dag, committee)) == 4
    assert finalized(tx, dag, [], committee)


def test_single_committed_certificate_finalizes(dag, committee):
    tx = owned_tx(1)
    voted_view(dag, tx)
    cert = make_block(dag, 0, 3)
    assert certificate_blocks(tx, dag, committee) == {cert.reference}
    assert not finalized(tx, dag, [], committee)
    assert finalized(tx, dag, [commit(0, [cert])], committee)


def test_incremental_state_reports_execution_then_finality(dag, committee):
    tx = owned_tx(1)
    voted_view(dag, tx)
    fill_rounds(dag, 3, 3)
    state = FastPathState(3, committee)
    assert replay(state, dag) == [(TxStatus.EXECUTED, 2), (TxStatus.FINALIZED, 3)]
    assert state.versions[1] == 1


def test_bit_set_blocks_do_not_vote(dag, committee):
    tx = owned_tx(1)
    carrier = make_block(dag, 0, 1, transactions=[tx])
    for author in (1, 2, 3):
        make_block(dag, author, 1)
    vote = TxVote(carrier.reference, 0, True)
    make_block(dag, 1, 2, votes=[vote], ecbit=True)
    make_block(dag, 2, 2, votes=[vote], ecbit=True)
    assert not executable(tx, dag, committee)


def test_epoch_close_reverts_executed_and_expires_pending(dag, committee):
    executed_tx = owned_tx(1)
    voted_view(dag, executed_tx, voters=(1, 2))
    state = FastPathState(3, committee, commits_per_epoch=1)
    replay(state, dag)
    assert state.tallies[(0, executed_tx.id)].status == TxStatus.EXECUTED

    lonely = owned_tx(9)
    carrier = make_block(dag, 0, 3, transactions=[lonely], ecbit=True)
    bits = [carrier] + [make_block(dag, author, 3, ecbit=True) for author in (1, 2, 3)]
    for block in bits:
        state.process_block(block, dag)
    state.drain_changes()

    assert epoch_close_step(state, commit(0, bits[:2]), dag) == EpochPhase.ARMED
    assert not state.contributing
    assert epoch_close_step(state, commit(1, bits[2:]), dag) == EpochPhase.CLOSED

    report = state.closed_epochs[0]
    assert report.reverted == (executed_tx.id,)
    assert state.epoch == 1 and not state.armed
    assert state.versions[1] == 0
    assert state.locks == {}


def test_expired_when_never_voted(dag, committee):
    lonely = owned_tx(9)
    make_block(dag, 0, 1, transactions=[lonely])
    for author in (1, 2, 3):
        make_block(dag, author, 1)
    bits = [make_block(dag, author, 2, ecbit=True) for author in range(4)]
    state = FastPathState(1, committee)
    replay(state, dag)
    assert epoch_close_step(state, commit(0, bits), dag) == EpochPhase.CLOSED
    assert state.closed_epochs[0].expired == (lonely.id,)


def test_shared_only_finalizes_on_commit(dag, committee):
    shared = Transaction((), True, b"counter++")
    block = make_block(dag, 0, 1, transactions=[shared])
    state = FastPathState(2, committee)
    replay(state, dag)
    assert state.drain_changes() == []
    state.on_commit(commit(4, [block]), dag)
    changes = state.drain_changes()
    assert [change.status for change in changes] == [TxStatus.EXECUTED, TxStatus.FINALIZED]
    assert changes[-1].commit_index == 4


def test_mixed_waits_for_committed_votes(dag, committee):
    mixed = Transaction(((2, 0),), True, b"swap")
    voted_view(dag, mixed, voters=(1, 2))
    fill_rounds(dag, 3, 3)
    state = FastPathState(3, committee)
    replay(state, dag)
    assert state.tallies[(0, mixed.id)].status == TxStatus.PENDING

    history = [block for block in dag if 0 < block.round <= 2]
    assert finalize_mixed(mixed, dag, [commit(0, history)], committee)
    state.on_commit(commit(0, history), dag)
    assert state.tallies[(0, mixed.id)].status == TxStatus.FINALIZED


def test_admission(committee):
    state = FastPathState(0, committee)
    tx = owned_tx(3, tag=b"a")
    assert state.admit(tx) is Admission.INCLUDE
    assert state.admit(tx) is Admission.DUPLICATE
    assert state.admit(owned_tx(3, tag=b"b")) is Admission.CONFLICT
    assert state.admission_conflicts == 1
    assert state.admit(Transaction((), True, b"s")) is Admission.INCLUDE


def test_take_votes_only_inside_reachable_history(dag, committee):
    tx = owned_tx(4)
    carrier = make_block(dag, 1, 1, transactions=[tx])
    state = FastPathState(0, committee)
    state.process_block(carrier, dag)
    assert state.take_votes(dag, set()) == []
    [vote] = state.take_votes(dag, {carrier.reference})
    assert vote.accept and vote.block == carrier.reference
    assert state.take_votes(dag, {carrier.reference}) == []


def test_double_signed_tx_reverts_at_close_and_finalizes_next_epoch(dag, committee):
    first = owned_tx(7, tag=b"first")
    second = owned_tx(7, tag=b"second")
    for author in (0, 1, 2):
        make_block(dag, author, 1, transactions=[first])
    make_block(dag, 3, 1, transactions=[second])
    state = FastPathState(3, committee)
    replay(state, dag)
    assert state.tallies[(0, first.id)].status == TxStatus.EXECUTED
    assert state.tallies[(0, second.id)].status == TxStatus.PENDING
    assert state.versions[7] == 1

    bits = [make_block(dag, author, 2, ecbit=True) for author in range(4)]
    for block in bits:
        state.process_block(block, dag)
    assert state.tallies[(0, first.id)].certificate_blocks == set()
    record = commit(0, [block for block in dag if block.round > 0])
    state.on_commit(record, dag)
    assert epoch_close_step(state, record, dag) == EpochPhase.CLOSED

    report = state.closed_epochs[0]
    assert report.reverted == (first.id,)
    assert report.expired == (second.id,)
    assert state.tallies[(0, first.id)].status == TxStatus.REVERTED
    assert state.versions[7] == 0
    assert state.locks == {}
    state.drain_changes()

    # resubmitted alone in epoch 1
    for author in range(4):
        make_block(dag, author, 3, transactions=[first], epoch=1)
    fill_rounds(dag, 4, 4)
    for block in dag:
        if block.round >= 3:
            state.process_block(block, dag)
    tally = state.tallies[(1, first.id)]
    assert tally.status == TxStatus.FINALIZED
    assert tally.certifiers == {0, 1, 2, 3}
    assert [(c.epoch, c.status, c.block_round) for c in state.drain_changes()] == [
        (1, TxStatus.EXECUTED, 3),
        (1, TxStatus.FINALIZED, 4),
    ]
    assert state.locks == {(7, 0): first.id}
