"""Block validity rules and the support/vote/certificate patterns."""
import pytest

from dagbft.core.block import Block, TxVote
from dagbft.core.dag import (
    DagState,
    RejectReason,
    check_structure,
    is_certificate,
    is_vote,
    linked,
    supported_block,
    verify_block,
)
from dagbft.errors import DagIntegrityError

from conftest import fill_rounds, make_block, own_first, owned_tx


def test_genesis_view(dag, committee):
    assert len(dag) == committee.size
    assert dag.highest_accepted_round == 0
    assert dag.has_quorum_at(0)
    assert len(dag.tips()) == committee.size


def test_add_requires_parents(dag, committee):
    orphan_parent = make_block(dag, 0, 1, add=False)
    child = make_block(
        dag, 0, 2, parents=[orphan_parent.reference] + dag.refs_at(0)[1:3], epoch=0, add=False
    )
    with pytest.raises(DagIntegrityError):
        dag.add(child)
    assert dag.add(orphan_parent)
    assert not dag.add(orphan_parent)


def test_tips_and_ancestors(dag):
    fill_rounds(dag, 1, 2)
    assert {ref.round for ref in dag.tips()} == {2}
    tip = dag.refs_at(2)[0]
    assert len(dag.ancestors([tip])) == 1 + 4 + 4
    assert all(ref.round >= 1 for ref in dag.ancestors([tip], min_round=1))


def test_structure_rules(dag, committee):
    genesis = dag.refs_at(0)
    good = make_block(dag, 1, 1, add=False)
    assert check_structure(good, committee) is None

    cases = {
        RejectReason.MISSING_OWN_PARENT_FIRST: [genesis[0], genesis[1], genesis[2]],
        RejectReason.DUPLICATE_PARENTS: [genesis[1], genesis[0], genesis[0], genesis[2]],
        RejectReason.INSUFFICIENT_PREVIOUS_ROUND_PARENTS: [genesis[1], genesis[0]],
    }
    for reason, parents in cases.items():
        block = make_block(dag, 1, 1, parents=parents, add=False)
        assert check_structure(block, committee) is reason

    stranger = Block(author=9, round=1, parents=tuple(genesis), timestamp=1)
    assert check_structure(stranger, committee) is RejectReason.UNKNOWN_AUTHOR


def test_parent_round_must_be_lower(dag, committee):
    fill_rounds(dag, 1, 1)
    same_round = make_block(dag, 0, 1, parents=own_first(0, dag.refs_at(1)), add=False)
    assert check_structure(same_round, committee) is RejectReason.PARENT_ROUND_NOT_LOWER


def test_timestamp_rules(dag, committee):
    fill_rounds(dag, 1, 1)
    below = make_block(dag, 0, 2, timestamp=0, add=False)
    verdict = verify_block(below, committee, now=10, dag=dag)
    assert verdict.rejected and verdict.reason is RejectReason.TIMESTAMP_BELOW_PARENT

    near = make_block(dag, 0, 2, timestamp=400, add=False)
    assert verify_block(near, committee, now=10, dag=dag).accepted

    ahead = make_block(dag, 0, 2, timestamp=3000, add=False)
    verdict = verify_block(ahead, committee, now=10, dag=dag, drift_tolerance=500)
    assert verdict.suspended and verdict.until == 2500

    far = make_block(dag, 0, 2, timestamp=60_000, add=False)
    verdict = verify_block(far, committee, now=10, dag=dag)
    assert verdict.rejected and verdict.reason is RejectReason.TIMESTAMP_TOO_FAR_FUTURE


def test_epoch_may_only_step_by_one(dag, committee):
    fill_rounds(dag, 1, 1)
    assert verify_block(make_block(dag, 0, 2, epoch=1, add=False), committee, 10, dag).accepted
    verdict = verify_block(make_block(dag, 0, 2, epoch=2, add=False), committee, 10, dag)
    assert verdict.reason is RejectReason.WRONG_EPOCH


def test_votes_must_target_causal_history(dag, committee):
    carrier = make_block(dag, 0, 1, transactions=[owned_tx(1)])
    for author in (1, 2, 3):
        make_block(dag, author, 1)
    ok = make_block(dag, 1, 2, votes=[TxVote(carrier.reference, 0, False)], add=False)
    assert verify_block(ok, committee, 10, dag).accepted

    bad_index = make_block(dag, 1, 2, votes=[TxVote(carrier.reference, 3, False)], add=False)
    assert verify_block(bad_index, committee, 10, dag).reason is RejectReason.INVALID_VOTE

    parents = own_first(1, [ref for ref in dag.refs_at(1) if ref != carrier.reference])
    unseen = make_block(dag, 1, 2, parents=parents, votes=[TxVote(carrier.reference, 0, False)], add=False)
    assert verify_block(unseen, committee, 10, dag).reason is RejectReason.INVALID_VOTE


def test_support_follows_first_listed_parent_on_equivocation(committee):
    dag = DagState.with_genesis(committee)
    fill_rounds(dag, 1, 1, authors=[1, 2, 3])
    first = make_block(dag, 0, 1, timestamp=1)
    second = make_block(dag, 0, 1, timestamp=2)
    assert dag.equivocations() == [(0, 1)]

    below = dag.refs_at(1)
    others = [ref for ref in below if ref.author != 0]
    voter_a = make_block(dag, 1, 2, parents=own_first(1, others) + [first.reference])
    voter_b = make_block(dag, 2, 2, parents=own_first(2, others) + [second.reference])
    assert supported_block(voter_a, 0, 1, dag) == first.reference
    assert is_vote(voter_a, first, dag) and not is_vote(voter_a, second, dag)
    assert is_vote(voter_b, second, dag)


def test_support_through_intermediate_blocks(dag):
    fill_rounds(dag, 1, 3)
    top = dag.blocks_at(3)[0]
    leader = dag.blocks_at(1)[2]
    assert supported_block(top, leader.author, 1, dag) == leader.reference
    assert supported_block(top, 0, 3, dag) is None


def test_certificate_needs_quorum_of_votes(dag, committee):
    fill_rounds(dag, 1, 2)
    leader = dag.blocks_at(1)[0]
    cert = make_block(dag, 0, 3)
    assert is_certificate(cert, leader, dag, committee)

    thin = make_block(dag, 1, 3, parents=own_first(1, dag.refs_at(2))[:3], timestamp=4)
    assert is_certificate(thin, leader, dag, committee)


def test_no_certificate_without_votes(committee):
    dag = DagState.with_genesis(committee)
    fill_rounds(dag, 1, 1)
    leader = dag.blocks_at(1)[0]
    # round 2 skips the leader entirely except for its own author
    below = [ref for ref in dag.refs_at(1) if ref.author != 0]
    for author in (1, 2, 3):
        make_block(dag, author, 2, parents=own_first(author, below))
    make_block(dag, 0, 2, parents=own_first(0, dag.refs_at(1)))
    cert = make_block(dag, 1, 3)
    assert not is_certificate(cert, leader, dag, committee)


def test_linked(dag):
    fill_rounds(dag, 1, 3)
    low = dag.refs_at(1)[0]
    high = dag.refs_at(3)[2]
    assert linked(low, high, dag)
    assert linked(high, high, dag)
    assert not linked(high, low, dag)


def test_copy_is_independent(dag):
    fill_rounds(dag, 1, 1)
    clone = dag.copy()
    make_block(clone, 0, 2)
    assert len(clone) == len(dag) + 1
