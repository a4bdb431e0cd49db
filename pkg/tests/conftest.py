"""Shared fixtures and block-building helpers."""
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import pytest

from dagbft.core.block import Block, BlockRef, Transaction, TxVote
from dagbft.core.committee import Committee
from dagbft.core.dag import DagState

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def committee() -> Committee:
    return Committee(4)


@pytest.fixture
def dag(committee: Committee) -> DagState:
    return DagState.with_genesis(committee)


def own_first(author: int, refs: Iterable[BlockRef]) -> List[BlockRef]:
    """Parents with the author's own block moved to the front."""
    refs = list(refs)
    own = [ref for ref in refs if ref.author == author]
    return own[:1] + [ref for ref in refs if ref not in own[:1]]


def make_block(
    dag: DagState,
    author: int,
    round_: int,
    parents: Optional[Sequence[BlockRef]] = None,
    transactions: Sequence[Transaction] = (),
    votes: Sequence[TxVote] = (),
    ecbit: bool = False,
    timestamp: Optional[int] = None,
    epoch: Optional[int] = None,
    add: bool = True,
) -> Block:
    """
    A block on top of dag, by default referencing every block of the round
    below (own block first) and stamped with its round number.
    """
    if parents is None:
        parents = own_first(author, dag.refs_at(round_ - 1))
    if epoch is None:
        epoch = max((dag.get(p).epoch for p in parents), default=0)
    block = Block(
        author=author,
        round=round_,
        epoch=epoch,
        parents=tuple(parents),
        transactions=tuple(transactions),
        votes=tuple(votes),
        epoch_change_bit=ecbit,
        timestamp=round_ if timestamp is None else timestamp,
    )
    if add:
        dag.add(block)
    return block


def fill_rounds(dag: DagState, first: int, last: int, authors: Optional[Sequence[int]] = None) -> None:
    """Every listed author proposes each round, referencing the full round below."""
    authors = list(dag.committee.authorities) if authors is None else list(authors)
    for round_ in range(first, last + 1):
        below = dag.refs_at(round_ - 1)
        for author in authors:
            make_block(dag, author, round_, parents=own_first(author, below))


def owned_tx(obj: int, version: int = 0, tag: bytes = b"") -> Transaction:
    return Transaction(((obj, version),), False, b"owned:" + tag)
