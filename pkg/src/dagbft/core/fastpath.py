"""
Consensusless fast path for owned-object transactions.

Votes ride inside blocks. Including a transaction is its author's implicit
accept vote; other validators add explicit TxVotes in their next block.

    executed   2f+1 distinct authors voted to accept
    finalized  2f+1 distinct authors produced a certificate block (one whose
               direct parents carry 2f+1 accept votes), or a certificate
               block got committed

Transactions that also touch shared objects only finish through a commit.
Blocks with the epoch-change bit set count for nothing here. When an epoch
closes, anything executed but not finalized is reverted and the locks it
held are released.

The module-level functions answer questions about a DAG directly;
FastPathState is the incremental version a validator keeps.
"""
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Set, Tuple

from dagbft.core.block import Block, BlockRef, ObjectRef, Transaction, TxVote
from dagbft.core.committee import Committee
from dagbft.core.committer import CommitRecord
from dagbft.core.dag import DagState
from dagbft.logs import get_logger

logger = get_logger(__name__)

TallyKey = Tuple[int, bytes]  # (epoch, tx id)
LockTable = Dict[ObjectRef, bytes]

__all__ = [
    "Transaction",
    "TxVote",
    "TxStatus",
    "VoteDecision",
    "Admission",
    "EpochPhase",
    "FastPathTally",
    "StatusChange",
    "Checkpoint",
    "EpochCloseReport",
    "FastPathState",
    "vote_decision",
    "voting_blocks",
    "certificate_blocks",
    "executable",
    "finalized",
    "finalize_mixed",
    "epoch_close_step",
]


class TxStatus(str, Enum):
    PENDING = "pending"
    EXECUTED = "executed"
    FINALIZED = "finalized"
    REJECTED = "rejected"
    REVERTED = "reverted"


class EpochPhase(str, Enum):
    OPEN = "open"
    ARMED = "armed"
    CLOSED = "closed"


class Admission(str, Enum):
    """What happened when a validator tried to put a queued tx in its block."""

    INCLUDE = "include"
    DUPLICATE = "duplicate"
    CONFLICT = "conflict"


@dataclass(frozen=True)
class VoteDecision:
    accept: bool
    conflicting: Optional[bytes] = None


def vote_decision(tx: Transaction, lock_table: LockTable) -> VoteDecision:
    """
    Accept unless an owned input is locked by another transaction.

    On accept every owned input gets locked to tx.
    """
    for obj in tx.owned_inputs:
        holder = lock_table.get(obj)
        if holder is not None and holder != tx.id:
            return VoteDecision(False, holder)
    for obj in tx.owned_inputs:
        lock_table[obj] = tx.id
    return VoteDecision(True)


def voting_blocks(
    tx: Transaction, dag: DagState, epoch: Optional[int] = None
) -> Dict[BlockRef, int]:
    """
    Blocks carrying an accept vote for tx, mapped to the tx's epoch there.

    Bit-set blocks and votes across epochs are left out.
    """
    result: Dict[BlockRef, int] = {}
    for ref, _ in dag.tx_positions(tx.id):
        block = dag.get(ref)
        if block.epoch_change_bit or (epoch is not None and block.epoch != epoch):
            continue
        result[ref] = block.epoch
    for voter_ref, vote in dag.tx_votes(tx.id):
        if not vote.accept:
            continue
        voter = dag.get(voter_ref)
        target = dag.get(vote.block)
        if voter.epoch_change_bit or voter.epoch != target.epoch:
            continue
        if epoch is not None and target.epoch != epoch:
            continue
        result[voter_ref] = target.epoch
    return result


def certificate_blocks(
    tx: Transaction, dag: DagState, committee: Committee, epoch: Optional[int] = None
) -> Set[BlockRef]:
    """Bit-unset blocks whose direct parents hold 2f+1 distinct-author accept votes."""
    voters = voting_blocks(tx, dag, epoch)
    if not voters:
        return set()
    lowest = min(ref.round for ref in voters)
    certs = set()
    for round_ in range(lowest + 1, dag.highest_accepted_round + 1):
        for block in dag.blocks_at(round_):
            if block.epoch_change_bit:
                continue
            authors = {
                p.author for p in block.parents if voters.get(p, -1) == block.epoch
            }
            if len(authors) >= committee.quorum:
                certs.add(block.reference)
    return certs


def _committed(commits: Iterable[CommitRecord]) -> Set[BlockRef]:
    refs: Set[BlockRef] = set()
    for record in commits:
        refs.update(record.committed_blocks)
    return refs


def executable(
    tx: Transaction, dag: DagState, committee: Committee, epoch: Optional[int] = None
) -> bool:
    """Blocks from 2f+1 distinct authors vote to accept tx."""
    authors = {ref.author for ref in voting_blocks(tx, dag, epoch)}
    return len(authors) >= committee.quorum


def finalized(
    tx: Transaction,
    dag: DagState,
    commits: Iterable[CommitRecord],
    committee: Committee,
    epoch: Optional[int] = None,
) -> bool:
    """2f+1 distinct certificate authors, or a certificate inside committed history."""
    certs = certificate_blocks(tx, dag, committee, epoch)
    if len({ref.author for ref in certs}) >= committee.quorum:
        return True
    return not certs.isdisjoint(_committed(commits))


def finalize_mixed(
    tx: Transaction,
    dag: DagState,
    commits: Iterable[CommitRecord],
    committee: Committee,
    epoch: Optional[int] = None,
) -> bool:
    """2f+1 distinct-author voting blocks all inside committed history."""
    committed = _committed(commits)
    authors = {ref.author for ref in voting_blocks(tx, dag, epoch) if ref in committed}
    return len(authors) >= committee.quorum


@dataclass
class FastPathTally:
    """Votes and certificates one validator has seen for (epoch, tx)."""

    tx: Transaction
    epoch: int
    positions: List[Tuple[BlockRef, int]] = field(default_factory=list)
    voting_blocks: Set[BlockRef] = field(default_factory=set)
    voters: Set[int] = field(default_factory=set)
    rejectors: Set[int] = field(default_factory=set)
    certificate_blocks: Set[BlockRef] = field(default_factory=set)
    certifiers: Set[int] = field(default_factory=set)
    status: TxStatus = TxStatus.PENDING

    @property
    def key(self) -> TallyKey:
        return (self.epoch, self.tx.id)

    @property
    def inclusion_round(self) -> Optional[int]:
        if not self.positions:
            return None
        return min(ref.round for ref, _ in self.positions)


@dataclass(frozen=True)
class StatusChange:
    """A tally moved to a new status while processing a block or a commit."""

    tx_id: bytes
    epoch: int
    status: TxStatus
    block_round: Optional[int] = None
    commit_index: Optional[int] = None


@dataclass(frozen=True)
class Checkpoint:
    """Fast-path transactions whose certificate a commit ordered."""

    commit_index: int
    tx_ids: Tuple[bytes, ...]


@dataclass(frozen=True)
class EpochCloseReport:
    epoch: int
    commit_index: int
    finalized: Tuple[bytes, ...]
    reverted: Tuple[bytes, ...]
    expired: Tuple[bytes, ...]


class FastPathState:
    """
    One validator's incremental fast-path bookkeeping.

    Feed it every accepted block (process_block, own blocks included) and
    every commit (on_commit). Status changes pile up until drained.
    """

    def __init__(
        self, authority: int, committee: Committee, commits_per_epoch: Optional[int] = None
    ):
        self.authority = authority
        self.committee = committee
        self.commits_per_epoch = commits_per_epoch
        self.epoch = committee.epoch
        self.armed = False
        self.locks: LockTable = {}
        self.versions: Dict[int, int] = {}
        self.tallies: Dict[TallyKey, FastPathTally] = {}
        self.unvoted: List[Tuple[BlockRef, int]] = []
        self.voted: Set[TallyKey] = set()
        self.committed: Set[BlockRef] = set()
        self.checkpoints: List[Checkpoint] = []
        self.closed_epochs: List[EpochCloseReport] = []
        self.admission_conflicts = 0
        self._votes_by_block: Dict[BlockRef, Set[TallyKey]] = defaultdict(set)
        self._certs_by_block: Dict[BlockRef, Set[TallyKey]] = defaultdict(set)
        self._mixed_pending: Dict[TallyKey, None] = {}
        self._finalized_ids: Set[bytes] = set()
        self._bit_authors: Set[int] = set()
        self._epoch_start_commit = 0
        self._changes: List[StatusChange] = []

    # ---- bookkeeping helpers -------------------------------------------------

    def _tally(self, epoch: int, tx: Transaction) -> FastPathTally:
        key = (epoch, tx.id)
        tally = self.tallies.get(key)
        if tally is None:
            tally = FastPathTally(tx=tx, epoch=epoch)
            self.tallies[key] = tally
            if tx.is_mixed:
                self._mixed_pending[key] = None
        return tally

    def _count_vote(self, tally: FastPathTally, ref: BlockRef) -> None:
        tally.voting_blocks.add(ref)
        tally.voters.add(ref.author)
        self._votes_by_block[ref].add(tally.key)

    def _set_status(
        self,
        tally: FastPathTally,
        status: TxStatus,
        block_round: Optional[int] = None,
        commit_index: Optional[int] = None,
    ) -> None:
        tally.status = status
        self._changes.append(
            StatusChange(tally.tx.id, tally.epoch, status, block_round, commit_index)
        )

    def _execute(self, tally: FastPathTally, **when: Optional[int]) -> None:
        for obj, version in tally.tx.owned_inputs:
            self.versions[obj] = max(self.versions.get(obj, 0), version + 1)
        self._set_status(tally, TxStatus.EXECUTED, **when)

    def _finalize(self, tally: FastPathTally, **when: Optional[int]) -> None:
        if tally.status == TxStatus.PENDING:
            self._execute(tally, **when)
        self._finalized_ids.add(tally.tx.id)
        self._mixed_pending.pop(tally.key, None)
        self._set_status(tally, TxStatus.FINALIZED, **when)

    def _advance(self, tally: FastPathTally, block_round: int) -> None:
        if not tally.tx.is_owned_only:
            return
        quorum = self.committee.quorum
        if tally.status == TxStatus.PENDING and len(tally.voters) >= quorum:
            self._execute(tally, block_round=block_round)
        if tally.status == TxStatus.EXECUTED and len(tally.certifiers) >= quorum:
            self._finalize(tally, block_round=block_round)

    # ---- block and commit intake ----------------------------------------------

    def process_block(self, block: Block, dag: DagState) -> None:
        """Record the inclusions, votes and certificates an accepted block carries."""
        if block.epoch < self.epoch:
            return
        ref = block.reference
        own = block.author == self.authority
        counts = not block.epoch_change_bit
        touched: Dict[TallyKey, FastPathTally] = {}

        for index, tx in enumerate(block.transactions):
            if tx.is_shared_only:
                continue
            tally = self._tally(block.epoch, tx)
            tally.positions.append((ref, index))
            if own:
                self.voted.add(tally.key)
                vote_decision(tx, self.locks)
            elif tally.key not in self.voted:
                self.unvoted.append((ref, index))
            if counts:
                self._count_vote(tally, ref)
                touched[tally.key] = tally

        for vote in block.votes:
            target = dag.get(vote.block)
            tx = target.transaction_at(vote.index)
            if tx is None or tx.is_shared_only or target.epoch < self.epoch:
                continue
            tally = self._tally(target.epoch, tx)
            if own:
                self.voted.add(tally.key)
                if vote.accept:
                    vote_decision(tx, self.locks)
            if not counts or block.epoch != target.epoch:
                continue
            if vote.accept:
                self._count_vote(tally, ref)
                touched[tally.key] = tally
            else:
                tally.rejectors.add(block.author)

        if counts:
            supporters: Dict[TallyKey, Set[int]] = defaultdict(set)
            for parent in block.parents:
                for key in self._votes_by_block.get(parent, ()):
                    supporters[key].add(parent.author)
            for key, authors in supporters.items():
                tally = self.tallies[key]
                if key[0] != block.epoch or len(authors) < self.committee.quorum:
                    continue
                tally.certificate_blocks.add(ref)
                tally.certifiers.add(block.author)
                self._certs_by_block[ref].add(key)
                touched[key] = tally

        for tally in touched.values():
            self._advance(tally, block.round)

    def on_commit(self, record: CommitRecord, dag: DagState) -> Checkpoint:
        """Apply consensus-side finality for one commit."""
        self.committed.update(record.committed_blocks)
        certified: Dict[bytes, None] = {}

        for ref in record.committed_blocks:
            block = dag.get(ref)
            for index, tx in enumerate(block.transactions):
                if not tx.is_shared_only:
                    continue
                tally = self._tally(block.epoch, tx)
                tally.positions.append((ref, index))
                if tally.status == TxStatus.PENDING:
                    self._finalize(tally, commit_index=record.index)
            for key in sorted(self._certs_by_block.get(ref, ())):
                tally = self.tallies[key]
                certified[tally.tx.id] = None
                if tally.status in (TxStatus.PENDING, TxStatus.EXECUTED):
                    self._finalize(tally, commit_index=record.index)

        for key in list(self._mixed_pending):
            tally = self.tallies[key]
            authors = {ref.author for ref in tally.voting_blocks if ref in self.committed}
            if len(authors) >= self.committee.quorum and tally.status == TxStatus.PENDING:
                self._finalize(tally, commit_index=record.index)

        checkpoint = Checkpoint(record.index, tuple(certified))
        self.checkpoints.append(checkpoint)
        return checkpoint

    # ---- proposal side ---------------------------------------------------------

    @property
    def contributing(self) -> bool:
        """Own blocks may carry inclusions and votes."""
        return not self.armed

    def admit(self, tx: Transaction) -> Admission:
        """Decide whether a queued client tx goes into the next own block."""
        if tx.is_shared_only:
            return Admission.INCLUDE
        key = (self.epoch, tx.id)
        if key in self.voted:
            return Admission.DUPLICATE
        if not vote_decision(tx, self.locks).accept:
            self.admission_conflicts += 1
            return Admission.CONFLICT
        self.voted.add(key)
        return Admission.INCLUDE

    def take_votes(self, dag: DagState, reachable: Set[BlockRef]) -> List[TxVote]:
        """
        Explicit votes for the next own block.

        Only transactions inside `reachable` (the new block's history) are
        voted on now; the rest wait for a later block.
        """
        votes: List[TxVote] = []
        remaining: List[Tuple[BlockRef, int]] = []
        for ref, index in self.unvoted:
            block = dag.get(ref)
            tx = block.transactions[index]
            key = (block.epoch, tx.id)
            if block.epoch < self.epoch or key in self.voted:
                continue
            if block.epoch > self.epoch or ref not in reachable:
                remaining.append((ref, index))
                continue
            decision = vote_decision(tx, self.locks)
            votes.append(TxVote(ref, index, decision.accept))
            self.voted.add(key)
        self.unvoted = remaining
        return votes

    def drain_changes(self) -> List[StatusChange]:
        changes, self._changes = self._changes, []
        return changes

    # ---- epochs ------------------------------------------------------------------

    def _close(self, record: CommitRecord) -> EpochCloseReport:
        epoch = self.epoch
        finalized_ids, reverted, expired = [], [], []
        for key, tally in self.tallies.items():
            if tally.epoch != epoch:
                continue
            if tally.status in (TxStatus.PENDING, TxStatus.EXECUTED) and tally.tx.is_owned_only:
                if not tally.certificate_blocks.isdisjoint(self.committed):
                    self._finalize(tally, commit_index=record.index)
            if tally.status == TxStatus.FINALIZED:
                finalized_ids.append(tally.tx.id)
            elif tally.status == TxStatus.EXECUTED:
                for obj, version in tally.tx.owned_inputs:
                    if self.versions.get(obj) == version + 1:
                        self.versions[obj] = version
                self._set_status(tally, TxStatus.REVERTED, commit_index=record.index)
                reverted.append(tally.tx.id)
            elif tally.status == TxStatus.PENDING:
                self._mixed_pending.pop(key, None)
                self._set_status(tally, TxStatus.REJECTED, commit_index=record.index)
                expired.append(tally.tx.id)

        self.locks = {obj: tx for obj, tx in self.locks.items() if tx in self._finalized_ids}
        report = EpochCloseReport(
            epoch, record.index, tuple(finalized_ids), tuple(reverted), tuple(expired)
        )
        self.closed_epochs.append(report)
        self.epoch = epoch + 1
        self.armed = False
        self._bit_authors.clear()
        self._epoch_start_commit = record.index + 1
        logger.info(
            "epoch %d closed",
            epoch,
            extra={
                "authority": self.authority,
                "epoch": epoch,
                "commit_index": record.index,
                "finalized": len(finalized_ids),
                "reverted": len(reverted),
                "expired": len(expired),
            },
        )
        return report


def epoch_close_step(state: FastPathState, record: CommitRecord, dag: DagState) -> EpochPhase:
    """
    Advance the epoch-change machinery by one commit.

    Arms the bit once the epoch has seen commits_per_epoch commits, and
    closes the epoch when committed bit-set blocks of this epoch come from
    2f+1 distinct authors.
    """
    if (
        state.commits_per_epoch is not None
        and not state.armed
        and record.index + 1 - state._epoch_start_commit >= state.commits_per_epoch
    ):
        state.armed = True
        logger.debug("authority %d armed epoch-change bit", state.authority)

    for ref in record.committed_blocks:
        block = dag.get(ref)
        if block.epoch_change_bit and block.epoch == state.epoch:
            state._bit_authors.add(block.author)

    if len(state._bit_authors) >= state.committee.quorum:
        state._close(record)
        return EpochPhase.CLOSED
    return EpochPhase.ARMED if state.armed else EpochPhase.OPEN
