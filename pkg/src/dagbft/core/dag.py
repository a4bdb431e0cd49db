"""
The DAG store and the pattern primitives built on it.

DagState holds accepted blocks only and is closed under parents: a block
goes in after all of its parents. Buffering blocks whose parents have not
arrived is the validator's job.

The module-level functions (supported_block, is_vote, is_certificate,
linked) are pure functions of a block's causal history, so their answers
never change as the DAG grows.
"""
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, Iterator, List, Optional, Set, Tuple

from dagbft.core.block import Block, BlockRef, TxVote, genesis_block
from dagbft.core.committee import Committee
from dagbft.errors import DagIntegrityError

DEFAULT_DRIFT_TOLERANCE_MS = 500
DEFAULT_MAX_SUSPEND_MS = 5000


class RejectReason(str, Enum):
    """Machine-readable reasons a block is refused."""

    MISSING_OWN_PARENT_FIRST = "MissingOwnParentFirst"
    INSUFFICIENT_PREVIOUS_ROUND_PARENTS = "InsufficientPreviousRoundParents"
    DUPLICATE_PARENTS = "DuplicateParents"
    TIMESTAMP_BELOW_PARENT = "TimestampBelowParent"
    TIMESTAMP_TOO_FAR_FUTURE = "TimestampTooFarFuture"
    WRONG_EPOCH = "WrongEpoch"
    PARENT_ROUND_NOT_LOWER = "ParentRoundNotLower"
    UNKNOWN_AUTHOR = "UnknownAuthor"
    INVALID_VOTE = "InvalidVote"
    BAD_SIGNATURE = "BadSignature"
    PARENT_REJECTED = "ParentRejected"


@dataclass(frozen=True)
class Verdict:
    """Outcome of verify_block: accept, reject(reason) or suspend(until)."""

    kind: str
    reason: Optional[RejectReason] = None
    until: Optional[int] = None

    @classmethod
    def accept(cls) -> "Verdict":
        return cls("accept")

    @classmethod
    def reject(cls, reason: RejectReason) -> "Verdict":
        return cls("reject", reason=reason)

    @classmethod
    def suspend(cls, until: int) -> "Verdict":
        return cls("suspend", until=until)

    @property
    def accepted(self) -> bool:
        return self.kind == "accept"

    @property
    def rejected(self) -> bool:
        return self.kind == "reject"

    @property
    def suspended(self) -> bool:
        return self.kind == "suspend"


class DagState:
    """
    All accepted blocks of one view, indexed for pattern queries.

    Attributes:
        committee: Who may author blocks
        blocks: BlockRef -> Block
        by_round: round -> refs at that round
        by_slot: (author, round) -> refs (more than one = equivocation)
        highest_accepted_round: Largest round stored
        labels: Optional display names (scenario files set these)
    """

    def __init__(self, committee: Committee):
        self.committee = committee
        self.blocks: Dict[BlockRef, Block] = {}
        self.by_round: Dict[int, Set[BlockRef]] = defaultdict(set)
        self.by_slot: Dict[Tuple[int, int], Set[BlockRef]] = defaultdict(set)
        self.highest_accepted_round = 0
        self.labels: Dict[BlockRef, str] = {}
        self._round_authors: Dict[int, Set[int]] = defaultdict(set)
        self._tips: Set[BlockRef] = set()
        self._support_cache: Dict[Tuple[BlockRef, int, int], Optional[BlockRef]] = {}
        self._tx_positions: Dict[bytes, List[Tuple[BlockRef, int]]] = defaultdict(list)
        self._tx_votes: Dict[bytes, List[Tuple[BlockRef, TxVote]]] = defaultdict(list)

    @classmethod
    def with_genesis(cls, committee: Committee) -> "DagState":
        """A DAG holding one genesis block per authority."""
        dag = cls(committee)
        for authority in committee.authorities:
            dag.add(genesis_block(authority, committee.epoch))
        return dag

    def add(self, block: Block) -> bool:
        """
        Store an accepted block.

        Returns:
            False if it was already stored

        Raises:
            DagIntegrityError: a parent is missing
        """
        ref = block.reference
        if ref in self.blocks:
            return False
        for parent in block.parents:
            if parent not in self.blocks:
                raise DagIntegrityError(f"{ref.short()} inserted before parent {parent.short()}")

        self.blocks[ref] = block
        self.by_round[ref.round].add(ref)
        self.by_slot[ref.slot].add(ref)
        self._round_authors[ref.round].add(ref.author)
        self.highest_accepted_round = max(self.highest_accepted_round, ref.round)
        self._tips.difference_update(block.parents)
        self._tips.add(ref)

        for index, tx in enumerate(block.transactions):
            self._tx_positions[tx.id].append((ref, index))
        for vote in block.votes:
            target = self.blocks.get(vote.block)
            tx = target.transaction_at(vote.index) if target is not None else None
            if tx is not None:
                self._tx_votes[tx.id].append((ref, vote))
        return True

    def __contains__(self, ref: object) -> bool:
        return ref in self.blocks

    def __len__(self) -> int:
        return len(self.blocks)

    def __iter__(self) -> Iterator[Block]:
        """Blocks in (round, author, digest) order."""
        for ref in sorted(self.blocks, key=BlockRef.sort_key):
            yield self.blocks[ref]

    def get(self, ref: BlockRef) -> Block:
        try:
            return self.blocks[ref]
        except KeyError:
            raise DagIntegrityError(f"unknown block {ref.short()}") from None

    def refs_at(self, round_: int) -> List[BlockRef]:
        return sorted(self.by_round.get(round_, ()), key=BlockRef.sort_key)

    def blocks_at(self, round_: int) -> List[Block]:
        return [self.blocks[ref] for ref in self.refs_at(round_)]

    def slot_blocks(self, author: int, round_: int) -> List[Block]:
        """All stored proposals for a slot, digest order."""
        refs = sorted(self.by_slot.get((author, round_), ()), key=BlockRef.sort_key)
        return [self.blocks[ref] for ref in refs]

    def authors_at(self, round_: int) -> Set[int]:
        return set(self._round_authors.get(round_, ()))

    def has_quorum_at(self, round_: int) -> bool:
        """Threshold clock: 2f+1 distinct authors stored at this round."""
        return len(self._round_authors.get(round_, ())) >= self.committee.quorum

    def tips(self) -> List[BlockRef]:
        """Stored blocks with no stored children."""
        return sorted(self._tips, key=BlockRef.sort_key)

    def equivocations(self) -> List[Tuple[int, int]]:
        """Slots holding more than one digest."""
        return sorted(slot for slot, refs in self.by_slot.items() if len(refs) > 1)

    def ancestors(self, starts: Iterable[BlockRef], min_round: int = 0) -> Set[BlockRef]:
        """Reflexive causal history of `starts`, cut below min_round."""
        seen: Set[BlockRef] = set()
        stack = [ref for ref in starts if ref.round >= min_round]
        seen.update(stack)
        while stack:
            ref = stack.pop()
            for parent in self.blocks[ref].parents:
                if parent.round >= min_round and parent not in seen:
                    seen.add(parent)
                    stack.append(parent)
        return seen

    def tx_positions(self, tx_id: bytes) -> List[Tuple[BlockRef, int]]:
        """Where a transaction was included."""
        return list(self._tx_positions.get(tx_id, ()))

    def tx_votes(self, tx_id: bytes) -> List[Tuple[BlockRef, TxVote]]:
        """Explicit votes cast for a transaction, with the block carrying each."""
        return list(self._tx_votes.get(tx_id, ()))

    def label(self, ref: BlockRef) -> str:
        return self.labels.get(ref, ref.short())

    def copy(self) -> "DagState":
        """Independent DAG with the same blocks (support cache not copied)."""
        clone = DagState(self.committee)
        for block in self:
            clone.add(block)
        clone.labels = dict(self.labels)
        return clone


def check_structure(block: Block, committee: Committee) -> Optional[RejectReason]:
    """
    Rules that need only the block's own fields.

    Runs before the parents are known, so obviously broken blocks are
    dropped instead of buffered.

    Returns:
        The first violated rule, or None
    """
    if not committee.is_member(block.author):
        return RejectReason.UNKNOWN_AUTHOR

    if block.round == 0:
        if block.parents:
            return RejectReason.PARENT_ROUND_NOT_LOWER
        if block.epoch != committee.epoch:
            return RejectReason.WRONG_EPOCH
        return None

    if any(not committee.is_member(parent.author) for parent in block.parents):
        return RejectReason.UNKNOWN_AUTHOR
    if any(parent.round >= block.round for parent in block.parents):
        return RejectReason.PARENT_ROUND_NOT_LOWER
    if not block.parents or block.parents[0].author != block.author:
        return RejectReason.MISSING_OWN_PARENT_FIRST
    if len(set(block.parents)) != len(block.parents):
        return RejectReason.DUPLICATE_PARENTS

    previous_round_authors = {p.author for p in block.parents if p.round == block.round - 1}
    if len(previous_round_authors) < committee.quorum:
        return RejectReason.INSUFFICIENT_PREVIOUS_ROUND_PARENTS
    return None


def verify_block(
    block: Block,
    committee: Committee,
    now: int,
    dag: DagState,
    drift_tolerance: int = DEFAULT_DRIFT_TOLERANCE_MS,
    max_suspend: int = DEFAULT_MAX_SUSPEND_MS,
) -> Verdict:
    """
    Full validity check of a block whose parents are all in dag.

    The signature is the caller's business.

    Args:
        block: Candidate block
        committee: Authorities and thresholds
        now: Receiver's clock, ms
        dag: Must already hold every parent
        drift_tolerance: Future timestamps within this are fine
        max_suspend: Future timestamps within this are suspended, beyond rejected

    Returns:
        Verdict.accept(), Verdict.reject(reason) or Verdict.suspend(until)
    """
    reason = check_structure(block, committee)
    if reason is not None:
        return Verdict.reject(reason)

    parents = [dag.get(ref) for ref in block.parents]
    if parents:
        top_epoch = max(p.epoch for p in parents)
        if block.epoch not in (top_epoch, top_epoch + 1):
            return Verdict.reject(RejectReason.WRONG_EPOCH)
        if block.timestamp < max(p.timestamp for p in parents):
            return Verdict.reject(RejectReason.TIMESTAMP_BELOW_PARENT)

    if block.votes:
        lowest = min(vote.block.round for vote in block.votes)
        history = dag.ancestors(block.parents, min_round=lowest)
        for vote in block.votes:
            if vote.block not in history:
                return Verdict.reject(RejectReason.INVALID_VOTE)
            if dag.get(vote.block).transaction_at(vote.index) is None:
                return Verdict.reject(RejectReason.INVALID_VOTE)

    if block.timestamp > now + drift_tolerance:
        if block.timestamp - now <= max_suspend:
            return Verdict.suspend(block.timestamp - drift_tolerance)
        return Verdict.reject(RejectReason.TIMESTAMP_TOO_FAR_FUTURE)
    return Verdict.accept()


def supported_block(
    start: Block, target_author: int, target_round: int, dag: DagState
) -> Optional[BlockRef]:
    """
    First block of slot (target_author, target_round) found by depth-first
    search from start, visiting parents in their listed order.

    Returns None when the slot is unreachable or target_round >= start.round.
    """
    if target_round >= start.round:
        return None
    key = (start.reference, target_author, target_round)
    cache = dag._support_cache
    if key in cache:
        return cache[key]

    result: Optional[BlockRef] = None
    for parent in start.parents:
        if parent.author == target_author and parent.round == target_round:
            result = parent
            break
        if parent.round <= target_round:
            continue
        found = supported_block(dag.get(parent), target_author, target_round, dag)
        if found is not None:
            result = found
            break
    cache[key] = result
    return result


def is_vote(voter: Block, candidate: Block, dag: DagState) -> bool:
    """Does voter support exactly candidate for candidate's slot?"""
    supported = supported_block(voter, candidate.author, candidate.round, dag)
    return supported == candidate.reference


def is_certificate(cert: Block, candidate: Block, dag: DagState, committee: Committee) -> bool:
    """At least 2f+1 distinct-author parents of cert vote for candidate."""
    voters = set()
    for parent in cert.parents:
        if parent.round <= candidate.round or parent.author in voters:
            continue
        if is_vote(dag.get(parent), candidate, dag):
            voters.add(parent.author)
    return len(voters) >= committee.quorum


def linked(old: BlockRef, new: BlockRef, dag: DagState) -> bool:
    """Is old in the reflexive transitive parent closure of new?"""
    if old == new:
        return True
    if old.round >= new.round:
        return False
    seen = {new}
    stack = [new]
    while stack:
        ref = stack.pop()
        for parent in dag.get(ref).parents:
            if parent == old:
                return True
            if parent.round > old.round and parent not in seen:
                seen.add(parent)
                stack.append(parent)
    return False
