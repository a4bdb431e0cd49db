"""
Commit Rule

Turns DAG patterns into an ordered commit sequence. This is the heart of
consensus: every honest validator runs it on its own view of the DAG and,
without exchanging any extra messages, ends up with the same sequence.

Each round carries num_of_proposers slots, and each slot belongs to one
authority (see LeaderSchedule). A slot is decided in one of two ways:

- Direct rule: 2f+1 blocks of the next round ignore the slot (skip it),
  or its proposal has 2f+1 certificates at the decision round (commit it).
- Indirect rule: when the direct rule can't say yet, look at the first
  later slot that is committed or still undecided (the anchor). Commit
  our proposal if the anchor's history holds one of its certificates,
  otherwise skip it.

The committable prefix of the slot sequence stops at the first undecided
slot, so a slow slot holds back everything behind it.

Everything here is a pure function of the DAG contents; Committer only
caches direct decisions that can no longer change. Typical use:

    committer = Committer(committee, DeciderConfig(num_of_proposers=2))
    for status in committer.try_decide(dag, last_committed_round=0):
        print(status.slot.label(), status.kind)
"""
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Optional, Set, Tuple

from dagbft.core.block import Block, BlockRef
from dagbft.core.committee import Committee
from dagbft.core.dag import DagState, is_certificate, linked
from dagbft.errors import ConfigError

UNDECIDED = "undecided"
COMMIT = "commit"
SKIP = "skip"


@dataclass(frozen=True)
class DeciderConfig:
    """
    Parameters of the decision rule.

    Args:
        wave_length: Rounds from proposal to decision, inclusive (>= 3)
        num_of_proposers: Slots per round
        round_offset: Shift of wave boundaries
        proposer_offset: Which proposer of the round this decider handles
    """

    wave_length: int = 3
    num_of_proposers: int = 2
    round_offset: int = 0
    proposer_offset: int = 0

    def __post_init__(self) -> None:
        if self.wave_length < 3:
            raise ConfigError(f"wave_length must be >= 3, got {self.wave_length}")
        if self.num_of_proposers < 1:
            raise ConfigError(f"num_of_proposers must be >= 1, got {self.num_of_proposers}")

    def check_committee(self, committee: Committee) -> None:
        if self.num_of_proposers > committee.n:
            raise ConfigError(
                f"num_of_proposers={self.num_of_proposers} exceeds committee size {committee.n}"
            )

    def proposer_round(self, wave: int) -> int:
        return wave * self.wave_length + self.round_offset

    def decision_round(self, wave: int) -> int:
        return self.proposer_round(wave) + self.wave_length - 1

    def wave_number(self, round_: int) -> int:
        return (round_ - self.round_offset) // self.wave_length

    def decision_round_of(self, round_: int) -> int:
        """Decision round for a proposal at round_, which need not open a wave."""
        wave = self.wave_number(round_)
        return self.decision_round(wave) + round_ - self.proposer_round(wave)


@dataclass(frozen=True)
class LeaderSchedule:
    """
    Which authority owns slot (round, offset).

    round-robin: (round + offset) mod n
    fixed:       offset mod n, every round
    """

    n: int
    kind: str = "round-robin"

    def __post_init__(self) -> None:
        if self.kind not in ("round-robin", "fixed"):
            raise ConfigError(f"unknown leader schedule '{self.kind}'")

    def authority(self, round_: int, offset: int = 0) -> int:
        if self.kind == "fixed":
            return offset % self.n
        return (round_ + offset) % self.n


@dataclass(frozen=True)
class Slot:
    """A (round, proposer offset) position and the authority that owns it."""

    round: int
    offset: int
    authority: int

    def sort_key(self) -> Tuple[int, int]:
        return (self.round, self.offset)

    def label(self) -> str:
        return f"A{self.authority}@{self.round}"


@dataclass(frozen=True)
class SlotStatus:
    """Undecided | ToCommit(block) | ToSkip(slot), plus which rule decided it."""

    slot: Slot
    kind: str = UNDECIDED
    block: Optional[BlockRef] = None
    direct: bool = True

    @classmethod
    def undecided(cls, slot: Slot) -> "SlotStatus":
        return cls(slot)

    @classmethod
    def to_commit(cls, slot: Slot, block: BlockRef, direct: bool = True) -> "SlotStatus":
        return cls(slot, COMMIT, block, direct)

    @classmethod
    def to_skip(cls, slot: Slot, direct: bool = True) -> "SlotStatus":
        return cls(slot, SKIP, None, direct)

    @property
    def is_undecided(self) -> bool:
        return self.kind == UNDECIDED

    @property
    def is_commit(self) -> bool:
        return self.kind == COMMIT

    @property
    def is_skip(self) -> bool:
        return self.kind == SKIP

    def to_dict(self) -> Dict[str, Any]:
        return {
            "round": self.slot.round,
            "offset": self.slot.offset,
            "authority": self.slot.authority,
            "status": self.kind,
            "block": self.block.to_dict() if self.block else None,
            "direct": self.direct,
        }


@dataclass(frozen=True)
class CommitRecord:
    """One entry of the commit sequence: a leader and the new blocks it orders."""

    index: int
    leader: BlockRef
    committed_blocks: Tuple[BlockRef, ...]
    commit_timestamp: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "index": self.index,
            "leader": self.leader.to_dict(),
            "blocks": [ref.to_dict() for ref in self.committed_blocks],
            "timestamp": self.commit_timestamp,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CommitRecord":
        return cls(
            index=int(data["index"]),
            leader=BlockRef.from_dict(data["leader"]),
            committed_blocks=tuple(BlockRef.from_dict(b) for b in data["blocks"]),
            commit_timestamp=int(data["timestamp"]),
        )


def skipped_proposer(slot: Slot, dag: DagState, committee: Committee) -> bool:
    """2f+1 distinct authors have a round+1 block with no parent in the slot."""
    skippers = set()
    for block in dag.blocks_at(slot.round + 1):
        if block.author in skippers:
            continue
        if not any(p.author == slot.authority and p.round == slot.round for p in block.parents):
            skippers.add(block.author)
    return len(skippers) >= committee.quorum


def _certifiers(
    proposal: Block, decision_round: int, dag: DagState, committee: Committee
) -> Set[int]:
    authors = set()
    for block in dag.blocks_at(decision_round):
        if block.author not in authors and is_certificate(block, proposal, dag, committee):
            authors.add(block.author)
    return authors


def supported_proposer(
    slot: Slot, dag: DagState, committee: Committee, config: DeciderConfig
) -> Optional[BlockRef]:
    """The slot's proposal holding 2f+1 certificates at the decision round, if any."""
    decision_round = config.decision_round_of(slot.round)
    if decision_round > dag.highest_accepted_round:
        return None
    for proposal in dag.slot_blocks(slot.authority, slot.round):
        if len(_certifiers(proposal, decision_round, dag, committee)) >= committee.quorum:
            return proposal.reference
    return None


def try_direct_decide(
    slot: Slot, dag: DagState, committee: Committee, config: DeciderConfig
) -> SlotStatus:
    """Skip check first, then commit check, else undecided."""
    if skipped_proposer(slot, dag, committee):
        return SlotStatus.to_skip(slot)
    proposal = supported_proposer(slot, dag, committee, config)
    if proposal is not None:
        return SlotStatus.to_commit(slot, proposal)
    return SlotStatus.undecided(slot)


def certified_link(
    anchor: Block, proposer: Block, dag: DagState, committee: Committee, config: DeciderConfig
) -> bool:
    """Some certificate of proposer at its decision round is in anchor's history."""
    decision_round = config.decision_round_of(proposer.round)
    for block in dag.blocks_at(decision_round):
        if not linked(block.reference, anchor.reference, dag):
            continue
        if is_certificate(block, proposer, dag, committee):
            return True
    return False


def try_indirect_decide(
    slot: Slot,
    pending_sequence: Iterable[SlotStatus],
    dag: DagState,
    committee: Committee,
    config: DeciderConfig,
) -> SlotStatus:
    """
    Decide a slot through its anchor.

    Args:
        slot: Slot the direct rule left undecided
        pending_sequence: Statuses of later slots in ascending slot order
    """
    decision_round = config.decision_round_of(slot.round)
    for status in pending_sequence:
        if status.slot.round <= decision_round or status.is_skip:
            continue
        if status.is_undecided:
            return SlotStatus.undecided(slot)
        anchor = dag.get(status.block)  # type: ignore[arg-type]
        for proposal in dag.slot_blocks(slot.authority, slot.round):
            if certified_link(anchor, proposal, dag, committee, config):
                return SlotStatus.to_commit(slot, proposal.reference, direct=False)
        return SlotStatus.to_skip(slot, direct=False)
    return SlotStatus.undecided(slot)


class Committer:
    """
    Decision rule bound to one committee and schedule.

    Keeps final direct decisions per slot so repeated calls on a growing
    DAG do not redo the pattern searches. Use one Committer per view.
    """

    def __init__(
        self,
        committee: Committee,
        config: Optional[DeciderConfig] = None,
        schedule: Optional[LeaderSchedule] = None,
    ):
        self.committee = committee
        self.config = config or DeciderConfig()
        self.config.check_committee(committee)
        self.schedule = schedule or LeaderSchedule(committee.n)
        self._direct: Dict[Tuple[int, int], SlotStatus] = {}

    def slot(self, round_: int, offset: int) -> Slot:
        return Slot(round_, offset, self.schedule.authority(round_, offset))

    def slots_at(self, round_: int) -> List[Slot]:
        return [self.slot(round_, offset) for offset in range(self.config.num_of_proposers)]

    def find_slot(self, authority: int, round_: int) -> Optional[Slot]:
        """The slot of `round_` owned by authority, if it proposes that round."""
        for slot in self.slots_at(round_):
            if slot.authority == authority:
                return slot
        return None

    def _decider(self, slot: Slot) -> DeciderConfig:
        wave_length = self.config.wave_length
        return DeciderConfig(
            wave_length=wave_length,
            num_of_proposers=self.config.num_of_proposers,
            round_offset=slot.round % wave_length,
            proposer_offset=slot.offset,
        )

    def direct_decide(self, slot: Slot, dag: DagState) -> SlotStatus:
        key = (slot.round, slot.offset)
        cached = self._direct.get(key)
        if cached is not None:
            return cached
        status = try_direct_decide(slot, dag, self.committee, self._decider(slot))
        if not status.is_undecided:
            self._direct[key] = status
        return status

    def evaluate(
        self, dag: DagState, last_committed_round: int, highest_round: Optional[int] = None
    ) -> List[SlotStatus]:
        """Statuses of every slot above last_committed_round, ascending, not truncated."""
        if highest_round is None:
            highest_round = dag.highest_accepted_round
        sequence: List[SlotStatus] = []
        for round_ in range(highest_round, last_committed_round, -1):
            if round_ <= 0:
                break
            for offset in range(self.config.num_of_proposers - 1, -1, -1):
                slot = self.slot(round_, offset)
                status = self.direct_decide(slot, dag)
                if status.is_undecided:
                    status = try_indirect_decide(
                        slot, sequence, dag, self.committee, self._decider(slot)
                    )
                sequence.insert(0, status)
        return sequence

    def try_decide(
        self, dag: DagState, last_committed_round: int, highest_round: Optional[int] = None
    ) -> List[SlotStatus]:
        """The committable prefix: statuses up to the first undecided slot."""
        decided = []
        for status in self.evaluate(dag, last_committed_round, highest_round):
            if status.is_undecided:
                break
            decided.append(status)
        return decided


def try_decide(
    last_committed_round: int,
    highest_round: int,
    dag: DagState,
    committee: Committee,
    config: DeciderConfig,
    schedule: LeaderSchedule,
) -> List[SlotStatus]:
    """Stateless form of Committer.try_decide."""
    return Committer(committee, config, schedule).try_decide(dag, last_committed_round, highest_round)


def linearize(
    commit_leader: BlockRef, already_delivered: Set[BlockRef], dag: DagState
) -> List[BlockRef]:
    """
    The leader's causal history minus what was already delivered.

    Ordered by (round, author, digest); the leader, having the highest round
    of its history, comes last. The caller adds the result to
    already_delivered.
    """
    if commit_leader in already_delivered:
        return []
    seen = {commit_leader}
    stack = [commit_leader]
    while stack:
        ref = stack.pop()
        for parent in dag.get(ref).parents:
            if parent not in seen and parent not in already_delivered:
                seen.add(parent)
                stack.append(parent)
    return sorted(seen, key=BlockRef.sort_key)


def commit_timestamp(leader_blocks: Iterable[Block], previous: int) -> int:
    """max(previous, leader timestamps)"""
    result = previous
    for block in leader_blocks:
        result = max(result, block.timestamp)
    return result
