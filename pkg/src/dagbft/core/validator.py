"""
One validator's protocol state machine.

The driver (the simulator, or a test) feeds it events one at a time:

    on_block(block, now, origin)   a block arrived from the network
    wake(now)                      a future-timestamped block may be ready
    submit(tx, now)                a client transaction arrived
    try_commit(now)                run the commit rule
    maybe_advance_round(now)       propose if the round gate is open

and drains what it wants sent back out (take_sync_requests, take_wakeups,
timeout_deadline). Time is virtual milliseconds; the validator's own clock
is `now + clock_skew_ms`.

Everything that changes state is appended to the write-ahead log, so
Validator.recover() rebuilds an equivalent validator.
"""
from collections import Counter, defaultdict, deque
from dataclasses import dataclass
from typing import Deque, Dict, List, Optional, Set, Tuple

from dagbft.config import ValidatorSettings
from dagbft.core.block import Block, BlockRef, Transaction
from dagbft.core.committee import Committee
from dagbft.core.committer import (
    CommitRecord,
    Committer,
    DeciderConfig,
    LeaderSchedule,
    Slot,
    SlotStatus,
    commit_timestamp,
    linearize,
)
from dagbft.core.dag import DagState, RejectReason, check_structure, is_vote, verify_block
from dagbft.core.fastpath import Admission, FastPathState, StatusChange, epoch_close_step
from dagbft.core.wal import RecordKind, WalRecord, WriteAheadLog
from dagbft.logs import get_logger
from dagbft.signers import BaseSigner, NoopSigner

logger = get_logger(__name__)


@dataclass(frozen=True)
class SlotDecision:
    """How and when this validator decided a slot."""

    status: SlotStatus
    decided_at: int
    highest_round: int

    @property
    def depth(self) -> int:
        """Rounds between the proposal and the DAG height at decision time."""
        return self.highest_round - self.status.slot.round


class Validator:
    """
    A validator's full state: DAG, buffers, round clock, commits, fast path.

    Args:
        authority: This validator's index
        committee: The committee
        settings: Timeouts and queue sizes
        decider: Commit rule parameters
        schedule: Leader schedule
        signer: Signs own blocks, checks everyone else's
        wal: Write-ahead log to append to (None = no persistence)
        clock_skew_ms: Offset of the local clock from virtual time
        commits_per_epoch: Arm the epoch-change bit after this many commits
        max_rounds: Stop proposing after this round
    """

    def __init__(
        self,
        authority: int,
        committee: Committee,
        settings: Optional[ValidatorSettings] = None,
        decider: Optional[DeciderConfig] = None,
        schedule: Optional[LeaderSchedule] = None,
        signer: Optional[BaseSigner] = None,
        wal: Optional[WriteAheadLog] = None,
        clock_skew_ms: int = 0,
        commits_per_epoch: Optional[int] = None,
        max_rounds: Optional[int] = None,
    ):
        self.authority = authority
        self.committee = committee
        self.settings = settings or ValidatorSettings.simulator()
        self.committer = Committer(committee, decider, schedule)
        self.signer = signer or NoopSigner()
        self.wal = wal
        self.clock_skew_ms = clock_skew_ms
        self.max_rounds = max_rounds

        self.dag = DagState.with_genesis(committee)
        self.fastpath = FastPathState(authority, committee, commits_per_epoch)
        self.suspended: Dict[BlockRef, Tuple[Block, Set[BlockRef]]] = {}
        self.future: Dict[BlockRef, Tuple[Block, int]] = {}
        self.rejected: Dict[BlockRef, RejectReason] = {}
        self.rejections: Counter = Counter()
        self.current_round = 0
        self.last_own: BlockRef = self.dag.slot_blocks(authority, 0)[0].reference
        self.timeout_deadline: Optional[int] = None
        self.pending_transactions: Deque[Transaction] = deque()
        self.threshold_seen: Dict[int, int] = {0: 0}
        self.commits: List[CommitRecord] = []
        self.delivered: Set[BlockRef] = set(self.dag.refs_at(0))
        self.decisions: Dict[Tuple[int, int], SlotDecision] = {}
        self.last_decided: Optional[Slot] = None
        self.own_blocks: List[BlockRef] = []
        self.tx_changes: List[Tuple[int, StatusChange]] = []

        self._waiting: Dict[BlockRef, Set[BlockRef]] = defaultdict(set)
        self._sync: Dict[int, List[BlockRef]] = defaultdict(list)
        self._requested: Set[BlockRef] = set()
        self._wakeups: List[int] = []
        self._replaying = False

    # ---- small accessors ---------------------------------------------------------

    @property
    def epoch(self) -> int:
        return self.fastpath.epoch

    @property
    def epoch_change_armed(self) -> bool:
        return self.fastpath.armed

    @property
    def last_commit(self) -> Optional[int]:
        return self.commits[-1].index if self.commits else None

    def clock(self, now: int) -> int:
        return now + self.clock_skew_ms

    def _log(self, kind: RecordKind, now: int, **fields: object) -> None:
        if self.wal is None or self._replaying:
            return
        self.wal.append(WalRecord(kind, now, **fields))  # type: ignore[arg-type]

    # ---- transactions ------------------------------------------------------------

    def submit(self, tx: Transaction, now: int) -> bool:
        """
        Queue a client transaction.

        Returns:
            False if the queue is full (the client should retry elsewhere)
        """
        if len(self.pending_transactions) >= self.settings.queue_capacity:
            logger.debug("authority %d queue full, bouncing tx", self.authority)
            return False
        self.pending_transactions.append(tx)
        self._log(RecordKind.SUBMIT, now, tx=tx)
        return True

    def _drop_pending(self, tx_id: bytes) -> None:
        for tx in self.pending_transactions:
            if tx.id == tx_id:
                self.pending_transactions.remove(tx)
                return

    # ---- block intake ------------------------------------------------------------

    def on_block(self, block: Block, now: int, origin: Optional[int] = None) -> List[BlockRef]:
        """
        Handle a block from the network.

        Args:
            block: The block
            now: Virtual time
            origin: Peer that sent it (missing parents are requested from it)

        Returns:
            Blocks accepted into the DAG by this call, parents before children
        """
        ref = block.reference
        if ref in self.future:
            return self.wake(now)
        if ref in self.dag or ref in self.suspended or ref in self.rejected:
            return []

        if not self.signer.verify(block.author, block.encoded, block.signature):
            self._reject(block, RejectReason.BAD_SIGNATURE)
            return []
        reason = check_structure(block, self.committee)
        if reason is not None:
            self._reject(block, reason)
            return []
        if any(parent in self.rejected for parent in block.parents):
            self._reject(block, RejectReason.PARENT_REJECTED)
            return []

        missing = {parent for parent in block.parents if parent not in self.dag}
        if missing:
            self.suspended[ref] = (block, missing)
            for parent in sorted(missing, key=BlockRef.sort_key):
                self._waiting[parent].add(ref)
                known = parent in self.suspended or parent in self.future
                if not known and origin is not None and origin != self.authority:
                    self._request(origin, parent)
            self._log(RecordKind.RECEIVED, now, block=block)
            logger.debug("%s suspended, %d parents missing", ref.short(), len(missing))
            return []
        return self._admit(block, now, fresh=True)

    def _request(self, peer: int, ref: BlockRef) -> None:
        if ref in self._requested:
            return
        self._requested.add(ref)
        self._sync[peer].append(ref)

    def _admit(self, block: Block, now: int, fresh: bool) -> List[BlockRef]:
        accepted: List[BlockRef] = []
        queue: Deque[Block] = deque([block])
        while queue:
            candidate = queue.popleft()
            ref = candidate.reference
            verdict = verify_block(
                candidate,
                self.committee,
                self.clock(now),
                self.dag,
                self.settings.drift_tolerance_ms,
                self.settings.max_suspend_ms,
            )
            if verdict.suspended:
                until = int(verdict.until) - self.clock_skew_ms  # type: ignore[arg-type]
                self.future[ref] = (candidate, until)
                self._wakeups.append(until)
                if fresh and candidate is block:
                    self._log(RecordKind.RECEIVED, now, block=candidate)
                continue
            if verdict.rejected:
                self._reject(candidate, verdict.reason)  # type: ignore[arg-type]
                continue

            self._store(candidate, now)
            accepted.append(ref)
            for child_ref in sorted(self._waiting.pop(ref, ()), key=BlockRef.sort_key):
                entry = self.suspended.get(child_ref)
                if entry is None:
                    continue
                child, missing = entry
                missing.discard(ref)
                if not missing:
                    del self.suspended[child_ref]
                    queue.append(child)
        return accepted

    def wake(self, now: int) -> List[BlockRef]:
        """Retry future-timestamped blocks whose wait is over."""
        ready = sorted(
            (ref for ref, (_, until) in self.future.items() if until <= now),
            key=BlockRef.sort_key,
        )
        accepted: List[BlockRef] = []
        for ref in ready:
            block, _ = self.future.pop(ref)
            accepted.extend(self._admit(block, now, fresh=False))
        return accepted

    def _reject(self, block: Block, reason: RejectReason) -> None:
        stack = [(block, reason)]
        while stack:
            current, why = stack.pop()
            ref = current.reference
            if ref in self.rejected:
                continue
            self.rejected[ref] = why
            self.rejections[why.value] += 1
            self.suspended.pop(ref, None)
            self.future.pop(ref, None)
            logger.info(
                "rejected %s: %s",
                ref.short(),
                why.value,
                extra={"authority": self.authority, "block": ref.short(), "reason": why.value},
            )
            for child_ref in sorted(self._waiting.pop(ref, ()), key=BlockRef.sort_key):
                entry = self.suspended.get(child_ref)
                if entry is not None:
                    stack.append((entry[0], RejectReason.PARENT_REJECTED))

    def _store(self, block: Block, now: int) -> None:
        ref = block.reference
        self.dag.add(block)
        self._log(RecordKind.BLOCK, now, block=block)
        if block.author == self.authority and block.round > 0:
            self.own_blocks.append(ref)
            if block.round >= self.current_round:
                self.current_round = block.round
                self.last_own = ref
            included = {tx.id for tx in block.transactions}
            if included:
                self.pending_transactions = deque(
                    tx for tx in self.pending_transactions if tx.id not in included
                )
        self.fastpath.process_block(block, self.dag)
        self._collect_tx_changes(now)
        if block.round not in self.threshold_seen and self.dag.has_quorum_at(block.round):
            self.threshold_seen[block.round] = now
            self._log(RecordKind.THRESHOLD, now, round=block.round)

    def _collect_tx_changes(self, now: int) -> None:
        for change in self.fastpath.drain_changes():
            self.tx_changes.append((now, change))

    # ---- round advancement and proposals -----------------------------------------

    def _quorum_round(self) -> Optional[int]:
        for round_ in range(self.dag.highest_accepted_round, self.current_round - 1, -1):
            if self.dag.has_quorum_at(round_):
                return round_
        return None

    def _votes_for(self, proposals: List[Block], round_: int) -> int:
        authors = set()
        for block in self.dag.blocks_at(round_):
            if block.author in authors:
                continue
            if any(is_vote(block, proposal, self.dag) for proposal in proposals):
                authors.add(block.author)
        return len(authors)

    def maybe_advance_round(self, now: int) -> Optional[Block]:
        """
        Propose a new block if the round gate is open.

        With 2f+1 blocks at round r-1 the validator proposes round r once
        (a) the round-(r-1) leader's block is here or the leader timeout ran
        out, and (b) the round-(r-2) leader is absent, has 2f+1 votes at
        round r-1, or the timeout ran out. The timeout counts from when
        round r-1 first reached 2f+1 authors.

        Returns:
            The new block, already stored locally, or None
        """
        if self.max_rounds is not None and self.current_round >= self.max_rounds:
            self.timeout_deadline = None
            return None
        quorum_round = self._quorum_round()
        if quorum_round is None:
            return None
        target = quorum_round + 1
        if self.max_rounds is not None:
            target = min(target, self.max_rounds)
        if target <= self.current_round:
            return None
        gate_round = target - 1

        seen = self.threshold_seen.setdefault(gate_round, now)
        deadline = seen + self.settings.leader_timeout_ms
        timed_out = now >= deadline
        schedule = self.committer.schedule

        if gate_round > 0 and not timed_out:
            leader = schedule.authority(gate_round, 0)
            if not self.dag.slot_blocks(leader, gate_round):
                self.timeout_deadline = deadline
                return None
            if gate_round > 1:
                previous = self.dag.slot_blocks(schedule.authority(gate_round - 1, 0), gate_round - 1)
                if previous and self._votes_for(previous, gate_round) < self.committee.quorum:
                    self.timeout_deadline = deadline
                    return None

        self.timeout_deadline = None
        return self._propose(target, now)

    def _propose(self, round_: int, now: int) -> Block:
        parents = [self.last_own]
        for ref in self.dag.refs_at(round_ - 1):
            if ref != self.last_own:
                parents.append(ref)
        for ref in self.dag.tips():
            if ref.round < round_ - 1 and ref not in parents:
                parents.append(ref)

        parent_blocks = [self.dag.get(ref) for ref in parents]
        epoch = max([self.fastpath.epoch] + [p.epoch for p in parent_blocks])
        current_epoch = epoch == self.fastpath.epoch
        contributing = current_epoch and self.fastpath.contributing

        transactions: List[Transaction] = []
        votes = []
        if contributing:
            limit = self.settings.max_block_transactions
            while self.pending_transactions and len(transactions) < limit:
                tx = self.pending_transactions.popleft()
                if self.fastpath.admit(tx) == Admission.INCLUDE:
                    transactions.append(tx)
                else:
                    self._log(RecordKind.DROP, now, tx_id=tx.id)
            if self.fastpath.unvoted:
                lowest = min(ref.round for ref, _ in self.fastpath.unvoted)
                reachable = self.dag.ancestors(parents, min_round=lowest)
                votes = self.fastpath.take_votes(self.dag, reachable)

        timestamp = max([self.clock(now)] + [p.timestamp for p in parent_blocks])
        block = Block(
            author=self.authority,
            round=round_,
            epoch=epoch,
            parents=tuple(parents),
            transactions=tuple(transactions),
            votes=tuple(votes),
            epoch_change_bit=self.fastpath.armed and current_epoch,
            timestamp=timestamp,
        )
        block = block.with_signature(self.signer.sign(self.authority, block.encoded))
        self._store(block, now)
        logger.debug(
            "authority %d proposed round %d (%d parents, %d txs, %d votes)",
            self.authority,
            round_,
            len(parents),
            len(transactions),
            len(votes),
        )
        return block

    # ---- commits -------------------------------------------------------------------

    def try_commit(self, now: int = 0) -> List[CommitRecord]:
        """
        Run the commit rule and emit records for newly committed leaders.

        Idempotent: slots already decided are never emitted twice.
        """
        start = self.last_decided.round - 1 if self.last_decided is not None else 0
        records: List[CommitRecord] = []
        decided = False
        for status in self.committer.try_decide(self.dag, max(start, 0)):
            key = status.slot.sort_key()
            if self.last_decided is not None and key <= self.last_decided.sort_key():
                continue
            self.decisions[key] = SlotDecision(status, now, self.dag.highest_accepted_round)
            decided = True
            self.last_decided = status.slot
            if not status.is_commit:
                continue
            leader = self.dag.get(status.block)  # type: ignore[arg-type]
            blocks = linearize(leader.reference, self.delivered, self.dag)
            self.delivered.update(blocks)
            previous = self.commits[-1].commit_timestamp if self.commits else 0
            record = CommitRecord(
                index=len(self.commits),
                leader=leader.reference,
                committed_blocks=tuple(blocks),
                commit_timestamp=commit_timestamp([leader], previous),
            )
            self.commits.append(record)
            records.append(record)
            self.fastpath.on_commit(record, self.dag)
            epoch_close_step(self.fastpath, record, self.dag)
            self._collect_tx_changes(now)
            logger.info(
                "commit %d leader %s",
                record.index,
                record.leader.short(),
                extra={
                    "authority": self.authority,
                    "commit_index": record.index,
                    "leader": record.leader.short(),
                    "blocks": len(blocks),
                    "commit_timestamp": record.commit_timestamp,
                },
            )
        if decided:
            self._log(RecordKind.COMMIT, now)
        return records

    def undecided_slots(self, below_round: int) -> List[Slot]:
        """Slots under below_round that this validator has not decided yet."""
        missing = []
        for round_ in range(1, below_round):
            for slot in self.committer.slots_at(round_):
                if slot.sort_key() not in self.decisions:
                    missing.append(slot)
        return missing

    # ---- outbound queues -----------------------------------------------------------

    def take_sync_requests(self) -> Dict[int, List[BlockRef]]:
        """Missing-parent requests per peer, cleared on read."""
        requests = {peer: list(refs) for peer, refs in sorted(self._sync.items()) if refs}
        self._sync.clear()
        return requests

    def take_wakeups(self) -> List[int]:
        """Times at which wake() should be called, cleared on read."""
        wakeups = sorted(set(self._wakeups))
        self._wakeups.clear()
        return wakeups

    def forget_request(self, ref: BlockRef) -> None:
        """Allow a missing block to be requested again (the peer could not serve it)."""
        self._requested.discard(ref)

    # ---- persistence ---------------------------------------------------------------

    @classmethod
    def recover(cls, wal: WriteAheadLog, authority: int, committee: Committee, **kwargs: object) -> "Validator":
        """
        Rebuild a validator by replaying its write-ahead log.

        New records keep being appended to the same log afterwards.

        Raises:
            WalCorruptionError: the log is damaged before its tail
        """
        validator = cls(authority, committee, wal=wal, **kwargs)  # type: ignore[arg-type]
        validator._replaying = True
        replayed = 0
        for record in wal.records():
            replayed += 1
            if record.kind in (RecordKind.BLOCK, RecordKind.RECEIVED):
                validator.on_block(record.block, record.time)  # type: ignore[arg-type]
            elif record.kind == RecordKind.SUBMIT:
                validator.submit(record.tx, record.time)  # type: ignore[arg-type]
            elif record.kind == RecordKind.THRESHOLD:
                validator.threshold_seen.setdefault(record.round, record.time)  # type: ignore[arg-type]
            elif record.kind == RecordKind.DROP:
                validator._drop_pending(record.tx_id)  # type: ignore[arg-type]
            elif record.kind == RecordKind.COMMIT:
                validator.try_commit(record.time)
        validator._replaying = False
        validator._sync.clear()
        validator._requested = {ref for ref in validator._waiting if ref not in validator.dag}
        validator._wakeups.clear()
        logger.info(
            "authority %d recovered from %s",
            authority,
            wal.name,
            extra={
                "authority": authority,
                "records": replayed,
                "round": validator.current_round,
                "commits": len(validator.commits),
            },
        )
        return validator
