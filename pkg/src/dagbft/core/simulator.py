"""
Deterministic discrete-event simulator.

One run wires n Validator state machines together through a virtual
network. Events sit in a heap keyed by (time, sequence number); events with
the same time are handed out as one batch, then every validator that got
something runs its commit rule and round gate.

Randomness comes from numpy's PCG64, one independent stream per
(purpose, authority) spawned off the run seed, so adding a fault or a
workload never shifts the latency draws of an unrelated stream.

Typical use:

    config = SimConfig(seed=7, n=4, max_rounds=20)
    result = run(config)
    print(result.metrics.summary())
"""
from collections import Counter, deque
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Any, Deque, Dict, List, Optional, Set, Tuple
import heapq

import numpy as np

from dagbft.config import FaultSpec, LatencyModel, SimConfig, WorkloadConfig, apply_overrides
from dagbft.core.block import Block, BlockRef, Transaction
from dagbft.core.committee import Committee
from dagbft.core.committer import CommitRecord, DeciderConfig, LeaderSchedule
from dagbft.core.dag import DagState
from dagbft.core.fastpath import TxStatus
from dagbft.core.validator import Validator
from dagbft.core.wal import WriteAheadLog
from dagbft.errors import ConfigError, SimulationError
from dagbft.logs import get_logger
from dagbft.signers import BaseSigner, KeyedHashSigner

logger = get_logger(__name__)


class Purpose(IntEnum):
    """Random stream families."""

    LATENCY = 1
    SYNC = 2
    SKEW = 3
    WORKLOAD = 4
    FUZZ = 5
    CRASH = 6


def stream(seed: int, purpose: Purpose, authority: int = -1) -> np.random.Generator:
    """
    The random stream for (purpose, authority) under a run seed.

    authority=-1 is the run-wide stream of that purpose.
    """
    sequence = np.random.SeedSequence(seed, spawn_key=(int(purpose), authority + 1))
    return np.random.Generator(np.random.PCG64(sequence))


def check_faults(config: SimConfig) -> None:
    """
    Reject fault lists the simulator cannot act out.

    Raises:
        SimulationError: a fault outside the committee, a restart aimed at an
            authority that is also faulty, or two equivocation strategies for
            one authority
    """
    kinds: Dict[int, Set[str]] = {}
    strategies: Dict[int, Set[str]] = {}
    for fault in config.faults:
        if not 0 <= fault.authority < config.n:
            raise SimulationError(f"fault {fault.label()} targets no validator of n={config.n}")
        kinds.setdefault(fault.authority, set()).add(fault.kind)
        if fault.kind == "equivocate":
            strategies.setdefault(fault.authority, set()).add(fault.strategy)
    for authority, seen in sorted(kinds.items()):
        faulty = sorted(seen - {"restart"})
        if "restart" in seen and faulty:
            raise SimulationError(
                f"authority {authority} is scheduled to restart but is also faulty ({', '.join(faulty)})"
            )
        if len(strategies.get(authority, ())) > 1:
            raise SimulationError(
                f"authority {authority} has more than one equivocation strategy "
                f"({', '.join(sorted(strategies[authority]))})"
            )


class EventKind(IntEnum):
    START = 0
    FAULT = 1
    DELIVER = 2
    SYNC_REQUEST = 3
    WAKE = 4
    TIMEOUT = 5
    SUBMIT = 6


@dataclass
class Event:
    kind: EventKind
    target: int
    origin: Optional[int] = None
    block: Optional[Block] = None
    refs: Tuple[BlockRef, ...] = ()
    tx: Optional[Transaction] = None
    fault: Optional[FaultSpec] = None
    hops: int = 0


@dataclass(frozen=True)
class TraceEntry:
    """One line of the bounded event trace."""

    time: int
    kind: str
    target: int
    detail: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {"time": self.time, "kind": self.kind, "target": self.target, "detail": self.detail}


@dataclass(frozen=True)
class SlotMetric:
    validator: int
    round: int
    offset: int
    authority: int
    status: str
    direct: bool
    depth: int
    decided_at: int
    commit_latency_ms: Optional[int] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "validator": self.validator,
            "round": self.round,
            "offset": self.offset,
            "authority": self.authority,
            "status": self.status,
            "direct": self.direct,
            "depth": self.depth,
            "decided_at": self.decided_at,
            "commit_latency_ms": self.commit_latency_ms,
        }


@dataclass
class TxMetric:
    tx_id: str
    kind: str
    submitted_at: int
    executed_at: Optional[int] = None
    finalized_at: Optional[int] = None
    executed_rounds: Optional[int] = None
    finalized_rounds: Optional[int] = None
    status: str = TxStatus.PENDING.value

    @property
    def execute_latency_ms(self) -> Optional[int]:
        return None if self.executed_at is None else self.executed_at - self.submitted_at

    @property
    def finalize_latency_ms(self) -> Optional[int]:
        return None if self.finalized_at is None else self.finalized_at - self.submitted_at

    def to_dict(self) -> Dict[str, Any]:
        return {
            "tx_id": self.tx_id,
            "kind": self.kind,
            "submitted_at": self.submitted_at,
            "executed_at": self.executed_at,
            "finalized_at": self.finalized_at,
            "executed_rounds": self.executed_rounds,
            "finalized_rounds": self.finalized_rounds,
            "execute_latency_ms": self.execute_latency_ms,
            "finalize_latency_ms": self.finalize_latency_ms,
            "status": self.status,
        }


@dataclass
class Metrics:
    """Everything measured during one run."""

    slots: List[SlotMetric] = field(default_factory=list)
    transactions: List[TxMetric] = field(default_factory=list)
    blocks_per_round: Dict[int, int] = field(default_factory=dict)
    commits_per_round: Dict[int, int] = field(default_factory=dict)
    rejections: Dict[str, int] = field(default_factory=dict)
    bounced_transactions: int = 0
    messages: int = 0
    end_time: int = 0

    def slots_of(self, validator: int) -> List[SlotMetric]:
        return [slot for slot in self.slots if slot.validator == validator]

    def summary(self) -> Dict[str, Any]:
        """Headline numbers, as printed by the CLI."""
        kinds = Counter(slot.status for slot in self.slots)
        latencies = np.array(
            [s.commit_latency_ms for s in self.slots if s.commit_latency_ms is not None],
            dtype=float,
        )
        finalize = np.array(
            [t.finalize_latency_ms for t in self.transactions if t.finalized_at is not None],
            dtype=float,
        )
        return {
            "decisions": sum(kinds.values()),
            "commit": kinds.get("commit", 0),
            "skip": kinds.get("skip", 0),
            "direct": sum(1 for s in self.slots if s.direct),
            "p50_commit_latency_ms": float(np.median(latencies)) if latencies.size else None,
            "transactions": len(self.transactions),
            "finalized": int(finalize.size),
            "p50_finalize_latency_ms": float(np.median(finalize)) if finalize.size else None,
            "rejected_blocks": sum(self.rejections.values()),
            "messages": self.messages,
            "end_time_ms": self.end_time,
        }


@dataclass
class SimResult:
    """Output of run(): metrics, per-validator views and the trace tail."""

    config: SimConfig
    metrics: Metrics
    validators: Dict[int, Validator]
    trace: List[TraceEntry]
    checked: List[int]
    crashed: Set[int] = field(default_factory=set)

    @property
    def commit_logs(self) -> Dict[int, List[CommitRecord]]:
        return {index: v.commits for index, v in self.validators.items()}

    @property
    def dags(self) -> Dict[int, DagState]:
        return {index: v.dag for index, v in self.validators.items()}


def forge_variant(block: Block, signer: BaseSigner, k: int = 1) -> Block:
    """A second, digest-distinct block for the same slot, properly signed."""
    variant = block.with_timestamp(block.timestamp + k)
    return variant.with_signature(signer.sign(block.author, variant.encoded))


def inject_equivocation(config: SimConfig, authority: int, strategy: str = "split-views") -> SimConfig:
    """
    Copy of config where `authority` equivocates with `strategy`.

    split-views: each half of the committee gets its own variant.
    double-sign: everyone gets both variants.
    """
    faults = [fault for fault in config.faults if fault.authority != authority]
    faults.append(FaultSpec(authority=authority, kind="equivocate", strategy=strategy))
    return apply_overrides(config, faults=faults)


@dataclass
class _ConflictPair:
    first: Transaction
    second: Transaction
    resubmitted: bool = False


class Simulation:
    """
    One run in progress. Use run(config) unless you need to poke at the
    internals between events.
    """

    def __init__(self, config: SimConfig):
        check_faults(config)
        self.config = config
        self.committee = Committee(config.n)
        self.decider = DeciderConfig(
            wave_length=config.wave_length, num_of_proposers=config.num_of_proposers
        )
        self.schedule = LeaderSchedule(config.n, config.schedule)
        self.signer = KeyedHashSigner(config.seed.to_bytes(8, "little"))
        self.settings = config.validator_settings()

        skew = stream(config.seed, Purpose.SKEW)
        self.skews = [
            int(skew.integers(0, config.max_clock_skew_ms + 1)) if config.max_clock_skew_ms else 0
            for _ in range(config.n)
        ]
        self.wals = {index: WriteAheadLog.in_memory() for index in range(config.n)}
        self.validators = {index: self._make_validator(index) for index in range(config.n)}
        self._latency = {index: stream(config.seed, Purpose.LATENCY, index) for index in range(config.n)}
        self._sync_rng = {index: stream(config.seed, Purpose.SYNC, index) for index in range(config.n)}

        self.crashed: Set[int] = set()
        self.muted: Set[int] = set()
        self.equivocators: Dict[int, str] = {}
        self._heap: List[Tuple[int, int, Event]] = []
        self._seq = 0
        self._deadlines: Dict[int, Set[int]] = {index: set() for index in range(config.n)}
        self._wakeups: Dict[int, Set[int]] = {index: set() for index in range(config.n)}
        self.trace: Deque[TraceEntry] = deque(maxlen=config.trace_capacity)
        self.proposed: Set[BlockRef] = set()
        self.blocks_per_round: Counter = Counter()
        self.messages = 0
        self.bounced = 0
        self.now = 0

        self._submitted: Dict[bytes, Tuple[int, str]] = {}
        self._pairs: List[_ConflictPair] = []
        self._closed_handled: Set[int] = set()
        self._next_object = 1

    def _make_validator(self, index: int) -> Validator:
        return Validator(
            index,
            self.committee,
            settings=self.settings,
            decider=self.decider,
            schedule=self.schedule,
            signer=self.signer,
            wal=self.wals[index],
            clock_skew_ms=self.skews[index],
            commits_per_epoch=self.config.commits_per_epoch,
            max_rounds=self.config.max_rounds,
        )

    # ---- event plumbing -------------------------------------------------------------

    def push(self, time: int, event: Event) -> None:
        heapq.heappush(self._heap, (time, self._seq, event))
        self._seq += 1

    def _trace(self, kind: str, target: int, detail: str = "") -> None:
        self.trace.append(TraceEntry(self.now, kind, target, detail))

    def latency(self, src: int, dst: int, send_time: int, rng: np.random.Generator) -> int:
        """
        One-way delay for a message sent at send_time.

        Before GST anything up to gst+delta-send_time may happen; after GST
        the pair's bounds apply, capped at delta.
        """
        low, high = self.config.latency.bounds(src, dst)
        if send_time < self.config.gst_ms:
            high = max(low, self.config.gst_ms + self.config.delta_ms - send_time)
            return int(rng.integers(low, high + 1))
        sample = int(rng.integers(low, high + 1)) if high > low else low
        return min(sample, self.config.delta_ms)

    def send(self, src: int, dst: int, block: Block, rng: Optional[np.random.Generator] = None) -> None:
        delay = self.latency(src, dst, self.now, rng or self._latency[src])
        self.messages += 1
        self.push(self.now + delay, Event(EventKind.DELIVER, dst, origin=src, block=block))

    def broadcast(self, src: int, block: Block) -> None:
        if src in self.muted:
            return
        self.proposed.add(block.reference)
        self.blocks_per_round[block.round] += 1
        peers = [peer for peer in range(self.config.n) if peer != src]
        strategy = self.equivocators.get(src)
        if strategy is None:
            for peer in peers:
                self.send(src, peer, block)
            return

        variant = forge_variant(block, self.signer)
        self.proposed.add(variant.reference)
        self.blocks_per_round[block.round] += 1
        self._trace("equivocate", src, f"{block.reference.short()} / {variant.reference.short()}")
        half = self.config.n // 2
        for peer in peers:
            if strategy == "split-views":
                self.send(src, peer, block if peer < half else variant)
            else:
                self.send(src, peer, block)
                self.send(src, peer, variant)

    # ---- setup ---------------------------------------------------------------------

    def _schedule_faults(self) -> None:
        for fault in sorted(self.config.faults, key=lambda f: (f.at_ms, f.authority)):
            self.push(fault.at_ms, Event(EventKind.FAULT, fault.authority, fault=fault))

    def _fresh_objects(self, count: int) -> Tuple[Tuple[int, int], ...]:
        objects = tuple((self._next_object + i, 0) for i in range(count))
        self._next_object += count
        return objects

    def _schedule_workload(self, workload: WorkloadConfig) -> None:
        if workload.rate_per_s <= 0:
            return
        rng = stream(self.config.seed, Purpose.WORKLOAD)
        until = min(workload.until_ms or self.config.duration_ms, self.config.duration_ms)
        mean_gap = 1000.0 / workload.rate_per_s
        half = self.config.n // 2
        time = 0.0
        while True:
            time += float(rng.exponential(mean_gap))
            if time >= until:
                break
            at = int(time)
            payload = rng.bytes(workload.payload_bytes)
            if rng.random() < workload.conflict_rate:
                inputs = self._fresh_objects(workload.inputs_per_tx)
                first = Transaction(inputs, False, payload + b"\x00")
                second = Transaction(inputs, False, payload + b"\x01")
                self._pairs.append(_ConflictPair(first, second))
                for target in range(self.config.n):
                    tx = first if target < half else second
                    self._submit_at(at, target, tx, "conflicting")
                continue
            draw = rng.random()
            target = int(rng.integers(0, self.config.n))
            if draw < workload.shared_fraction:
                tx = Transaction((), True, payload)
                kind = "shared"
            elif draw < workload.shared_fraction + workload.mixed_fraction:
                tx = Transaction(self._fresh_objects(workload.inputs_per_tx), True, payload)
                kind = "mixed"
            else:
                tx = Transaction(self._fresh_objects(workload.inputs_per_tx), False, payload)
                kind = "owned"
            self._submit_at(at, target, tx, kind)

    def _submit_at(self, at: int, target: int, tx: Transaction, kind: str) -> None:
        self._submitted.setdefault(tx.id, (at, kind))
        self.push(at, Event(EventKind.SUBMIT, target, tx=tx))

    # ---- event handlers --------------------------------------------------------------

    def _apply_fault(self, fault: FaultSpec) -> None:
        index = fault.authority
        self._trace("fault", index, fault.label())
        logger.info("fault %s at %d ms", fault.label(), self.now, extra={"fault": fault.label()})
        if fault.kind == "crash":
            self.crashed.add(index)
        elif fault.kind == "mute":
            self.muted.add(index)
        elif fault.kind == "equivocate":
            self.equivocators[index] = fault.strategy
        elif fault.kind == "restart" and index not in self.crashed:
            self.validators[index] = Validator.recover(
                self.wals[index],
                index,
                self.committee,
                settings=self.settings,
                decider=self.decider,
                schedule=self.schedule,
                signer=self.signer,
                clock_skew_ms=self.skews[index],
                commits_per_epoch=self.config.commits_per_epoch,
                max_rounds=self.config.max_rounds,
            )

    def _serve_sync(self, event: Event) -> None:
        peer = event.target
        requester = event.origin
        assert requester is not None
        validator = self.validators[peer]
        unserved = []
        for ref in event.refs:
            block = None
            if ref in validator.dag:
                block = validator.dag.get(ref)
            elif ref in validator.suspended:
                block = validator.suspended[ref][0]
            elif ref in validator.future:
                block = validator.future[ref][0]
            if block is None or peer in self.muted:
                unserved.append(ref)
            else:
                self.send(peer, requester, block, self._sync_rng[peer])
        if unserved:
            self._forward_sync(requester, tuple(unserved), peer, event.hops + 1)

    def _forward_sync(self, requester: int, refs: Tuple[BlockRef, ...], tried: int, hops: int) -> None:
        if hops >= self.config.n:
            for ref in refs:
                self.validators[requester].forget_request(ref)
            return
        peer = (tried + 1) % self.config.n
        if peer == requester:
            peer = (peer + 1) % self.config.n
        delay = self.latency(requester, peer, self.now, self._sync_rng[requester])
        self.messages += 1
        self.push(
            self.now + delay,
            Event(EventKind.SYNC_REQUEST, peer, origin=requester, refs=refs, hops=hops),
        )

    def _dispatch(self, event: Event, touched: Set[int]) -> None:
        index = event.target
        if event.kind == EventKind.FAULT:
            assert event.fault is not None
            self._apply_fault(event.fault)
            return
        if index in self.crashed:
            if event.kind == EventKind.SYNC_REQUEST:
                assert event.origin is not None
                self._forward_sync(event.origin, event.refs, index, event.hops + 1)
            return
        validator = self.validators[index]
        if event.kind == EventKind.START:
            touched.add(index)
        elif event.kind == EventKind.DELIVER:
            assert event.block is not None
            self._trace("deliver", index, f"{event.block.reference.short()} from {event.origin}")
            validator.on_block(event.block, self.now, event.origin)
            touched.add(index)
        elif event.kind == EventKind.WAKE:
            self._wakeups[index].discard(self.now)
            validator.wake(self.now)
            touched.add(index)
        elif event.kind == EventKind.TIMEOUT:
            self._deadlines[index].discard(self.now)
            self._trace("timeout", index)
            touched.add(index)
        elif event.kind == EventKind.SUBMIT:
            assert event.tx is not None
            if not validator.submit(event.tx, self.now):
                self.bounced += 1
        elif event.kind == EventKind.SYNC_REQUEST:
            self._serve_sync(event)

    def _step(self, index: int) -> None:
        validator = self.validators[index]
        while True:
            for record in validator.try_commit(self.now):
                self._trace("commit", index, f"#{record.index} {record.leader.short()}")
            block = validator.maybe_advance_round(self.now)
            if block is None:
                break
            self._trace("propose", index, block.reference.short())
            self.broadcast(index, block)

        requests = validator.take_sync_requests()
        if index in self.muted:
            requests = {}
        for peer, refs in requests.items():
            delay = self.latency(index, peer, self.now, self._sync_rng[index])
            self.messages += 1
            self.push(
                self.now + delay,
                Event(EventKind.SYNC_REQUEST, peer, origin=index, refs=tuple(refs)),
            )
        deadline = validator.timeout_deadline
        if deadline is not None and deadline > self.now and deadline not in self._deadlines[index]:
            self._deadlines[index].add(deadline)
            self.push(deadline, Event(EventKind.TIMEOUT, index))
        for at in validator.take_wakeups():
            at = max(at, self.now + 1)
            if at not in self._wakeups[index]:
                self._wakeups[index].add(at)
                self.push(at, Event(EventKind.WAKE, index))

    def _resubmit_equivocated(self) -> None:
        if not self._pairs or not self.config.workload.resubmit_equivocated:
            return
        for index in sorted(self.validators):
            if index in self.crashed or index in self.equivocators:
                continue
            for report in self.validators[index].fastpath.closed_epochs:
                if report.epoch in self._closed_handled:
                    continue
                self._closed_handled.add(report.epoch)
                done = set(report.finalized)
                for pair in self._pairs:
                    if pair.resubmitted or self._submitted[pair.first.id][0] > self.now:
                        continue
                    if pair.first.id in done or pair.second.id in done:
                        continue
                    pair.resubmitted = True
                    self._trace("resubmit", index, pair.first.short_id())
                    for target in range(self.config.n):
                        self.push(self.now + 1, Event(EventKind.SUBMIT, target, tx=pair.first))

    # ---- main loop -----------------------------------------------------------------

    def run(self) -> SimResult:
        self._schedule_faults()
        self._schedule_workload(self.config.workload)
        for index in range(self.config.n):
            self.push(0, Event(EventKind.START, index))

        while self._heap:
            time = self._heap[0][0]
            if time > self.config.duration_ms:
                break
            self.now = time
            touched: Set[int] = set()
            while self._heap and self._heap[0][0] == time:
                _, _, event = heapq.heappop(self._heap)
                self._dispatch(event, touched)
            for index in sorted(touched):
                if index not in self.crashed:
                    self._step(index)
            self._resubmit_equivocated()

        logger.info(
            "run finished at %d ms",
            self.now,
            extra={"seed": self.config.seed, "messages": self.messages, "end_time": self.now},
        )
        return SimResult(
            config=self.config,
            metrics=self._collect_metrics(),
            validators=self.validators,
            trace=list(self.trace),
            checked=[i for i in range(self.config.n) if i not in self.equivocators],
            crashed=set(self.crashed),
        )

    # ---- metrics -------------------------------------------------------------------

    def _collect_metrics(self) -> Metrics:
        metrics = Metrics(
            blocks_per_round=dict(sorted(self.blocks_per_round.items())),
            bounced_transactions=self.bounced,
            messages=self.messages,
            end_time=self.now,
        )
        rejections: Counter = Counter()
        honest = [i for i in range(self.config.n) if i not in self.equivocators]
        for index in honest:
            validator = self.validators[index]
            rejections.update(validator.rejections)
            for key in sorted(validator.decisions):
                decision = validator.decisions[key]
                status = decision.status
                latency = None
                if status.is_commit:
                    leader = validator.dag.get(status.block)  # type: ignore[arg-type]
                    latency = decision.decided_at - leader.timestamp
                metrics.slots.append(
                    SlotMetric(
                        validator=index,
                        round=status.slot.round,
                        offset=status.slot.offset,
                        authority=status.slot.authority,
                        status=status.kind,
                        direct=status.direct,
                        depth=decision.depth,
                        decided_at=decision.decided_at,
                        commit_latency_ms=latency,
                    )
                )
        metrics.rejections = dict(sorted(rejections.items()))

        reference = next((i for i in honest if i not in self.crashed), None)
        if reference is not None:
            per_round: Counter = Counter(
                record.leader.round for record in self.validators[reference].commits
            )
            metrics.commits_per_round = dict(sorted(per_round.items()))

        by_id: Dict[bytes, TxMetric] = {
            tx_id: TxMetric(tx_id.hex()[:16], kind, at)
            for tx_id, (at, kind) in self._submitted.items()
        }
        for index in honest:
            fastpath = self.validators[index].fastpath
            for time, change in self.validators[index].tx_changes:
                metric = by_id.get(change.tx_id)
                if metric is None:
                    continue
                tally = fastpath.tallies.get((change.epoch, change.tx_id))
                included = tally.inclusion_round if tally is not None else None
                rounds = None
                if change.block_round is not None and included is not None:
                    rounds = change.block_round - included
                if change.status == TxStatus.EXECUTED:
                    if metric.executed_at is None or time < metric.executed_at:
                        metric.executed_at, metric.executed_rounds = time, rounds
                elif change.status == TxStatus.FINALIZED:
                    if metric.finalized_at is None or time < metric.finalized_at:
                        metric.finalized_at, metric.finalized_rounds = time, rounds
                    metric.status = TxStatus.FINALIZED.value
                elif metric.status != TxStatus.FINALIZED.value:
                    metric.status = change.status.value
        metrics.transactions = sorted(by_id.values(), key=lambda m: (m.submitted_at, m.tx_id))
        return metrics


def run(config: SimConfig) -> SimResult:
    """
    Run one simulation to completion.

    Args:
        config: Validated SimConfig

    Returns:
        SimResult with metrics, every validator's final state and the trace tail

    Raises:
        SimulationError: the fault list cannot be acted out (see check_faults)
    """
    logger.info(
        "starting run",
        extra={"seed": config.seed, "n": config.n, "faults": [f.label() for f in config.faults]},
    )
    return Simulation(config).run()

def _fits(faults: List[FaultSpec], n: int, allow_beyond_f: bool) -> bool:
    if any(fault.authority >= n for fault in faults):
        return False
    faulty = {fault.authority for fault in faults if fault.counts_against_f}
    return allow_beyond_f or len(faulty) <= (n - 1) // 3


def random_config(
    seed: int,
    base: Optional[SimConfig] = None,
    faults: Optional[List[FaultSpec]] = None,
    gst_ms: Optional[int] = None,
    delta_ms: Optional[int] = None,
) -> SimConfig:
    """
    A randomized but valid config for safety fuzzing.

    Up to f faulty authorities: crashes at random times and at most one
    split-view equivocator, plus random latencies, GST, proposer count,
    wave length, clock skew and a conflicting workload.

    faults, gst_ms and delta_ms replace the drawn values when given. With
    fixed faults the committee size is drawn among the sizes that can hold
    them.

    Raises:
        ConfigError: no committee size fits the fixed faults
    """
    base = base or SimConfig()
    rng = stream(seed, Purpose.FUZZ)
    sizes = [4, 7]
    if faults is not None:
        sizes = [size for size in sizes if _fits(faults, size, base.allow_beyond_f)]
        if not sizes:
            labels = ", ".join(fault.label() for fault in faults)
            raise ConfigError(f"faults [{labels}] do not fit a committee of 4 or 7")
    n = int(rng.choice(sizes))
    f = (n - 1) // 3
    low = int(rng.integers(10, 100))
    high = low + int(rng.integers(0, 400))
    authorities = [int(a) for a in rng.permutation(n)]
    drawn: List[FaultSpec] = []
    budget = int(rng.integers(0, f + 1))
    if budget and rng.random() < 0.5:
        drawn.append(FaultSpec(authority=authorities.pop(), kind="equivocate", strategy="split-views"))
        budget -= 1
    for _ in range(budget):
        drawn.append(
            FaultSpec(authority=authorities.pop(), kind="crash", at_ms=int(rng.integers(0, 5000)))
        )
    if rng.random() < 0.3:
        drawn.append(
            FaultSpec(authority=authorities.pop(), kind="restart", at_ms=int(rng.integers(1, 5000)))
        )
    workload = WorkloadConfig(
        rate_per_s=float(rng.choice([0.0, 20.0, 50.0])),
        until_ms=6000,
        conflict_rate=float(rng.choice([0.0, 0.2])),
        mixed_fraction=0.1,
        shared_fraction=0.1,
    )
    drawn_gst = int(rng.choice([0, 1000, 3000]))
    return apply_overrides(
        base,
        seed=seed,
        n=n,
        latency=LatencyModel(min_ms=low, max_ms=high),
        gst_ms=drawn_gst if gst_ms is None else gst_ms,
        delta_ms=high + 100 if delta_ms is None else delta_ms,
        max_rounds=int(rng.integers(12, 25)),
        num_of_proposers=int(rng.integers(1, n + 1)),
        wave_length=int(rng.choice([3, 4])),
        schedule=str(rng.choice(["round-robin", "fixed"])),
        max_clock_skew_ms=int(rng.choice([0, 50])),
        commits_per_epoch=int(rng.choice([4, 8])),
        faults=drawn if faults is None else faults,
        workload=workload,
        duration_ms=60_000,
    )
