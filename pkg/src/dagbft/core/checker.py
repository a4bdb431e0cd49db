"""
Safety Checker

Did anything go wrong in a finished simulation? We answer that by laying
the honest validators' results side by side:

- every slot two validators both decided got the same decision
- commit logs are prefixes of one another and never repeat a block
- commit timestamps follow max(previous, leader timestamp)
- no (author, round) ever has two certified proposals
- conflicting owned-object transactions never both finalize, and a closed
  epoch leaves nothing merely executed

multi_view_check() returns a SafetyReport listing violations. The first
one comes with the tail of the event trace, so a failing fuzz seed can be
read without rerunning it.
"""
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Set, Tuple

from dagbft.core.block import Block, BlockRef
from dagbft.core.committer import CommitRecord, DeciderConfig
from dagbft.core.dag import DagState, is_certificate
from dagbft.core.fastpath import TxStatus
from dagbft.core.simulator import SimResult, TraceEntry
from dagbft.errors import DagIntegrityError
from dagbft.logs import get_logger

logger = get_logger(__name__)

TRACE_EXCERPT = 40


@dataclass(frozen=True)
class Violation:
    kind: str
    detail: str
    validators: Tuple[int, ...] = ()

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "detail": self.detail, "validators": list(self.validators)}


@dataclass
class SafetyReport:
    """Outcome of multi_view_check."""

    violations: List[Violation] = field(default_factory=list)
    trace_excerpt: List[TraceEntry] = field(default_factory=list)
    skipped: bool = False

    @property
    def clean(self) -> bool:
        return not self.violations

    @property
    def first(self) -> Optional[Violation]:
        return self.violations[0] if self.violations else None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "clean": self.clean,
            "skipped": self.skipped,
            "violations": [v.to_dict() for v in self.violations],
            "trace": [entry.to_dict() for entry in self.trace_excerpt],
        }


def check_slot_agreement(decisions: Dict[int, Dict[Tuple[int, int], Any]]) -> List[Violation]:
    """Two validators that both decided a slot decided it the same way."""
    found = []
    seen: Dict[Tuple[int, int], Tuple[int, Any]] = {}
    for index in sorted(decisions):
        for key, status in sorted(decisions[index].items()):
            outcome = (status.kind, status.block)
            if key not in seen:
                seen[key] = (index, outcome)
                continue
            other, expected = seen[key]
            if outcome != expected:
                found.append(
                    Violation(
                        "slot-agreement",
                        f"slot {key}: {expected[0]} at {other}, {outcome[0]} at {index}",
                        (other, index),
                    )
                )
    return found


def check_prefix(logs: Dict[int, List[CommitRecord]]) -> List[Violation]:
    """Every pair of commit logs agrees on their common prefix."""
    found = []
    ordered = sorted(logs)
    for i, left in enumerate(ordered):
        for right in ordered[i + 1 :]:
            for a, b in zip(logs[left], logs[right]):
                if a.leader != b.leader or a.committed_blocks != b.committed_blocks:
                    found.append(
                        Violation(
                            "prefix",
                            f"commit #{a.index}: {a.leader.short()} vs {b.leader.short()}",
                            (left, right),
                        )
                    )
                    break
    return found


def check_timestamps(logs: Dict[int, List[CommitRecord]], dags: Dict[int, DagState]) -> List[Violation]:
    """Commit timestamps never go down and follow max(previous, leader)."""
    found = []
    for index in sorted(logs):
        previous = 0
        for record in logs[index]:
            expected = max(previous, dags[index].get(record.leader).timestamp)
            if record.commit_timestamp != expected:
                found.append(
                    Violation(
                        "timestamp",
                        f"commit #{record.index}: {record.commit_timestamp} != {expected}",
                        (index,),
                    )
                )
                break
            previous = record.commit_timestamp
    return found


def check_duplicates(logs: Dict[int, List[CommitRecord]]) -> List[Violation]:
    found = []
    for index in sorted(logs):
        seen: Set[BlockRef] = set()
        for record in logs[index]:
            repeated = seen.intersection(record.committed_blocks)
            if repeated:
                found.append(
                    Violation("duplicate-commit", f"commit #{record.index} repeats a block", (index,))
                )
                break
            seen.update(record.committed_blocks)
    return found


def merge_views(dags: Iterable[DagState]) -> DagState:
    """Union of several views of the same committee."""
    views = list(dags)
    merged = views[0].copy()
    blocks: Dict[BlockRef, Block] = {}
    for view in views[1:]:
        for block in view:
            blocks.setdefault(block.reference, block)
    for ref in sorted(blocks, key=BlockRef.sort_key):
        if ref not in merged:
            try:
                merged.add(blocks[ref])
            except DagIntegrityError:
                logger.warning("block %s missing parents in merged view", ref.short())
    return merged


def check_unique_certificates(merged: DagState, wave_length: int) -> List[Violation]:
    """
    At most one block per (author, round) gathers 2f+1 certificates.

    Looks at every round that has a full decision round above it.
    """
    found = []
    committee = merged.committee
    waves = DeciderConfig(wave_length=wave_length)
    for round_ in range(1, merged.highest_accepted_round - wave_length + 2):
        decision = waves.decision_round_of(round_)
        for author in range(committee.n):
            proposals = merged.slot_blocks(author, round_)
            if len(proposals) < 2:
                continue
            certified = []
            for proposal in proposals:
                authors = {
                    block.author
                    for block in merged.blocks_at(decision)
                    if is_certificate(block, proposal, merged, committee)
                }
                if len(authors) >= committee.quorum:
                    certified.append(proposal.reference)
            if len(certified) > 1:
                found.append(
                    Violation("unique-certificate", f"A{author}@{round_} has {len(certified)} certified blocks")
                )
    return found


def check_fast_path(result: SimResult) -> List[Violation]:
    """
    No two conflicting transactions finalize; closed epochs hold nothing Executed.

    A finalized owned-object transaction from a closed epoch must also have
    a certificate block inside the committed history up to the close.
    """
    found = []
    finalized_by_input: Dict[Tuple[int, int], Tuple[bytes, int]] = {}
    for index in result.checked:
        fastpath = result.validators[index].fastpath
        for (epoch, tx_id), tally in sorted(fastpath.tallies.items()):
            if tally.status != TxStatus.FINALIZED:
                continue
            for obj in tally.tx.owned_inputs:
                holder = finalized_by_input.setdefault(obj, (tx_id, index))
                if holder[0] != tx_id:
                    found.append(
                        Violation(
                            "fast-path-conflict",
                            f"object {obj}: {holder[0].hex()[:8]} and {tx_id.hex()[:8]} finalized",
                            (holder[1], index),
                        )
                    )

        commits = result.validators[index].commits
        for report in fastpath.closed_epochs:
            committed: Set[BlockRef] = set()
            for record in commits[: report.commit_index + 1]:
                committed.update(record.committed_blocks)
            for tx_id in report.finalized:
                tally = fastpath.tallies[(report.epoch, tx_id)]
                if tally.tx.is_owned_only and tally.certificate_blocks.isdisjoint(committed):
                    found.append(
                        Violation(
                            "epoch-close",
                            f"epoch {report.epoch}: {tx_id.hex()[:8]} finalized without committed certificate",
                            (index,),
                        )
                    )
            for (epoch, tx_id), tally in fastpath.tallies.items():
                if epoch == report.epoch and tally.status == TxStatus.EXECUTED:
                    found.append(
                        Violation(
                            "epoch-close",
                            f"epoch {epoch}: {tx_id.hex()[:8]} still executed after close",
                            (index,),
                        )
                    )
    return found


def multi_view_check(result: SimResult) -> SafetyReport:
    """
    Run every cross-view safety check on a finished run.

    Runs that allow more than f faults are skipped (safety is not promised
    there) and come back as a clean report with skipped=True.
    """
    if result.config.allow_beyond_f:
        return SafetyReport(skipped=True)
    checked = result.checked
    validators = {index: result.validators[index] for index in checked}
    decisions = {
        index: {key: decision.status for key, decision in v.decisions.items()}
        for index, v in validators.items()
    }
    logs = {index: v.commits for index, v in validators.items()}
    dags = {index: v.dag for index, v in validators.items()}

    violations: List[Violation] = []
    violations += check_slot_agreement(decisions)
    violations += check_prefix(logs)
    violations += check_timestamps(logs, dags)
    violations += check_duplicates(logs)
    if dags:
        merged = merge_views(dags.values())
        violations += check_unique_certificates(merged, result.config.wave_length)
    violations += check_fast_path(result)

    report = SafetyReport(violations=violations)
    if violations:
        report.trace_excerpt = result.trace[-TRACE_EXCERPT:]
        logger.warning(
            "safety violation: %s",
            violations[0].detail,
            extra={"seed": result.config.seed, "kind": violations[0].kind, "count": len(violations)},
        )
    return report
