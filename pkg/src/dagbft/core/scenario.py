"""
Scenario files: hand-written DAGs for tests.

A .dag file is line oriented. `#` starts a comment.

    committee 4
    proposers 4
    wave-length 3
    schedule fixed

    block P0 author=A0 round=1 parents=[G0, G1, G2, G3]
    block B0 author=A0 round=2 parents=* tx=[T1:7.0] ts=5
    block B1 author=A1 round=2 parents=[P1, P0, P3] votes=[T1] ecbit
    block X  author=A2 round=2 parents=[P2] invalid-expected

    expect slot A0@1 = commit
    expect sequence = [P0, B0]

Genesis blocks are named G0..G{n-1}. `parents=*` means the author's
previous block followed by every declared block of the round below.
Transactions are `NAME:OBJ.VER+OBJ.VER`, with `!shared` for shared inputs
(`T9:!shared` is shared-only); later blocks repeat a transaction by bare
name. Votes name a transaction, `-NAME` for a reject vote; the vote points
at the lowest (round, author) block in the voter's history that includes it.

Every block also carries a shared-only transaction with payload
b"label:" + name, so two declarations for the same (author, round) are two
different blocks: that is how equivocations are written.
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Set, Tuple
import re

from dagbft.core.block import Block, BlockRef, ObjectRef, Transaction, TxVote
from dagbft.core.committee import Committee
from dagbft.core.committer import Committer, DeciderConfig, LeaderSchedule, SlotStatus
from dagbft.core.dag import DagState, RejectReason, verify_block
from dagbft.errors import ConfigError, ScenarioBuildError, ScenarioParseError
from dagbft.logs import get_logger

logger = get_logger(__name__)

STATUSES = ("commit", "skip", "undecided")
_TOKEN = re.compile(r"[\w-]+=\[[^\]]*\]|\[[^\]]*\]|\S+")
_NAME = re.compile(r"^[A-Za-z_][\w-]*$")
_AUTHOR = re.compile(r"^A(\d+)$")
_SLOT = re.compile(r"^A(\d+)@(\d+)$")
_OBJECT = re.compile(r"^(\d+)\.(\d+)$")


@dataclass(frozen=True)
class TxSpec:
    """A transaction mention; declared=False means a bare reuse by name."""

    name: str
    inputs: Tuple[ObjectRef, ...] = ()
    shared: bool = False
    declared: bool = True

    def render(self) -> str:
        if not self.declared:
            return self.name
        objects = "+".join(f"{obj}.{version}" for obj, version in self.inputs)
        return f"{self.name}:{objects}{'!shared' if self.shared else ''}"

    def transaction(self) -> Transaction:
        return Transaction(self.inputs, self.shared, b"tx:" + self.name.encode())


@dataclass(frozen=True)
class VoteSpec:
    tx: str
    accept: bool = True

    def render(self) -> str:
        return self.tx if self.accept else f"-{self.tx}"


@dataclass(frozen=True)
class BlockSpec:
    name: str
    author: int
    round: int
    parents: Optional[Tuple[str, ...]] = None  # None = "*"
    timestamp: Optional[int] = None
    epoch: Optional[int] = None
    transactions: Tuple[TxSpec, ...] = ()
    votes: Tuple[VoteSpec, ...] = ()
    ecbit: bool = False
    invalid_expected: bool = False
    line: int = field(default=0, compare=False)

    def render(self) -> str:
        parts = [f"block {self.name}", f"author=A{self.author}", f"round={self.round}"]
        parts.append("parents=*" if self.parents is None else f"parents=[{', '.join(self.parents)}]")
        if self.timestamp is not None:
            parts.append(f"ts={self.timestamp}")
        if self.epoch is not None:
            parts.append(f"epoch={self.epoch}")
        if self.transactions:
            parts.append(f"tx=[{', '.join(tx.render() for tx in self.transactions)}]")
        if self.votes:
            parts.append(f"votes=[{', '.join(v.render() for v in self.votes)}]")
        if self.ecbit:
            parts.append("ecbit")
        if self.invalid_expected:
            parts.append("invalid-expected")
        return " ".join(parts)


@dataclass(frozen=True)
class SlotExpectation:
    authority: int
    round: int
    status: str
    line: int = field(default=0, compare=False)


@dataclass
class Scenario:
    """Parsed contents of a scenario file."""

    committee: int = 4
    proposers: int = 2
    wave_length: int = 3
    schedule: str = "round-robin"
    blocks: List[BlockSpec] = field(default_factory=list)
    slot_expectations: List[SlotExpectation] = field(default_factory=list)
    sequence: Optional[List[str]] = None


@dataclass
class BuiltScenario:
    """A scenario turned into a DAG."""

    scenario: Scenario
    dag: DagState
    refs: Dict[str, BlockRef]
    rejected: Dict[str, RejectReason]
    committee: Committee
    decider: DeciderConfig
    schedule: LeaderSchedule

    def committer(self) -> Committer:
        return Committer(self.committee, self.decider, self.schedule)

    def name_of(self, ref: BlockRef) -> str:
        return self.dag.label(ref)


@dataclass
class ScenarioReport:
    """Differences between a scenario's expectations and the committer."""

    statuses: List[SlotStatus]
    sequence: List[str]
    mismatches: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.mismatches


# ---- parsing ---------------------------------------------------------------------------


class _Parser:
    def __init__(self, text: str, source: Optional[str]):
        self.text = text
        self.source = source
        self.scenario = Scenario()
        self.names: Set[str] = set()
        self.tx_names: Set[str] = set()
        self.line = 0
        self.seen_block = False

    def error(self, message: str, column: int = 1) -> ScenarioParseError:
        return ScenarioParseError(message, self.line, column, self.source)

    def parse(self) -> Scenario:
        for self.line, raw in enumerate(self.text.splitlines(), start=1):
            content = raw.split("#", 1)[0].rstrip()
            if not content.strip():
                continue
            tokens = [(m.group(), m.start() + 1) for m in _TOKEN.finditer(content)]
            head = tokens[0][0]
            if head == "block":
                self.seen_block = True
                self._block(tokens)
            elif head == "expect":
                self._expect(tokens)
            elif head in ("committee", "proposers", "wave-length", "schedule"):
                self._directive(tokens)
            else:
                raise self.error(f"unknown statement '{head}'", tokens[0][1])
        return self.scenario

    def _int(self, token: str, column: int, what: str) -> int:
        if not token.isdigit():
            raise self.error(f"{what} must be a non-negative integer, got '{token}'", column)
        return int(token)

    def _directive(self, tokens: List[Tuple[str, int]]) -> None:
        head, column = tokens[0]
        if len(tokens) != 2:
            raise self.error(f"'{head}' takes exactly one value", column)
        if self.seen_block:
            raise self.error(f"'{head}' must come before the first block", column)
        value, value_column = tokens[1]
        if head == "schedule":
            if value not in ("round-robin", "fixed"):
                raise self.error(f"unknown schedule '{value}'", value_column)
            self.scenario.schedule = value
            return
        number = self._int(value, value_column, head)
        if head == "committee":
            self.scenario.committee = number
        elif head == "proposers":
            self.scenario.proposers = number
        else:
            self.scenario.wave_length = number

    def _list(self, value: str, column: int) -> List[str]:
        if not (value.startswith("[") and value.endswith("]")):
            raise self.error("expected a [list]", column)
        inner = value[1:-1].strip()
        return [item.strip() for item in inner.split(",")] if inner else []

    def _known(self, name: str, column: int) -> str:
        if name not in self.names and not self._is_genesis(name):
            raise self.error(f"undeclared block '{name}'", column)
        return name

    def _is_genesis(self, name: str) -> bool:
        match = re.fullmatch(r"G(\d+)", name)
        return match is not None and int(match.group(1)) < self.scenario.committee

    def _tx(self, item: str, column: int) -> TxSpec:
        if ":" not in item:
            if item not in self.tx_names:
                raise self.error(f"undeclared transaction '{item}'", column)
            return TxSpec(item, declared=False)
        name, body = item.split(":", 1)
        if not _NAME.match(name):
            raise self.error(f"bad transaction name '{name}'", column)
        if name in self.tx_names:
            raise self.error(f"transaction '{name}' declared twice", column)
        shared = body.endswith("!shared")
        if shared:
            body = body[: -len("!shared")]
        inputs = []
        for obj in filter(None, body.split("+")):
            match = _OBJECT.match(obj)
            if match is None:
                raise self.error(f"bad object '{obj}' (want ID.VERSION)", column)
            inputs.append((int(match.group(1)), int(match.group(2))))
        if not inputs and not shared:
            raise self.error(f"transaction '{name}' has no inputs", column)
        self.tx_names.add(name)
        return TxSpec(name, tuple(inputs), shared)

    def _block(self, tokens: List[Tuple[str, int]]) -> None:
        if len(tokens) < 2:
            raise self.error("block needs a name", tokens[0][1])
        name, name_column = tokens[1]
        if not _NAME.match(name) or self._is_genesis(name):
            raise self.error(f"bad block name '{name}'", name_column)
        if name in self.names:
            raise self.error(f"block '{name}' declared twice", name_column)

        fields: Dict[str, object] = {}
        for token, column in tokens[2:]:
            if token in ("ecbit", "invalid-expected"):
                fields[token] = True
                continue
            if "=" not in token:
                raise self.error(f"unexpected '{token}'", column)
            key, value = token.split("=", 1)
            value_column = column + len(key) + 1
            if key == "author":
                match = _AUTHOR.match(value)
                if match is None:
                    raise self.error(f"author must look like A0, got '{value}'", value_column)
                fields["author"] = int(match.group(1))
            elif key in ("round", "ts", "epoch"):
                fields[key] = self._int(value, value_column, key)
            elif key == "parents":
                if value == "*":
                    fields["parents"] = None
                else:
                    fields["parents"] = tuple(
                        self._known(p, value_column) for p in self._list(value, value_column)
                    )
            elif key == "tx":
                fields["tx"] = tuple(self._tx(t, value_column) for t in self._list(value, value_column))
            elif key == "votes":
                votes = []
                for item in self._list(value, value_column):
                    accept = not item.startswith("-")
                    tx_name = item.lstrip("-")
                    if tx_name not in self.tx_names:
                        raise self.error(f"vote for undeclared transaction '{tx_name}'", value_column)
                    votes.append(VoteSpec(tx_name, accept))
                fields["votes"] = tuple(votes)
            else:
                raise self.error(f"unknown block attribute '{key}'", column)

        for required in ("author", "round", "parents"):
            if required not in fields:
                raise self.error(f"block '{name}' is missing {required}=", name_column)
        self.names.add(name)
        self.scenario.blocks.append(
            BlockSpec(
                name=name,
                author=fields["author"],  # type: ignore[arg-type]
                round=fields["round"],  # type: ignore[arg-type]
                parents=fields["parents"],  # type: ignore[arg-type]
                timestamp=fields.get("ts"),  # type: ignore[arg-type]
                epoch=fields.get("epoch"),  # type: ignore[arg-type]
                transactions=fields.get("tx", ()),  # type: ignore[arg-type]
                votes=fields.get("votes", ()),  # type: ignore[arg-type]
                ecbit=bool(fields.get("ecbit", False)),
                invalid_expected=bool(fields.get("invalid-expected", False)),
                line=self.line,
            )
        )

    def _expect(self, tokens: List[Tuple[str, int]]) -> None:
        words = [t for t, _ in tokens]
        if len(words) >= 4 and words[1] == "slot" and words[3] == "=":
            match = _SLOT.match(words[2])
            if match is None:
                raise self.error(f"slot must look like A0@1, got '{words[2]}'", tokens[2][1])
            if len(words) != 5 or words[4] not in STATUSES:
                column = tokens[4][1] if len(tokens) > 4 else tokens[3][1]
                raise self.error(f"status must be one of {', '.join(STATUSES)}", column)
            self.scenario.slot_expectations.append(
                SlotExpectation(int(match.group(1)), int(match.group(2)), words[4], self.line)
            )
            return
        if len(words) == 4 and words[1] == "sequence" and words[2] == "=":
            column = tokens[3][1]
            self.scenario.sequence = [self._known(n, column) for n in self._list(words[3], column)]
            return
        raise self.error("expected 'expect slot A<i>@<r> = STATUS' or 'expect sequence = [...]'")


def parse(text: str, source: Optional[str] = None) -> Scenario:
    """
    Parse scenario text.

    Raises:
        ScenarioParseError: with the line and column of the first problem
    """
    return _Parser(text, source).parse()


def load_scenario(path: Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ConfigError(f"scenario file not found: {path}") from exc
    return parse(text, source=str(path))


def format_scenario(scenario: Scenario) -> str:
    """Canonical text of a scenario; parse(format_scenario(s)) == s."""
    lines = [
        f"committee {scenario.committee}",
        f"proposers {scenario.proposers}",
        f"wave-length {scenario.wave_length}",
        f"schedule {scenario.schedule}",
        "",
    ]
    lines += [block.render() for block in scenario.blocks]
    if scenario.slot_expectations or scenario.sequence is not None:
        lines.append("")
    for expectation in scenario.slot_expectations:
        lines.append(f"expect slot A{expectation.authority}@{expectation.round} = {expectation.status}")
    if scenario.sequence is not None:
        lines.append(f"expect sequence = [{', '.join(scenario.sequence)}]")
    return "\n".join(lines) + "\n"


# ---- building ---------------------------------------------------------------------------


def _resolve_parents(
    spec: BlockSpec, declared: List[BlockSpec], refs: Dict[str, BlockRef], n: int
) -> List[str]:
    if spec.parents is not None:
        return list(spec.parents)
    own = f"G{spec.author}"
    best = -1
    for other in declared:
        if other.author == spec.author and best < other.round < spec.round and other.name in refs:
            own, best = other.name, other.round
    names = [own]
    for other in declared:
        if other.round == spec.round - 1 and other.name in refs and other.name not in names:
            names.append(other.name)
    if spec.round == 1:
        names += [f"G{i}" for i in range(n) if f"G{i}" not in names]
    return names


def build(scenario: Scenario) -> BuiltScenario:
    """
    Materialize a scenario as a DagState.

    Blocks are checked with verify_block at a clock equal to the largest
    timestamp in the file. A rejected block is fine only when it is marked
    invalid-expected; blocks built on it are rejected in turn.

    Raises:
        ScenarioBuildError: a block fails validity unexpectedly, or an
            invalid-expected block turns out valid
    """
    try:
        committee = Committee(scenario.committee)
        decider = DeciderConfig(wave_length=scenario.wave_length, num_of_proposers=scenario.proposers)
        decider.check_committee(committee)
        schedule = LeaderSchedule(committee.n, scenario.schedule)
    except Exception as exc:
        raise ScenarioBuildError(f"bad scenario header: {exc}") from exc

    dag = DagState.with_genesis(committee)
    refs: Dict[str, BlockRef] = {}
    for authority in committee.authorities:
        ref = dag.slot_blocks(authority, 0)[0].reference
        refs[f"G{authority}"] = ref
        dag.labels[ref] = f"G{authority}"

    for spec in scenario.blocks:
        if spec.author >= committee.n:
            raise ScenarioBuildError(f"line {spec.line}: author A{spec.author} outside committee")
    now = max([spec.timestamp if spec.timestamp is not None else spec.round for spec in scenario.blocks] + [0])

    transactions: Dict[str, Transaction] = {}
    rejected: Dict[str, RejectReason] = {}
    declared: List[BlockSpec] = []
    for spec in scenario.blocks:
        parent_names = _resolve_parents(spec, declared, refs, committee.n)
        declared.append(spec)
        reason: Optional[RejectReason] = None
        if any(name in rejected for name in parent_names):
            reason = RejectReason.PARENT_REJECTED
            block = None
        else:
            block = _make_block(spec, parent_names, refs, dag, transactions)
            verdict = verify_block(block, committee, now, dag)
            if not verdict.accepted:
                reason = verdict.reason or RejectReason.TIMESTAMP_TOO_FAR_FUTURE

        if reason is not None:
            if not spec.invalid_expected:
                raise ScenarioBuildError(f"line {spec.line}: block {spec.name} rejected ({reason.value})")
            rejected[spec.name] = reason
            logger.debug("scenario block %s rejected as expected: %s", spec.name, reason.value)
            continue
        if spec.invalid_expected:
            raise ScenarioBuildError(f"line {spec.line}: block {spec.name} was expected to be invalid")
        assert block is not None
        dag.add(block)
        refs[spec.name] = block.reference
        dag.labels[block.reference] = spec.name

    return BuiltScenario(scenario, dag, refs, rejected, committee, decider, schedule)


def _make_block(
    spec: BlockSpec,
    parent_names: List[str],
    refs: Dict[str, BlockRef],
    dag: DagState,
    transactions: Dict[str, Transaction],
) -> Block:
    parents = tuple(refs[name] for name in parent_names)
    parent_blocks = [dag.get(ref) for ref in parents]
    epoch = spec.epoch
    if epoch is None:
        epoch = max((p.epoch for p in parent_blocks), default=0)

    txs: List[Transaction] = []
    for tx_spec in spec.transactions:
        if tx_spec.declared:
            transactions[tx_spec.name] = tx_spec.transaction()
        txs.append(transactions[tx_spec.name])
    txs.append(Transaction((), True, b"label:" + spec.name.encode()))

    votes = []
    history = dag.ancestors(parents)
    for vote in spec.votes:
        tx = transactions[vote.tx]
        positions = [
            (ref, index)
            for ref, index in dag.tx_positions(tx.id)
            if ref in history
        ]
        if not positions:
            raise ScenarioBuildError(
                f"line {spec.line}: block {spec.name} votes for {vote.tx} outside its history"
            )
        ref, index = min(positions, key=lambda p: (p[0].sort_key(), p[1]))
        votes.append(TxVote(ref, index, vote.accept))

    return Block(
        author=spec.author,
        round=spec.round,
        epoch=epoch,
        parents=parents,
        transactions=tuple(txs),
        votes=tuple(votes),
        epoch_change_bit=spec.ecbit,
        timestamp=spec.timestamp if spec.timestamp is not None else spec.round,
    )


# ---- checking ---------------------------------------------------------------------------


def check_expectations(built: BuiltScenario) -> ScenarioReport:
    """
    Run the committer over the built DAG and compare with the expect lines.

    Slot statuses come from the full (untruncated) evaluation; the sequence
    is the leaders of the committable prefix.
    """
    committer = built.committer()
    statuses = committer.evaluate(built.dag, 0)
    decided = committer.try_decide(built.dag, 0)
    sequence = [built.name_of(s.block) for s in decided if s.is_commit and s.block is not None]
    report = ScenarioReport(statuses=statuses, sequence=sequence)

    by_slot = {(s.slot.authority, s.slot.round): s for s in statuses}
    for expectation in built.scenario.slot_expectations:
        label = f"A{expectation.authority}@{expectation.round}"
        if committer.find_slot(expectation.authority, expectation.round) is None:
            report.mismatches.append(f"line {expectation.line}: {label} is not a proposer slot")
            continue
        status = by_slot.get((expectation.authority, expectation.round))
        actual = status.kind if status is not None else "undecided"
        if actual != expectation.status:
            report.mismatches.append(
                f"line {expectation.line}: {label} expected {expectation.status}, got {actual}"
            )

    expected_sequence = built.scenario.sequence
    if expected_sequence is not None and expected_sequence != sequence:
        report.mismatches.append(
            f"sequence expected [{', '.join(expected_sequence)}], got [{', '.join(sequence)}]"
        )
    return report


def run_scenario(text: str, source: Optional[str] = None) -> ScenarioReport:
    """parse + build + check_expectations in one call."""
    return check_expectations(build(parse(text, source)))
