"""
Run Output

Writes what a simulation produced so you can look at it after the fact.

Commit logs and metrics go out as json-lines (one JSON object per line,
easy to grep or load with pandas) or csv. Commit log rows carry full block
references, so read_commit_log() gives back the exact CommitRecords.

DAG views go out as Graphviz DOT. Render one with:

    dot -Tsvg view.dot -o view.svg

Committed leaders are filled green, skipped leaders red, and blocks with
the epoch-change bit get a double border.
"""
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional
import csv
import json

from dagbft.core.block import BlockRef
from dagbft.core.committer import CommitRecord, SlotStatus
from dagbft.core.dag import DagState
from dagbft.core.simulator import SimResult
from dagbft.errors import ConfigError

FORMATS = ("json-lines", "csv")


def _write_rows(path: Path, rows: List[Dict[str, Any]], fmt: str) -> Path:
    if fmt not in FORMATS:
        raise ConfigError(f"unknown output format '{fmt}' (use {' or '.join(FORMATS)})")
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "json-lines":
        path = path.with_suffix(".jsonl")
        with open(path, "w", encoding="utf-8") as handle:
            for row in rows:
                handle.write(json.dumps(row, sort_keys=True) + "\n")
        return path

    path = path.with_suffix(".csv")
    columns: List[str] = []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow(
                {k: json.dumps(v) if isinstance(v, (list, dict)) else v for k, v in row.items()}
            )
    return path


def commit_rows(validator: int, commits: Iterable[CommitRecord]) -> List[Dict[str, Any]]:
    """One row per record, blocks as full references with hex digests."""
    return [{"validator": validator, **record.to_dict()} for record in commits]


def write_commit_log(path: Path, validator: int, commits: Iterable[CommitRecord], fmt: str) -> Path:
    """One row per commit record."""
    return _write_rows(Path(path), commit_rows(validator, commits), fmt)


def read_commit_log(path: Path) -> List[CommitRecord]:
    """
    Load a commit log written by write_commit_log (.jsonl or .csv).

    Raises:
        ConfigError: unknown file suffix
    """
    path = Path(path)
    if path.suffix == ".jsonl":
        with open(path, encoding="utf-8") as handle:
            rows = [json.loads(line) for line in handle if line.strip()]
    elif path.suffix == ".csv":
        with open(path, encoding="utf-8", newline="") as handle:
            rows = [
                {**row, "leader": json.loads(row["leader"]), "blocks": json.loads(row["blocks"])}
                for row in csv.DictReader(handle)
            ]
    else:
        raise ConfigError(f"{path}: not a commit log (.jsonl or .csv)")
    return [CommitRecord.from_dict(row) for row in rows]


def write_metrics(path: Path, result: SimResult, fmt: str) -> Path:
    """Slot decisions, transactions and per-round counts as one table."""
    metrics = result.metrics
    rows: List[Dict[str, Any]] = []
    for slot in metrics.slots:
        rows.append({"record": "slot", **slot.to_dict()})
    for tx in metrics.transactions:
        rows.append({"record": "tx", **tx.to_dict()})
    for round_, count in metrics.blocks_per_round.items():
        rows.append({"record": "blocks", "round": round_, "count": count})
    for round_, count in metrics.commits_per_round.items():
        rows.append({"record": "commits", "round": round_, "count": count})
    for reason, count in metrics.rejections.items():
        rows.append({"record": "rejected", "reason": reason, "count": count})
    rows.append({"record": "summary", "seed": result.config.seed, **metrics.summary()})
    return _write_rows(Path(path), rows, fmt)


def write_run(out_dir: Path, result: SimResult, fmt: str = "json-lines") -> List[Path]:
    """
    Write everything a sim run produced under out_dir.

    Returns:
        Paths of the files written
    """
    out_dir = Path(out_dir)
    seed = result.config.seed
    written = [write_metrics(out_dir / f"metrics-{seed}", result, fmt)]
    for index, commits in sorted(result.commit_logs.items()):
        written.append(write_commit_log(out_dir / f"commits-{seed}-v{index}", index, commits, fmt))
    return written


COMMITTED_FILL = "#c8e6c9"
SKIPPED_FILL = "#ffcdd2"


def skipped_leaders(dag: DagState, statuses: Iterable[SlotStatus]) -> List[BlockRef]:
    """Proposals present in dag for slots decided ToSkip."""
    refs: List[BlockRef] = []
    for status in statuses:
        if status.is_skip:
            slot = status.slot
            refs.extend(block.reference for block in dag.slot_blocks(slot.authority, slot.round))
    return refs


def to_dot(
    dag: DagState,
    highlight: Optional[Iterable[BlockRef]] = None,
    labels: Optional[Dict[BlockRef, str]] = None,
    skipped: Optional[Iterable[BlockRef]] = None,
) -> str:
    """
    Render a DAG as Graphviz DOT, one rank per round.

    Args:
        dag: The view to draw
        highlight: Blocks filled green (usually committed leaders)
        labels: Node labels to use instead of the short reference
        skipped: Blocks filled red (leaders whose slot was skipped)
    """
    marked = set(highlight or ())
    passed_over = set(skipped or ()) - marked
    lines = ["digraph dag {", "  rankdir=BT;", "  node [shape=box, fontname=monospace];"]
    names: Dict[BlockRef, str] = {}
    for block in dag:
        ref = block.reference
        names[ref] = f"b{ref.author}_{ref.round}_{ref.digest.hex()[:8]}"
    for round_ in range(0, dag.highest_accepted_round + 1):
        members = [ref for ref in dag.refs_at(round_)]
        if not members:
            continue
        lines.append("  { rank=same; " + " ".join(names[ref] for ref in members) + "; }")
    for block in dag:
        ref = block.reference
        label = (labels or {}).get(ref) or dag.label(ref)
        style = ""
        if ref in marked:
            style = f', style=filled, fillcolor="{COMMITTED_FILL}"'
        elif ref in passed_over:
            style = f', style=filled, fillcolor="{SKIPPED_FILL}"'
        if block.epoch_change_bit:
            style += ", peripheries=2"
        lines.append(f'  {names[ref]} [label="{label}"{style}];')
    for block in dag:
        for parent in block.parents:
            lines.append(f"  {names[block.reference]} -> {names[parent]};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def write_dot(path: Path, dag: DagState, **kwargs: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(to_dot(dag, **kwargs), encoding="utf-8")
    return path
