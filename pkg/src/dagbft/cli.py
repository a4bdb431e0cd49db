"""
dagbft - command line entry point

    dagbft sim       --config cfg.json --seed 7 --out runs/
    dagbft scenario  fixtures/walkthrough.dag
    dagbft fuzz      --seeds 1..1000 --workers 4 --out fuzz/
    dagbft export-dot fixtures/walkthrough.dag --out walkthrough.dot

Exit codes: 0 success, 1 expectation or safety violation, 2 usage error.
Every command prints a single summary line on stdout; logs go to stderr
and to <out>/dagbft.log.jsonl.
"""
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple
import json

import typer
from rich.console import Console
from rich.markup import escape
from rich.table import Table

from dagbft import __version__
from dagbft.config import (
    SimConfig,
    apply_overrides,
    default_sim_config,
    load_sim_config,
    parse_faults,
)
from dagbft.core.checker import SafetyReport, multi_view_check
from dagbft.core.export import FORMATS, skipped_leaders, to_dot, write_dot, write_run
from dagbft.core.scenario import build, check_expectations, load_scenario
from dagbft.core.simulator import SimResult, check_faults, random_config, run
from dagbft.errors import (
    ConfigError,
    DagBftError,
    ScenarioBuildError,
    ScenarioParseError,
    SimulationError,
)
from dagbft.logs import get_logger, setup_logging

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_USAGE = 2

app = typer.Typer(
    name="dagbft",
    help="DAG-based BFT consensus kernel: simulate, fuzz and replay scenario files",
    add_completion=False,
)

console = Console(soft_wrap=True)
err_console = Console(stderr=True)


def version_callback(value: bool) -> None:
    if value:
        console.print(f"[bold blue]dagbft[/bold blue] version [green]{__version__}[/green]")
        raise typer.Exit()


@app.callback()
def main(
    version: bool = typer.Option(
        None,
        "--version",
        help="Show version and exit",
        callback=version_callback,
        is_eager=True,
    ),
) -> None:
    """
    Uncertified-DAG consensus with a fast path for owned objects.

    Use 'sim' for one run, 'fuzz' for many, 'scenario' to check a .dag file.
    """


def usage_error(message: str) -> typer.Exit:
    err_console.print(f"[red]✗[/red] {escape(message)}")
    return typer.Exit(EXIT_USAGE)


def parse_seeds(text: str) -> List[int]:
    """
    Parse a seed list: "1..1000" (inclusive) or "3,7,11".

    Raises:
        ConfigError: malformed or empty
    """
    text = text.strip()
    try:
        if ".." in text:
            low, high = text.split("..", 1)
            seeds = list(range(int(low), int(high) + 1))
        else:
            seeds = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse seeds '{text}'") from exc
    if not seeds:
        raise ConfigError(f"seed list '{text}' is empty")
    if any(seed < 0 for seed in seeds):
        raise ConfigError("seeds must be non-negative")
    return seeds


def build_config(
    config: Optional[Path],
    seed: Optional[int] = None,
    faults: Optional[str] = None,
    gst: Optional[int] = None,
    delta: Optional[int] = None,
    leader_timeout: Optional[int] = None,
    proposers: Optional[int] = None,
    wave_length: Optional[int] = None,
    rounds: Optional[int] = None,
) -> SimConfig:
    """Config file (or defaults) with command-line overrides on top."""
    base = load_sim_config(config) if config is not None else default_sim_config()
    return apply_overrides(
        base,
        seed=seed,
        faults=parse_faults(faults) if faults is not None else None,
        gst_ms=gst,
        delta_ms=delta,
        leader_timeout_ms=leader_timeout,
        num_of_proposers=proposers,
        wave_length=wave_length,
        max_rounds=rounds,
    )


def write_violation(out: Path, result: SimResult, report: SafetyReport) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"violation-{result.config.seed}.json"
    payload = {"config": result.config.model_dump(), "report": report.to_dict()}
    path.write_text(json.dumps(payload, indent=2, default=str) + "\n", encoding="utf-8")
    return path


# Options shared by sim, fuzz and export-dot
ConfigOpt = typer.Option(None, "--config", "-c", help="Simulation config JSON")
FaultsOpt = typer.Option(None, "--faults", help='e.g. "2:crash@0,3:equivocate(split-views)"')
GstOpt = typer.Option(None, "--gst", help="Global stabilization time, ms")
DeltaOpt = typer.Option(None, "--delta", help="Post-GST delay bound, ms")
TimeoutOpt = typer.Option(None, "--leader-timeout", help="Leader timeout, ms")
ProposersOpt = typer.Option(None, "--proposers", help="Proposer slots per round")
WaveOpt = typer.Option(None, "--wave-length", help="Rounds per wave (>= 3)")
RoundsOpt = typer.Option(None, "--rounds", help="Stop proposing after this round")
VerboseOpt = typer.Option(False, "--verbose", help="Show info logs on stderr")


@app.command()
def sim(
    config: Optional[Path] = ConfigOpt,
    seed: Optional[int] = typer.Option(None, "--seed", "-s", help="Master seed"),
    out: Path = typer.Option(Path("out"), "--out", "-o", help="Output directory"),
    fmt: str = typer.Option("json-lines", "--format", help="json-lines or csv"),
    faults: Optional[str] = FaultsOpt,
    gst: Optional[int] = GstOpt,
    delta: Optional[int] = DeltaOpt,
    leader_timeout: Optional[int] = TimeoutOpt,
    proposers: Optional[int] = ProposersOpt,
    wave_length: Optional[int] = WaveOpt,
    rounds: Optional[int] = RoundsOpt,
    verbose: bool = VerboseOpt,
) -> None:
    """
    Run one simulation and write metrics and commit logs.

    Example:
      dagbft sim --seed 7 --faults "3:crash@0" --out runs/
    """
    if fmt not in FORMATS:
        raise usage_error(f"unknown format '{fmt}' (use {' or '.join(FORMATS)})")
    try:
        cfg = build_config(config, seed, faults, gst, delta, leader_timeout, proposers, wave_length, rounds)
        check_faults(cfg)
    except (ConfigError, SimulationError) as exc:
        raise usage_error(str(exc))

    setup_logging(out, verbose)
    result = run(cfg)
    write_run(out, result, fmt)
    report = multi_view_check(result)
    summary = result.metrics.summary()
    latency = summary["p50_commit_latency_ms"]
    console.print(
        f"seed={cfg.seed} n={cfg.n} commits={summary['commit']} skips={summary['skip']} "
        f"p50_commit_latency={'-' if latency is None else f'{latency:.0f}ms'} "
        f"finalized_tx={summary['finalized']}/{summary['transactions']} "
        f"violations={len(report.violations)} -> {out}"
    )
    if not report.clean:
        path = write_violation(out, result, report)
        err_console.print(f"[red]✗[/red] {report.first.detail} (details in {path})")  # type: ignore[union-attr]
        raise typer.Exit(EXIT_VIOLATION)


@app.command()
def scenario(
    path: Path = typer.Argument(..., help="Scenario .dag file"),
    verbose: bool = VerboseOpt,
) -> None:
    """
    Build a scenario file and check its expect lines.

    Example:
      dagbft scenario fixtures/walkthrough.dag
    """
    setup_logging(None, verbose)
    try:
        built = build(load_scenario(path))
    except (ScenarioParseError, ConfigError) as exc:
        raise usage_error(str(exc))
    except ScenarioBuildError as exc:
        err_console.print(f"[red]✗[/red] {escape(str(exc))}")
        raise typer.Exit(EXIT_VIOLATION)

    report = check_expectations(built)
    if verbose:
        table = Table(title=str(path))
        table.add_column("Slot", style="cyan")
        table.add_column("Status")
        table.add_column("Block")
        table.add_column("Rule", style="dim")
        for status in report.statuses:
            block = built.name_of(status.block) if status.block else "-"
            rule = "direct" if status.direct else "indirect"
            table.add_row(status.slot.label(), status.kind, block, rule)
        err_console.print(table)

    console.print(
        escape(
            f"{path.name}: {len(built.dag)} blocks, {len(report.statuses)} slots, "
            f"sequence [{', '.join(report.sequence)}], "
            f"{'ok' if report.ok else f'{len(report.mismatches)} mismatches'}"
        )
    )
    if not report.ok:
        for mismatch in report.mismatches:
            err_console.print(f"[red]✗[/red] {escape(mismatch)}")
        raise typer.Exit(EXIT_VIOLATION)


def _fuzz_one(seed: int, base: SimConfig, fixed: Dict[str, Any]) -> Tuple[SimResult, SafetyReport]:
    result = run(random_config(seed, base, **fixed))
    return result, multi_view_check(result)


@app.command()
def fuzz(
    seeds: str = typer.Option("1..100", "--seeds", help='Seed range "a..b" or list "1,5,9"'),
    config: Optional[Path] = ConfigOpt,
    out: Path = typer.Option(Path("fuzz-out"), "--out", "-o", help="Where violating seeds are written"),
    fmt: Optional[str] = typer.Option(
        None, "--format", help="Also write every run's metrics and commit logs (json-lines or csv)"
    ),
    faults: Optional[str] = FaultsOpt,
    gst: Optional[int] = GstOpt,
    delta: Optional[int] = DeltaOpt,
    workers: int = typer.Option(1, "--workers", "-w", min=1, help="Parallel runs"),
    verbose: bool = VerboseOpt,
) -> None:
    """
    Run randomized configs through the safety checker.

    --faults, --gst and --delta pin those values for every seed; the rest
    is drawn per seed. Stops at the first violating seed (lowest seed
    first) and writes its config and trace to <out>/violation-<seed>.json.

    Example:
      dagbft fuzz --seeds 1..1000 --workers 4
      dagbft fuzz --seeds 1..50 --faults "1:crash@2000" --gst 3000 --format csv
    """
    if fmt is not None and fmt not in FORMATS:
        raise usage_error(f"unknown format '{fmt}' (use {' or '.join(FORMATS)})")
    try:
        seed_list = parse_seeds(seeds)
        base = build_config(config, gst=gst, delta=delta)
        fixed: Dict[str, Any] = {
            "faults": parse_faults(faults) if faults is not None else None,
            "gst_ms": gst,
            "delta_ms": delta,
        }
        check_faults(random_config(seed_list[0], base, **fixed))
    except (ConfigError, SimulationError) as exc:
        raise usage_error(str(exc))

    setup_logging(out, verbose)
    checked = 0
    with console.status(f"[bold blue]Fuzzing {len(seed_list)} seeds...", spinner="dots"):
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for seed, (result, report) in zip(
                seed_list, pool.map(lambda s: _fuzz_one(s, base, fixed), seed_list)
            ):
                checked += 1
                if fmt is not None:
                    write_run(out / f"seed-{seed}", result, fmt)
                if report.clean:
                    continue
                path = write_violation(out, result, report)
                console.print(f"fuzz: seed {seed} violates {report.first.kind} -> {path}")  # type: ignore[union-attr]
                pool.shutdown(wait=False, cancel_futures=True)
                raise typer.Exit(EXIT_VIOLATION)
    console.print(f"fuzz: {checked} seeds clean")


@app.command("export-dot")
def export_dot(
    source: Optional[Path] = typer.Argument(None, help="Scenario .dag file (omit to simulate)"),
    out: Path = typer.Option(Path("dag.dot"), "--out", "-o", help="DOT file to write"),
    config: Optional[Path] = ConfigOpt,
    seed: Optional[int] = typer.Option(None, "--seed", "-s", help="Master seed"),
    faults: Optional[str] = FaultsOpt,
    rounds: Optional[int] = RoundsOpt,
    validator: int = typer.Option(0, "--validator", help="Whose view to draw after a simulation"),
    verbose: bool = VerboseOpt,
) -> None:
    """
    Write a DAG as Graphviz DOT, committed and skipped leaders filled in.

    Example:
      dagbft export-dot fixtures/walkthrough.dag --out walkthrough.dot
      dagbft export-dot --seed 3 --rounds 12 --validator 2 --out view2.dot
    """
    setup_logging(None, verbose)
    try:
        if source is not None:
            built = build(load_scenario(source))
            report = check_expectations(built)
            leaders = [built.refs[name] for name in report.sequence]
            skipped = skipped_leaders(built.dag, report.statuses)
            dot = to_dot(built.dag, highlight=leaders, skipped=skipped)
            out.parent.mkdir(parents=True, exist_ok=True)
            out.write_text(dot, encoding="utf-8")
            console.print(f"{source.name}: {len(built.dag)} blocks -> {out}")
            return
        cfg = build_config(config, seed, faults, rounds=rounds)
        check_faults(cfg)
    except (ScenarioParseError, ConfigError, SimulationError) as exc:
        raise usage_error(str(exc))
    except DagBftError as exc:
        err_console.print(f"[red]✗[/red] {escape(str(exc))}")
        raise typer.Exit(EXIT_VIOLATION)

    if not 0 <= validator < cfg.n:
        raise usage_error(f"--validator must be in 0..{cfg.n - 1}")
    result = run(cfg)
    view = result.validators[validator]
    skipped = skipped_leaders(view.dag, [decision.status for decision in view.decisions.values()])
    write_dot(
        out,
        view.dag,
        highlight=[record.leader for record in view.commits],
        skipped=skipped,
    )
    console.print(f"seed={cfg.seed} validator={validator}: {len(view.dag)} blocks -> {out}")


if __name__ == "__main__":
    app()
