"""Scenario files: parsing, building and checking expectations."""
import pytest

from dagbft.core.dag import RejectReason
from dagbft.core.fastpath import executable
from dagbft.core.scenario import (
    build,
    check_expectations,
    format_scenario,
    load_scenario,
    parse,
    run_scenario,
)
from dagbft.errors import ConfigError, ScenarioBuildError, ScenarioParseError

ROUND_ONE = """
block P0 author=A0 round=1 parents=*
block P1 author=A1 round=1 parents=*
block P2 author=A2 round=1 parents=*
block P3 author=A3 round=1 parents=*
"""


def test_reference_figure_matches_every_expectation(fixtures_dir):
    built = build(load_scenario(fixtures_dir / "walkthrough.dag"))
    report = check_expectations(built)
    assert report.ok, report.mismatches
    assert report.sequence == ["P0", "P2", "P3", "B0"]
    assert len(built.dag) == 4 + 24


def test_reference_figure_indirect_decisions(fixtures_dir):
    built = build(load_scenario(fixtures_dir / "walkthrough.dag"))
    statuses = {s.slot.label(): s for s in check_expectations(built).statuses}
    assert statuses["A1@1"].is_skip and not statuses["A1@1"].direct
    assert statuses["A0@4"].is_skip and statuses["A0@4"].direct


def test_empty_scenario():
    report = run_scenario("")
    assert report.ok
    assert report.statuses == [] and report.sequence == []


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_scenario(tmp_path / "nope.dag")


@pytest.mark.parametrize(
    "text, line, column, message",
    [
        ("committee 4\n\nblock X author=A0 round=1 parents=[Q]", 3, 35, "undeclared block 'Q'"),
        ("block X author=A0 round=1 parents=*\ncommittee 7", 2, 1, "before the first block"),
        ("frobnicate 3", 1, 1, "unknown statement"),
        ("block X author=B0 round=1 parents=*", 1, 16, "author must look like A0"),
        ("block X author=A0 parents=*", 1, 7, "missing round="),
        ("block X author=A0 round=1 parents=* votes=[T9]", 1, 43, "undeclared transaction"),
        ("expect slot A0@1 = maybe", 1, 20, "status must be one of"),
        ("block G1 author=A0 round=1 parents=*", 1, 7, "bad block name"),
    ],
)
def test_parse_errors_point_at_the_problem(text, line, column, message):
    with pytest.raises(ScenarioParseError, match=message) as info:
        parse(text, source="case.dag")
    assert (info.value.line, info.value.column) == (line, column)
    assert str(info.value).startswith(f"case.dag:{line}:{column}:")


def test_duplicate_names_are_rejected():
    with pytest.raises(ScenarioParseError, match="declared twice"):
        parse(ROUND_ONE + "block P0 author=A0 round=2 parents=*\n")


def test_format_is_parsed_back_to_the_same_scenario(fixtures_dir):
    scenario = load_scenario(fixtures_dir / "walkthrough.dag")
    assert parse(format_scenario(scenario)) == scenario

    with_txs = parse(
        "proposers 1\n"
        "block P0 author=A0 round=1 parents=* tx=[T1:7.0+8.1, S:!shared, M:3.0!shared] ecbit ts=4\n"
        "block P1 author=A1 round=1 parents=* tx=[T1] epoch=0\n"
        "block Q author=A1 round=2 parents=[P1, P0] votes=[-S] invalid-expected\n"
    )
    assert parse(format_scenario(with_txs)) == with_txs


def test_equivocation_is_two_declarations_of_one_slot():
    text = (
        "proposers 1\n"
        + ROUND_ONE
        + "block Q1 author=A1 round=1 parents=*\n"
        "block B0 author=A0 round=2 parents=[P0, P1, P2]\n"
        "block B2 author=A2 round=2 parents=[P2, Q1, P3]\n"
    )
    built = build(parse(text))
    assert built.dag.equivocations() == [(1, 1)]
    assert built.refs["P1"] != built.refs["Q1"]


def test_invalid_expected_and_parent_rejection():
    text = ROUND_ONE + (
        "block X author=A0 round=2 parents=[P0, P1] invalid-expected\n"
        "block Y author=A0 round=3 parents=[X, P1, P2] invalid-expected\n"
    )
    built = build(parse(text))
    assert built.rejected == {
        "X": RejectReason.INSUFFICIENT_PREVIOUS_ROUND_PARENTS,
        "Y": RejectReason.PARENT_REJECTED,
    }
    assert "X" not in built.refs


def test_unexpected_rejection_fails_the_build():
    with pytest.raises(ScenarioBuildError, match="line 6: block X rejected"):
        build(parse(ROUND_ONE + "block X author=A0 round=2 parents=[P1, P0, P2]\n"))


def test_valid_block_marked_invalid_fails_the_build():
    with pytest.raises(ScenarioBuildError, match="expected to be invalid"):
        build(parse(ROUND_ONE + "block X author=A0 round=2 parents=* invalid-expected\n"))


def test_mismatches_name_the_line():
    text = ROUND_ONE + "expect slot A1@1 = commit\nexpect sequence = [P1]\n"
    report = run_scenario(text)
    assert not report.ok
    assert report.mismatches[0] == "line 6: A1@1 expected commit, got undecided"
    assert report.mismatches[1].startswith("sequence expected [P1]")


def test_votes_resolve_to_the_including_block():
    text = (
        "block P0 author=A0 round=1 parents=* tx=[T1:7.0]\n"
        "block P1 author=A1 round=1 parents=*\n"
        "block P2 author=A2 round=1 parents=*\n"
        "block P3 author=A3 round=1 parents=*\n"
        "block B0 author=A0 round=2 parents=*\n"
        "block B1 author=A1 round=2 parents=* votes=[T1]\n"
        "block B2 author=A2 round=2 parents=* votes=[T1]\n"
    )
    built = build(parse(text))
    carrier = built.dag.get(built.refs["P0"])
    vote = built.dag.get(built.refs["B1"]).votes[0]
    assert vote.block == carrier.reference and vote.index == 0
    assert executable(carrier.transactions[0], built.dag, built.committee)
