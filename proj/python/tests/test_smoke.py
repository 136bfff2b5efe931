"""End-to-end smoke tests for the _smartpoc extension module.

SMARTPOC_FIXTURES must point at the bundled offline corpus (ctest sets it;
set it manually when running pytest directly).
"""

import os
import pathlib

import pytest

import _smartpoc as smartpoc

FIXTURES = pathlib.Path(os.environ.get("SMARTPOC_FIXTURES", "tests/fixtures"))


def test_project_parse_exposes_model_views():
    project = smartpoc.Project(str(FIXTURES / "projects" / "vault"))
    functions = project.functions()
    assert "Vault.setOwner" in functions
    assert "Vault.sweep" in functions
    abi = project.public_abi()
    assert any(entry.startswith("Vault.setOwner(address)") for entry in abi)
    assert any(entry.startswith("Vault.owner()") for entry in abi)
    assert project.compiler_version and project.compiler_version.startswith("0.8")


def test_call_edges_cover_internal_helpers():
    project = smartpoc.Project(str(FIXTURES / "projects" / "bank"))
    assert ("Bank.withdraw", "Bank._withdraw") in project.call_edges()


def test_load_findings_round_trip():
    rows = smartpoc.load_findings(str(FIXTURES / "findings.jsonl"))
    assert len(rows) == 6
    by_id = {row["id"]: row for row in rows}
    assert by_id["vault-setowner"]["label"] is True
    assert by_id["vault-setowner-fixed"]["label"] is False
    assert by_id["vault-setowner"]["locations"] == ["setOwner"]
    assert by_id["roles-grant"]["type"] == "privilege-escalation"


def test_extract_code_block_prefers_fenced_content():
    text = "prose\n```solidity\ncontract A {}\n```\ntrailer"
    assert smartpoc.extract_code_block(text) == "contract A {}\n"


def test_sanitize_pins_pragma_and_import():
    cleaned = smartpoc.sanitize_draft(
        'pragma solidity ^0.5.0;\nimport "./Vault.sol";\n'
        "contract PoC { function test_a() public {} }\n",
        target_contract="Vault",
        target_file="src/Vault.sol",
        compiler_version="0.8.19",
    )
    assert "pragma solidity 0.8.19;" in cleaned
    assert 'import "../src/src/Vault.sol";' in cleaned
    with pytest.raises(RuntimeError):
        smartpoc.sanitize_draft(
            "just prose, no contract",
            target_contract="Vault",
            target_file="src/Vault.sol",
            compiler_version="0.8.19",
        )


def test_marker_parse_and_diff():
    scan = smartpoc.parse_markers(
        [
            "SMARTPOC|PRE|owner()|0xAAA",
            "SMARTPOC|TRIGGER|setOwner(address)|executed",
            "SMARTPOC|POST|owner()|0xBBB",
            "noise line",
        ]
    )
    assert scan["pre"] == {"owner()": "0xAAA"}
    assert scan["post"] == {"owner()": "0xBBB"}
    assert scan["trigger_count"] == 1
    assert scan["issues"] == []

    diff = smartpoc.diff_snapshots(scan["pre"], scan["post"])
    assert diff["deltas"] == [("owner()", "0xAAA", "0xBBB")]
    assert diff["mismatch"] is None

    still = smartpoc.diff_snapshots({"owner()": "0xAAA"}, {"owner()": "0xAAA"})
    assert still["deltas"] == []


def test_metrics_match_reference_values():
    assert smartpoc.format_percent(smartpoc.accuracy(100, 19, 12, 8)) == "85.61%"
    ppv, npv = smartpoc.ppv_npv(33, 30, 2, 5)
    assert smartpoc.format_percent(ppv) == "94.29%"
    assert smartpoc.format_percent(npv) == "85.71%"
    with pytest.raises(RuntimeError):
        smartpoc.accuracy(0, 0, 0, 0)


def test_run_validate_replays_the_offline_corpus(tmp_path):
    report = smartpoc.run_validate(
        findings=str(FIXTURES / "findings.jsonl"),
        project=str(FIXTURES / "projects"),
        out=str(tmp_path / "out"),
        transcript=str(FIXTURES / "transcript.jsonl"),
        executor_script=str(FIXTURES / "executor.jsonl"),
        workers=2,
    )
    assert report["summary"]["findings"] == 6
    assert report["summary"]["validated"] == 3
    assert report["metrics"]["accuracy"]["percent"] == "100.00%"

    rebuilt = smartpoc.run_report(str(tmp_path / "out"))
    assert rebuilt["summary"] == report["summary"]

    with pytest.raises(ValueError):
        smartpoc.run_validate(
            findings=str(FIXTURES / "findings.jsonl"),
            project=str(FIXTURES / "projects"),
            out=str(tmp_path / "out2"),
            transcript=str(FIXTURES / "transcript.jsonl"),
            llm_endpoint="http://both-backends-set.invalid",
        )
