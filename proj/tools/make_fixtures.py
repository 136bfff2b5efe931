#!/usr/bin/env python3
"""Regenerate the bundled offline corpus under tests/fixtures/.

The corpus scripts every external interaction of a validation run: the
transcript replays LLM replies stage by stage, the executor script replays
forge rounds attempt by attempt. Each vulnerable finding has a patched twin
with an identical narrative; the proof-of-concept swallows the revert that
the patch introduces, so the same test executes cleanly on both variants and
only the observed state delta separates them.

Run from the repository root:

    python3 tools/make_fixtures.py
"""

import json
import pathlib

FIXTURES = pathlib.Path(__file__).resolve().parent.parent / "tests" / "fixtures"

VM_ADDRESS = 'Vm(address(uint160(uint256(keccak256("hevm cheat code")))))'
DEPLOYER = "0x7FA9385bE102ac3EAc297483Dd6233D62b3e1496"
ATTACKER = "0x0000000000000000000000000000000000000B0b"


def poc_text(project):
    return (
        "pragma solidity 0.8.19;\n"
        "\n"
        f'import "../src/{project["file"]}";\n'
        "\n"
        f'contract {project["contract"]}PoC {{\n'
        f'    {project["contract"]} internal target;\n'
        "\n"
        "    function setUp() public {\n"
        f'        target = new {project["contract"]}();\n'
        "    }\n"
        "\n"
        "    function test_exploit() public {\n"
        f'        try target.{project["call"]} {{}} catch {{}}\n'
        "    }\n"
        "}\n"
    )


def instrumented_text(project):
    probe = project["probe"]
    return (
        "pragma solidity 0.8.19;\n"
        "\n"
        f'import "../src/{project["file"]}";\n'
        "\n"
        "interface Vm {\n"
        f'    function toString({project["probe_type"]} value) external pure'
        " returns (string memory);\n"
        "}\n"
        "\n"
        f'contract {project["contract"]}PoC {{\n'
        "    event Marker(string line);\n"
        "\n"
        f"    Vm internal constant vm = {VM_ADDRESS};\n"
        f'    {project["contract"]} internal target;\n'
        "\n"
        "    function setUp() public {\n"
        f'        target = new {project["contract"]}();\n'
        "    }\n"
        "\n"
        "    function test_exploit() public {\n"
        f'        emit Marker(string.concat("SMARTPOC|PRE|{project["query"]}|",'
        f" vm.toString({probe})));\n"
        f'        try target.{project["call"]} {{}} catch {{}}\n'
        f'        emit Marker("SMARTPOC|TRIGGER|{project["action"]}|executed");\n'
        f'        emit Marker(string.concat("SMARTPOC|POST|{project["query"]}|",'
        f" vm.toString({probe})));\n"
        "    }\n"
        "}\n"
    )


def plan_reply(project):
    return json.dumps(
        {
            "action": [{"signature": project["action"], "note": project["action_note"]}],
            "state_queries": [{"signature": project["query"], "note": project["query_note"]}],
            "rationale": project["rationale"],
            "expected_direction": project["direction"],
        }
    )


PROJECTS = {
    "vault": {
        "contract": "Vault",
        "file": "src/Vault.sol",
        "key": "setOwner",
        "links": [],
        "call": "setOwner(address(0xB0B))",
        "action": "setOwner(address)",
        "action_note": "owner rotation with no caller check",
        "query": "owner()",
        "query_note": "the current vault owner",
        "probe": "target.owner()",
        "probe_type": "address",
        "rationale": "ownership must only change when the current owner asks for it",
        "direction": "owner() moves from the deployer to the attacker address",
        "pre": DEPLOYER,
        "post": ATTACKER,
        "verify": "VALIDATED\nowner() moved from the deployer to the attacker;"
        " the vault balance is now sweepable.",
    },
    "roles": {
        "contract": "RoleManager",
        "file": "src/RoleManager.sol",
        "key": "grantRole",
        "links": [],
        "call": "grantRole(target.ADMIN_ROLE(), address(this))",
        "action": "grantRole(bytes32,address)",
        "action_note": "role grant with no admin check",
        "query": "hasRole(bytes32,address)",
        "query_note": "admin membership of the attacker",
        "probe": "target.hasRole(target.ADMIN_ROLE(), address(this))",
        "probe_type": "bool",
        "rationale": "only existing admins may mint new admins",
        "direction": "hasRole(ADMIN_ROLE, attacker) flips from false to true",
        "pre": "false",
        "post": "true",
        "verify": "VALIDATED\nthe attacker granted itself ADMIN_ROLE;"
        " hasRole flipped from false to true.",
    },
    "bank": {
        "contract": "Bank",
        "file": "src/Bank.sol",
        "key": "emergencyFreeze",
        "links": ["withdraw"],
        "call": "emergencyFreeze(true)",
        "action": "emergencyFreeze(bool)",
        "action_note": "freeze switch with no admin check",
        "query": "frozen()",
        "query_note": "the withdrawal freeze flag",
        "probe": "target.frozen()",
        "probe_type": "bool",
        "rationale": "only the admin may halt withdrawals",
        "direction": "frozen() flips from false to true for a non-admin caller",
        "pre": "false",
        "post": "true",
        "verify": "VALIDATED\na non-admin caller flipped frozen() to true,"
        " locking every withdrawal.",
    },
}

NARRATIVES = {
    "vault": "setOwner lets any caller replace the vault owner and drain"
    " all deposits through sweep",
    "roles": "grantRole performs no admin check, so any account can grant"
    " itself ADMIN_ROLE",
    "bank": "emergencyFreeze is callable by anyone, letting an attacker"
    " freeze all withdrawals",
}

TYPES = {
    "vault": "access-control",
    "roles": "privilege-escalation",
    "bank": "access-control",
}

FINDINGS = [
    ("vault-setowner", "vault", "vault", True),
    ("vault-setowner-fixed", "vault", "vault_fixed", False),
    ("roles-grant", "roles", "roles", True),
    ("roles-grant-fixed", "roles", "roles_fixed", False),
    ("bank-freeze", "bank", "bank", True),
    ("bank-freeze-fixed", "bank", "bank_fixed", False),
]


def fenced(code):
    return "```solidity\n" + code + "```"


def main():
    findings, transcript, executor = [], [], []

    for finding_id, base, project_ref, vulnerable in FINDINGS:
        p = PROJECTS[base]
        findings.append(
            {
                "id": finding_id,
                "tool": "slither",
                "project_ref": project_ref,
                "narrative": NARRATIVES[base],
                "severity": "High",
                "type": TYPES[base],
                "label": vulnerable,
                "locations": [p["key"]],
            }
        )

        def say(stage, text, index=0):
            transcript.append(
                {"finding": finding_id, "stage": stage, "index": index, "text": text}
            )

        say("bce-keys", json.dumps([p["key"]]))
        say("bce-links", json.dumps(p["links"]))
        say("gre-generate", fenced(poc_text(p)))
        say("dv-extract", plan_reply(p))
        say("dv-insert", fenced(instrumented_text(p)))
        if vulnerable:
            say("dv-verify", p["verify"])

        post = p["post"] if vulnerable else p["pre"]
        executor.append(
            {
                "finding": finding_id,
                "attempt": 0,
                "ok_compile": True,
                "compile_output": "",
                "ok_run": True,
                "run_output": "[PASS] test_exploit() (gas: 31091)",
                "logs": [],
            }
        )
        executor.append(
            {
                "finding": finding_id,
                "attempt": 1,
                "ok_compile": True,
                "compile_output": "",
                "ok_run": True,
                "run_output": "[PASS] test_exploit() (gas: 54410)",
                "logs": [
                    "SMARTPOC|PRE|" + p["query"] + "|" + p["pre"],
                    "SMARTPOC|TRIGGER|" + p["action"] + "|executed",
                    "SMARTPOC|POST|" + p["query"] + "|" + post,
                ],
            }
        )

    def dump(name, rows):
        path = FIXTURES / name
        path.write_text("".join(json.dumps(r) + "\n" for r in rows))
        print(f"wrote {path} ({len(rows)} rows)")

    dump("findings.jsonl", findings)
    dump("transcript.jsonl", transcript)
    dump("executor.jsonl", executor)


if __name__ == "__main__":
    main()
