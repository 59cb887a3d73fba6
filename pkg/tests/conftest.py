from __future__ import annotations

import pytest

# (criterion id, label, passed, detail) rows filled by test_acceptance.
ACCEPTANCE_RESULTS: list[tuple[str, str, bool, str]] = []


def record_criterion(cid: str, label: str, passed: bool, detail: str = ""):
    ACCEPTANCE_RESULTS.append((cid, label, passed, detail))
    line = f"ACCEPTANCE {cid} {label}: {'PASS' if passed else 'FAIL'}"
    if detail:
        line += f" ({detail})"
    print(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for cid, label, passed, detail in ACCEPTANCE_RESULTS:
        status = "PASS" if passed else "FAIL"
        line = f"{cid:>3}  {label:<28} {status}"
        if detail:
            line += f"  {detail}"
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def corpus_programs():
    from sphx.corpus import CORPUS
    from sphx.isa import parse_assembly
    return {case.name: parse_assembly(case.source) for case in CORPUS}


@pytest.fixture(scope="session")
def baseline_traces(corpus_programs):
    from sphx.isa import assemble
    from sphx.vm import RunConfig, execute
    out = {}
    for name, program in corpus_programs.items():
        out[name] = execute(assemble(program), None, RunConfig(mode="baseline"))
    return out
