from collections import defaultdict

import pytest

CRITERIA = {
    "1": "oracle equivalence, decomposition vs brute force",
    "2": "predictive densities integrate to one",
    "3": "risk at zero and sup-risk bound audits",
    "4": "calibrated rate audits",
    "5": "hierarchical adaptivity",
    "6": "figure orderings and evenness",
    "7": "regression suite",
    "8": "numerical core properties",
}

_outcomes = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(id): acceptance criterion the test belongs to")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        if hasattr(rep, "wasxfail"):
            state = "known-false" if rep.skipped else "error"
        elif rep.passed:
            state = "pass"
        elif rep.skipped:
            state = "skipped"
        else:
            state = "fail"
        _outcomes[str(mark.args[0])].append((item.name, state))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for cid, title in CRITERIA.items():
        checks = _outcomes.get(cid)
        if not checks:
            tr.write_line(f"criterion {cid}: NOT RUN  {title}")
            continue
        bad = [name for name, state in checks if state != "pass"]
        verdict = "PASS" if not bad else "FAIL"
        line = f"criterion {cid}: {verdict}  {title} ({len(checks) - len(bad)}/{len(checks)} checks)"
        if bad:
            detail = ", ".join(f"{name} [{state}]" for name, state in checks if state != "pass")
            line += f"; failing: {detail}"
        tr.write_line(line)
