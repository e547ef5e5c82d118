import re

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    match = re.search(r"test_acceptance\.py::test_criterion_(\w+)", report.nodeid)
    if not match:
        return
    name = match.group(1)
    if report.when == "call" or report.outcome != "passed":
        # a setup failure or skip also settles the verdict
        if report.skipped:
            _ACCEPTANCE.setdefault(name, "SKIP")
        else:
            _ACCEPTANCE[name] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, verdict in _ACCEPTANCE.items():
        number, _, label = name.partition("_")
        terminalreporter.write_line(f"{verdict}  criterion {number:<3} {label.replace('_', ' ')}")
