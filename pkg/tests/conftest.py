import re

_CRITERIA = {
    1: "iou oracle suite",
    2: "replacement semantics",
    3: "fusion properties",
    4: "synthesis contract",
    5: "integration oracle",
    6: "metric fixture",
    7: "determinism",
    8: "round-trip",
}
_PATTERN = re.compile(r"test_acceptance\.py::test_criterion_(\d+)")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    failed_by_criterion: dict[int, bool] = {}
    for status in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(status, []):
            match = _PATTERN.search(report.nodeid)
            if match:
                n = int(match.group(1))
                failed = status != "passed"
                failed_by_criterion[n] = failed_by_criterion.get(n, False) or failed
    if not failed_by_criterion:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(failed_by_criterion):
        verdict = "FAIL" if failed_by_criterion[n] else "PASS"
        terminalreporter.write_line(f"criterion {n} ({_CRITERIA[n]}): {verdict}")
