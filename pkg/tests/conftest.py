"""Collects acceptance outcomes and prints one PASS/FAIL line per criterion."""

_ACCEPTANCE: dict[str, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        verdict = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        detail = dict(report.user_properties).get("detail", "")
        _ACCEPTANCE[name] = (verdict, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, (verdict, detail) in _ACCEPTANCE.items():
        terminalreporter.write_line(f"{verdict} {name}" + (f"  [{detail}]" if detail else ""))
