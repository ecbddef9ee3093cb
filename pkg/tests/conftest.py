import sys


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance criterion lines even when capture is on."""
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for line in results:
        terminalreporter.write_line(line)
