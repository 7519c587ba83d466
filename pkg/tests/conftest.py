SCORECARD = []


def pytest_terminal_summary(terminalreporter):
    if not SCORECARD:
        return
    terminalreporter.section("acceptance scorecard")
    for line in SCORECARD:
        terminalreporter.write_line(line)
