"""Suite plumbing: echo acceptance verdict lines after the test run."""

acceptance_verdicts: list = []


def pytest_terminal_summary(terminalreporter):
    if acceptance_verdicts:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_verdicts:
            terminalreporter.write_line(line)
