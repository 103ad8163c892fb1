"""Shared pytest hooks: collect acceptance criterion results and print one
line per criterion in the terminal summary, where output capture cannot
swallow them."""

CRITERION_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERION_LINES:
            terminalreporter.write_line(line)
