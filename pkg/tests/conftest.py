def pytest_terminal_summary(terminalreporter, exitstatus, config):
    try:
        from _acceptance_report import REPORT_LINES
    except ImportError:
        return
    if REPORT_LINES:
        terminalreporter.section("acceptance criteria")
        for line in REPORT_LINES:
            terminalreporter.write_line(line)
