"""Shared test plumbing: the acceptance report printed after the run."""

acceptance_lines = []


def record_criterion(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    acceptance_lines.append((number, line))
    print(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not acceptance_lines:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for _, line in sorted(acceptance_lines):
        terminalreporter.write_line(line)
