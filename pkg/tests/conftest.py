import sys


def pytest_terminal_summary(terminalreporter):
    """Print the acceptance scorecard (one line per criterion) at the end of
    the run, including for criteria whose tests passed."""
    for name, module in sys.modules.items():
        if name.rpartition(".")[2] == "test_acceptance":
            lines = getattr(module, "SCORECARD", [])
            if lines:
                terminalreporter.section("acceptance scorecard")
                for line in sorted(lines):
                    terminalreporter.write_line(line)
            return
