import hypothesis

hypothesis.settings.register_profile(
    "default",
    max_examples=50,
    deadline=None,
    derandomize=True,
)
hypothesis.settings.load_profile("default")


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance PASS/FAIL lines after the test tally."""
    import sys

    results = []
    for name in ("test_acceptance", "tests.test_acceptance", "test_wire_parity"):
        results.extend(getattr(sys.modules.get(name), "RESULTS", []))
    if results:
        terminalreporter.ensure_newline()
        terminalreporter.section("acceptance criteria", sep="-")
        for line in results:
            terminalreporter.write_line(line)
