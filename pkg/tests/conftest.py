import pytest

from rulefuzz.data import GenSpec, gen_combined, gen_random_industry


@pytest.fixture(scope="session")
def small_random():
    return gen_random_industry(GenSpec(n=400, seed=11))


@pytest.fixture(scope="session")
def small_combined():
    return gen_combined(GenSpec(n=400, seed=12))


ACCEPTANCE_LINES = {}


def verdict(number: int, ok: bool, detail: str) -> bool:
    """Record a one-line result for an acceptance criterion (printed in the terminal summary)."""
    ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
