from pathlib import Path

import pytest

from rplsim import SynthParams, generate_synthetic

DATA = Path(__file__).parent / "data"

# 50-node asymmetric topology used across metric and consistency tests.
# Seed 1 has pairs whose up/down PRR differ by more than 0.2.
ASYM_SEED = 1
ASYM_PARAMS = SynthParams(asymmetry_sigma=0.15)


@pytest.fixture(scope="session")
def asym50():
    return generate_synthetic(50, ASYM_SEED, ASYM_PARAMS)


@pytest.fixture(scope="session")
def data_dir():
    return DATA


# Acceptance verdict lines, echoed again in the terminal summary so they
# show up even when output capture is on.
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    def record(number: int, title: str, ok: bool, detail: str = "") -> bool:
        line = f"[acceptance {number}] {'PASS' if ok else 'FAIL'} {title}" + (f" ({detail})" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line, flush=True)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip("]"))):
            terminalreporter.write_line(line)
