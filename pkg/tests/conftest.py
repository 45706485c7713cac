import math

import numpy as np
import pytest
from hypothesis import settings

from bayesppd import line, prior_from_latents

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")

_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def criterion():
    """Record one acceptance line; the line is printed in the terminal summary."""

    def record(name: str, passed: bool, detail: str = "") -> bool:
        _ACCEPTANCE.append((name, bool(passed), detail))
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in sorted(_ACCEPTANCE, key=lambda r: _order(r[0])):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}".rstrip())


def _order(name: str):
    head = name.split(".")[0].split()[0]
    return (int(head) if head.isdigit() else math.inf, name)


@pytest.fixture
def two_constants():
    """Latents f = 0 and f = 1, uniform prior, sigma 0.1."""
    return prior_from_latents([line(0.0, 0.0), line(1.0, 0.0)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
