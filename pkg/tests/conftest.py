from functools import lru_cache

import pytest

from fracsys.core import Exponents, Grid
from fracsys.fraclap import assemble

CASE1 = Exponents(p=0.0, q=0.5, r=1.5, theta=0.0, s=0.5, t=0.5)
TC1III = Exponents(p=1.0, q=1.0, r=1.0, theta=1.0, s=0.5, t=0.5)

# criterion number -> (passed, detail), filled in by test_acceptance
ACCEPTANCE = {}


@lru_cache(maxsize=None)
def operator(s, n, a=-1.0, b=1.0):
    """Assembled operators are immutable, so tests share them."""
    return assemble(Grid(a, b, n), s)


@pytest.fixture
def op():
    return operator


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
