"""Acceptance battery: one test and one printed PASS/FAIL line per criterion.

Tolerances live in ``ptamper.harness.suite`` and are not loosened here.
"""

import pytest

from ptamper.harness.suite import CRITERIA, SuiteContext


@pytest.fixture(scope="module")
def ctx():
    return SuiteContext(seed=0)


@pytest.mark.parametrize("number", sorted(CRITERIA), ids=[CRITERIA[i].__name__ for i in sorted(CRITERIA)])
def test_criterion(number, ctx, capsys):
    res = CRITERIA[number](ctx)
    with capsys.disabled():
        print("\n" + res.line())
        for row in res.details[:12] if not res.passed else ():
            print(f"    {row}")
    assert res.passed, res.summary
