"""Acceptance criteria, one test each, at the stated tolerances.

Each test prints its ``[PASS]``/``[FAIL]`` line; the lines are repeated in
the terminal summary (see ``conftest.py``).  Criteria share cached kinetic
runs, so they run in numerical order within one process.
"""

from __future__ import annotations

import pytest

from alignkin.harness.acceptance import CRITERIA

LINES: list[str] = []


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number):
    res = CRITERIA[number][2]()
    LINES.append(res.line())
    print(res.line())
    assert res.passed, res.line()
