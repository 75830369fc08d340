"""Acceptance criteria 1 to 11 at their stated tolerances and time budgets.

Each test prints one ``PASS``/``FAIL`` line, visible with ``pytest -s`` and
in the ``acceptance criteria`` section of the terminal summary, and then
asserts the criterion verdict.
"""

import pytest
from conftest import ACCEPTANCE_LINES

from fracpath.acceptance import CRITERIA, run_criterion


@pytest.mark.acceptance
@pytest.mark.parametrize("cid", sorted(CRITERIA), ids=lambda c: f"criterion_{c:02d}")
def test_criterion(cid):
    r = run_criterion(cid)
    print(r.summary())
    ACCEPTANCE_LINES.append(r.summary())
    assert r.passed, r.summary()
