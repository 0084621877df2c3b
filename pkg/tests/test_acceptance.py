"""The eleven acceptance criteria at their stated tolerances.

Each test prints one PASS/FAIL line (visible without ``-s``) before asserting.
"""

import json

import pytest

from jumpfilter.acceptance import CRITERIA, RUNTIME_LIMITS


@pytest.mark.slow
@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, capsys):
    res = CRITERIA[number](seed=0)
    if number in RUNTIME_LIMITS and res.runtime > RUNTIME_LIMITS[number]:
        res.passed = False
    with capsys.disabled():
        print("\n" + res.line())
    assert res.passed, json.dumps(res.to_dict()["metrics"], indent=1)[:4000]
