"""Every acceptance criterion at its stated tolerance, one PASS/FAIL line each.

The checks live in ``hjbhomog.acceptance`` so that ``hjbhomog verify`` runs the
same code. The expected tolerance strings below pin the thresholds: loosening a
check changes its detail text and fails the pin.
"""

import pytest

from hjbhomog import acceptance
from hjbhomog.acceptance import AcceptanceContext, applicable_checks, run_checks
from hjbhomog.control_model import make_problem

PINNED = {
    1: ["(0 +- 0.05)", "(<= 60s)"],
    2: ["(<= -0.5)"],
    3: ["(>= 0.5)"],
    4: ["(<= 0.05)"],
    5: ["(<= 0.1)"],
    6: ["(>= -0.05)"],
    7: ["(<= 0.1)"],
    8: ["(>= -0.05)"],
    9: ["(<= 300s)"],
    10: ["(>= -0.01)", "(<= 0.05)"],
    11: ["(<= 0.1)", "(<= 0.55)"],
    12: ["singular J=", "regular J="],
    13: ["1000 samples", "(<= 1, C = "],
}

PRESETS = ("oned_example", "identical_sides")
CASES = [(preset, c) for preset in PRESETS for c in sorted({c for c, _, _ in applicable_checks(preset)})]


def test_pinned_constants():
    assert acceptance.HALVING_RATIO == 0.55
    assert acceptance.EPS_LIST == (0.25, 0.125, 0.0625)
    assert acceptance.SWEEP_P == tuple(float(p) for p in range(-4, 5))
    assert set(PINNED) == {c for c, _, _, _ in acceptance._REGISTRY}


@pytest.fixture(scope="module")
def contexts():
    return {preset: AcceptanceContext(make_problem(preset)) for preset in PRESETS}


@pytest.mark.slow
@pytest.mark.parametrize("preset, criterion", CASES, ids=[f"{p}-criterion{c}" for p, c in CASES])
def test_criterion(contexts, preset, criterion, capsys):
    results = run_checks(contexts[preset], {criterion})
    assert results
    with capsys.disabled():
        for r in results:
            print(f"\n[{preset}] {r.line()}")
    for r in results:
        if not r.detail.startswith("raised"):
            for token in PINNED[criterion]:
                assert token in r.detail, f"tolerance pin {token!r} missing from: {r.detail}"
    failed = [r.line() for r in results if not r.passed]
    assert not failed, "\n".join(failed)
