"""Acceptance suite: one experiment per criterion on the standard configuration.

Each test prints a single PASS/FAIL line; the same lines are repeated in the
terminal summary. Result tables go to results/acceptance/.
"""
from __future__ import annotations

from pathlib import Path

import pytest

from conftest import ACCEPTANCE_LINES
from junction_asym.experiments import EXPERIMENTS

OUT = Path(__file__).resolve().parents[1] / "results" / "acceptance"
CRITERIA = list(enumerate(EXPERIMENTS, start=1))


@pytest.mark.slow
@pytest.mark.parametrize("criterion, name", CRITERIA, ids=[f"criterion_{k:02d}_{n}" for k, n in CRITERIA])
def test_criterion(criterion, name, standard_workbench):
    rep = EXPERIMENTS[name](standard_workbench)
    rep.write(OUT, standard_workbench.provenance())
    assert rep.criterion == criterion
    failed = [c for c in rep.checks if not c.passed]
    line = f"criterion {criterion} [{name}]: {'PASS' if rep.passed else 'FAIL'}"
    if failed:
        line += " (" + "; ".join(f"{c.name} = {c.value:.4g}, need {c.relation} {c.target:.4g}" for c in failed) + ")"
    ACCEPTANCE_LINES[criterion] = line
    print("\n" + rep.summary())
    print(line)
    assert rep.passed, line
