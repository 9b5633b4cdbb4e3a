from __future__ import annotations

import numpy as np
import pytest

from spinflop.constraint import effective_field
from spinflop.couplings import CouplingModel
from spinflop.energy import EnergyModel
from spinflop.lattice import build_box


@pytest.fixture(scope="session")
def nn8():
    """Constrained n.n. model on the 17x17 box."""
    box = build_box(2, 8)
    c = CouplingModel("nn")
    return EnergyModel(box, c, effective_field(box, c))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        ok, detail = RESULTS[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
