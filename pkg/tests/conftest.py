from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240531)


@pytest.fixture(scope="session")
def small_sim():
    """A small contaminated survey shared by pipeline, screener and CLI tests."""
    from coders.simulator import BlockStructure, SimulationSpec, simulate

    spec = SimulationSpec(
        n=80,
        structure=BlockStructure(traits=2, facets_per_trait=3, items_per_facet=10),
        gamma=0.25,
        seed=11,
    )
    return simulate(spec)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split(":")[0].split()[-1])):
            terminalreporter.write_line(line)
        passed = sum(line.startswith("PASS") for line in lines)
        terminalreporter.write_line(f"{passed}/{len(lines)} criteria passed")
