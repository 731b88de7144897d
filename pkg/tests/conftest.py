"""Shared fixtures.

Full Brillouin-zone sweeps at the default discretization are expensive
(about a minute each on one core), so they are computed once per session
and shared by the acceptance tests and the slower module tests.
"""

from __future__ import annotations

import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from subwave.capmat import midpoint_alpha_grid  # noqa: E402
from subwave.geometry import ScenarioConfig, build_scenario, discretize  # noqa: E402
from subwave.spectra import capacitance_sweep, spectra_from_capacitance  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


class SweepCache:
    """Hermitized capacitance matrices on the default 80-point grid, per scenario."""

    def __init__(self):
        self._store = {}
        self.timings = {}

    def get(self, scenario: str, **kw):
        key = (scenario, tuple(sorted(kw.items())))
        if key not in self._store:
            cfg = ScenarioConfig(scenario=scenario, **kw)
            chain = build_scenario(cfg)
            t0 = time.perf_counter()
            Cs = capacitance_sweep(
                discretize(chain, cfg.panels_per_disk),
                midpoint_alpha_grid(cfg.alpha_points),
                cfg.fourier_terms,
            )
            self.timings[key] = time.perf_counter() - t0
            self._store[key] = (cfg, chain, Cs)
        return self._store[key]

    def band(self, scenario: str, truncation=None, **kw):
        cfg, chain, Cs = self.get(scenario, **kw)
        return spectra_from_capacitance(Cs, chain, truncation)

    def computed(self):
        return list(self._store.items())


@pytest.fixture(scope="session")
def sweeps():
    return SweepCache()


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
