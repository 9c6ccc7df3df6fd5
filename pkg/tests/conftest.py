"""Shared fixtures: random desk-scale instances and a run cache."""

import logging

import numpy as np
import pytest

from fdisac import blocks
from fdisac.harness import run_single
from fdisac.scenario import desk_config, draw_channels
from fdisac.system import DesignVariables, assemble_effective


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def random_unit_modulus(rng, n):
    return np.exp(2j * np.pi * rng.random(n))


def random_variables(rng, config, channels, scale_power=True):
    """Feasible-looking random blocks (not optimized) for one realization."""
    K, M, Nt, Nr = channels.dims
    W = crandn(rng, Nt, Nt)
    if scale_power:
        W *= np.sqrt(config.p_bs * rng.uniform(0.2, 1.0)) / np.linalg.norm(W)
    q = config.p_user * rng.uniform(0.05, 1.0, K)
    return DesignVariables(W=W, q=q, u0=crandn(rng, Nr), u=crandn(rng, K, Nr),
                           phi=random_unit_modulus(rng, M))


class Instance:
    """One random desk-scale instance with WMMSE auxiliaries filled in."""

    def __init__(self, seed, **overrides):
        rng = np.random.default_rng(1000 + seed)
        self.config = desk_config(**overrides)
        self.channels = draw_channels(self.config, seed)
        self.vars = random_variables(rng, self.config, self.channels)
        self.eff = assemble_effective(self.channels, self.vars.phi)
        self.aux = blocks.update_aux(self.eff, self.vars, self.config.sigma_r_sq)
        self.rng = rng


@pytest.fixture
def instance():
    return Instance


class RunCache:
    """Memoized full optimizer runs keyed by (config, seed, baseline).

    The acceptance criteria share many cells (the M=16 point of the M sweep
    and the -110 dB point of the SI sweep are the baseline desk setting), so
    each run is done once per session.
    """

    def __init__(self):
        self._runs = {}

    def get(self, config, seed, baseline="optimized-ris"):
        key = (config, seed, baseline)
        if key not in self._runs:
            self._runs[key] = run_single(config, seed, baseline, trace=True, keep_state=True)
        return self._runs[key]

    def batch(self, config, seeds, baseline="optimized-ris"):
        return [self.get(config, s, baseline) for s in seeds]


@pytest.fixture(scope="session")
def run_cache():
    logging.getLogger("fdisac").setLevel(logging.ERROR)
    return RunCache()


# one status line per acceptance criterion, printed after the test summary
ACCEPTANCE_REPORT = {}


def report(number, passed, detail):
    ACCEPTANCE_REPORT[number] = (passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_REPORT):
        passed, detail = ACCEPTANCE_REPORT[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
