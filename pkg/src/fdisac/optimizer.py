"""Alternating optimization over all blocks.

One outer iteration runs, in order: WMMSE auxiliaries, beamformer MM loop,
user powers, user filters, radar filter MM loop and the RIS phase PDD
procedure. A block that loses feasibility numerically is rolled back; the
same block failing twice in a row aborts the run.
"""

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import blocks, pdd
from .errors import FeasibilityLossError, InfeasibleScenarioError
from .system import (DesignVariables, assemble_effective, constraint_residuals,
                     radar_sinr, sum_rate)

log = logging.getLogger(__name__)

__all__ = ["IterationRecord", "OptimizerState", "initialize", "step", "run", "random_phases"]

BLOCKS = ("aux", "W", "q", "u", "u0", "phi")


@dataclass
class IterationRecord:
    iteration: int
    sum_rate: float
    radar_sinr: float
    timings: dict = field(default_factory=dict)
    phase_trace: list = field(default_factory=list)
    rollbacks: tuple = ()

    @property
    def sum_rate_bits(self):
        return self.sum_rate / np.log(2.0)

    @property
    def radar_sinr_db(self):
        return 10.0 * np.log10(self.radar_sinr) if self.radar_sinr > 0 else -np.inf


@dataclass
class OptimizerState:
    channels: object
    vars: DesignVariables
    config: object
    aux: object = None
    history: list = field(default_factory=list)
    halvings: int = 0
    converged: bool = False

    @property
    def eff(self):
        return assemble_effective(self.channels, self.vars.phi)

    def sum_rate(self):
        return sum_rate(self.eff, self.vars, self.config.sigma_r_sq)

    def radar_sinr(self):
        if not self.config.sensing:
            return np.nan
        return radar_sinr(self.eff, self.vars, self.config.sigma_r_sq)

    def residuals(self):
        return constraint_residuals(self.eff, self.vars, self.config)

    @property
    def iterations(self):
        return max(len(self.history) - 1, 0)


def random_phases(num_elements, seed):
    """Seeded unit-modulus vector; a prefix of the draw for any larger size."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5249]))
    return np.exp(2j * np.pi * rng.random(num_elements))


def _user_filters(eff, W, q, sigma_r_sq):
    Nr = eff.hU.shape[1]
    HW, GW = eff.H @ W, eff.G @ W
    C = (eff.hU.T * q) @ eff.hU.conj() + HW @ HW.conj().T + GW @ GW.conj().T + sigma_r_sq * np.eye(Nr)
    return np.linalg.solve(C, eff.hU.T).T


def _radar_filter(eff, W, q, config):
    """Dominant generalized eigenvector of (E2, E1), i.e. the max-SINR filter."""
    probe = DesignVariables(W, q, None, None, None)
    E1, E2 = blocks.radar_filter_matrices(eff, probe, config)
    Nr = E1.shape[0]
    _, vec = linalg.eigh(E2, E1, subset_by_index=[Nr - 1, Nr - 1])
    u = vec[:, 0]
    return u / np.linalg.norm(u)


def initialize(channels, config, seed=None, phi=None):
    """Feasible starting point.

    ``phi`` defaults to a seeded random unit-modulus draw, ``W`` to a
    full-power beam matched to the target direction, the filters to their
    max-SINR forms and ``q`` to the power budgets; ``q`` is halved until the
    radar constraint holds.
    """
    seed = config.seed if seed is None else seed
    K, M, Nt, Nr = channels.dims
    phi = random_phases(M, seed) if phi is None else np.asarray(phi, dtype=complex)
    eff = assemble_effective(channels, phi)
    q = config.p_user.copy()
    if config.sensing:
        h_dir = channels.h_T / np.linalg.norm(channels.h_T)
        W = np.sqrt(config.p_bs / Nt) * np.outer(h_dir, np.ones(Nt))
    else:
        W = np.zeros((Nt, Nt), dtype=complex)

    halvings = 0
    while True:
        if config.sensing:
            u0 = _radar_filter(eff, W, q, config)
        else:
            u0 = np.ones(Nr, dtype=complex) / np.sqrt(Nr)
        vars = DesignVariables(W.copy(), q.copy(), u0, _user_filters(eff, W, q, config.sigma_r_sq), phi.copy())
        if not config.sensing or radar_sinr(eff, vars, config.sigma_r_sq) >= config.gamma_r:
            break
        if halvings >= config.init_max_halvings:
            raise InfeasibleScenarioError(
                f"radar SINR target {config.gamma_r_db} dB unattainable for seed {seed}")
        q = q / 2.0
        halvings += 1
    state = OptimizerState(channels=channels, vars=vars, config=config, halvings=halvings)
    state.history.append(IterationRecord(0, state.sum_rate(), state.radar_sinr()))
    return state


def step(state, record_trace=False):
    """One outer iteration; returns the new :class:`IterationRecord`."""
    cfg = state.config
    ch = state.channels
    sigma = cfg.sigma_r_sq
    v = state.vars.copy()
    timings = {}
    rolled = []

    def timed(name, fn):
        t0 = time.perf_counter()
        try:
            return fn()
        finally:
            timings[name] = time.perf_counter() - t0

    def attempt(name, fn, fallback):
        try:
            return timed(name, fn)
        except FeasibilityLossError as exc:
            log.warning("block %s rolled back: %s", name, exc)
            rolled.append(name)
            return fallback

    eff = assemble_effective(ch, v.phi)
    aux = timed("aux", lambda: blocks.update_aux(eff, v, sigma))
    state.aux = aux
    v.W = attempt("W", lambda: blocks.update_beamformer(eff, v, aux, cfg)[0], v.W)
    v.q = attempt("q", lambda: blocks.update_power(eff, v, aux, cfg), v.q)
    v.u = timed("u", lambda: blocks.update_user_filters(eff, v, aux, sigma))
    v.u0 = attempt("u0", lambda: blocks.update_radar_filter(eff, v, cfg)[0], v.u0)
    phase_trace = []
    if cfg.optimize_ris:
        result = timed("phi", lambda: pdd.optimize_phase(ch, v, aux, cfg, record_trace=record_trace))
        v.phi = result.phi
        phase_trace = result.trace
    else:
        timings["phi"] = 0.0
    state.vars = v
    record = IterationRecord(len(state.history), state.sum_rate(), state.radar_sinr(),
                             timings, phase_trace, tuple(rolled))
    state.history.append(record)
    return record


def run(state, record_trace=False):
    """Iterate :func:`step` until the relative sum-rate change drops below
    ``outer_tol`` or ``outer_max`` iterations have run."""
    cfg = state.config
    last_rollbacks = set()
    for _ in range(cfg.outer_max):
        prev = state.history[-1].sum_rate
        record = step(state, record_trace=record_trace)
        repeated = last_rollbacks & set(record.rollbacks)
        if repeated:
            raise FeasibilityLossError(f"block {sorted(repeated)[0]} failed twice in a row",
                                       block=sorted(repeated)[0])
        last_rollbacks = set(record.rollbacks)
        if abs(record.sum_rate - prev) <= cfg.outer_tol * max(abs(prev), np.finfo(float).tiny):
            state.converged = True
            break
    return state
