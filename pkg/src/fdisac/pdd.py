"""RIS phase optimization by penalty dual decomposition.

The unit-modulus constraint is split off through a copy ``psi`` of the phase
vector. The inner loop alternates an exact convex solve in ``phi`` with the
closed-form phase alignment of ``psi``; the outer loop either takes a dual
ascent step or tightens the penalty.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from . import qcqp

log = logging.getLogger(__name__)

__all__ = [
    "PhaseCoefficients",
    "PddState",
    "PhaseResult",
    "build_phase_coefficients",
    "phase_objective",
    "phase_constraint",
    "augmented_lagrangian",
    "solve_phi_subproblem",
    "solve_psi_subproblem",
    "outer_update",
    "optimize_phase",
]


@dataclass
class PhaseCoefficients:
    """Objective phi^H T phi - 2Re(x^H phi) - c5 (minus the summed surrogate
    rates) and radar form phi^H T0 phi - 2Re(x0^H phi) + c6 <= 0."""

    T: np.ndarray
    x: np.ndarray
    c5: float
    T0: np.ndarray
    x0: np.ndarray
    c6: float
    radar_scale: float = 1.0

    def is_trivial(self):
        return not (np.any(self.T) or np.any(self.x) or np.any(self.T0) or np.any(self.x0))


def build_phase_coefficients(channels, vars, aux, config):
    """Quadratic forms of the surrogate objective and radar constraint in phi."""
    sigma = config.sigma_r_sq
    q = vars.q
    W = vars.W
    H = channels.alpha * np.outer(channels.h_R, channels.h_T.conj())
    HsW = channels.H_s.conj().T @ W  # (Nr, Nt)
    GtW = channels.G_t @ W  # (M, Nt)
    h_ru = channels.h_RU
    h_bu = channels.h_BU
    M = channels.G_t.shape[0]

    def filter_parts(u):
        r = channels.G_r @ u  # r = G_r u
        z = r.conj()[None, :] * h_ru  # row i: u^H P_i
        S_conj = (GtW.T * r.conj()[None, :])  # S^* = W^T G_t^T diag(r^*), (Nt, M)
        v = u.conj() @ HsW  # u^H H_s^H W
        direct = h_bu @ u.conj()  # u^H h_BU,i
        echo = np.sum(np.abs(u.conj() @ H @ W) ** 2)
        return z, S_conj, v, direct, echo

    T = np.zeros((M, M), dtype=complex)
    x_row = np.zeros(M, dtype=complex)
    c5 = 0.0
    wk = aux.omega * np.abs(aux.beta) ** 2
    for k, u in enumerate(vars.u):
        z, S_conj, v, direct, echo = filter_parts(u)
        quad = (z.conj().T * q) @ z + S_conj.conj().T @ S_conj
        T += wk[k] * quad
        lin = (q * direct.conj()) @ z + v.conj() @ S_conj
        sig = aux.omega[k] * aux.beta[k].conj() * np.sqrt(q[k])
        x_row += sig * z[k] - wk[k] * lin
        c5 += (np.log(aux.omega[k]) - aux.omega[k] + 1.0 + 2.0 * np.real(sig * direct[k])
               - wk[k] * (np.sum(q * np.abs(direct) ** 2) + echo + np.sum(np.abs(v) ** 2)
                          + sigma * np.vdot(u, u).real))
    z0, S0_conj, v0, direct0, echo0 = filter_parts(vars.u0)
    T0 = (z0.conj().T * q) @ z0 + S0_conj.conj().T @ S0_conj
    x0 = -((q * direct0.conj()) @ z0 + v0.conj() @ S0_conj).conj()
    c6 = float(np.sum(q * np.abs(direct0) ** 2) + np.sum(np.abs(v0) ** 2)
               + sigma * np.vdot(vars.u0, vars.u0).real - echo0 / config.gamma_r)
    herm = lambda A: 0.5 * (A + A.conj().T)
    return PhaseCoefficients(herm(T), x_row.conj(), float(c5), herm(T0), x0, c6,
                             radar_scale=float(echo0 / config.gamma_r))


def phase_objective(coeffs, phi):
    return float(np.real(np.vdot(phi, coeffs.T @ phi)) - 2.0 * np.real(np.vdot(coeffs.x, phi))) - coeffs.c5


def phase_constraint(coeffs, phi):
    return float(np.real(np.vdot(phi, coeffs.T0 @ phi)) - 2.0 * np.real(np.vdot(coeffs.x0, phi))) + coeffs.c6


@dataclass
class PddState:
    phi: np.ndarray
    psi: np.ndarray
    lam: np.ndarray
    rho: float
    eta: float
    outer_iter: int = 0


def augmented_lagrangian(coeffs, pdd):
    d = pdd.phi - pdd.psi
    return (phase_objective(coeffs, pdd.phi) + np.vdot(d, d).real / (2.0 * pdd.rho)
            + np.real(np.vdot(pdd.lam, d)))


def _phi_problem(coeffs, pdd, sensing=True, tol=1e-8, margin=0.0):
    M = pdd.phi.size
    A = coeffs.T + np.eye(M) / (2.0 * pdd.rho)
    b = coeffs.x + pdd.psi / (2.0 * pdd.rho) - pdd.lam / 2.0
    const = -coeffs.c5 + np.vdot(pdd.psi, pdd.psi).real / (2.0 * pdd.rho) - np.real(np.vdot(pdd.lam, pdd.psi))
    cons = [qcqp.QuadForm(coeffs.T0, coeffs.x0, coeffs.c6 + margin)] if sensing else []
    return qcqp.QcqpProblem(qcqp.QuadForm(A, b, const), cons, tolerance=tol)


def solve_phi_subproblem(coeffs, pdd, sensing=True, tol=1e-8, margin=0.0):
    """Minimize the augmented Lagrangian over phi under the radar constraint."""
    sol = qcqp.solve(_phi_problem(coeffs, pdd, sensing, tol, margin), warm_start=pdd.phi)
    return sol.w_star, sol


def solve_psi_subproblem(phi, lam, rho, psi_prev=None):
    """Unit-modulus vector aligned with phi + rho * lam."""
    v = phi + rho * lam
    mag = np.abs(v)
    psi = np.where(mag > 1e-15, v / np.where(mag > 1e-15, mag, 1.0), 0.0)
    if np.any(mag <= 1e-15):
        keep = psi_prev if psi_prev is not None else np.ones_like(v)
        psi = np.where(mag > 1e-15, psi, keep)
    return psi


def outer_update(pdd, c=0.85, eta_decay=0.9):
    """Dual ascent if phi and psi nearly agree, otherwise a smaller rho."""
    gap = pdd.phi - pdd.psi
    out = PddState(pdd.phi, pdd.psi, pdd.lam, pdd.rho, pdd.eta * eta_decay, pdd.outer_iter + 1)
    if np.max(np.abs(gap)) <= pdd.eta:
        out.lam = pdd.lam + gap / pdd.rho
    else:
        out.rho = c * pdd.rho
    return out


@dataclass
class PhaseResult:
    phi: np.ndarray
    converged: bool
    accepted: bool
    outer_iterations: int
    trace: list = field(default_factory=list)


class _CachedPhiSolver:
    """Reuses the factorization of T + I/(2 rho) while rho is unchanged."""

    def __init__(self, coeffs, sensing, margin):
        self.coeffs = coeffs
        self.sensing = sensing
        self.margin = margin
        self._rho = None
        self._solver = None

    def solve(self, psi, lam, rho):
        """Exact phi minimizer for given (psi, lam, rho); ``None`` if infeasible."""
        c = self.coeffs
        if self._rho != rho:
            M = c.T.shape[0]
            self._solver = qcqp.SingleConstraintSolver(
                c.T + np.eye(M) / (2.0 * rho), c.T0 if self.sensing else None)
            self._rho = rho
        b = c.x + psi / (2.0 * rho) - lam / 2.0
        if self.sensing:
            w, _, status = self._solver.solve_raw(b, c.x0, c.c6 + self.margin)
            return w if status == qcqp.OPTIMAL else None
        return self._solver.solve_raw(b)[0]

    def __call__(self, pdd):
        return self.solve(pdd.psi, pdd.lam, pdd.rho)


def _reduced_descent(solver, coeffs, pdd, max_iter):
    """Minimize the AL over the phases of psi with phi eliminated exactly.

    By the envelope theorem the gradient with respect to psi only involves
    the penalty and dual terms, so each evaluation costs one phi solve.
    Returns ``(phi, psi)`` or ``None`` when no improvement was found.
    """
    lam, rho = pdd.lam, pdd.rho

    def fun(theta):
        psi = np.exp(1j * theta)
        phi = solver.solve(psi, lam, rho)
        if phi is None:
            return np.inf, np.zeros_like(theta)
        d = phi - psi
        value = (phase_objective(coeffs, phi) + np.vdot(d, d).real / (2.0 * rho)
                 + np.real(np.vdot(lam, d)))
        g_psi = -d / (2.0 * rho) - lam / 2.0
        return value, 2.0 * np.real(np.conj(1j * psi) * g_psi)

    start = augmented_lagrangian(coeffs, pdd)
    res = optimize.minimize(fun, np.angle(pdd.psi), jac=True, method="L-BFGS-B",
                            options=dict(maxiter=max_iter, maxcor=30, gtol=1e-13, ftol=1e-16))
    if not np.isfinite(res.fun) or res.fun > start:
        return None
    psi = np.exp(1j * res.x)
    phi = solver.solve(psi, lam, rho)
    if phi is None:
        return None
    return phi, psi


def _inner_loop(solver, coeffs, pdd, config):
    """Drive (phi, psi) to a stationary point of the AL for fixed (lam, rho).

    A quasi-Newton pass over the phases of psi does the bulk of the work; the
    plain phi/psi alternation then runs until the relative AL change is below
    ``pdd_inner_tol``. Every accepted move lowers the AL. Returns false if the
    phi subproblem is infeasible.
    """
    found = _reduced_descent(solver, coeffs, pdd, config.pdd_newton_max)
    if found is not None:
        pdd.phi, pdd.psi = found
    al_prev = augmented_lagrangian(coeffs, pdd)
    for _ in range(config.pdd_inner_max):
        phi = solver(pdd)
        if phi is None:
            return False
        pdd.phi = phi
        pdd.psi = solve_psi_subproblem(pdd.phi, pdd.lam, pdd.rho, pdd.psi)
        al = augmented_lagrangian(coeffs, pdd)
        if abs(al_prev - al) <= config.pdd_inner_tol * max(abs(al), 1.0):
            break
        al_prev = al
    return True


def initial_penalty(coeffs, rho0):
    """Penalty start ``rho0 / L`` with L = ||T||_2 + ||x||_inf.

    L bounds the per-element curvature and gradient of the objective, so the
    AL balance between objective and penalty is independent of the channel
    scale.
    """
    L = np.linalg.norm(coeffs.T, 2) + np.max(np.abs(coeffs.x))
    if not np.isfinite(L) or L <= 0.0:
        return float(rho0)
    return float(rho0 / L)


def optimize_phase(channels, vars, aux, config, coeffs=None, record_trace=False):
    """Penalty dual decomposition for the RIS phases.

    Returns a :class:`PhaseResult`. The committed phase is ``psi`` (exactly
    unit modulus); if it lowers the surrogate objective or breaks the radar
    constraint, the entry phase is kept (``accepted`` is then false).
    """
    c = coeffs if coeffs is not None else build_phase_coefficients(channels, vars, aux, config)
    entry = vars.phi / np.abs(vars.phi)
    if c.is_trivial():
        return PhaseResult(entry, True, False, 0)
    sensing = config.sensing
    # tightening keeps the projected psi inside the radar region
    margin = 1e-7 * c.radar_scale if sensing else 0.0
    entry_obj = phase_objective(c, entry)
    entry_con = phase_constraint(c, entry)
    obj_scale = max(abs(entry_obj), 1.0)
    converged = False
    k = 0
    trace = []

    for attempt in range(3):
        solver = _CachedPhiSolver(c, sensing, margin)
        pdd = PddState(entry.copy(), entry.copy(), np.zeros_like(entry), initial_penalty(c, config.pdd_rho0), config.pdd_eta0)
        trace = []
        converged = False
        prev_outer_phi = entry.copy()
        feasible = True
        for k in range(1, config.pdd_outer_max + 1):
            if not _inner_loop(solver, c, pdd, config):
                feasible = False
                break
            gap_inf = float(np.max(np.abs(pdd.phi - pdd.psi)))
            dphi_inf = float(np.max(np.abs(pdd.phi - prev_outer_phi)))
            prev_outer_phi = pdd.phi.copy()
            if record_trace:
                trace.append(dict(outer_iter=k, gap_inf=gap_inf, dphi_inf=dphi_inf,
                                  al_value=augmented_lagrangian(c, pdd), rho=pdd.rho))
            gap_2 = float(np.linalg.norm(pdd.phi - pdd.psi))
            pdd = outer_update(pdd, config.pdd_c, config.pdd_eta_decay)
            if gap_2 <= config.phase_tol and dphi_inf <= config.phase_step_tol:
                converged = True
                break
        if not feasible:
            break
        psi = pdd.psi
        obj_ok = phase_objective(c, psi) <= entry_obj + 1e-12 * obj_scale
        con_ok = (not sensing) or phase_constraint(c, psi) <= max(entry_con, 0.0)
        if obj_ok and con_ok:
            return PhaseResult(psi, converged, True, k, trace)
        if obj_ok and not con_ok:
            margin = 100.0 * margin if margin > 0 else 1e-7 * c.radar_scale
            continue
        break
    if not converged:
        log.warning("phase optimization kept the entry point after %d outer iterations", k)
    return PhaseResult(entry, converged, False, k, trace)
