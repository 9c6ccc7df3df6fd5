"""Per-block updates of the alternating optimization.

All functions take the current channels/variables explicitly and return new
values; nothing is mutated in place.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from . import qcqp
from .errors import FeasibilityLossError, InvalidStateError
from .system import assemble_effective, radar_sinr

__all__ = [
    "AuxVariables",
    "update_aux",
    "surrogate_rates",
    "beamformer_coefficients",
    "build_beamformer_qcqp",
    "beamformer_objective",
    "radar_constraint_value",
    "update_beamformer",
    "power_coefficients",
    "solve_power",
    "update_power",
    "solve_user_filter",
    "user_filter_coefficients",
    "update_user_filters",
    "radar_filter_matrices",
    "echo_minorant",
    "update_radar_filter",
]


@dataclass
class AuxVariables:
    """WMMSE receive scalars ``beta`` (K,) and weights ``omega`` (K,)."""

    beta: np.ndarray
    omega: np.ndarray


def _filter_terms(eff, W, q, U, sigma_r_sq):
    """Per-user |u_k^H h_i|^2 matrix and the W-dependent / noise terms."""
    inner = U.conj() @ eff.hU.T  # [k, i] = u_k^H h_i
    echo = np.sum(np.abs(U.conj() @ (eff.H @ W)) ** 2, axis=1)
    leak = np.sum(np.abs(U.conj() @ (eff.G @ W)) ** 2, axis=1)
    noise = sigma_r_sq * np.sum(np.abs(U) ** 2, axis=1)
    return inner, echo, leak, noise


def update_aux(eff, vars, sigma_r_sq):
    """Closed-form maximizers of the WMMSE surrogate."""
    inner, echo, leak, noise = _filter_terms(eff, vars.W, vars.q, vars.u, sigma_r_sq)
    power = np.abs(inner) ** 2 * vars.q[None, :]
    signal = np.diag(power)
    interference = power.sum(axis=1) - signal + echo + leak + noise
    total = interference + signal
    if np.any(total <= 0) or np.any(interference <= 0):
        raise InvalidStateError("zero received power at a user filter")
    beta = np.sqrt(vars.q) * np.diag(inner) / total
    omega = 1.0 + signal / interference
    return AuxVariables(beta=beta, omega=omega)


def surrogate_rates(eff, vars, aux, sigma_r_sq):
    """WMMSE surrogate rate of each user for fixed auxiliaries."""
    inner, echo, leak, noise = _filter_terms(eff, vars.W, vars.q, vars.u, sigma_r_sq)
    total = (np.abs(inner) ** 2 * vars.q[None, :]).sum(axis=1) + echo + leak + noise
    cross = np.real(aux.beta.conj() * np.sqrt(vars.q) * np.diag(inner))
    mse = 1.0 - 2.0 * cross + np.abs(aux.beta) ** 2 * total
    return np.log(aux.omega) - aux.omega * mse + 1.0


# ---------------------------------------------------------------------------
# probing beamformer
# ---------------------------------------------------------------------------

def _kron_eye(n, A):
    return np.kron(np.eye(n), A)


def vec(W):
    return W.reshape(-1, order="F")


def unvec(w, n):
    return w.reshape(n, -1, order="F")


@dataclass
class BeamformerCoefficients:
    """Objective w^H D1 w - c1 and radar form w^H D2 w - w^H D3 w + c2 <= 0."""

    D1: np.ndarray
    c1: float
    D2: np.ndarray
    D3: np.ndarray
    c2: float


def beamformer_coefficients(eff, vars, aux, config):
    Nt = vars.W.shape[0]
    sigma = config.sigma_r_sq
    wk = aux.omega * np.abs(aux.beta) ** 2
    inner = vars.u.conj() @ eff.hU.T
    A1 = np.zeros((Nt, Nt), dtype=complex)
    for k, u in enumerate(vars.u):
        a = eff.H.conj().T @ u
        g = eff.G.conj().T @ u
        A1 += wk[k] * (np.outer(a, a.conj()) + np.outer(g, g.conj()))
    rest = (np.abs(inner) ** 2 * vars.q[None, :]).sum(axis=1) + sigma * np.sum(np.abs(vars.u) ** 2, axis=1)
    c1 = float(np.sum(np.log(aux.omega) - aux.omega
                      + 2.0 * np.real(aux.omega * aux.beta.conj() * np.sqrt(vars.q) * np.diag(inner))
                      - wk * rest + 1.0))
    u0 = vars.u0
    g0 = eff.G.conj().T @ u0
    h0 = eff.H.conj().T @ u0
    D2 = _kron_eye(Nt, np.outer(g0, g0.conj()))
    D3 = _kron_eye(Nt, np.outer(h0, h0.conj())) / config.gamma_r
    c2 = float(np.sum(vars.q * np.abs(eff.hU @ u0.conj()) ** 2) + sigma * np.vdot(u0, u0).real)
    return BeamformerCoefficients(_kron_eye(Nt, A1), c1, D2, D3, c2)


def beamformer_objective(coeffs, w):
    """w^H D1 w - c1, i.e. minus the summed surrogate rates."""
    return float(np.real(np.vdot(w, coeffs.D1 @ w))) - coeffs.c1


def radar_constraint_value(coeffs, w):
    """Left-hand side of the difference-of-convex radar constraint."""
    return float(np.real(np.vdot(w, coeffs.D2 @ w) - np.vdot(w, coeffs.D3 @ w))) + coeffs.c2


def build_beamformer_qcqp(eff, vars, aux, config, w0, coeffs=None):
    """Convex restriction around ``w0``: w^H D3 w is replaced by its tangent plane."""
    c = coeffs if coeffs is not None else beamformer_coefficients(eff, vars, aux, config)
    n = w0.size
    constraints = []
    if config.sensing:
        d3 = c.D3.conj().T @ w0
        c2_hat = c.c2 + float(np.real(np.vdot(w0, c.D3 @ w0)))
        constraints.append(qcqp.QuadForm(c.D2, d3, c2_hat))
    constraints.append(qcqp.QuadForm(np.eye(n), np.zeros(n), -config.p_bs))
    return qcqp.QcqpProblem(qcqp.QuadForm(c.D1, np.zeros(n), -c.c1), constraints,
                            tolerance=config.qcqp_tol, max_iterations=config.qcqp_max_iter)


def update_beamformer(eff, vars, aux, config):
    """Inner MM loop on the beamformer; returns ``(W, iterations)``.

    Each accepted iterate is feasible for the original radar constraint and
    does not increase the surrogate objective.
    """
    if not config.sensing:
        return np.zeros_like(vars.W), 0
    Nt = vars.W.shape[0]
    coeffs = beamformer_coefficients(eff, vars, aux, config)
    w = vec(vars.W)
    obj = beamformer_objective(coeffs, w)
    scale = max(abs(obj), 1.0)
    rhs_scale = max(coeffs.c2, np.finfo(float).tiny)
    if radar_constraint_value(coeffs, w) > 1e-6 * rhs_scale:
        raise FeasibilityLossError("beamformer start violates the radar constraint", block="W")
    it = 0
    for it in range(1, config.mm_max_iters + 1):
        problem = build_beamformer_qcqp(eff, vars, aux, config, w, coeffs)
        sol = qcqp.solve(problem, warm_start=w)
        if sol.status == qcqp.INFEASIBLE:
            if it == 1:
                raise FeasibilityLossError("beamformer subproblem infeasible", block="W")
            break
        w_new = sol.w_star
        new_obj = beamformer_objective(coeffs, w_new)
        feasible = (radar_constraint_value(coeffs, w_new) <= 1e-9 * rhs_scale
                    and np.vdot(w_new, w_new).real <= config.p_bs * (1.0 + 1e-12))
        if not feasible or new_obj > obj + 1e-12 * scale:
            break
        change = abs(obj - new_obj) / scale
        w, obj = w_new, new_obj
        if change < config.mm_tol:
            break
    return unvec(w, Nt), it


# ---------------------------------------------------------------------------
# user powers
# ---------------------------------------------------------------------------

@dataclass
class PowerCoefficients:
    a: np.ndarray
    b: np.ndarray
    d: np.ndarray
    c3: float
    c3_hat: float


def power_coefficients(eff, vars, aux, config):
    sigma = config.sigma_r_sq
    wk = aux.omega * np.abs(aux.beta) ** 2
    inner, echo, leak, noise = _filter_terms(eff, vars.W, vars.q, vars.u, sigma)
    a = wk @ np.abs(inner) ** 2
    b = -2.0 * np.real(aux.omega * aux.beta.conj() * np.diag(inner))
    c3 = float(np.sum(np.log(aux.omega) - aux.omega - wk * (echo + leak + noise) + 1.0))
    u0 = vars.u0
    d = np.abs(eff.hU @ u0.conj()) ** 2
    echo0 = np.sum(np.abs(u0.conj() @ eff.H @ vars.W) ** 2)
    leak0 = np.sum(np.abs(u0.conj() @ eff.G @ vars.W) ** 2)
    c3_hat = float(echo0 / config.gamma_r - leak0 - sigma * np.vdot(u0, u0).real)
    return PowerCoefficients(a, b, d, c3, c3_hat)


def power_objective(coeffs, q):
    return float(coeffs.a @ q + coeffs.b @ np.sqrt(q) - coeffs.c3)


def solve_power(coeffs, p_max, sensing=True, q_start=None, tol=1e-8, max_iter=500):
    """Minimize sum a t^2 + b t over 0 <= t <= sqrt(p_max) (and the radar
    form sum d t^2 <= c3_hat when sensing); returns q = t^2.

    Raises :class:`FeasibilityLossError` when the radar form cannot hold.
    """
    c = coeffs
    K = c.a.size
    constraints = []
    if sensing:
        if c.c3_hat < 0:
            raise FeasibilityLossError("radar constraint cannot hold for any q >= 0", block="q")
        constraints.append(qcqp.QuadForm(np.diag(c.d), np.zeros(K), -c.c3_hat))
    for k in range(K):
        e = np.zeros(K)
        e[k] = 1.0
        constraints.append(qcqp.QuadForm(np.diag(e), np.zeros(K), -p_max[k]))
        constraints.append(qcqp.QuadForm(np.zeros((K, K)), 0.5 * e, 0.0))
    problem = qcqp.QcqpProblem(qcqp.QuadForm(np.diag(c.a), -0.5 * c.b, -c.c3), constraints,
                               tolerance=tol, max_iterations=max_iter)
    q_start = np.zeros(K) if q_start is None else q_start
    t0 = np.sqrt(np.clip(q_start, 0.0, p_max))
    sol = qcqp.solve(problem, warm_start=t0.astype(complex))
    if sol.status == qcqp.INFEASIBLE:
        raise FeasibilityLossError("power subproblem infeasible", block="q")
    t = np.clip(np.real(sol.w_star), 0.0, np.sqrt(p_max))
    return t ** 2


def update_power(eff, vars, aux, config):
    """Optimal powers through the substitution t_k = sqrt(q_k)."""
    c = power_coefficients(eff, vars, aux, config)
    q_new = solve_power(c, config.p_user, config.sensing, vars.q,
                        config.qcqp_tol, config.qcqp_max_iter)
    radar_ok = (not config.sensing) or c.d @ q_new <= c.c3_hat
    if not radar_ok or power_objective(c, q_new) > power_objective(c, vars.q):
        return vars.q.copy()
    return q_new


# ---------------------------------------------------------------------------
# user filters
# ---------------------------------------------------------------------------

def user_filter_coefficients(eff, vars, aux, sigma_r_sq):
    """Matrices F_k and vectors h~_k of the per-user quadratic problems."""
    Nr = eff.hU.shape[1]
    HW = eff.H @ vars.W
    GW = eff.G @ vars.W
    C = (eff.hU.T * vars.q) @ eff.hU.conj() + HW @ HW.conj().T + GW @ GW.conj().T \
        + sigma_r_sq * np.eye(Nr)
    wk = aux.omega * np.abs(aux.beta) ** 2
    F = wk[:, None, None] * C[None, :, :]
    h_tilde = (aux.omega * aux.beta.conj() * np.sqrt(vars.q))[:, None] * eff.hU
    return F, h_tilde


def solve_user_filter(F, h_tilde):
    """Stationary point F^{-1} h~ of u^H F u - 2 Re(h~^H u)."""
    return linalg.solve(F, h_tilde, assume_a="pos")


def update_user_filters(eff, vars, aux, sigma_r_sq):
    """Closed-form user filters; a silent user keeps its previous filter."""
    F, h_tilde = user_filter_coefficients(eff, vars, aux, sigma_r_sq)
    U = vars.u.copy()
    for k in range(U.shape[0]):
        if aux.omega[k] * abs(aux.beta[k]) ** 2 == 0.0:
            continue
        U[k] = solve_user_filter(F[k], h_tilde[k])
    return U


# ---------------------------------------------------------------------------
# radar filter
# ---------------------------------------------------------------------------

def radar_filter_matrices(eff, vars, config):
    """E1 (interference-plus-noise) and E2 (echo / Gamma_r)."""
    Nr = eff.hU.shape[1]
    HW = eff.H @ vars.W
    GW = eff.G @ vars.W
    E1 = (eff.hU.T * vars.q) @ eff.hU.conj() + GW @ GW.conj().T + config.sigma_r_sq * np.eye(Nr)
    E2 = HW @ HW.conj().T / config.gamma_r
    return E1, E2


def echo_minorant(E2, u_hat, u):
    """Tangent-plane lower bound of u^H E2 u at ``u_hat`` (E2 PSD).

    The radar filter MM step maximizes this bound minus u^H E1 u.
    """
    return float(2.0 * np.real(np.vdot(u_hat, E2 @ u)) - np.real(np.vdot(u_hat, E2 @ u_hat)))


def radar_filter_mm(E1, E2, u0, tol=1e-6, max_iters=30):
    """Normalized MM iteration u <- E1^{-1} E2 u / ||.||.

    Returns ``(u, iterations, degenerate)``; ``degenerate`` is true when
    ``E2 u`` vanishes, in which case ``u0`` is returned unchanged.
    """
    cho = linalg.cho_factor(E1, lower=True)
    u = u0 / np.linalg.norm(u0)
    it = 0
    for it in range(1, max_iters + 1):
        v = linalg.cho_solve(cho, E2.conj().T @ u)
        nv = np.linalg.norm(v)
        if nv <= np.finfo(float).tiny or not np.isfinite(nv):
            return u0.copy(), it, True
        v /= nv
        sin_angle = np.sqrt(max(0.0, 1.0 - abs(np.vdot(u, v)) ** 2))
        u = v
        if sin_angle < tol:
            break
    return u, it, False


def update_radar_filter(eff, vars, config):
    """Returns ``(u0, iterations)``; the radar SINR never decreases."""
    if not config.sensing:
        return vars.u0.copy(), 0
    start_sinr = radar_sinr(eff, vars, config.sigma_r_sq)
    if start_sinr < config.gamma_r * (1.0 - 1e-6):
        raise FeasibilityLossError("radar filter start is infeasible", block="u0")
    E1, E2 = radar_filter_matrices(eff, vars, config)
    u, it, degenerate = radar_filter_mm(E1, E2, vars.u0, config.mm_tol, config.mm_max_iters)
    if degenerate:
        return vars.u0.copy(), it
    trial = vars.copy()
    trial.u0 = u
    if radar_sinr(eff, trial, config.sigma_r_sq) < start_sinr:
        return vars.u0.copy(), it
    return u, it
