"""Design variables, effective channels and performance metrics.

Rates are in nats throughout.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

__all__ = [
    "DesignVariables",
    "EffectiveChannels",
    "ConstraintResiduals",
    "assemble_effective",
    "radar_sinr",
    "user_sinr",
    "user_sinrs",
    "sum_rate",
    "constraint_residuals",
]


@dataclass
class DesignVariables:
    """The five optimization blocks.

    ``W`` (Nt, Nt) probing beamformer, ``q`` (K,) user powers in watts,
    ``u0`` (Nr,) radar filter, ``u`` (K, Nr) user filters (row k is u_k) and
    ``phi`` (M,) RIS reflection coefficients.
    """

    W: np.ndarray
    q: np.ndarray
    u0: np.ndarray
    u: np.ndarray
    phi: np.ndarray

    def copy(self):
        return DesignVariables(self.W.copy(), self.q.copy(), self.u0.copy(),
                               self.u.copy(), self.phi.copy())


@dataclass(frozen=True)
class EffectiveChannels:
    """``H`` = alpha h_R h_T^H, ``G`` = G_r^H diag(phi) G_t + H_s^H and
    ``hU[k]`` = h_BU,k + G_r^H diag(phi) h_RU,k."""

    H: np.ndarray
    G: np.ndarray
    hU: np.ndarray


def assemble_effective(channels, phi):
    phi = np.asarray(phi)
    M = channels.G_t.shape[0]
    if phi.shape != (M,):
        raise InvalidInputError(f"phi has shape {phi.shape}, expected ({M},)")
    if channels.G_r.shape[0] != M or channels.h_RU.shape[1] != M:
        raise InvalidInputError("RIS dimension mismatch between channels")
    Gr_phi = channels.G_r.conj().T * phi  # G_r^H diag(phi), (Nr, M)
    H = channels.alpha * np.outer(channels.h_R, channels.h_T.conj())
    G = Gr_phi @ channels.G_t + channels.H_s.conj().T
    hU = channels.h_BU + channels.h_RU @ Gr_phi.T
    return EffectiveChannels(H=H, G=G, hU=hU)


def _check_filter(u, name):
    if not np.any(u):
        raise InvalidInputError(f"{name} is the zero vector")


def radar_sinr(eff, vars, sigma_r_sq):
    u0 = vars.u0
    _check_filter(u0, "u0")
    signal = np.sum(np.abs(u0.conj() @ eff.H @ vars.W) ** 2)
    users = np.sum(vars.q * np.abs(eff.hU @ u0.conj()) ** 2)
    leak = np.sum(np.abs(u0.conj() @ eff.G @ vars.W) ** 2)
    return float(signal / (users + leak + sigma_r_sq * np.vdot(u0, u0).real))


def _user_terms(eff, vars, sigma_r_sq):
    """Signal power and interference-plus-noise power per user."""
    U = vars.u
    cross = np.abs(U.conj() @ eff.hU.T) ** 2 * vars.q[None, :]  # [k, i] = q_i |u_k^H h_i|^2
    signal = np.diag(cross).copy()
    echo = np.sum(np.abs(U.conj() @ (eff.H @ vars.W)) ** 2, axis=1)
    leak = np.sum(np.abs(U.conj() @ (eff.G @ vars.W)) ** 2, axis=1)
    noise = sigma_r_sq * np.sum(np.abs(U) ** 2, axis=1)
    interference = cross.sum(axis=1) - signal + echo + leak + noise
    return signal, interference


def user_sinrs(eff, vars, sigma_r_sq):
    """SINR of every user, shape ``(K,)``."""
    for k, u in enumerate(vars.u):
        _check_filter(u, f"u[{k}]")
    signal, interference = _user_terms(eff, vars, sigma_r_sq)
    return signal / interference


def user_sinr(eff, vars, sigma_r_sq, k):
    _check_filter(vars.u[k], f"u[{k}]")
    return float(user_sinrs(eff, vars, sigma_r_sq)[k])


def sum_rate(eff, vars, sigma_r_sq):
    return float(np.sum(np.log1p(user_sinrs(eff, vars, sigma_r_sq))))


@dataclass(frozen=True)
class ConstraintResiduals:
    """Slacks of the radar, BS-power and user-power constraints (>= 0 means
    satisfied) plus the largest deviation of |phi_m| from one."""

    radar_slack: float
    power_slack: float
    user_power_slacks: np.ndarray
    modulus_deviation: float

    def feasible(self, tol=1e-6):
        return (self.radar_slack >= -tol and self.power_slack >= -tol
                and bool(np.all(self.user_power_slacks >= -tol))
                and self.modulus_deviation <= tol)


def constraint_residuals(eff, vars, config):
    """Residuals of the radar, power and unit-modulus constraints.

    When ``config.sensing`` is false the radar constraint is absent and its
    slack is reported as ``+inf``.
    """
    if config.sensing:
        radar = radar_sinr(eff, vars, config.sigma_r_sq) - config.gamma_r
    else:
        radar = np.inf
    q = np.asarray(vars.q, dtype=float)
    user_slacks = np.minimum(config.p_user - q, q)
    return ConstraintResiduals(
        radar_slack=float(radar),
        power_slack=float(config.p_bs - np.linalg.norm(vars.W) ** 2),
        user_power_slacks=user_slacks,
        modulus_deviation=float(np.max(np.abs(np.abs(vars.phi) - 1.0))),
    )
