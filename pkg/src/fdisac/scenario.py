"""Scenario configuration and seeded channel generation.

Every link is drawn from its own child stream of a ``numpy.random.SeedSequence``
so that changing one dimension (e.g. the number of RIS elements) leaves all
other links untouched. RIS-indexed draws are laid out element-major, which
makes an ``M``-element surface a prefix of any larger one for the same seed.
"""

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .errors import InvalidInputError

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

__all__ = [
    "ScenarioConfig",
    "ChannelSet",
    "paper_config",
    "desk_config",
    "load_config",
    "dbm_to_watt",
    "watt_to_dbm",
    "db_to_linear",
    "path_loss",
    "ula_steering",
    "draw_channels",
]

# Child-stream indices; never reorder (changes every stored draw).
_STREAMS = ("users", "g_t", "g_r", "h_bu", "h_ru", "h_s", "alpha")


def dbm_to_watt(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def watt_to_dbm(watt):
    return 10.0 * np.log10(np.asarray(watt, dtype=float)) + 30.0


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


@dataclass(frozen=True)
class ScenarioConfig:
    """All physical and algorithmic parameters of one experiment.

    Powers are in dBm, ratios in dB, positions in meters. ``p_user_dbm`` may be
    a scalar (same budget for every user) or a sequence of length
    ``num_users``.
    """

    num_users: int = 4
    num_ris_elements: int = 100
    num_tx_antennas: int = 4
    num_rx_antennas: int = 4
    bs_position: tuple = (0.0, 0.0, 4.5)
    ris_position: tuple = (0.0, -100.0, 2.5)
    target_position: tuple = (0.0, 6.0, 12.5)
    user_placement_radius: float = 10.0
    user_altitude: float = 1.5
    p_bs_dbm: float = 30.0
    p_user_dbm: object = 23.0
    noise_dbm: float = -90.0
    gamma_r_db: float = 5.0
    sigma_t_sq: float = 1.0
    rician_si_db: float = 5.0
    rician_bs_ris_db: float = 4.0
    alpha_bu: float = 3.6
    alpha_br: float = 2.7
    alpha_ru: float = 2.4
    alpha_bt: float = 2.2
    alpha_tb: float = 2.2
    rho_si_db: float = -110.0
    reference_pathloss_db: float = -30.0
    seed: int = 0
    # problem variants used by the baselines
    sensing: bool = True
    optimize_ris: bool = True
    # subsolver and loop controls
    qcqp_tol: float = 1e-8
    qcqp_max_iter: int = 500
    mm_tol: float = 1e-6
    mm_max_iters: int = 30
    pdd_rho0: float = 0.1
    pdd_c: float = 0.85
    pdd_eta0: float = 0.1
    pdd_eta_decay: float = 0.9
    pdd_inner_tol: float = 1e-8
    pdd_inner_max: int = 100
    pdd_outer_max: int = 50
    pdd_tol: object = None
    pdd_step_tol: float = 1e-6
    pdd_newton_max: int = 5000
    outer_tol: float = 1e-4
    outer_max: int = 50
    init_max_halvings: int = 20

    def __post_init__(self):
        for name in ("num_users", "num_ris_elements", "num_tx_antennas", "num_rx_antennas"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise InvalidInputError(f"{name} must be a positive integer, got {value!r}")
        if self.user_placement_radius <= 0:
            raise InvalidInputError("user_placement_radius must be positive")
        if self.sigma_t_sq <= 0:
            raise InvalidInputError("sigma_t_sq must be positive")
        p_user = np.atleast_1d(np.asarray(self.p_user_dbm, dtype=float))
        if p_user.size not in (1, self.num_users):
            raise InvalidInputError("p_user_dbm must be scalar or have one entry per user")
        for name in ("bs_position", "ris_position", "target_position"):
            if np.asarray(getattr(self, name), dtype=float).shape != (3,):
                raise InvalidInputError(f"{name} must be a 3-vector")
        if not 0.0 < self.pdd_c < 1.0:
            raise InvalidInputError("pdd_c must lie in (0, 1)")
        if self.pdd_rho0 <= 0 or self.pdd_eta0 <= 0:
            raise InvalidInputError("pdd_rho0 and pdd_eta0 must be positive")

    # -- derived linear quantities ---------------------------------------
    @property
    def p_bs(self):
        """BS power budget in watts."""
        return float(dbm_to_watt(self.p_bs_dbm))

    @property
    def p_user(self):
        """Per-user power budgets in watts, shape ``(K,)``."""
        p = np.atleast_1d(dbm_to_watt(self.p_user_dbm))
        return np.broadcast_to(p, (self.num_users,)).astype(float)

    @property
    def sigma_r_sq(self):
        return float(dbm_to_watt(self.noise_dbm))

    @property
    def gamma_r(self):
        return float(db_to_linear(self.gamma_r_db))

    @property
    def phase_tol(self):
        if self.pdd_tol is not None:
            return float(self.pdd_tol)
        return 1e-6 * np.sqrt(self.num_ris_elements)

    @property
    def phase_step_tol(self):
        return float(self.pdd_step_tol)

    def with_updates(self, **changes):
        return replace(self, **changes)


def paper_config(**overrides):
    """Full-size setting: K=4, M=100, Nt=Nr=4."""
    return ScenarioConfig(**overrides)


def desk_config(**overrides):
    """Small setting used by the acceptance suite: K=2, M=16, Nt=Nr=4."""
    base = dict(num_users=2, num_ris_elements=16)
    base.update(overrides)
    return ScenarioConfig(**base)


_PRESETS = {"paper": paper_config, "desk": desk_config}


def load_config(path=None, preset="desk", **overrides):
    """Build a config from a preset, an optional TOML file and keyword overrides.

    The file holds flat ``key = value`` pairs named after the
    :class:`ScenarioConfig` fields; tables are flattened, so
    ``[pathloss] alpha_bu = 3.0`` is equivalent to ``alpha_bu = 3.0``. A
    top-level ``preset`` key selects the base preset.
    """
    values = {}
    if path is not None:
        with open(Path(path), "rb") as fh:
            raw = tomllib.load(fh)
        for key, value in raw.items():
            if isinstance(value, dict):
                values.update(value)
            else:
                values[key] = value
    preset = values.pop("preset", preset)
    if preset not in _PRESETS:
        raise InvalidInputError(f"unknown preset {preset!r}")
    values.update(overrides)
    known = {f.name for f in fields(ScenarioConfig)}
    unknown = set(values) - known
    if unknown:
        raise InvalidInputError(f"unknown config keys: {sorted(unknown)}")
    for key in ("bs_position", "ris_position", "target_position"):
        if key in values:
            values[key] = tuple(float(v) for v in values[key])
    if isinstance(values.get("p_user_dbm"), list):
        values["p_user_dbm"] = tuple(values["p_user_dbm"])
    return _PRESETS[preset](**values)


def path_loss(distance, exponent, reference_db=-30.0):
    """Linear power gain ``10**(reference_db/10) * distance**(-exponent)``."""
    distance = np.asarray(distance, dtype=float)
    if np.any(distance <= 0):
        raise InvalidInputError("distance must be positive")
    return 10.0 ** (reference_db / 10.0) * distance ** (-exponent)


def ula_steering(num_elements, direction):
    """Half-wavelength ULA response toward ``direction``.

    The array axis is the z-axis, so the phase progression is
    ``pi * n * cos(theta)`` with ``cos(theta)`` the z-component of the unit
    direction vector.
    """
    direction = np.asarray(direction, dtype=float)
    norm = np.linalg.norm(direction)
    if norm == 0:
        raise InvalidInputError("steering direction must be nonzero")
    cos_theta = direction[2] / norm
    return np.exp(1j * np.pi * np.arange(num_elements) * cos_theta)


def _cn(rng, shape):
    """Standard circular complex Gaussian; trailing axis holds (re, im)."""
    x = rng.standard_normal(tuple(shape) + (2,))
    return (x[..., 0] + 1j * x[..., 1]) / np.sqrt(2.0)


def _rician(los, nlos, kappa_db):
    kappa = db_to_linear(kappa_db)
    return np.sqrt(kappa / (1.0 + kappa)) * los + np.sqrt(1.0 / (1.0 + kappa)) * nlos


@dataclass
class ChannelSet:
    """Channel matrices for one scenario realization.

    Shapes: ``G_t`` (M, Nt), ``G_r`` (M, Nr), ``h_BU`` (K, Nr), ``h_RU`` (K, M),
    ``h_T`` (Nt,), ``h_R`` (Nr,), ``H_s`` (Nt, Nr); ``alpha`` is a complex scalar.
    Per-link path losses and the user positions are carried along for
    diagnostics.
    """

    G_t: np.ndarray
    G_r: np.ndarray
    h_BU: np.ndarray
    h_RU: np.ndarray
    h_T: np.ndarray
    h_R: np.ndarray
    H_s: np.ndarray
    alpha: complex
    user_positions: np.ndarray = field(default=None)
    pl_bu: np.ndarray = field(default=None)
    pl_ru: np.ndarray = field(default=None)
    pl_br: float = None
    pl_bt: float = None
    pl_tb: float = None

    @property
    def dims(self):
        """``(K, M, Nt, Nr)``."""
        return self.h_BU.shape[0], self.G_t.shape[0], self.G_t.shape[1], self.G_r.shape[1]

    def check(self):
        K, M, Nt, Nr = self.dims
        expected = {
            "G_t": (M, Nt), "G_r": (M, Nr), "h_BU": (K, Nr), "h_RU": (K, M),
            "h_T": (Nt,), "h_R": (Nr,), "H_s": (Nt, Nr),
        }
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise InvalidInputError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise InvalidInputError(f"{name} has non-finite entries")
        if not np.isfinite(self.alpha):
            raise InvalidInputError("alpha is not finite")
        return self

    def copy(self, **changes):
        out = replace(self, **changes)
        for name in ("G_t", "G_r", "h_BU", "h_RU", "h_T", "h_R", "H_s"):
            if name not in changes:
                setattr(out, name, getattr(self, name).copy())
        return out

    def without_ris(self):
        """Same realization with the reflected paths removed."""
        return self.copy(G_r=np.zeros_like(self.G_r), h_RU=np.zeros_like(self.h_RU))


def _distance(a, b):
    d = float(np.linalg.norm(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))
    if d <= 0:
        raise InvalidInputError("coincident positions in scenario geometry")
    return d


def draw_channels(config, seed=None):
    """Draw every channel of one realization; pure in ``(config, seed)``.

    ``seed`` defaults to ``config.seed``.
    """
    seed = config.seed if seed is None else seed
    if seed < 0:
        raise InvalidInputError("seed must be nonnegative")
    K = config.num_users
    M = config.num_ris_elements
    Nt, Nr = config.num_tx_antennas, config.num_rx_antennas
    ref = config.reference_pathloss_db

    rngs = dict(zip(_STREAMS, (np.random.default_rng(s)
                               for s in np.random.SeedSequence(seed).spawn(len(_STREAMS)))))

    bs = np.asarray(config.bs_position, dtype=float)
    ris = np.asarray(config.ris_position, dtype=float)
    target = np.asarray(config.target_position, dtype=float)

    # users: uniform in the x >= 0 half-disc centred on the RIS footprint
    uv = rngs["users"].random((K, 2))
    r = config.user_placement_radius * np.sqrt(uv[:, 0])
    theta = np.pi * (uv[:, 1] - 0.5)
    users = np.column_stack([
        ris[0] + r * np.cos(theta),
        ris[1] + r * np.sin(theta),
        np.full(K, config.user_altitude),
    ])

    d_br = _distance(bs, ris)
    d_bt = _distance(bs, target)
    d_bu = np.array([_distance(bs, u) for u in users])
    d_ru = np.array([_distance(ris, u) for u in users])

    pl_br = float(path_loss(d_br, config.alpha_br, ref))
    pl_bt = float(path_loss(d_bt, config.alpha_bt, ref))
    pl_tb = float(path_loss(d_bt, config.alpha_tb, ref))
    pl_bu = path_loss(d_bu, config.alpha_bu, ref)
    pl_ru = path_loss(d_ru, config.alpha_ru, ref)

    # BS <-> RIS: Rician, rank-one LoS from the array responses
    a_ris = ula_steering(M, bs - ris)
    a_tx = ula_steering(Nt, ris - bs)
    a_rx = ula_steering(Nr, ris - bs)
    G_t = np.sqrt(pl_br) * _rician(np.outer(a_ris, a_tx.conj()), _cn(rngs["g_t"], (M, Nt)),
                                   config.rician_bs_ris_db)
    G_r = np.sqrt(pl_br) * _rician(np.outer(a_ris, a_rx.conj()), _cn(rngs["g_r"], (M, Nr)),
                                   config.rician_bs_ris_db)

    h_BU = np.sqrt(pl_bu)[:, None] * _cn(rngs["h_bu"], (K, Nr))
    h_RU = np.sqrt(pl_ru)[:, None] * _cn(rngs["h_ru"], (M, K)).T

    # target links: unit-modulus steering; the round-trip loss lives in alpha
    h_T = ula_steering(Nt, target - bs)
    h_R = ula_steering(Nr, target - bs)
    alpha = complex(np.sqrt(config.sigma_t_sq * pl_bt * pl_tb) * _cn(rngs["alpha"], ())[()])

    # self-interference: fixed random unit-Frobenius LoS + Rayleigh, then
    # rescaled so the mean squared entry is exactly rho_SI
    si_los = _cn(rngs["h_s"], (Nt, Nr))
    si_los *= np.sqrt(Nt * Nr) / np.linalg.norm(si_los)
    H_s = _rician(si_los, _cn(rngs["h_s"], (Nt, Nr)), config.rician_si_db)
    H_s *= np.sqrt(db_to_linear(config.rho_si_db) / np.mean(np.abs(H_s) ** 2))

    return ChannelSet(
        G_t=G_t, G_r=G_r, h_BU=h_BU, h_RU=np.ascontiguousarray(h_RU), h_T=h_T, h_R=h_R,
        H_s=H_s, alpha=alpha, user_positions=users, pl_bu=pl_bu, pl_ru=pl_ru,
        pl_br=pl_br, pl_bt=pl_bt, pl_tb=pl_tb,
    ).check()
