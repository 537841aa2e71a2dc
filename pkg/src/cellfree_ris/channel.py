"""Channel synthesis for RIS-aided cell-free downlink scenarios.

Array layout used throughout the package::

    h_direct  (L, K, Nt, Nr)   AP l -> user k, stored as H_d,(l,k)
    h_ris     (R, K, M, Nr)    RIS r -> user k, stored as H_r,(r,k)
    g         (L, R, M, Nt)    AP l -> RIS r, stored as G_(l,r)

The equivalent (downlink) channel of AP l towards user k is

    H_(l,k)^H = H_d,(l,k)^H + h_k^H Theta G_l

where ``h_k`` and ``G_l`` stack the per-RIS blocks vertically and
``Theta = diag(phi)``.  Functions here return ``H_(l,k)`` itself (Nt x Nr).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidScenario

__all__ = [
    "SystemDims",
    "FadingParams",
    "ScenarioConfig",
    "ChannelSet",
    "dbm_to_watts",
    "large_scale_gain",
    "default_ap_positions",
    "default_ris_positions",
    "paper_scenario",
    "generate_channels",
    "aggregate_ris_views",
    "effective_channel",
    "effective_channels",
    "stack_user_channel",
    "stacked_channels",
]

MIN_DISTANCE = 0.1


def dbm_to_watts(p_dbm):
    """Convert dBm to linear watts."""
    return 10.0 ** ((np.asarray(p_dbm, dtype=float) - 30.0) / 10.0)


@dataclass(frozen=True)
class SystemDims:
    L: int
    K: int
    R: int
    M: int
    Nt: int
    Nr: int

    def __post_init__(self):
        for name in ("L", "K", "R", "M", "Nt", "Nr"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise InvalidScenario(f"dims.{name} must be an integer >= 1, got {value!r}")

    @property
    def RM(self) -> int:
        return self.R * self.M

    def replace(self, **changes) -> "SystemDims":
        values = {n: getattr(self, n) for n in ("L", "K", "R", "M", "Nt", "Nr")}
        values.update(changes)
        return SystemDims(**values)


@dataclass(frozen=True)
class FadingParams:
    """Path-loss and small-scale fading parameters.

    Large-scale gain is ``10**(-pathloss_reference_db/10) * d**(-exponent)``.
    ``small_scale`` selects the model for RIS-involved links; AP-user links
    are always Rayleigh.
    """

    pathloss_reference_db: float = 30.0
    exponent_ap_user: float = 3.5
    exponent_ap_ris: float = 2.2
    exponent_ris_user: float = 2.2
    rician_k_ris_links: float = 10.0 ** 0.3
    small_scale: str = "rician"

    def __post_init__(self):
        for name in ("exponent_ap_user", "exponent_ap_ris", "exponent_ris_user"):
            if getattr(self, name) < 2:
                raise InvalidScenario(f"fading.{name} must be >= 2")
        if self.rician_k_ris_links < 0:
            raise InvalidScenario("fading.rician_k_ris_links must be >= 0")
        if self.small_scale not in ("rayleigh", "rician"):
            raise InvalidScenario(
                f"fading.small_scale must be 'rayleigh' or 'rician', got {self.small_scale!r}"
            )


def _as_vector(value, n, name):
    arr = np.array(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    if arr.shape != (n,):
        raise InvalidScenario(f"{name} must have length {n}, got shape {arr.shape}")
    return arr


def _as_points(value, n, name):
    arr = np.array(value, dtype=float)
    if arr.shape != (n, 3):
        raise InvalidScenario(f"{name} must be {n} 3D points, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    """A fully specified simulation scenario.

    Powers are linear watts. ``user_region`` is a ``(2, 3)`` array holding
    the low and high corners of the box users are dropped into.
    """

    dims: SystemDims
    ap_positions: np.ndarray
    ris_positions: np.ndarray
    user_region: np.ndarray
    p_max: np.ndarray
    noise_power: np.ndarray
    weights: np.ndarray
    fading: FadingParams = field(default_factory=FadingParams)
    seed: int = 0

    def __post_init__(self):
        d = self.dims
        set_ = object.__setattr__
        set_(self, "ap_positions", _as_points(self.ap_positions, d.L, "ap_positions"))
        set_(self, "ris_positions", _as_points(self.ris_positions, d.R, "ris_positions"))
        region = np.array(self.user_region, dtype=float)
        if region.shape != (2, 3) or np.any(region[1] < region[0]):
            raise InvalidScenario("user_region must be [[xlo, ylo, zlo], [xhi, yhi, zhi]] with lo <= hi")
        set_(self, "user_region", region)
        set_(self, "p_max", _as_vector(self.p_max, d.L, "p_max"))
        set_(self, "noise_power", _as_vector(self.noise_power, d.K, "noise_power"))
        set_(self, "weights", _as_vector(self.weights, d.K, "weights"))
        for name in ("p_max", "noise_power", "weights"):
            arr = getattr(self, name)
            if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
                raise InvalidScenario(f"{name} must be strictly positive")
            arr.setflags(write=False)
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidScenario("seed must fit in an unsigned 64-bit integer")
        set_(self, "seed", int(self.seed))

    def with_changes(self, **changes) -> "ScenarioConfig":
        values = {
            "dims": self.dims,
            "ap_positions": self.ap_positions,
            "ris_positions": self.ris_positions,
            "user_region": self.user_region,
            "p_max": self.p_max,
            "noise_power": self.noise_power,
            "weights": self.weights,
            "fading": self.fading,
            "seed": self.seed,
        }
        values.update(changes)
        return ScenarioConfig(**values)


def default_ap_positions(L):
    """AP l (0-based) at (40 l, -50, 3)."""
    return np.array([[40.0 * l, -50.0, 3.0] for l in range(L)])


def default_ris_positions(R):
    """RISs on facades at y=10 m, z=6 m: x = 60, 100, 140, ..."""
    return np.array([[60.0 + 40.0 * r, 10.0, 6.0] for r in range(R)])


DEFAULT_USER_REGION = np.array([[20.0, 0.0, 1.5], [120.0, 20.0, 1.5]])


def paper_scenario(
    L=5, K=4, R=2, M=100, Nt=3, Nr=2, p_max_dbm=0.0, noise_dbm=-80.0, seed=0, fading=None
) -> ScenarioConfig:
    """Evaluation layout with the standard AP/RIS coordinates."""
    dims = SystemDims(L=L, K=K, R=R, M=M, Nt=Nt, Nr=Nr)
    return ScenarioConfig(
        dims=dims,
        ap_positions=default_ap_positions(L),
        ris_positions=default_ris_positions(R),
        user_region=DEFAULT_USER_REGION,
        p_max=dbm_to_watts(p_max_dbm),
        noise_power=dbm_to_watts(noise_dbm),
        weights=1.0,
        fading=fading or FadingParams(),
        seed=seed,
    )


def large_scale_gain(distance, exponent, reference_db):
    """Power gain ``10**(-reference_db/10) * d**(-exponent)``."""
    distance = np.asarray(distance, dtype=float)
    return 10.0 ** (-reference_db / 10.0) * distance ** (-exponent)


@dataclass(frozen=True, eq=False)
class ChannelSet:
    h_direct: np.ndarray
    h_ris: np.ndarray
    g: np.ndarray
    user_positions: np.ndarray
    realization_index: int = 0

    def __post_init__(self):
        L, K, Nt, Nr = self.h_direct.shape
        R, K2, M, Nr2 = self.h_ris.shape
        L2, R2, M2, Nt2 = self.g.shape
        if (L, K, Nt, Nr, R, M) != (L2, K2, Nt2, Nr2, R2, M2):
            raise InvalidScenario("inconsistent channel array shapes")
        for name in ("h_direct", "h_ris", "g", "user_positions"):
            arr = getattr(self, name)
            if not np.all(np.isfinite(arr)):
                raise InvalidScenario(f"non-finite entries in {name}")
            arr.setflags(write=False)

    @property
    def dims(self) -> SystemDims:
        L, K, Nt, Nr = self.h_direct.shape
        R, _, M, _ = self.h_ris.shape
        return SystemDims(L=L, K=K, R=R, M=M, Nt=Nt, Nr=Nr)

    @property
    def h_stacked(self) -> np.ndarray:
        """All ``h_k`` as a ``(K, RM, Nr)`` array."""
        R, K, M, Nr = self.h_ris.shape
        return self.h_ris.transpose(1, 0, 2, 3).reshape(K, R * M, Nr)

    @property
    def g_stacked(self) -> np.ndarray:
        """All ``G_l`` as an ``(L, RM, Nt)`` array."""
        L, R, M, Nt = self.g.shape
        return self.g.reshape(L, R * M, Nt)


def _ula(n, cosine):
    return np.exp(1j * np.pi * np.arange(n) * cosine)


def _cn(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def _link(rng, tx, rx, n_tx, n_rx, k_factor):
    """Unit-power fading block of shape (n_rx, n_tx) for one propagation link."""
    nlos = _cn(rng, (n_rx, n_tx))
    if k_factor is None or k_factor == 0:
        return nlos
    e = (rx - tx) / np.linalg.norm(rx - tx)
    los = np.outer(_ula(n_rx, -e[0]), _ula(n_tx, e[0]).conj())
    return np.sqrt(k_factor / (k_factor + 1.0)) * los + np.sqrt(1.0 / (k_factor + 1.0)) * nlos


def _check_distances(a, b, what):
    d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)
    if np.any(d < MIN_DISTANCE):
        raise InvalidScenario(f"degenerate geometry: {what} closer than {MIN_DISTANCE} m")
    return d


def generate_channels(config: ScenarioConfig, realization_index: int = 0) -> ChannelSet:
    """Draw one channel realization.

    Each realization uses its own substream seeded by
    ``(config.seed, realization_index)``. User positions and direct links
    are drawn from a stream that does not depend on the RIS size, so sweeps
    over ``M`` share users and direct channels.
    """
    d = config.dims
    fad = config.fading
    root = np.random.SeedSequence([config.seed, int(realization_index)])
    ss_direct, ss_g, ss_h = root.spawn(3)
    rng = np.random.default_rng(ss_direct)

    lo, hi = config.user_region
    users = lo + (hi - lo) * rng.random((d.K, 3))
    aps, riss = config.ap_positions, config.ris_positions

    d_au = _check_distances(aps, users, "AP and user")
    d_ar = _check_distances(aps, riss, "AP and RIS")
    d_ru = _check_distances(riss, users, "RIS and user")

    ref = fad.pathloss_reference_db
    beta_au = large_scale_gain(d_au, fad.exponent_ap_user, ref)
    beta_ar = large_scale_gain(d_ar, fad.exponent_ap_ris, ref)
    beta_ru = large_scale_gain(d_ru, fad.exponent_ris_user, ref)
    k_ris = fad.rician_k_ris_links if fad.small_scale == "rician" else None

    h_direct = np.empty((d.L, d.K, d.Nt, d.Nr), dtype=complex)
    for l in range(d.L):
        for k in range(d.K):
            prop = _link(rng, aps[l], users[k], d.Nt, d.Nr, None)
            h_direct[l, k] = np.sqrt(beta_au[l, k]) * prop.conj().T

    rng = np.random.default_rng(ss_g)
    g = np.empty((d.L, d.R, d.M, d.Nt), dtype=complex)
    for l in range(d.L):
        for r in range(d.R):
            g[l, r] = np.sqrt(beta_ar[l, r]) * _link(rng, aps[l], riss[r], d.Nt, d.M, k_ris)

    rng = np.random.default_rng(ss_h)
    h_ris = np.empty((d.R, d.K, d.M, d.Nr), dtype=complex)
    for r in range(d.R):
        for k in range(d.K):
            prop = _link(rng, riss[r], users[k], d.M, d.Nr, k_ris)
            h_ris[r, k] = np.sqrt(beta_ru[r, k]) * prop.conj().T

    return ChannelSet(
        h_direct=h_direct,
        h_ris=h_ris,
        g=g,
        user_positions=users,
        realization_index=int(realization_index),
    )


def _phi(phases):
    return np.asarray(getattr(phases, "phi", phases), dtype=complex)


def aggregate_ris_views(cs: ChannelSet, k: int):
    """Return ``(h_k, [G_1, ..., G_L])`` with RIS blocks stacked vertically."""
    if not 0 <= k < cs.h_direct.shape[1]:
        raise IndexError(f"user index {k} out of range")
    g = cs.g_stacked
    return cs.h_stacked[k], [g[l] for l in range(g.shape[0])]


def effective_channel(cs: ChannelSet, phases, l: int, k: int) -> np.ndarray:
    """``H_(l,k) = H_d,(l,k) + G_l^H Theta^H h_k`` (Nt x Nr)."""
    phi = _phi(phases)
    h_k = cs.h_stacked[k]
    G_l = cs.g_stacked[l]
    return cs.h_direct[l, k] + G_l.conj().T @ (phi.conj()[:, None] * h_k)


def effective_channels(cs: ChannelSet, phases) -> np.ndarray:
    """All equivalent channels as an ``(L, K, Nt, Nr)`` array."""
    phi = _phi(phases)
    cascade = np.einsum("lmt,m,kmr->lktr", cs.g_stacked.conj(), phi.conj(), cs.h_stacked)
    return cs.h_direct + cascade


def stack_user_channel(cs: ChannelSet, phases, k: int) -> np.ndarray:
    """``H_k`` (L*Nt x Nr): the per-AP equivalent channels of user k stacked."""
    L, _, Nt, Nr = cs.h_direct.shape
    blocks = [effective_channel(cs, phases, l, k) for l in range(L)]
    return np.concatenate(blocks, axis=0)


def stacked_channels(cs_or_h, phases=None) -> np.ndarray:
    """``(K, L*Nt, Nr)`` array of every ``H_k``.

    Accepts either a ``ChannelSet`` plus phases, or an already-computed
    ``(L, K, Nt, Nr)`` equivalent-channel array.
    """
    if isinstance(cs_or_h, ChannelSet):
        H = effective_channels(cs_or_h, phases)
    else:
        H = np.asarray(cs_or_h)
    L, K, Nt, Nr = H.shape
    return H.transpose(1, 0, 2, 3).reshape(K, L * Nt, Nr)
