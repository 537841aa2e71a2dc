"""SINR, MSE and rate bookkeeping for the downlink.

All per-user functions take the stacked channel ``H_k`` (L*Nt x Nr), the
precoding matrix ``F`` (L*Nt x K, column i is f_i), the combiner ``u_k``
and the user index ``k`` whose symbol is the desired one.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import stacked_channels

__all__ = [
    "RATE_LOG_BASE",
    "UserMetrics",
    "NetworkMetrics",
    "sinr",
    "analytic_mse",
    "weighted_sum_mse",
    "network_metrics",
    "empirical_mse",
]

RATE_LOG_BASE = 2.0


@dataclass(frozen=True)
class UserMetrics:
    sinr: float
    mse: float
    rate: float


@dataclass(frozen=True)
class NetworkMetrics:
    per_user: tuple
    weighted_sum_mse: float
    sum_rate: float

    @property
    def rates(self):
        return np.array([m.rate for m in self.per_user])


def _as_matrix(F):
    return np.asarray(getattr(F, "matrix", F))


def _as_combiners(combiners):
    return np.asarray(getattr(combiners, "u", combiners))


def _responses(H_k, F, u_k):
    # u_k^H H_k^H f_i for every i
    return (H_k @ u_k).conj() @ F


def sinr(H_k, F, u_k, sigma2_k, k) -> float:
    """Post-combining SINR of user ``k``; invariant to scaling of ``u_k``."""
    F = _as_matrix(F)
    u_k = np.asarray(u_k)
    unorm2 = float(np.vdot(u_k, u_k).real)
    if unorm2 == 0.0:
        raise ValueError("sinr undefined for a zero combiner")
    t = np.abs(_responses(H_k, F, u_k)) ** 2
    signal = t[k]
    interference = t.sum() - signal
    return float(signal / (interference + unorm2 * sigma2_k))


def analytic_mse(H_k, F, u_k, sigma2_k, k) -> float:
    """``E|u^H y_k - s_k|^2`` in closed form."""
    F = _as_matrix(F)
    u_k = np.asarray(u_k)
    t = _responses(H_k, F, u_k)
    unorm2 = float(np.vdot(u_k, u_k).real)
    return float(np.sum(np.abs(t) ** 2) - 2.0 * t[k].real + unorm2 * sigma2_k + 1.0)


def network_metrics(Hs, F, U, weights, noise) -> NetworkMetrics:
    """Aggregate metrics from stacked channels ``Hs`` of shape (K, L*Nt, Nr)."""
    F = _as_matrix(F)
    U = _as_combiners(U)
    K = Hs.shape[0]
    noise = np.broadcast_to(np.asarray(noise, dtype=float), (K,))
    weights = np.broadcast_to(np.asarray(weights, dtype=float), (K,))
    per_user = []
    for k in range(K):
        mse = analytic_mse(Hs[k], F, U[k], noise[k], k)
        if np.vdot(U[k], U[k]).real == 0.0:
            s = 0.0
        else:
            s = sinr(Hs[k], F, U[k], noise[k], k)
        rate = float(np.log1p(s) / np.log(RATE_LOG_BASE))
        per_user.append(UserMetrics(sinr=s, mse=mse, rate=rate))
    wsmse = float(sum(w * m.mse for w, m in zip(weights, per_user)))
    return NetworkMetrics(
        per_user=tuple(per_user),
        weighted_sum_mse=wsmse,
        sum_rate=float(sum(m.rate for m in per_user)),
    )


def weighted_sum_mse(channels, phases, F, combiners, weights, noise) -> NetworkMetrics:
    """Evaluate the weighted sum-MSE objective and per-user rates."""
    return network_metrics(stacked_channels(channels, phases), F, combiners, weights, noise)


def empirical_mse(H_k, F, u_k, sigma2_k, k, trials, rng, batch=20000):
    """Symbol-level Monte Carlo estimate of the MSE of user ``k``.

    Symbols are i.i.d. CN(0, 1), noise CN(0, sigma2_k I). Returns
    ``(mean, stderr)`` of ``|u_k^H y_k - s_k|^2``.
    """
    if trials < 1000:
        raise ValueError("empirical_mse needs at least 1000 trials")
    F = _as_matrix(F)
    u_k = np.asarray(u_k)
    K = F.shape[1]
    Nr = H_k.shape[1]
    # row vector u^H H^H F, so each trial costs one dot product
    gain = _responses(H_k, F, u_k)
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < trials:
        n = min(batch, trials - done)
        s = (rng.standard_normal((K, n)) + 1j * rng.standard_normal((K, n))) / np.sqrt(2.0)
        z = np.sqrt(sigma2_k / 2.0) * (
            rng.standard_normal((Nr, n)) + 1j * rng.standard_normal((Nr, n))
        )
        err = np.abs(gain @ s + u_k.conj() @ z - s[k]) ** 2
        total += err.sum()
        total_sq += (err**2).sum()
        done += n
    mean = total / trials
    var = max(total_sq / trials - mean**2, 0.0) * trials / (trials - 1)
    return float(mean), float(np.sqrt(var / trials))
