"""Per-user MMSE receive combining."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .metrics import _as_matrix

__all__ = ["CombinerSet", "build_wk", "mmse_combiner", "mmse_combiners", "initial_combiners"]


@dataclass(frozen=True, eq=False)
class CombinerSet:
    """Combiners ``u`` (K, Nr) with cached ``W_k`` (K, Nr, Nr) and ``a_k`` (K, Nr)."""

    u: np.ndarray
    w: np.ndarray | None = None
    a: np.ndarray | None = None

    @property
    def K(self) -> int:
        return self.u.shape[0]


def build_wk(H_k, F, k):
    """Return ``(W_k, a_k)`` for user ``k``.

    ``W_k = sum_i (H_k^H f_i)(H_k^H f_i)^H`` is accumulated as ``E E^H`` and
    then symmetrized so it is Hermitian to the last bit.
    """
    F = _as_matrix(F)
    E = H_k.conj().T @ F
    W = E @ E.conj().T
    W = 0.5 * (W + W.conj().T)
    return W, E[:, k].copy()


def mmse_combiner(W_k, a_k, sigma2_k):
    """``u_k = (W_k + sigma2_k I)^{-1} a_k`` via a Cholesky solve."""
    if not sigma2_k > 0:
        raise ValueError("sigma2_k must be strictly positive")
    A = W_k + sigma2_k * np.eye(W_k.shape[0])
    return cho_solve(cho_factor(A, lower=True), a_k)


def mmse_combiners(Hs, F, noise) -> CombinerSet:
    """MMSE combiners for all users given stacked channels ``Hs`` (K, L*Nt, Nr)."""
    K, _, Nr = Hs.shape
    noise = np.broadcast_to(np.asarray(noise, dtype=float), (K,))
    u = np.empty((K, Nr), dtype=complex)
    w = np.empty((K, Nr, Nr), dtype=complex)
    a = np.empty((K, Nr), dtype=complex)
    for k in range(K):
        w[k], a[k] = build_wk(Hs[k], F, k)
        u[k] = mmse_combiner(w[k], a[k], noise[k])
    return CombinerSet(u=u, w=w, a=a)


def initial_combiners(K, Nr) -> CombinerSet:
    """All-ones combiners used to start the alternating optimization."""
    return CombinerSet(u=np.ones((K, Nr), dtype=complex))
