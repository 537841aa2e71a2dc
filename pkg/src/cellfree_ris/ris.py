"""Passive beamforming: the RIS reflection-coefficient subproblem.

With combiners and precoders fixed, the phase-dependent part of the
weighted sum-MSE is a convex quadratic over the unit polydisc.  The
workspace stores it in column-vector form

    g2(phi) = phi^H Sigma phi + 2 Re(phi^H U)

so ``Sigma`` and ``U`` here are the complex conjugates of the row-vector
(``Phi = 1^T Theta``) versions.  ``Sigma`` is Hermitian PSD in either form.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalFailure
from .metrics import _as_combiners
from .precoding import Precoder

__all__ = [
    "PhaseShifts",
    "RisWorkspace",
    "P3Solution",
    "build_ris_workspace",
    "p3_objective",
    "project_unit_disc",
    "random_phases",
    "round_unit_modulus",
    "lipschitz_estimate",
    "solve_p3",
]

FEASIBILITY_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class PhaseShifts:
    """Reflection coefficients of all RIS elements, RIS-major order."""

    phi: np.ndarray

    def __post_init__(self):
        phi = np.array(self.phi, dtype=complex).reshape(-1)
        if np.any(np.abs(phi) > 1.0 + FEASIBILITY_SLACK):
            raise ValueError("reflection coefficients must satisfy |phi| <= 1")
        object.__setattr__(self, "phi", phi)

    @property
    def RM(self) -> int:
        return self.phi.size

    @property
    def row(self) -> np.ndarray:
        """``Phi = 1^T Theta`` as a 1 x RM row."""
        return self.phi[None, :]

    @property
    def theta(self) -> np.ndarray:
        """Block-diagonal ``Theta`` (RM x RM)."""
        return np.diag(self.phi)

    def per_ris(self, R) -> np.ndarray:
        return self.phi.reshape(R, -1)

    @classmethod
    def zeros(cls, RM) -> "PhaseShifts":
        return cls(np.zeros(RM, dtype=complex))


def random_phases(dims, rng) -> PhaseShifts:
    """Unit-modulus coefficients with i.i.d. uniform phases.

    ``dims`` may be a ``SystemDims`` or the element count ``RM``.
    """
    RM = getattr(dims, "RM", dims)
    return PhaseShifts(np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, size=int(RM))))


def project_unit_disc(phi) -> np.ndarray:
    """Euclidean projection onto ``{|phi_i| <= 1}``, element by element."""
    phi = np.asarray(getattr(phi, "phi", phi), dtype=complex)
    mag = np.abs(phi)
    return np.where(mag > 1.0, phi / np.where(mag > 1.0, mag, 1.0), phi)


def round_unit_modulus(phases) -> PhaseShifts:
    """Diagnostic: push every coefficient onto the unit circle (zeros -> 1)."""
    phi = np.asarray(getattr(phases, "phi", phases), dtype=complex)
    mag = np.abs(phi)
    return PhaseShifts(np.where(mag > 0, phi / np.where(mag > 0, mag, 1.0), 1.0 + 0j))


@dataclass(frozen=True, eq=False)
class RisWorkspace:
    """Quadratic model of the phase subproblem.

    ``c_d`` (L, K, Nt), ``c`` (K, RM) and ``d`` (L, K, RM, Nt) are the
    combined channels; they are ``None`` for workspaces built straight from
    a quadratic.
    """

    sigma: np.ndarray
    u: np.ndarray
    c_d: np.ndarray | None = None
    c: np.ndarray | None = None
    d: np.ndarray | None = None
    _lipschitz: list = field(default_factory=list, repr=False)

    @classmethod
    def from_quadratic(cls, sigma, u) -> "RisWorkspace":
        return cls(sigma=np.asarray(sigma, dtype=complex), u=np.asarray(u, dtype=complex))

    @property
    def RM(self) -> int:
        return self.u.size

    def combined_channel(self, phases, l, k) -> np.ndarray:
        """``u_k^H H_(l,k)^H`` rebuilt as ``c_d^H + Phi d_(l,k)`` (length Nt)."""
        phi = np.asarray(getattr(phases, "phi", phases))
        return self.c_d[l, k].conj() + phi @ self.d[l, k]


def build_ris_workspace(channels, combiners, F, weights) -> RisWorkspace:
    u = _as_combiners(combiners)
    f = F.f if isinstance(F, Precoder) else np.asarray(F)
    weights = np.asarray(weights, dtype=float)
    h = channels.h_stacked  # (K, RM, Nr)
    G = channels.g_stacked  # (L, RM, Nt)

    c_d = np.einsum("lktr,kr->lkt", channels.h_direct, u)
    c = np.einsum("kmr,kr->km", h, u)
    d = c.conj()[None, :, :, None] * G[:, None, :, :]
    # v[k, i] = sum_l d_(l,k) f_(l,i); alpha[k, i] = sum_l c_d(l,k)^H f_(l,i)
    v = np.einsum("lkmt,lit->kim", d, f)
    alpha = np.einsum("lkt,lit->ki", c_d.conj(), f)
    w = v.conj()
    K = u.shape[0]
    wk = w * np.sqrt(weights)[:, None, None]
    flat = wk.reshape(K * K, -1)
    sigma = flat.T @ flat.conj()
    sigma = 0.5 * (sigma + sigma.conj().T)
    diag = w[np.arange(K), np.arange(K)]
    U = np.einsum("k,kim,ki->m", weights, w, alpha) - weights @ diag
    return RisWorkspace(sigma=sigma, u=U, c_d=c_d, c=c, d=d)


def p3_objective(phi, ws: RisWorkspace) -> float:
    phi = np.asarray(getattr(phi, "phi", phi), dtype=complex)
    return float(np.vdot(phi, ws.sigma @ phi).real + 2.0 * np.vdot(phi, ws.u).real)


def lipschitz_estimate(sigma, iters=50) -> float:
    """Largest eigenvalue of a Hermitian PSD matrix by power iteration."""
    n = sigma.shape[0]
    rng = np.random.default_rng(0x5EED)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = sigma @ v
        est = np.linalg.norm(w)
        if est == 0.0:
            return 0.0
        v = w / est
    return float(est)


@dataclass(frozen=True, eq=False)
class P3Solution:
    phases: PhaseShifts
    iterations: int
    objective: float
    history: np.ndarray


def solve_p3(ws: RisWorkspace, phi0, max_iters=2000, tol=1e-7) -> P3Solution:
    """Projected gradient descent on ``g2`` over the unit polydisc.

    Step ``phi <- P(phi - eta (Sigma phi + U))`` with ``eta = 1/(lam_max + eps)``.
    Should the power-iteration estimate of ``lam_max`` be too low for a step
    to decrease ``g2``, the step is halved until it does.

    Stops once the certified gap ``g2(phi) - min g2`` is at most ``tol``.
    With a step of at most ``1/L`` the gap after a step is bounded by the
    gradient-mapping norm times the polydisc diameter ``2 sqrt(RM)``.
    """
    x = project_unit_disc(phi0)
    g = p3_objective(x, ws)
    if not np.isfinite(g):
        raise NumericalFailure("non-finite P3 objective at start", {"objective": g})
    history = [g]

    if not ws._lipschitz:
        ws._lipschitz.append(lipschitz_estimate(ws.sigma))
    lmax = ws._lipschitz[0]
    if lmax <= 0.0:
        # linear objective: each coefficient goes to the boundary opposite U
        mag = np.abs(ws.u)
        x = np.where(mag > 0, -ws.u / np.where(mag > 0, mag, 1.0), x)
        g = p3_objective(x, ws)
        history.append(g)
        return P3Solution(PhaseShifts(x), 1, g, np.array(history))

    eta = 1.0 / (lmax * (1.0 + 1e-9))
    diameter = 2.0 * np.sqrt(ws.RM)
    it = 0
    for it in range(1, max_iters + 1):
        grad = ws.sigma @ x + ws.u
        for _ in range(60):
            x_new = project_unit_disc(x - eta * grad)
            g_new = p3_objective(x_new, ws)
            if not np.isfinite(g_new):
                raise NumericalFailure("non-finite P3 objective", {"iteration": it})
            if g_new <= g + 1e-13 * abs(g):
                break
            eta *= 0.5
        else:
            x_new, g_new = x, g
        # real gradient is 2 (Sigma phi + U), so the real step is eta / 2
        gap_bound = 2.0 * np.linalg.norm(x - x_new) / eta * diameter
        x, g = x_new, g_new
        history.append(g)
        if gap_bound <= tol:
            break
    return P3Solution(PhaseShifts(x), it, g, np.array(history))
