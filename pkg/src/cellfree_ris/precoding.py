"""Active precoding with per-AP power constraints.

With combiners and phases fixed, the weighted sum-MSE as a function of the
precoders is the convex quadratic

    g1(F) = tr(F^H Lam F) - 2 Re tr(Omega B^H F)

where ``b_(l,k) = H_(l,k) u_k`` and ``Lam = sum_k w_k b_k b_k^H``.  Each AP
owns an ``Nt``-row block of ``F``; the block stationarity condition is

    ([Lam]_ll + lam_l I) f_(l,k) = w_k b_(l,k) - sum_{m != l} [Lam]_lm f_(m,k)

with ``lam_l >= 0`` the dual of AP l's power budget.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import effective_channels
from .errors import NumericalFailure

__all__ = [
    "Precoder",
    "PrecodingWorkspace",
    "initial_precoder",
    "build_workspace",
    "workspace_from_channels",
    "p2_objective",
    "kkt_residual",
    "local_precoder_update",
    "bisect_lambda",
    "distributed_sweep",
    "lmmse_precoder",
    "lmmse_precoders",
    "centralized_precoder",
]

RIDGE = 1e-12
MAX_DOUBLINGS = 60
MAX_BISECTIONS = 2000


@dataclass(frozen=True, eq=False)
class Precoder:
    """Per-AP, per-user precoding vectors held as an ``(L, K, Nt)`` array."""

    f: np.ndarray

    @property
    def L(self) -> int:
        return self.f.shape[0]

    @property
    def K(self) -> int:
        return self.f.shape[1]

    @property
    def Nt(self) -> int:
        return self.f.shape[2]

    @property
    def matrix(self) -> np.ndarray:
        """``F`` with shape ``(L*Nt, K)``; column k is the stacked ``f_k``."""
        return self.f.transpose(0, 2, 1).reshape(self.L * self.Nt, self.K)

    def user(self, k) -> np.ndarray:
        return self.f[:, k, :].reshape(-1)

    def ap_power(self) -> np.ndarray:
        return np.sum(np.abs(self.f) ** 2, axis=(1, 2))

    @classmethod
    def from_matrix(cls, F, L, Nt) -> "Precoder":
        F = np.asarray(F)
        K = F.shape[1]
        return cls(F.reshape(L, Nt, K).transpose(0, 2, 1).copy())


def initial_precoder(L, K, Nt, p_max, rng) -> Precoder:
    """Equal power ``P_l/K`` per user, i.i.d. uniform phase on every entry."""
    p_max = np.broadcast_to(np.asarray(p_max, dtype=float), (L,))
    amp = np.sqrt(p_max / (K * Nt))[:, None, None]
    theta = rng.uniform(0.0, 2.0 * np.pi, size=(L, K, Nt))
    return Precoder(amp * np.exp(1j * theta))


@dataclass(eq=False)
class PrecodingWorkspace:
    b: np.ndarray
    weights: np.ndarray
    lam: np.ndarray
    lambdas: np.ndarray = None
    _eig: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.lambdas is None:
            self.lambdas = np.zeros(self.L)

    @property
    def L(self) -> int:
        return self.b.shape[0]

    @property
    def K(self) -> int:
        return self.b.shape[1]

    @property
    def Nt(self) -> int:
        return self.b.shape[2]

    @property
    def B(self) -> np.ndarray:
        return self.b.transpose(0, 2, 1).reshape(self.L * self.Nt, self.K)

    @property
    def Omega(self) -> np.ndarray:
        return np.diag(self.weights)

    def block(self, l, m) -> np.ndarray:
        n = self.Nt
        return self.lam[l * n : (l + 1) * n, m * n : (m + 1) * n]

    def block_eig(self, l):
        """Eigen-decomposition of ``[Lam]_ll`` (eigenvalues clipped at 0)."""
        if l not in self._eig:
            e, V = np.linalg.eigh(self.block(l, l))
            self._eig[l] = (np.clip(e, 0.0, None), V)
        return self._eig[l]


def workspace_from_channels(H, u, weights) -> PrecodingWorkspace:
    """Workspace from equivalent channels ``H`` (L, K, Nt, Nr) and combiners ``u`` (K, Nr)."""
    u = np.asarray(getattr(u, "u", u))
    weights = np.asarray(weights, dtype=float)
    b = np.einsum("lktr,kr->lkt", H, u)
    L, K, Nt = b.shape
    B = b.transpose(0, 2, 1).reshape(L * Nt, K)
    lam = (B * weights) @ B.conj().T
    lam = 0.5 * (lam + lam.conj().T)
    return PrecodingWorkspace(b=b, weights=weights, lam=lam)


def build_workspace(channels, phases, combiners, weights) -> PrecodingWorkspace:
    return workspace_from_channels(effective_channels(channels, phases), combiners, weights)


def p2_objective(ws: PrecodingWorkspace, precoder) -> float:
    F = getattr(precoder, "matrix", precoder)
    quad = np.trace(F.conj().T @ ws.lam @ F).real
    lin = np.sum(ws.weights * np.sum(ws.B.conj() * F, axis=0)).real
    return float(quad - 2.0 * lin)


def kkt_residual(ws: PrecodingWorkspace, precoder: Precoder, lambdas) -> float:
    """Relative residual of the stationarity system ``(Lam + D) F = B Omega``."""
    F = precoder.matrix
    D = np.repeat(np.asarray(lambdas, dtype=float), ws.Nt)
    rhs = ws.B * ws.weights
    res = ws.lam @ F + D[:, None] * F - rhs
    return float(np.linalg.norm(res) / max(np.linalg.norm(rhs), np.finfo(float).tiny))


class _BlockSolver:
    """Solves ``([Lam]_ll + lam I) X = C`` for many ``lam`` via one eigh."""

    def __init__(self, e, V, C):
        self.e = e
        self.V = V
        self.Z = V.conj().T @ C
        self.z = np.sum(np.abs(self.Z) ** 2, axis=1)
        self.ridge = RIDGE * float(np.sum(e))
        self.threshold = self.ridge

    @property
    def rank_deficient(self) -> bool:
        return bool(np.any(self.e <= self.threshold))

    def _power(self, shifted):
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(self.z > 0, self.z / shifted**2, 0.0)
        return float(np.sum(terms))

    def power(self, lam) -> float:
        return self._power(self.e + lam)

    def probe_power(self) -> float:
        """Power at ``lam = 0`` with a trace-scaled ridge on ``[Lam]_ll``."""
        return self._power(self.e + self.ridge)

    def solve(self, lam) -> np.ndarray:
        d = self.e + lam
        if lam == 0:
            inv = np.where(self.e > self.threshold, 1.0 / np.where(d > 0, d, 1.0), 0.0)
        else:
            inv = 1.0 / d
        return self.V @ (inv[:, None] * self.Z)


def _block_rhs(l, ws: PrecodingWorkspace, f, with_cross=True) -> np.ndarray:
    """``C`` of shape (Nt, K): ``w_k b_(l,k) - sum_{m != l} [Lam]_lm f_(m,k)``."""
    C = (ws.b[l] * ws.weights[:, None]).T
    if with_cross and ws.L > 1:
        n = ws.Nt
        F = f.transpose(0, 2, 1).reshape(ws.L * n, ws.K)
        row = ws.lam[l * n : (l + 1) * n]
        C = C - (row @ F - ws.block(l, l) @ F[l * n : (l + 1) * n])
    return C


def _solver(l, ws, current, with_cross=True) -> _BlockSolver:
    f = getattr(current, "f", current)
    e, V = ws.block_eig(l)
    return _BlockSolver(e, V, _block_rhs(l, ws, f, with_cross))


def _bisect(power, p_max, tol, hi=1.0):
    """Multiplier whose power lies in ``[p_max (1 - tol), p_max]``.

    ``power`` must be non-increasing. The returned point is always on the
    feasible side of the budget.
    """
    lo = 0.0
    p_hi = power(hi)
    doublings = 0
    while p_hi > p_max:
        lo = hi
        hi *= 2.0
        p_hi = power(hi)
        doublings += 1
        if doublings > MAX_DOUBLINGS:
            raise NumericalFailure(
                "power budget not bracketed", {"lambda_hi": hi, "p_max": p_max}
            )
    for _ in range(MAX_BISECTIONS):
        if p_hi >= p_max * (1.0 - tol):
            break
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        p_mid = power(mid)
        if p_mid > p_max:
            lo = mid
        else:
            hi, p_hi = mid, p_mid
    return hi


def bisect_lambda(l, ws: PrecodingWorkspace, current, p_max_l, tol=1e-8, *, with_cross=True):
    """Dual variable of AP ``l``'s power budget for the block update.

    Returns 0 when the unconstrained block solution already fits the budget.
    Otherwise the transmit power at the returned multiplier lies within
    ``tol * p_max_l`` below the budget.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    solver = _solver(l, ws, current, with_cross)
    if solver.probe_power() <= p_max_l:
        return 0.0
    return _bisect(solver.power, p_max_l, tol)


def local_precoder_update(l, ws: PrecodingWorkspace, current, lambda_l) -> np.ndarray:
    """Block update of AP ``l`` for all users, shape (K, Nt).

    Uses the other APs' precoders in ``current`` for the cross terms. With
    ``lambda_l == 0`` and a singular ``[Lam]_ll`` the pseudo-inverse solution
    is returned.
    """
    if lambda_l < 0:
        raise ValueError("lambda_l must be nonnegative")
    return _solver(l, ws, current).solve(float(lambda_l)).T


def distributed_sweep(ws: PrecodingWorkspace, current: Precoder, p_max, tol=1e-8, mode="gauss_seidel"):
    """One pass of per-AP block updates, each with its own bisected dual.

    In ``gauss_seidel`` mode AP l sees the blocks already updated in this
    sweep; ``jacobi`` mode updates every AP from ``current``.

    Returns ``(precoder, lambdas, diagnostics)``.
    """
    if mode not in ("gauss_seidel", "jacobi"):
        raise ValueError(f"unknown sweep mode {mode!r}")
    p_max = np.broadcast_to(np.asarray(p_max, dtype=float), (ws.L,))
    f = current.f.copy()
    source = f if mode == "gauss_seidel" else current.f
    lambdas = np.zeros(ws.L)
    pseudo = []
    for l in range(ws.L):
        solver = _solver(l, ws, source)
        if solver.probe_power() <= p_max[l]:
            lam = 0.0
            if solver.rank_deficient:
                pseudo.append(l)
        else:
            lam = _bisect(solver.power, p_max[l], tol)
        f[l] = solver.solve(lam).T
        lambdas[l] = lam
    ws.lambdas = lambdas.copy()
    return Precoder(f), lambdas, {"pseudo_solve_aps": pseudo}


def lmmse_precoder(l, ws: PrecodingWorkspace, p_max_l, tol=1e-8) -> np.ndarray:
    """Local MMSE precoder of AP ``l``: the block update without cross terms."""
    solver = _solver(l, ws, np.zeros((ws.L, ws.K, ws.Nt), dtype=complex), with_cross=False)
    if solver.probe_power() <= p_max_l:
        lam = 0.0
    else:
        lam = _bisect(solver.power, p_max_l, tol)
    return solver.solve(lam).T


def lmmse_precoders(ws: PrecodingWorkspace, p_max, tol=1e-8) -> Precoder:
    p_max = np.broadcast_to(np.asarray(p_max, dtype=float), (ws.L,))
    return Precoder(np.stack([lmmse_precoder(l, ws, p_max[l], tol) for l in range(ws.L)]))


def _joint_solve(A, D, rhs):
    try:
        return np.linalg.solve(A + np.diag(D), rhs)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(A + np.diag(D), rhs, rcond=None)[0]


def centralized_precoder(ws: PrecodingWorkspace, p_max, tol=1e-8, max_cycles=200):
    """Joint solve of ``(Lam + blkdiag(lam_l I)) F = B Omega`` at the CPU.

    The duals are found by cyclic per-AP bisection on the joint solution
    until every AP satisfies its complementary-slackness condition.
    ``Lam`` has rank at most K, so a ``1e-12 tr(Lam)`` ridge is added to
    keep every joint solve (and hence the dual) well defined; with all
    budgets inactive this gives the minimum-norm solution in the limit.
    Returns ``(precoder, lambdas)``.
    """
    L, K, Nt = ws.L, ws.K, ws.Nt
    p_max = np.broadcast_to(np.asarray(p_max, dtype=float), (L,))
    mu = RIDGE * np.trace(ws.lam).real
    A = ws.lam + mu * np.eye(L * Nt)
    rhs = ws.B * ws.weights
    lambdas = np.zeros(L)

    def powers(lams):
        F = _joint_solve(A, np.repeat(lams, Nt), rhs)
        return np.sum(np.abs(F.reshape(L, Nt, K)) ** 2, axis=(1, 2)), F

    def satisfied(lams, pw):
        over = pw > p_max * (1.0 + tol)
        slack = (lams > 0) & (pw < p_max * (1.0 - tol))
        return not np.any(over | slack)

    pw, F = powers(lambdas)
    if np.all(pw <= p_max):
        return Precoder.from_matrix(F, L, Nt), lambdas

    for cycle in range(max_cycles):
        for l in range(L):
            def power_l(x, l=l):
                trial = lambdas.copy()
                trial[l] = x
                return powers(trial)[0][l]

            if lambdas[l] > 0 and p_max[l] * (1.0 - tol) <= power_l(lambdas[l]) <= p_max[l]:
                continue
            if power_l(0.0) <= p_max[l]:
                lambdas[l] = 0.0
            else:
                start = 2.0 * lambdas[l] if lambdas[l] > 0 else 1.0
                lambdas[l] = _bisect(power_l, p_max[l], tol, hi=start)
        pw, F = powers(lambdas)
        if satisfied(lambdas, pw):
            break
    else:
        raise NumericalFailure(
            "centralized dual fixed point did not converge",
            {"cycles": max_cycles, "lambdas": lambdas.tolist(), "powers": pw.tolist()},
        )
    ws.lambdas = lambdas.copy()
    precoder = Precoder.from_matrix(F, L, Nt)
    # later APs' duals shift earlier APs' power by at most ~tol; trim it
    scale = np.sqrt(np.minimum(1.0, p_max / np.maximum(pw, np.finfo(float).tiny)))
    return Precoder(precoder.f * scale[:, None, None]), lambdas
