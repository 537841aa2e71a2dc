"""Invariant suite run on random instances (``cellfree-ris validate``)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet, SystemDims, paper_scenario, generate_channels, stacked_channels
from .combining import mmse_combiners
from .metrics import analytic_mse, sinr, weighted_sum_mse
from .orchestrator import Scheme, overhead, run_algorithm1
from .precoding import (
    Precoder,
    bisect_lambda,
    build_workspace,
    distributed_sweep,
    initial_precoder,
    local_precoder_update,
    p2_objective,
)
from .ris import build_ris_workspace, p3_objective, random_phases, solve_p3

__all__ = ["CheckResult", "random_channel_set", "random_dims", "run_checks", "CHECKS"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def random_dims(rng, L=(1, 3), K=(1, 4), R=(1, 2), M=(1, 4), Nt=(1, 3), Nr=(1, 2)) -> SystemDims:
    pick = lambda lim: int(rng.integers(lim[0], lim[1] + 1))
    return SystemDims(L=pick(L), K=pick(K), R=pick(R), M=pick(M), Nt=pick(Nt), Nr=pick(Nr))


def random_channel_set(dims: SystemDims, rng, direct_scale=1.0, ris_scale=1.0) -> ChannelSet:
    """Unit-variance complex Gaussian channels, independent of any geometry."""
    def cn(*shape):
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)

    d = dims
    return ChannelSet(
        h_direct=direct_scale * cn(d.L, d.K, d.Nt, d.Nr),
        h_ris=np.sqrt(ris_scale) * cn(d.R, d.K, d.M, d.Nr),
        g=np.sqrt(ris_scale) * cn(d.L, d.R, d.M, d.Nt),
        user_positions=np.zeros((d.K, 3)),
    )


def _instance(rng, **limits):
    dims = random_dims(rng, **limits)
    cs = random_channel_set(dims, rng)
    phases = random_phases(dims, rng)
    F = initial_precoder(dims.L, dims.K, dims.Nt, 1.0, rng)
    noise = rng.uniform(0.1, 1.0, dims.K)
    weights = rng.uniform(0.5, 2.0, dims.K)
    return dims, cs, phases, F, noise, weights


def check_mmse_identity(rng, n) -> CheckResult:
    worst = 0.0
    for _ in range(n):
        dims, cs, phases, F, noise, _ = _instance(rng)
        Hs = stacked_channels(cs, phases)
        U = mmse_combiners(Hs, F.matrix, noise).u
        for k in range(dims.K):
            m = analytic_mse(Hs[k], F.matrix, U[k], noise[k], k)
            s = sinr(Hs[k], F.matrix, U[k], noise[k], k)
            worst = max(worst, abs(m - 1.0 / (1.0 + s)))
    return CheckResult("mmse_identity", worst <= 1e-9, f"max |mse - 1/(1+sinr)| = {worst:.2e}")


def check_coupling_identity(rng, n) -> CheckResult:
    worst = 0.0
    for _ in range(n):
        dims, cs, phases, F, noise, weights = _instance(rng)
        U = mmse_combiners(stacked_channels(cs, phases), F.matrix, noise)
        ws = build_ris_workspace(cs, U, F, weights)
        other = random_phases(dims, rng)
        d_p1 = (weighted_sum_mse(cs, other, F, U, weights, noise).weighted_sum_mse
                - weighted_sum_mse(cs, phases, F, U, weights, noise).weighted_sum_mse)
        d_g2 = p3_objective(other, ws) - p3_objective(phases, ws)
        worst = max(worst, abs(d_p1 - d_g2))
    return CheckResult("coupling_identity", worst <= 1e-8, f"max |dP1 - dg2| = {worst:.2e}")


def check_bisection(rng, n) -> CheckResult:
    worst = 0.0
    infeasible = 0
    for _ in range(n):
        dims, cs, phases, F, noise, weights = _instance(rng)
        U = mmse_combiners(stacked_channels(cs, phases), F.matrix, noise)
        ws = build_workspace(cs, phases, U, weights)
        l = int(rng.integers(dims.L))
        p = float(rng.uniform(0.01, 2.0))
        lam = bisect_lambda(l, ws, F.f, p)
        power = float(np.sum(np.abs(local_precoder_update(l, ws, F.f, lam)) ** 2))
        if lam > 0:
            worst = max(worst, abs(power - p) / p)
        elif power > p * (1 + 1e-12):
            infeasible += 1
    ok = worst <= 1e-8 and infeasible == 0
    return CheckResult("bisection", ok, f"max residual {worst:.2e}, infeasible at lambda=0: {infeasible}")


def check_sweep_descent(rng, n) -> CheckResult:
    worst = -np.inf
    for _ in range(n):
        dims, cs, phases, F, noise, weights = _instance(rng)
        U = mmse_combiners(stacked_channels(cs, phases), F.matrix, noise)
        ws = build_workspace(cs, phases, U, weights)
        p = rng.uniform(0.05, 1.0, dims.L)
        start = Precoder(F.f * np.sqrt(np.minimum(1.0, p / F.ap_power()))[:, None, None])
        new, _, _ = distributed_sweep(ws, start, p)
        worst = max(worst, p2_objective(ws, new) - p2_objective(ws, start))
    return CheckResult("sweep_descent", worst <= 1e-8, f"max g1 increase {worst:.2e}")


def check_p3(rng, n) -> CheckResult:
    bad = 0
    for _ in range(n):
        dims, cs, phases, F, noise, weights = _instance(rng)
        U = mmse_combiners(stacked_channels(cs, phases), F.matrix, noise)
        ws = build_ris_workspace(cs, U, F, weights)
        sol = solve_p3(ws, phases)
        h = sol.history
        if np.any(np.diff(h) > 1e-9 * np.maximum(1.0, np.abs(h[:-1]))) or np.any(np.abs(sol.phases.phi) > 1 + 1e-12):
            bad += 1
    return CheckResult("p3_monotone_feasible", bad == 0, f"{bad}/{n} violating instances")


def check_algorithm(rng, n) -> CheckResult:
    bad = 0
    for _ in range(n):
        cfg = paper_scenario(L=3, K=3, R=2, M=8, Nt=2, Nr=2, seed=int(rng.integers(2**32)))
        trace = run_algorithm1(cfg, generate_channels(cfg, 0), Scheme.DISTRIBUTED, I_o_max=10, conv_tol=0.0)
        w = trace.wsmse
        if np.any(np.diff(w) > 1e-6 * w[:-1]) or max(r.max_power_violation for r in trace.per_iteration) > 0:
            bad += 1
    return CheckResult("algorithm_monotone", bad == 0, f"{bad}/{n} non-monotone or infeasible runs")


def check_overhead(rng, n) -> CheckResult:
    dims = SystemDims(L=5, K=4, R=2, M=100, Nt=3, Nr=2)
    dist = overhead(dims, 20, Scheme.DISTRIBUTED).total_symbols
    cent = overhead(dims, 20, Scheme.CENTRALIZED).total_symbols
    return CheckResult("overhead_reference", (dist, cent) == (6440, 6680), f"distributed {dist}, centralized {cent}")


CHECKS = {
    "mmse_identity": (check_mmse_identity, 1.0),
    "coupling_identity": (check_coupling_identity, 0.5),
    "bisection": (check_bisection, 1.0),
    "sweep_descent": (check_sweep_descent, 0.5),
    "p3_monotone_feasible": (check_p3, 0.5),
    "algorithm_monotone": (check_algorithm, 0.1),
    "overhead_reference": (check_overhead, 0.0),
}


def run_checks(instances=50, seed=0, names=None) -> list:
    """Run each named check (all by default) on its share of ``instances``."""
    results = []
    for i, (name, (fn, share)) in enumerate(CHECKS.items()):
        if names and name not in names:
            continue
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        results.append(fn(rng, max(1, int(round(instances * share)))))
    return results
