"""Alternating optimization driver, signaling overhead and complexity notes."""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelSet, ScenarioConfig, SystemDims, effective_channels, stacked_channels
from .combining import CombinerSet, initial_combiners, mmse_combiners
from .errors import NumericalFailure
from .metrics import NetworkMetrics, network_metrics
from .precoding import (
    Precoder,
    centralized_precoder,
    distributed_sweep,
    initial_precoder,
    lmmse_precoders,
    workspace_from_channels,
)
from .ris import PhaseShifts, build_ris_workspace, random_phases, solve_p3

__all__ = [
    "Scheme",
    "IterationRecord",
    "RunTrace",
    "OverheadReport",
    "SolverSettings",
    "run_algorithm1",
    "overhead",
    "complexity_note",
]

log = logging.getLogger(__name__)


class Scheme(str, enum.Enum):
    DISTRIBUTED = "distributed"
    CENTRALIZED = "centralized"
    LMMSE = "lmmse"
    NO_RIS = "no_ris"
    RANDOM_PHASE = "random_phase"

    @property
    def optimizes_ris(self) -> bool:
        return self in (Scheme.DISTRIBUTED, Scheme.CENTRALIZED, Scheme.LMMSE)

    @property
    def monotone(self) -> bool:
        """Whether every block of an iteration exactly minimizes its subproblem."""
        return self is not Scheme.LMMSE


@dataclass(frozen=True)
class IterationRecord:
    weighted_sum_mse: float
    sum_rate: float
    max_power_violation: float
    p3_inner_iters: int
    max_phase_modulus: float = 0.0


@dataclass
class RunTrace:
    scheme: Scheme
    per_iteration: list = field(default_factory=list)
    converged_at: int | None = None
    final: NetworkMetrics | None = None
    precoder: Precoder | None = None
    combiners: CombinerSet | None = None
    phases: PhaseShifts | None = None
    lambdas: np.ndarray | None = None

    @property
    def wsmse(self) -> np.ndarray:
        return np.array([r.weighted_sum_mse for r in self.per_iteration])

    @property
    def sum_rates(self) -> np.ndarray:
        return np.array([r.sum_rate for r in self.per_iteration])


@dataclass(frozen=True)
class SolverSettings:
    bisection_tol: float = 1e-8
    p3_max_iters: int = 2000
    p3_tol: float = 1e-7
    sweep_mode: str = "gauss_seidel"


def _init_rng(config: ScenarioConfig, channels: ChannelSet):
    # shared by every scheme so comparisons on one realization are paired
    return np.random.default_rng(np.random.SeedSequence([config.seed, channels.realization_index, 1]))


def run_algorithm1(
    config: ScenarioConfig,
    channels: ChannelSet,
    scheme=Scheme.DISTRIBUTED,
    I_o_max: int = 20,
    conv_tol: float = 1e-4,
    settings: SolverSettings | None = None,
) -> RunTrace:
    """Alternate precoding, combining and phase updates.

    Each iteration updates the precoders (per-AP block sweep, joint solve or
    local MMSE depending on ``scheme``), then the MMSE combiners, then the
    RIS phases. Metrics are recorded after every full iteration and the
    loop stops once the relative change of the weighted sum-MSE is at most
    ``conv_tol`` (pass ``conv_tol=0`` to always run ``I_o_max`` iterations).
    """
    if I_o_max < 1:
        raise ValueError("I_o_max must be >= 1")
    scheme = Scheme(scheme)
    settings = settings or SolverSettings()
    d = channels.dims
    p_max, noise, weights = config.p_max, config.noise_power, config.weights

    rng = _init_rng(config, channels)
    precoder = initial_precoder(d.L, d.K, d.Nt, p_max, rng)
    phases = random_phases(d, rng)
    if scheme is Scheme.NO_RIS:
        phases = PhaseShifts.zeros(d.RM)
    combiners = initial_combiners(d.K, d.Nr)

    trace = RunTrace(scheme=scheme)
    prev = None
    H = effective_channels(channels, phases)
    try:
        for it in range(I_o_max):
            ws = workspace_from_channels(H, combiners.u, weights)
            if scheme is Scheme.CENTRALIZED:
                precoder, lambdas = centralized_precoder(ws, p_max, settings.bisection_tol)
            elif scheme is Scheme.LMMSE:
                precoder = lmmse_precoders(ws, p_max, settings.bisection_tol)
                lambdas = None
            else:
                precoder, lambdas, _ = distributed_sweep(
                    ws, precoder, p_max, settings.bisection_tol, settings.sweep_mode
                )

            Hs = stacked_channels(H)
            combiners = mmse_combiners(Hs, precoder.matrix, noise)

            p3_iters = 0
            if scheme.optimizes_ris:
                rws = build_ris_workspace(channels, combiners, precoder, weights)
                sol = solve_p3(rws, phases, settings.p3_max_iters, settings.p3_tol)
                phases, p3_iters = sol.phases, sol.iterations
                H = effective_channels(channels, phases)
                Hs = stacked_channels(H)

            metrics = network_metrics(Hs, precoder.matrix, combiners.u, weights, noise)
            if not np.isfinite(metrics.weighted_sum_mse):
                raise NumericalFailure("non-finite objective", {"iteration": it})
            violation = float(np.max(np.maximum(precoder.ap_power() - p_max, 0.0)))
            trace.per_iteration.append(
                IterationRecord(
                    metrics.weighted_sum_mse,
                    metrics.sum_rate,
                    violation,
                    p3_iters,
                    float(np.max(np.abs(phases.phi))),
                )
            )
            trace.final = metrics
            trace.precoder, trace.combiners, trace.phases, trace.lambdas = (
                precoder, combiners, phases, lambdas,
            )
            cur = metrics.weighted_sum_mse
            if prev is not None and abs(prev - cur) <= conv_tol * abs(prev):
                trace.converged_at = it
                break
            prev = cur
    except NumericalFailure as exc:
        exc.trace = trace
        log.warning("run aborted at iteration %d: %s", len(trace.per_iteration), exc)
        raise
    return trace


@dataclass(frozen=True)
class OverheadReport:
    scheme: Scheme
    I_o: int
    backhaul_csi_symbols: int
    per_iteration_symbols: int

    @property
    def total_symbols(self) -> int:
        return self.backhaul_csi_symbols + self.I_o * self.per_iteration_symbols


def overhead(dims: SystemDims, I_o: int, scheme=Scheme.DISTRIBUTED) -> OverheadReport:
    """Backhaul symbols exchanged after ``I_o`` iterations.

    Every scheme first forwards ``Nr Nt L K`` CSI symbols. Per iteration the
    APs receive ``K Nr`` combiner and ``RM`` phase symbols plus, for the
    distributed scheme, ``(L-1) K Nt`` cross-term symbols, and the CPU
    receives ``L K Nt`` precoder symbols. The centralized CPU instead sends
    every AP its ``K Nt`` precoder symbols and collects them back
    (``2 L K Nt``). L-MMSE needs no cross terms; the no-RIS and random-phase
    baselines send no phase updates.
    """
    if I_o < 0:
        raise ValueError("I_o must be >= 0")
    scheme = Scheme(scheme)
    L, K, Nt, Nr, RM = dims.L, dims.K, dims.Nt, dims.Nr, dims.RM
    csi = Nr * Nt * L * K
    phase_symbols = RM if scheme.optimizes_ris else 0
    if scheme is Scheme.CENTRALIZED:
        precoding = 2 * L * K * Nt
    elif scheme is Scheme.LMMSE:
        precoding = L * K * Nt
    else:
        precoding = (2 * L - 1) * K * Nt
    return OverheadReport(
        scheme=scheme,
        I_o=int(I_o),
        backhaul_csi_symbols=csi,
        per_iteration_symbols=K * Nr + phase_symbols + precoding,
    )


def complexity_note(dims: SystemDims, I_o: int, I_p: int, I_a: int = 1) -> dict:
    """Big-O expressions and dominant-term magnitudes for one configuration."""
    L, K, Nt, R, M = dims.L, dims.K, dims.Nt, dims.R, dims.M
    combining = K * Nt**3
    distributed_precoding = L * Nt**3
    centralized_precoding = L**3 * Nt**3
    p3 = R**2 * M**2 + R * M
    terms = {
        "combining": combining,
        "distributed_precoding_per_iteration": distributed_precoding,
        "centralized_precoding_per_iteration": centralized_precoding,
        "p3_per_iteration": p3,
        "p3_quadratic": R**2 * M**2,
    }
    total = I_a * (combining + I_o * distributed_precoding + I_p * p3)
    per_iter = {
        "combining": combining,
        "precoding": I_o * distributed_precoding,
        "p3": I_p * p3,
    }
    return {
        "distributed": "O(I_a (K Nt^3 + I_o L Nt^3 + I_p (R^2 M^2 + R M)))",
        "centralized_precoding": "O(I_o L^3 Nt^3)",
        "terms": terms,
        "distributed_total": total,
        "centralized_precoding_total": I_o * centralized_precoding,
        "dominant": max(per_iter, key=per_iter.get),
    }
