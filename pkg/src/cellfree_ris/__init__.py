"""Joint distributed precoding and RIS passive beamforming for cell-free downlink."""
from .channel import (
    ChannelSet,
    FadingParams,
    ScenarioConfig,
    SystemDims,
    effective_channel,
    effective_channels,
    generate_channels,
    paper_scenario,
    stacked_channels,
)
from .combining import CombinerSet, mmse_combiner, mmse_combiners
from .errors import InvalidScenario, NumericalFailure
from .metrics import NetworkMetrics, UserMetrics, analytic_mse, empirical_mse, sinr, weighted_sum_mse
from .orchestrator import OverheadReport, RunTrace, Scheme, SolverSettings, overhead, run_algorithm1
from .precoding import Precoder, bisect_lambda, centralized_precoder, distributed_sweep, lmmse_precoders
from .ris import PhaseShifts, build_ris_workspace, solve_p3

__version__ = "0.1.0"
