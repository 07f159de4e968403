"""Two-party secure comparison with trusted-tape preprocessing.

Baseline: OT-style leaf comparison plus a Beaver-triple tree merge.
Trusted variant: tape-derived leaf masks plus a one-round polynomial merge.
"""

from .bits import ArithShare, BitShareVector, ChunkVector, ConfigError, MisuseError, RingValue, Role
from .costs import ComputeProfile, crh_cpu_cost, crh_pipelined_cost, estimate_end_to_end
from .nonlinear import MillionaireConfig, drelu, millionaire, relu, run_op
from .report import DEFAULT_SEED, ProtocolReport, bench, relu_batch, verify_suite
from .reuse import ExponentMatrix, build_reuse_plan, n_final, n_naive, n_opt, parse_matrix
from .session import Session
from .tape import TapeSeed, TeeTape
from .transport import LAN, MOBILE, PRESETS, WAN, ChannelStats, ProtocolError, simulated_time

__all__ = [
    "ArithShare", "BitShareVector", "ChannelStats", "ChunkVector", "ComputeProfile", "ConfigError",
    "DEFAULT_SEED", "ExponentMatrix", "LAN", "MOBILE", "MillionaireConfig", "MisuseError", "PRESETS",
    "ProtocolError", "ProtocolReport", "RingValue", "Role", "Session", "TapeSeed", "TeeTape", "WAN",
    "bench", "build_reuse_plan", "crh_cpu_cost", "crh_pipelined_cost", "drelu", "estimate_end_to_end",
    "millionaire", "n_final", "n_naive", "n_opt", "parse_matrix", "relu", "relu_batch", "run_op",
    "simulated_time", "verify_suite",
]
