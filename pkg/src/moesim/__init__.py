"""Deterministic desk-scale simulator for MoE inference over two-tier memory.

A decoder built from MoE blocks whose routing can be decided ahead of
expert execution, a bounded fast tier fed from an unbounded slow tier
over a bandwidth/latency channel, a two-lane virtual-clock scheduler
comparing four placement strategies, and an experiment harness emitting
the block_lats/throughputs/peak_mems CSVs.
"""

from .cache import CacheConfig, CacheOutcome, ExpertCache, POLICIES
from .core import (BlockParams, ExpertParams, ModelConfig, ModelParams,
                   RoutingDecision, RoutingTrace, StatsReport, decoder_iteration,
                   default_input, expert_forward, gate_forward,
                   gen_routing_trace, init_model, model_stats,
                   moe_block_forward)
from .errors import (ConfigError, GateOverflowError, InvariantError,
                     MoESimError, OomError, RoutingError, ShapeError,
                     WeightFileError)
from .harness import (CsvReport, ExperimentConfig, OOM_TOKEN, parse_config,
                      run_experiment, sweep, verify_result)
from .model_io import load_model, save_model
from .presets import (BYTE_SCALE, DIM_SCALE, PRESETS, SCALED_FAST_CAPACITY,
                      default_cost_model, get_preset)
from .scheduler import (CostModel, Metrics, SimResult, Strategy, Timeline,
                        TimelineEvent, analytic_peak_bytes, simulate,
                        steady_state_latency)
from .tiers import (MemoryLedger, ModelSizes, PlacementState, TierSpec,
                    initial_placement, pipelined_peak_bytes, tier_preset,
                    transfer_duration)
from .wallclock import WallclockResult, run_wallclock

__version__ = "0.1.0"

__all__ = [
    "BlockParams", "CacheConfig", "CacheOutcome", "ConfigError", "CostModel",
    "CsvReport", "ExpertCache", "ExpertParams", "ExperimentConfig",
    "GateOverflowError", "InvariantError", "MemoryLedger", "Metrics",
    "ModelConfig", "ModelParams", "ModelSizes", "MoESimError", "OOM_TOKEN",
    "OomError", "PlacementState", "POLICIES", "PRESETS", "RoutingDecision",
    "RoutingError", "RoutingTrace", "ShapeError", "SimResult", "StatsReport",
    "Strategy", "TierSpec", "Timeline", "TimelineEvent", "WallclockResult",
    "WeightFileError", "analytic_peak_bytes", "BYTE_SCALE", "DIM_SCALE",
    "decoder_iteration", "default_cost_model", "default_input",
    "expert_forward", "gate_forward", "gen_routing_trace", "get_preset",
    "init_model", "initial_placement", "load_model", "model_stats",
    "moe_block_forward", "parse_config", "pipelined_peak_bytes",
    "run_experiment", "run_wallclock", "save_model", "SCALED_FAST_CAPACITY",
    "simulate", "steady_state_latency", "sweep", "tier_preset",
    "transfer_duration", "verify_result",
]
