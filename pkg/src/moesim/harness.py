"""Experiment driver: config parsing, strategy/sweep matrices, CSV output.

Every simulated row passes an invariant suite first (output equivalence
against a plain decoder loop, exact peak-vs-analytic accounting, the
closed-form timing oracle, lane exclusivity); any failure aborts the run
naming the property. Rows whose placement or transfers cannot fit the
fast tier carry the literal token "OOM" instead of a number so the CSV
schema never changes shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .cache import CacheConfig, POLICIES
from .core import (ModelConfig, RoutingTrace, decoder_iteration, default_input,
                   gen_routing_trace, init_model)
from .errors import ConfigError, InvariantError, OomError
from .presets import (PRESETS, SCALED_FAST_CAPACITY, default_cost_model,
                      get_preset)
from .scheduler import (CostModel, SimResult, Strategy, analytic_peak_bytes,
                        simulate, steady_state_latency)
from .tiers import DEFAULT_FAST_CAPACITY, TierSpec, tier_preset

TIMING_ORACLE_TOL_S = 1e-9

SWEEP_AXES = ("none", "experts", "top_k", "cache_fraction", "bandwidth",
              "activation_level")

_CUSTOM_DIM_KEYS = ("d_model", "d_ff", "num_blocks", "experts", "top_k",
                    "activation_level", "dtype_bytes", "non_moe_extra_params")

_BOOL_TOKENS = {"true": True, "1": True, "yes": True,
                "false": False, "0": False, "no": False}


@dataclass(frozen=True)
class ExperimentConfig:
    models: tuple[str, ...] = ("custom",)
    d_model: int = 16
    d_ff: int = 32
    num_blocks: int = 4
    experts: int = 8
    top_k: int = 1
    activation_level: int = 1
    dtype_bytes: int = 4
    non_moe_extra_params: int = 0
    strategies: tuple[Strategy, ...] = tuple(Strategy)
    tier: str = "pcie4"
    fast_capacity: int | None = None
    gate_flops_rate: float | None = None
    expert_flops_rate: float | None = None
    non_moe_flops_rate: float | None = None
    iteration_overhead_s: float | None = None
    iterations: int = 8
    seed: int = 0
    cache_policy: str = "none"
    cache_fraction: float = 0.0
    trace: str = "gate"
    trace_skew: float = 1.0
    sweep_axis: str = "none"
    sweep_values: tuple[str, ...] = ()
    out_dir: str = "results"
    include_first_block: bool = False

    def __post_init__(self) -> None:
        if not self.strategies:
            raise ConfigError("strategy list must not be empty")
        if self.sweep_axis not in SWEEP_AXES:
            raise ConfigError(
                f"unknown sweep axis {self.sweep_axis!r}; choose from "
                f"{SWEEP_AXES}")
        if self.trace not in ("gate", "synthetic"):
            raise ConfigError("trace must be 'gate' or 'synthetic'")
        if self.cache_policy not in POLICIES + ("none",):
            raise ConfigError(f"unknown cache policy {self.cache_policy!r}")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if (self.sweep_axis == "activation_level"
                and Strategy.PRE_GATED in self.strategies):
            for v in self.sweep_values:
                try:
                    level = int(v)
                except ValueError:
                    raise ConfigError(
                        f"activation_level sweep value {v!r} is not an "
                        f"integer") from None
                if level < 1:
                    raise ConfigError(
                        "activation_level sweep includes a value < 1 but "
                        "pre_gated requires lookahead >= 1")

    def cost_model(self) -> CostModel:
        base = default_cost_model()
        overrides = {}
        for name in ("gate_flops_rate", "expert_flops_rate",
                     "non_moe_flops_rate", "iteration_overhead_s"):
            value = getattr(self, name)
            if value is not None:
                overrides[name] = value
        return replace(base, **overrides) if overrides else base

    def model_config(self, label: str, seed: int | None = None) -> ModelConfig:
        seed = self.seed if seed is None else seed
        if label == "custom":
            return ModelConfig(d_model=self.d_model, d_ff=self.d_ff,
                               num_blocks=self.num_blocks,
                               num_experts=self.experts, top_k=self.top_k,
                               activation_level=self.activation_level,
                               dtype_bytes=self.dtype_bytes, seed=seed,
                               non_moe_extra_params=self.non_moe_extra_params)
        return get_preset(label).scaled_config(
            top_k=self.top_k, activation_level=self.activation_level,
            seed=seed)

    def tier_for(self, label: str) -> TierSpec:
        capacity = self.fast_capacity
        if capacity is None:
            capacity = (SCALED_FAST_CAPACITY if label in PRESETS
                        else DEFAULT_FAST_CAPACITY)
        return tier_preset(self.tier, capacity)


def _parse_value(key: str, value: str):
    if key in ("models", "model"):
        return tuple(tok.strip() for tok in value.split(",") if tok.strip())
    if key == "strategy":
        return tuple(Strategy.parse(tok.strip())
                     for tok in value.split(",") if tok.strip())
    if key in ("d_model", "d_ff", "num_blocks", "experts", "top_k",
               "activation_level", "dtype_bytes", "non_moe_extra_params",
               "iterations", "seed", "fast_capacity"):
        try:
            return int(value)
        except ValueError:
            raise ConfigError(f"{key} expects an integer, got {value!r}") from None
    if key in ("gate_flops_rate", "expert_flops_rate", "non_moe_flops_rate",
               "iteration_overhead_s", "cache_fraction", "trace_skew"):
        try:
            return float(value)
        except ValueError:
            raise ConfigError(f"{key} expects a number, got {value!r}") from None
    if key == "include_first_block":
        try:
            return _BOOL_TOKENS[value.lower()]
        except KeyError:
            raise ConfigError(f"{key} expects a boolean, got {value!r}") from None
    if key == "sweep_values":
        return tuple(tok.strip() for tok in value.split(",") if tok.strip())
    return value


_KEY_MAP = {
    "model": "models",
    "models": "models",
    "strategy": "strategies",
    "tier": "tier",
    "fast_capacity": "fast_capacity",
    "d_model": "d_model",
    "d_ff": "d_ff",
    "num_blocks": "num_blocks",
    "experts": "experts",
    "top_k": "top_k",
    "activation_level": "activation_level",
    "dtype_bytes": "dtype_bytes",
    "non_moe_extra_params": "non_moe_extra_params",
    "gate_flops_rate": "gate_flops_rate",
    "expert_flops_rate": "expert_flops_rate",
    "non_moe_flops_rate": "non_moe_flops_rate",
    "iteration_overhead_s": "iteration_overhead_s",
    "iterations": "iterations",
    "seed": "seed",
    "cache_policy": "cache_policy",
    "cache_fraction": "cache_fraction",
    "trace": "trace",
    "trace_skew": "trace_skew",
    "sweep_axis": "sweep_axis",
    "sweep_values": "sweep_values",
    "out": "out_dir",
    "include_first_block": "include_first_block",
}


def parse_config(path) -> ExperimentConfig:
    """Flat key=value text, one pair per line, '#' comments, comma lists.

    Unknown keys are errors; preset models reject explicit dimension keys.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    fields: dict = {}
    seen_dim_keys: list[str] = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _KEY_MAP:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in _CUSTOM_DIM_KEYS:
            seen_dim_keys.append(key)
        fields[_KEY_MAP[key]] = _parse_value(key, value)
    exp = ExperimentConfig(**fields)
    presets_used = [m for m in exp.models if m != "custom"]
    dims_only = [k for k in seen_dim_keys
                 if k not in ("top_k", "activation_level")]
    if presets_used and dims_only:
        raise ConfigError(
            f"dimension keys {dims_only} are not allowed with model presets "
            f"{presets_used}; use model=custom")
    for m in exp.models:
        if m != "custom":
            get_preset(m)
    exp.model_config(exp.models[0])  # validate invariants eagerly
    return exp


# ---------------------------------------------------------------------------
# CSV report
# ---------------------------------------------------------------------------

OOM_TOKEN = "OOM"
_FILES = {
    "block_lats.csv": ("avg_block_latency_s", "avg_moe_block_latency_s"),
    "throughputs.csv": ("tokens_per_sec", "tokens_per_sec"),
    "peak_mems.csv": ("peak_bytes", "peak_fast_bytes"),
}


@dataclass
class CsvReport:
    """Rows for the three artifact CSVs, one per (model, strategy, sweep)."""

    rows: list[dict] = field(default_factory=list)

    def add(self, model: str, strategy: Strategy, sweep_value: str,
            metrics_or_oom) -> None:
        row = {"model": model, "strategy": strategy.value,
               "sweep_value": sweep_value}
        if metrics_or_oom is None:
            row.update(avg_moe_block_latency_s=OOM_TOKEN,
                       tokens_per_sec=OOM_TOKEN, peak_fast_bytes=OOM_TOKEN)
        else:
            m = metrics_or_oom
            row.update(avg_moe_block_latency_s=repr(m.avg_moe_block_latency_s),
                       tokens_per_sec=repr(m.tokens_per_sec),
                       peak_fast_bytes=repr(m.peak_fast_bytes))
        self.rows.append(row)

    @property
    def all_oom(self) -> bool:
        return bool(self.rows) and all(
            r["peak_fast_bytes"] == OOM_TOKEN for r in self.rows)

    @property
    def any_oom(self) -> bool:
        return any(r["peak_fast_bytes"] == OOM_TOKEN for r in self.rows)

    def render(self) -> dict[str, str]:
        out = {}
        for fname, (column, attr) in _FILES.items():
            lines = [f"model,strategy,sweep_value,{column}"]
            for row in self.rows:
                lines.append(",".join((row["model"], row["strategy"],
                                       row["sweep_value"], row[attr])))
            out[fname] = "\n".join(lines) + "\n"
        return out

    def write(self, out_dir) -> list[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = []
        for fname, text in self.render().items():
            path = out_dir / fname
            path.write_text(text)
            paths.append(path)
        return paths


# ---------------------------------------------------------------------------
# Invariant suite
# ---------------------------------------------------------------------------

def verify_result(result: SimResult, reference_outputs, reference_decisions,
                  cfg: ModelConfig, cost_model: CostModel, tier: TierSpec,
                  cache_on: bool) -> None:
    """Cross-check one simulation; raises InvariantError naming the property."""
    if result.outputs != reference_outputs:
        raise InvariantError(
            f"output-equivalence: {result.strategy.value} activations "
            f"diverged from the reference decoder")
    if result.trace.decisions != reference_decisions:
        raise InvariantError(
            f"output-equivalence: {result.strategy.value} routing trace "
            f"diverged from the reference decoder")
    result.timeline.validate()
    for ev in result.timeline.by_kind("transfer"):
        if ev.end > result.metrics.total_time_s:
            raise InvariantError("channel-exclusivity: transfer past the end")
    if cache_on:
        return
    expected_peak = analytic_peak_bytes(result.strategy, cfg)
    deep_lookahead = (result.strategy is Strategy.PRE_GATED
                      and cfg.activation_level >= 2)
    if deep_lookahead:
        # analytic value is an upper bound only: a saturated channel may
        # never pile L+1 activated sets up at once
        if result.metrics.peak_fast_bytes > expected_peak:
            raise InvariantError(
                f"peak-accounting: {result.strategy.value} measured "
                f"{result.metrics.peak_fast_bytes} B above the "
                f"{expected_peak} B bound")
    elif result.metrics.peak_fast_bytes != expected_peak:
        raise InvariantError(
            f"peak-accounting: {result.strategy.value} measured "
            f"{result.metrics.peak_fast_bytes} B, analytic {expected_peak} B")
    if cfg.num_blocks >= 3 and cfg.activation_level <= 1:
        want = steady_state_latency(result.strategy, cost_model, cfg, tier)
        for lats in result.metrics.per_block_latencies_s:
            for b in range(1, cfg.num_blocks - 1):
                if abs(lats[b] - want) > TIMING_ORACLE_TOL_S:
                    raise InvariantError(
                        f"timing-oracle: {result.strategy.value} block {b} "
                        f"latency {lats[b]!r} != closed form {want!r}")


# ---------------------------------------------------------------------------
# Experiment execution
# ---------------------------------------------------------------------------

def _apply_sweep(exp: ExperimentConfig, label: str, cfg: ModelConfig,
                 tier: TierSpec, token: str):
    axis = exp.sweep_axis
    if axis == "experts":
        cfg = replace(cfg, num_experts=int(token))
    elif axis == "top_k":
        cfg = replace(cfg, top_k=int(token))
    elif axis == "activation_level":
        cfg = replace(cfg, activation_level=int(token))
    elif axis == "bandwidth":
        capacity = tier.fast_capacity
        try:
            bandwidth = float(token)
        except ValueError:
            tier = tier_preset(token, capacity)
        else:
            tier = TierSpec(capacity, bandwidth, tier.channel_latency)
    elif axis == "cache_fraction":
        pass  # handled by the caller via CacheConfig
    return cfg, tier


def _cache_config(exp: ExperimentConfig, token: str | None) -> CacheConfig | None:
    if exp.sweep_axis == "cache_fraction" and token is not None:
        policy = exp.cache_policy if exp.cache_policy != "none" else "lru"
        return CacheConfig(policy, float(token))
    if exp.cache_policy != "none" and exp.cache_fraction > 0:
        return CacheConfig(exp.cache_policy, exp.cache_fraction)
    return None


def run_experiment(exp: ExperimentConfig) -> CsvReport:
    """Run the (models x strategies x sweep values) matrix.

    Each point shares one set of model weights and one reference decoder
    run across strategies; every simulated row passes verify_result.
    """
    report = CsvReport()
    cost = exp.cost_model()
    sweep_tokens = list(exp.sweep_values) if exp.sweep_axis != "none" else [""]
    if exp.sweep_axis != "none" and not sweep_tokens:
        raise ConfigError("sweep axis set but sweep_values is empty")
    for label in exp.models:
        base_cfg = exp.model_config(label)
        base_tier = exp.tier_for(label)
        for token in sweep_tokens:
            if token:
                cfg, tier = _apply_sweep(exp, label, base_cfg, base_tier, token)
            else:
                cfg, tier = base_cfg, base_tier
            cache_cfg = _cache_config(exp, token or None)
            params = init_model(cfg)
            trace = None
            if exp.trace == "synthetic":
                trace = gen_routing_trace(cfg, exp.iterations, exp.trace_skew,
                                          exp.seed)
            ref_outputs, ref_decisions = _reference_decode(
                cfg, params, exp.iterations, trace)
            for strategy in exp.strategies:
                try:
                    result = simulate(
                        params, strategy, cost, tier,
                        iterations=exp.iterations, cache_config=cache_cfg,
                        trace=trace,
                        include_first_block=exp.include_first_block)
                except OomError:
                    report.add(label, strategy, token, None)
                    continue
                verify_result(result, ref_outputs, ref_decisions, cfg, cost,
                              tier, cache_on=cache_cfg is not None)
                report.add(label, strategy, token, result.metrics)
    return report


def _reference_decode(cfg: ModelConfig, params, iterations: int,
                      trace: RoutingTrace | None):
    x = default_input(cfg)
    outputs, decisions = [], []
    for it in range(iterations):
        supplied = trace.decisions[it] if trace is not None else None
        x, dec = decoder_iteration(x, params, supplied_decisions=supplied)
        outputs.append(x)
        decisions.append(dec)
    return outputs, decisions


def sweep(exp: ExperimentConfig, axis: str | None = None,
          values: tuple[str, ...] | None = None) -> CsvReport:
    """Cartesian run over sweep values; same CSV schema, sweep_value filled."""
    if axis is not None:
        exp = replace(exp, sweep_axis=axis, sweep_values=tuple(values or ()))
    if exp.sweep_axis == "none":
        raise ConfigError("sweep requires a sweep axis")
    if not exp.sweep_values:
        raise ConfigError("sweep requires at least one sweep value")
    return run_experiment(exp)
