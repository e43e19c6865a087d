"""Virtual-clock execution of decoder iterations under four placement strategies.

Two resource lanes, a compute engine and a transfer channel, advance in
causal order. Strategies differ only in *when* expert transfers are
issued:

  resident_only   everything fast-resident, no transfers
  on_demand       fetch a block's activated experts after its gate, serially
  prefetch_all    stream the next block's entire expert set during the
                  current block's compute; block 0's set is an exposed
                  head transfer each iteration
  pre_gated       fetch only activated experts as soon as the lookahead
                  gate decides, overlapping the previous blocks' compute;
                  the first activation_level blocks have no lookahead
                  decision yet and serialize like on_demand

Numerical outputs always come from the same code path as
`decoder_iteration`, so scheduling can never change the math.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum

from .cache import CacheConfig, ExpertCache
from .core import (ModelConfig, ModelParams, RoutingTrace, SOURCE_GATE,
                   decoder_iteration, default_input)
from .errors import ConfigError, InvariantError, OomError
from .tiers import (MemoryLedger, ModelSizes, TierSpec, initial_placement,
                    transfer_duration)


class Strategy(Enum):
    RESIDENT_ONLY = "resident_only"
    FETCH_ON_DEMAND = "on_demand"
    PREFETCH_ALL = "prefetch_all"
    PRE_GATED = "pre_gated"

    @classmethod
    def parse(cls, name: str) -> "Strategy":
        for s in cls:
            if s.value == name:
                return s
        raise ConfigError(
            f"unknown strategy {name!r}; choose from "
            f"{[s.value for s in cls]}")


OFFLOAD_STRATEGIES = (Strategy.FETCH_ON_DEMAND, Strategy.PREFETCH_ALL,
                      Strategy.PRE_GATED)


@dataclass(frozen=True)
class CostModel:
    """Compute durations as flops / rate, one rate per op class.

    Rates may be math.inf to model free ops. iteration_overhead_s is one
    compute event per decoder iteration standing in for non-MoE head/tail
    work (embedding/LM-head proxy), which is why throughput is not simply
    the reciprocal of block latency.
    """

    gate_flops_rate: float
    expert_flops_rate: float
    non_moe_flops_rate: float
    iteration_overhead_s: float = 0.0

    def __post_init__(self) -> None:
        for name in ("gate_flops_rate", "expert_flops_rate",
                     "non_moe_flops_rate"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.iteration_overhead_s < 0 or not math.isfinite(
                self.iteration_overhead_s):
            raise ConfigError("iteration_overhead_s must be finite and >= 0")

    def gate_time(self, config: ModelConfig) -> float:
        return 2 * config.d_model * config.num_experts / self.gate_flops_rate

    def expert_time(self, config: ModelConfig) -> float:
        """One expert's forward for one token."""
        return 4 * config.d_model * config.d_ff / self.expert_flops_rate

    def non_moe_time(self, config: ModelConfig) -> float:
        return 2 * config.d_model * config.d_model / self.non_moe_flops_rate

    def block_compute_time(self, config: ModelConfig) -> float:
        """Steady-state block compute: one gate + top_k experts + dense."""
        return (self.gate_time(config)
                + config.top_k * self.expert_time(config)
                + self.non_moe_time(config))


@dataclass
class TimelineEvent:
    kind: str          # "compute" | "transfer"
    label: str
    block: int | None
    start: float
    end: float
    index: int = -1
    deps: tuple[int, ...] = ()


class Timeline:
    """Costed events on two resource lanes."""

    def __init__(self) -> None:
        self.events: list[TimelineEvent] = []

    def add(self, kind: str, label: str, block: int | None, start: float,
            end: float, deps: tuple[int, ...] = ()) -> TimelineEvent:
        ev = TimelineEvent(kind, label, block, start, end,
                           index=len(self.events), deps=deps)
        self.events.append(ev)
        return ev

    def by_kind(self, kind: str) -> list[TimelineEvent]:
        return [ev for ev in self.events if ev.kind == kind]

    def total_end(self) -> float:
        return max((ev.end for ev in self.events), default=0.0)

    def validate(self) -> None:
        """Lane exclusivity, causal deps, sane times."""
        for ev in self.events:
            if not (math.isfinite(ev.start) and math.isfinite(ev.end)):
                raise InvariantError(f"non-finite event time: {ev}")
            if ev.start < 0 or ev.end < ev.start:
                raise InvariantError(f"negative or inverted event: {ev}")
            for dep in ev.deps:
                if self.events[dep].end > ev.start:
                    raise InvariantError(
                        f"event {ev.index} starts before its dependency "
                        f"{dep} ends")
        for kind in ("compute", "transfer"):
            prev_end = 0.0
            for ev in self.by_kind(kind):
                if ev.start < prev_end:
                    raise InvariantError(
                        f"overlapping events on the {kind} lane at {ev.start}")
                prev_end = ev.end

    def jsonl_lines(self) -> list[str]:
        return [json.dumps({"lane": ev.kind, "label": ev.label,
                            "block": ev.block, "start_s": ev.start,
                            "end_s": ev.end})
                for ev in self.events]

    def save_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for line in self.jsonl_lines():
                fh.write(line + "\n")


@dataclass
class Metrics:
    avg_moe_block_latency_s: float
    tokens_per_sec: float
    peak_fast_bytes: int
    per_block_latencies_s: list[list[float]]
    cache_hit_rate: float | None
    total_time_s: float
    iterations: int


@dataclass
class SimResult:
    strategy: Strategy
    outputs: list[list[float]]
    trace: RoutingTrace
    timeline: Timeline
    metrics: Metrics
    ledger: MemoryLedger


def steady_state_latency(strategy: Strategy, cost_model: CostModel,
                         config: ModelConfig, tier: TierSpec) -> float:
    """Closed-form per-block latency once pipelining applies.

    Serves as an independent oracle for the event engine on blocks past
    the first (and before the gateless tail block).
    """
    compute = cost_model.block_compute_time(config)
    act = transfer_duration(config.top_k * config.expert_bytes, tier)
    full = transfer_duration(config.num_experts * config.expert_bytes, tier)
    if strategy is Strategy.RESIDENT_ONLY:
        return compute
    if strategy is Strategy.FETCH_ON_DEMAND:
        return compute + act
    if strategy is Strategy.PREFETCH_ALL:
        return max(compute, full)
    return max(compute, act)


def analytic_peak_bytes(strategy: Strategy, config: ModelConfig) -> int:
    """Cache-off analytic fast-tier peak for each strategy.

    Exact for every strategy at activation_level <= 1. For deeper
    lookahead it is an upper bound (L+1 activated sets): a saturated
    channel in a short model may never pile that many sets up at once.
    """
    sizes = ModelSizes.from_config(config)
    act = config.top_k * sizes.expert_bytes
    blocks = config.num_blocks
    if strategy is Strategy.RESIDENT_ONLY:
        return sizes.total_bytes
    if strategy is Strategy.FETCH_ON_DEMAND:
        return sizes.pinned_bytes + act
    if strategy is Strategy.PREFETCH_ALL:
        full = sizes.experts_per_block * sizes.expert_bytes
        return sizes.pinned_bytes + min(2, blocks) * full
    window = min(config.activation_level + 1, blocks)
    return sizes.pinned_bytes + window * act


def simulate(params: ModelParams, strategy: Strategy, cost_model: CostModel,
             tier: TierSpec, *, iterations: int = 1,
             cache_config: CacheConfig | None = None,
             trace: RoutingTrace | None = None,
             input_vec=None,
             include_first_block: bool = False) -> SimResult:
    """Run `iterations` decoder iterations under one strategy.

    Returns the activations (bit-identical across strategies), the
    two-lane Timeline, and Metrics with exact peak-memory accounting.
    Raises OomError when a placement or transfer cannot fit the fast tier.
    """
    cfg = params.config
    if iterations < 1:
        raise ConfigError("iterations must be >= 1")
    if strategy is Strategy.PRE_GATED and cfg.activation_level < 1:
        raise ConfigError(
            "pre_gated strategy requires a model with activation_level >= 1")
    if trace is not None:
        trace.validate_for(cfg, iterations)

    # Placement first: a resident-only model that cannot fit fails before
    # any math is spent on it.
    sizes = ModelSizes.from_config(cfg)
    placement = initial_placement(sizes, strategy.value, tier)

    # Math pass: one shared code path, independent of the strategy.
    x = list(input_vec) if input_vec is not None else default_input(cfg)
    if len(x) != cfg.d_model:
        raise ConfigError(f"input width {len(x)} != d_model {cfg.d_model}")
    outputs: list[list[float]] = []
    consumed: list[list] = []
    for it in range(iterations):
        supplied = trace.decisions[it] if trace is not None else None
        x, decisions = decoder_iteration(x, params, supplied_decisions=supplied)
        outputs.append(x)
        consumed.append(decisions)
    out_trace = RoutingTrace([list(d) for d in consumed],
                             source=trace.source if trace is not None
                             else SOURCE_GATE)

    ledger = MemoryLedger(tier.fast_capacity)
    ledger.pin("resident", sizes.pinned_bytes)
    if strategy is Strategy.RESIDENT_ONLY:
        ledger.pin("experts", sizes.experts_total_bytes)

    cache = None
    if (cache_config is not None and cache_config.policy != "none"
            and strategy is not Strategy.RESIDENT_ONLY):
        cache = ExpertCache(
            int(cache_config.capacity_fraction * sizes.experts_total_bytes),
            cache_config.policy)

    timeline = Timeline()
    g_dur = cost_model.gate_time(cfg)
    e_dur = cost_model.expert_time(cfg)
    m_dur = cost_model.non_moe_time(cfg)
    tail = cost_model.iteration_overhead_s
    lookahead = cfg.activation_level
    all_ids = tuple(range(cfg.num_experts))

    compute_free = 0.0
    channel_free = 0.0
    access_seq = 0
    arrival: dict[tuple[int, int], tuple[float, int | None]] = {}
    active_keys: dict[tuple[int, int], list] = {}

    def issue(it: int, b: int, expert_ids, when: float,
              dep: int | None) -> None:
        """Queue the fetch of `expert_ids` for block b, decided at `when`."""
        nonlocal channel_free, access_seq
        keys = [(b, e) for e in expert_ids]
        active_keys[(it, b)] = keys
        to_fetch: list = []
        inserted: dict = {}
        for key in keys:
            if cache is None:
                to_fetch.append(key)
                inserted[key] = False
                continue
            outcome = cache.access(key, sizes.expert_bytes, access_seq)
            access_seq += 1
            for victim in outcome.evicted:
                if victim in inserted:
                    inserted[victim] = False  # evicted before its own fetch
                else:
                    ledger.mark_uncached(
                        sizes.expert_group(*victim), when)
            if outcome.hit:
                continue
            to_fetch.append(key)
            inserted[key] = outcome.inserted
        if not to_fetch:
            arrival[(it, b)] = (when, None)
            return
        nbytes = len(to_fetch) * sizes.expert_bytes
        start = max(channel_free, when)
        if ledger.resident_at(start) + nbytes > tier.fast_capacity:
            raise OomError(
                f"{strategy.value}: fetching {nbytes} B for block {b} at "
                f"t={start:.9g} s exceeds fast capacity "
                f"{tier.fast_capacity} B")
        duration = transfer_duration(nbytes, tier)
        deps = (dep,) if dep is not None else ()
        ev = timeline.add("transfer", f"it{it}:fetch[{len(to_fetch)}]", b,
                          start, start + duration, deps=deps)
        channel_free = ev.end
        for key in to_fetch:
            ledger.open(sizes.expert_group(*key), sizes.expert_bytes, start,
                        hold_until=ev.end, cached=inserted[key])
        arrival[(it, b)] = (ev.end, ev.index)

    per_block: list[list[float]] = []
    prev_idx: int | None = None
    for it in range(iterations):
        iter_start = compute_free
        if strategy is Strategy.PREFETCH_ALL:
            issue(it, 0, all_ids, iter_start, prev_idx)
        latencies: list[float] = []
        prev_completion = iter_start
        for b in range(cfg.num_blocks):
            if strategy is Strategy.PREFETCH_ALL and b + 1 < cfg.num_blocks:
                issue(it, b + 1, all_ids, compute_free, prev_idx)
            last_gate_idx: int | None = None
            if cfg.has_conv_gate(b):
                deps = (prev_idx,) if prev_idx is not None else ()
                ev = timeline.add("compute", f"it{it}:gate", b, compute_free,
                                  compute_free + g_dur, deps=deps)
                compute_free, prev_idx = ev.end, ev.index
                last_gate_idx = ev.index
                if strategy is Strategy.PRE_GATED:
                    issue(it, b, consumed[it][b].expert_ids, ev.end, ev.index)
            if cfg.has_pre_gate(b):
                deps = (prev_idx,) if prev_idx is not None else ()
                ev = timeline.add("compute", f"it{it}:pre_gate", b,
                                  compute_free, compute_free + g_dur,
                                  deps=deps)
                compute_free, prev_idx = ev.end, ev.index
                last_gate_idx = ev.index
                target = b + lookahead
                if strategy is Strategy.PRE_GATED and target < cfg.num_blocks:
                    issue(it, target, consumed[it][target].expert_ids,
                          ev.end, ev.index)
            if strategy is Strategy.FETCH_ON_DEMAND:
                dep = last_gate_idx if last_gate_idx is not None else prev_idx
                issue(it, b, consumed[it][b].expert_ids, compute_free, dep)
            arr_t, arr_idx = arrival.get((it, b), (0.0, None))
            start = max(compute_free, arr_t)
            deps = tuple(i for i in (prev_idx, arr_idx) if i is not None)
            ev = timeline.add("compute", f"it{it}:experts", b, start,
                              start + cfg.top_k * e_dur, deps=deps)
            compute_free, prev_idx = ev.end, ev.index
            for key in active_keys.pop((it, b), ()):
                ledger.end_active(sizes.expert_group(*key), compute_free)
            deps = (prev_idx,)
            ev = timeline.add("compute", f"it{it}:non_moe", b, compute_free,
                              compute_free + m_dur, deps=deps)
            compute_free, prev_idx = ev.end, ev.index
            latencies.append(compute_free - prev_completion)
            prev_completion = compute_free
        if tail > 0.0:
            ev = timeline.add("compute", f"it{it}:iter_tail", None,
                              compute_free, compute_free + tail,
                              deps=(prev_idx,))
            compute_free, prev_idx = ev.end, ev.index
        per_block.append(latencies)

    total = max(compute_free, channel_free)
    ledger.finalize(total)
    timeline.validate()

    flat: list[float] = []
    for lats in per_block:
        if include_first_block or len(lats) == 1:
            flat.extend(lats)
        else:
            flat.extend(lats[1:])
    avg = sum(flat, 0.0) / len(flat)
    tokens_per_sec = iterations / total if total > 0 else math.inf
    metrics = Metrics(
        avg_moe_block_latency_s=avg,
        tokens_per_sec=tokens_per_sec,
        peak_fast_bytes=ledger.peak_bytes(),
        per_block_latencies_s=per_block,
        cache_hit_rate=cache.hit_rate if cache is not None else None,
        total_time_s=total,
        iterations=iterations,
    )
    assert placement.fast_resident_bytes <= tier.fast_capacity
    return SimResult(strategy=strategy, outputs=outputs, trace=out_trace,
                     timeline=timeline, metrics=metrics, ledger=ledger)
