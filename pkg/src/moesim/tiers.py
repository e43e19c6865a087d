"""Two-tier parameter residency: fast-tier capacity, channel, memory ledger.

The fast tier is bounded (accelerator-like), the slow tier unbounded
(host-like); a bandwidth/latency channel connects them. The ledger keeps
exact per-instant fast-tier byte residency as half-open intervals, so a
release and an acquisition at the same instant never double count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .core import ModelConfig
from .errors import ConfigError, OomError

FAST = "fast"
SLOW = "slow"

DEFAULT_FAST_CAPACITY = 80_000_000_000  # 80 GB, decimal


@dataclass(frozen=True)
class TierSpec:
    """Fast-tier capacity plus the channel feeding it from the slow tier."""

    fast_capacity: int
    channel_bandwidth: float  # bytes/sec; math.inf allowed
    channel_latency: float    # fixed per-transfer setup cost, seconds

    def __post_init__(self) -> None:
        if self.fast_capacity <= 0:
            raise ConfigError("fast_capacity must be positive")
        if not self.channel_bandwidth > 0:
            raise ConfigError("channel_bandwidth must be positive")
        if self.channel_latency < 0 or not math.isfinite(self.channel_latency):
            raise ConfigError("channel_latency must be finite and >= 0")


_TIER_PRESETS = {
    "pcie4": (32e9, 10e-6),
    "ssd": (3e9, 100e-6),
    "infinite": (math.inf, 0.0),
}


def tier_preset(name: str, fast_capacity: int = DEFAULT_FAST_CAPACITY) -> TierSpec:
    try:
        bandwidth, latency = _TIER_PRESETS[name]
    except KeyError:
        raise ConfigError(
            f"unknown tier preset {name!r}; choose from "
            f"{sorted(_TIER_PRESETS)}") from None
    return TierSpec(fast_capacity, bandwidth, latency)


def transfer_duration(nbytes: int, tier: TierSpec) -> float:
    """Seconds to move nbytes across the channel: latency + bytes/bandwidth.

    Groups issued together are charged as one transfer of the summed
    bytes plus a single latency term; callers coalesce before calling.
    """
    if nbytes < 0:
        raise ConfigError("nbytes must be >= 0")
    return tier.channel_latency + nbytes / tier.channel_bandwidth


def pipelined_peak_bytes(non_moe_bytes: int, per_block_active_bytes,
                         num_blocks: int, lookahead: int = 1) -> int:
    """Analytic fast-tier peak when each block's activated experts stay
    resident alongside the next `lookahead` blocks' incoming sets.

    With lookahead=1: max over N of non_moe + active[N] + active[N+1]
    (a single block's set when there is only one block).
    """
    if len(per_block_active_bytes) != num_blocks:
        raise ConfigError("per_block_active_bytes length must equal num_blocks")
    if num_blocks < 1:
        raise ConfigError("num_blocks must be >= 1")
    if lookahead < 0:
        raise ConfigError("lookahead must be >= 0")
    best = 0
    for n in range(num_blocks):
        window = per_block_active_bytes[n:n + lookahead + 1]
        best = max(best, sum(window))
    return non_moe_bytes + best


@dataclass(frozen=True)
class ModelSizes:
    """Byte sizes of the parameter groups the scheduler moves around.

    pinned_bytes covers everything that must stay fast-resident under any
    offload strategy: per-block dense layers, every gate (routing must run
    before experts arrive), and the accounting-only remainder.
    """

    expert_bytes: int
    experts_per_block: int
    num_blocks: int
    pinned_bytes: int
    experts_total_bytes: int

    @classmethod
    def from_config(cls, config: ModelConfig) -> "ModelSizes":
        c = config
        gates = c.gate_count * c.gate_params_each
        dense = c.num_blocks * c.d_model * c.d_model
        pinned = (gates + dense + c.non_moe_extra_params) * c.dtype_bytes
        experts_total = c.num_blocks * c.num_experts * c.expert_bytes
        return cls(expert_bytes=c.expert_bytes,
                   experts_per_block=c.num_experts,
                   num_blocks=c.num_blocks,
                   pinned_bytes=pinned,
                   experts_total_bytes=experts_total)

    @property
    def total_bytes(self) -> int:
        return self.pinned_bytes + self.experts_total_bytes

    def expert_group(self, block: int, expert: int) -> str:
        return f"expert:{block}:{expert}"


@dataclass
class PlacementState:
    """Initial residency of every parameter group."""

    residency: dict[str, str]
    sizes: ModelSizes
    fast_resident_bytes: int


def initial_placement(sizes: ModelSizes, strategy_name: str,
                      tier: TierSpec) -> PlacementState:
    """Starting residency for a strategy.

    resident_only pins everything fast (raising OomError when the model
    does not fit); every offload strategy starts with only the pinned
    non-MoE/gate groups fast and all experts slow.
    """
    residency = {"resident": FAST}
    if strategy_name == "resident_only":
        if sizes.total_bytes > tier.fast_capacity:
            raise OomError(
                f"resident-only placement needs {sizes.total_bytes} B but the "
                f"fast tier holds {tier.fast_capacity} B")
        fast_bytes = sizes.total_bytes
        expert_tier = FAST
    else:
        fast_bytes = sizes.pinned_bytes
        expert_tier = SLOW
    for b in range(sizes.num_blocks):
        for e in range(sizes.experts_per_block):
            residency[sizes.expert_group(b, e)] = expert_tier
    return PlacementState(residency=residency, sizes=sizes,
                          fast_resident_bytes=fast_bytes)


class _Group:
    __slots__ = ("nbytes", "open_since", "hold_until", "cached", "intervals")

    def __init__(self, nbytes: int) -> None:
        self.nbytes = nbytes
        self.open_since: float | None = None
        self.hold_until = 0.0
        self.cached = False
        self.intervals: list[tuple[float, float]] = []


class MemoryLedger:
    """Exact fast-tier byte accounting over virtual time.

    Groups contribute half-open residency intervals [start, end); a group
    stays open while it is in flight, pinned by an executing block, or
    retained by the expert cache. Single-writer: only the scheduler
    mutates it, in virtual-time order of its decisions.
    """

    def __init__(self, capacity: int) -> None:
        self.capacity = capacity
        self._groups: dict[str, _Group] = {}
        self._finalized = False
        self._peak: int | None = None

    def _group(self, key: str, nbytes: int | None = None) -> _Group:
        g = self._groups.get(key)
        if g is None:
            if nbytes is None:
                raise KeyError(f"unknown ledger group {key!r}")
            g = _Group(nbytes)
            self._groups[key] = g
        return g

    def pin(self, key: str, nbytes: int, start: float = 0.0) -> None:
        """Open a group that stays resident until finalize()."""
        g = self._group(key, nbytes)
        g.open_since = start
        g.cached = True  # never auto-closed
        g.hold_until = math.inf

    def open(self, key: str, nbytes: int, start: float, *, hold_until: float,
             cached: bool) -> None:
        g = self._group(key, nbytes)
        if g.open_since is not None:
            raise RuntimeError(f"group {key!r} opened twice")
        g.nbytes = nbytes
        g.open_since = start
        g.hold_until = hold_until
        g.cached = cached

    def mark_uncached(self, key: str, now: float) -> None:
        g = self._group(key)
        g.cached = False
        self._maybe_close(g, now)

    def end_active(self, key: str, now: float) -> None:
        """The consuming block finished; group may close unless cached."""
        g = self._group(key)
        g.hold_until = max(g.hold_until, now)
        self._maybe_close(g, now)

    @staticmethod
    def _maybe_close(g: _Group, now: float) -> None:
        if g.open_since is None or g.cached or now < g.hold_until:
            return
        g.intervals.append((g.open_since, now))
        g.open_since = None

    def resident_at(self, t: float) -> int:
        """Fast-tier bytes at instant t (releases at t already applied)."""
        total = 0
        for g in self._groups.values():
            if g.open_since is not None and g.open_since <= t:
                total += g.nbytes
            else:
                for start, end in g.intervals:
                    if start <= t < end:
                        total += g.nbytes
                        break
        return total

    def finalize(self, end_time: float) -> None:
        for g in self._groups.values():
            if g.open_since is not None:
                close = max(end_time, g.open_since)
                if math.isfinite(g.hold_until):
                    close = max(close, g.hold_until)
                g.intervals.append((g.open_since, close))
                g.open_since = None
        self._finalized = True
        self._peak = None

    def intervals(self) -> dict[str, list[tuple[float, float]]]:
        return {k: list(g.intervals) for k, g in self._groups.items()}

    def peak_bytes(self) -> int:
        """Max simultaneous residency; releases apply before acquisitions
        at equal instants (half-open intervals)."""
        if not self._finalized:
            raise RuntimeError("finalize() the ledger before reading its peak")
        if self._peak is not None:
            return self._peak
        events: list[tuple[float, int, int]] = []
        for g in self._groups.values():
            for start, end in g.intervals:
                if end > start:
                    events.append((start, 1, g.nbytes))
                    events.append((end, 0, -g.nbytes))
        events.sort(key=lambda ev: (ev[0], ev[1]))
        peak = 0
        current = 0
        for _, _, delta in events:
            current += delta
            if current > peak:
                peak = current
        self._peak = peak
        return peak
