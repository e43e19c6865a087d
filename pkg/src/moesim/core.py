"""Numerical semantics of a decoder built from MoE blocks with lookahead routing.

A block mixes the outputs of its activated experts (softmax-probability
weighted) and passes the mix through one dense layer standing in for the
block's non-MoE compute. With activation_level L >= 1, the routing
decision a block consumes was produced L blocks earlier in the same
decoder iteration by a lookahead gate reading that block's input, which
is what lets a scheduler move parameters before they are needed. All
functions here are pure; placement and timing live elsewhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ConfigError, GateOverflowError, RoutingError, ShapeError
from .linalg import all_finite, matvec, matvec_columns, relu, softmax, weighted_sum
from .rng import Xoshiro256StarStar, derive_seed

# Substream tags for weight/trace/input derivation.
_TAG_GATE = 0
_TAG_PRE_GATE = 1
_TAG_W1 = 2
_TAG_W2 = 3
_TAG_DENSE = 4
_TAG_INPUT = 5
_TAG_TRACE = 6

SOURCE_GATE = "gate"
SOURCE_SYNTHETIC = "synthetic"


@dataclass(frozen=True)
class ModelConfig:
    """Dimensions and wiring of the model.

    activation_level is how many blocks ahead a lookahead gate's decision
    applies: 0 means conventional per-block gating, 1 is the default
    one-block lookahead. non_moe_extra_params counts embedding-like
    parameters that exist only for memory/stats accounting.
    """

    d_model: int
    d_ff: int
    num_blocks: int
    num_experts: int
    top_k: int
    activation_level: int = 1
    dtype_bytes: int = 4
    seed: int = 0
    non_moe_extra_params: int = 0

    def __post_init__(self) -> None:
        for name in ("d_model", "d_ff", "num_blocks", "num_experts", "top_k",
                     "dtype_bytes"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"{name} must be a positive int, got {v!r}")
        if self.top_k > self.num_experts:
            raise ConfigError(
                f"top_k={self.top_k} exceeds num_experts={self.num_experts}")
        if not 0 <= self.activation_level < self.num_blocks:
            raise ConfigError(
                f"activation_level={self.activation_level} must be in "
                f"[0, num_blocks={self.num_blocks})")
        if not 0 <= self.seed <= (1 << 64) - 1:
            raise ConfigError("seed must fit in 64 unsigned bits")
        if self.non_moe_extra_params < 0:
            raise ConfigError("non_moe_extra_params must be >= 0")

    # --- wiring -----------------------------------------------------------
    def has_conv_gate(self, block: int) -> bool:
        """Conventional gate: selects for the block it lives in."""
        if self.activation_level == 0:
            return True
        return block < self.activation_level

    def has_pre_gate(self, block: int) -> bool:
        """Lookahead gate: selects for block + activation_level."""
        if self.activation_level == 0:
            return False
        return block < self.num_blocks - self.activation_level

    def decision_origin(self, block: int) -> int:
        """Block whose gate produced the decision this block consumes."""
        if self.activation_level == 0 or block < self.activation_level:
            return block
        return block - self.activation_level

    # --- derived sizes ----------------------------------------------------
    @property
    def expert_params(self) -> int:
        return 2 * self.d_model * self.d_ff

    @property
    def expert_bytes(self) -> int:
        return self.expert_params * self.dtype_bytes

    @property
    def gate_count(self) -> int:
        return sum(self.has_conv_gate(b) + self.has_pre_gate(b)
                   for b in range(self.num_blocks))

    @property
    def gate_params_each(self) -> int:
        return self.d_model * self.num_experts


@dataclass(frozen=True)
class RoutingDecision:
    """Activated expert ids with their routing weights.

    Gate-computed decisions order ids by descending logit (ties broken by
    ascending id) and carry the softmax probabilities of the selected
    experts; synthetic decisions use ascending ids with uniform weights.
    """

    expert_ids: tuple[int, ...]
    combine_weights: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.expert_ids) != len(self.combine_weights):
            raise RoutingError("expert_ids and combine_weights length mismatch")
        if not self.expert_ids:
            raise RoutingError("empty routing decision")
        if len(set(self.expert_ids)) != len(self.expert_ids):
            raise RoutingError(f"duplicate expert ids: {self.expert_ids}")
        for w in self.combine_weights:
            if not (0.0 < w <= 1.0):
                raise RoutingError(f"combine weight {w!r} outside (0, 1]")

    def validate_for(self, config: ModelConfig) -> None:
        if len(self.expert_ids) != config.top_k:
            raise RoutingError(
                f"decision selects {len(self.expert_ids)} experts, "
                f"model top_k is {config.top_k}")
        for e in self.expert_ids:
            if not 0 <= e < config.num_experts:
                raise RoutingError(f"expert id {e} out of range")


@dataclass
class RoutingTrace:
    """Per (iteration, block) consumed routing decisions."""

    decisions: list[list[RoutingDecision]]
    source: str = SOURCE_GATE

    def __post_init__(self) -> None:
        if self.source not in (SOURCE_GATE, SOURCE_SYNTHETIC):
            raise RoutingError(f"unknown trace source {self.source!r}")

    def validate_for(self, config: ModelConfig, iterations: int | None = None) -> None:
        if iterations is not None and len(self.decisions) < iterations:
            raise RoutingError(
                f"trace covers {len(self.decisions)} iterations, need {iterations}")
        for per_block in self.decisions:
            if len(per_block) != config.num_blocks:
                raise RoutingError(
                    f"trace iteration has {len(per_block)} decisions, "
                    f"model has {config.num_blocks} blocks")
            for d in per_block:
                d.validate_for(config)


class ExpertParams:
    """One expert FFN: y = w2 . relu(w1 . x); w1 is d_ff x d_model."""

    __slots__ = ("w1", "w2")

    def __init__(self, w1: list[list[float]], w2: list[list[float]]) -> None:
        self.w1 = w1
        self.w2 = w2


class BlockParams:
    """Weights of one block; matrices materialize lazily from substreams.

    Lazy fill keeps huge-but-sparse presets cheap: only experts that are
    actually activated ever get generated. Substream derivation makes the
    values independent of materialization order.
    """

    def __init__(self, config: ModelConfig, index: int,
                 loaded: dict | None = None) -> None:
        self.config = config
        self.index = index
        self._loaded = loaded
        self._cache: dict = {}

    @property
    def has_conv_gate(self) -> bool:
        return self.config.has_conv_gate(self.index)

    @property
    def has_pre_gate(self) -> bool:
        return self.config.has_pre_gate(self.index)

    def _materialize(self, name, tag: int, rows: int, cols: int, expert: int = -1):
        key = (name, expert)
        mat = self._cache.get(key)
        if mat is None:
            if self._loaded is not None:
                mat = self._loaded[key]
            else:
                stream = Xoshiro256StarStar(
                    derive_seed(self.config.seed, tag, self.index, expert))
                mat = stream.fill_matrix(rows, cols)
            self._cache[key] = mat
        return mat

    @property
    def gate(self) -> list[list[float]]:
        if not self.has_conv_gate:
            raise ConfigError(f"block {self.index} carries no conventional gate")
        c = self.config
        return self._materialize("gate", _TAG_GATE, c.d_model, c.num_experts)

    @property
    def pre_gate(self) -> list[list[float]]:
        if not self.has_pre_gate:
            raise ConfigError(f"block {self.index} carries no lookahead gate")
        c = self.config
        return self._materialize("pre_gate", _TAG_PRE_GATE, c.d_model, c.num_experts)

    def expert(self, e: int) -> ExpertParams:
        c = self.config
        if not 0 <= e < c.num_experts:
            raise ConfigError(f"expert index {e} out of range")
        w1 = self._materialize("w1", _TAG_W1, c.d_ff, c.d_model, expert=e)
        w2 = self._materialize("w2", _TAG_W2, c.d_model, c.d_ff, expert=e)
        return ExpertParams(w1, w2)

    @property
    def non_moe(self) -> list[list[float]]:
        c = self.config
        return self._materialize("non_moe", _TAG_DENSE, c.d_model, c.d_model)


class ModelParams:
    """All per-block weights plus the accounting-only non-MoE remainder."""

    def __init__(self, config: ModelConfig,
                 blocks: list[BlockParams] | None = None) -> None:
        self.config = config
        self.blocks = blocks if blocks is not None else [
            BlockParams(config, b) for b in range(config.num_blocks)]

    @property
    def non_moe_remainder_bytes(self) -> int:
        return self.config.non_moe_extra_params * self.config.dtype_bytes

    def materialize(self) -> None:
        """Force-fill every matrix (tests and weight-file export)."""
        for blk in self.blocks:
            if blk.has_conv_gate:
                blk.gate
            if blk.has_pre_gate:
                blk.pre_gate
            for e in range(self.config.num_experts):
                blk.expert(e)
            blk.non_moe


def init_model(config: ModelConfig) -> ModelParams:
    """Build a model whose weights are uniform in [-0.1, 0.1).

    Same (config, seed) always yields bit-identical matrices.
    """
    return ModelParams(config)


def default_input(config: ModelConfig) -> list[float]:
    """Deterministic per-seed input activation in [-0.1, 0.1)^d_model."""
    stream = Xoshiro256StarStar(derive_seed(config.seed, _TAG_INPUT))
    return stream.fill(config.d_model)


# --------------------------------------------------------------------------
# Forward operations
# --------------------------------------------------------------------------

def gate_forward(x, gate_weights, k: int) -> RoutingDecision:
    """Route a token: logits = gate_weights.T . x, full softmax, top-k.

    Ids are ordered by descending logit with ties broken by ascending id;
    combine weights are the softmax probabilities of the selected experts.
    """
    num_experts = len(gate_weights[0]) if gate_weights else 0
    if k > num_experts:
        raise ConfigError(f"k={k} exceeds expert count {num_experts}")
    if len(gate_weights) != len(x):
        raise ShapeError(
            f"gate expects input of width {len(gate_weights)}, got {len(x)}")
    logits = matvec_columns(gate_weights, x)
    if not all_finite(logits):
        raise GateOverflowError("numerical overflow in gate")
    probs = softmax(logits)
    order = sorted(range(num_experts), key=lambda j: (-logits[j], j))[:k]
    weights = tuple(probs[j] for j in order)
    for w in weights:
        if w <= 0.0:
            raise GateOverflowError("gate routing weight underflowed to zero")
    return RoutingDecision(tuple(order), weights)


def expert_forward(x, expert: ExpertParams) -> list[float]:
    """y = w2 . relu(w1 . x). Pure, no state."""
    if len(expert.w1[0]) != len(x):
        raise ShapeError(
            f"expert expects input of width {len(expert.w1[0])}, got {len(x)}")
    hidden = relu(matvec(expert.w1, x))
    if len(expert.w2[0]) != len(hidden):
        raise ShapeError("expert w2 width does not match w1 height")
    return matvec(expert.w2, hidden)


def moe_block_forward(x, block: BlockParams, routing_in: RoutingDecision | None,
                      *, dry_run: bool = False, want_routing_out: bool = True):
    """One block: mix activated experts, then the block's dense layer.

    routing_out is computed from the block *input* alone whenever the
    block carries a lookahead gate, so it is available before any expert
    runs; dry_run returns it without touching experts at all.
    """
    routing_out = None
    if block.has_pre_gate and (want_routing_out or dry_run):
        routing_out = gate_forward(x, block.pre_gate, block.config.top_k)
    if dry_run:
        return None, routing_out
    if routing_in is None:
        raise RoutingError("no routing decision available")
    routing_in.validate_for(block.config)
    expert_outs = [expert_forward(x, block.expert(e))
                   for e in routing_in.expert_ids]
    mixed = weighted_sum(expert_outs, routing_in.combine_weights)
    y = matvec(block.non_moe, mixed)
    return y, routing_out


def decoder_iteration(x, params: ModelParams,
                      supplied_decisions: list[RoutingDecision] | None = None):
    """Run all blocks once; returns (output, consumed decisions per block).

    With activation_level L >= 1 the decision consumed by block b >= L was
    emitted at block b - L of this same iteration; decisions never cross
    iterations. When supplied_decisions is given (synthetic replay), gate
    math is skipped and the supplied decisions are consumed as-is.
    """
    cfg = params.config
    if supplied_decisions is not None:
        if len(supplied_decisions) != cfg.num_blocks:
            raise RoutingError(
                f"supplied {len(supplied_decisions)} decisions for "
                f"{cfg.num_blocks} blocks")
        for d in supplied_decisions:
            d.validate_for(cfg)
    pending: dict[int, RoutingDecision] = {}
    consumed: list[RoutingDecision] = []
    for b in range(cfg.num_blocks):
        block = params.blocks[b]
        if supplied_decisions is not None:
            decision = supplied_decisions[b]
        elif cfg.has_conv_gate(b):
            decision = gate_forward(x, block.gate, cfg.top_k)
        else:
            try:
                decision = pending.pop(b)
            except KeyError:
                raise RoutingError(
                    f"no routing decision available for block {b}") from None
        x, routing_out = moe_block_forward(
            x, block, decision, want_routing_out=supplied_decisions is None)
        if routing_out is not None:
            target = b + cfg.activation_level
            if target in pending:
                raise RoutingError(f"duplicate decision emitted for block {target}")
            pending[target] = routing_out
        consumed.append(decision)
    if pending:
        raise RoutingError(f"unconsumed decisions for blocks {sorted(pending)}")
    return x, consumed


# --------------------------------------------------------------------------
# Closed-form statistics
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class StatsReport:
    """Parameter and per-token compute counts, all exact integers.

    flops_per_token counts the top_k activated experts plus the per-block
    dense layers only, so it is exactly invariant in the expert count;
    the E-dependent (and practically negligible) gate compute is reported
    separately in gate_flops_per_token.
    """

    params_total: int
    params_moe: int
    params_non_moe: int
    params_experts: int
    flops_per_token: int
    gate_flops_per_token: int
    bytes_total: int
    bytes_experts: int


def model_stats(config: ModelConfig) -> StatsReport:
    c = config
    params_experts = c.num_blocks * c.num_experts * c.expert_params
    params_gates = c.gate_count * c.gate_params_each
    params_moe = params_experts + params_gates
    params_non_moe = c.num_blocks * c.d_model * c.d_model + c.non_moe_extra_params
    params_total = params_moe + params_non_moe
    flops = c.num_blocks * (c.top_k * 4 * c.d_model * c.d_ff
                            + 2 * c.d_model * c.d_model)
    gate_flops = c.gate_count * 2 * c.d_model * c.num_experts
    return StatsReport(
        params_total=params_total,
        params_moe=params_moe,
        params_non_moe=params_non_moe,
        params_experts=params_experts,
        flops_per_token=flops,
        gate_flops_per_token=gate_flops,
        bytes_total=params_total * c.dtype_bytes,
        bytes_experts=params_experts * c.dtype_bytes,
    )


# --------------------------------------------------------------------------
# Synthetic traces
# --------------------------------------------------------------------------

def gen_routing_trace(config: ModelConfig, iterations: int, skew: float,
                      seed: int) -> RoutingTrace:
    """Zipf(skew) synthetic routing: P(expert i) ~ 1/(i+1)^skew.

    skew=0 is uniform. Each decision draws top_k distinct experts;
    deterministic in seed, independent of the model's own weights.
    """
    if iterations < 1:
        raise ConfigError("iterations must be >= 1")
    if skew < 0:
        raise ConfigError("skew must be >= 0")
    c = config
    stream = Xoshiro256StarStar(derive_seed(seed, _TAG_TRACE))
    weights = [(i + 1) ** -skew for i in range(c.num_experts)]
    total = sum(weights, 0.0)
    cdf = []
    acc = 0.0
    for w in weights:
        acc += w / total
        cdf.append(acc)
    cdf[-1] = 1.0
    uniform_w = (1.0 / c.top_k,) * c.top_k

    def draw_one() -> int:
        u = stream.uniform()
        for i, edge in enumerate(cdf):
            if u < edge:
                return i
        return c.num_experts - 1

    decisions: list[list[RoutingDecision]] = []
    for _ in range(iterations):
        per_block: list[RoutingDecision] = []
        for _ in range(c.num_blocks):
            if c.top_k == c.num_experts:
                chosen = tuple(range(c.num_experts))
            else:
                picked: set[int] = set()
                while len(picked) < c.top_k:
                    picked.add(draw_one())
                chosen = tuple(sorted(picked))
            per_block.append(RoutingDecision(chosen, uniform_w))
        decisions.append(per_block)
    return RoutingTrace(decisions, source=SOURCE_SYNTHETIC)
