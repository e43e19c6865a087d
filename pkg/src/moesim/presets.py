"""Named model presets and the default cost-model calibration.

Presets mirror a published encoder-decoder MoE family: expert counts and
block counts are kept faithful while d_model/d_ff shrink by DIM_SCALE so
simulations stay desk-scale. Matrix parameter counts and byte sizes thus
shrink by DIM_SCALE**2 = BYTE_SCALE; the default fast-tier capacity
shrinks by the same factor (80 GB -> 1.25 GB), so capacity ratios, OOM
behaviour, and sparsity structure match the full-size configuration.

Full-size configs exist for closed-form stats only and are never
simulated. The non_moe_extra_params constants calibrate each family's
non-MoE side (embeddings etc.) to its dense counterpart: ~223M params
for the 12-block family, ~770M for the 24-block one.

Cost-model constants live in calibration.cfg, not in code.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

from .core import ModelConfig
from .errors import ConfigError
from .scheduler import CostModel

DIM_SCALE = 8
BYTE_SCALE = DIM_SCALE * DIM_SCALE
FULL_FAST_CAPACITY = 80_000_000_000
SCALED_FAST_CAPACITY = FULL_FAST_CAPACITY // BYTE_SCALE

_BASE_EXTRA = 223_000_000 - 12 * 768 * 768      # dense-family remainder
_LARGE_EXTRA = 770_000_000 - 24 * 1024 * 1024


@dataclass(frozen=True)
class ModelPreset:
    name: str
    d_model: int
    d_ff: int
    num_blocks: int
    num_experts: int
    extra_params: int  # full-size accounting remainder

    def full_config(self, *, top_k: int = 1, activation_level: int = 1,
                    seed: int = 0) -> ModelConfig:
        return ModelConfig(d_model=self.d_model, d_ff=self.d_ff,
                           num_blocks=self.num_blocks,
                           num_experts=self.num_experts, top_k=top_k,
                           activation_level=activation_level, dtype_bytes=4,
                           seed=seed, non_moe_extra_params=self.extra_params)

    def scaled_config(self, *, top_k: int = 1, activation_level: int = 1,
                      seed: int = 0) -> ModelConfig:
        return ModelConfig(d_model=self.d_model // DIM_SCALE,
                           d_ff=self.d_ff // DIM_SCALE,
                           num_blocks=self.num_blocks,
                           num_experts=self.num_experts, top_k=top_k,
                           activation_level=activation_level, dtype_bytes=4,
                           seed=seed,
                           non_moe_extra_params=self.extra_params // BYTE_SCALE)


PRESETS: dict[str, ModelPreset] = {
    "base8": ModelPreset("base8", 768, 3072, 12, 8, _BASE_EXTRA),
    "base64": ModelPreset("base64", 768, 3072, 12, 64, _BASE_EXTRA),
    "base128": ModelPreset("base128", 768, 3072, 12, 128, _BASE_EXTRA),
    "base256": ModelPreset("base256", 768, 3072, 12, 256, _BASE_EXTRA),
    "large128": ModelPreset("large128", 1024, 4096, 24, 128, _LARGE_EXTRA),
}


def get_preset(name: str) -> ModelPreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(
            f"unknown model preset {name!r}; choose from "
            f"{sorted(PRESETS)}") from None


def _parse_kv(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"calibration line {lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def default_cost_model() -> CostModel:
    """Load the frozen calibration file shipped with the package."""
    text = resources.files("moesim").joinpath("calibration.cfg").read_text()
    kv = _parse_kv(text)
    try:
        return CostModel(
            gate_flops_rate=float(kv["gate_flops_rate"]),
            expert_flops_rate=float(kv["expert_flops_rate"]),
            non_moe_flops_rate=float(kv["non_moe_flops_rate"]),
            iteration_overhead_s=float(kv["iteration_overhead_s"]),
        )
    except KeyError as exc:
        raise ConfigError(f"calibration.cfg missing key {exc}") from exc
