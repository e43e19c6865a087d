"""Flat binary weight files.

Layout (little-endian): magic "PGMOE1", then d_model, d_ff, num_blocks,
num_experts, top_k, activation_level as int32, then matrices in block
order, row-major float32. Within a block: conventional gate (if wired),
lookahead gate (if wired), then for each expert w1 then w2, then the
block's dense layer. Values are stored as float32, so saving float64
in-memory weights rounds them; loading is exact.
"""

from __future__ import annotations

import math
import struct
from pathlib import Path

from .core import BlockParams, ModelConfig, ModelParams
from .errors import ConfigError, WeightFileError

MAGIC = b"PGMOE1"
_HEADER = struct.Struct("<6i")


def _block_layout(config: ModelConfig, block: int):
    """(name, expert, rows, cols) tuples in file order for one block."""
    c = config
    out = []
    if c.has_conv_gate(block):
        out.append(("gate", -1, c.d_model, c.num_experts))
    if c.has_pre_gate(block):
        out.append(("pre_gate", -1, c.d_model, c.num_experts))
    for e in range(c.num_experts):
        out.append(("w1", e, c.d_ff, c.d_model))
        out.append(("w2", e, c.d_model, c.d_ff))
    out.append(("non_moe", -1, c.d_model, c.d_model))
    return out


def save_model(params: ModelParams, path) -> None:
    c = params.config
    params.materialize()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(c.d_model, c.d_ff, c.num_blocks, c.num_experts,
                              c.top_k, c.activation_level))
        for b in range(c.num_blocks):
            blk = params.blocks[b]
            for name, expert, rows, cols in _block_layout(c, b):
                if name == "gate":
                    mat = blk.gate
                elif name == "pre_gate":
                    mat = blk.pre_gate
                elif name == "w1":
                    mat = blk.expert(expert).w1
                elif name == "w2":
                    mat = blk.expert(expert).w2
                else:
                    mat = blk.non_moe
                for row in mat:
                    fh.write(struct.pack(f"<{cols}f", *row))


def load_model(path, *, dtype_bytes: int = 4, seed: int = 0,
               non_moe_extra_params: int = 0) -> ModelParams:
    """Read a weight file into fully materialized ModelParams.

    Fields not carried by the header (dtype_bytes, seed, accounting
    remainder) come from keyword arguments.
    """
    raw = Path(path).read_bytes()
    if raw[:6] != MAGIC:
        raise WeightFileError(f"bad magic {raw[:6]!r}, expected {MAGIC!r}")
    if len(raw) < 6 + _HEADER.size:
        raise WeightFileError("truncated header")
    dims = _HEADER.unpack_from(raw, 6)
    try:
        config = ModelConfig(d_model=dims[0], d_ff=dims[1], num_blocks=dims[2],
                             num_experts=dims[3], top_k=dims[4],
                             activation_level=dims[5], dtype_bytes=dtype_bytes,
                             seed=seed,
                             non_moe_extra_params=non_moe_extra_params)
    except ConfigError as exc:
        raise WeightFileError(f"invalid header dimensions: {exc}") from exc

    offset = 6 + _HEADER.size
    blocks = []
    for b in range(config.num_blocks):
        loaded: dict = {}
        for name, expert, rows, cols in _block_layout(config, b):
            nbytes = rows * cols * 4
            if offset + nbytes > len(raw):
                raise WeightFileError(
                    f"file ends inside block {b} matrix {name!r}")
            flat = struct.unpack_from(f"<{rows * cols}f", raw, offset)
            offset += nbytes
            if not all(math.isfinite(v) for v in flat):
                raise WeightFileError(
                    f"non-finite value in block {b} matrix {name!r}")
            loaded[(name, expert)] = [
                [float(v) for v in flat[r * cols:(r + 1) * cols]]
                for r in range(rows)]
        blocks.append(BlockParams(config, b, loaded=loaded))
    if offset != len(raw):
        raise WeightFileError(f"{len(raw) - offset} trailing bytes after weights")
    return ModelParams(config, blocks)
