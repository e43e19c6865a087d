"""Weight file round trips and validation."""

import struct

import pytest

from moesim import (ModelConfig, WeightFileError, decoder_iteration,
                    default_input, init_model, load_model, save_model)


def small_config(**overrides):
    base = dict(d_model=4, d_ff=6, num_blocks=3, num_experts=3, top_k=1,
                activation_level=1, seed=5)
    base.update(overrides)
    return ModelConfig(**base)


def test_round_trip_preserves_header_and_wiring(tmp_path):
    cfg = small_config()
    path = tmp_path / "weights.bin"
    save_model(init_model(cfg), path)
    loaded = load_model(path)
    c = loaded.config
    assert (c.d_model, c.d_ff, c.num_blocks, c.num_experts, c.top_k,
            c.activation_level) == (4, 6, 3, 3, 1, 1)
    assert loaded.blocks[0].has_conv_gate and loaded.blocks[0].has_pre_gate
    assert not loaded.blocks[2].has_pre_gate


def test_round_trip_is_stable_after_first_save(tmp_path):
    # float64 -> float32 rounds once; a second save/load is lossless.
    cfg = small_config()
    p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
    save_model(init_model(cfg), p1)
    first = load_model(p1)
    save_model(first, p2)
    second = load_model(p2)
    for b in range(cfg.num_blocks):
        for e in range(cfg.num_experts):
            assert first.blocks[b].expert(e).w1 == second.blocks[b].expert(e).w1
            assert first.blocks[b].expert(e).w2 == second.blocks[b].expert(e).w2
    assert p1.read_bytes() == p2.read_bytes()


def test_loaded_model_runs_decoder(tmp_path):
    cfg = small_config()
    path = tmp_path / "weights.bin"
    save_model(init_model(cfg), path)
    loaded = load_model(path)
    y, consumed = decoder_iteration(default_input(loaded.config), loaded)
    assert len(y) == 4 and len(consumed) == 3


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"NOTMOE" + b"\x00" * 64)
    with pytest.raises(WeightFileError, match="magic"):
        load_model(path)


def test_truncated_file_rejected(tmp_path):
    cfg = small_config()
    path = tmp_path / "weights.bin"
    save_model(init_model(cfg), path)
    clipped = tmp_path / "clipped.bin"
    clipped.write_bytes(path.read_bytes()[:-10])
    with pytest.raises(WeightFileError, match="ends inside|trailing"):
        load_model(clipped)


def test_invalid_header_dims_rejected(tmp_path):
    path = tmp_path / "weights.bin"
    path.write_bytes(b"PGMOE1" + struct.pack("<6i", 4, 6, 3, 3, 9, 1))
    with pytest.raises(WeightFileError, match="invalid header"):
        load_model(path)


def test_non_finite_value_rejected(tmp_path):
    cfg = small_config(num_blocks=1, activation_level=0)
    path = tmp_path / "weights.bin"
    save_model(init_model(cfg), path)
    raw = bytearray(path.read_bytes())
    # first float of the first matrix sits right after the 30-byte header
    raw[30:34] = struct.pack("<f", float("inf"))
    bad = tmp_path / "bad.bin"
    bad.write_bytes(bytes(raw))
    with pytest.raises(WeightFileError, match="non-finite"):
        load_model(bad)
