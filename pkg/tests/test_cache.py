"""Replacement policies against an independent single-pass replay oracle."""

import pytest
from hypothesis import given, settings, strategies as st

from moesim import (CacheConfig, ConfigError, ExpertCache, ModelConfig,
                    gen_routing_trace)

from oracles import replay_cache


def run_cache(policy, capacity, accesses):
    cache = ExpertCache(capacity, policy)
    out = []
    for now, (key, nbytes) in enumerate(accesses):
        r = cache.access(key, nbytes, now)
        out.append((r.hit, r.evicted))
    return out


def test_zero_capacity_all_miss_no_insert():
    cache = ExpertCache(0, "lru")
    for now, key in enumerate("abcabc"):
        r = cache.access(key, 10, now)
        assert not r.hit and not r.inserted and r.evicted == ()
    assert cache.hits == 0 and cache.misses == 6
    assert cache.entries == {}


def test_lru_textbook_sequence():
    # capacity two entries; A,B,A,C -> C evicts B
    accesses = [("A", 1), ("B", 1), ("A", 1), ("C", 1)]
    results = run_cache("lru", 2, accesses)
    assert [r[0] for r in results] == [False, False, True, False]
    assert results[3][1] == ("B",)


def test_lifo_evicts_most_recent_insert():
    accesses = [("A", 1), ("B", 1), ("C", 1)]
    results = run_cache("lifo", 2, accesses)
    assert results[2][1] == ("B",)


def test_lfu_evicts_least_frequent_tie_oldest():
    accesses = [("A", 1), ("B", 1), ("A", 1), ("C", 1)]
    results = run_cache("lfu", 2, accesses)
    assert results[3][1] == ("B",)  # freq(A)=2, freq(B)=1
    # pure tie: freqs equal, oldest insert goes
    results = run_cache("lfu", 2, [("A", 1), ("B", 1), ("C", 1)])
    assert results[2][1] == ("A",)


def test_oversized_entry_bypasses():
    cache = ExpertCache(10, "lru")
    r = cache.access("big", 11, 0)
    assert not r.hit and not r.inserted and r.evicted == ()
    r = cache.access("big", 11, 1)
    assert not r.hit  # never cached


def test_multi_eviction_to_fit_large_entry():
    accesses = [("A", 4), ("B", 4), ("C", 8)]
    results = run_cache("lru", 8, accesses)
    assert results[2][1] == ("A", "B")


def test_bad_policy_rejected():
    with pytest.raises(ConfigError):
        ExpertCache(10, "fifo")
    with pytest.raises(ConfigError):
        CacheConfig("mru", 0.5)
    with pytest.raises(ConfigError):
        CacheConfig("lru", 1.5)


@pytest.mark.parametrize("policy", ["lifo", "lfu", "lru"])
def test_policy_matches_replay_oracle_on_zipf_trace(policy):
    cfg = ModelConfig(d_model=2, d_ff=2, num_blocks=4, num_experts=64,
                      top_k=1, activation_level=1)
    trace = gen_routing_trace(cfg, 500, 1.0, seed=17)
    accesses = [((b, d.expert_ids[0]), 100)
                for it in trace.decisions
                for b, d in enumerate(it)]
    capacity = int(0.2 * 4 * 64 * 100)
    assert run_cache(policy, capacity, accesses) == \
        replay_cache(policy, capacity, accesses)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(["lifo", "lfu", "lru"]),
       st.integers(0, 40),
       st.lists(st.tuples(st.integers(0, 9), st.integers(1, 12)),
                min_size=1, max_size=80))
def test_policy_matches_replay_oracle_random(policy, capacity, accesses):
    assert run_cache(policy, capacity, accesses) == \
        replay_cache(policy, capacity, accesses)


def test_skewed_trace_beats_uniform_hit_rate():
    cfg = ModelConfig(d_model=2, d_ff=2, num_blocks=4, num_experts=64,
                      top_k=1, activation_level=1)
    capacity = int(0.2 * 4 * 64 * 100)

    def hit_rate(skew):
        cache = ExpertCache(capacity, "lru")
        trace = gen_routing_trace(cfg, 2500, skew, seed=23)
        now = 0
        for it in trace.decisions:
            for b, d in enumerate(it):
                cache.access((b, d.expert_ids[0]), 100, now)
                now += 1
        return cache.hit_rate

    assert hit_rate(1.0) > hit_rate(0.0)
