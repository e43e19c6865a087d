"""Expert cache with LIFO / LFU / LRU replacement.

Keys are (block, expert) pairs: hits happen when a later decoder
iteration re-activates the same expert of the same block. Behaviour is a
pure function of the access sequence, which is what makes single-pass
replay oracles possible.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError

POLICIES = ("lifo", "lfu", "lru")


@dataclass(frozen=True)
class CacheConfig:
    policy: str
    capacity_fraction: float

    def __post_init__(self) -> None:
        if self.policy not in POLICIES + ("none",):
            raise ConfigError(
                f"unknown cache policy {self.policy!r}; choose from "
                f"{POLICIES + ('none',)}")
        if not 0.0 <= self.capacity_fraction <= 1.0:
            raise ConfigError("capacity_fraction must be in [0, 1]")


@dataclass(frozen=True)
class CacheOutcome:
    hit: bool
    inserted: bool
    evicted: tuple


class _Entry:
    __slots__ = ("nbytes", "insert_seq", "freq", "last_use")

    def __init__(self, nbytes: int, insert_seq: int, now: int) -> None:
        self.nbytes = nbytes
        self.insert_seq = insert_seq
        self.freq = 1
        self.last_use = now


class ExpertCache:
    """Byte-capacity cache; entries larger than the whole cache bypass it."""

    def __init__(self, capacity_bytes: int, policy: str) -> None:
        if policy not in POLICIES:
            raise ConfigError(f"unknown cache policy {policy!r}")
        if capacity_bytes < 0:
            raise ConfigError("capacity_bytes must be >= 0")
        self.capacity_bytes = capacity_bytes
        self.policy = policy
        self.entries: dict = {}
        self.used_bytes = 0
        self.hits = 0
        self.misses = 0
        self._insert_seq = 0

    @property
    def hit_rate(self) -> float:
        total = self.hits + self.misses
        return self.hits / total if total else 0.0

    def _victim(self):
        entries = self.entries
        if self.policy == "lifo":
            return max(entries, key=lambda k: entries[k].insert_seq)
        if self.policy == "lfu":
            return min(entries, key=lambda k: (entries[k].freq,
                                               entries[k].insert_seq))
        return min(entries, key=lambda k: (entries[k].last_use,
                                           entries[k].insert_seq))

    def access(self, key, nbytes: int, now: int) -> CacheOutcome:
        """Look up key; on miss evict per policy until the entry fits.

        Hits update freq and last_use. Entries that can never fit are
        bypassed: counted as misses, nothing evicted, nothing inserted.
        """
        entry = self.entries.get(key)
        if entry is not None:
            entry.freq += 1
            entry.last_use = now
            self.hits += 1
            return CacheOutcome(hit=True, inserted=False, evicted=())
        self.misses += 1
        if nbytes > self.capacity_bytes:
            return CacheOutcome(hit=False, inserted=False, evicted=())
        evicted = []
        while self.used_bytes + nbytes > self.capacity_bytes:
            victim = self._victim()
            self.used_bytes -= self.entries.pop(victim).nbytes
            evicted.append(victim)
        self.entries[key] = _Entry(nbytes, self._insert_seq, now)
        self._insert_seq += 1
        self.used_bytes += nbytes
        return CacheOutcome(hit=False, inserted=True, evicted=tuple(evicted))
