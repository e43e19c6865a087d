"""Replay a simulated schedule with two real concurrent workers.

One worker owns the compute lane, one the transfer lane; they consume
their lane's events in virtual-time order and hand completions across
via per-event signals. Costed durations become real sleeps, so measured
wall time only approximates virtual time (sleep granularity, scheduler
jitter); outputs are exactly the ones simulate produced. This mode
exists to demonstrate the overlap is realizable, not for acceptance
numbers.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass

from .scheduler import SimResult, Strategy, simulate


@dataclass
class WallclockResult:
    outputs: list[list[float]]
    virtual: SimResult
    wall_total_s: float
    tokens_per_sec_wall: float


def run_wallclock(params, strategy: Strategy, cost_model, tier, *,
                  iterations: int = 1, cache_config=None, trace=None,
                  input_vec=None, time_scale: float = 1.0) -> WallclockResult:
    """simulate(), then execute the schedule with real sleeps.

    time_scale stretches every duration (useful to dominate sleep
    granularity). OOM and config errors surface from the virtual pass
    before any worker starts.
    """
    sim = simulate(params, strategy, cost_model, tier, iterations=iterations,
                   cache_config=cache_config, trace=trace, input_vec=input_vec)
    events = sim.timeline.events
    done = [threading.Event() for _ in events]
    lanes = {
        "compute": [ev for ev in events if ev.kind == "compute"],
        "transfer": [ev for ev in events if ev.kind == "transfer"],
    }
    failures: list[BaseException] = []

    def worker(lane_events):
        try:
            for ev in lane_events:
                for dep in ev.deps:
                    done[dep].wait()
                duration = (ev.end - ev.start) * time_scale
                if duration > 0:
                    time.sleep(duration)
                done[ev.index].set()
        except BaseException as exc:  # pragma: no cover - defensive
            failures.append(exc)
            for flag in done:
                flag.set()

    threads = [threading.Thread(target=worker, args=(lane,), daemon=True)
               for lane in lanes.values()]
    t0 = time.perf_counter()
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    wall = time.perf_counter() - t0
    if failures:
        raise failures[0]
    return WallclockResult(
        outputs=sim.outputs,
        virtual=sim,
        wall_total_s=wall,
        tokens_per_sec_wall=iterations / wall if wall > 0 else float("inf"),
    )
