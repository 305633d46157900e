"""Seeded Monte Carlo engines cross-checking the analytical results.

Two engines: a trajectory walker for any ProtocolChain, and a discrete-time
simulator of 2^k-link nested repeater chains (single-heralded elementary
link generation, deterministic swapping with explicit classical
communication delays).

Determinism contract: every trajectory owns an independent RNG stream
derived from (seed, trajectory_index), and all reductions are ordered by
trajectory index, so results are bit-identical regardless of batching or
thread count. Trajectories are walked in vectorized lock-step batches for
speed; each trajectory still consumes only its own stream.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ._threads import parallel_map
from .estimators import ArgumentRangeError
from .protocols import ProtocolChain

_RNG_ALGORITHMS = ("philox", "pcg64")
_BATCH = 256          # trajectories walked in one lock-step batch
_CHUNK_DRAWS = 2**20  # uniforms drawn per trajectory-batch chunk, memory knob


@dataclass(frozen=True)
class SimConfig:
    """Simulation run shape. seed feeds per-trajectory substreams."""

    seed: int
    steps_per_trajectory: int = 100_000
    trajectories: int = 1_000
    rng_algorithm: str = "philox"

    def __post_init__(self):
        if not (isinstance(self.seed, int) and 0 <= self.seed < 2**64):
            raise ArgumentRangeError("seed", self.seed, "unsigned 64-bit integer")
        if self.steps_per_trajectory < 1:
            raise ArgumentRangeError("steps_per_trajectory", self.steps_per_trajectory, ">= 1")
        if self.trajectories < 1:
            raise ArgumentRangeError("trajectories", self.trajectories, ">= 1")
        if self.rng_algorithm not in _RNG_ALGORITHMS:
            raise ArgumentRangeError("rng_algorithm", self.rng_algorithm, str(_RNG_ALGORITHMS))


@dataclass(frozen=True)
class SimulationResult:
    """Per-trajectory success counts and their summary statistics.

    mean_throughput is successes per elementary step averaged over
    trajectories; throughput_variance is the sample variance of the
    per-trajectory rates (0 for a single trajectory).
    """

    success_counts: tuple[int, ...]
    mean_throughput: float
    throughput_variance: float
    config_echo: SimConfig
    wall_time: float

    def std_error(self) -> float:
        """Standard error of mean_throughput across trajectories."""
        return float(np.sqrt(self.throughput_variance / len(self.success_counts)))


def _trajectory_generator(config: SimConfig, index: int) -> np.random.Generator:
    # one independent, reproducible substream per (seed, trajectory index)
    ss = np.random.SeedSequence(entropy=config.seed, spawn_key=(index,))
    if config.rng_algorithm == "philox":
        return np.random.Generator(np.random.Philox(ss))
    return np.random.Generator(np.random.PCG64(ss))


def _batches(total: int) -> list[range]:
    return [range(lo, min(lo + _BATCH, total)) for lo in range(0, total, _BATCH)]


def _finish(counts: np.ndarray, config: SimConfig, t0: float) -> SimulationResult:
    rates = counts / config.steps_per_trajectory
    var = float(rates.var(ddof=1)) if len(rates) > 1 else 0.0
    return SimulationResult(
        success_counts=tuple(int(c) for c in counts),
        mean_throughput=float(rates.mean()),
        throughput_variance=var,
        config_echo=config,
        wall_time=time.perf_counter() - t0,
    )


def simulate_chain(chain: ProtocolChain, config: SimConfig) -> SimulationResult:
    """Walk the chain for steps_per_trajectory transitions per trajectory.

    Counts visits to the success state among steps 1..steps (the start
    state itself is not counted). Sampling inverts each row's cumulative
    distribution against one uniform draw per step.
    """
    cum = np.cumsum(chain.matrix.rows, axis=1)
    cum[:, -1] = 1.0  # kill cumulative round-off; draws live in [0, 1)
    steps = config.steps_per_trajectory
    chunk = max(1, _CHUNK_DRAWS // _BATCH)

    def run_batch(batch: range) -> np.ndarray:
        gens = [_trajectory_generator(config, i) for i in batch]
        b = len(gens)
        states = np.full(b, chain.start_state, dtype=np.int64)
        counts = np.zeros(b, dtype=np.int64)
        done = 0
        while done < steps:
            csize = min(chunk, steps - done)
            uniforms = np.stack([g.random(csize) for g in gens])
            for c in range(csize):
                rows = cum[states]
                states = (rows <= uniforms[:, c, None]).sum(axis=1)
                counts += states == chain.success_state
            done += csize
        return counts

    t0 = time.perf_counter()
    parts = parallel_map(run_batch, _batches(config.trajectories))
    return _finish(np.concatenate(parts), config, t0)


def _nested_coverage(seg, timer, k: int, leaves: int) -> np.ndarray:
    """Boolean (batch, leaves) map of links held by any segment or pending swap."""
    busy = np.zeros_like(seg[0])
    busy |= seg[0]
    for j in range(1, k + 1):
        active = seg[j] | (timer[j] > 0)
        busy |= np.repeat(active, 1 << j, axis=1)
    return busy


def _check_nested_state(seg, timer, k: int):
    cover = seg[0].astype(np.int32)
    for j in range(1, k + 1):
        if (seg[j] & (timer[j] > 0)).any():
            raise RuntimeError("nested invariant violated: segment and pending swap coexist")
        cover = cover + np.repeat((seg[j] | (timer[j] > 0)).astype(np.int32), 1 << j, axis=1)
    if cover.max(initial=0) > 1:
        raise RuntimeError("nested invariant violated: overlapping spans")


def simulate_nested(k: int, p: float, config: SimConfig,
                    check_invariants: bool = False) -> SimulationResult:
    """Discrete-time simulation of a 2^k-link nested swapping chain.

    Per step: idle elementary links attempt generation with probability p;
    two sibling segments at level j-1 start a level-j swap that completes
    after 2^(j-1) steps (classical heralding over the doubled span) and
    always succeeds; a completed top-level pair is consumed the step it
    forms, freeing every link from the next step on. Swap starts are
    evaluated after the step's generation outcomes; links under a pending
    or completed swap do not regenerate.

    check_invariants verifies the span bookkeeping after every step
    (disjoint power-of-two segments, timers only between consumed
    children); meant for debug-scale runs.
    """
    if not (isinstance(k, int) and k >= 1):
        raise ArgumentRangeError("k", k, ">= 1 integer")
    if not 0.0 < p <= 1.0:
        raise ArgumentRangeError("p", p, "(0, 1]")
    leaves = 1 << k
    steps = config.steps_per_trajectory
    chunk = max(1, _CHUNK_DRAWS // (_BATCH * leaves))

    def run_batch(batch: range) -> np.ndarray:
        gens = [_trajectory_generator(config, i) for i in batch]
        b = len(gens)
        seg = [np.zeros((b, leaves >> j), dtype=bool) for j in range(k + 1)]
        timer = [None] + [np.zeros((b, leaves >> j), dtype=np.int32) for j in range(1, k + 1)]
        counts = np.zeros(b, dtype=np.int64)
        done = 0
        while done < steps:
            csize = min(chunk, steps - done)
            uniforms = np.stack([g.random((csize, leaves)) for g in gens])
            for c in range(csize):
                busy_at_step_start = _nested_coverage(seg, timer, k, leaves)

                # advance pending swaps; the top level scores and resets
                for j in range(1, k + 1):
                    t = timer[j]
                    running = t > 0
                    if not running.any():
                        continue
                    t[running] -= 1
                    completed = running & (t == 0)
                    if not completed.any():
                        continue
                    if j == k:
                        consumed = completed[:, 0]
                        counts[consumed] += 1
                        for jj in range(k + 1):
                            seg[jj][consumed] = False
                            if jj > 0:
                                timer[jj][consumed] = 0
                    else:
                        seg[j][completed] = True

                # links idle at the start of the step attempt generation
                seg[0] |= ~busy_at_step_start & (uniforms[:, c, :] < p)

                # sibling segments merge: consume children, arm the timer
                for j in range(1, k + 1):
                    left = seg[j - 1][:, 0::2]
                    right = seg[j - 1][:, 1::2]
                    ready = left & right & (timer[j] == 0) & ~seg[j]
                    if ready.any():
                        timer[j][ready] = 1 << (j - 1)
                        left[ready] = False
                        right[ready] = False

                if check_invariants:
                    _check_nested_state(seg, timer, k)
            done += csize
        return counts

    t0 = time.perf_counter()
    parts = parallel_map(run_batch, _batches(config.trajectories))
    return _finish(np.concatenate(parts), config, t0)
