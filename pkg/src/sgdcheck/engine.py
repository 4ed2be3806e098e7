"""Seeded SGD runner with reproducible replications.

The update is the plain one: x drops by the current rate times the sampled
gradient, with no projection, averaging, or momentum.  Each replication owns
a counter-based generator keyed by a 64-bit seed, so trajectories are
bit-reproducible across runs and platforms and replications are independent
by construction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, UsageError
from .objective import HypothesisCertificate, StochasticProblem, as_float_vector, sq_norm
from .schedule import Schedule

_MASK64 = (1 << 64) - 1
# Weyl increment and mixing constants of the SplitMix64 stream.
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _check_seed(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise UsageError(f"{name} must be an integer")
    value = int(value)
    if not 0 <= value <= _MASK64:
        raise UsageError(f"{name} must lie in [0, 2^64)")
    return value


def derive_seed(master_seed: int, index: int) -> int:
    """Per-replication seed: output ``index`` of a SplitMix64 stream.

    The stream state is master_seed + (index + 1) * gamma modulo 2^64 and the
    output is the standard SplitMix64 finalizer of that state.  The finalizer
    is a bijection and the states are distinct for distinct indices, so for a
    fixed master seed no two replications ever share a seed.
    """
    master_seed = _check_seed(master_seed, "master_seed")
    index = _check_seed(index, "index")
    z = (master_seed + (index + 1) * _GAMMA) & _MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


class SeededGenerator:
    """Counter-based pseudo-random generator keyed by a 64-bit seed.

    Wraps the Philox 4x64 bit generator, whose keyed streams are documented
    with published test vectors and are stable across platforms.  Identical
    seeds reproduce identical draw sequences; distinct seeds give unrelated
    streams.
    """

    algorithm = "philox4x64"

    def __init__(self, seed: int):
        self.seed = _check_seed(seed, "seed")
        self._gen = np.random.Generator(np.random.Philox(key=self.seed))

    def uniform(self, low: float, high: float, size=None):
        return self._gen.uniform(low, high, size=size)

    def integers(self, upper: int, size=None):
        return self._gen.integers(0, upper, size=size)

    def normal(self, size=None):
        return self._gen.normal(size=size)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One replication: squared distances to the optimum plus region flags.

    ``sq_dist[n]`` is ||x_n - x*||^2 for n = 0..steps and ``in_region[n]``
    records whether x_n stayed inside the certified ball.  The iterates
    themselves can be replayed from ``seed``; only the final one is kept.
    """

    seed: int
    steps: int
    sq_dist: np.ndarray
    in_region: np.ndarray
    final_x: np.ndarray


def step(x: np.ndarray, rate: float, gradient: np.ndarray, step_index: int | None = None) -> np.ndarray:
    """One SGD update: x minus rate times gradient, with no projection.

    Raises DivergenceError carrying ``step_index`` when the result leaves the
    finite floating-point range; iterates are never silently truncated.
    """
    result = x - rate * gradient
    if not np.all(np.isfinite(result)):
        raise DivergenceError(step_index if step_index is not None else -1)
    return result


def _check_steps(steps) -> int:
    if isinstance(steps, bool) or not isinstance(steps, (int, np.integer)) or steps < 1:
        raise UsageError("steps must be an integer >= 1")
    return int(steps)


def run_replication(
    problem: StochasticProblem,
    schedule: Schedule,
    x0,
    steps: int,
    seed: int,
    cert: HypothesisCertificate,
) -> Trajectory:
    """Run one seeded replication for ``steps`` updates.

    The noise block for the whole horizon is drawn up front from a fresh
    generator keyed by ``seed`` (the stream is identical to drawing one
    sample per step), then the recursion is applied step by step.  Identical
    inputs give bit-identical trajectories.
    """
    steps = _check_steps(steps)
    x = as_float_vector(x0, problem.dimension, "x0").copy()
    gen = SeededGenerator(seed)
    noise = problem.noise_block(gen, steps)
    rates = schedule.rates(0, steps)
    center = cert.region_center

    sq_dist = np.empty(steps + 1)
    sq_dist[0] = sq_norm(x - center)
    for n in range(steps):
        gradient = problem.pointwise_gradient(noise[n], x)
        x = step(x, rates[n], gradient, step_index=n + 1)
        value = sq_norm(x - center)
        if not np.isfinite(value):
            raise DivergenceError(n + 1)
        sq_dist[n + 1] = value
    in_region = sq_dist <= cert.region_radius * cert.region_radius
    sq_dist.flags.writeable = False
    in_region.flags.writeable = False
    x.flags.writeable = False
    return Trajectory(seed=int(seed), steps=steps, sq_dist=sq_dist, in_region=in_region, final_x=x)


def run_replications(
    problem: StochasticProblem,
    schedule: Schedule,
    x0,
    steps: int,
    cert: HypothesisCertificate,
    master_seed: int,
    count: int,
) -> list[Trajectory]:
    """Run ``count`` replications seeded from ``master_seed`` in lockstep.

    Replication i uses derive_seed(master_seed, i).  All replications are
    advanced together on stacked arrays purely as a speed measure; every
    floating-point operation is elementwise, so each row is bit-identical to
    the trajectory run_replication would produce for the same seed.
    """
    steps = _check_steps(steps)
    if isinstance(count, bool) or not isinstance(count, (int, np.integer)) or count < 1:
        raise UsageError("count must be an integer >= 1")
    count = int(count)
    x0 = as_float_vector(x0, problem.dimension, "x0")
    seeds = [derive_seed(master_seed, i) for i in range(count)]
    noise = np.stack([problem.noise_block(SeededGenerator(s), steps) for s in seeds])
    rates = schedule.rates(0, steps)
    center = cert.region_center

    x = np.repeat(x0[None, :], count, axis=0)
    sq_dist = np.empty((count, steps + 1))
    sq_dist[:, 0] = sq_norm(x - center)
    for n in range(steps):
        gradient = problem.pointwise_gradient(noise[:, n], x)
        x = x - rates[n] * gradient
        values = sq_norm(x - center)
        sq_dist[:, n + 1] = values
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise DivergenceError(
                n + 1,
                f"non-finite iterate at step {n + 1} in replication {bad} "
                f"(seed {seeds[bad]})",
            )
    in_region = sq_dist <= cert.region_radius * cert.region_radius

    trajectories = []
    for i in range(count):
        sq = sq_dist[i].copy()
        flags = in_region[i].copy()
        final = x[i].copy()
        sq.flags.writeable = False
        flags.flags.writeable = False
        final.flags.writeable = False
        trajectories.append(
            Trajectory(seed=seeds[i], steps=steps, sq_dist=sq, in_region=flags, final_x=final)
        )
    return trajectories
