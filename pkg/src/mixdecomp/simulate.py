"""Seeded Monte Carlo engine: trajectories, occupation records, tails.

Replicas draw from independent counter-based streams keyed by
(seed, replica_id), so results are reproducible across any scheduling.
Occupation counts follow the convention that time 0 is excluded:
``kappa_i(T)`` counts steps ``u = 1 .. T`` with ``X_u`` in block i.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import rng as rngmod
from .decomposition import Partition
from .errors import HorizonCap, ProductSpaceTooLarge
from .kernel import StochasticKernel

# 99% two-sided normal quantile, used by every Wilson interval here.
_Z99 = 2.5758293035489004


def wilson_interval(successes: int, trials: int, z: float = _Z99) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        return 0.0, 1.0
    p = successes / trials
    denom = 1.0 + z * z / trials
    centre = p + z * z / (2 * trials)
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials))
    lo = max(0.0, (centre - half) / denom)
    hi = min(1.0, (centre + half) / denom)
    return lo, hi


@dataclass(frozen=True)
class TailEstimate:
    """Monte Carlo probability estimate with a Wilson 99% interval."""

    point: float
    wilson_low: float
    wilson_hi: float
    reps: int

    @classmethod
    def from_counts(cls, hits: int, reps: int) -> "TailEstimate":
        lo, hi = wilson_interval(hits, reps)
        return cls(point=hits / reps if reps else 0.0, wilson_low=lo, wilson_hi=hi, reps=reps)


@dataclass(frozen=True)
class OccupationRecord:
    """Per-trajectory block occupation and transition counters.

    ``kappa[i]`` counts times ``u in 1..T`` with the state in block i, so the
    entries sum to T.  ``transitions[i, j]`` counts moves with the previous
    state in block i and the next in block j occurring strictly before T
    (arrival index ``s < T``), hence they total ``T - 1``.
    """

    T: int
    start: object
    kappa: np.ndarray
    transitions: np.ndarray

    def __post_init__(self):
        if int(self.kappa.sum()) != self.T:
            raise AssertionError("occupation counts must sum to the horizon")


@dataclass(frozen=True)
class HittingEstimate:
    """Sample mean of a hitting time with a 3-standard-error band."""

    mean: float
    half_width: float
    reps: int
    capped: int
    tail: TailEstimate | None = None


class RowSampler:
    """Vectorized next-state sampling from a transition matrix.

    Rows with more than 8 support points are sampled with Vose alias tables
    (O(1) per draw); sparser rows fall back to inverse-CDF search.
    """

    def __init__(self, kernel: StochasticKernel):
        K = kernel.rows
        self.n = kernel.n_states
        nnz = (K > 0).sum(axis=1)
        self._dense = bool((nnz > 8).any())
        if self._dense:
            self._prob, self._alias = _build_alias(K)
        self._cum = np.cumsum(K, axis=1)
        self._cum[:, -1] = 1.0

    def step(self, states: np.ndarray, gen: np.random.Generator) -> np.ndarray:
        if self._dense:
            u = gen.random(states.shape[0])
            slot = (gen.random(states.shape[0]) * self.n).astype(np.int64)
            slot = np.minimum(slot, self.n - 1)
            take = u < self._prob[states, slot]
            return np.where(take, slot, self._alias[states, slot])
        u = gen.random((states.shape[0], 1))
        return (self._cum[states] < u).sum(axis=1)


def _build_alias(K: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = K.shape[0]
    prob = np.zeros((n, n))
    alias = np.zeros((n, n), dtype=np.int64)
    for x in range(n):
        scaled = K[x] * n
        small = [j for j in range(n) if scaled[j] < 1.0]
        large = [j for j in range(n) if scaled[j] >= 1.0]
        scaled = scaled.copy()
        while small and large:
            s, l = small.pop(), large[-1]
            prob[x, s] = scaled[s]
            alias[x, s] = l
            scaled[l] -= 1.0 - scaled[s]
            if scaled[l] < 1.0:
                small.append(large.pop())
        for j in large + small:
            prob[x, j] = 1.0
            alias[x, j] = j
    return prob, alias


def simulate(
    chain,
    x0,
    T: int,
    seed: int,
    partition: Partition | None = None,
    block_of=None,
    n_blocks: int | None = None,
) -> tuple[np.ndarray | list, OccupationRecord]:
    """One trajectory of length T with its occupation record.

    ``chain`` is either a :class:`StochasticKernel` (states are indices,
    blocks come from ``partition``) or any object with a scalar
    ``step(state, generator)`` method (states are opaque; supply
    ``block_of``/``n_blocks`` to classify them, else everything is block 0).
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    if isinstance(chain, StochasticKernel):
        part = partition or Partition.single_block(chain.n_states)
        sampler = RowSampler(chain)
        gen = rngmod.stream(seed, 0)
        traj = np.empty(T + 1, dtype=np.int64)
        traj[0] = x0
        state = np.array([x0], dtype=np.int64)
        for t in range(1, T + 1):
            state = sampler.step(state, gen)
            traj[t] = state[0]
        blocks = part.block_of[traj]
        nb = part.n_blocks
    else:
        gen = rngmod.stream(seed, 0)
        traj = [x0]
        state = x0
        for _ in range(T):
            state = chain.step(state, gen)
            traj.append(state)
        if block_of is None:
            block_of = getattr(chain, "block_of", None)
        if block_of is None:
            blocks = np.zeros(T + 1, dtype=np.int64)
            nb = 1
        else:
            blocks = np.array([block_of(s) for s in traj], dtype=np.int64)
            nb = n_blocks if n_blocks is not None else int(blocks.max()) + 1
    kappa = np.bincount(blocks[1:], minlength=nb).astype(np.int64)
    trans = np.zeros((nb, nb), dtype=np.int64)
    np.add.at(trans, (blocks[:-1][: T - 1], blocks[1:][: T - 1]), 1)
    return traj, OccupationRecord(T=T, start=x0, kappa=kappa, transitions=trans)


def simulate_states(
    kernel: StochasticKernel, x0: Sequence[int] | int, T: int, seed: int, reps: int | None = None
) -> np.ndarray:
    """Batched trajectories; returns an int array of shape (reps, T + 1)."""
    if np.isscalar(x0):
        if reps is None:
            raise ValueError("reps required for a scalar start")
        starts = np.full(reps, int(x0), dtype=np.int64)
    else:
        starts = np.asarray(x0, dtype=np.int64)
    sampler = RowSampler(kernel)
    gen = rngmod.stream(seed, 0)
    out = np.empty((starts.size, T + 1), dtype=np.int64)
    out[:, 0] = starts
    state = starts.copy()
    for t in range(1, T + 1):
        state = sampler.step(state, gen)
        out[:, t] = state
    return out


def empirical_hitting(
    kernel: StochasticKernel,
    target: Sequence[int],
    x0: int,
    reps: int,
    seed: int,
    step_cap: int = 10**9,
    tail_t: int | None = None,
) -> HittingEstimate:
    """Monte Carlo hitting-time mean (3 SE band) and optional tail point."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    in_target = np.zeros(kernel.n_states, dtype=bool)
    in_target[np.asarray(target, dtype=int)] = True
    sampler = RowSampler(kernel)
    gen = rngmod.stream(seed, 0)
    state = np.full(reps, x0, dtype=np.int64)
    times = np.zeros(reps, dtype=np.int64)
    active = ~in_target[state]
    t = 0
    capped = 0
    while active.any():
        t += 1
        if t > step_cap:
            capped = int(active.sum())
            times[active] = step_cap
            break
        idx = np.nonzero(active)[0]
        state[idx] = sampler.step(state[idx], gen)
        done = in_target[state[idx]]
        times[idx[done]] = t
        active[idx[done]] = False
    if capped:
        raise HorizonCap(f"{capped} replicates exceeded {step_cap} steps")
    mean = float(times.mean())
    se = float(times.std(ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0
    tail = None
    if tail_t is not None:
        tail = TailEstimate.from_counts(int((times > tail_t).sum()), reps)
    return HittingEstimate(mean=mean, half_width=3.0 * se, reps=reps, capped=capped, tail=tail)


def empirical_occupation_tail(
    kernel: StochasticKernel,
    partition: Partition,
    blocks: int | Sequence[int],
    T: int,
    t: float,
    reps: int,
    seed: int,
    x0: int = 0,
) -> TailEstimate:
    """Monte Carlo estimate of ``P[kappa_i(T) < t]`` (joint over a subset)."""
    if np.isscalar(blocks):
        block_list = [int(blocks)]
    else:
        block_list = [int(b) for b in blocks]
    paths = simulate_states(kernel, x0, T, seed, reps=reps)
    lab = partition.block_of[paths[:, 1:]]
    hits = np.ones(reps, dtype=bool)
    for b in block_list:
        hits &= (lab == b).sum(axis=1) < t
    return TailEstimate.from_counts(int(hits.sum()), reps)


def exact_occupation_tail(
    kernel: StochasticKernel,
    partition: Partition,
    block: int,
    T: int,
    t: int,
    start: int | None = None,
) -> float:
    """Exact ``P[kappa_i(T) < t]`` by dynamic programming.

    The DP runs over (state, occupation counter capped at t).  With
    ``start=None`` the max over all point-mass starts is returned.

    Raises
    ------
    ProductSpaceTooLarge
        If ``n_states * t`` exceeds 1e7.
    """
    n = kernel.n_states
    if t <= 0:
        return 0.0
    if t > T:
        return 1.0
    if n * t > 10**7:
        raise ProductSpaceTooLarge(f"n * t = {n * t} > 1e7")
    table = occupation_tail_table(kernel, partition, block, T, t, starts=None if start is None else [start])
    return float(table[T - 1, t - 1])


def occupation_tail_table(
    kernel: StochasticKernel,
    partition: Partition,
    block: int,
    T_max: int,
    t_cap: int,
    starts: Sequence[int] | None = None,
) -> np.ndarray:
    """Exact worst-start occupation tails for a whole grid in one sweep.

    Returns ``table`` with ``table[s - 1, u - 1] = max_z P_z[kappa_i(s) < u]``
    for ``s = 1 .. T_max`` and ``u = 1 .. t_cap`` (max restricted to
    ``starts`` when given).  One forward DP over (counter, start, state).
    """
    n = kernel.n_states
    K = kernel.rows
    in_block = partition.block_of == block
    if starts is None:
        starts = range(n)
    start_idx = np.asarray(list(starts), dtype=int)
    ns = start_idx.size
    # p[k, z, y] = P_z[X_s = y, kappa(s) = k], with k = t_cap meaning ">= t_cap"
    p = np.zeros((t_cap + 1, ns, n))
    p[0, np.arange(ns), start_idx] = 1.0
    table = np.empty((T_max, t_cap))
    mask_in = in_block.astype(float)[None, None, :]
    mask_out = 1.0 - mask_in
    for s in range(1, T_max + 1):
        q = p.reshape(-1, n) @ K
        q = q.reshape(t_cap + 1, ns, n)
        nxt = q * mask_out
        nxt[1:] += q[:-1] * mask_in
        nxt[t_cap] += q[t_cap] * mask_in[0]
        p = nxt
        counter_mass = p.sum(axis=2)  # (t_cap + 1, ns)
        cum = np.cumsum(counter_mass[:-1], axis=0)  # P[kappa < u] per start
        table[s - 1] = cum.max(axis=1)
    return table


def exact_joint_occupation_tail(
    kernel: StochasticKernel,
    partition: Partition,
    blocks: Sequence[int],
    T: int,
    t: int,
    start: int | None = None,
) -> float:
    """Exact ``P[kappa_i(T) < t for all i in blocks]`` for at most 2 blocks."""
    blocks = [int(b) for b in blocks]
    if len(blocks) == 1:
        return exact_occupation_tail(kernel, partition, blocks[0], T, t, start)
    if len(blocks) != 2:
        raise ProductSpaceTooLarge("exact joint tails support at most 2 blocks")
    n = kernel.n_states
    if n * t * t > 10**7:
        raise ProductSpaceTooLarge(f"n * t^2 = {n * t * t} > 1e7")
    K = kernel.rows
    in1 = (partition.block_of == blocks[0]).astype(float)
    in2 = (partition.block_of == blocks[1]).astype(float)
    starts = range(n) if start is None else [start]
    worst = 0.0
    cap = t
    for z in starts:
        p = np.zeros((cap + 1, cap + 1, n))
        p[0, 0, z] = 1.0
        for _ in range(T):
            q = p.reshape(-1, n) @ K
            q = q.reshape(cap + 1, cap + 1, n)
            stay = q * (1.0 - in1) * (1.0 - in2)
            nxt = stay.copy()
            inc1 = q * in1
            inc2 = q * in2
            nxt[1:, :] += inc1[:-1, :]
            nxt[cap, :] += inc1[cap, :]
            nxt[:, 1:] += inc2[:, :-1]
            nxt[:, cap] += inc2[:, cap]
            p = nxt
        prob = p[:t, :t].sum()
        worst = max(worst, float(prob))
    return worst


def stream_correlation(seed: int, n_draws: int = 10**6) -> float:
    """Lag-1 cross-correlation between two replica streams (sanity check)."""
    a = rngmod.stream(seed, 0).random(n_draws)
    b = rngmod.stream(seed, 1).random(n_draws)
    a = a - a.mean()
    b = b - b.mean()
    return float((a[:-1] * b[1:]).sum() / math.sqrt((a * a).sum() * (b * b).sum()))
