"""State-space partitions, trace (restriction) and projected kernels.

The trace of a chain on a block is the chain watched only while it visits
that block; the projected chain moves on block indices with stationary-flow
transition rates.  Escape statistics and the subset hitting scale
``phi_bar_hit`` are computed exactly by linear solves.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from . import rng as rngmod
from .config import DEFAULT_TOLERANCES, MAX_DIRECT_SOLVE_STATES, Tolerances, thread_count
from .errors import (
    DimensionMismatch,
    NoExit,
    SingularReturn,
    TooManyBlocks,
)
from .kernel import (
    MixingProfile,
    StationaryDistribution,
    StochasticKernel,
    hitting_analysis,
    mixing_profile,
)


@dataclass(frozen=True)
class Partition:
    """Surjective assignment of states to blocks ``0 .. n_blocks - 1``.

    Blocks are nonempty, disjoint and cover the state space by construction.
    """

    block_of: np.ndarray
    n_blocks: int

    def __post_init__(self):
        lab = np.asarray(self.block_of, dtype=int)
        if lab.ndim != 1:
            raise DimensionMismatch("block_of must be a vector")
        if self.n_blocks < 1:
            raise ValueError("need at least one block")
        if lab.min(initial=0) < 0 or (lab.size and lab.max() >= self.n_blocks):
            raise ValueError("block indices out of range")
        counts = np.bincount(lab, minlength=self.n_blocks)
        if (counts == 0).any():
            empty = np.nonzero(counts == 0)[0]
            raise ValueError(f"empty blocks: {empty.tolist()}")
        lab = lab.copy()
        lab.setflags(write=False)
        object.__setattr__(self, "block_of", lab)

    @classmethod
    def from_block_of(cls, block_of) -> "Partition":
        lab = np.asarray(block_of, dtype=int)
        return cls(lab, int(lab.max()) + 1 if lab.size else 1)

    @classmethod
    def single_block(cls, n_states: int) -> "Partition":
        return cls(np.zeros(n_states, dtype=int), 1)

    @property
    def n_states(self) -> int:
        return self.block_of.shape[0]

    def members(self, block: int) -> np.ndarray:
        return np.nonzero(self.block_of == block)[0]

    def all_members(self) -> list[np.ndarray]:
        return [self.members(i) for i in range(self.n_blocks)]

    def masses(self, pi: StationaryDistribution) -> np.ndarray:
        if pi.n_states != self.n_states:
            raise DimensionMismatch("pi length must equal partition size")
        return np.bincount(self.block_of, weights=pi.weights, minlength=self.n_blocks)


@dataclass(frozen=True)
class EscapeStatistics:
    """Exact escape-time data for one partition block.

    ``expected[k]`` is the mean first exit time from the block started at its
    k-th member state; ``tail[t, k] = P[tau_esc > t]``;
    ``exit_block_distribution[k, j]`` is the probability the first state
    outside the block lies in block j.
    """

    block: int
    members: np.ndarray
    expected: np.ndarray
    tail: np.ndarray
    exit_block_distribution: np.ndarray

    def tail_at(self, t: float, state_row: int | None = None) -> float:
        """P[tau_esc > t] (max over in-block starts unless one is given)."""
        s = int(np.floor(t))
        s = min(max(s, 0), self.tail.shape[0] - 1)
        col = self.tail[s]
        return float(col.max() if state_row is None else col[state_row])


@dataclass(frozen=True)
class DecompositionReport:
    """Per-block traces, the projected kernel, and block mixing times."""

    trace_kernels: tuple[StochasticKernel, ...]
    projected: StochasticKernel
    block_masses: np.ndarray
    block_mixing_times: tuple[int | None, ...]
    phi_max: int | None
    block_profiles: tuple[MixingProfile, ...] = ()


@dataclass(frozen=True)
class AvgHitResult:
    """Worst expected hitting time of heavy block unions.

    ``value`` is ``max over I with pi(union) >= alpha/2`` of the worst-start
    expected hitting time of the union; None with ``no_qualifying_set`` set
    when the mass floor excludes every subset.  Sampled mode only inspects a
    random subset family, so its value is a lower bound.
    """

    value: float | None
    alpha: float
    mode: str
    n_qualifying: int
    no_qualifying_set: bool = False
    lower_bound_only: bool = False
    argmax_subset: tuple[int, ...] | None = None


def trace_kernel(
    kernel: StochasticKernel,
    partition: Partition,
    block: int,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> StochasticKernel:
    """Trace (watched-on-a-block) kernel ``K_A + K_AB (I - K_BB)^{-1} K_BA``.

    The trace inherits irreducibility, reversibility and any diagonal
    laziness of the parent kernel, and its stationary distribution is the
    parent's restricted to the block and renormalized.

    Raises
    ------
    SingularReturn
        If ``I - K_BB`` is numerically singular, which signals that
        excursions out of the block need not return.
    """
    A = partition.members(block)
    if A.size == 0:
        raise ValueError(f"block {block} is empty")
    n = kernel.n_states
    B = np.setdiff1d(np.arange(n), A)
    K = kernel.rows
    KAA = K[np.ix_(A, A)]
    if B.size == 0:
        return StochasticKernel(KAA, _sub_labels(kernel, A))
    KAB = K[np.ix_(A, B)]
    KBB = K[np.ix_(B, B)]
    KBA = K[np.ix_(B, A)]
    if B.size <= MAX_DIRECT_SOLVE_STATES:
        try:
            ret = scipy.linalg.solve(np.eye(B.size) - KBB, KBA)
        except scipy.linalg.LinAlgError as exc:
            raise SingularReturn(f"(I - K_BB) singular for block {block}: {exc}") from exc
        rows = KAA + KAB @ ret
    else:
        # accumulate the excursion series for very large complements
        rows = KAA.copy()
        out = KAB.copy()
        for _ in range(50_000_000):
            rows += out @ KBA
            out = out @ KBB
            if out.sum(axis=1).max() < 1e-10:
                break
        else:  # pragma: no cover
            raise SingularReturn(f"excursions out of block {block} do not die out")
    err = np.abs(rows.sum(axis=1) - 1.0).max()
    if err > 1e-7:
        raise SingularReturn(f"trace rows sum to 1 +- {err:.2e}; block {block} may be escaping")
    rows = rows / rows.sum(axis=1, keepdims=True)
    return StochasticKernel(rows, _sub_labels(kernel, A))


def _sub_labels(kernel: StochasticKernel, idx: np.ndarray):
    return tuple(kernel.labels[i] for i in idx) if kernel.labels is not None else None


def trace_kernel_dp_oracle(
    kernel: StochasticKernel, partition: Partition, block: int, eps: float = 1e-13
) -> np.ndarray:
    """One-step trace law by absorbing power iteration (independent oracle).

    Accumulates ``K_AB K_BB^t K_BA`` until the surviving excursion mass drops
    below ``eps``; avoids the matrix inverse used by :func:`trace_kernel`.
    """
    A = partition.members(block)
    n = kernel.n_states
    B = np.setdiff1d(np.arange(n), A)
    K = kernel.rows
    rows = K[np.ix_(A, A)].copy()
    if B.size == 0:
        return rows
    KAB = K[np.ix_(A, B)]
    KBB = K[np.ix_(B, B)]
    KBA = K[np.ix_(B, A)]
    out = KAB.copy()  # mass currently wandering outside, per outside state
    for _ in range(10_000_000):
        rows += out @ KBA
        out = out @ KBB
        if out.sum(axis=1).max() < eps:
            break
    return rows


def projected_kernel(
    kernel: StochasticKernel,
    pi: StationaryDistribution,
    partition: Partition,
) -> StochasticKernel:
    """Projected kernel on block indices.

    ``Kbar(i, j)`` aggregates the stationary flow from block i to block j,
    normalized by the mass of block i; the result is reversible with respect
    to the block masses whenever the parent kernel is reversible.
    """
    n = partition.n_blocks
    masses = partition.masses(pi)
    flux = pi.weights[:, None] * kernel.rows
    member = np.zeros((kernel.n_states, n))
    member[np.arange(kernel.n_states), partition.block_of] = 1.0
    agg = member.T @ flux @ member
    rows = agg / masses[:, None]
    rows = rows / rows.sum(axis=1, keepdims=True)
    return StochasticKernel(rows)


def less_lazy_projection(projected: StochasticKernel) -> StochasticKernel:
    """Renormalize a projected kernel so every row has off-diagonal mass 1/2.

    Off-diagonal entries become ``Kbar(i,j) / (2 (1 - Kbar(i,i)))``; the
    diagonal fills to 1, so the output is half-lazy by construction.

    Raises
    ------
    AbsorbingBlock
        If some diagonal entry equals 1 (no off-diagonal mass to scale).
    """
    from .errors import AbsorbingBlock

    K = projected.rows
    n = projected.n_states
    diag = np.diag(K)
    stay = 1.0 - diag
    if (stay <= 1e-14).any():
        bad = np.nonzero(stay <= 1e-14)[0]
        raise AbsorbingBlock(f"blocks with no exit mass: {bad.tolist()}")
    rows = K / (2.0 * stay[:, None])
    np.fill_diagonal(rows, 0.0)
    np.fill_diagonal(rows, 1.0 - rows.sum(axis=1))
    return StochasticKernel(rows, projected.labels)


def escape_analysis(
    kernel: StochasticKernel,
    partition: Partition,
    block: int,
    horizon: int,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> EscapeStatistics:
    """Exact escape-time expectations, tails and exit-block distribution.

    Raises
    ------
    NoExit
        If the block has no transition leaving it.
    """
    A = partition.members(block)
    n = kernel.n_states
    B = np.setdiff1d(np.arange(n), A)
    K = kernel.rows
    KII = K[np.ix_(A, A)]
    out_mass = 1.0 - KII.sum(axis=1)
    if B.size == 0 or out_mass.max() <= 1e-14:
        raise NoExit(f"block {block} is closed")
    try:
        expected = scipy.linalg.solve(np.eye(A.size) - KII, np.ones(A.size))
    except scipy.linalg.LinAlgError as exc:
        raise NoExit(f"block {block}: escape system singular ({exc})") from exc
    # tails: P[tau_esc > t] = (K_II^t 1)(x), exact
    tails = np.zeros((horizon + 1, A.size))
    u = np.ones(A.size)
    tails[0] = u
    for t in range(1, horizon + 1):
        u = KII @ u
        tails[t] = u
    # exit-block distribution: first outside state aggregated by block
    KIB = K[np.ix_(A, B)]
    hit_outside = scipy.linalg.solve(np.eye(A.size) - KII, KIB)  # (|A| x |B|)
    exit_blocks = np.zeros((A.size, partition.n_blocks))
    lab_B = partition.block_of[B]
    for j in range(partition.n_blocks):
        cols = np.nonzero(lab_B == j)[0]
        if cols.size:
            exit_blocks[:, j] = hit_outside[:, cols].sum(axis=1)
    # metastable blocks make (I - K_II) ill-conditioned; the absorbing
    # probabilities are still accurate in absolute terms, so allow the
    # condition-number-scaled residual before renormalizing
    row_err = np.abs(exit_blocks.sum(axis=1) - 1.0).max()
    if row_err > 1e-6:
        raise NoExit(f"exit distribution rows sum to 1 +- {row_err:.2e}")
    exit_blocks /= exit_blocks.sum(axis=1, keepdims=True)
    return EscapeStatistics(
        block=block,
        members=A,
        expected=expected,
        tail=tails,
        exit_block_distribution=exit_blocks,
    )


def escape_tail_at(
    kernel: StochasticKernel, partition: Partition, block: int, t: float
) -> np.ndarray:
    """Exact ``P[tau_esc > floor(t)]`` per in-block start, via squaring."""
    A = partition.members(block)
    KII = kernel.rows[np.ix_(A, A)]
    s = int(np.floor(max(t, 0.0)))
    if s == 0:
        return np.ones(A.size)
    # binary exponentiation on the substochastic block
    result = np.ones(A.size)
    base = KII
    e = s
    while e:
        if e & 1:
            result = base @ result
        e >>= 1
        if e:
            base = base @ base
    return result


def block_mixing_times(
    kernel: StochasticKernel,
    pi: StationaryDistribution,
    partition: Partition,
    horizon: int,
) -> tuple[tuple[int | None, ...], tuple[MixingProfile, ...], tuple[StochasticKernel, ...]]:
    """Mixing time of every block trace (the per-block time scale phi_i).

    Blocks are independent; with MIXDECOMP_THREADS > 1 they are analyzed in a
    thread pool (results are collected in block order, so the output does not
    depend on scheduling).
    """

    def one(i: int):
        A = partition.members(i)
        Ki = trace_kernel(kernel, partition, i)
        sub = pi.weights[A]
        pii = StationaryDistribution(sub / sub.sum())
        prof = mixing_profile(Ki, pii, horizon)
        return Ki, prof

    workers = min(thread_count(), partition.n_blocks)
    if workers > 1 and partition.n_blocks > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, range(partition.n_blocks)))
    else:
        results = [one(i) for i in range(partition.n_blocks)]
    traces = tuple(r[0] for r in results)
    profiles = tuple(r[1] for r in results)
    phis = tuple(p.mixing_time for p in profiles)
    return phis, profiles, traces


def decompose(
    kernel: StochasticKernel,
    pi: StationaryDistribution,
    partition: Partition,
    horizon: int,
) -> DecompositionReport:
    """Full decomposition report: traces, projection, masses, phi values."""
    phis, profiles, traces = block_mixing_times(kernel, pi, partition, horizon)
    proj = projected_kernel(kernel, pi, partition)
    masses = partition.masses(pi)
    known = [p for p in phis if p is not None]
    phi_max = max(known) if len(known) == len(phis) else None
    return DecompositionReport(
        trace_kernels=tuple(traces),
        projected=proj,
        block_masses=masses,
        block_mixing_times=phis,
        phi_max=phi_max,
        block_profiles=profiles,
    )


def qualifying_subsets(masses: np.ndarray, floor: float) -> list[tuple[int, ...]]:
    """All block subsets whose stationary mass reaches ``floor`` (n <= 20)."""
    n = len(masses)
    if n > 20:
        raise TooManyBlocks(f"exact enumeration capped at 20 blocks, got {n}")
    out = []
    for r in range(1, n + 1):
        for I in itertools.combinations(range(n), r):
            if masses[list(I)].sum() >= floor:
                out.append(I)
    return out


def avg_hit_time(
    kernel: StochasticKernel,
    pi: StationaryDistribution,
    partition: Partition,
    alpha: float,
    mode: str = "exact",
    sample_budget: int = 64,
    seed: int = 0,
) -> AvgHitResult:
    """Worst expected hitting time over heavy block unions.

    For every subset I of blocks with stationary mass at least ``alpha / 2``,
    the worst-start expected hitting time of the union is computed exactly;
    the result is the max over subsets.  ``mode='sampled'`` draws random
    subsets instead and returns a flagged lower bound.

    Raises
    ------
    TooManyBlocks
        In exact mode with more than 20 blocks.
    """
    if not (0.0 < alpha):
        raise ValueError("alpha must be positive")
    masses = partition.masses(pi)
    floor = alpha / 2.0
    n = partition.n_blocks
    if mode == "exact":
        subsets = qualifying_subsets(masses, floor)
        lower_bound_only = False
    elif mode == "sampled":
        gen = rngmod.stream(seed, 0)
        seen = set()
        for _ in range(sample_budget):
            mask = gen.random(n) < gen.uniform(0.2, 0.9)
            I = tuple(np.nonzero(mask)[0].tolist())
            if I and masses[list(I)].sum() >= floor:
                seen.add(I)
        if masses.sum() >= floor:
            seen.add(tuple(range(n)))
        subsets = sorted(seen)
        lower_bound_only = True
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if not subsets:
        return AvgHitResult(None, alpha, mode, 0, no_qualifying_set=True)
    best = -1.0
    arg = None
    for I in subsets:
        states = np.concatenate([partition.members(i) for i in I])
        worst = hitting_analysis(kernel, states).worst_expected()
        if worst > best:
            best, arg = worst, I
    return AvgHitResult(
        value=best,
        alpha=alpha,
        mode=mode,
        n_qualifying=len(subsets),
        lower_bound_only=lower_bound_only,
        argmax_subset=arg,
    )
