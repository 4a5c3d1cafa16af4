"""Finite reversible Markov kernels and their exact analysis.

Everything downstream consumes :class:`StochasticKernel`.  The functions in
this module compute stationary measures, detailed-balance residuals, total
variation mixing profiles, relaxation times and hitting-time tables, all by
exact linear algebra at desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
import scipy.linalg
from scipy.sparse import csgraph, csr_matrix

from .config import DEFAULT_TOLERANCES, MAX_DENSE_STATES, MAX_DIRECT_SOLVE_STATES, Tolerances
from .errors import (
    DimensionMismatch,
    InvalidAlpha,
    NotReversible,
    ReducibleKernel,
    SingularSystem,
    UnreachableTarget,
)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class StochasticKernel:
    """A finite row-stochastic transition matrix with optional state labels.

    Parameters
    ----------
    rows : (n, n) array_like
        Transition probabilities; every row must sum to 1 within the
        row-sum tolerance and all entries must be nonnegative.
    labels : sequence of str, optional
        Per-state identifiers, purely informational.
    """

    rows: np.ndarray
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim != 2 or rows.shape[0] != rows.shape[1]:
            raise DimensionMismatch(f"transition matrix must be square, got {rows.shape}")
        n = rows.shape[0]
        if n < 1:
            raise DimensionMismatch("kernel needs at least one state")
        if n > MAX_DENSE_STATES:
            raise DimensionMismatch(f"dense kernels capped at {MAX_DENSE_STATES} states")
        tol = DEFAULT_TOLERANCES
        if rows.min(initial=0.0) < -1e-15:
            raise ValueError(f"negative transition probability {rows.min()}")
        err = np.abs(rows.sum(axis=1) - 1.0).max()
        if err > tol.row_sum:
            raise ValueError(f"row sums deviate from 1 by {err:.3e} > {tol.row_sum:.0e}")
        object.__setattr__(self, "rows", _frozen(np.clip(rows, 0.0, None)))
        if self.labels is not None:
            labels = tuple(str(s) for s in self.labels)
            if len(labels) != n:
                raise DimensionMismatch("label count must match state count")
            object.__setattr__(self, "labels", labels)

    @property
    def n_states(self) -> int:
        return self.rows.shape[0]

    def support(self) -> np.ndarray:
        """Boolean adjacency of the support digraph (diagonal included)."""
        return self.rows > 0.0

    def is_irreducible(self) -> bool:
        n = self.n_states
        if n == 1:
            return True
        graph = csr_matrix(self.support())
        ncomp, _ = csgraph.connected_components(graph, directed=True, connection="strong")
        return ncomp == 1

    def min_diagonal(self) -> float:
        return float(np.diag(self.rows).min())


@dataclass(frozen=True)
class StationaryDistribution:
    """Probability vector fixed by a kernel, normalized to sum 1."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1:
            raise DimensionMismatch("stationary weights must be a vector")
        if w.min(initial=0.0) < -1e-15:
            raise ValueError("stationary weights must be nonnegative")
        s = w.sum()
        if abs(s - 1.0) > 1e-9:
            raise ValueError(f"stationary weights sum to {s}, expected 1")
        object.__setattr__(self, "weights", _frozen(np.clip(w, 0.0, None) / s))

    @property
    def n_states(self) -> int:
        return self.weights.shape[0]

    def mass(self, states) -> float:
        return float(self.weights[np.asarray(states, dtype=int)].sum())


class ReversibilityReport(NamedTuple):
    is_reversible: bool
    residual: float


@dataclass(frozen=True)
class MixingProfile:
    """Worst-start total variation distance to stationarity per step.

    ``distances[t]`` is ``max_x || K^t(x, .) - pi ||_TV`` for ``t = 0 .. horizon``
    (truncated early once every requested epsilon threshold has been crossed,
    unless a full sweep was forced).  ``mixing_time`` is the least ``t >= 1``
    with distance below 1/4, or None with ``horizon_exceeded`` set.
    """

    distances: np.ndarray
    epsilon_times: dict[float, int | None]
    mixing_time: int | None
    horizon: int
    horizon_exceeded: bool = False
    lower_bound_only: bool = False

    def tv_at(self, t: int) -> float:
        t = min(t, len(self.distances) - 1)
        return float(self.distances[t])


@dataclass(frozen=True)
class HittingTimeTable:
    """Expected hitting times and exact tail probabilities for a target set.

    ``expected[x]`` solves the harmonic system ``h = 1 + K h`` off the target
    with ``h = 0`` on it.  ``tail[t, x] = P_x[tau > t]`` for ``t = 0 .. horizon``
    where ``tau`` is the first time the chain (started at x, time 0 included)
    sits inside the target.
    """

    target: tuple[int, ...]
    expected: np.ndarray
    tail: np.ndarray | None = None
    residual: float = 0.0

    def worst_expected(self) -> float:
        return float(self.expected.max())


def stationary_distribution(
    kernel: StochasticKernel, tol: Tolerances = DEFAULT_TOLERANCES
) -> StationaryDistribution:
    """Compute the stationary distribution of an irreducible kernel.

    A direct solve of ``(K^T - I) pi = 0`` with a normalization row is used up
    to a few thousand states; beyond that, power iteration to 1e-12.

    Raises
    ------
    ReducibleKernel
        If the support digraph is not strongly connected.
    """
    if not kernel.is_irreducible():
        raise ReducibleKernel("kernel support digraph is not strongly connected")
    K = kernel.rows
    n = kernel.n_states
    if n == 1:
        return StationaryDistribution(np.ones(1))
    if n <= MAX_DIRECT_SOLVE_STATES:
        A = K.T - np.eye(n)
        A[-1, :] = 1.0
        b = np.zeros(n)
        b[-1] = 1.0
        try:
            pi = scipy.linalg.solve(A, b)
        except scipy.linalg.LinAlgError as exc:  # pragma: no cover - irreducible => regular
            raise SingularSystem(str(exc)) from exc
    else:
        pi = np.full(n, 1.0 / n)
        for _ in range(1_000_000):
            nxt = pi @ K
            if np.abs(nxt - pi).sum() < 1e-12:
                pi = nxt
                break
            pi = nxt
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    residual = float(np.abs(pi @ K - pi).sum())
    if residual > tol.stationary_residual:
        raise SingularSystem(f"stationary residual {residual:.3e} > {tol.stationary_residual:.0e}")
    return StationaryDistribution(pi)


def check_reversible(
    kernel: StochasticKernel,
    pi: StationaryDistribution,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> ReversibilityReport:
    """Detailed-balance check; returns (is_reversible, max residual)."""
    if pi.n_states != kernel.n_states:
        raise DimensionMismatch("pi length must equal the kernel's state count")
    flux = pi.weights[:, None] * kernel.rows
    residual = float(np.abs(flux - flux.T).max())
    return ReversibilityReport(residual <= tol.detailed_balance, residual)


def lazify(kernel: StochasticKernel, alpha: float) -> StochasticKernel:
    """Return ``alpha * K + (1 - alpha) * Id`` for ``alpha`` in (0, 1].

    Preserves the stationary distribution and reversibility; the output
    diagonal is at least ``1 - alpha``.
    """
    if not (0.0 < alpha <= 1.0):
        raise InvalidAlpha(f"alpha must lie in (0, 1], got {alpha}")
    if alpha == 1.0:
        return kernel
    rows = alpha * kernel.rows + (1.0 - alpha) * np.eye(kernel.n_states)
    return StochasticKernel(rows, kernel.labels)


def time_reversal(kernel: StochasticKernel, pi: StationaryDistribution) -> StochasticKernel:
    """Time-reversed kernel ``K*(x,y) = pi(y) K(y,x) / pi(x)``."""
    if pi.n_states != kernel.n_states:
        raise DimensionMismatch("pi length must equal the kernel's state count")
    w = pi.weights
    rows = (kernel.rows.T * w[None, :]) / w[:, None]
    rows /= rows.sum(axis=1, keepdims=True)
    return StochasticKernel(rows, kernel.labels)


def mixing_profile(
    kernel: StochasticKernel,
    pi: StationaryDistribution,
    horizon: int,
    epsilons: Sequence[float] = (0.25, 0.1, 0.05, 0.01),
    start_states: Sequence[int] | None = None,
    full: bool = False,
) -> MixingProfile:
    """Exact TV mixing profile over all point-mass starts.

    Parameters
    ----------
    horizon : int
        Maximum number of steps to iterate.
    epsilons : sequence of float
        Thresholds for which crossing times are reported.
    start_states : sequence of int, optional
        Restrict the max over starts to this list; the result is then only
        a lower bound on the true profile and is flagged as such.
    full : bool
        Iterate all the way to the horizon even after every threshold is met.

    Raises
    ------
    ReducibleKernel
        If the kernel is not irreducible.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if not kernel.is_irreducible():
        raise ReducibleKernel("mixing profile needs an irreducible kernel")
    if pi.n_states != kernel.n_states:
        raise DimensionMismatch("pi length must equal the kernel's state count")
    K = kernel.rows
    n = kernel.n_states
    lower_bound_only = start_states is not None
    if start_states is None:
        P = np.eye(n)
    else:
        idx = np.asarray(start_states, dtype=int)
        P = np.eye(n)[idx]
    w = pi.weights[None, :]
    distances = [float(0.5 * np.abs(P - w).sum(axis=1).max())]
    eps_sorted = sorted(set(epsilons))
    eps_times: dict[float, int | None] = {e: None for e in eps_sorted}
    smallest = min(eps_sorted) if eps_sorted else 0.25
    target_eps = min(smallest, 0.25)
    for t in range(1, horizon + 1):
        P = P @ K
        d = float(0.5 * np.abs(P - w).sum(axis=1).max())
        distances.append(d)
        for e in eps_sorted:
            if eps_times[e] is None and d < e:
                eps_times[e] = t
        if not full and d < target_eps:
            break
    dist = np.asarray(distances)
    mix = next((t for t in range(1, len(dist)) if dist[t] < 0.25), None)
    return MixingProfile(
        distances=_frozen(dist),
        epsilon_times=eps_times,
        mixing_time=mix,
        horizon=horizon,
        horizon_exceeded=mix is None,
        lower_bound_only=lower_bound_only,
    )


def relaxation_time(
    kernel: StochasticKernel,
    pi: StationaryDistribution,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> float:
    """Reciprocal spectral gap ``1 / (1 - lambda_2)`` of a reversible kernel.

    The kernel is symmetrized as ``D^{1/2} K D^{-1/2}`` with ``D = diag(pi)``,
    which is symmetric exactly when detailed balance holds.

    Raises
    ------
    NotReversible
        If detailed balance fails beyond tolerance, making the
        symmetrization invalid.
    """
    ok, residual = check_reversible(kernel, pi, tol)
    if not ok:
        raise NotReversible(f"detailed-balance residual {residual:.3e}")
    d = np.sqrt(pi.weights)
    S = (kernel.rows * d[:, None]) / d[None, :]
    S = 0.5 * (S + S.T)
    eigs = scipy.linalg.eigvalsh(S)
    if kernel.n_states == 1:
        return 1.0
    lam2 = float(eigs[-2])
    gap = 1.0 - lam2
    if gap <= tol.eigen:
        return float("inf")
    return 1.0 / gap


def _reachable_from_all(kernel: StochasticKernel, target: np.ndarray) -> bool:
    # BFS on the reversed support graph starting from the target set.
    adj = kernel.support()
    n = kernel.n_states
    seen = np.zeros(n, dtype=bool)
    seen[target] = True
    frontier = list(target)
    while frontier:
        nxt = []
        for y in frontier:
            preds = np.nonzero(adj[:, y] & ~seen)[0]
            seen[preds] = True
            nxt.extend(preds.tolist())
        frontier = nxt
    return bool(seen.all())


def hitting_analysis(
    kernel: StochasticKernel,
    target: Sequence[int],
    horizon: int = 0,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> HittingTimeTable:
    """Expected hitting times of a state set, plus exact tail probabilities.

    The expectations solve ``(I - K_BB) h = 1`` on the complement B of the
    target; the tails are an exact dynamic program on the substochastic
    restriction of K to B.  Tail submultiplicativity
    ``max_x P_x[tau > k t] <= (max_x P_x[tau > t])^k`` is asserted internally.

    Raises
    ------
    UnreachableTarget
        If some state cannot reach the target.
    """
    A = np.unique(np.asarray(target, dtype=int))
    n = kernel.n_states
    if A.size == 0:
        raise ValueError("target must be nonempty")
    if A.min() < 0 or A.max() >= n:
        raise DimensionMismatch("target indices out of range")
    if not _reachable_from_all(kernel, A):
        raise UnreachableTarget("target not reachable from every state")
    B = np.setdiff1d(np.arange(n), A)
    expected = np.zeros(n)
    residual = 0.0
    if B.size:
        KBB = kernel.rows[np.ix_(B, B)]
        try:
            h = scipy.linalg.solve(np.eye(B.size) - KBB, np.ones(B.size))
        except scipy.linalg.LinAlgError as exc:  # pragma: no cover
            raise SingularSystem(str(exc)) from exc
        expected[B] = h
        residual = float(np.abs((np.eye(B.size) - KBB) @ h - 1.0).max())
        if residual > tol.linear_solve:
            raise SingularSystem(f"hitting solve residual {residual:.3e}")
    tail = None
    if horizon > 0:
        tails = np.zeros((horizon + 1, n))
        u = np.zeros(n)
        u[B] = 1.0
        tails[0] = u
        KB = kernel.rows.copy()
        KB[:, A] = 0.0  # paths surviving t steps never enter the target
        for t in range(1, horizon + 1):
            u = KB @ u
            u[A] = 0.0
            tails[t] = u
        tail = tails
        _assert_subgeometric(tails)
    return HittingTimeTable(
        target=tuple(int(a) for a in A), expected=_frozen(expected), tail=tail, residual=residual
    )


def _assert_subgeometric(tails: np.ndarray, max_k: int = 4) -> None:
    # max_x P[tau > k t] <= (max_x P[tau > t])^k, up to float round-off.
    worst = tails.max(axis=1)
    T = len(worst) - 1
    for t in range(1, T + 1):
        for k in range(2, max_k + 1):
            if k * t > T:
                break
            if worst[k * t] > worst[t] ** k + 1e-12:
                raise AssertionError(
                    f"hitting tail submultiplicativity violated at t={t}, k={k}: "
                    f"{worst[k * t]:.3e} > {worst[t] ** k:.3e}"
                )


def kernel_hash(kernel: StochasticKernel) -> str:
    """Stable hex digest of the transition matrix (for report provenance)."""
    import hashlib

    h = hashlib.sha256()
    h.update(np.ascontiguousarray(kernel.rows).tobytes())
    h.update(str(kernel.n_states).encode())
    return h.hexdigest()[:16]
