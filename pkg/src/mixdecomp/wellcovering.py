"""Well-covering times: oracle, certified bounds, comparisons, bootstrap.

The well-covering time of a kernel Q on block indices is the least horizon
T beyond which every plausible pair of rescaled occupation counts kappa and
transition counts N (plausible = satisfying concentration-style interval
constraints with constant B) puts every block's occupation above its
threshold ``t_i / T``.  Plausibility constraints, for all ordered pairs
(i, j) including the diagonal:

    |N(i,j) - kappa(i) Q(i,j)| <= B sqrt(kappa(i)) / sqrt(T)
    |N(i,j) - kappa(j) Q(j,i)| <= B sqrt(kappa(i)) / sqrt(T)
    |sum_j N(i,j) - kappa(i)| <= 1/T,  |sum_i N(i,j) - kappa(j)| <= 1/T

with kappa in the simplex and N summing to 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.optimize

from .bounds import BoundResult, PeresSousiConstants
from .decomposition import Partition, block_mixing_times, projected_kernel
from .errors import (
    InvalidComparison,
    NoFiniteT,
    NoFixedPoint,
    NotTreeWalk,
    TooManyBlocks,
)
from .kernel import StationaryDistribution, StochasticKernel, stationary_distribution
from .simulate import RowSampler, wilson_interval
from . import rng as rngmod


@dataclass(frozen=True)
class WellCoveringQuery:
    """Kernel on blocks, per-block occupation thresholds, and constant B."""

    q: StochasticKernel
    thresholds: np.ndarray
    B: float

    def __post_init__(self):
        t = np.asarray(self.thresholds, dtype=float)
        if t.ndim != 1 or t.shape[0] != self.q.n_states:
            raise ValueError("one threshold per block required")
        if (t < 0).any() or self.B <= 0:
            raise ValueError("thresholds must be >= 0 and B > 0")
        t = t.copy()
        t.setflags(write=False)
        object.__setattr__(self, "thresholds", t)

    @property
    def n(self) -> int:
        return self.q.n_states


@dataclass(frozen=True)
class OracleOutcome:
    covered: bool
    witnesses: tuple
    grid_tolerance: float
    T: int


@dataclass(frozen=True)
class WellCoveringCertificate:
    """A certified upper bound on a well-covering time with its derivation.

    ``provenance`` records every comparison step applied after the base
    method, as human-readable multiplicative factors.
    """

    value: float
    method: str  # oracle | tree | propagation | comparison
    thresholds: tuple
    B: float
    kernel: StochasticKernel | None = None
    provenance: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "method": self.method,
            "thresholds": list(self.thresholds),
            "B": self.B,
            "provenance": list(self.provenance),
        }


# ---------------------------------------------------------------------------
# Feasibility oracle (n <= 3)
# ---------------------------------------------------------------------------


def _kappa_grid(n: int, resolution: int) -> np.ndarray:
    if n == 1:
        return np.array([[1.0]])
    if n == 2:
        k = np.arange(resolution + 1) / resolution
        return np.stack([k, 1.0 - k], axis=1)
    if n == 3:
        pts = []
        for a in range(resolution + 1):
            for b in range(resolution + 1 - a):
                pts.append((a / resolution, b / resolution, (resolution - a - b) / resolution))
        return np.asarray(pts)
    raise TooManyBlocks("feasibility oracle supports n <= 3")


def _n_feasible(kappa: np.ndarray, Q: np.ndarray, B: float, T: float) -> bool:
    """Is there an N matrix compatible with kappa at horizon T?"""
    n = kappa.size
    r = B * np.sqrt(kappa) / math.sqrt(T)  # radius indexed by the first block
    a = kappa[:, None] * Q
    b = kappa[None, :] * Q.T
    lo = np.maximum(np.maximum(a, b) - r[:, None], 0.0)
    hi = np.minimum(np.minimum(a, b) + r[:, None], 1.0)
    if (lo > hi + 1e-15).any():
        return False
    slack = 1.0 / T
    row_lo, row_hi = kappa - slack, kappa + slack
    if (lo.sum(axis=1) > row_hi + 1e-15).any() or (hi.sum(axis=1) < row_lo - 1e-15).any():
        return False
    if (lo.sum(axis=0) > row_hi + 1e-15).any() or (hi.sum(axis=0) < row_lo - 1e-15).any():
        return False
    if lo.sum() > 1.0 + 1e-15 or hi.sum() < 1.0 - 1e-15:
        return False
    # Interval transportation feasibility; small LP decides exactly.
    nn = n * n
    A_ub = np.zeros((4 * n, nn))
    b_ub = np.zeros(4 * n)
    for i in range(n):
        row = np.zeros((n, n))
        row[i, :] = 1.0
        A_ub[2 * i] = row.ravel()
        b_ub[2 * i] = row_hi[i]
        A_ub[2 * i + 1] = -row.ravel()
        b_ub[2 * i + 1] = -row_lo[i]
        col = np.zeros((n, n))
        col[:, i] = 1.0
        A_ub[2 * n + 2 * i] = col.ravel()
        b_ub[2 * n + 2 * i] = row_hi[i]
        A_ub[2 * n + 2 * i + 1] = -col.ravel()
        b_ub[2 * n + 2 * i + 1] = -row_lo[i]
    res = scipy.optimize.linprog(
        c=np.zeros(nn),
        A_ub=A_ub,
        b_ub=b_ub,
        A_eq=np.ones((1, nn)),
        b_eq=np.array([1.0]),
        bounds=list(zip(lo.ravel(), hi.ravel())),
        method="highs",
    )
    return res.status == 0


def feasibility_oracle(
    query: WellCoveringQuery, T: int, grid_resolution: int = 64, max_witnesses: int = 4
) -> OracleOutcome:
    """Search a discretized simplex for covering violations at horizon T.

    A violation is a plausible (kappa, N) pair with some block occupation at
    or below its threshold share ``t_i / T``.  Coverage is certified only up
    to the grid tolerance ``2 / grid_resolution``, which is reported.
    """
    if query.n > 3:
        raise TooManyBlocks("feasibility oracle supports n <= 3")
    if grid_resolution < 64:
        raise ValueError("grid_resolution must be >= 64")
    Q = query.q.rows
    shares = query.thresholds / T
    witnesses = []
    for kappa in _kappa_grid(query.n, grid_resolution):
        if not (kappa <= shares + 1e-15).any():
            continue
        if _n_feasible(kappa, Q, query.B, T):
            witnesses.append(tuple(np.round(kappa, 9)))
            if len(witnesses) >= max_witnesses:
                break
    return OracleOutcome(
        covered=not witnesses,
        witnesses=tuple(witnesses),
        grid_tolerance=2.0 / grid_resolution,
        T=T,
    )


def oracle_wc_time(
    query: WellCoveringQuery, grid_resolution: int = 64, T_horizon: int = 2**40
) -> WellCoveringCertificate:
    """Least horizon the oracle certifies as covered (integer bisection)."""
    lo_seed = max(2, int(query.thresholds.max()) if query.thresholds.max() >= 1 else 2)
    T = lo_seed
    while T <= T_horizon and not feasibility_oracle(query, T, grid_resolution).covered:
        T *= 2
    if T > T_horizon:
        raise NoFiniteT(f"oracle found no covered horizon up to {T_horizon}")
    lo, hi = T // 2, T
    while lo + 1 < hi:
        mid = (lo + hi) // 2
        if feasibility_oracle(query, mid, grid_resolution).covered:
            hi = mid
        else:
            lo = mid
    return WellCoveringCertificate(
        value=float(hi),
        method="oracle",
        thresholds=tuple(query.thresholds.tolist()),
        B=query.B,
        kernel=query.q,
        provenance=(f"oracle(grid={grid_resolution})",),
    )


# ---------------------------------------------------------------------------
# Tree walks and the generalized propagation bound
# ---------------------------------------------------------------------------


def tree_bound(q: StochasticKernel, phi: float, B: float) -> WellCoveringCertificate:
    """Closed-form covering bound for the canonical lazy walk on a tree.

    The kernel must have all off-diagonal entries equal to ``1 / (2 Delta)``
    on the edges of a tree with maximum degree at most Delta.  The certified
    value is ``n * max(1000 Delta^2 B^2 D^2, 4 phi)`` with D the diameter.
    """
    K = q.rows
    n = q.n_states
    off = K.copy()
    np.fill_diagonal(off, 0.0)
    vals = off[off > 0]
    if n > 1:
        if vals.size == 0:
            raise NotTreeWalk("no off-diagonal transitions")
        v = vals[0]
        if not np.allclose(vals, v, atol=1e-12):
            raise NotTreeWalk("off-diagonal rates are not all equal")
        if not np.allclose(off, off.T, atol=1e-12):
            raise NotTreeWalk("edge structure is not symmetric")
        delta = 1.0 / (2.0 * v)
        if abs(delta - round(delta)) > 1e-9:
            raise NotTreeWalk(f"rate {v} is not 1/(2 Delta) for integer Delta")
        delta = int(round(delta))
        adj = off > 0
        degrees = adj.sum(axis=1)
        if degrees.max() > delta:
            raise NotTreeWalk("maximum degree exceeds Delta implied by the rate")
        n_edges = int(adj.sum()) // 2
        if n_edges != n - 1 or not _connected(adj):
            raise NotTreeWalk("support graph is not a tree")
        D = _graph_diameter(adj)
    else:
        delta, D = 1, 0
    value = n * max(1000.0 * delta**2 * B**2 * D**2, 4.0 * phi)
    return WellCoveringCertificate(
        value=float(value),
        method="tree",
        thresholds=tuple([phi] * n),
        B=B,
        kernel=q,
        provenance=(f"tree(n={n},Delta={delta},D={D})",),
    )


def _connected(adj: np.ndarray) -> bool:
    n = adj.shape[0]
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    stack = [0]
    while stack:
        u = stack.pop()
        for v in np.nonzero(adj[u] & ~seen)[0]:
            seen[v] = True
            stack.append(v)
    return bool(seen.all())


def _graph_diameter(adj: np.ndarray) -> int:
    n = adj.shape[0]
    worst = 0
    for s in range(n):
        dist = np.full(n, -1)
        dist[s] = 0
        queue = [s]
        for u in queue:
            for v in np.nonzero(adj[u])[0]:
                if dist[v] < 0:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        worst = max(worst, int(dist.max()))
    return worst


def propagation_bound(
    query: WellCoveringQuery,
    T_horizon: int = 2**60,
    mu: StationaryDistribution | None = None,
) -> WellCoveringCertificate:
    """Covering bound by propagating occupation lower bounds along edges.

    Some block holds occupation share at least 1/n; from any such root the
    plausibility constraints force, for each support edge (l, j),

        kappa(j) >= (mu(j)/mu(l)) kappa(l) (1 - c_lj B / (sqrt(kappa(l) T)))

    with ``c_lj = 4 / Q(l, j)`` (a weakening of the interval constraints, so
    every step is sound for reversible Q).  The returned value is the least
    integer horizon at which the propagated bounds from every possible root
    clear all thresholds.  This extends the tree induction to arbitrary
    irreducible kernels and is labeled as such in the provenance.
    """
    q = query.q
    n = query.n
    if not q.is_irreducible():
        raise InvalidComparison("propagation requires an irreducible kernel")
    if mu is None:
        mu = stationary_distribution(q)
    w = mu.weights
    Q = q.rows
    B = query.B
    edges = [(l, j) for l in range(n) for j in range(n) if l != j and Q[l, j] > 0]

    def lower_bounds(root: int, T: int) -> np.ndarray:
        lb = np.zeros(n)
        lb[root] = 1.0 / n
        for _ in range(n):
            improved = False
            for l, j in edges:
                if lb[l] <= 0:
                    continue
                shrink = 1.0 - (4.0 / Q[l, j]) * B / (math.sqrt(lb[l]) * math.sqrt(T))
                cand = (w[j] / w[l]) * lb[l] * max(0.0, shrink)
                if cand > lb[j] + 1e-18:
                    lb[j] = cand
                    improved = True
            if not improved:
                break
        return lb

    def covered(T: int) -> bool:
        shares = query.thresholds / T
        for root in range(n):
            lb = lower_bounds(root, T)
            if not (lb > shares).all():
                return False
        return True

    T = 2
    while T <= T_horizon and not covered(T):
        T *= 2
    if T > T_horizon:
        raise NoFiniteT(f"propagation found no covering horizon up to {T_horizon}")
    lo, hi = T // 2, T
    while lo + 1 < hi:
        mid = (lo + hi) // 2
        if covered(mid):
            hi = mid
        else:
            lo = mid
    return WellCoveringCertificate(
        value=float(hi),
        method="propagation",
        thresholds=tuple(query.thresholds.tolist()),
        B=query.B,
        kernel=q,
        provenance=("propagation(extension beyond trees)",),
    )


# ---------------------------------------------------------------------------
# Comparison steps
# ---------------------------------------------------------------------------


def compare_wc(
    cert: WellCoveringCertificate,
    transform: str,
    alpha: float | None = None,
    target: StochasticKernel | None = None,
    target_mu: StationaryDistribution | None = None,
) -> WellCoveringCertificate:
    """Derive a covering certificate for a transformed problem.

    transform:
      * ``"monotone"``: ``target`` dominates the certified kernel entrywise
        off the diagonal and shares its stationary measure; factor 9.
      * ``"lazify"``: the certified kernel is half-lazy; the new kernel is
        its alpha-mixture with the identity; factor ``alpha**-2``.
      * ``"scale_thresholds"``: thresholds multiplied by ``alpha > 1``;
        factor alpha.
      * ``"scale_B"``: B multiplied by ``alpha > 1``; factor ``alpha**2``.
    """
    if transform == "monotone":
        if target is None or cert.kernel is None:
            raise InvalidComparison("monotone comparison needs both kernels")
        base = cert.kernel
        if target.n_states != base.n_states:
            raise InvalidComparison("kernels must share the block space")
        off_old = base.rows.copy()
        off_new = target.rows.copy()
        np.fill_diagonal(off_old, 0.0)
        np.fill_diagonal(off_new, 0.0)
        if (off_new < off_old - 1e-12).any():
            raise InvalidComparison("target kernel does not dominate off-diagonal entries")
        mu_old = stationary_distribution(base).weights
        mu_new = (target_mu or stationary_distribution(target)).weights
        if np.abs(mu_old - mu_new).max() > 1e-8:
            raise InvalidComparison("stationary measures differ")
        return WellCoveringCertificate(
            value=9.0 * cert.value,
            method="comparison",
            thresholds=cert.thresholds,
            B=cert.B,
            kernel=target,
            provenance=cert.provenance + ("monotone: x9",),
        )
    if transform == "lazify":
        if alpha is None or not (0 < alpha < 1):
            raise InvalidComparison("lazify needs alpha in (0, 1)")
        if cert.kernel is None or cert.kernel.min_diagonal() < 0.5 - 1e-12:
            raise InvalidComparison("lazify comparison needs a half-lazy base kernel")
        lazy_rows = alpha * cert.kernel.rows + (1 - alpha) * np.eye(cert.kernel.n_states)
        return WellCoveringCertificate(
            value=cert.value / alpha**2,
            method="comparison",
            thresholds=cert.thresholds,
            B=cert.B,
            kernel=StochasticKernel(lazy_rows),
            provenance=cert.provenance + (f"lazify(alpha={alpha}): x{alpha**-2:g}",),
        )
    if transform == "scale_thresholds":
        if alpha is None or alpha <= 1:
            raise InvalidComparison("threshold scaling needs alpha > 1")
        return WellCoveringCertificate(
            value=alpha * cert.value,
            method="comparison",
            thresholds=tuple(alpha * t for t in cert.thresholds),
            B=cert.B,
            kernel=cert.kernel,
            provenance=cert.provenance + (f"scale_thresholds(alpha={alpha}): x{alpha:g}",),
        )
    if transform == "scale_B":
        if alpha is None or alpha <= 1:
            raise InvalidComparison("B scaling needs alpha > 1")
        return WellCoveringCertificate(
            value=alpha**2 * cert.value,
            method="comparison",
            thresholds=cert.thresholds,
            B=alpha * cert.B,
            kernel=cert.kernel,
            provenance=cert.provenance + (f"scale_B(alpha={alpha}): x{alpha**2:g}",),
        )
    raise InvalidComparison(f"unknown transform {transform!r}")


# ---------------------------------------------------------------------------
# Bootstrap mixing bound
# ---------------------------------------------------------------------------


def bootstrap_mixing_bound(
    kernel: StochasticKernel,
    pi: StationaryDistribution,
    partition: Partition,
    I: Sequence[int],
    alpha: float,
    beta: float,
    wc_provider: Callable[[np.ndarray, float], float],
    constants: PeresSousiConstants,
    phi: Sequence[float] | None = None,
    phi_horizon: int = 2**20,
    T_horizon: int = 2**60,
) -> BoundResult:
    """Mixing bound through a certified well-covering horizon.

    ``wc_provider(thresholds, B)`` must return a certified covering value for
    the projected kernel.  The search finds the least integer T exceeding the
    certified value at thresholds ``8 c' phi_i`` (phi zeroed off I) and
    concentration constant ``B(T) = sqrt(8 phi_max log(64 n^2 T))``; the
    mixing time is then at most ``(4/3) c_alpha T``.  The B term grows only
    logarithmically in T, so the crossing exists and doubling finds it.
    """
    I = [int(i) for i in I]
    masses = partition.masses(pi)
    cover = float(masses[I].sum())
    if not (cover >= beta > 0.5):
        raise ValueError(f"need mass(I) >= beta > 1/2, got mass {cover:.4f}, beta {beta}")
    if not (0 < alpha < 0.5 and 1 - alpha < beta < 1):
        raise ValueError("need 0 < alpha < 1/2 and 1 - alpha < beta < 1")
    n = partition.n_blocks
    if phi is None:
        phis, _, _ = block_mixing_times(kernel, pi, partition, phi_horizon)
        if any(p is None for p in phis):
            raise NoFixedPoint("a block mixing time exceeded its horizon")
        phi = [float(p) for p in phis]
    phi = np.asarray(phi, dtype=float)
    phi_max = float(phi.max())
    gamma = min(0.5, (alpha + beta - 1.0) / beta)
    cp = constants.c_alpha_prime
    thresholds = np.where(np.isin(np.arange(n), I), 8.0 * cp * phi, 0.0)

    def B_of(T: int) -> float:
        return math.sqrt(8.0 * phi_max * math.log(64.0 * n * n * T))

    def ok(T: int) -> bool:
        return T > wc_provider(thresholds, B_of(T))

    T = 2
    while T <= T_horizon and not ok(T):
        T *= 2
    if T > T_horizon:
        raise NoFixedPoint(f"no self-consistent horizon up to {T_horizon}")
    lo, hi = T // 2, T
    while lo + 1 < hi:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    value = (4.0 / 3.0) * constants.c_alpha * hi
    return BoundResult(
        name="bootstrap_well_covering",
        value=value,
        ingredients={
            "T": hi,
            "phi": phi.tolist(),
            "phi_max": phi_max,
            "I": I,
            "alpha": alpha,
            "beta": beta,
            "gamma": gamma,
            "B_at_T": B_of(hi),
            "c_alpha": constants.c_alpha,
            "c_alpha_prime": cp,
        },
        universal_constant_flag=not constants.calibrated,
    )


# ---------------------------------------------------------------------------
# Concentration audit of transition counts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AuditRow:
    orientation: str
    t: int
    c: float
    empirical: float
    wilson_hi: float
    bound: float
    reps: int

    def holds(self) -> bool:
        return self.wilson_hi <= self.bound or self.bound >= 1.0


def concentration_audit(
    kernel: StochasticKernel,
    pi: StationaryDistribution,
    partition: Partition,
    i: int,
    j: int,
    t_grid: Sequence[int],
    c_grid: Sequence[float],
    reps: int,
    seed: int,
    phi_max: float,
    start: int = 0,
) -> list[AuditRow]:
    """Empirical exceedance of transition-count concentration vs its bound.

    For each t, replicas run until block ``clock`` has been occupied t + 1
    times; the count of i -> j crossings per clock tick is compared to the
    projected rate, and the frequency of deviations above each c is tabled
    against ``4 exp(-c^2 (t+1) / (8 phi_max))``.  Both orientations (clocked
    by i against Kbar(i,j), clocked by j against Kbar(j,i)) are audited.
    """
    if reps < 1000:
        raise ValueError("need reps >= 1000 for a meaningful audit")
    proj = projected_kernel(kernel, pi, partition)
    rows: list[AuditRow] = []
    for orient, clock, target in (("ij", i, proj.rows[i, j]), ("ji", j, proj.rows[j, i])):
        for idx_t, t in enumerate(t_grid):
            stats = _transition_ratio_sample(
                kernel, partition, i, j, clock, int(t), reps, seed + 7 * idx_t, start
            )
            for c in c_grid:
                exceed = int((np.abs(stats - target) > c).sum())
                _, hi = wilson_interval(exceed, reps)
                bound = 4.0 * math.exp(-(c * c) * (t + 1) / (8.0 * phi_max))
                rows.append(
                    AuditRow(
                        orientation=orient,
                        t=int(t),
                        c=float(c),
                        empirical=exceed / reps,
                        wilson_hi=hi,
                        bound=bound,
                        reps=reps,
                    )
                )
    return rows


def _transition_ratio_sample(
    kernel: StochasticKernel,
    partition: Partition,
    i: int,
    j: int,
    clock_block: int,
    t: int,
    reps: int,
    seed: int,
    start: int,
) -> np.ndarray:
    """Per-replica ``N_ij(kappa_clock^{-1}(t)) / (t + 1)`` by simulation."""
    sampler = RowSampler(kernel)
    gen = rngmod.stream(seed, 1)
    in_i = partition.block_of == i
    in_j = partition.block_of == j
    in_clock = partition.block_of == clock_block
    state = np.full(reps, start, dtype=np.int64)
    visits = np.zeros(reps, dtype=np.int64)
    crossings = np.zeros(reps, dtype=np.int64)
    active = np.ones(reps, dtype=bool)
    # Safety cap: expected clock time is t / mass(clock); allow a wide margin.
    cap = 200 * (t + 1) * max(1, kernel.n_states)
    for _ in range(cap):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        prev = state[idx]
        nxt = sampler.step(prev, gen)
        state[idx] = nxt
        arrived_clock = in_clock[nxt]
        done_now = arrived_clock & (visits[idx] + 1 >= t)
        crossing = in_i[prev] & in_j[nxt]
        crossings[idx] += (crossing & ~done_now).astype(np.int64)
        visits[idx] += arrived_clock.astype(np.int64)
        active[idx[done_now]] = False
    if active.any():
        raise RuntimeError("transition audit exceeded its step cap")
    return crossings / (t + 1.0)
