"""Closed-form mixing-time bound evaluators and the hitting-time audit.

Universal constants relating hitting and mixing times are never guessed:
they default to 1 with a flag recording that every emitted value is "up to
a universal constant".  A calibration helper can pin them on a reference
chain instead.

Occupation-tail ingredients come in two flavors with explicit provenance:
exact dynamic programming over (state, counter) product chains, and Monte
Carlo with Wilson 99% upper confidence bounds.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import rng as rngmod
from .decomposition import Partition, escape_analysis, escape_tail_at, qualifying_subsets
from .errors import (
    ContractionTooWeak,
    DisconnectedGc,
    DriftViolated,
    EpsilonTooLarge,
    HypothesisUnverified,
    MTooSmall,
    NoFeasibleT,
    TooLarge,
    TooManyBlocks,
)
from .kernel import (
    StationaryDistribution,
    StochasticKernel,
    hitting_analysis,
    mixing_profile,
)
from .simulate import occupation_tail_table, simulate_states, wilson_interval


@dataclass(frozen=True)
class PeresSousiConstants:
    """Universal constants of the hitting-time / mixing-time equivalence.

    ``c_alpha`` multiplies upper bounds (mixing <= c_alpha * worst hitting),
    ``c_alpha_prime`` the reverse direction.  Uncalibrated values default to
    1 and poison every downstream bound with a universal-constant flag.
    """

    c_alpha: float = 1.0
    c_alpha_prime: float = 1.0
    calibrated: bool = False

    def __post_init__(self):
        if self.c_alpha <= 0 or self.c_alpha_prime <= 0:
            raise ValueError("constants must be positive")


@dataclass
class BoundResult:
    """Value of one bound evaluator plus everything needed to reproduce it."""

    name: str
    value: float
    ingredients: dict
    universal_constant_flag: bool
    feasible: bool = True
    notes: str = ""

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("bound values must be nonnegative")

    def scaled(self, factor: float) -> "BoundResult":
        out = BoundResult(
            self.name,
            self.value * factor,
            dict(self.ingredients, calibration_scale=factor),
            False,
            self.feasible,
            self.notes,
        )
        return out


# ---------------------------------------------------------------------------
# Occupation-tail providers
# ---------------------------------------------------------------------------


class ExactTailProvider:
    """Worst-start occupation tails by exact DP, one sweep per block.

    ``query(i, T, t)`` returns ``max_z P_z[kappa_i(T) < t]`` exactly for
    ``T <= T_max`` and ``t <= t_cap``.
    """

    provenance = "exact"

    def __init__(
        self,
        kernel: StochasticKernel,
        partition: Partition,
        T_max: int,
        t_cap: int,
        starts: Sequence[int] | None = None,
    ):
        self.kernel = kernel
        self.partition = partition
        self.T_max = int(T_max)
        self.t_cap = int(t_cap)
        self.starts = starts
        self._tables: dict[int, np.ndarray] = {}

    def max_t(self) -> int:
        return self.t_cap

    def query(self, i: int, T: int, t: int) -> float:
        if t <= 0:
            return 0.0
        if t > self.t_cap or T > self.T_max:
            return 1.0  # unknown, report the vacuous upper bound
        if t > T:
            return 1.0
        if i not in self._tables:
            self._tables[i] = occupation_tail_table(
                self.kernel, self.partition, i, self.T_max, self.t_cap, starts=self.starts
            )
        return float(self._tables[i][T - 1, t - 1])


class MCTailProvider:
    """Occupation tails from cached simulated paths, Wilson 99% upper bounds.

    Paths are simulated once from every start state (``reps_per_start``
    replicas each, independent streams); queries count per-path block
    occupations and return the largest per-start Wilson upper bound, which is
    a sound (conservative) ingredient for the bound searches.
    """

    def __init__(
        self,
        kernel: StochasticKernel,
        partition: Partition,
        T_max: int,
        reps_per_start: int,
        seed: int,
        starts: Sequence[int] | None = None,
    ):
        self.kernel = kernel
        self.partition = partition
        self.T_max = int(T_max)
        self.reps = int(reps_per_start)
        self.seed = seed
        if starts is None:
            starts = range(kernel.n_states)
        self.start_list = [int(s) for s in starts]
        self._labels: np.ndarray | None = None
        self._counts: dict[tuple[int, int], np.ndarray] = {}

    @property
    def provenance(self) -> str:
        return f"mc(reps={self.reps},seed={self.seed})"

    def max_t(self) -> int:
        return self.T_max

    def _ensure_paths(self):
        if self._labels is not None:
            return
        starts = np.repeat(np.asarray(self.start_list, dtype=np.int64), self.reps)
        paths = simulate_states(self.kernel, starts, self.T_max, self.seed)
        self._labels = self.partition.block_of[paths].astype(np.int16)

    def _kappa(self, i: int, T: int) -> np.ndarray:
        key = (i, T)
        if key not in self._counts:
            self._ensure_paths()
            self._counts[key] = (self._labels[:, 1 : T + 1] == i).sum(axis=1)
        return self._counts[key]

    def _max_wilson(self, hits: np.ndarray) -> float:
        per_start = hits.reshape(len(self.start_list), self.reps)
        worst = 0.0
        for row in per_start:
            _, hi = wilson_interval(int(row.sum()), self.reps)
            worst = max(worst, hi)
        return worst

    def query(self, i: int, T: int, t: float) -> float:
        if t <= 0:
            return 0.0
        if T > self.T_max:
            return 1.0
        hits = self._kappa(i, T) < t
        return self._max_wilson(hits)

    def query_joint(self, I: Sequence[int], T: int, t: float) -> float:
        if t <= 0:
            return 0.0
        if T > self.T_max:
            return 1.0
        hits = np.ones(len(self.start_list) * self.reps, dtype=bool)
        for i in I:
            hits &= self._kappa(int(i), T) < t
        return self._max_wilson(hits)


class MinMarginalJointTails:
    """Joint tails upper-bounded by the smallest per-block tail.

    ``P[all kappa_i < t] <= min_i P[kappa_i < t]`` holds pointwise, so any
    per-block provider lifts to a sound joint provider.
    """

    def __init__(self, per_block):
        self.per_block = per_block
        self.provenance = f"min-marginal({per_block.provenance})"

    def max_t(self) -> int:
        return self.per_block.max_t()

    def query_joint(self, I: Sequence[int], T: int, t: float) -> float:
        return min(self.per_block.query(int(i), T, t) for i in I)


# ---------------------------------------------------------------------------
# Horizon searches
# ---------------------------------------------------------------------------


def _t_grid(T: int, t_cap: int, points: int = 64) -> np.ndarray:
    hi = min(T - 1, t_cap)
    if hi < 1:
        return np.array([], dtype=int)
    grid = np.unique(np.round(np.geomspace(1, hi, num=min(points, hi))).astype(int))
    return grid


def _least_feasible_T(feasible: Callable[[int], bool], T_start: int, T_horizon: int) -> int:
    """Least integer T with feasible(T), by doubling then bisection."""
    T = max(2, T_start)
    while T <= T_horizon and not feasible(T):
        T *= 2
    if T > T_horizon:
        raise NoFeasibleT(f"no feasible horizon up to {T_horizon}")
    lo, hi = T // 2, T
    while lo + 1 < hi:
        mid = (lo + hi) // 2
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi


def bound_basic(
    phi: Sequence[float],
    tails,
    alpha: float,
    beta: float,
    I: Sequence[int],
    constants: PeresSousiConstants,
    block_masses: Sequence[float] | None = None,
    T_horizon: int = 2**26,
    t_points: int = 64,
) -> BoundResult:
    """Mixing bound from per-block occupation tails.

    Searches for the least horizon T admitting a time t < T at which every
    block in I has both a small hitting term ``phi_i / (c' t)`` and a small
    worst-start probability of under-occupation ``P[kappa_i(T) < t]``; the
    mixing time is then at most ``(4/3) c_alpha T``.

    ``tails`` must expose ``query(i, T, t)`` and ``max_t()``.
    """
    if not (0 < alpha < 0.5):
        raise ValueError("need 0 < alpha < 1/2")
    if not (1 - alpha < beta < 1):
        raise ValueError("need 1 - alpha < beta < 1")
    I = [int(i) for i in I]
    if block_masses is not None:
        mass = float(np.asarray(block_masses)[I].sum())
        if mass <= beta:
            raise ValueError(f"blocks I carry mass {mass:.4f} <= beta = {beta}")
    gamma = min(0.5, (alpha + beta - 1.0) / beta)
    cpg = constants.c_alpha_prime
    phi = np.asarray(phi, dtype=float)
    t_cap = tails.max_t()

    def feasible(T: int) -> bool:
        for t in _t_grid(T, t_cap, t_points)[::-1]:
            worst = 0.0
            for i in I:
                term = phi[i] / (cpg * t) + tails.query(i, T, t)
                worst = max(worst, term)
                if worst >= 0.25:
                    break
            if worst < 0.25:
                return True
        return False

    try:
        T_star = _least_feasible_T(feasible, 2, T_horizon)
        value = (4.0 / 3.0) * constants.c_alpha * T_star
        feasible_flag = True
        note = ""
    except NoFeasibleT as exc:
        T_star = None
        value = math.inf
        feasible_flag = False
        note = str(exc)
    return BoundResult(
        name="basic_occupation",
        value=value,
        ingredients={
            "T": T_star,
            "phi": phi.tolist(),
            "I": I,
            "alpha": alpha,
            "beta": beta,
            "gamma": gamma,
            "tail_provenance": tails.provenance,
            "c_alpha": constants.c_alpha,
            "c_alpha_prime": constants.c_alpha_prime,
        },
        universal_constant_flag=not constants.calibrated,
        feasible=feasible_flag,
        notes=note,
    )


def bound_basic2(
    phi: Sequence[float],
    block_masses: Sequence[float],
    joint_tails,
    alpha: float,
    constants: PeresSousiConstants,
    subset_mode: str = "exact",
    subset_budget: int = 32,
    seed: int = 0,
    T_horizon: int = 2**26,
    t_points: int = 64,
    max_exact_blocks: int = 12,
) -> BoundResult:
    """Mixing bound from joint occupation tails over heavy block subsets.

    Only the probability that *every* block of a heavy subset is
    under-occupied needs to be small, at the cost of a max over all subsets
    I with stationary mass at least alpha / 2 and an exponential hitting sum
    ``sum_i exp(-floor(c' t / (e phi_i)))``.

    ``joint_tails`` must expose ``query_joint(I, T, t)`` and ``max_t()``.
    In sampled mode only a seeded family of subsets is checked, which makes
    the reported value a lower-bound flavor of the exact search.
    """
    if not (0 < alpha < 0.5):
        raise ValueError("need 0 < alpha < 1/2")
    phi = np.asarray(phi, dtype=float)
    masses = np.asarray(block_masses, dtype=float)
    n = masses.size
    floor_mass = alpha / 2.0
    if subset_mode == "exact":
        if n > max_exact_blocks:
            raise TooManyBlocks(f"exact subset enumeration capped at {max_exact_blocks} blocks")
        family = qualifying_subsets(masses, floor_mass)
    elif subset_mode == "sampled":
        gen = rngmod.stream(seed, 0)
        fam = set()
        for _ in range(subset_budget * 4):
            if len(fam) >= subset_budget:
                break
            size = int(gen.integers(1, n + 1))
            I = tuple(sorted(gen.choice(n, size=size, replace=False).tolist()))
            if masses[list(I)].sum() >= floor_mass:
                fam.add(I)
        fam.add(tuple(range(n)))
        family = sorted(fam)
    else:
        raise ValueError(f"unknown subset_mode {subset_mode!r}")
    if not family:
        raise NoFeasibleT("no block subset reaches mass alpha / 2")
    cpo = constants.c_alpha_prime  # constant at level alpha / 2
    t_cap = joint_tails.max_t()

    def exp_sum(I, t: float) -> float:
        return float(sum(math.exp(-math.floor(cpo * t / (math.e * phi[i]))) for i in I))

    def feasible(T: int) -> bool:
        for t in _t_grid(T, t_cap, t_points)[::-1]:
            worst = 0.0
            for I in family:
                s = exp_sum(I, t)
                if s >= 0.25:
                    worst = 1.0
                    break
                worst = max(worst, s + joint_tails.query_joint(I, T, t))
                if worst >= 0.25:
                    break
            if worst < 0.25:
                return True
        return False

    try:
        T_star = _least_feasible_T(feasible, 2, T_horizon)
        value = (4.0 / 3.0) * constants.c_alpha * T_star
        ok = True
        note = ""
    except NoFeasibleT as exc:
        T_star, value, ok, note = None, math.inf, False, str(exc)
    return BoundResult(
        name="basic_joint_occupation",
        value=value,
        ingredients={
            "T": T_star,
            "alpha": alpha,
            "subset_mode": subset_mode,
            "n_subsets": len(family),
            "tail_provenance": joint_tails.provenance,
            "c_alpha": constants.c_alpha,
            "c_alpha_prime": constants.c_alpha_prime,
        },
        universal_constant_flag=not constants.calibrated,
        feasible=ok,
        notes=note,
    )


def bound_regular(
    epsilon: float,
    delta: float,
    phi_bar_hit: float,
    n: int,
    constants: PeresSousiConstants,
    envelope: float = 1.0,
    hypothesis_verified: bool = False,
) -> BoundResult:
    """Escape-regularity bound ``C / (epsilon delta) * phi_hit * n log n``.

    The hypothesis -- every state survives inside its block for
    ``epsilon * phi_max`` steps with probability at least delta -- must be
    verified upstream from escape tails; an unverified call warns.
    """
    if min(epsilon, delta, phi_bar_hit) <= 0 or n < 1:
        raise ValueError("inputs must be positive")
    if not hypothesis_verified:
        warnings.warn("escape-time hypothesis was not verified", HypothesisUnverified)
    value = envelope * (1.0 / (epsilon * delta)) * phi_bar_hit * n * math.log(max(n, 2))
    return BoundResult(
        name="regular_escape",
        value=value,
        ingredients={
            "epsilon": epsilon,
            "delta": delta,
            "phi_bar_hit": phi_bar_hit,
            "n": n,
            "envelope": envelope,
            "hypothesis_verified": hypothesis_verified,
        },
        universal_constant_flag=not constants.calibrated,
    )


@dataclass(frozen=True)
class GraphHitResult:
    edges: tuple[tuple[int, int], ...]
    diameter: float
    delta: float
    bound: BoundResult


def bound_graph_hit(
    kernel: StochasticKernel,
    partition: Partition,
    c: float,
    epsilon: float,
    phi_max: float,
    envelope: float = 1.0,
    constants: PeresSousiConstants | None = None,
) -> GraphHitResult:
    """Hitting-scale bound through the exit-probability digraph.

    Vertices are blocks; (i, j) is an edge when every state of block i exits
    into block j with probability at least c.  With D the directed diameter,
    ``phi_bar_hit <= epsilon phi_max D (c delta)^{-D}`` where delta comes
    from the exact escape-tail condition at threshold ``epsilon phi_max``.
    A disconnected digraph yields an infinite (vacuous) bound, reported
    rather than raised.
    """
    if not (0 < c <= 1):
        raise ValueError("need c in (0, 1]")
    nb = partition.n_blocks
    constants = constants or PeresSousiConstants()
    if nb == 1:
        bound = BoundResult(
            name="graph_hit",
            value=0.0,
            ingredients={"c": c, "epsilon": epsilon, "phi_max": phi_max, "delta": 1.0, "D": 0},
            universal_constant_flag=not constants.calibrated,
            notes="single block: nothing to hit",
        )
        return GraphHitResult((), 0.0, 1.0, bound)
    threshold = epsilon * phi_max
    worst_stay = 0.0
    edges = []
    for i in range(nb):
        stats = escape_analysis(kernel, partition, i, horizon=0)
        worst_stay = max(worst_stay, float(escape_tail_at(kernel, partition, i, threshold).max()))
        mins = stats.exit_block_distribution.min(axis=0)
        for j in range(nb):
            if j != i and mins[j] >= c:
                edges.append((i, j))
    delta = 1.0 - worst_stay
    diameter = _directed_diameter(nb, edges)
    if math.isinf(diameter):
        bound = BoundResult(
            name="graph_hit",
            value=math.inf,
            ingredients={"c": c, "epsilon": epsilon, "phi_max": phi_max, "delta": delta, "D": None},
            universal_constant_flag=not constants.calibrated,
            feasible=False,
            notes="exit graph disconnected at this c; bound vacuous",
        )
        return GraphHitResult(tuple(edges), diameter, delta, bound)
    if delta <= 0:
        raise ValueError(f"escape condition fails: delta = {delta:.3e} at threshold {threshold:.1f}")
    D = diameter
    value = envelope * epsilon * phi_max * D * (c * delta) ** (-D) if D > 0 else 0.0
    bound = BoundResult(
        name="graph_hit",
        value=value,
        ingredients={
            "c": c,
            "epsilon": epsilon,
            "phi_max": phi_max,
            "delta": delta,
            "D": D,
            "envelope": envelope,
        },
        universal_constant_flag=not constants.calibrated,
    )
    return GraphHitResult(tuple(edges), diameter, delta, bound)


def _directed_diameter(n: int, edges: Sequence[tuple[int, int]]) -> float:
    if n == 1:
        return 0.0
    adj = [[] for _ in range(n)]
    for i, j in edges:
        adj[i].append(j)
    worst = 0
    for s in range(n):
        dist = [-1] * n
        dist[s] = 0
        queue = [s]
        for u in queue:
            for v in adj[u]:
                if dist[v] < 0:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        if min(dist) < 0:
            return math.inf
        worst = max(worst, max(dist))
    return float(worst)


# ---------------------------------------------------------------------------
# Drift bound
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DriftCertificate:
    """Lyapunov data ``E[V(X_{t+k}) | X_t] <= (1 - a) V + b`` with a check.

    ``residual`` is the largest pointwise violation of the inequality under
    exact k-step expectations (nonpositive when verified).
    """

    V: np.ndarray
    a: float
    b: float
    k: int
    v_max: float
    verified: bool
    residual: float


def verify_drift(
    kernel: StochasticKernel, V: np.ndarray, a: float, b: float, k: int = 1
) -> DriftCertificate:
    """Exact pointwise check of the k-step drift inequality."""
    V = np.asarray(V, dtype=float)
    if not (0 < a <= 1) or b < 0 or k < 1:
        raise ValueError("need 0 < a <= 1, b >= 0, k >= 1")
    if (V < 0).any():
        raise ValueError("Lyapunov function must be nonnegative")
    KV = V.copy()
    for _ in range(k):
        KV = kernel.rows @ KV
    residual = float((KV - ((1.0 - a) * V + b)).max())
    return DriftCertificate(
        V=V, a=a, b=b, k=k, v_max=float(V.max()), verified=residual <= 1e-12, residual=residual
    )


def fit_drift(kernel: StochasticKernel, V: np.ndarray, k: int, a_grid: int = 64) -> DriftCertificate:
    """Largest-contraction drift certificate for a given V and step count."""
    V = np.asarray(V, dtype=float)
    KV = V.copy()
    for _ in range(k):
        KV = kernel.rows @ KV
    best = None
    for a in np.linspace(1.0 / a_grid, 1.0, a_grid):
        b = float((KV - (1.0 - a) * V).max())
        if b < 0:
            b = 0.0
        cert = DriftCertificate(V, float(a), b, k, float(V.max()), True, 0.0)
        score = b / a  # smaller sublevel scale is a better certificate
        if best is None or score < best[0]:
            best = (score, cert)
    return best[1]


def bound_drift(
    drift: DriftCertificate,
    M: float,
    tau_mix_trace: float,
    constants: PeresSousiConstants,
    gamma: float = 1.0 / 6.0,
) -> BoundResult:
    """Mixing bound from a drift condition and the sublevel-trace mixing time.

    ``(16 c / (3 a)) * max(16 tau' / c', k log(16 V_max), 8 log 16)`` where
    tau' is the mixing time of the trace on the sublevel set ``{V <= M}``.
    Requires ``M >= 4 b / a`` so that the sublevel set carries mass >= 3/4.
    """
    if not drift.verified:
        raise DriftViolated(f"certificate residual {drift.residual:.3e} > 0")
    if M < 4.0 * drift.b / drift.a:
        raise MTooSmall(f"need M >= 4 b / a = {4.0 * drift.b / drift.a:.4f}, got {M}")
    c, cp = constants.c_alpha, constants.c_alpha_prime
    inner = max(16.0 * tau_mix_trace / cp, drift.k * math.log(16.0 * drift.v_max), 8.0 * math.log(16.0))
    value = (16.0 * c / (3.0 * drift.a)) * inner
    return BoundResult(
        name="drift_sublevel",
        value=value,
        ingredients={
            "a": drift.a,
            "b": drift.b,
            "k": drift.k,
            "v_max": drift.v_max,
            "M": M,
            "tau_mix_trace": tau_mix_trace,
            "gamma": gamma,
            "c": c,
            "c_prime": cp,
        },
        universal_constant_flag=not constants.calibrated,
    )


def bound_contraction(
    alpha: float,
    beta: float,
    a1: float,
    a2: float,
    delta1: float,
    delta2: float,
    phi_max: float,
    phi_bar: float,
    D_max: float,
    n: int,
    constants: PeresSousiConstants,
    envelope: float = 1.0,
) -> BoundResult:
    """Mixing bound under an exit-coupling contraction with strength alpha.

    Here alpha is the per-step contraction *strength*: coupled exit mixtures
    satisfy ``E[d'] <= (1 - alpha) d + beta`` (see
    ``contraction.estimate_contraction`` whose fitted factor is 1 - alpha).
    Requires ``0 < beta < alpha / 2 <= 1/2``.  Both logarithm factors that
    are negative as raw formulas enter through absolute values so the result
    is a meaningful nonnegative time.
    """
    if not (0 < alpha <= 1):
        raise ValueError("need 0 < alpha <= 1")
    if not (0 < beta < alpha / 2):
        raise ContractionTooWeak(f"need 0 < beta < alpha/2, got beta={beta}, alpha={alpha}")
    if n < 2:
        raise ValueError("need at least 2 blocks")
    if min(a1, a2, delta1, delta2) <= 0 or delta1 > 1 or delta2 > 1:
        raise ValueError("regularity constants must lie in (0, 1]")
    gamma = 0.5 - beta / alpha
    eps = 0.25 - gamma / 16.0
    c2e = constants.c_alpha
    cpe = constants.c_alpha_prime
    exponent = math.ceil(8.0 * math.e / (a1 * cpe))
    # log(1 - delta1^exponent) needs log1p accuracy; for per-visit success
    # probabilities that underflow entirely the prefactor is unbounded
    success = delta1**exponent if exponent * math.log(delta1) > -700 else 0.0
    if success == 0.0:
        visits = math.inf  # required visit count diverges with vanishing success
    else:
        visits = max(1.0, math.log(16.0) / abs(math.log1p(-success)))
    C1 = (1024.0 / gamma) * c2e * (a2 / delta2) * visits
    C2 = math.log2(8.0 / gamma)
    C3 = math.log(8.0 / gamma) + math.log(D_max)
    contraction_log = abs(math.log(1.0 - alpha)) if alpha < 1 else math.inf
    second = C3 / contraction_log if math.isfinite(contraction_log) else 0.0
    value = envelope * C1 * phi_max * math.log(n) * max(C2 * phi_bar + 1.0, second)
    return BoundResult(
        name="contraction_coupling",
        value=value,
        ingredients={
            "alpha": alpha,
            "beta": beta,
            "gamma": gamma,
            "epsilon": eps,
            "a1": a1,
            "a2": a2,
            "delta1": delta1,
            "delta2": delta2,
            "phi_max": phi_max,
            "phi_bar": phi_bar,
            "D_max": D_max,
            "n": n,
            "C1": C1,
            "C2": C2,
            "C3": C3,
            "envelope": envelope,
        },
        universal_constant_flag=not constants.calibrated,
    )


def bound_coupling_point(T: float, epsilon: float, envelope: float = 1.0) -> BoundResult:
    """Coupling-to-one-point bound ``ceil(e T) * ceil(log(4(1-eps)/(1-4eps)))``.

    T bounds the worst expected hitting time of a privileged state carrying
    stationary mass at least ``1 - epsilon``; requires ``epsilon < 1/4``.
    The log argument is the reciprocal of the raw negative-argument form so
    the factor is a positive round count.
    """
    if epsilon >= 0.25:
        raise EpsilonTooLarge(f"need epsilon < 1/4, got {epsilon}")
    if T < 1:
        raise ValueError("need T >= 1")
    rounds = math.ceil(math.log(4.0 * (1.0 - epsilon) / (1.0 - 4.0 * epsilon)))
    value = envelope * math.ceil(math.e * T) * rounds
    return BoundResult(
        name="coupling_point",
        value=value,
        ingredients={"T": T, "epsilon": epsilon, "rounds": rounds, "envelope": envelope},
        universal_constant_flag=False,
    )


# ---------------------------------------------------------------------------
# Hitting-time / mixing-time audit and calibration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HittingMixingAudit:
    tau_mix: int
    max_hit: float
    ratio: float
    n_sets: int
    mode: str
    argmax_set: tuple[int, ...]


def exact_mixing_time(kernel: StochasticKernel, pi: StationaryDistribution, cap: int = 2**22) -> int:
    """Exact TV mixing time (least t with worst-start distance below 1/4)."""
    prof = mixing_profile(kernel, pi, horizon=cap, epsilons=(0.25,))
    if prof.mixing_time is None:
        raise NoFeasibleT(f"mixing time exceeds cap {cap}")
    return prof.mixing_time


def peres_sousi_audit(
    kernel: StochasticKernel,
    pi: StationaryDistribution,
    alpha: float,
    subset_mode: str = "exact",
    budget: int = 128,
    seed: int = 0,
) -> HittingMixingAudit:
    """Measure the ratio between the mixing time and worst heavy-set hitting.

    Exact mode enumerates every state subset with stationary mass >= alpha
    (capped at 15 states); sampled mode draws a seeded family.  The ratio
    ``tau_mix / max_hit`` is the instance-level value of the universal
    constant tying the two time scales together.
    """
    n = kernel.n_states
    if subset_mode == "exact":
        if n > 15:
            raise TooLarge("exact subset audit capped at 15 states")
        sets = []
        for r in range(1, n + 1):
            for A in itertools.combinations(range(n), r):
                if pi.weights[list(A)].sum() >= alpha:
                    sets.append(A)
    elif subset_mode == "sampled":
        gen = rngmod.stream(seed, 0)
        fam = set()
        for _ in range(budget * 4):
            if len(fam) >= budget:
                break
            r = int(gen.integers(1, n + 1))
            A = tuple(sorted(gen.choice(n, size=r, replace=False).tolist()))
            if pi.weights[list(A)].sum() >= alpha:
                fam.add(A)
        sets = sorted(fam)
    else:
        raise ValueError(f"unknown subset_mode {subset_mode!r}")
    if not sets:
        raise TooLarge(f"no subset reaches stationary mass {alpha}")
    max_hit, arg = 0.0, sets[0]
    for A in sets:
        worst = hitting_analysis(kernel, list(A)).worst_expected()
        if worst > max_hit:
            max_hit, arg = worst, A
    tau = exact_mixing_time(kernel, pi)
    ratio = tau / max_hit if max_hit > 0 else math.inf
    if not (ratio > 0):
        raise ValueError("mixing/hitting ratio must be positive")
    return HittingMixingAudit(
        tau_mix=tau, max_hit=max_hit, ratio=ratio, n_sets=len(sets), mode=subset_mode, argmax_set=arg
    )


def calibrate_constants(
    kernel: StochasticKernel, pi: StationaryDistribution, alpha: float, subset_mode: str = "exact"
) -> PeresSousiConstants:
    """Pin both universal constants to the audit ratio of a reference chain.

    The ratio ``tau_mix / max_hit`` makes both directions of the
    hitting-mixing equivalence tight on the reference instance.
    """
    audit = peres_sousi_audit(kernel, pi, alpha, subset_mode)
    return PeresSousiConstants(
        c_alpha=audit.ratio, c_alpha_prime=audit.ratio, calibrated=True
    )
