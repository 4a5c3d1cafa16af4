"""Reproduction suites: scaling fits and constant checks on benchmark chains.

Each suite runs one benchmark experiment, compares the measured quantity
against its stated threshold, and returns a :class:`SuiteResult` with
plot-ready rows.  The CLI exposes them under ``mixdecomp reproduce``; the
acceptance tests call them directly.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .bounds import (
    MCTailProvider,
    MinMarginalJointTails,
    PeresSousiConstants,
    bound_basic,
    bound_basic2,
    bound_contraction,
    bound_drift,
    bound_graph_hit,
    bound_regular,
    calibrate_constants,
    exact_mixing_time,
    fit_drift,
)
from .chains import (
    cycle_adjacency,
    expander_pair,
    kcip,
    pince_nez,
    torus_metropolis,
    torus_product_mass,
    toy_kcip,
    toy_kcip_backbone_trace,
)
from .contraction import (
    BlockMetric,
    estimate_contraction,
    occupation_regularity,
)
from .decomposition import (
    Partition,
    avg_hit_time,
    block_mixing_times,
    escape_analysis,
    projected_kernel,
    trace_kernel,
)
from .errors import SuiteFailed
from .kernel import (
    StationaryDistribution,
    StochasticKernel,
    check_reversible,
    mixing_profile,
    stationary_distribution,
)
from .simulate import occupation_tail_table, simulate_states
from .wellcovering import (
    WellCoveringQuery,
    bootstrap_mixing_bound,
    oracle_wc_time,
    propagation_bound,
)

SUITE_NAMES = (
    "pince_nez_scaling",
    "toy_kcip_scaling",
    "expander_separation",
    "torus_constants",
    "kcip_reversibility",
)


@dataclass
class SuiteResult:
    name: str
    passed: bool
    measured: dict
    threshold: str
    header: list[str]
    rows: list[list]
    seconds: float = 0.0

    def raise_if_failed(self):
        if not self.passed:
            raise SuiteFailed(f"{self.name}: measured {self.measured} vs threshold [{self.threshold}]")


def _tv_crossing(profile) -> float:
    """Linear interpolation of the 1/4 crossing of the TV profile.

    Integer mixing times quantize the scaling fit at small sizes; the
    crossing of the exactly-computed distance curve removes that bias.
    """
    t = profile.mixing_time
    d = profile.distances
    if t is None or t == 0:
        raise ValueError("profile never crossed 1/4")
    return t - 1 + (d[t - 1] - 0.25) / (d[t - 1] - d[t])


def pince_nez_scaling(seed: int = 0, ms=(8, 16, 32)) -> SuiteResult:
    """Exact mixing times of the two-loop chain; quadratic scaling fit.

    Passes when the log-log slope of the interpolated 1/4-crossing times
    lies in [1.8, 2.2] and a Monte Carlo TV estimate agrees with the exact
    profile at the smallest size; the integer mixing times and both slopes
    are reported.
    """
    t0 = time.time()
    rows = []
    taus, crossings = [], []
    profiles = {}
    for m in ms:
        K, part = pince_nez(m)
        pi = stationary_distribution(K)
        prof = mixing_profile(K, pi, horizon=60 * m * m, full=False)
        profiles[m] = (K, pi, prof)
        crossing = _tv_crossing(prof)
        taus.append(prof.mixing_time)
        crossings.append(crossing)
        rows.append([m, prof.mixing_time, round(crossing, 4)])
    lm = np.log(np.asarray(ms, dtype=float))
    slope_int = float(np.polyfit(lm, np.log(taus), 1)[0])
    slope = float(np.polyfit(lm, np.log(crossings), 1)[0])
    mc_gap = _mc_tv_cross_check(*profiles[ms[0]], seed=seed)
    passed = 1.8 <= slope <= 2.2 and mc_gap["ok"]
    return SuiteResult(
        name="pince_nez_scaling",
        passed=passed,
        measured={
            "slope": slope,
            "slope_integer_tau": slope_int,
            "taus": taus,
            "mc_tv_gap": mc_gap["gap"],
        },
        threshold="log-log slope of 1/4-crossings in [1.8, 2.2]; MC TV agrees",
        header=["m", "tau_mix", "tv_quarter_crossing"],
        rows=rows,
        seconds=time.time() - t0,
    )


def _mc_tv_cross_check(K, pi, prof, seed: int, reps: int = 200_000) -> dict:
    """Empirical TV at the mixing time vs the exact profile value.

    The plug-in TV estimate has a positive bias of at most
    ``sum_y sqrt(pi_hat_y (1-pi_hat_y)/reps)/2``; the check allows that bias
    plus three standard errors.
    """
    t = prof.mixing_time
    n = K.n_states
    # worst start at time t per the exact profile
    P = np.linalg.matrix_power(K.rows, t)
    tvs = 0.5 * np.abs(P - pi.weights[None, :]).sum(axis=1)
    x = int(np.argmax(tvs))
    exact = float(tvs[x])
    paths = simulate_states(K, x, t, seed=seed + 31, reps=reps)
    counts = np.bincount(paths[:, -1], minlength=n) / reps
    emp = 0.5 * np.abs(counts - pi.weights).sum()
    bias = float(0.5 * np.sqrt(np.clip(counts * (1 - counts), 0, None) / reps).sum())
    gap = float(emp - exact)
    return {"gap": gap, "ok": bool(abs(gap) <= bias + 3.0 / math.sqrt(reps) + 1e-3)}


def toy_kcip_scaling(seed: int = 0, ms=(4, 8, 16), d: int = 1) -> SuiteResult:
    """Ladder-chain mixing growth plus the backbone drift certificate.

    The fitted exponent over m must be at most 2.4, and the backbone trace
    must satisfy ``E[e^{Y'/2}] <= 0.98 e^{Y/2} + 0.25`` pointwise.
    """
    t0 = time.time()
    rows, taus = [], []
    for m in ms:
        K, part = toy_kcip(m, d)
        pi = stationary_distribution(K)
        tau = exact_mixing_time(K, pi)
        taus.append(tau)
        rows.append([m, tau])
    slope = float(np.polyfit(np.log(np.asarray(ms, float)), np.log(taus), 1)[0])
    drift_ok = True
    worst_resid = -math.inf
    for m in ms:
        lower = toy_kcip_backbone_trace(m, d)
        V = np.exp(0.5 * np.arange(1, m + 1))
        resid = float((lower.rows @ V - (0.98 * V + 0.25)).max())
        worst_resid = max(worst_resid, resid)
        drift_ok &= resid <= 1e-12
    passed = slope <= 2.4 and drift_ok
    return SuiteResult(
        name="toy_kcip_scaling",
        passed=passed,
        measured={"slope": slope, "taus": taus, "backbone_drift_residual": worst_resid},
        threshold="exponent <= 2.4 and backbone drift residual <= 0",
        header=["m", "tau_mix"],
        rows=rows,
        seconds=time.time() - t0,
    )


class _SampledJointTails:
    """Joint occupation tails straight from a cached-path MC provider."""

    def __init__(self, mc: MCTailProvider):
        self.mc = mc
        self.provenance = f"mc-joint({mc.provenance})"

    def max_t(self):
        return self.mc.max_t()

    def query_joint(self, I, T, t):
        return self.mc.query_joint(I, T, t)


def expander_separation(seed: int = 0, m: int = 64, d: int = 8) -> SuiteResult:
    """Joint-occupation bound beats the per-block bound on the pair chain.

    Three checks at ``epsilon = 1/log m``: (1) exact per-block tails admit
    no feasible horizon T <= m/2; (2) a sampled joint tail certifies the
    joint-bound ingredient at some T <= 50 log(m) / epsilon; (3) the
    resulting joint-bound value is below the per-block-bound value at the
    shared Monte Carlo resolution.
    """
    t0 = time.time()
    eps = 1.0 / math.log(m)
    ep = expander_pair(m, d, eps, seed=seed + 3)
    K, part = ep.kernel, ep.partition
    pi = stationary_distribution(K)
    phis, _, _ = block_mixing_times(K, pi, part, horizon=1000)
    phis = [float(p) for p in phis]
    masses = part.masses(pi)

    # (1) exact DP: no (T <= m/2, t) admits the per-block criterion on block 0
    half = m // 2
    table = occupation_tail_table(K, part, 0, T_max=half, t_cap=half)
    per_block_feasible = False
    for T in range(2, half + 1):
        for t in range(1, T):
            if phis[0] / t + table[T - 1, min(t, half) - 1] < 0.25:
                per_block_feasible = True
    alpha = 1.0 / 3.0
    n_blocks = part.n_blocks
    I = list(range(int(0.69 * n_blocks)))  # mass just above the 2/3 floor
    beta = 0.68
    constants = PeresSousiConstants()

    T_budget = int(50 * math.log(m) / eps)
    mc = MCTailProvider(K, part, T_max=8192, reps_per_start=240, seed=seed + 11)
    joint = _SampledJointTails(mc)

    # (2) joint ingredient certified within the budget
    r_joint = bound_basic2(
        phis,
        masses,
        joint,
        alpha,
        constants,
        subset_mode="sampled",
        subset_budget=12,
        seed=seed + 7,
        T_horizon=8192,
    )
    T_joint = r_joint.ingredients["T"]
    joint_ok = r_joint.feasible and T_joint is not None and T_joint <= T_budget

    # (3) per-block bound value at the same resolution
    r_block = bound_basic(
        phis, mc, alpha, beta, I, constants, block_masses=masses, T_horizon=8192
    )
    separation = r_joint.value < r_block.value
    passed = (not per_block_feasible) and joint_ok and separation
    return SuiteResult(
        name="expander_separation",
        passed=passed,
        measured={
            "per_block_feasible_below_m_over_2": per_block_feasible,
            "joint_T": T_joint,
            "joint_T_budget": T_budget,
            "basic2_value": r_joint.value,
            "basic_value": r_block.value,
        },
        threshold="no per-block T <= m/2; joint T <= 50 log(m)/eps; basic2 < basic",
        header=["bound", "T", "value"],
        rows=[
            ["basic_joint_occupation", T_joint, r_joint.value],
            ["basic_occupation", r_block.ingredients.get("T"), r_block.value],
        ],
        seconds=time.time() - t0,
    )


def torus_constants(seed: int = 0) -> SuiteResult:
    """Product-measure concentration and contraction constants on the torus.

    Checks: stationary mass of the well region at m=4 is at least 0.9; the
    m=3 inner trace admits a certified contraction factor at least 1 - 1/m
    with slack at most 0.05; both escape-regularity constants reach 1/2 at
    the matched threshold pair (the slow threshold 16x the fast one).
    """
    t0 = time.time()
    mass = torus_product_mass(4, 3, 7.0, [0, 1, 4, 5])
    tc = torus_metropolis(3, 3, 7.0, k_trace=1)
    m = 3
    metric = BlockMetric.hamming_on_bitmasks(m)
    est = estimate_contraction(tc.kernel, tc.partition, metric)
    contraction_ok = (
        est.certified and est.alpha >= 1.0 - 1.0 / m - 1e-9 and est.beta <= 0.05
    )
    # regularity at the matched thresholds: fast = E/8, slow = 2E
    esc = escape_analysis(tc.kernel, tc.partition, 0, horizon=0)
    center_row = int(np.nonzero((tc.states[esc.members] == 0).all(axis=1))[0][0])
    e_escape = float(esc.expected[center_row])
    phis, _, _ = block_mixing_times(tc.kernel, tc.pi, tc.partition, horizon=10**6)
    phi_max = float(max(phis))
    log_n = math.log(tc.partition.n_blocks)
    a_fast = e_escape / 8.0 / (phi_max * log_n)
    a_slow = 16.0 * a_fast
    reg = occupation_regularity(tc.kernel, tc.partition, a_fast, a_slow, phi_max)
    reg_ok = reg.delta1 >= 0.5 and reg.delta2 >= 0.5
    passed = mass >= 0.9 and contraction_ok and reg_ok
    return SuiteResult(
        name="torus_constants",
        passed=passed,
        measured={
            "well_mass_m4": mass,
            "alpha": est.alpha,
            "beta": est.beta,
            "certified": est.certified,
            "delta1": reg.delta1,
            "delta2": reg.delta2,
            "escape_from_center": e_escape,
            "phi_max": phi_max,
        },
        threshold="mass >= 0.9; alpha >= 1 - 1/m, beta <= 0.05 certified; deltas >= 1/2",
        header=["quantity", "value"],
        rows=[
            ["well_mass_m4", mass],
            ["contraction_alpha", est.alpha],
            ["contraction_beta", est.beta],
            ["delta1", reg.delta1],
            ["delta2", reg.delta2],
        ],
        seconds=time.time() - t0,
    )


def kcip_reversibility(seed: int = 0, steps: int = 10**6) -> SuiteResult:
    """Constrained-spin chain on the 5-cycle: detailed balance and liveness.

    The enumerated kernel must satisfy detailed balance against the product
    measure conditioned on at least one particle (residual <= 1e-12), and a
    million-step sampler trajectory must never lose its last particle.
    """
    t0 = time.time()
    chain = kcip(cycle_adjacency(5), c=1.0)
    flux = chain.pi.weights[:, None] * chain.kernel.rows
    residual = float(np.abs(flux - flux.T).max())
    start = int(chain.states[0])  # single particle at vertex 0
    counts = chain.sampler.run(start, steps, seed=seed + 1)
    min_count = int(counts.min())
    passed = residual <= 1e-12 and min_count >= 1
    return SuiteResult(
        name="kcip_reversibility",
        passed=passed,
        measured={"detailed_balance_residual": residual, "min_particles": min_count},
        threshold="residual <= 1e-12 and min particle count >= 1",
        header=["quantity", "value"],
        rows=[["residual", residual], ["min_particles", min_count], ["steps", steps]],
        seconds=time.time() - t0,
    )


def run_suite(name: str, seed: int = 0) -> SuiteResult:
    table = {
        "pince_nez_scaling": pince_nez_scaling,
        "toy_kcip_scaling": toy_kcip_scaling,
        "expander_separation": expander_separation,
        "torus_constants": torus_constants,
        "kcip_reversibility": kcip_reversibility,
    }
    if name not in table:
        raise ValueError(f"unknown suite {name!r}; choose from {SUITE_NAMES}")
    return table[name](seed=seed)


# ---------------------------------------------------------------------------
# Calibrated cross-instance bound comparison
# ---------------------------------------------------------------------------


@dataclass
class BoundRow:
    chain: str
    bound: str
    value: float
    tau_exact: int
    dominates: bool
    note: str = ""


def _stationary_floor_epsilon(phi_max: float) -> float:
    # threshold of one step: makes the stay-probability condition generous
    return 1.0 / phi_max if phi_max > 0 else 1.0


def _min_escape_delta(kernel, partition, threshold: float) -> float:
    from .decomposition import escape_tail_at

    return min(
        float(escape_tail_at(kernel, partition, i, threshold).min())
        for i in range(partition.n_blocks)
    )


def calibrated_bound_table(seed: int = 0) -> tuple[list[BoundRow], PeresSousiConstants]:
    """Every applicable mixing bound, calibrated on the m=8 two-loop chain.

    The hitting/mixing constants are pinned so the equivalence is tight on
    the reference instance; the table then evaluates each applicable bound
    on the m=16 two-loop chain and the m=8 ladder chain against their exact
    mixing times.
    """
    K8, p8 = pince_nez(8)
    pi8 = stationary_distribution(K8)
    constants = calibrate_constants(K8, pi8, alpha=1.0 / 3.0, subset_mode="sampled")

    rows: list[BoundRow] = []
    targets = [
        ("pince_nez_m16", *pince_nez(16), [0, 1], 8192),
        ("toy_kcip_m8", *toy_kcip(8, 1), [0, 1, 2], 16384),
    ]
    for name, K, part, I, t_max in targets:
        pi = stationary_distribution(K)
        tau = exact_mixing_time(K, pi)
        masses = part.masses(pi)
        phis, _, _ = block_mixing_times(K, pi, part, horizon=10**6)
        phi = [float(p) for p in phis]
        phi_max = max(phi)
        alpha, beta = 1.0 / 3.0, 0.75

        mc = MCTailProvider(K, part, T_max=t_max, reps_per_start=200, seed=seed + 21)
        r = bound_basic(phi, mc, alpha, beta, I, constants, block_masses=masses, T_horizon=t_max)
        rows.append(BoundRow(name, r.name, r.value, tau, r.value >= tau))

        r2 = bound_basic2(
            phi, masses, MinMarginalJointTails(mc), alpha, constants, T_horizon=t_max
        )
        rows.append(BoundRow(name, r2.name, r2.value, tau, r2.value >= tau))

        hit = avg_hit_time(K, pi, part, alpha, mode="exact")
        eps_reg = _stationary_floor_epsilon(phi_max)
        delta_reg = _min_escape_delta(K, part, eps_reg * phi_max)
        rr = bound_regular(
            eps_reg,
            delta_reg,
            hit.value,
            part.n_blocks,
            constants,
            envelope=constants.c_alpha,
            hypothesis_verified=True,
        )
        rows.append(BoundRow(name, rr.name, rr.value, tau, rr.value >= tau))

        # graph-hit route: bound the hitting scale, then reuse the
        # escape-regularity formula with it
        worst_escape = max(
            float(escape_analysis(K, part, i, horizon=0).expected.max())
            for i in range(part.n_blocks)
        )
        eps_gh = 4.0 * worst_escape / phi_max
        gh = bound_graph_hit(K, part, c=0.3 if part.n_blocks > 2 else 0.99, epsilon=eps_gh, phi_max=phi_max, constants=constants)
        if gh.bound.feasible:
            rg = bound_regular(
                eps_reg,
                delta_reg,
                gh.bound.value,
                part.n_blocks,
                constants,
                envelope=constants.c_alpha,
                hypothesis_verified=True,
            )
            dominates_hit = gh.bound.value >= hit.value
            rows.append(
                BoundRow(
                    name,
                    "regular_via_graph_hit",
                    rg.value,
                    tau,
                    rg.value >= tau and dominates_hit,
                    note=f"graph hit scale {gh.bound.value:.3g} vs exact {hit.value:.3g}",
                )
            )

        proj = projected_kernel(K, pi, part)
        if part.n_blocks <= 3:
            def provider(thresholds, B, _proj=proj):
                return oracle_wc_time(WellCoveringQuery(_proj, thresholds, B), 64).value
        else:
            def provider(thresholds, B, _proj=proj):
                return propagation_bound(WellCoveringQuery(_proj, thresholds, B)).value
        rb = bootstrap_mixing_bound(
            K, pi, part, I, alpha, beta, provider, constants, phi=phi
        )
        rows.append(BoundRow(name, rb.name, rb.value, tau, rb.value >= tau))

        if name.startswith("pince"):
            metric = BlockMetric.uniform(part.n_blocks)
            est = estimate_contraction(K, part, metric)
            if est.certified and est.beta < est.strength / 2.0:
                a1 = 1.0 / (phi_max * math.log(2))  # one-step stay threshold
                reg1 = occupation_regularity(K, part, a1, eps_gh / math.log(2), phi_max)
                proj_ll_phi = 1.0  # two-block half-lazy projection mixes in one step
                rc = bound_contraction(
                    est.strength,
                    max(est.beta, 1e-12),
                    a1,
                    eps_gh / math.log(2),
                    reg1.delta1,
                    reg1.delta2,
                    phi_max,
                    proj_ll_phi,
                    metric.d_max,
                    part.n_blocks,
                    constants,
                )
                rows.append(BoundRow(name, rc.name, rc.value, tau, rc.value >= tau))
        else:
            V = np.exp(0.5 * np.repeat(np.arange(1, part.n_blocks + 1), 3))
            cert = fit_drift(K, V, k=part.n_blocks ** 2)
            M = 4.0 * cert.b / cert.a
            sub = np.nonzero(V <= M)[0]
            marker = np.zeros(K.n_states, dtype=int)
            marker[sub] = 1
            tr = trace_kernel(K, Partition.from_block_of(marker), 1)
            w = pi.weights[sub]
            tau_tr = exact_mixing_time(tr, StationaryDistribution(w / w.sum()))
            rd = bound_drift(cert, M, tau_tr, constants)
            rows.append(BoundRow(name, rd.name, rd.value, tau, rd.value >= tau))
    return rows, constants
