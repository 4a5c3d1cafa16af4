import numpy as np
import pytest

from conftest import random_partition, random_reversible_kernel
from mixdecomp import rng as rngmod
from mixdecomp.chains import pince_nez, torus_metropolis, toy_kcip
from mixdecomp.contraction import (
    BlockMetric,
    estimate_contraction,
    exit_distribution,
    exit_distributions_all,
    occupation_regularity,
    wasserstein,
    wasserstein_dual,
)
from mixdecomp.decomposition import Partition
from mixdecomp.kernel import StochasticKernel, stationary_distribution
from mixdecomp.simulate import RowSampler

K3 = StochasticKernel([[0.5, 0.5, 0.0], [0.25, 0.5, 0.25], [0.0, 0.5, 0.5]])


def test_metric_validation():
    with pytest.raises(ValueError):
        BlockMetric(np.array([[0.0, 0.5], [0.5, 0.0]]))  # below unit floor
    with pytest.raises(ValueError):
        BlockMetric(np.array([[0.0, 1.0], [2.0, 0.0]]))  # asymmetric
    with pytest.raises(ValueError):
        BlockMetric(np.array([[0.0, 1.0, 5.0], [1.0, 0.0, 1.0], [5.0, 1.0, 0.0]]))  # triangle
    m = BlockMetric.path(4)
    assert m.d_max == 3.0
    h = BlockMetric.hamming_on_bitmasks(3)
    assert h.d[0b000, 0b111] == 3.0 and h.d_max == 3.0


def test_wasserstein_basics():
    metric = BlockMetric.path(3)
    mu = np.array([0.5, 0.5, 0.0])
    assert wasserstein(mu, mu, metric) == 0.0
    assert wasserstein(np.array([1.0, 0, 0]), np.array([0, 0, 1.0]), metric) == pytest.approx(2.0)
    # two equivalent optimal plans, both of cost 1
    nu = np.array([0.0, 0.5, 0.5])
    assert wasserstein(mu, nu, metric) == pytest.approx(1.0, abs=1e-10)
    assert wasserstein_dual(mu, nu, metric) == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("seed", range(12))
def test_wasserstein_metric_axioms_and_duality(seed):
    gen = rngmod.stream(1100 + seed, 0)
    n = int(gen.integers(2, 6))
    d = np.ones((n, n)) + gen.random((n, n)) * 2
    d = np.triu(d, 1)
    d = d + d.T
    # enforce the triangle inequality by shortest-path closure
    for k in range(n):
        d = np.minimum(d, d[:, [k]] + d[[k], :])
    np.fill_diagonal(d, 0.0)
    metric = BlockMetric(d)
    dists = gen.dirichlet(np.ones(n), size=3)
    mu, nu, rho = dists
    w = lambda a, b: wasserstein(a, b, metric)
    assert w(mu, nu) == pytest.approx(w(nu, mu), abs=1e-9)
    assert w(mu, mu) <= 1e-12
    assert w(mu, rho) <= w(mu, nu) + w(nu, rho) + 1e-8
    # primal equals dual
    assert w(mu, nu) == pytest.approx(wasserstein_dual(mu, nu, metric), abs=1e-8)
    # TV sandwich for unit-floor metrics
    tv = 0.5 * np.abs(mu - nu).sum()
    off = d[~np.eye(n, dtype=bool)]
    assert off.min() * tv - 1e-9 <= w(mu, nu) <= metric.d_max * tv + 1e-9


def test_exit_distribution_three_state():
    part = Partition.from_block_of([0, 0, 1])
    mu = exit_distribution(K3, part, 1)
    assert np.allclose(mu, [0.5, 0.5])
    part2 = Partition.from_block_of([0, 1, 1])
    mu0 = exit_distribution(K3, part2, 0)
    assert np.allclose(mu0, [0.5, 0.5])  # forced support: only one way out


def test_exit_distribution_rows_match_resimulation():
    k, part = pince_nez(6)
    mus = exit_distributions_all(k, part)
    sampler = RowSampler(k)
    gen = rngmod.stream(55, 0)
    reps = 100_000
    x = 2
    b0 = part.block_of[x]
    state = np.full(reps, x, dtype=np.int64)
    out_block = np.full(reps, -1, dtype=np.int64)
    active = np.ones(reps, dtype=bool)
    for _ in range(200_000):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        state[idx] = sampler.step(state[idx], gen)
        moved = part.block_of[state[idx]] != b0
        out_block[idx[moved]] = part.block_of[state[idx[moved]]]
        active[idx[moved]] = False
    emp = np.bincount(out_block[out_block >= 0], minlength=2) / reps
    emp = 0.5 * emp
    emp[b0] += 0.5
    tv = 0.5 * np.abs(emp - mus[x]).sum()
    assert tv <= 3.0 * np.sqrt(2 / (4.0 * reps))


def test_estimate_identical_exits_certifies_strongly():
    k, part = pince_nez(8)
    est = estimate_contraction(k, part, BlockMetric.uniform(2))
    assert est.certified
    assert est.beta <= 1e-9
    assert est.margin >= 0.99
    # the trivial factor 1 is feasible with zero slack, as is any factor
    assert est.alpha <= 0.01


def test_estimate_torus_trace_certifies():
    tc = torus_metropolis(3, 3, 7.0, k_trace=1)
    est = estimate_contraction(tc.kernel, tc.partition, BlockMetric.hamming_on_bitmasks(3))
    assert est.certified and est.coverage == "exact-all-pairs"
    assert est.alpha >= 1.0 - 1.0 / 3.0 - 1e-9
    assert est.beta <= 0.05
    # the fitted pair re-verifies on its own evidence by construction
    worst = est.worst_pairs[0]
    assert worst.w <= est.alpha * worst.distance + est.beta + 1e-9


def test_estimate_untraced_torus_not_usefully_contracting():
    # without the inner trace, exits from the boundary leak sideways and the
    # additive slack stays macroscopic
    tc = torus_metropolis(4, 3, 7.0)
    est = estimate_contraction(
        tc.kernel, tc.partition, BlockMetric.hamming_on_bitmasks(4), pair_budget=6000, seed=3
    )
    assert est.coverage == "sampled"
    assert est.beta >= 1.0 / 24.0


def test_estimate_path_chain_no_contraction():
    # translation-invariant exits on a path: distances are preserved, so no
    # factor below 1 with small slack can be certified
    k, part = toy_kcip(6, 1)
    est = estimate_contraction(k, part, BlockMetric.path(6))
    assert est.alpha >= 0.9 or est.beta >= 0.2 or not est.certified


def test_occupation_regularity_zero_threshold():
    k, part = pince_nez(6)
    reg = occupation_regularity(k, part, 0.0, 1.0, phi_max=8.0)
    assert reg.delta1 == 1.0  # escape takes at least one step
    assert 0.0 <= reg.delta2 <= 1.0


def test_occupation_regularity_monotone_thresholds():
    k, part = pince_nez(6)
    r1 = occupation_regularity(k, part, 0.5, 4.0, phi_max=8.0)
    r2 = occupation_regularity(k, part, 2.0, 16.0, phi_max=8.0)
    assert r2.delta1 <= r1.delta1 + 1e-12
    assert r2.delta2 >= r1.delta2 - 1e-12


def test_contraction_estimate_json_fields():
    k, part = pince_nez(6)
    est = estimate_contraction(k, part, BlockMetric.uniform(2))
    d = est.to_dict()
    assert set(d) == {"alpha", "beta", "certified", "coverage", "worst_pair", "margin"}
