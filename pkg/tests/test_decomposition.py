import numpy as np
import pytest

from conftest import random_partition, random_reversible_kernel
from mixdecomp import rng as rngmod
from mixdecomp.chains import pince_nez, toy_kcip
from mixdecomp.decomposition import (
    Partition,
    avg_hit_time,
    decompose,
    escape_analysis,
    less_lazy_projection,
    projected_kernel,
    trace_kernel,
    trace_kernel_dp_oracle,
)
from mixdecomp.errors import AbsorbingBlock, NoExit, TooManyBlocks
from mixdecomp.kernel import (
    StationaryDistribution,
    StochasticKernel,
    check_reversible,
    stationary_distribution,
)
from mixdecomp.simulate import RowSampler

K3 = StochasticKernel([[0.5, 0.5, 0.0], [0.25, 0.5, 0.25], [0.0, 0.5, 0.5]])


def test_partition_validation():
    with pytest.raises(ValueError):
        Partition(np.array([0, 0, 2]), 3)  # block 1 empty
    p = Partition.from_block_of([0, 0, 1])
    assert p.n_blocks == 2
    assert p.members(0).tolist() == [0, 1]


def test_trace_whole_space_is_identity_operation():
    p = Partition.single_block(3)
    t = trace_kernel(K3, p, 0)
    assert np.allclose(t.rows, K3.rows)


def test_trace_three_state_example():
    p = Partition.from_block_of([0, 0, 1])
    t = trace_kernel(K3, p, 0)
    assert np.allclose(t.rows, [[0.5, 0.5], [0.25, 0.75]], atol=1e-12)


@pytest.mark.parametrize("seed", range(25))
def test_trace_against_dp_oracle_and_inherits_structure(seed):
    gen = rngmod.stream(500 + seed, 0)
    n = int(gen.integers(4, 13))
    k = random_reversible_kernel(n, gen, half_lazy=bool(seed % 2))
    pi = stationary_distribution(k)
    part = random_partition(n, gen)
    for b in range(part.n_blocks):
        t = trace_kernel(k, part, b)
        oracle = trace_kernel_dp_oracle(k, part, b)
        assert np.abs(t.rows - oracle).max() <= 1e-8
        # stationary restriction identity
        A = part.members(b)
        sub = pi.weights[A] / pi.weights[A].sum()
        pib = stationary_distribution(t)
        assert np.abs(pib.weights - sub).max() <= 1e-8
        # reversibility and laziness inherited
        assert check_reversible(t, pib).is_reversible
        assert np.diag(t.rows).min() >= np.diag(k.rows[np.ix_(A, A)]).min() - 1e-12
        # trace dominates the plain restriction off the diagonal
        off = ~np.eye(A.size, dtype=bool)
        assert (t.rows[off] >= k.rows[np.ix_(A, A)][off] - 1e-12).all()


def test_projected_single_block():
    pi = stationary_distribution(K3)
    p = projected_kernel(K3, pi, Partition.single_block(3))
    assert np.allclose(p.rows, [[1.0]])


def test_projected_pince_nez_rate():
    k, part = pince_nez(8)
    pi = stationary_distribution(k)
    proj = projected_kernel(k, pi, part)
    assert proj.rows[0, 1] == pytest.approx(1.0 / 48.0, abs=1e-12)
    assert proj.rows[1, 0] == pytest.approx(1.0 / 48.0, abs=1e-12)


@pytest.mark.parametrize("seed", range(15))
def test_projected_reversible_fixed_point(seed):
    gen = rngmod.stream(600 + seed, 0)
    n = int(gen.integers(4, 12))
    k = random_reversible_kernel(n, gen)
    pi = stationary_distribution(k)
    part = random_partition(n, gen)
    proj = projected_kernel(k, pi, part)
    masses = part.masses(pi)
    assert np.abs(masses @ proj.rows - masses).max() <= 1e-9
    flux = masses[:, None] * proj.rows
    assert np.abs(flux - flux.T).max() <= 1e-9


def test_less_lazy_projection():
    k = StochasticKernel([[0.5, 0.5], [0.5, 0.5]])
    assert np.allclose(less_lazy_projection(k).rows, 0.5)
    k2 = StochasticKernel([[0.9, 0.1], [0.1, 0.9]])
    assert np.allclose(less_lazy_projection(k2).rows, 0.5)
    with pytest.raises(AbsorbingBlock):
        less_lazy_projection(StochasticKernel([[1.0, 0.0], [0.5, 0.5]]))


def test_less_lazy_is_half_lazy():
    gen = rngmod.stream(9, 0)
    k = random_reversible_kernel(6, gen)
    pi = stationary_distribution(k)
    part = random_partition(6, gen, 3)
    ll = less_lazy_projection(projected_kernel(k, pi, part))
    assert np.allclose(np.diag(ll.rows), 0.5, atol=1e-12)


def test_escape_singleton_geometric():
    k = StochasticKernel([[0.5, 0.5], [0.5, 0.5]])
    part = Partition.from_block_of([0, 1])
    stats = escape_analysis(k, part, 0, horizon=10)
    assert stats.expected[0] == pytest.approx(2.0)
    assert stats.tail[3, 0] == pytest.approx(0.5**3)
    assert np.allclose(stats.exit_block_distribution.sum(axis=1), 1.0)


def test_escape_closed_block_raises():
    k = StochasticKernel([[1.0, 0.0], [0.5, 0.5]])
    part = Partition.from_block_of([0, 1])
    with pytest.raises(NoExit):
        escape_analysis(k, part, 0, horizon=4)


def test_escape_ladder_block_scales_like_slow_clock():
    # escape leaves only through the backbone state; from the far rung the
    # expectation grows with the m^d clock
    expectations = {}
    for m in (4, 8):
        k, part = toy_kcip(m, 1)
        stats = escape_analysis(k, part, 1, horizon=0)
        far_row = int(np.nonzero(stats.members == 3 * 1 + 2)[0][0])
        expectations[m] = stats.expected[far_row]
        assert np.allclose(stats.exit_block_distribution.sum(axis=1), 1.0)
    ratio = expectations[8] / expectations[4]
    assert 1.5 <= ratio <= 2.6  # Theta(m) growth at d = 1


@pytest.mark.parametrize("seed", range(8))
def test_escape_exit_rows_sum_to_one(seed):
    gen = rngmod.stream(700 + seed, 0)
    n = int(gen.integers(4, 12))
    k = random_reversible_kernel(n, gen)
    part = random_partition(n, gen)
    for b in range(part.n_blocks):
        stats = escape_analysis(k, part, b, horizon=5)
        assert np.allclose(stats.exit_block_distribution.sum(axis=1), 1.0, atol=1e-9)
        assert (stats.expected >= 1.0 - 1e-12).all()
        assert (np.diff(stats.tail, axis=0) <= 1e-12).all()


def test_avg_hit_single_block_zero():
    pi = stationary_distribution(K3)
    res = avg_hit_time(K3, pi, Partition.single_block(3), alpha=0.4)
    assert res.value == 0.0
    assert res.n_qualifying == 1


def test_avg_hit_pince_nez_order_m_squared():
    k, part = pince_nez(8)
    pi = stationary_distribution(k)
    res = avg_hit_time(k, pi, part, alpha=1.0 / 3.0, mode="exact")
    # worst start in one loop hitting the other loop: diffusive scale
    assert 20.0 <= res.value <= 500.0
    k16, part16 = pince_nez(16)
    res16 = avg_hit_time(k16, stationary_distribution(k16), part16, alpha=1.0 / 3.0)
    assert 2.5 <= res16.value / res.value <= 5.5  # ~quadratic in m


@pytest.mark.parametrize("seed", range(6))
def test_avg_hit_sampled_below_exact(seed):
    gen = rngmod.stream(800 + seed, 0)
    n = int(gen.integers(6, 11))
    k = random_reversible_kernel(n, gen)
    pi = stationary_distribution(k)
    part = random_partition(n, gen, 3)
    exact = avg_hit_time(k, pi, part, alpha=0.3, mode="exact")
    sampled = avg_hit_time(k, pi, part, alpha=0.3, mode="sampled", seed=seed)
    assert sampled.lower_bound_only
    assert sampled.value <= exact.value + 1e-9


def test_avg_hit_no_qualifying_marker():
    pi = stationary_distribution(K3)
    res = avg_hit_time(K3, pi, Partition.from_block_of([0, 0, 1]), alpha=2.5)
    assert res.no_qualifying_set and res.value is None


def test_avg_hit_block_cap():
    k = random_reversible_kernel(22, rngmod.stream(4, 0))
    pi = stationary_distribution(k)
    part = Partition.from_block_of(np.arange(22))
    with pytest.raises(TooManyBlocks):
        avg_hit_time(k, pi, part, alpha=0.3, mode="exact")


def test_decompose_report_fields():
    k, part = pince_nez(8)
    pi = stationary_distribution(k)
    rep = decompose(k, pi, part, horizon=4000)
    assert rep.phi_max == max(rep.block_mixing_times)
    assert np.allclose(rep.block_masses, 0.5)
    assert len(rep.trace_kernels) == 2


def test_trace_one_step_law_matches_simulation():
    # empirical one-step law of the watched chain matches the analytic trace
    k, part = pince_nez(6)
    trace = trace_kernel(k, part, 0)
    sampler = RowSampler(k)
    gen = rngmod.stream(42, 0)
    reps = 100_000
    start = 2
    in_block = part.block_of == 0
    state = np.full(reps, start, dtype=np.int64)
    first = np.full(reps, -1, dtype=np.int64)
    active = np.ones(reps, dtype=bool)
    for _ in range(10_000):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        state[idx] = sampler.step(state[idx], gen)
        arrived = in_block[state[idx]]
        first[idx[arrived]] = state[idx[arrived]]
        active[idx[arrived]] = False
    assert not active.any()
    counts = np.bincount(first, minlength=6)[:6].astype(float)
    emp = counts[part.members(0)] / reps
    row = trace.rows[2]
    tv = 0.5 * np.abs(emp - row).sum()
    se = np.sqrt(len(row) / (4.0 * reps))
    assert tv <= 3.0 * se


def test_torus_trace_projection_is_lazy_hypercube_walk():
    # the half-lazy renormalized projection of the inner-trace chain is the
    # half-lazy walk on the bit-flip cube, up to barrier leakage
    from mixdecomp.chains import torus_metropolis

    tc = torus_metropolis(3, 3, 7.0, k_trace=1)
    proj = projected_kernel(tc.kernel, tc.pi, tc.partition)
    ll = less_lazy_projection(proj)
    m = 3
    expect = np.zeros((8, 8))
    for z in range(8):
        for b in range(m):
            expect[z, z ^ (1 << b)] = 1.0 / (2 * m)
        expect[z, z] = 0.5
    assert np.abs(ll.rows - expect).max() <= 1e-3
