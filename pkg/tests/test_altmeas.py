import itertools

import numpy as np
import pytest
from hypothesis import given, seed, settings
from hypothesis import strategies as st
from scipy import stats
from scipy.signal import fftconvolve

from parrep import qops
from parrep.altmeas import (alternate_distribution, alternate_measure, dilate, dilated_value, effjor,
                            effjor_batch, effjor_handle, effjor_outcome_pmf, effjor_schedule,
                            mw_dist_pmf, mw_dist_sample, noisy_spectral_handle, num_reps)
from parrep.jordan import jordan_decompose

from conftest import seeds


def test_mw_dist_extremes(rng):
    assert mw_dist_sample(1.0, 6, rng).bits == (1,) * 6
    assert mw_dist_sample(0.0, 6, rng).bits == (0, 1, 0, 1, 0, 1)
    with pytest.raises(ValueError):
        mw_dist_sample(1.5, 3, rng)


def test_num_reps_examples():
    assert num_reps((1, 1, 1, 1)) == 1
    assert num_reps((1, 0, 1, 0)) == 0
    assert num_reps((1, 1, 0, 0, 1)) == 0.5
    with pytest.raises(ValueError):
        num_reps((1,))


def test_num_reps_mean_is_p():
    rng = np.random.default_rng(3)
    p, T, n = 0.3, 8, 100_000
    vals = np.array([num_reps((1,) + mw_dist_sample(p, T, rng).bits) for _ in range(n)])
    assert abs(vals.mean() - p) <= 3 * vals.std() / np.sqrt(n)


@seed(30)
@given(st.floats(0, 1), st.integers(1, 8))
def test_mw_pmf_normalized(p, T):
    assert abs(sum(mw_dist_pmf(p, T).values()) - 1) < 1e-12


def test_alternate_measure_certain_block(rng):
    pa = np.diag([1, 0, 0]).astype(complex)
    pb = pa.copy()
    # a p = 1 block: w1 = v1 = |0>
    trace, _ = alternate_measure(pa, pb, np.array([1, 0, 0]), 7, rng)
    assert trace.bits == (1,) * 7


def test_half_block_two_steps():
    pa = np.diag([1, 0]).astype(complex)
    pb = np.full((2, 2), 0.5, dtype=complex)
    d = jordan_decompose(pa, pb)
    dist = alternate_distribution(pa, pb, d.w1[:, 0], 2)
    ref = mw_dist_pmf(0.5, 2)
    for bits in itertools.product((0, 1), repeat=2):
        assert abs(dist[bits] - ref[bits]) < 1e-12


def mixture(d, psi, T):
    """Expected law for psi inside pb: sum_j |<w1_j|psi>|^2 MWDist(p_j, T)."""
    w = np.abs(d.w1.conj().T @ psi) ** 2
    out = {bits: 0.0 for bits in itertools.product((0, 1), repeat=T)}
    for j in range(d.num_blocks):
        if w[j] < 1e-15:
            continue
        for bits, pr in mw_dist_pmf(d.values[j], T).items():
            out[bits] += w[j] * pr
    return out


@seed(31)
@given(seeds, st.integers(1, 6), st.integers(2, 16))
@settings(max_examples=40)
def test_exact_distribution_matches_mixture(s, T, dim):
    rng = np.random.default_rng(s)
    pa = qops.random_projector(dim, int(rng.integers(1, dim)), rng)
    pb = qops.random_projector(dim, int(rng.integers(1, dim)), rng)
    d = jordan_decompose(pa, pb)
    v = pb @ qops.random_state_vector(dim, rng)
    v /= np.linalg.norm(v)
    dist = alternate_distribution(pa, pb, v, T)
    ref = mixture(d, v, T)
    tv = 0.5 * sum(abs(dist[b] - ref[b]) for b in ref)
    assert tv <= 1e-9


def test_exact_mode_limit(rng):
    with pytest.raises(ValueError):
        alternate_distribution(np.eye(2), np.eye(2), np.array([1, 0]), 13)


def test_dilation_maps_values():
    pa = np.diag([1, 0]).astype(complex)
    for p in (0.0, 0.3, 1.0):
        b = np.array([np.sqrt(p), np.sqrt(1 - p)], dtype=complex)
        qa, qb = dilate(pa, np.outer(b, b.conj()))
        d = jordan_decompose(qa, qb)
        assert np.any(np.abs(d.values[d.has_v1] - dilated_value(p)) < 1e-9)


def test_schedules():
    h = effjor_schedule(0.1, 0.05)
    s = effjor_schedule(0.1, 0.05, "sketch")
    assert s.T == 2 * int(np.ceil(np.log(1 / 0.05) / 0.01))
    assert h.T > s.T
    assert h.kappa == int(np.ceil(3 * np.log2(2 / 0.05)))
    with pytest.raises(ValueError):
        effjor_schedule(0.0, 0.1)


def test_effjor_expectation_on_eigenstate():
    rng = np.random.default_rng(7)
    pa = np.diag([1, 0]).astype(complex)
    p = 0.6
    b = np.array([np.sqrt(p), np.sqrt(1 - p)], dtype=complex)
    pb = np.outer(b, b.conj())
    eps, delta = 0.3, 0.2
    n = 300
    outs = np.array([effjor(pa, pb, np.diag([1, 0]), eps, delta, rng).outcome for _ in range(n)])
    assert abs(outs.mean() - p) <= 3 * outs.std() / np.sqrt(n) + 1e-12
    # block-sampled model has the same mean
    batch = effjor_batch(np.array([p]), np.array([1.0]), eps, delta, 10_000, seed=1, runs=1)
    o = batch.outcomes[:, 0]
    assert abs(o.mean() - p) <= 3 * o.std() / np.sqrt(o.size)


def test_effjor_identity_second_projector(rng):
    pa = np.diag([1, 0, 0]).astype(complex)
    res = effjor(pa, np.eye(3), np.diag([1, 0, 0]), 0.3, 0.2, rng)
    assert abs(res.outcome - 1.0) <= 0.3
    T, kappa = effjor_schedule(0.3, 0.2)
    assert res.applications <= T + 2 * kappa + 1


def test_effjor_abort_outside_first_projector(rng):
    pa = np.diag([1, 0]).astype(complex)
    res = effjor(pa, np.eye(2), np.diag([0, 1]), 0.3, 0.2, rng)
    assert res.aborted and res.outcome is None


def test_effjor_step_law_matches_batch_model():
    # literal step-by-step runs and the block-sampled model give the same outcome distribution
    rng = np.random.default_rng(9)
    pa = np.diag([1, 1, 0, 0]).astype(complex)
    pb = qops.random_projector(4, 2, rng)
    d = jordan_decompose(pa, pb)
    rho = np.diag([0.5, 0.5, 0, 0]).astype(complex)
    eps, delta = 0.4, 0.3
    n = 400
    lit = np.array([effjor(pa, pb, rho, eps, delta, rng).outcome for _ in range(n)])
    support, pmf = effjor_outcome_pmf(d.values, d.a_weights(rho), eps, delta)
    mean = float(support @ pmf)
    sd = float(np.sqrt(pmf @ (support - mean) ** 2))
    assert abs(lit.mean() - mean) <= 3 * sd / np.sqrt(n)
    assert abs(mean - np.trace(pb @ rho).real) < 1e-9


def pair_disagreement(values, weights, eps, delta, schedule):
    """Exact probability that two EffJor runs on the same block differ by more than eps."""
    T, _ = effjor_schedule(eps, delta, schedule)
    s = np.arange(T + 1)
    total = 0.0
    lags = np.arange(-T, T + 1)
    for p, w in zip(values, weights):
        pmf = stats.binom.pmf(s, T, float(dilated_value(p)))
        diff = np.clip(fftconvolve(pmf, pmf[::-1]), 0, None)  # law of s - s'
        total += w * float(diff[np.abs(lags) * 4 / T > eps].sum())
    return total


@seed(32)
@given(st.floats(0, 1), st.sampled_from([(0.1, 0.05), (0.05, 0.01), (0.2, 0.1)]))
def test_hoeffding_schedule_is_almost_projective(p, pair):
    eps, delta = pair
    assert pair_disagreement([p], [1.0], eps, delta, "hoeffding") <= delta


def test_sketch_schedule_can_violate():
    eps, delta = 0.1, 0.05
    worst = max(pair_disagreement([p], [1.0], eps, delta, "sketch") for p in np.linspace(0, 1, 21))
    assert worst > delta


def test_handle_matches_outcome_pmf(rng):
    pa = qops.random_projector(6, 3, rng)
    pb = qops.random_projector(6, 2, rng)
    d = jordan_decompose(pa, pb)
    h = effjor_handle(pa, pb, 0.2, 0.1, decomposition=d, trim=0.0)
    v = pa @ qops.random_state_vector(6, rng)
    v /= np.linalg.norm(v)
    probs = h.probabilities(v)
    support, pmf = effjor_outcome_pmf(d.values, d.a_weights(v), 0.2, 0.1)
    idx = np.searchsorted(support, h.values[:-1])
    assert np.allclose(support[idx], h.values[:-1])
    assert np.allclose(probs[:-1], pmf[idx], atol=1e-12)
    assert abs(pmf.sum() - pmf[idx].sum()) < 1e-12
    assert probs[-1] < 1e-12


def test_handle_reflection_is_involution(rng):
    pa = qops.random_projector(4, 2, rng)
    pb = qops.random_projector(4, 2, rng)
    h = effjor_handle(pa, pb, 0.3, 0.2)
    z = rng.normal(size=(4, h.num_outcomes)) + 0j
    assert np.allclose(h.reflect(h.reflect(z)), z)
    total = h.project(z, 0.5, "geq") + h.project(z, 0.5, "lt")
    assert np.allclose(total, z)


def test_noisy_spectral_handle_is_projective(rng):
    h = qops.random_density(5, rng)
    m = noisy_spectral_handle(h, 0.05)
    x = qops.random_state_vector(5, rng)
    for _ in range(50):
        a, post = m.measure(x, rng)
        b, _ = m.measure(post, rng)
        assert abs(a - b) <= 0.05 + 1e-12
