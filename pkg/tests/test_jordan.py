import numpy as np
import pytest
from hypothesis import given, seed
from hypothesis import strategies as st

from parrep import qops
from parrep.jordan import (jordan_decompose, jordan_measure, pseudoinverse_state, rotate_to_subspace,
                           swap_unitary)

from conftest import seeds

KET0 = np.array([1, 0], dtype=complex)
PLUS = np.array([1, 1], dtype=complex) / np.sqrt(2)


def proj(v):
    v = np.asarray(v, dtype=complex)
    return np.outer(v, v.conj())


def random_pair(rng, d=8, ra=3, rb=3):
    return qops.random_projector(d, ra, rng), qops.random_projector(d, rb, rng)


def commuting_state(d, rng):
    """Random density matrix commuting with d.pa: block diagonal in (pa, 1 - pa)."""
    pa = d.pa
    comp = np.eye(d.dim) - pa
    r = qops.random_density(d.dim, rng)
    out = pa @ r @ pa + comp @ r @ comp
    return out / np.trace(out).real


def test_equal_projectors():
    d = jordan_decompose(proj(KET0), proj(KET0))
    assert d.num_blocks == 2
    assert sorted(d.dims.tolist()) == [1, 1]
    assert 1.0 in d.values.tolist()


def test_single_half_block():
    d = jordan_decompose(proj(KET0), proj(PLUS))
    assert d.num_blocks == 1 and d.dims[0] == 2
    assert abs(d.values[0] - 0.5) < 1e-12


@seed(20)
@given(seeds, st.integers(1, 6), st.integers(1, 6))
def test_reconstruction(s, ra, rb):
    rng = np.random.default_rng(s)
    pa, pb = random_pair(rng, 8, ra, rb)
    d = jordan_decompose(pa, pb)
    total = sum(d.block_projector(j) for j in range(d.num_blocks))
    assert np.linalg.norm(total - np.eye(8)) < 1e-9
    assert np.linalg.norm(d.v1 @ d.v1.conj().T - pa) < 1e-9
    assert np.linalg.norm(d.w1 @ d.w1.conj().T - pb) < 1e-9
    for j in range(d.num_blocks):
        if d.has_v1[j] and d.has_w1[j]:
            assert abs(abs(np.vdot(d.v1[:, j], d.w1[:, j])) ** 2 - d.values[j]) < 1e-9
    sandwich = pa @ pb @ pa
    assert np.linalg.norm(sandwich - (d.v1 * d.values) @ d.v1.conj().T) < 1e-9
    # singular values of pb pa are the square roots of the block values
    sv = np.sort(np.linalg.svd(pb @ pa, compute_uv=False))[::-1][: int(d.has_v1.sum())]
    expect = np.sort(np.sqrt(d.values[d.has_v1]))[::-1]
    assert np.allclose(sv, expect, atol=1e-7)


def test_rejects_non_projector():
    with pytest.raises(ValueError):
        jordan_decompose(np.diag([1, 0.5]), np.eye(2))


def test_jordan_measure_inside_block(rng):
    pa, pb = random_pair(rng)
    d = jordan_decompose(pa, pb)
    j0 = int(np.argmax(d.dims))
    psi = d.v1[:, j0] + d.v0[:, j0]
    for _ in range(20):
        j, post = jordan_measure(d, psi, rng)
        assert j == j0
        assert jordan_measure(d, post, rng)[0] == j


def test_jordan_measure_equal_superposition():
    d = jordan_decompose(np.diag([1, 0, 1, 0]).astype(complex), np.diag([1, 0, 0, 0]).astype(complex))
    psi = np.array([1, 0, 1, 0]) / np.sqrt(2)
    rng = np.random.default_rng(5)
    n = 10_000
    counts = np.zeros(d.num_blocks)
    for _ in range(n):
        counts[jordan_measure(d, psi, rng)[0]] += 1
    hits = counts[counts > 0] / n
    assert len(hits) == 2
    assert np.all(np.abs(hits - 0.5) < 3 * np.sqrt(0.25 / n))
    with pytest.raises(ValueError):
        jordan_measure(d, np.zeros(4), rng)


def test_pseudoinverse_equal_projectors(rng):
    p = qops.random_projector(4, 2, rng)
    d = jordan_decompose(p, p)
    v = p @ qops.random_state_vector(4, rng)
    rho = proj(v / np.linalg.norm(v))
    sigma, _ = pseudoinverse_state(d, rho)
    assert np.linalg.norm(sigma - rho) < 1e-9


def test_pseudoinverse_half_block():
    d = jordan_decompose(proj(KET0), proj(PLUS))
    sigma, _ = pseudoinverse_state(d, proj(d.v1[:, 0]))
    assert np.linalg.norm(sigma - proj(d.w1[:, 0])) < 1e-9
    assert abs(np.trace(d.pa @ sigma).real - 0.5) < 1e-12


@seed(21)
@given(seeds)
def test_pseudoinverse_identities(s):
    rng = np.random.default_rng(s)
    pa, pb = random_pair(rng, 8, 3, 4)
    d = jordan_decompose(pa, pb)
    rho = commuting_state(d, rng)
    sigma, diag = pseudoinverse_state(d, rho)
    e = diag.e_expectation
    assert abs(np.trace(pb @ sigma).real - 1) < 1e-8
    for j in range(d.num_blocks):
        pj = d.block_projector(j)
        want = np.trace(pj @ rho).real / (d.values[j] * e) if d.values[j] > 1e-7 else 0.0
        assert abs(np.trace(pj @ sigma).real - want) < 1e-8
    z = np.trace(d.zero_projector() @ rho).real
    assert abs(np.trace(pa @ sigma).real - (1 - z) / e) < 1e-8
    # the trace-distance item holds as stated inside pa; outside it picks up the weight off pa
    assert diag.td_actual <= diag.td_bound + (1 - np.trace(pa @ rho).real) + 1e-8
    inside = pa @ rho @ pa
    inside /= np.trace(inside).real
    _, diag_in = pseudoinverse_state(d, inside)
    assert diag_in.td_actual <= diag_in.td_bound + 1e-8


def test_pseudoinverse_rejects_noncommuting(rng):
    d = jordan_decompose(*random_pair(rng))
    with pytest.raises(ValueError):
        pseudoinverse_state(d, proj(qops.random_state_vector(8, rng)))


def test_rotate_fixed_inside_pa(rng):
    pa, pb = random_pair(rng)
    d = jordan_decompose(pa, pb)
    v = pa @ qops.random_state_vector(8, rng)
    rho = proj(v / np.linalg.norm(v))
    assert np.linalg.norm(rotate_to_subspace(d, rho) - rho) < 1e-9


def test_rotate_swaps_v0_to_v1(rng):
    d = jordan_decompose(proj(KET0), proj(PLUS))
    out = rotate_to_subspace(d, proj(d.v0[:, 0]))
    assert np.linalg.norm(out - proj(d.v1[:, 0])) < 1e-9


@seed(22)
@given(seeds)
def test_rotate_postconditions(s):
    rng = np.random.default_rng(s)
    pa = qops.random_projector(8, 4, rng)
    pb = qops.random_projector(8, 4, rng)
    d = jordan_decompose(pa, pb)
    rho = commuting_state(d, rng)
    if np.trace(d.zero_projector() @ rho).real > 1e-8:
        with pytest.raises(ValueError):
            rotate_to_subspace(d, rho)
        return
    out = rotate_to_subspace(d, rho)
    e = d.e_operator()
    assert abs(np.trace(e @ out) - np.trace(e @ rho)) < 1e-8
    assert abs(np.trace(pa @ out).real - 1) < 1e-8
    assert qops.trace_distance(rho, out) <= 1 - np.trace(pa @ rho).real + 1e-8
    u = swap_unitary(d)
    assert np.linalg.norm(u.conj().T @ u - np.eye(8)) < 1e-9
