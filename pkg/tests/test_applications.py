import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, seed, settings
from hypothesis import strategies as st

from parrep import qops
from parrep.applications import (CanonicalCommitment, QuantumPredicate, basis_copier, best_cloner,
                                 binding_fidelity, binding_value, blackhole_commitment, cloner_adversary,
                                 combined_amplification, decoupling_fidelity, efi_polarization_params,
                                 flavor_switch, forward_schedule, forwarding_counterexample, hiding_advantage,
                                 money_game, octahedron_states, parallel_commitment, prep_unitary,
                                 random_commitment, random_predicate, serial_mint, switched_xor_state,
                                 universal_cloner, xor_repeat, xor_state)
from parrep.protocol import execute
from parrep.qops import PureState, RegisterLayout

from conftest import seeds


@seed(70)
@given(seeds)
def test_prep_unitary_prepares_state(s):
    rng = np.random.default_rng(s)
    psi = qops.random_state_vector(int(rng.integers(1, 9)), rng)
    u = prep_unitary(psi)
    assert np.allclose(u.conj().T @ u, np.eye(len(psi)), atol=1e-10)
    assert np.allclose(u[:, 0], psi, atol=1e-10)


def test_commitment_validation():
    with pytest.raises(ValueError):
        CanonicalCommitment.from_states(np.ones(4) / 2, np.ones(4) / 2, (2,), (3,))


@seed(71)
@given(seeds, st.integers(1, 3), st.integers(1, 3))
@settings(max_examples=15)
def test_binding_value_three_routes(s, dc, dr):
    rng = np.random.default_rng(s)
    cc = random_commitment(rng, dc, dr)
    rep = binding_value(cc, rng, restarts=2)
    assert abs(rep.executed - rep.fidelity) < 1e-8
    assert rep.searched <= rep.fidelity + 1e-8
    assert rep.searched >= rep.fidelity - 1e-4


def test_flavor_switch_duality_on_200_commitments():
    rng = np.random.default_rng(72)
    for _ in range(200):
        cc = random_commitment(rng, int(rng.integers(1, 4)), int(rng.integers(1, 4)))
        f = binding_fidelity(cc)
        h = hiding_advantage(cc)
        sw = flavor_switch(cc)
        # a delta-binding commitment becomes sqrt(delta)-hiding, and hiding turns into binding
        assert hiding_advantage(sw) <= math.sqrt(f) + 1e-8
        assert abs(hiding_advantage(sw) - math.sqrt(f)) < 1e-7
        assert abs(binding_fidelity(sw) - h ** 2) < 1e-7


def test_flavor_switch_without_flag_needs_orthogonal_states(rng):
    cc = random_commitment(rng, 2, 2)
    with pytest.raises(ValueError):
        flavor_switch(cc, ancilla=False)


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_xor_state_normalized(k):
    rng = np.random.default_rng(73 + k)
    cc = random_commitment(rng, 2, 1 if k == 4 else 2)
    for b in (0, 1):
        assert abs(np.linalg.norm(xor_state(cc, k, b)) - 1) < 1e-10


def test_xor_two_fold_closed_form(rng):
    cc = random_commitment(rng, 2, 3)
    dc, dr = 2, 3
    e = np.eye(2)
    for b in (0, 1):
        want = np.zeros(dc * dc * 4 * dr * dr, dtype=complex)
        for x in itertools.product((0, 1), repeat=2):
            if sum(x) % 2 != b:
                continue
            # (C1, R1, C2, R2) -> (C1, C2, x1, x2, R1, R2)
            t = np.kron(cc.state(x[0]), cc.state(x[1])).reshape(dc, dr, dc, dr)
            t = np.multiply.outer(t, np.kron(e[x[0]], e[x[1]]).reshape(2, 2))
            want += t.transpose(0, 2, 4, 5, 1, 3).reshape(-1)
        assert np.allclose(xor_state(cc, 2, b), want / math.sqrt(2), atol=1e-12)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_double_flavor_switch_gives_xor(k):
    rng = np.random.default_rng(80 + k)
    cc = random_commitment(rng, 2, 2)
    for b in (0, 1):
        a, c = switched_xor_state(cc, k, b), xor_state(cc, k, b)
        assert abs(abs(np.vdot(a, c)) ** 2 - 1) < 1e-10


def test_xor_repeat_layout_and_guard(rng):
    cc = random_commitment(rng, 2, 2)
    x = xor_repeat(cc, 2)
    assert x.commit_dims == (2, 2) and x.reveal_dims == (2, 2, 2, 2)
    with pytest.raises(ValueError):
        xor_repeat(cc, 0)
    p = parallel_commitment(cc, 2)
    assert abs(binding_fidelity(p) - binding_fidelity(cc) ** 2) < 1e-8


# ---------------------------------------------------------------------------
# predicates


@seed(74)
@given(seeds, st.integers(2, 4))
def test_predicate_tensor_square_is_bilinear(s, d):
    rng = np.random.default_rng(s)
    q = random_predicate(rng, d)
    p1 = qops.random_projector(d, int(rng.integers(1, d)), rng)
    p2 = qops.random_projector(d, int(rng.integers(1, d)), rng)
    lhs = q.xor_power(2).advantage(np.kron(p1, p2))
    assert abs(lhs - q.advantage(p1) * q.advantage(p2)) < 1e-10


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_predicate_powers_stay_valid(k):
    rng = np.random.default_rng(90 + k)
    q = random_predicate(rng, 2)
    qk = q.xor_power(k)
    assert abs(np.trace(qk.matrix)) < 1e-10
    assert qk.trace_norm <= 2 + 1e-10
    assert np.linalg.norm(qk.plus @ qk.minus) < 1e-9


def test_predicate_guards(rng):
    with pytest.raises(ValueError):
        QuantumPredicate(np.diag([1.0, 0.0]))
    with pytest.raises(ValueError):
        QuantumPredicate(np.diag([2.0, -2.0]))
    q = random_predicate(rng, 2, balanced=False)
    assert abs(q.trace_norm - 2) < 1e-10
    with pytest.raises(ValueError):
        q.xor_power(2)


def test_predicate_from_states_side_information():
    q = QuantumPredicate.from_states(np.diag([1.0, 0]), np.diag([0, 1.0]))
    p = np.kron(np.diag([1.0, 0]), np.eye(2))
    assert q.advantage(p, np.eye(2) / 2) == pytest.approx(0.5)


# ---------------------------------------------------------------------------
# parameters


def test_efi_example():
    r = math.ceil(math.log(16) / math.log(0.5625 / 0.5))
    assert efi_polarization_params(0.25, 0.75, 0.5, 2) == (r, math.floor(0.25 ** (-0.5 * r) / 2))
    assert efi_polarization_params(0.25, 0.75, 0.5, 2) == (24, 8388608)


@pytest.mark.parametrize("args", [(0.25, 0.75, 0.3, 2), (0.5, 0.6, 1.0, 2), (0.25, 0.75, 0.5, 0), (1.2, 0.9, 1, 2)])
def test_efi_guards(args):
    with pytest.raises(ValueError):
        efi_polarization_params(*args)


def test_combined_amplification():
    out = combined_amplification(4, 100, 3)
    assert out["first_repetitions"] == 12
    assert out["binding_after_first"] <= out["binding_bound"]
    assert out["hiding_after_first"] == pytest.approx(0.12)
    assert out["numerically_verified"] is False
    with pytest.raises(ValueError):
        combined_amplification(4, 10, 3)


# ---------------------------------------------------------------------------
# money


def test_basis_notes_are_clonable():
    mint, v = serial_mint([np.array([1, 0]), np.array([0, 1])])
    game = money_game(mint, v)
    assert execute(game, cloner_adversary(basis_copier(2), 2, 2, 1)).accept_probability == pytest.approx(1)


def test_pauli_notes_cloning_limit():
    mint, v = serial_mint(octahedron_states())
    game = money_game(mint, v)
    uc = execute(game, cloner_adversary(universal_cloner(), 2, 4, 2)).accept_probability
    assert uc == pytest.approx(2 / 3, abs=1e-10)
    val, u = best_cloner(game, np.random.default_rng(5), restarts=2)
    assert val <= 2 / 3 + 1e-6
    assert val >= 2 / 3 - 1e-3
    assert execute(game, cloner_adversary(u, 2, 4, 2)).accept_probability == pytest.approx(val, abs=1e-8)


def test_money_game_guards():
    mint, v = serial_mint(octahedron_states())
    with pytest.raises(ValueError):
        money_game(mint, np.eye(3))
    # a verifier that is not block diagonal in the serial register need not commute across notes
    bad = qops.random_projector(12, 5, np.random.default_rng(0))
    with pytest.raises(ValueError):
        money_game(mint, bad)


# ---------------------------------------------------------------------------
# forwarding


@pytest.mark.parametrize("k", [2, 3, 4, 5, 6])
def test_forwarding_wins_half(k):
    res = forwarding_counterexample(k)
    assert res.win_probability == Fraction(1, 2)
    for bits, wins in res.records:
        assert all(wins) == (sum(bits) % 2 == 1)
        assert all(wins) or not any(wins)


@pytest.mark.parametrize("k", [2, 3, 5])
def test_forward_schedule_uses_each_copy_once(k):
    sched = forward_schedule(k)
    used = [pair for row in sched for pair in row]
    assert len(set(used)) == len(used) == k * (k - 1)
    assert all(src != i for i, row in enumerate(sched) for src, _ in row)


def test_forwarding_guard_and_dict():
    with pytest.raises(ValueError):
        forwarding_counterexample(1)
    d = forwarding_counterexample(2).to_dict()
    assert d["win_fraction"] == "1/2" and len(d["records"]) == 4


# ---------------------------------------------------------------------------
# black hole


def _radiation(amps, dh, dr):
    return PureState(RegisterLayout.of(("H", dh), ("B", 2), ("R", dr)), np.asarray(amps, dtype=complex))


def test_blackhole_decodable():
    # B maximally entangled with R, H in a product state
    amps = np.kron(np.array([1, 0]), np.array([1, 0, 0, 1]) / math.sqrt(2))
    cc = blackhole_commitment(_radiation(amps, 2, 2))
    assert hiding_advantage(cc) < 1e-10
    assert binding_fidelity(cc) == pytest.approx(1)


def test_blackhole_b_entangled_with_h():
    bell = np.array([1, 0, 0, 1]) / math.sqrt(2)
    amps = np.kron(bell, np.array([1, 0]))  # (H, B) Bell pair, R in |0>
    cc = blackhole_commitment(_radiation(amps, 2, 2))
    # rho_HB is a Bell projector against I/4
    assert hiding_advantage(cc) == pytest.approx(0.75)
    assert binding_fidelity(cc) == pytest.approx(0.25)


@seed(75)
@given(seeds)
def test_blackhole_binding_equals_decoupling(s):
    rng = np.random.default_rng(s)
    rad = _radiation(qops.random_state_vector(2 * 2 * 3, rng), 2, 3)
    cc = blackhole_commitment(rad)
    assert abs(binding_fidelity(cc) - decoupling_fidelity(rad)) < 1e-8
