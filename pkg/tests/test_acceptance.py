"""Acceptance criteria 1-11, one test each; every test prints a PASS/FAIL line."""

import itertools
import math
import time

import numpy as np
import pytest

from parrep import qops
from parrep.altmeas import (alternate_distribution, alternate_measure, effjor_batch, effjor_handle,
                            mw_dist_pmf, noisy_spectral_handle)
from parrep.applications import (QuantumPredicate, binding_fidelity, binding_value, flavor_switch,
                                 forwarding_counterexample, hiding_advantage, random_commitment,
                                 random_predicate, xor_repeat, xor_state)
from parrep.compression import (compress_honest, compress_to_three, completeness_bound, compressed_acceptance,
                                halve, lift_adversary, perturb, public_coin_honest, to_public_coin,
                                toy_protocol)
from parrep.instances import forcing_values, planted_instance
from parrep.jordan import jordan_decompose, pseudoinverse_state
from parrep.protocol import execute, parallel_repeat, product_adversary, random_adversary, random_instance
from parrep.reduction import (ReductionParams, amp_nonuniform, amp_uniform, best_advice, prefix_norms,
                              select_index, state_trans)

from conftest import ACCEPTANCE_LINES


def verdict(n: int, ok: bool, detail: str, started: float, limit: float):
    elapsed = time.perf_counter() - started
    ok = bool(ok) and elapsed < limit
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail} ({elapsed:.1f}s, limit {limit:.0f}s)"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


# ---------------------------------------------------------------------------
# 1. product strategies factorize


def test_criterion_01_product_factorization():
    t0 = time.perf_counter()
    worst = 0.0
    count = 0
    for s in range(12):
        rng = np.random.default_rng([1, s])
        p = random_instance(rng, msg_dim=2, work_dim=2)
        a = random_adversary(p, rng, mem_dim=2 + s % 2)
        single = execute(p, a).accept_probability
        for k in range(1, 5):
            val = execute(parallel_repeat(p, k, cap=None), product_adversary(a, k, cap=None),
                          cap=None).accept_probability
            worst = max(worst, abs(val - single ** k))
            count += 1
    verdict(1, worst <= 1e-10, f"{count} (instance, k) pairs, max |p_k - p^k| = {worst:.1e}", t0, 10)


# ---------------------------------------------------------------------------
# 2. non-uniform extraction bound


def test_criterion_02_nonuniform_extraction():
    t0 = time.perf_counter()
    mu = 0.05
    worst = math.inf
    for s in range(50):
        rng = np.random.default_rng([2, s])
        k = 2 + s % 2
        delta = (0.7, 0.8, 0.9)[s % 3]
        lams = forcing_values(delta, k) if s % 2 else tuple(rng.uniform(delta, 1, size=k))
        inst = planted_instance(lams, rng, mem_dim=2, entangle=bool(s % 4 == 0))
        g = inst.games
        i = select_index(prefix_norms(g), delta, k)
        aux = best_advice(g, i, delta)
        _, rep = amp_nonuniform(inst.base, inst.adversary, k, i, aux, mu, delta, 1.0, games=g,
                                build_adversary=False)
        worst = min(worst, rep.success - (1 - 2 * mu) ** 2 * delta)
    verdict(2, worst >= -1e-10, f"50 planted instances, min(success - (1-2mu)^2 delta) = {worst:.4f}", t0, 300)


# ---------------------------------------------------------------------------
# 3. alternating-measurement law


def _mixture_moments(values, weights, T):
    """Exact means of (#equal adjacent pairs, #ones) under sum_j w_j MWDist(p_j, T)."""
    eq = ones = 0.0
    for p, w in zip(values, weights):
        eq += w * (T - 1) * p
        ones += w * sum(0.5 * (1 + (2 * p - 1) ** i) for i in range(1, T + 1))
    return eq, ones


def test_criterion_03_alternating_law():
    t0 = time.perf_counter()
    worst_tv = 0.0
    for s in range(12):
        rng = np.random.default_rng([3, s])
        dim = int(rng.integers(2, 17))
        T = 1 + s % 6
        pa = qops.random_projector(dim, int(rng.integers(1, dim)), rng)
        pb = qops.random_projector(dim, int(rng.integers(1, dim)), rng)
        d = jordan_decompose(pa, pb)
        v = pb @ qops.random_state_vector(dim, rng)
        v /= np.linalg.norm(v)
        w = np.abs(d.w1.conj().T @ v) ** 2
        ref = {b: 0.0 for b in itertools.product((0, 1), repeat=T)}
        for j in range(d.num_blocks):
            if w[j] > 1e-15:
                for b, pr in mw_dist_pmf(d.values[j], T).items():
                    ref[b] += w[j] * pr
        dist = alternate_distribution(pa, pb, v, T)
        worst_tv = max(worst_tv, 0.5 * sum(abs(dist[b] - ref[b]) for b in ref))

    rng = np.random.default_rng(33)
    dim, T, n = 4, 50, 100_000
    pa, pb = qops.random_projector(dim, 2, rng), qops.random_projector(dim, 2, rng)
    d = jordan_decompose(pa, pb)
    v = pb @ qops.random_state_vector(dim, rng)
    v /= np.linalg.norm(v)
    w = np.abs(d.w1.conj().T @ v) ** 2
    eq_exact, ones_exact = _mixture_moments(d.values, w, T)
    eq = np.empty(n)
    ones = np.empty(n)
    for t in range(n):
        bits = np.array(alternate_measure(pa, pb, v, T, rng)[0].bits)
        eq[t] = np.sum(bits[1:] == bits[:-1])
        ones[t] = bits.sum()
    z_eq = abs(eq.mean() - eq_exact) / (eq.std(ddof=1) / math.sqrt(n))
    z_ones = abs(ones.mean() - ones_exact) / (ones.std(ddof=1) / math.sqrt(n))
    ok = worst_tv <= 1e-9 and z_eq <= 3 and z_ones <= 3
    verdict(3, ok, f"exact TV {worst_tv:.1e}; Monte-Carlo z-scores {z_eq:.2f} (repeats), {z_ones:.2f} (ones)",
            t0, 60)


# ---------------------------------------------------------------------------
# 4. EffJor almost-projectivity


@pytest.mark.parametrize("eps,delta", [(0.1, 0.05), (0.05, 0.01)])
def test_criterion_04_effjor_almost_projective(eps, delta):
    t0 = time.perf_counter()
    bad = total = 0
    for s in range(10):
        rng = np.random.default_rng([4, s])
        dim = int(rng.integers(2, 9))
        pa = qops.random_projector(dim, max(1, dim // 2), rng)
        pb = qops.random_projector(dim, int(rng.integers(1, dim)), rng)
        d = jordan_decompose(pa, pb)
        rho = pa @ qops.random_density(dim, rng) @ pa
        rho /= np.trace(rho).real
        res = effjor_batch(d.values, d.a_weights(rho), eps, delta, 1000, seed=s)
        first = ~np.isnan(res.outcomes[:, 0])
        o = res.outcomes[first]
        # a second run that aborts counts as a disagreement
        diff = np.where(np.isnan(o[:, 1]), np.inf, np.abs(o[:, 0] - o[:, 1]))
        bad += int((diff > eps).sum())
        total += int(first.sum())
    freq = bad / total
    sigma = math.sqrt(delta * (1 - delta) / total)
    verdict(4, freq <= delta + 3 * sigma,
            f"(eps, delta) = ({eps}, {delta}): {total} double runs, Pr[|p - p'| > eps] = {freq:.4f} "
            f"<= {delta + 3 * sigma:.4f}", t0, 300)


# ---------------------------------------------------------------------------
# 5. StateTrans event bounds


def _below(m, sigma, thr):
    diag = np.einsum("ic,ij,jc->c", m.basis.conj(), sigma, m.basis).real
    return float((diag @ m.amplitudes ** 2)[m.values < thr].sum())


def _state_trans_configs():
    out = []
    for s, (eps, delta, tau) in enumerate([(0.05, 1e-6, 0.9), (0.05, 0.01, 0.2)]):
        rng = np.random.default_rng([5, s])
        m0 = noisy_spectral_handle(np.diag([0.9, 0.8, 0.7, 0.6, 0.3, 0.1]), eps)
        m1 = noisy_spectral_handle(np.diag(rng.permutation([0.2, 0.7, 0.4, 0.9, 0.5, 0.6])), eps)
        x = qops.random_state_vector(6, rng) * np.array([1, 1, 1, 1, 0.2, 0.1])
        out.append(("commuting", m0, m1, x / np.linalg.norm(x), 0.6, 0.5, eps, delta, tau))
    for s, (eps, delta, tau) in enumerate([(0.2, 1e-6, 0.9), (0.1, 0.05, 0.3)]):
        rng = np.random.default_rng([50, s])
        pa = qops.random_projector(6, 3, rng)
        m0 = effjor_handle(pa, qops.random_projector(6, 3, rng), eps, delta)
        m1 = effjor_handle(pa, qops.random_projector(6, 2, rng), eps, delta)
        x = pa @ qops.random_state_vector(6, rng)
        out.append(("random", m0, m1, x / np.linalg.norm(x), 0.2, 0.4, eps, delta, tau))
    return out


@pytest.mark.parametrize("config", range(4))
def test_criterion_05_state_trans(config):
    t0 = time.perf_counter()
    kind, m0, m1, x, alpha, beta, eps, delta, tau = _state_trans_configs()[config]
    n = 1000
    K = math.ceil(2 / tau * math.log(1 / delta))
    gamma = _below(m0, np.outer(x, x.conj()), alpha)
    freq = np.zeros(4)
    for t in range(n):
        r = state_trans(m0, m1, x, beta, eps, delta, tau, np.random.default_rng([5, config, t]))
        if r.c is None:
            freq[0] += 1
        elif r.c == 0:
            freq[1] += _below(m1, r.sigma, beta - eps)
        else:
            freq[2] += _below(m0, r.sigma, alpha - 2 * K * eps)
            freq[3] += 1 - _below(m1, r.sigma, beta + 1e-12)
    freq /= n
    bounds = np.array([4 * K * math.sqrt(delta), delta, gamma + math.sqrt(tau + eps + delta), tau + eps + delta])
    slack = 3 * np.sqrt(np.clip(bounds, 0, 1) * (1 - np.clip(bounds, 0, 1)) / n)
    ok = bool(np.all(freq <= bounds + slack + 1e-12))
    detail = ", ".join(f"{f:.3g}<={b:.3g}" for f, b in zip(freq, bounds))
    verdict(5, ok, f"{kind} (eps, delta, tau) = ({eps}, {delta}, {tau}), K = {K}: {detail}", t0, 600)


# ---------------------------------------------------------------------------
# 6. uniform pipeline


def test_criterion_06_uniform_pipeline():
    t0 = time.perf_counter()
    delta, eps, k = 0.9, 0.2, 2
    prm = ReductionParams.practical(k, delta, eps)
    n = 100
    aborts = 0
    worst = math.inf
    for s in range(n):
        rng = np.random.default_rng([6, s])
        lams = (delta,) * k if s % 2 else tuple(rng.uniform(delta, 1, size=k))
        inst = planted_instance(lams, rng, msg_dim=2)
        _, rep = amp_uniform(inst.base, inst.adversary, prm, rng, games=inst.games)
        if rep.aborted is not None:
            aborts += 1
        else:
            worst = min(worst, rep.success)
    budget = prm.eps0 / 5  # copy exhaustion and transition aborts, eps0/10 each
    sigma = math.sqrt(budget * (1 - budget) / n)
    ok = worst >= delta - eps - 1e-10 and aborts / n <= budget + 3 * sigma
    verdict(6, ok, f"100 seeds: min success on runs {worst:.4f} >= {delta - eps}, "
                   f"abort frequency {aborts / n:.3f} <= {budget + 3 * sigma:.3f}", t0, 1800)


# ---------------------------------------------------------------------------
# 7. compression completeness


def test_criterion_07_compression_completeness():
    t0 = time.perf_counter()
    err_halve = err_coin = 0.0
    margin = math.inf
    for s, eps in enumerate([0.0, 0.05, 0.2, 0.4]):
        rng = np.random.default_rng([7, s])
        p, h = toy_protocol(rng, rounds=2, eps=eps)
        c = execute(p, h).accept_probability
        ca, _ = compress_honest(p, h)
        err_halve = max(err_halve, abs(compressed_acceptance(halve(p), ca).total - (1 - (1 - c) / 2)))
        for rounds in (2, 4):
            q, hq = toy_protocol(rng, rounds=rounds, eps=eps, mem_dim=1)
            cq = execute(q, hq).accept_probability
            chain = compress_to_three(q, hq)
            val = execute(chain.final, chain.honest).accept_probability
            margin = min(margin, val - completeness_bound(cq, q.message_count))
        p3, h3 = toy_protocol(rng, rounds=1, eps=eps)
        c3 = execute(p3, h3).accept_probability
        _, adv = public_coin_honest(p3, h3)
        err_coin = max(err_coin, abs(execute(to_public_coin(p3).protocol, adv).accept_probability
                                     - (1 - (1 - c3) / 2)))
    ok = err_halve <= 1e-10 and err_coin <= 1e-10 and margin >= -1e-10
    verdict(7, ok, f"halving error {err_halve:.1e}, public-coin error {err_coin:.1e}, "
                   f"min margin over 1 - 2(1-c)/(m-1) {margin:.4f}", t0, 60)


# ---------------------------------------------------------------------------
# 8. compression soundness lift


def test_criterion_08_soundness_lift():
    t0 = time.perf_counter()
    reports = []
    s = 0
    while len(reports) < 50:
        rng = np.random.default_rng([8, s])
        rounds = 1 + s % 2
        p, h = toy_protocol(rng, rounds=rounds, eps=float(rng.uniform(0, 0.04)))
        if rounds == 1:
            ca, _ = public_coin_honest(p, h)
            cp = to_public_coin(p)
        else:
            ca, _ = compress_honest(p, h)
            cp = halve(p)
        rep = lift_adversary(cp, perturb(ca, float(rng.uniform(0, 0.2)), rng))
        s += 1
        if rep.eps <= 0.05:
            reports.append(rep)
    failed = [name for r in reports for name, ok in r.checks().items() if not ok]
    executed = max(abs(r.executed - r.conditional) for r in reports)
    max_eps = max(r.eps for r in reports)
    ok = not failed and executed <= 1e-8
    verdict(8, ok, f"50 adversaries (eps up to {max_eps:.3f}, {s} sampled): failed checks {sorted(set(failed))}, "
                   f"executed vs analytic {executed:.1e}", t0, 300)


# ---------------------------------------------------------------------------
# 9. forwarding counterexample


def test_criterion_09_counterexample():
    t0 = time.perf_counter()
    probs = {k: forwarding_counterexample(k).win_probability for k in range(2, 7)}
    ok = all(v == 0.5 for v in probs.values())
    verdict(9, ok, "win probabilities " + ", ".join(f"k={k}: {v}" for k, v in probs.items()), t0, 1)


# ---------------------------------------------------------------------------
# 10. applications


def test_criterion_10_applications():
    t0 = time.perf_counter()
    rng = np.random.default_rng(10)
    norm_err = 0.0
    for k in range(1, 5):
        cc = random_commitment(rng, 2, 1 if k == 4 else 2)
        x = xor_repeat(cc, k)
        norm_err = max(norm_err, *(abs(np.linalg.norm(x.state(b)) - 1) for b in (0, 1)))
    cc = random_commitment(rng, 2, 2)
    closed = 0.0
    for b in (0, 1):
        want = 0
        for x in itertools.product((0, 1), repeat=2):
            if sum(x) % 2 == b:
                t = np.kron(cc.state(x[0]), cc.state(x[1])).reshape(2, 2, 2, 2)
                flag = np.zeros((2, 2))
                flag[x] = 1
                want = want + np.multiply.outer(t, flag).transpose(0, 2, 4, 5, 1, 3).reshape(-1)
        closed = max(closed, float(np.linalg.norm(xor_state(cc, 2, b) - want / math.sqrt(2))))
    switch = -math.inf
    for _ in range(200):
        c = random_commitment(rng, int(rng.integers(1, 4)), int(rng.integers(1, 4)))
        switch = max(switch, hiding_advantage(flavor_switch(c)) - math.sqrt(binding_fidelity(c)))
    pred = 0.0
    for k in range(1, 5):
        q = random_predicate(rng, 2).xor_power(k)
        pred = max(pred, abs(np.trace(q.matrix)), q.trace_norm - 2, float(np.linalg.norm(q.plus @ q.minus)))
        QuantumPredicate(q.matrix)
    uhl = 0.0
    for _ in range(100):
        c = random_commitment(rng, int(rng.integers(1, 4)), int(rng.integers(1, 4)))
        rep = binding_value(c)
        uhl = max(uhl, abs(rep.executed - rep.fidelity))
    ok = norm_err < 1e-10 and closed < 1e-10 and switch <= 1e-8 and pred < 1e-9 and uhl <= 1e-8
    verdict(10, ok, f"xor norm {norm_err:.1e}, closed form {closed:.1e}, hiding - sqrt(delta) max {switch:.1e}, "
                    f"predicate {pred:.1e}, binding vs Uhlmann {uhl:.1e}", t0, 300)


# ---------------------------------------------------------------------------
# 11. foundations


def test_criterion_11_foundations():
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    n = 1000
    fvg = bures = gentle = recon = pinv = 0.0
    for _ in range(n):
        d = int(rng.integers(2, 7))
        a, b, c = (qops.random_density(d, rng) for _ in range(3))
        td, f = qops.trace_distance(a, b), qops.fidelity(a, b)
        fvg = max(fvg, (1 - math.sqrt(f)) - td, td - math.sqrt(max(0.0, 1 - f)))
        bures = max(bures, qops.bures_sq(a, c) - 2 * (qops.bures_sq(a, b) + qops.bures_sq(b, c)))
        psi = qops.random_state_vector(d, rng)
        lam = qops.random_projector(d, int(rng.integers(1, d)), rng)
        q = float(np.vdot(psi, lam @ psi).real)
        post = lam @ psi / math.sqrt(q)
        gentle = max(gentle, abs(qops.fidelity(np.outer(post, post.conj()), np.outer(psi, psi.conj())) - q))
    for _ in range(n):
        dim = int(rng.integers(2, 9))
        pa = qops.random_projector(dim, int(rng.integers(1, dim)), rng)
        pb = qops.random_projector(dim, int(rng.integers(1, dim)), rng)
        dec = jordan_decompose(pa, pb)
        total = sum(dec.block_projector(j) for j in range(dec.num_blocks))
        recon = max(recon, np.linalg.norm(total - np.eye(dim)), np.linalg.norm(dec.v1 @ dec.v1.conj().T - pa),
                    np.linalg.norm(dec.w1 @ dec.w1.conj().T - pb),
                    np.linalg.norm(pa @ pb @ pa - (dec.v1 * dec.values) @ dec.v1.conj().T))
        rho = pa @ qops.random_density(dim, rng) @ pa
        rho /= np.trace(rho).real
        sigma, diag = pseudoinverse_state(dec, rho)
        e = diag.e_expectation
        errs = [abs(np.trace(pb @ sigma).real - 1)]
        for j in range(dec.num_blocks):
            want = np.trace(dec.block_projector(j) @ rho).real / (dec.values[j] * e) if dec.values[j] > 1e-7 else 0
            errs.append(abs(np.trace(dec.block_projector(j) @ sigma).real - want))
        z = np.trace(dec.zero_projector() @ rho).real
        errs.append(abs(np.trace(pa @ sigma).real - (1 - z) / e))
        errs.append(max(0.0, diag.td_actual - diag.td_bound))
        pinv = max(pinv, *errs)
    ok = fvg <= 1e-9 and bures <= 1e-9 and gentle <= 1e-9 and recon < 1e-9 and pinv <= 1e-8
    verdict(11, ok, f"{n} trials each: FvdG {fvg:.1e}, Bures {bures:.1e}, gentle {gentle:.1e}, "
                    f"Jordan {recon:.1e}, pseudoinverse {pinv:.1e}", t0, 120)
