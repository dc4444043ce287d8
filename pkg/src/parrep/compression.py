"""Round halving, public-coin compilation, honest-prover construction and adversary lifting.

Compressed protocols are built on uniform sources: every message register
has one dimension mu and every challenger workspace one dimension omega, each
a single register.  `uniformize` pads an arbitrary single-register protocol
to that shape.  The coin is qubit 0 = heads, 1 = tails; the challenger keeps
it and sends a copy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import qops
from .protocol import (Adversary, Challenger, ProtocolInstance, execute, labels_of, parse_label)
from .qops import OperatorMatrix, PureState, RegisterLayout

HEADS, TAILS = 0, 1


# ---------------------------------------------------------------------------
# flattening and padding


def _single(layout: RegisterLayout, kind: str, rnd: int) -> list[str]:
    return list(labels_of(layout, kind, rnd))


@dataclass(frozen=True)
class FlatProtocol:
    """Rounds as matrices in (message, workspace) order, with register dimensions."""

    rounds: tuple[np.ndarray, ...]
    decision: np.ndarray
    m: tuple[int, ...]  # M_0..M_r
    rr: tuple[int, ...]  # R_0..R_{r-1}
    w: tuple[int, ...]  # W_0..W_r
    projective: bool

    @property
    def num_rounds(self) -> int:
        return len(self.rounds)


def flatten_protocol(p: ProtocolInstance) -> FlatProtocol:
    ch = p.challenger
    mats, m, rr, w = [], [], [], []
    for i, c in enumerate(ch.rounds):
        mi, wi = _single(c.in_layout, "M", i), _single(c.in_layout, "W", i)
        ri, wo = _single(c.out_layout, "R", i), _single(c.out_layout, "W", i + 1)
        op = qops.reorder_operator(c, mi + wi, ri + wo)
        mats.append(op.entries)
        m.append(c.in_layout.select(mi).total_dim)
        rr.append(c.out_layout.select(ri).total_dim)
        w.append(c.in_layout.select(wi).total_dim)
    r = ch.num_rounds
    d = ch.decision
    md, wd = _single(d.in_layout, "M", r), _single(d.in_layout, "W", r)
    dec = qops.reorder_operator(d, md + wd, md + wd).entries
    m.append(d.in_layout.select(md).total_dim)
    w.append(d.in_layout.select(wd).total_dim)
    return FlatProtocol(tuple(mats), dec, tuple(m), tuple(rr), tuple(w), ch.projective)


def _flat_adversary(p: ProtocolInstance, a: Adversary) -> tuple[list[np.ndarray], list[int], np.ndarray]:
    """Adversary steps as matrices in (memory, message) order, memory dims a_0..a_{r+1}, advice."""
    mats, dims = [], []
    adv_in = list(a.advice.layout.labels)
    u0 = a.unitaries[0]
    mem1 = _single(u0.out_layout, "A", 1)
    m0 = _single(u0.out_layout, "M", 0)
    mats.append(qops.reorder_operator(u0, adv_in, mem1 + m0).entries)
    dims.append(a.advice.layout.total_dim)
    dims.append(u0.out_layout.select(mem1).total_dim)
    for i, u in enumerate(a.unitaries[1:], start=1):
        mi = _single(u.in_layout, "A", i)
        ri = _single(u.in_layout, "R", i - 1)
        mo = _single(u.out_layout, "A", i + 1)
        msg = _single(u.out_layout, "M", i)
        mats.append(qops.reorder_operator(u, mi + ri, mo + msg).entries)
        dims.append(u.out_layout.select(mo).total_dim)
    return mats, dims, a.advice.amplitudes


def _embed_index(dims: Sequence[int], big: Sequence[int]) -> np.ndarray:
    """Flat indices of the sub-box prod(range(dims)) inside prod(range(big))."""
    grids = np.meshgrid(*[np.arange(d) for d in dims], indexing="ij")
    return np.ravel_multi_index(tuple(g.ravel() for g in grids), tuple(big))


def _extend(u: np.ndarray, idx_in: np.ndarray, idx_out: np.ndarray, n: int) -> np.ndarray:
    """Unitary on C^n acting as u from span(idx_in) to span(idx_out) and matching the complements in order."""
    out = np.zeros((n, n), dtype=complex)
    out[np.ix_(idx_out, idx_in)] = u
    ci = np.setdiff1d(np.arange(n), idx_in)
    co = np.setdiff1d(np.arange(n), idx_out)
    out[co, ci] = 1.0
    return out


def _uniform_protocol(flat: FlatProtocol, mu: int, omega: int) -> ProtocolInstance:
    rounds = []
    for i, c in enumerate(flat.rounds):
        idx_in = _embed_index((flat.m[i], flat.w[i]), (mu, omega))
        idx_out = _embed_index((flat.rr[i], flat.w[i + 1]), (mu, omega))
        u = _extend(c, idx_in, idx_out, mu * omega)
        rounds.append(OperatorMatrix(RegisterLayout.of((f"M{i}", mu), (f"W{i}", omega)),
                                     RegisterLayout.of((f"R{i}", mu), (f"W{i + 1}", omega)), u, "unitary"))
    r = flat.num_rounds
    idx = _embed_index((flat.m[r], flat.w[r]), (mu, omega))
    dec = np.zeros((mu * omega,) * 2, dtype=complex)
    dec[np.ix_(idx, idx)] = flat.decision
    lay = RegisterLayout.of((f"M{r}", mu), (f"W{r}", omega))
    kind = "projector" if flat.projective else "povm_element"
    return ProtocolInstance.from_challenger(Challenger(tuple(rounds), OperatorMatrix(lay, lay, dec, kind)))


def _uniform_adversary(p: ProtocolInstance, a: Adversary, mu: int, flat: FlatProtocol) -> Adversary:
    mats, dims, advice = _flat_adversary(p, a)
    big = max(dims[1:])
    a0_lay = RegisterLayout.of(("A0", big * mu))
    idx_in = _embed_index((dims[0],), (big * mu,))
    idx_out = _embed_index((dims[1], flat.m[0]), (big, mu))
    us = [OperatorMatrix(a0_lay, RegisterLayout.of(("A1", big), ("M0", mu)),
                         _extend(mats[0], idx_in, idx_out, big * mu), "unitary")]
    for i in range(1, len(mats)):
        idx_in = _embed_index((dims[i], flat.rr[i - 1]), (big, mu))
        idx_out = _embed_index((dims[i + 1], flat.m[i]), (big, mu))
        us.append(OperatorMatrix(RegisterLayout.of((f"A{i}", big), (f"R{i - 1}", mu)),
                                 RegisterLayout.of((f"A{i + 1}", big), (f"M{i}", mu)),
                                 _extend(mats[i], idx_in, idx_out, big * mu), "unitary"))
    adv = np.zeros(big * mu, dtype=complex)
    adv[: dims[0]] = advice
    return Adversary(tuple(us), PureState(a0_lay, adv))


def uniform_dims(p: ProtocolInstance) -> tuple[int, int]:
    flat = flatten_protocol(p)
    return max(flat.m + flat.rr), max(flat.w)


def uniformize(p: ProtocolInstance, adversaries: Sequence[Adversary] = ()
               ) -> tuple[ProtocolInstance, list[Adversary]]:
    """Pad every message to one dimension mu and every workspace to one dimension omega.

    Each round acts as before on the embedded registers and permutes the
    padding; honest executions keep their acceptance probability exactly.
    Adversaries get a single memory register of the largest memory dimension.
    """
    flat = flatten_protocol(p)
    mu, omega = max(flat.m + flat.rr), max(flat.w)
    pu = _uniform_protocol(flat, mu, omega)
    return pu, [_uniform_adversary(p, a, mu, flat) for a in adversaries]


# ---------------------------------------------------------------------------
# compressed protocols


def _coin_prep() -> np.ndarray:
    """Hadamard on the coin then CNOT onto the copy, in (coin, copy) order."""
    h = np.kron(np.array([[1, 1], [1, -1]]) / np.sqrt(2), np.eye(2))
    cnot = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]])
    return cnot @ h


def _controlled(blocks: Sequence[np.ndarray]) -> np.ndarray:
    """sum_c |c><c| (x) blocks[c] with the coin as the leading factor."""
    n = blocks[0].shape[0]
    out = np.zeros((2 * n, 2 * blocks[0].shape[1]), dtype=complex)
    for c, b in enumerate(blocks):
        out[c * n:(c + 1) * n, c * b.shape[1]:(c + 1) * b.shape[1]] = b
    return out


def _move_coin(u: np.ndarray, a: int, b: int, c: int, d: int) -> np.ndarray:
    """Reorder a (coin, x, y) -> (coin, X, Y) block-controlled map to (x, coin, y) -> (X, coin, Y) order."""
    t = u.reshape(2, c, d, 2, a, b)
    return t.transpose(1, 0, 2, 4, 3, 5).reshape(2 * c * d, 2 * a * b)


@dataclass(frozen=True)
class CompressedProtocol:
    """A coin-branching protocol and the branch data used to analyse it.

    `payload` is the dimension of the midpoint message register that is
    bounced back (mu for halving, 1 for public-coin compilation).
    heads_ops / tails_ops are the challenger's per-round maps on
    (message, workspace); the finals are the two acceptance projectors.
    """

    protocol: ProtocolInstance
    source: ProtocolInstance
    kind: str
    half: int
    mu: int
    omega: int
    payload: int
    heads_ops: tuple[np.ndarray, ...] = field(repr=False)
    tails_ops: tuple[np.ndarray, ...] = field(repr=False)
    heads_final: np.ndarray = field(repr=False)
    tails_final: np.ndarray = field(repr=False)
    depth: int = 1

    @property
    def message_count(self) -> int:
        return self.protocol.message_count


def _build(source: ProtocolInstance, kind: str, half: int, mu: int, omega: int, payload: int,
           heads_ops, tails_ops, heads_final, tails_final) -> CompressedProtocol:
    g = _coin_prep()
    # round 0: (x, y, coin, copy) -> (copy, X, coin, Y)
    v = np.stack([heads_ops[0], tails_ops[0]]).reshape(2, payload, omega, payload, omega)
    t = np.einsum("cXYxy,cCij->CXcYxyij", v, g.reshape(2, 2, 2, 2))
    pw = payload * omega
    x_dim = v.shape[1]
    u0 = t.reshape(2 * x_dim * 2 * omega, pw * 4)
    rounds = [OperatorMatrix(RegisterLayout.of(("M0", pw), ("W0", 4)),
                             RegisterLayout.of(("R0", 2 * x_dim), ("W1", 2 * omega)), u0, "unitary")]
    for j in range(1, half):
        u = _move_coin(_controlled([heads_ops[j], tails_ops[j]]), mu, omega, mu, omega)
        rounds.append(OperatorMatrix(RegisterLayout.of((f"M{j}", mu), (f"W{j}", 2 * omega)),
                                     RegisterLayout.of((f"R{j}", mu), (f"W{j + 1}", 2 * omega)), u, "unitary"))
    dec = _move_coin(_controlled([heads_final, tails_final]), mu, omega, mu, omega)
    lay = RegisterLayout.of((f"M{half}", mu), (f"W{half}", 2 * omega))
    p = ProtocolInstance.from_challenger(Challenger(tuple(rounds), OperatorMatrix(lay, lay, dec, "projector")))
    return CompressedProtocol(p, source, kind, half, mu, omega, payload, tuple(heads_ops), tuple(tails_ops),
                              heads_final, tails_final)


def _zero_check(c0: np.ndarray, mu: int, omega: int) -> np.ndarray:
    """C_0 (I (x) |0><0|_W0) C_0^dag on (R_0, W_1)."""
    z = np.zeros((omega, omega))
    z[0, 0] = 1
    p = c0 @ np.kron(np.eye(mu), z) @ c0.conj().T
    return (p + p.conj().T) / 2


def halve(p: ProtocolInstance) -> CompressedProtocol:
    """(2r+1)-message protocol -> (r+1)-message coin-branching protocol.

    The adversary first sends the midpoint message and workspace.  Heads
    plays the second half forward and checks the decision; tails plays the
    first half backward and checks that W_0 returned to |0>.
    """
    r = p.num_rounds
    if r == 1:
        raise ValueError("a 3-message protocol cannot be halved; use to_public_coin")
    if r % 2:
        raise ValueError("halving needs an even number of rounds; pad first")
    if not p.challenger.projective:
        raise ValueError("halving needs a projective decision")
    pu, _ = uniformize(p)
    flat = flatten_protocol(pu)
    mu, omega = flat.m[0], flat.w[0]
    h = r // 2
    c = flat.rounds
    heads = [c[h + j] for j in range(h)]
    tails = [np.eye(mu * omega, dtype=complex)] + [c[h - j].conj().T for j in range(1, h)]
    return _build(pu, "halve", h, mu, omega, mu, heads, tails, flat.decision, _zero_check(c[0], mu, omega))


def to_public_coin(p3: ProtocolInstance) -> CompressedProtocol:
    """3-message protocol -> 3-message protocol whose only challenger message is a coin.

    The adversary sends W_1; on heads it sends M_1 and the decision is
    checked; on tails it sends R_0 and the challenger checks C_0^dag returns W_0 to |0>.
    """
    if p3.num_rounds != 1:
        raise ValueError("public-coin compilation takes a 3-message protocol")
    if not p3.challenger.projective:
        raise ValueError("public-coin compilation needs a projective decision")
    pu, _ = uniformize(p3)
    flat = flatten_protocol(pu)
    mu, omega = flat.m[0], flat.w[0]
    ident = np.eye(omega, dtype=complex)
    return _build(pu, "public_coin", 1, mu, omega, 1, [ident], [ident], flat.decision,
                  _zero_check(flat.rounds[0], mu, omega))


# ---------------------------------------------------------------------------
# adversaries for compressed protocols


@dataclass(frozen=True)
class CompressedAdversary:
    """Adversary for a coin-branching protocol with the coin read classically.

    first maps the advice to (memory, midpoint payload, midpoint workspace);
    heads[j] / tails[j] map (memory, incoming message) to (memory, outgoing
    message).  mem[j] is the memory dimension before step j + 1.
    """

    first: np.ndarray
    heads: tuple[np.ndarray, ...]
    tails: tuple[np.ndarray, ...]
    advice: np.ndarray
    mem: tuple[int, ...]

    def __post_init__(self):
        u = self.first
        if u.shape[0] != u.shape[1] or np.linalg.norm(u.conj().T @ u - np.eye(u.shape[1])) > 1e-8:
            raise ValueError("first map is not unitary")
        for u in self.heads + self.tails:
            if u.shape[0] != u.shape[1] or np.linalg.norm(u.conj().T @ u - np.eye(u.shape[1])) > 1e-8:
                raise ValueError("branch step is not unitary")
        if abs(np.linalg.norm(self.advice) - 1) > 1e-9:
            raise ValueError("advice must be normalized")


def _branch_steps(cp: CompressedProtocol, ca: CompressedAdversary, b: int):
    """(kind, matrix, mem_in, msg_in, mem_out, msg_out) for each step of branch b after the first map."""
    ops = cp.heads_ops if b == HEADS else cp.tails_ops
    advs = ca.heads if b == HEADS else ca.tails
    out = []
    msg = cp.payload
    for j in range(cp.half):
        out.append(("v", ops[j], ca.mem[j], msg, ca.mem[j], msg))
        out.append(("a", advs[j], ca.mem[j], msg, ca.mem[j + 1], cp.mu))
        msg = cp.mu
    return out


def _apply_step(x: np.ndarray, step, omega: int, dagger: bool) -> np.ndarray:
    kind, u, mem_in, msg_in, mem_out, msg_out = step
    if dagger:
        u = u.conj().T
        mem_in, msg_in, mem_out, msg_out = mem_out, msg_out, mem_in, msg_in
    n = x.shape[1]
    if kind == "v":
        t = x.reshape(mem_in, msg_in * omega, n)
        return np.einsum("ij,ajk->aik", u, t).reshape(-1, n)
    t = x.reshape(mem_in * msg_in, omega, n)
    return np.einsum("ij,jwk->iwk", u, t).reshape(-1, n)


def _branch_vector(cp: CompressedProtocol, ca: CompressedAdversary, b: int, vec: np.ndarray,
                   inverse: bool = False) -> np.ndarray:
    """Branch-b evolution of advice-space vectors, or its inverse applied to final-space vectors."""
    vec = np.asarray(vec, dtype=complex)
    flat = vec.ndim == 1
    x = vec.reshape(vec.shape[0], -1)
    steps = _branch_steps(cp, ca, b)
    if not inverse:
        x = ca.first @ x
        for s in steps:
            x = _apply_step(x, s, cp.omega, False)
    else:
        for s in reversed(steps):
            x = _apply_step(x, s, cp.omega, True)
        x = ca.first.conj().T @ x
    return x[:, 0] if flat else x


def _final(cp: CompressedProtocol, ca: CompressedAdversary, b: int, x: np.ndarray) -> np.ndarray:
    p = cp.heads_final if b == HEADS else cp.tails_final
    mem = ca.mem[cp.half]
    t = x.reshape(mem, cp.mu * cp.omega)
    return (t @ p.T).reshape(-1)


def branch_projector_apply(cp: CompressedProtocol, ca: CompressedAdversary, b: int, vec: np.ndarray) -> np.ndarray:
    """Pi_b |vec> on the advice space."""
    x = _branch_vector(cp, ca, b, vec)
    return _branch_vector(cp, ca, b, _final(cp, ca, b, x), inverse=True)


@dataclass(frozen=True)
class BranchAcceptance:
    total: float
    heads: float
    tails: float


def compressed_acceptance(cp: CompressedProtocol, ca: CompressedAdversary) -> BranchAcceptance:
    """Exact acceptance: the average of the two branch acceptances."""
    vals = []
    for b in (HEADS, TAILS):
        x = _branch_vector(cp, ca, b, ca.advice)
        y = _final(cp, ca, b, x)
        vals.append(float(np.vdot(y, y).real))
    return BranchAcceptance((vals[0] + vals[1]) / 2, vals[0], vals[1])


def to_adversary(cp: CompressedProtocol, ca: CompressedAdversary) -> Adversary:
    """Coin-controlled unitary adversary for cp.protocol; the received coin copy is kept in memory."""
    mu, omega, pay, h = cp.mu, cp.omega, cp.payload, cp.half
    a0 = RegisterLayout.of(("A0", ca.advice.size))
    us = [OperatorMatrix(a0, RegisterLayout.of(("A1", ca.mem[0]), ("M0", pay * omega)), ca.first, "unitary")]
    # step 1: (A1 mem, R0 = (coin, payload)) -> (A2 = (coin, mem), M1)
    x_dim = pay
    blocks = [ca.heads[0], ca.tails[0]]
    u = _controlled(blocks)  # (coin, mem2, msg) <- (coin, mem1, payload)
    m1, m2 = ca.mem[0], ca.mem[1]
    t = u.reshape(2, m2, mu, 2, m1, x_dim).transpose(0, 1, 2, 4, 3, 5).reshape(2 * m2 * mu, m1 * 2 * x_dim)
    us.append(OperatorMatrix(RegisterLayout.of(("A1", m1), ("R0", 2 * x_dim)),
                             RegisterLayout.of(("A2", 2 * m2), ("M1", mu)), t, "unitary"))
    for j in range(1, h):
        u = _controlled([ca.heads[j], ca.tails[j]])
        us.append(OperatorMatrix(RegisterLayout.of((f"A{j + 1}", 2 * ca.mem[j]), (f"R{j}", mu)),
                                 RegisterLayout.of((f"A{j + 2}", 2 * ca.mem[j + 1]), (f"M{j + 1}", mu)),
                                 u, "unitary"))
    return Adversary(tuple(us), PureState(a0, ca.advice))


def _chain_first(flat: FlatProtocol, adv: list[np.ndarray], mem: int, upto: int, omega: int) -> np.ndarray:
    """Matrix of A_upto C_{upto-1} ... C_0 A_0 on (advice, W_0), ending on (memory, last message, workspace)."""
    mu = flat.m[0]
    x = np.eye(adv[0].shape[1] * omega, dtype=complex).reshape(adv[0].shape[1], omega, -1)
    x = np.einsum("ij,jwk->iwk", adv[0], x)  # (mem*mu, omega, n)
    for i in range(upto):
        t = x.reshape(mem, mu * omega, -1)
        t = np.einsum("ij,ajk->aik", flat.rounds[i], t)
        t = t.reshape(mem * mu, omega, -1)
        x = np.einsum("ij,jwk->iwk", adv[i + 1], t)
    return x.reshape(mem * mu * omega, -1)


def compress_honest(p: ProtocolInstance, honest: Adversary) -> tuple[CompressedAdversary, Adversary]:
    """Honest prover for halve(p): play to the midpoint, then forward on heads and backward on tails.

    Returns the branch form and the coin-controlled unitary adversary.
    """
    cp = halve(p)
    pu, (hu,) = uniformize(p, [honest])
    flat = flatten_protocol(pu)
    mats, dims, advice = _flat_adversary(pu, hu)
    mem, mu, omega, h = dims[1], cp.mu, cp.omega, cp.half
    first = _chain_first(flat, mats, mem, h, omega)
    heads = tuple(mats[h + 1 + j] for j in range(h))
    tails = tuple(mats[h - j].conj().T for j in range(h))
    adv = np.kron(advice, np.eye(omega)[0])
    ca = CompressedAdversary(first, heads, tails, adv, (mem,) * (h + 1))
    return ca, to_adversary(cp, ca)


def public_coin_honest(p3: ProtocolInstance, honest: Adversary) -> tuple[CompressedAdversary, Adversary]:
    """Honest prover for to_public_coin(p3): send W_1, then M_1 on heads or R_0 on tails."""
    cp = to_public_coin(p3)
    pu, (hu,) = uniformize(p3, [honest])
    flat = flatten_protocol(pu)
    mats, dims, advice = _flat_adversary(pu, hu)
    mem, mu, omega = dims[1], cp.mu, cp.omega
    x = np.eye(mats[0].shape[1] * omega, dtype=complex).reshape(mats[0].shape[1], omega, -1)
    x = np.einsum("ij,jwk->iwk", mats[0], x).reshape(mem, mu * omega, -1)
    x = np.einsum("ij,ajk->aik", flat.rounds[0], x)  # (mem, R_0 W_1)
    first = x.reshape(mem * mu * omega, -1)
    ca = CompressedAdversary(first, (mats[1],), (np.eye(mem * mu, dtype=complex),),
                             np.kron(advice, np.eye(omega)[0]), (mem * mu, mem))
    return ca, to_adversary(cp, ca)


# ---------------------------------------------------------------------------
# lifting


@dataclass(frozen=True)
class LiftReport:
    eps: float
    heads: float
    tails: float
    bures_tails: float
    bures_heads: float
    bures_heads_tails: float
    fidelity_heads_tails: float
    conditional: float
    unconditional: float
    executed: float
    adversary: Adversary = field(repr=False)

    def checks(self) -> dict[str, bool]:
        e = self.eps
        tol = 1e-9
        return {
            "branch_heads": self.heads >= 1 - 2 * e - tol,
            "branch_tails": self.tails >= 1 - 2 * e - tol,
            "bures_tails": self.bures_tails <= 3 * e + tol,
            "bures_heads": self.bures_heads <= 3 * e + tol,
            "bures_combined": self.bures_heads_tails <= 12 * e + tol,
            "fidelity": self.fidelity_heads_tails >= 1 - 12 * e - tol,
            "lifted": self.unconditional >= 1 - 16 * e - tol,
        }

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in ("eps", "heads", "tails", "bures_tails", "bures_heads",
                                              "bures_heads_tails", "fidelity_heads_tails", "conditional",
                                              "unconditional", "executed")}
        out["checks"] = self.checks()
        return out


def _pure_bures(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    f = abs(np.vdot(a, b)) ** 2
    return float(2 * (1 - math.sqrt(min(f, 1.0)))), float(f)


def lift_adversary(cp: CompressedProtocol, ca: CompressedAdversary) -> LiftReport:
    """Adversary for the (uniform) source protocol built from a compressed adversary.

    It simulates the tails branch, keeps the run only if W_0 returns to |0>,
    sends M_0, undoes the tails steps one by one against the real challenger,
    then plays the heads steps.  The post-selected state becomes the advice,
    so `conditional` is its acceptance and `unconditional` multiplies in the
    post-selection probability.
    """
    aux = ca.advice
    acc = compressed_acceptance(cp, ca)
    eps = 1 - acc.total
    states = {}
    for b in (HEADS, TAILS):
        v = branch_projector_apply(cp, ca, b, aux)
        n = np.linalg.norm(v)
        states[b] = v / n if n > 1e-14 else v
    d_t, _ = _pure_bures(states[TAILS], aux)
    d_h, _ = _pure_bures(states[HEADS], aux)
    d_ht, f_ht = _pure_bures(states[HEADS], states[TAILS])
    cond = float(np.vdot(states[TAILS], branch_projector_apply(cp, ca, HEADS, states[TAILS])).real)

    # build the source adversary
    mu, omega, h = cp.mu, cp.omega, cp.half
    x = _branch_vector(cp, ca, TAILS, aux)  # (mem_h, R_0, W_1)
    mem_end = ca.mem[h]
    flat = flatten_protocol(cp.source)
    t = x.reshape(mem_end, mu * omega) @ flat.rounds[0].conj()  # C_0^dag on (R_0, W_1)
    t = t.reshape(mem_end, mu, omega)[:, :, 0]
    start = t.reshape(-1)
    norm = np.linalg.norm(start)
    adv0 = RegisterLayout.of(("A0", mem_end * mu))
    us = [OperatorMatrix(adv0, RegisterLayout.of(("A1", mem_end), ("M0", mu)), np.eye(mem_end * mu), "unitary")]
    step = 1
    if cp.kind == "halve":
        for i in range(1, h + 1):
            u = ca.tails[h - i].conj().T
            m_in, m_out = ca.mem[h - i + 1], ca.mem[h - i]
            us.append(OperatorMatrix(RegisterLayout.of((f"A{step}", m_in), (f"R{step - 1}", mu)),
                                     RegisterLayout.of((f"A{step + 1}", m_out), (f"M{step}", mu)), u, "unitary"))
            step += 1
        for j in range(h):
            u = ca.heads[j]
            us.append(OperatorMatrix(RegisterLayout.of((f"A{step}", ca.mem[j]), (f"R{step - 1}", mu)),
                                     RegisterLayout.of((f"A{step + 1}", ca.mem[j + 1]), (f"M{step}", mu)),
                                     u, "unitary"))
            step += 1
    else:
        u = ca.heads[0] @ ca.tails[0].conj().T
        us.append(OperatorMatrix(RegisterLayout.of(("A1", ca.mem[1]), ("R0", mu)),
                                 RegisterLayout.of(("A2", ca.mem[1]), ("M1", mu)),
                                 u, "unitary"))
    if norm < 1e-14:
        start = np.zeros_like(start)
        start[0] = 1
        norm_sq = 0.0
    else:
        start = start / norm
        norm_sq = norm ** 2
    lifted = Adversary(tuple(us), PureState(adv0, start))
    executed = execute(cp.source, lifted).accept_probability
    return LiftReport(eps, acc.heads, acc.tails, d_t, d_h, d_ht, f_ht, cond, norm_sq * cond, executed, lifted)


# ---------------------------------------------------------------------------
# padding and iteration


def _shift_label(label: str, d: int) -> str:
    kind, rnd, fold = parse_label(label)
    base = label.partition("^")[0]
    rest = base[len(kind) + len(str(rnd)):]
    out = f"{kind}{rnd + d}{rest}"
    return out if fold is None else f"{out}^{fold}"


def pad_messages(p: ProtocolInstance, extra_rounds: int, honest: Adversary | None = None
                 ) -> tuple[ProtocolInstance, Adversary | None]:
    """Prepend rounds whose messages are 1-dimensional and whose challenger passes W_0 along."""
    if extra_rounds == 0:
        return p, honest
    ch = p.challenger
    w0 = ch.initial_workspace
    d = extra_rounds
    rounds = []
    for i in range(d):
        win = w0.relabel(lambda lab, i=i: _shift_label(lab, i))
        wout = w0.relabel(lambda lab, i=i: _shift_label(lab, i + 1))
        rounds.append(OperatorMatrix(RegisterLayout.of((f"M{i}", 1)) + win,
                                     RegisterLayout.of((f"R{i}", 1)) + wout, np.eye(win.total_dim), "unitary"))
    rounds += [c.relabel(lambda lab: _shift_label(lab, d)) for c in ch.rounds]
    dec = ch.decision.relabel(lambda lab: _shift_label(lab, d))
    pp = ProtocolInstance(Challenger(tuple(rounds), dec), p.message_count + 2 * d, p.security_label)
    if honest is None:
        return pp, None
    a_in = honest.advice.layout
    n = a_in.total_dim
    us = [OperatorMatrix(RegisterLayout.of(("A0", n)), RegisterLayout.of(("A1", n), ("M0", 1)), np.eye(n), "unitary")]
    for i in range(1, d):
        us.append(OperatorMatrix(RegisterLayout.of((f"A{i}", n), (f"R{i - 1}", 1)),
                                 RegisterLayout.of((f"A{i + 1}", n), (f"M{i}", 1)), np.eye(n), "unitary"))
    u0 = honest.unitaries[0]
    first_in = RegisterLayout.of((f"A{d}", n), (f"R{d - 1}", 1))
    out = u0.out_layout.relabel(lambda lab: _shift_label(lab, d))
    m = qops.reorder_operator(u0, a_in.labels, u0.out_layout.labels).entries
    us.append(OperatorMatrix(first_in, out, m, "unitary"))
    us += [u.relabel(lambda lab: _shift_label(lab, d)) for u in honest.unitaries[1:]]
    return pp, Adversary(tuple(us), PureState(RegisterLayout.of(("A0", n)), honest.advice.amplitudes))


@dataclass(frozen=True)
class CompressionChain:
    levels: tuple[CompressedProtocol, ...]
    final: ProtocolInstance
    original_messages: int
    padded_messages: int
    honest: Adversary | None = None

    @property
    def halvings(self) -> int:
        return len(self.levels)


def halvings_needed(m: int) -> int:
    if m < 3:
        raise ValueError("need at least 3 messages")
    return max(0, math.ceil(math.log2(m - 1)) - 1)


def completeness_bound(c: float, m: int) -> float:
    """1 - 2(1 - c)/(m - 1)."""
    return 1 - 2 * (1 - c) / (m - 1)


def soundness_bound(s: float, m: int) -> float:
    """1 - (1 - s)/(m - 1)^4."""
    return 1 - (1 - s) / (m - 1) ** 4


def compress_to_three(p: ProtocolInstance, honest: Adversary | None = None) -> CompressionChain:
    """Pad to 2^kappa + 1 messages and halve kappa - 1 times, carrying an honest prover along."""
    m = p.message_count
    n = halvings_needed(m)
    target_rounds = 2 ** n if n else 1
    cur, h = pad_messages(p, target_rounds - p.num_rounds, honest) if n else (p, honest)
    padded = cur.message_count
    levels = []
    for _ in range(n):
        cp = halve(cur)
        if h is not None:
            _, h = compress_honest(cur, h)
        levels.append(cp)
        cur = cp.protocol
    return CompressionChain(tuple(levels), cur, m, padded, h)


# ---------------------------------------------------------------------------
# toy protocols


def toy_protocol(rng: np.random.Generator, rounds: int = 2, msg_dim: int = 2, work_dim: int = 2,
                 mem_dim: int = 2, eps: float = 0.0) -> tuple[ProtocolInstance, Adversary]:
    """Haar-random uniform protocol and honest prover accepted with probability exactly 1 - eps.

    The decision accepts the honest final state's support on (M_r, W_r); for
    eps > 0 it is rotated by exp(i t K) with t found by bisection.
    """
    cs = []
    for i in range(rounds):
        cs.append(OperatorMatrix(RegisterLayout.of((f"M{i}", msg_dim), (f"W{i}", work_dim)),
                                 RegisterLayout.of((f"R{i}", msg_dim), (f"W{i + 1}", work_dim)),
                                 qops.haar_unitary(msg_dim * work_dim, rng), "unitary"))
    us = [OperatorMatrix(RegisterLayout.of(("A0", mem_dim * msg_dim)),
                         RegisterLayout.of(("A1", mem_dim), ("M0", msg_dim)),
                         qops.haar_unitary(mem_dim * msg_dim, rng), "unitary")]
    for i in range(1, rounds + 1):
        us.append(OperatorMatrix(RegisterLayout.of((f"A{i}", mem_dim), (f"R{i - 1}", msg_dim)),
                                 RegisterLayout.of((f"A{i + 1}", mem_dim), (f"M{i}", msg_dim)),
                                 qops.haar_unitary(mem_dim * msg_dim, rng), "unitary"))
    adv = Adversary(tuple(us), PureState(RegisterLayout.of(("A0", mem_dim * msg_dim)),
                                         qops.random_state_vector(mem_dim * msg_dim, rng)))
    lay = RegisterLayout.of((f"M{rounds}", msg_dim), (f"W{rounds}", work_dim))
    probe = ProtocolInstance.from_challenger(Challenger(tuple(cs), OperatorMatrix(lay, lay, np.eye(lay.total_dim),
                                                                                   "projector")))
    final = execute(probe, adv).final_state
    rho = qops.reduced_state(final, lay.labels).matrix
    supp = qops.eigenspace_projector(rho, 1e-12, "gt")
    dec = supp
    if eps > 0:
        k = rng.normal(size=rho.shape) + 1j * rng.normal(size=rho.shape)
        k = (k + k.conj().T) / 2
        w, v = np.linalg.eigh(k)

        def rotated(t):
            u = (v * np.exp(1j * t * w)) @ v.conj().T
            return u @ supp @ u.conj().T

        def value(t):
            return float(np.trace(rotated(t) @ rho).real)

        lo, hi = 0.0, 0.05
        while value(hi) > 1 - eps and hi < 50:
            lo, hi = hi, hi * 2
        if value(hi) > 1 - eps:
            raise ValueError("could not reach the requested acceptance")
        for _ in range(200):
            mid = (lo + hi) / 2
            if value(mid) > 1 - eps:
                lo = mid
            else:
                hi = mid
        dec = rotated((lo + hi) / 2)
    dec = (dec + dec.conj().T) / 2
    p = ProtocolInstance.from_challenger(Challenger(tuple(cs), OperatorMatrix(lay, lay, dec, "projector")))
    return p, adv


def perturb(ca: CompressedAdversary, scale: float, rng: np.random.Generator) -> CompressedAdversary:
    """Multiply every branch step and the first map by exp(i scale K) for random Hermitian K."""

    def near(u):
        n = u.shape[0]
        k = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        k = (k + k.conj().T) / (2 * math.sqrt(n))
        w, v = np.linalg.eigh(k)
        return ((v * np.exp(1j * scale * w)) @ v.conj().T) @ u

    return CompressedAdversary(near(ca.first), tuple(near(u) for u in ca.heads),
                               tuple(near(u) for u in ca.tails), ca.advice, ca.mem)
