"""Commitments, predicates, quantum money and the forwarding counterexample.

Computational notions are replaced by their statistical readings: binding is
the optimal (Uhlmann) fidelity, hiding is the trace distance of the commit
register marginals.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.linalg import expm
from scipy.optimize import minimize

from . import qops
from .protocol import Adversary, Challenger, ProtocolInstance, execute
from .qops import OperatorMatrix, PureState, RegisterLayout

TOL = 1e-9


def prep_unitary(psi: np.ndarray) -> np.ndarray:
    """Unitary whose first column is psi (a phased Householder reflection)."""
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    n = psi.size
    a = psi[0] / abs(psi[0]) if abs(psi[0]) > 1e-15 else 1.0
    phi = psi / a
    v = -phi.copy()
    v[0] += 1
    nv = np.vdot(v, v).real
    u = np.eye(n, dtype=complex)
    if nv > 1e-24:
        u -= 2 * np.outer(v, v.conj()) / nv
    return a * u


# ---------------------------------------------------------------------------
# commitments


@dataclass(frozen=True)
class CanonicalCommitment:
    """Two circuits on (commit, reveal) registers; psi_b = C_b|0...0>.

    commit_dims and reveal_dims list the register dimensions; flat states are
    ordered with every commit register before every reveal register.
    """

    c0: np.ndarray = field(repr=False)
    c1: np.ndarray = field(repr=False)
    commit_dims: tuple[int, ...]
    reveal_dims: tuple[int, ...]

    def __post_init__(self):
        n = self.commit_dim * self.reveal_dim
        for c in (self.c0, self.c1):
            if c.shape != (n, n) or np.linalg.norm(c.conj().T @ c - np.eye(n)) > 1e-8:
                raise ValueError("commitment circuits must be unitaries on commit (x) reveal")

    @classmethod
    def from_states(cls, psi0, psi1, commit_dims: Sequence[int], reveal_dims: Sequence[int]):
        return cls(prep_unitary(psi0), prep_unitary(psi1), tuple(commit_dims), tuple(reveal_dims))

    @property
    def commit_dim(self) -> int:
        return int(np.prod(self.commit_dims))

    @property
    def reveal_dim(self) -> int:
        return int(np.prod(self.reveal_dims))

    def state(self, b: int) -> np.ndarray:
        return (self.c1 if b else self.c0)[:, 0]

    def matrix(self, b: int) -> np.ndarray:
        """psi_b as a (commit, reveal) matrix."""
        return self.state(b).reshape(self.commit_dim, self.reveal_dim)

    def commit_marginal(self, b: int) -> np.ndarray:
        x = self.matrix(b)
        return x @ x.conj().T


def random_commitment(rng: np.random.Generator, commit_dim: int = 2, reveal_dim: int = 2) -> CanonicalCommitment:
    n = commit_dim * reveal_dim
    return CanonicalCommitment(qops.haar_unitary(n, rng), qops.haar_unitary(n, rng), (commit_dim,), (reveal_dim,))


def hiding_advantage(cc: CanonicalCommitment) -> float:
    """Trace distance between the two commit-register marginals."""
    return qops.trace_distance(cc.commit_marginal(0), cc.commit_marginal(1))


def binding_fidelity(cc: CanonicalCommitment) -> float:
    """F(Tr_R psi_0, Tr_R psi_1), the best probability of turning psi_0 into psi_1 on the reveal side."""
    return qops.fidelity(cc.commit_marginal(0), cc.commit_marginal(1))


def binding_game(cc: CanonicalCommitment) -> ProtocolInstance:
    """The challenger commits to 0 and sends the reveal register; it accepts if C_1^dag returns |0...0>.

    The game is cast in the 3-message shape with a 1-dimensional first
    adversary message.
    """
    dc, dr = cc.commit_dim, cc.reveal_dim
    # |0>_M0 |c, r>_W0 -> C_0 |c, r> reordered to (R0 = reveal, W1 = commit)
    u = cc.c0.reshape(dc, dr, dc * dr).transpose(1, 0, 2).reshape(dr * dc, dc * dr)
    round0 = OperatorMatrix(RegisterLayout.of(("M0", 1), ("W0", dc * dr)),
                            RegisterLayout.of(("R0", dr), ("W1", dc)), u, "unitary")
    psi1 = cc.matrix(1).T.reshape(-1)  # (reveal, commit) order
    lay = RegisterLayout.of(("M1", dr), ("W1", dc))
    dec = OperatorMatrix(lay, lay, np.outer(psi1, psi1.conj()), "projector")
    return ProtocolInstance.from_challenger(Challenger((round0,), dec), "binding")


def reveal_adversary(u: np.ndarray) -> Adversary:
    """Binding-game adversary applying u to the reveal register it receives."""
    dr = u.shape[0]
    a0 = RegisterLayout.of(("A0", 1))
    u0 = OperatorMatrix(a0, RegisterLayout.of(("A1", 1), ("M0", 1)), np.eye(1), "unitary")
    u1 = OperatorMatrix(RegisterLayout.of(("A1", 1), ("R0", dr)), RegisterLayout.of(("A2", 1), ("M1", dr)), u,
                        "unitary")
    return Adversary((u0, u1), PureState(a0, np.ones(1, dtype=complex)))


def uhlmann_unitary(cc: CanonicalCommitment) -> np.ndarray:
    """Reveal-register unitary maximizing |<psi_1| (I (x) U) |psi_0>|, from an SVD."""
    m = cc.matrix(0).T @ cc.matrix(1).conj()  # <psi_1|(I (x) U)|psi_0> = Tr(U m)
    p, _, qh = np.linalg.svd(m)
    return qh.conj().T @ p.conj().T


@dataclass(frozen=True)
class BindingReport:
    fidelity: float
    executed: float
    searched: float | None


def binding_value(cc: CanonicalCommitment, rng: np.random.Generator | None = None, restarts: int = 0
                  ) -> BindingReport:
    """Binding-game value: the closed-form fidelity, the executed Uhlmann adversary and an optional search."""
    game = binding_game(cc)
    executed = execute(game, reveal_adversary(uhlmann_unitary(cc))).accept_probability
    searched = None
    if restarts:
        m = cc.matrix(0).T @ cc.matrix(1).conj()
        searched = maximize_over_unitaries(lambda u: abs(np.trace(u @ m)) ** 2, m.shape[0], rng, restarts)[0]
    return BindingReport(binding_fidelity(cc), executed, searched)


def maximize_over_unitaries(f, n: int, rng: np.random.Generator, restarts: int = 3, maxiter: int = 400
                            ) -> tuple[float, np.ndarray]:
    """Local search for max f(U) over n x n unitaries, U = expm(iH) from random starts."""
    iu = np.triu_indices(n, 1)

    def unitary(theta, base):
        h = np.zeros((n, n), dtype=complex)
        h[np.diag_indices(n)] = theta[:n]
        k = len(iu[0])
        h[iu] = theta[n:n + k] + 1j * theta[n + k:]
        h = h + np.triu(h, 1).conj().T
        return base @ expm(1j * h)

    best, best_u = -np.inf, None
    for _ in range(restarts):
        base = qops.haar_unitary(n, rng)
        res = minimize(lambda th: -f(unitary(th, base)), np.zeros(n * n), method="BFGS",
                       options={"maxiter": maxiter, "gtol": 1e-10})
        if -res.fun > best:
            best, best_u = float(-res.fun), unitary(res.x, base)
    return best, best_u


def flavor_switch(cc: CanonicalCommitment, ancilla: bool = True) -> CanonicalCommitment:
    """(|0> psi_0 + (-1)^b |1> psi_1)/sqrt2 with the flag and old reveal register as the new commit register.

    With ancilla=False the flag is dropped, giving (psi_0 + (-1)^b psi_1)/sqrt2;
    this needs psi_0 orthogonal to psi_1.
    """
    x0, x1 = cc.matrix(0).T, cc.matrix(1).T  # (reveal, commit)
    if ancilla:
        states = [np.stack([x0, s * x1]).reshape(-1) / math.sqrt(2) for s in (1, -1)]
        commit = (2,) + cc.reveal_dims
    else:
        if abs(np.vdot(cc.state(0), cc.state(1))) > 1e-9:
            raise ValueError("dropping the flag needs orthogonal commitment states")
        states = [(x0 + s * x1).reshape(-1) / math.sqrt(2) for s in (1, -1)]
        commit = cc.reveal_dims
    return CanonicalCommitment.from_states(states[0], states[1], commit, cc.commit_dims)


def parallel_commitment(cc: CanonicalCommitment, k: int, cap: int | None = qops.DIM_CAP) -> CanonicalCommitment:
    """Commit to b in each of k independent copies; commit registers C_1..C_k then reveal R_1..R_k."""
    dc, dr = cc.commit_dim, cc.reveal_dim
    qops.check_dim((dc * dr) ** k, cap)
    states = []
    for b in (0, 1):
        t = cc.matrix(b)
        for _ in range(k - 1):
            t = np.multiply.outer(t, cc.matrix(b))
        order = list(range(0, 2 * k, 2)) + list(range(1, 2 * k, 2))
        states.append(t.transpose(order).reshape(-1) if k > 1 else t.reshape(-1))
    return CanonicalCommitment.from_states(states[0], states[1], cc.commit_dims * k, cc.reveal_dims * k)


def xor_state(cc: CanonicalCommitment, k: int, b: int) -> np.ndarray:
    """2^{-(k-1)/2} sum_{|x| = b mod 2} |x> psi_{x_1} ... psi_{x_k}, ordered (C_1..C_k, x, R_1..R_k)."""
    dc, dr = cc.commit_dim, cc.reveal_dim
    out = np.zeros((dc ** k, 2 ** k, dr ** k), dtype=complex)
    mats = [cc.matrix(0), cc.matrix(1)]
    for idx, x in enumerate(itertools.product((0, 1), repeat=k)):
        if sum(x) % 2 != b:
            continue
        t = mats[x[0]]
        for xi in x[1:]:
            t = np.multiply.outer(t, mats[xi])
        order = list(range(0, 2 * k, 2)) + list(range(1, 2 * k, 2))
        out[:, idx, :] = t.transpose(order).reshape(dc ** k, dr ** k)
    return out.reshape(-1) / math.sqrt(2 ** (k - 1))


def xor_repeat(cc: CanonicalCommitment, k: int, cap: int | None = qops.DIM_CAP) -> CanonicalCommitment:
    """XOR repetition: commit registers C_1..C_k; reveal registers x (k qubits) then R_1..R_k."""
    if k < 1:
        raise ValueError("k must be at least 1")
    qops.check_dim((cc.commit_dim * cc.reveal_dim) ** k * 2 ** k, cap)
    return CanonicalCommitment.from_states(xor_state(cc, k, 0), xor_state(cc, k, 1), cc.commit_dims * k,
                                           (2,) * k + cc.reveal_dims * k)


def switched_xor_state(cc: CanonicalCommitment, k: int, b: int) -> np.ndarray:
    """flavor_switch(parallel(flavor_switch(cc)), ancilla=False), reordered to the xor_repeat register order."""
    twice = flavor_switch(parallel_commitment(flavor_switch(cc), k), ancilla=False)
    dc, dr = cc.commit_dim, cc.reveal_dim
    # reveal side is (f_1, R_1, ..., f_k, R_k); move flags to the front
    t = twice.state(b).reshape((dc ** k,) + (2, dr) * k)
    order = [0] + [1 + 2 * j for j in range(k)] + [2 + 2 * j for j in range(k)]
    return t.transpose(order).reshape(-1)


# ---------------------------------------------------------------------------
# predicates


@dataclass(frozen=True)
class QuantumPredicate:
    """Trace-zero Hermitian rho = rho_+ - rho_- with orthogonal parts and trace norm at most 2."""

    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        object.__setattr__(self, "matrix", m)
        if np.linalg.norm(m - m.conj().T) > TOL:
            raise ValueError("predicate must be Hermitian")
        if abs(np.trace(m)) > TOL:
            raise ValueError("predicate must have trace 0")
        if self.trace_norm > 2 + TOL:
            raise ValueError(f"trace norm {self.trace_norm:.6g} exceeds 2")
        if np.linalg.norm(self.plus @ self.minus) > TOL:
            raise ValueError("positive and negative parts overlap")

    @classmethod
    def from_states(cls, yes: np.ndarray, no: np.ndarray) -> "QuantumPredicate":
        """Balanced predicate (yes - no)/2 for density matrices with orthogonal supports."""
        return cls((np.asarray(yes) - np.asarray(no)) / 2)

    @property
    def _eig(self):
        return np.linalg.eigh(self.matrix)

    @property
    def plus(self) -> np.ndarray:
        w, v = self._eig
        return (v * np.clip(w, 0, None)) @ v.conj().T

    @property
    def minus(self) -> np.ndarray:
        w, v = self._eig
        return (v * np.clip(-w, 0, None)) @ v.conj().T

    @property
    def trace_norm(self) -> float:
        return float(np.abs(np.linalg.eigvalsh(self.matrix)).sum())

    def xor_power(self, k: int) -> "QuantumPredicate":
        """rho^{(x)k}; raises if the power leaves the predicate set (trace norm above 2)."""
        if k < 1:
            raise ValueError("k must be at least 1")
        out = self.matrix
        for _ in range(k - 1):
            out = np.kron(out, self.matrix)
        return QuantumPredicate(out)

    def advantage(self, p: np.ndarray | OperatorMatrix, side_info: np.ndarray | None = None) -> float:
        """Tr(P (rho (x) sigma))."""
        p = p.entries if isinstance(p, OperatorMatrix) else np.asarray(p)
        s = np.ones((1, 1)) if side_info is None else np.asarray(getattr(side_info, "matrix", side_info))
        return float(np.trace(p @ np.kron(self.matrix, s)).real)


def random_predicate(rng: np.random.Generator, d: int = 2, balanced: bool = True) -> QuantumPredicate:
    """(yes - no)/2 (or yes - no) for random states on complementary random subspaces."""
    u = qops.haar_unitary(d, rng)
    r = int(rng.integers(1, d)) if d > 1 else 1
    def state(cols):
        g = qops.random_density(cols.shape[1], rng)
        return cols @ g @ cols.conj().T
    yes, no = state(u[:, :r]), state(u[:, r:])
    return QuantumPredicate((yes - no) / (2 if balanced else 1))


# ---------------------------------------------------------------------------
# parameter bookkeeping


def efi_polarization_params(alpha: float, beta: float, c: float, lam: float) -> tuple[int, int]:
    """(r, s) with r = ceil(log(8 lam)/log(beta^2/alpha^c)) and s = floor(alpha^(-c r)/2)."""
    if not 0.5 <= c <= 1:
        raise ValueError("c must lie in [1/2, 1]")
    if not (0 < alpha < 1 and 0 < beta <= 1):
        raise ValueError("alpha must lie in (0, 1) and beta in (0, 1]")
    if beta ** 2 <= alpha ** c:
        raise ValueError("no polarization gap: beta^2 <= alpha^c")
    if lam <= 0:
        raise ValueError("lambda must be positive")
    r = max(1, math.ceil(math.log(8 * lam) / math.log(beta ** 2 / alpha ** c)))
    s = math.floor(alpha ** (-c * r) / 2)
    if s < 1:
        raise ValueError("s rounds to zero for these parameters")
    return r, s


def combined_amplification(p: float, q: float, lam: int) -> dict:
    """Bookkeeping for amplifying a (1 - 1/p)-binding, 1/q-hiding commitment (formula only).

    Repeat lam*p times, flavor switch, then repeat lam times.  Needs q >= 2 lam p.
    """
    if q < 2 * lam * p:
        raise ValueError("needs q >= 2 lambda p")
    n1 = math.ceil(lam * p)
    return {
        "first_repetitions": n1,
        "binding_after_first": (1 - 1 / p) ** n1,
        "binding_bound": math.exp(-lam),
        "hiding_after_first": n1 / q,
        "second_repetitions": lam,
        "binding_after_second": 0.5 ** lam,
        "numerically_verified": False,
    }


# ---------------------------------------------------------------------------
# quantum money


def money_game(mint: PureState, verify: np.ndarray | OperatorMatrix, serial: str = "S", note: str = "B"
               ) -> ProtocolInstance:
    """Counterfeiting game: the challenger mints, sends the note, and verifies both returned notes.

    `verify` acts on (serial, note) and must commute between the two copies
    (true whenever it is block diagonal in a classical serial number).
    """
    ds, db = mint.layout.dim(serial), mint.layout.dim(note)
    if mint.layout.total_dim != ds * db:
        raise ValueError("mint state must live on exactly the serial and note registers")
    v = verify.entries if isinstance(verify, OperatorMatrix) else np.asarray(verify, dtype=complex)
    if v.shape != (ds * db, ds * db):
        raise ValueError("verifier dimension mismatch")
    psi = mint.reorder([serial, note]).amplitudes
    u = prep_unitary(psi).reshape(ds, db, ds * db).transpose(1, 0, 2).reshape(db * ds, ds * db)
    round0 = OperatorMatrix(RegisterLayout.of(("M0", 1), ("W0", ds * db)),
                            RegisterLayout.of(("R0", db), ("W1", ds)), u, "unitary")
    lay = RegisterLayout.of(("M1.a", db), ("M1.b", db), ("W1", ds))
    va = v.reshape(ds, db, ds, db)
    # V on (W1, M1.a) and on (W1, M1.b), written in (a, b, s) order
    ea = np.einsum("sate,bc->absect", va, np.eye(db)).reshape(lay.total_dim, lay.total_dim)
    eb = np.einsum("sbtd,ac->abscdt", va, np.eye(db)).reshape(lay.total_dim, lay.total_dim)
    if np.linalg.norm(ea @ eb - eb @ ea) > 1e-9:
        raise ValueError("verification of the two notes does not commute")
    return ProtocolInstance.from_challenger(Challenger((round0,), OperatorMatrix(lay, lay, ea @ eb, "projector")),
                                            "money")


def serial_mint(states: Sequence[np.ndarray]) -> tuple[PureState, np.ndarray]:
    """Uniform superposition of |s>|psi_s> and the verifier sum_s |s><s| (x) |psi_s><psi_s|."""
    n, d = len(states), len(states[0])
    amp = np.zeros(n * d, dtype=complex)
    v = np.zeros((n * d, n * d), dtype=complex)
    for s, psi in enumerate(states):
        psi = np.asarray(psi, dtype=complex) / np.linalg.norm(psi)
        amp[s * d:(s + 1) * d] = psi / math.sqrt(n)
        e = np.zeros(n)
        e[s] = 1
        v += np.kron(np.diag(e), np.outer(psi, psi.conj()))
    return PureState(RegisterLayout.of(("S", n), ("B", d)), amp), v


def octahedron_states() -> list[np.ndarray]:
    """The six Pauli eigenstates of a qubit."""
    r = 1 / math.sqrt(2)
    return [np.array(v, dtype=complex) for v in
            ([1, 0], [0, 1], [r, r], [r, -r], [r, 1j * r], [r, -1j * r])]


def cloner_adversary(u: np.ndarray, db: int, anc_dim: int, mem_dim: int) -> Adversary:
    """Money-game adversary applying u to (ancilla |0>, received note) -> (memory, note a, note b)."""
    a0 = RegisterLayout.of(("A0", anc_dim))
    u0 = OperatorMatrix(a0, RegisterLayout.of(("A1", anc_dim), ("M0", 1)), np.eye(anc_dim), "unitary")
    u1 = OperatorMatrix(RegisterLayout.of(("A1", anc_dim), ("R0", db)),
                        RegisterLayout.of(("A2", mem_dim), ("M1.a", db), ("M1.b", db)), u, "unitary")
    adv = np.zeros(anc_dim, dtype=complex)
    adv[0] = 1
    return Adversary((u0, u1), PureState(a0, adv))


def basis_copier(db: int) -> np.ndarray:
    """|y>|x> -> |x>|x + y mod d>, copying computational basis notes."""
    u = np.zeros((db * db, db * db))
    for y in range(db):
        for x in range(db):
            u[x * db + (x + y) % db, y * db + x] = 1
    return u


def universal_cloner() -> np.ndarray:
    """Symmetric optimal qubit cloner on (2-qubit ancilla, note) -> (memory qubit, note a, note b)."""
    a, b = math.sqrt(2 / 3), math.sqrt(1 / 6)
    iso = np.zeros((8, 2))
    # output index = mem*4 + a*2 + b
    iso[0 * 4 + 0, 0] = a
    iso[1 * 4 + 1, 0] = b
    iso[1 * 4 + 2, 0] = b
    iso[1 * 4 + 3, 1] = a
    iso[0 * 4 + 1, 1] = b
    iso[0 * 4 + 2, 1] = b
    # extend: input index = anc*2 + note with anc = 0 carrying the isometry
    q, _ = np.linalg.qr(np.concatenate([iso, np.random.default_rng(0).normal(size=(8, 6))], axis=1))
    q[:, :2] = iso
    return q.astype(complex)


def best_cloner(game: ProtocolInstance, rng: np.random.Generator, anc_dim: int = 4, mem_dim: int = 2,
                restarts: int = 3) -> tuple[float, np.ndarray]:
    """Local search over cloner unitaries for the counterfeiting value."""
    db = game.challenger.response_layout(0).total_dim
    ds = game.challenger.rounds[0].out_layout.dim("W1")
    # pre-response state on (A1, R0, W1) with ancilla |0>
    psi = game.challenger.rounds[0].entries[:, 0].reshape(db, ds)
    pre = np.zeros((anc_dim, db, ds), dtype=complex)
    pre[0] = psi
    pre = pre.reshape(anc_dim * db, ds)
    dec = game.challenger.decision.entries.reshape(db * db, ds, db * db, ds)

    def value(u):
        out = (u @ pre).reshape(mem_dim, db * db, ds)
        return float(np.einsum("mis,isjt,mjt->", out.conj(), dec, out).real)

    return maximize_over_unitaries(value, anc_dim * db, rng, restarts)


# ---------------------------------------------------------------------------
# forwarding counterexample


@dataclass(frozen=True)
class ToyCommitment:
    """Forwardable toy commitment: the commitment is (tag, bit) passed through verbatim.

    It has no hiding and no non-malleability, which is exactly what lets
    the forwarding schedule run.  The tag check is enforced.
    """

    tag: int
    bit: int

    def reveal(self) -> int:
        return self.bit


@dataclass(frozen=True)
class ForwardingResult:
    k: int
    records: tuple[tuple[tuple[int, ...], tuple[bool, ...]], ...]
    win_probability: Fraction

    def to_dict(self) -> dict:
        return {"k": self.k, "win_probability": float(self.win_probability),
                "win_fraction": str(self.win_probability),
                "records": [{"bits": list(b), "wins": list(w)} for b, w in self.records]}


def forward_schedule(k: int) -> list[list[tuple[int, int]]]:
    """For each challenger i, the (source challenger, copy index) pairs forwarded to it."""
    return [[((j + i) % k, (j + 1) % k) for j in range(1, k)] for i in range(k)]


def forwarding_counterexample(k: int, rng: np.random.Generator | None = None) -> ForwardingResult:
    """Play the cyclic forwarding adversary against k challengers for every bit vector.

    Challenger i commits k - 1 times to b_i under its own tag i.  The
    adversary forwards to challenger i one commitment from each other
    challenger and later reveals them.  Challenger i accepts iff no returned
    commitment carries tag i and the revealed bits have parity different
    from b_i.  `rng` is unused: the win probability is enumerated exactly.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    schedule = forward_schedule(k)
    records = []
    wins = 0
    for bits in itertools.product((0, 1), repeat=k):
        sent = [[ToyCommitment(i, bits[i]) for _ in range(k)] for i in range(k)]
        fold = []
        for i in range(k):
            received = [sent[src][idx] for src, idx in schedule[i]]
            ok_tags = all(c.tag != i for c in received)
            parity = sum(c.reveal() for c in received) % 2
            fold.append(bool(ok_tags and parity != bits[i]))
        records.append((bits, tuple(fold)))
        wins += all(fold)
    return ForwardingResult(k, tuple(records), Fraction(wins, 2 ** k))


# ---------------------------------------------------------------------------
# black-hole commitment


def blackhole_commitment(radiation: PureState, h: str = "H", b: str = "B", r: str = "R") -> CanonicalCommitment:
    """Commit to 0 by sending (H, B) of radiation (x) EPR_CD, to 1 by sending (H, D).

    Commit registers are (H, X) and reveal registers (R, Y, C), where
    (X, Y) = (B, D) for bit 0 and (D, B) for bit 1.
    """
    if radiation.layout.dim(b) != 2:
        raise ValueError("B must be a qubit")
    rad = radiation.reorder([h, b, r]).amplitudes
    dh, dr = radiation.layout.dim(h), radiation.layout.dim(r)
    epr = np.array([1, 0, 0, 1], dtype=complex) / math.sqrt(2)
    t = np.multiply.outer(rad.reshape(dh, 2, dr), epr.reshape(2, 2))  # (H, B, R, C, D)
    s0 = t.transpose(0, 1, 2, 4, 3).reshape(-1)  # (H, B | R, D, C)
    s1 = t.transpose(0, 4, 2, 1, 3).reshape(-1)  # (H, D | R, B, C)
    return CanonicalCommitment.from_states(s0, s1, (dh, 2), (dr, 2, 2))


def decoupling_fidelity(radiation: PureState, h: str = "H", b: str = "B") -> float:
    """F(rho_HB, rho_H (x) I/2): how well B's purification can be recovered from R."""
    rho = qops.reduced_state(radiation, [h, b]).matrix
    rh = qops.reduced_state(radiation, [h]).matrix
    return qops.fidelity(rho, np.kron(rh, np.eye(2) / 2))
