"""Turn a k-fold adversary into a single-fold adversary.

amp_nonuniform works from advice that already sits below the threshold of
the previous prefix game; amp_uniform finds such a state itself using
almost-projective measurements and StateTrans.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import qops
from .altmeas import FORCE_TOL, DilatedMeasurement, effjor_handle, effjor_schedule, num_reps
from .protocol import (Adversary, PrefixGames, ProtocolInstance, execute, labels_of)
from .qops import OperatorMatrix, PureState, RegisterLayout
from .svt import SVAmplifier, plus_block_encoding

SLACK = 1e-9
OVERLAP_TOL = 1e-9


class PreconditionError(ValueError):
    """Advice does not satisfy the requirements of the extraction."""


# ---------------------------------------------------------------------------
# index selection


def prefix_norms(games: PrefixGames) -> np.ndarray:
    """||G~_i||^2 for i = 0..k, the best prefix acceptance over pre-challenge states."""
    out = [1.0]
    for i in range(1, games.k + 1):
        w = np.linalg.eigvalsh(games.restricted_povm(i).entries)
        out.append(float(np.clip(w[-1], 0.0, 1.0)))
    return np.array(out)


def select_index(norms: Sequence[float], delta: float, k: int) -> int:
    """Smallest i in 1..k with norms[i] >= delta^i and norms[i-1] <= delta^(i-1).

    `norms` holds the k values ||G~_1||^2..||G~_k||^2, optionally with
    ||G~_0||^2 = 1 in front.  Such an index exists whenever norms[k] >= delta^k.
    """
    norms = np.asarray(norms, dtype=float)
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    if norms.size == k:
        norms = np.concatenate([[1.0], norms])
    elif norms.size != k + 1:
        raise ValueError(f"expected {k} or {k + 1} norms, got {norms.size}")
    if abs(norms[0] - 1) > SLACK:
        raise ValueError("norms[0] must equal 1")
    if norms[k] < delta ** k - SLACK:
        raise ValueError(f"||G~_k||^2 = {norms[k]:.6g} is below delta^k = {delta ** k:.6g}")
    for i in range(1, k + 1):
        if norms[i] >= delta ** i - SLACK and norms[i - 1] <= delta ** (i - 1) + SLACK:
            return i
    raise AssertionError("unreachable: the last index always qualifies")


# ---------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class ReductionParams:
    """Schedule for the uniform extraction.

    The literal values (`literal_*`) are astronomically small for any
    interesting k; the fields below override them when set.
    """

    k: int
    delta: float
    epsilon: float
    eps_hat: float | None = None
    tau_hat: float | None = None
    delta_hat: float | None = None
    copies: int | None = None
    effjor_T: int | None = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if not 0 < self.delta <= 1:
            raise ValueError("delta must lie in (0, 1]")
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")

    @property
    def eps0(self) -> float:
        return self.epsilon * self.delta ** self.k / 4

    @property
    def literal_tau_hat(self) -> float:
        return self.eps0 ** 2 / 100

    @property
    def literal_delta_hat(self) -> float:
        return self.literal_tau_hat ** 6 / (8 * self.k ** 3)

    @property
    def literal_eps_hat(self) -> float:
        return self.eps0 ** 2 * self.literal_tau_hat / (10 * math.log(1 / self.delta)) if self.delta < 1 \
            else self.eps0 ** 2 * self.literal_tau_hat / 10

    @property
    def mu(self) -> float:
        return self.epsilon / 4

    @property
    def e_hat(self) -> float:
        return self.eps_hat if self.eps_hat is not None else self.literal_eps_hat

    @property
    def t_hat(self) -> float:
        return self.tau_hat if self.tau_hat is not None else self.literal_tau_hat

    @property
    def d_hat(self) -> float:
        return self.delta_hat if self.delta_hat is not None else self.literal_delta_hat

    @property
    def K(self) -> int:
        return math.ceil(2 / self.t_hat * math.log(1 / self.d_hat))

    @property
    def T(self) -> int:
        return math.ceil(1 / math.sqrt(self.d_hat))

    @property
    def t(self) -> int:
        if self.copies is not None:
            return self.copies
        return math.ceil(math.log(10 / self.eps0) / self.e_hat)

    @property
    def measurement_T(self) -> int:
        if self.effjor_T is not None:
            return self.effjor_T
        return effjor_schedule(self.e_hat, self.d_hat).T

    def literal(self) -> dict:
        e, tau, d = self.literal_eps_hat, self.literal_tau_hat, self.literal_delta_hat
        return {"eps0": self.eps0, "tau_hat": tau, "delta_hat": d, "eps_hat": e,
                "K": math.ceil(2 / tau * math.log(1 / d)), "T": math.ceil(1 / math.sqrt(d)),
                "t": math.ceil(math.log(10 / self.eps0) / e)}

    def effective(self) -> dict:
        return {"eps0": self.eps0, "tau_hat": self.t_hat, "delta_hat": self.d_hat, "eps_hat": self.e_hat,
                "K": self.K, "T": self.T, "t": self.t, "measurement_T": self.measurement_T, "mu": self.mu}

    @classmethod
    def practical(cls, k: int, delta: float, epsilon: float, eps_hat: float = 0.05,
                  tau_hat: float = 0.2, delta_hat: float = 0.05, copies: int = 20,
                  effjor_T: int | None = None) -> "ReductionParams":
        return cls(k, delta, epsilon, eps_hat, tau_hat, delta_hat, copies, effjor_T)


# ---------------------------------------------------------------------------
# non-uniform extraction


@dataclass(frozen=True)
class ExtractionReport:
    index: int
    success: float
    bound: float
    flag_probability: float
    prefix_value: float
    overlap: float
    gamma: float
    nu: float
    deviation: float
    mode: str
    degree: int | None
    calls: dict
    adversary: Adversary | None = field(default=None, repr=False)
    executed_success: float | None = None

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in ("index", "success", "bound", "flag_probability",
                                              "prefix_value", "overlap", "gamma", "nu", "deviation",
                                              "mode", "degree", "calls", "executed_success")}
        return out


def _check_projective(games: PrefixGames) -> None:
    if not games.base.challenger.projective:
        raise ValueError("extraction needs a projective decision")


def _s_labels(games: PrefixGames, i: int) -> tuple[str, ...]:
    """Registers the amplifier acts on: adversary memory, every R0, and W1 of folds before i."""
    r0, w1 = [], []
    for j, c in enumerate(games.challenge_ops, start=1):
        r0.extend(labels_of(c.out_layout, "R", 0))
        if j < i:
            w1.extend(labels_of(c.out_layout, "W", 1))
    return games.memory_layout.labels + tuple(r0) + tuple(w1)


def amplifier_projectors(games: PrefixGames, i: int) -> tuple[RegisterLayout, np.ndarray, np.ndarray]:
    """(S, Pi, Pi~) for index i on the register set S.

    Pi marks the image of |0> on W0 of folds before i under their challenges;
    Pi~ = A^dag D^{(<i)} A.
    """
    post, _ = games.challenged
    s = post.select(_s_labels(games, i))
    pi = np.eye(s.total_dim, dtype=complex)
    for c in games.challenge_ops[: i - 1]:
        _, v = qops.zero_isometry(c.in_layout, labels_of(c.in_layout, "W", 0))
        pj = c.entries @ v @ v.conj().T @ c.entries.conj().T
        pi = qops.act(OperatorMatrix(c.out_layout, c.out_layout, pj), s, pi, c.out_layout.labels)
    lay, x = qops.apply_array(games.response_unitary, s, np.eye(s.total_dim, dtype=complex))
    y = x
    for d in games.decision_ops[: i - 1]:
        y = qops.act(d, lay, y, d.in_layout.labels)
    pt = x.conj().T @ y
    return s, (pi + pi.conj().T) / 2, (pt + pt.conj().T) / 2


def amp_gamma(mu: float, delta: float, i: int) -> float:
    return (1 - mu) / math.sqrt(delta ** (i - 1))


def _inner(games: PrefixGames, i: int) -> RegisterLayout:
    return games.pre_layout.without(games.w0_labels(range(1, i + 1)))


def advice_overlap(games: PrefixGames, aux: PureState, i: int, delta: float) -> float:
    """Weight of aux (with W0 of fold i at |0>) above delta^(i-1) in G~_{i-1}."""
    if i == 1:
        return 0.0
    g = games.restricted_povm(i - 1)
    _, v = qops.zero_isometry(g.in_layout, games.w0_labels([i]))
    x = v @ aux.reorder(_inner(games, i).labels).amplitudes
    proj = qops.eigenspace_projector(g.entries, delta ** (i - 1), "gt")
    return float(np.vdot(x, proj @ x).real)


def best_advice(games: PrefixGames, i: int, delta: float) -> PureState:
    """Unit vector maximizing Tr(G~_i aux) among those with zero overlap above delta^(i-1)."""
    inner = _inner(games, i)
    gi = games.restricted_povm(i).entries
    basis = np.eye(inner.total_dim, dtype=complex)
    if i > 1:
        g = games.restricted_povm(i - 1)
        _, v = qops.zero_isometry(g.in_layout, games.w0_labels([i]))
        low = np.eye(g.entries.shape[0]) - qops.eigenspace_projector(g.entries, delta ** (i - 1), "gt")
        b = v.conj().T @ low @ v
        w, u = np.linalg.eigh((b + b.conj().T) / 2)
        basis = u[:, w > 1 - 1e-9]
        if basis.shape[1] == 0:
            raise PreconditionError("no advice avoids the part above the threshold")
    m = basis.conj().T @ gi @ basis
    w, u = np.linalg.eigh((m + m.conj().T) / 2)
    vec = basis @ u[:, -1]
    return PureState(inner, vec / np.linalg.norm(vec))


def _ext(label: str, rnd: int) -> str:
    return f"A{rnd}." + label.replace("^", "_")


def _base_label(games: PrefixGames, label: str) -> str:
    return label.partition("^")[0] if games.k > 1 else label


def single_fold_adversary(games: PrefixGames, i: int, aux: PureState,
                          gain: np.ndarray | None) -> tuple[Adversary, OperatorMatrix]:
    """Adversary for one copy of the base game that plays fold i of the k-fold adversary.

    It simulates the other folds' challenges itself, applies the block
    encoding of `gain` (when i > 1) controlled by a flag qubit P, runs the
    k-fold response and forwards fold i's reply.  Also returns the flag test
    (D on the simulated folds before i and |+><+| on P) on the output registers.
    """
    others = [j for j in range(1, games.k + 1) if j != i]
    ci = games.challenge_ops[i - 1]
    m0_i = labels_of(ci.in_layout, "M", 0)
    r0_i = labels_of(ci.out_layout, "R", 0)
    mem = games.memory_layout
    pieces = mem
    for j in range(1, games.k + 1):
        c = games.challenge_ops[j - 1]
        pieces = pieces + c.in_layout.select(labels_of(c.in_layout, "M", 0))
    for j in others:
        c = games.challenge_ops[j - 1]
        pieces = pieces + c.in_layout.select(labels_of(c.in_layout, "W", 0))
    if i > 1:
        pieces = pieces + RegisterLayout.of(("P", 2))
    # first step: route fold i's message out, keep everything else as memory
    a0_in = pieces.relabel(lambda lab: _ext(lab, 0))
    a0_out = pieces.relabel(lambda lab: _base_label(games, lab) if lab in m0_i else _ext(lab, 1))
    u0 = OperatorMatrix(a0_in, a0_out, np.eye(pieces.total_dim), "unitary")
    zeroed = list(games.w0_labels([j for j in others if j < i])) + (["P"] if i > 1 else [])
    inner, v = qops.zero_isometry(pieces, zeroed)
    advice = PureState(a0_in, v @ aux.reorder(inner.labels).amplitudes)

    # second step
    lay = pieces.without(m0_i) + ci.out_layout.select(r0_i)
    x = np.eye(lay.total_dim, dtype=complex)
    start = lay
    for j in others:
        lay, x = qops.apply_array(games.challenge_ops[j - 1], lay, x)
    if i > 1:
        h = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
        x = qops.act(OperatorMatrix(RegisterLayout.of(("P", 2)), RegisterLayout.of(("P", 2)), h), lay, x, ["P"])
        s = lay.select(_s_labels(games, i))
        ps = RegisterLayout.of(("P", 2)) + s
        x = qops.act(OperatorMatrix(ps, ps, plus_block_encoding(gain)), lay, x, ps.labels)
    lay, x = qops.apply_array(games.response_unitary, lay, x)
    m1_i = labels_of(games.decision_ops[i - 1].in_layout, "M", 1)

    def out_name(lab):
        return _base_label(games, lab) if lab in m1_i else _ext(lab, 2)

    def in_name(lab):
        return _base_label(games, lab) if lab in r0_i else _ext(lab, 1)

    u1 = OperatorMatrix(start.relabel(in_name), lay.relabel(out_name), x, "unitary")
    single = Adversary((u0, u1), advice)

    out_lay = lay.relabel(out_name)
    flag = np.eye(out_lay.total_dim, dtype=complex)
    for d in games.decision_ops[: i - 1]:
        dd = d.relabel(out_name)
        flag = qops.act(dd, out_lay, flag, dd.in_layout.labels)
    if i > 1:
        plus = np.full((2, 2), 0.5)
        p_lay = RegisterLayout.of(("A2.P", 2))
        flag = qops.act(OperatorMatrix(p_lay, p_lay, plus), out_lay, flag, ["A2.P"])
    return single, OperatorMatrix(out_lay, out_lay, flag, "projector")


def _flagged_acceptance(p3: ProtocolInstance, single: Adversary, flag: OperatorMatrix) -> float:
    res = execute(p3, single)
    st = res.final_state
    v = qops.act(flag, st.layout, st.amplitudes, flag.in_layout.labels)
    dec = p3.challenger.decision
    dv = qops.act(dec, st.layout, v, dec.in_layout.labels)
    return float(np.vdot(v, dv).real)


def _call_counts(k: int, i: int, uses: int) -> dict[str, int]:
    """Invocations of A, C and D by one run; `uses` counts applications of A^dag D^(<i) A."""
    if i == 1:
        return {"A": 1, "C": k - 1, "D": 0}
    return {"A": 1 + 2 * uses, "C": (k - 1) + 2 * (i - 1) * uses, "D": (i - 1) * (uses + 1)}


def amp_nonuniform(p3: ProtocolInstance, adversary: Adversary, k: int, i: int, aux: PureState,
                   mu: float, delta: float, tau: float, check: bool = True,
                   mode: str = "exact_oracle", degree: int | None = None,
                   build_adversary: bool = True, games: PrefixGames | None = None
                   ) -> tuple[Adversary | None, ExtractionReport]:
    """Single-fold success of the extraction at index i from pre-challenge advice aux.

    aux lives on (adversary memory, every M0, W0 of folds after i).  With
    check=True the two preconditions are verified: no weight of aux above
    delta^(i-1) in G~_{i-1}, and Tr(G~_i aux) >= tau delta^i.
    """
    games = games if games is not None else PrefixGames(p3, adversary, k)
    _check_projective(games)
    if not 1 <= i <= k:
        raise ValueError(f"index {i} outside 1..{k}")
    if not 0 < mu < 0.5:
        raise ValueError("mu must lie in (0, 1/2)")
    if not 0 < tau <= 1:
        raise ValueError("tau must lie in (0, 1]")
    aux = aux.reorder(_inner(games, i).labels)
    if not aux.normalized:
        raise ValueError("advice must be normalized")
    overlap = advice_overlap(games, aux, i, delta)
    value = games.prefix_acceptance(i, aux)
    if check:
        if overlap > OVERLAP_TOL:
            raise PreconditionError(f"advice has weight {overlap:.3g} above delta^(i-1) in G~_(i-1)")
        if value < tau * delta ** i - SLACK:
            raise PreconditionError(f"Tr(G~_i aux) = {value:.6g} is below tau delta^i = {tau * delta ** i:.6g}")

    _, vi = games.zero_embedding(i)
    post, cmat = games.challenged
    psi = cmat @ (vi @ aux.amplitudes)
    nu = mu * math.sqrt(tau * delta)
    gain = None
    if i == 1:
        gamma, amp_deg = 1.0, None
        lay, y = qops.apply_array(games.response_unitary, post, psi)
        phi, ideal = y, y
        calls = _call_counts(k, i, 0)
    else:
        gamma = amp_gamma(mu, delta, i)
        if gamma <= 1:
            raise ValueError("delta^(i-1) must be below (1 - mu)^2 for amplification")
        s, pi, pt = amplifier_projectors(games, i)
        amp = SVAmplifier(pi, pt, gamma, mu, nu, mode, degree)
        gain = amp.operator
        amp_deg = amp.polynomial.certificate.degree if mode == "polynomial" else None
        lay_s = OperatorMatrix(s, s, gain)
        moved = qops.act(lay_s, post, psi, s.labels)
        lay, y = qops.apply_array(games.response_unitary, post, moved)
        _, y_ideal = qops.apply_array(games.response_unitary, post, gamma * psi)
        phi, ideal = y, y_ideal
        for d in games.decision_ops[: i - 1]:
            phi = qops.act(d, lay, phi, d.in_layout.labels)
            ideal = qops.act(d, lay, ideal, d.in_layout.labels)
        calls = _call_counts(k, i, amp_deg if amp_deg else 1)
    flag = float(np.vdot(phi, phi).real)
    di = games.decision_ops[i - 1]
    success = float(np.vdot(phi, qops.act(di, lay, phi, di.in_layout.labels)).real)
    deviation = float(np.linalg.norm(phi - ideal))
    single, executed = None, None
    if build_adversary:
        single, flag_op = single_fold_adversary(games, i, aux, gain)
        executed = _flagged_acceptance(p3, single, flag_op)
    return single, ExtractionReport(i, success, (1 - 2 * mu) ** 2 * tau * delta, flag, value, overlap,
                                    gamma, nu, deviation, mode, amp_deg, calls, single, executed)


# ---------------------------------------------------------------------------
# StateTrans


class StateTransResult(NamedTuple):
    c: int | None  # None marks the abort outcome
    state: np.ndarray | None  # one sampled pure state of the output
    sigma: np.ndarray | None  # the output density matrix for this run
    alphas: tuple[float, ...]
    measurements: int
    iterations: int


def _sample_column(w: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    weights = np.einsum("ij,ij->j", w.conj(), w).real
    sigma = w @ w.conj().T
    o = int(rng.choice(weights.size, p=weights / weights.sum()))
    col = w[:, o]
    return col / np.linalg.norm(col), sigma / np.trace(sigma).real


def _binary(q: float, rng: np.random.Generator) -> int:
    if q < FORCE_TOL:
        return 0
    if 1 - q < FORCE_TOL:
        return 1
    return int(rng.random() < q)


def state_trans(m0: DilatedMeasurement, m1: DilatedMeasurement, x: np.ndarray, beta: float,
                eps: float, delta: float, tau: float, rng: np.random.Generator,
                K: int | None = None, T: int | None = None) -> StateTransResult:
    """Move a state with a high m0-outcome to one whose m1-outcome is either high or certified low.

    The workspace holds the outcome registers of both measurements with a
    shared |0>,|0> corner; it is stored as X (m1 slots at 0) and Y (m0 slots
    at 0, column 0 unused).  c = 0 means the m1 outcome is at least beta;
    c = 1 means it is below beta while the m0 outcome stayed high.
    """
    if not 2 * eps <= tau <= 1 - delta:
        raise ValueError("tau must lie in [2 eps, 1 - delta]")
    K = K if K is not None else math.ceil(2 / tau * math.log(1 / delta))
    T = T if T is not None else math.ceil(1 / math.sqrt(delta))
    d, n0, n1 = m0.dim, m0.num_outcomes, m1.num_outcomes
    x = np.asarray(x, dtype=complex)
    x = x / np.linalg.norm(x)
    used = 0
    alphas = []

    def meas0(X, Y, thr):
        px = m0.project(X, thr, "geq")
        b = _binary(float(np.vdot(px, px).real), rng)
        X, Y = (px, np.zeros_like(Y)) if b else (X - px, Y)
        n = math.sqrt(np.vdot(X, X).real + np.vdot(Y, Y).real)
        return b, X / n, Y / n

    def meas1(X, Y):
        z = Y.copy()
        z[:, 0] = X[:, 0]
        pz = m1.project(z, beta, "lt")
        b = _binary(float(np.vdot(pz, pz).real), rng)
        if b:
            X2 = np.zeros_like(X)
            X2[:, 0] = pz[:, 0]
            Y2 = pz.copy()
        else:
            X2 = X.copy()
            X2[:, 0] -= pz[:, 0]
            Y2 = Y - pz
        Y2[:, 0] = 0
        n = math.sqrt(np.vdot(X2, X2).real + np.vdot(Y2, Y2).real)
        return b, X2 / n, Y2 / n

    for it in range(1, K + 1):
        alpha, x = m0.measure(x, rng)
        used += 1
        alphas.append(alpha)
        thr = alpha - eps
        X = np.zeros((d, n0), dtype=complex)
        X[:, 0] = x
        Y = np.zeros((d, n1), dtype=complex)
        b, X, Y = meas1(X, Y)
        used += 1
        if b == 0:
            z = Y.copy()
            z[:, 0] = X[:, 0]
            state, sigma = _sample_column(m1.reflect(z), rng)
            return StateTransResult(0, state, sigma, tuple(alphas), used, it)
        bits = [b]
        for _ in range(K - 1):
            b, X, Y = meas0(X, Y, thr)
            bits.append(b)
            b, X, Y = meas1(X, Y)
            bits.append(b)
            used += 2
        repaired, steps = False, 0
        while steps < 2 * T * K + 1:
            b, X, Y = meas0(X, Y, thr)
            steps += 1
            if b:
                repaired = True
                break
            _, X, Y = meas1(X, Y)
            steps += 1
        used += steps
        if not repaired:
            return StateTransResult(None, None, None, tuple(alphas), used, it)
        reps = num_reps(bits) if len(bits) > 1 else 1.0
        if reps >= 1 - tau:
            state, sigma = _sample_column(np.concatenate([X, Y[:, 1:]], axis=1), rng)
            return StateTransResult(1, state, sigma, tuple(alphas), used, it)
        x, _ = _sample_column(m0.reflect(X), rng)
    return StateTransResult(None, None, None, tuple(alphas), used, K)


# ---------------------------------------------------------------------------
# uniform extraction


@dataclass(frozen=True)
class UniformReport:
    success: float
    index: int | None
    copies_used: int
    transitions: tuple[int | None, ...]
    aborted: str | None
    prefix_value: float | None
    overlap: float | None
    measurements: int

    def to_dict(self) -> dict:
        return {"success": self.success, "index": self.index, "copies_used": self.copies_used,
                "transitions": list(self.transitions), "aborted": self.aborted,
                "prefix_value": self.prefix_value, "overlap": self.overlap,
                "measurements": self.measurements}


def prefix_measurements(games: PrefixGames, params: ReductionParams) -> list[DilatedMeasurement]:
    """EffJor handles for (|0><0| on W0 of folds <= i, G_i), i = 1..k."""
    out = []
    for i in range(1, games.k + 1):
        _, v = games.zero_embedding(i)
        out.append(effjor_handle(v @ v.conj().T, games.game(i).entries, params.e_hat, params.d_hat,
                                 T=params.measurement_T))
    return out


def _reset_w0(games: PrefixGames, x: np.ndarray, i: int, rng: np.random.Generator) -> PureState:
    """Measure W0 of folds <= i, discard it, and return the remaining pure state."""
    inner = _inner(games, i)
    w = games.pre_layout.select(games.w0_labels(range(1, i + 1)))
    v = PureState(games.pre_layout, x).reorder(inner.labels + w.labels).amplitudes
    cols = v.reshape(inner.total_dim, w.total_dim)
    state, _ = _sample_column(cols, rng)
    return PureState(inner, state)


def amp_uniform(p3: ProtocolInstance, adversary: Adversary, params: ReductionParams,
                rng: np.random.Generator, mode: str = "exact_oracle",
                games: PrefixGames | None = None,
                measurements: list[DilatedMeasurement] | None = None, build_adversary: bool = False
                ) -> tuple[Adversary | None, UniformReport]:
    """Uniform extraction from copies of the adversary's own first message.

    Returns the single-fold adversary (None on abort, or when not requested)
    and a report whose success is that adversary's acceptance (0 on abort).
    """
    k, delta = params.k, params.delta
    games = games if games is not None else PrefixGames(p3, adversary, k)
    _check_projective(games)
    ms = measurements if measurements is not None else prefix_measurements(games, params)
    _, vk = games.zero_embedding(k)
    x0 = vk @ games.pre_challenge_state().amplitudes
    e_hat = params.e_hat
    used = 0
    x = None
    copies = 0
    for copies in range(1, params.t + 1):
        g, post = ms[k - 1].measure(x0, rng)
        used += 1
        if g >= delta ** k - e_hat:
            x = post
            break
    if x is None:
        return None, UniformReport(0.0, None, copies, (), "no copy passed", None, None, used)
    cs = []
    index = 1
    for i in range(k, 1, -1):
        res = state_trans(ms[i - 1], ms[i - 2], x, delta ** (i - 1) - e_hat, e_hat, params.d_hat,
                          params.t_hat, rng, params.K, params.T)
        used += res.measurements
        cs.append(res.c)
        if res.c is None:
            return None, UniformReport(0.0, None, copies, tuple(cs), "state transition aborted", None, None, used)
        x = res.state
        if res.c == 1:
            index = i
            break
    aux = _reset_w0(games, x, index, rng)
    tau = min(1.0, max(1e-9, 1 - params.eps0 / delta ** index))
    try:
        single, rep = amp_nonuniform(p3, adversary, k, index, aux, params.mu, delta, tau, check=False,
                                     mode=mode, build_adversary=build_adversary, games=games)
    except ValueError as exc:
        return None, UniformReport(0.0, index, copies, tuple(cs), str(exc), None, None, used)
    return single, UniformReport(rep.success, index, copies, tuple(cs), None, rep.prefix_value, rep.overlap, used)
