"""Multi-round challenger/adversary games, k-fold repetition, and prefix-game projectors.

Register labels follow "<Kind><round>[.suffix][^fold]" with Kind one of
A (adversary memory), M (adversary to challenger), R (challenger to adversary)
and W (challenger workspace).  Round i of the challenger maps M_i W_i to
R_i W_{i+1}; the adversary's i-th unitary maps A_i R_{i-1} to A_{i+1} M_i.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from . import qops
from .qops import DIM_CAP, OperatorMatrix, PureState, RegisterLayout

_LABEL = re.compile(r"^([AMRW])(\d+)(?:\.|$)")


def parse_label(label: str) -> tuple[str, int, int | None]:
    """Split a register label into (kind, round, fold)."""
    base, _, fold = label.partition("^")
    m = _LABEL.match(base)
    if not m:
        raise ValueError(f"register label {label!r} does not follow the naming convention")
    return m.group(1), int(m.group(2)), int(fold) if fold else None


def labels_of(layout: RegisterLayout, kind: str, rnd: int, fold: int | None = None) -> tuple[str, ...]:
    out = []
    for lab in layout.labels:
        k, r, f = parse_label(lab)
        if k == kind and r == rnd and (fold is None or f == fold):
            out.append(lab)
    return tuple(out)


def fold_label(label: str, j: int, k: int) -> str:
    return label if k == 1 else f"{label}^{j}"


def fold_op(op: OperatorMatrix, j: int, k: int) -> OperatorMatrix:
    return op.relabel(lambda lab: fold_label(lab, j, k))


@dataclass(frozen=True)
class Challenger:
    rounds: tuple[OperatorMatrix, ...]
    decision: OperatorMatrix

    def __post_init__(self):
        object.__setattr__(self, "rounds", tuple(self.rounds))
        r = len(self.rounds)
        for i, c in enumerate(self.rounds):
            if c.kind != "unitary":
                raise ValueError(f"round {i} is not tagged unitary")
            for lab in c.in_layout.labels:
                kind, rnd, _ = parse_label(lab)
                if (kind, rnd) not in (("M", i), ("W", i)):
                    raise ValueError(f"round {i} consumes unexpected register {lab!r}")
            for lab in c.out_layout.labels:
                kind, rnd, _ = parse_label(lab)
                if (kind, rnd) not in (("R", i), ("W", i + 1)):
                    raise ValueError(f"round {i} emits unexpected register {lab!r}")
            if i:
                prev = self.rounds[i - 1]
                w_out = prev.out_layout.select(labels_of(prev.out_layout, "W", i))
                w_in = c.in_layout.select(labels_of(c.in_layout, "W", i))
                if dict(w_out.registers) != dict(w_in.registers):
                    raise ValueError(f"workspace of round {i - 1} does not feed round {i}")
        if self.decision.kind not in ("projector", "povm_element"):
            raise ValueError("decision must be a projector or POVM element")
        for lab in self.decision.in_layout.labels:
            kind, rnd, _ = parse_label(lab)
            if kind not in ("M", "W") or rnd != r:
                raise ValueError(f"decision acts on unexpected register {lab!r}")
        if r:
            last = self.rounds[-1]
            w_out = dict(last.out_layout.select(labels_of(last.out_layout, "W", r)).registers)
            w_dec = dict(self.decision.in_layout.select(labels_of(self.decision.in_layout, "W", r)).registers)
            if w_out != w_dec:
                raise ValueError("final workspace does not match the decision registers")

    @property
    def num_rounds(self) -> int:
        return len(self.rounds)

    @property
    def projective(self) -> bool:
        return self.decision.kind == "projector"

    @property
    def initial_workspace(self) -> RegisterLayout:
        src = self.rounds[0].in_layout if self.rounds else self.decision.in_layout
        return src.select(labels_of(src, "W", 0))

    def message_layout(self, i: int) -> RegisterLayout:
        src = self.rounds[i].in_layout if i < self.num_rounds else self.decision.in_layout
        return src.select(labels_of(src, "M", i))

    def response_layout(self, i: int) -> RegisterLayout:
        src = self.rounds[i].out_layout
        return src.select(labels_of(src, "R", i))


@dataclass(frozen=True)
class Adversary:
    unitaries: tuple[OperatorMatrix, ...]
    advice: PureState

    def __post_init__(self):
        object.__setattr__(self, "unitaries", tuple(self.unitaries))
        if not self.advice.normalized:
            raise ValueError("advice must be normalized")
        a0 = self.unitaries[0].in_layout
        if dict(a0.registers) != dict(self.advice.layout.registers):
            raise ValueError("advice layout does not match the first adversary unitary")
        for i, u in enumerate(self.unitaries):
            if u.kind != "unitary" and u.in_layout.total_dim == u.out_layout.total_dim:
                u.with_kind("unitary")  # validates
            for lab in u.in_layout.labels:
                kind, rnd, _ = parse_label(lab)
                if (kind, rnd) not in (("A", i), ("R", i - 1)):
                    raise ValueError(f"adversary step {i} consumes unexpected register {lab!r}")
            for lab in u.out_layout.labels:
                kind, rnd, _ = parse_label(lab)
                if (kind, rnd) not in (("A", i + 1), ("M", i)):
                    raise ValueError(f"adversary step {i} emits unexpected register {lab!r}")

    def with_advice(self, advice: PureState) -> "Adversary":
        return Adversary(self.unitaries, advice)


@dataclass(frozen=True)
class ProtocolInstance:
    challenger: Challenger
    message_count: int
    security_label: str = ""

    def __post_init__(self):
        if self.message_count != 2 * self.challenger.num_rounds + 1:
            raise ValueError(
                f"message_count {self.message_count} inconsistent with {self.challenger.num_rounds} rounds")

    @classmethod
    def from_challenger(cls, challenger: Challenger, label: str = "") -> "ProtocolInstance":
        return cls(challenger, 2 * challenger.num_rounds + 1, label)

    @property
    def num_rounds(self) -> int:
        return self.challenger.num_rounds


@dataclass(frozen=True)
class ExecutionResult:
    final_state: PureState
    accept_probability: float


def _run(p: ProtocolInstance, a: Adversary, cap: int | None) -> PureState:
    ch = p.challenger
    if len(a.unitaries) != ch.num_rounds + 1:
        raise ValueError(f"adversary has {len(a.unitaries)} steps, protocol needs {ch.num_rounds + 1}")
    w0 = ch.initial_workspace
    state = qops.tensor(a.advice, qops.zero_state(w0), cap)
    for i, ai in enumerate(a.unitaries):
        qops.check_dim(state.layout.total_dim, cap)
        state = qops.apply(ai, state)
        if i < ch.num_rounds:
            state = qops.apply(ch.rounds[i], state)
    return state


def accept_probability(decision: OperatorMatrix, state: PureState) -> float:
    v = state.amplitudes
    dv = qops.act(decision, state.layout, v, decision.in_layout.labels)
    return float(min(max(np.vdot(v, dv).real, 0.0), 1.0))


def execute(p: ProtocolInstance, a: Adversary, cap: int | None = DIM_CAP) -> ExecutionResult:
    """Run the adversary against the challenger; W0 starts in |0>."""
    state = _run(p, a, cap)
    return ExecutionResult(state, accept_probability(p.challenger.decision, state))


def parallel_repeat(p: ProtocolInstance, k: int, cap: int | None = DIM_CAP) -> ProtocolInstance:
    """k independent copies run in lockstep; registers gain the suffix ^j."""
    if k < 1:
        raise ValueError("k must be at least 1")
    if k == 1:
        return p
    ch = p.challenger
    rounds = tuple(qops.tensor_all([fold_op(c, j, k) for j in range(1, k + 1)], cap) for c in ch.rounds)
    decision = qops.tensor_all([fold_op(ch.decision, j, k) for j in range(1, k + 1)], cap)
    return ProtocolInstance(Challenger(rounds, decision), p.message_count, p.security_label)


def product_adversary(a: Adversary, k: int, cap: int | None = DIM_CAP) -> Adversary:
    """Run k independent copies of a single-fold adversary."""
    if k == 1:
        return a
    us = tuple(qops.tensor_all([fold_op(u, j, k) for j in range(1, k + 1)], cap) for u in a.unitaries)
    advice = qops.tensor_all([a.advice.relabel(lambda lab, j=j: fold_label(lab, j, k))
                              for j in range(1, k + 1)], cap)
    return Adversary(us, advice)


# ---------------------------------------------------------------------------
# random instances


def random_unitary_op(in_layout: RegisterLayout, out_layout: RegisterLayout,
                      rng: np.random.Generator) -> OperatorMatrix:
    return OperatorMatrix(in_layout, out_layout, qops.haar_unitary(in_layout.total_dim, rng), "unitary")


def random_decision(layout: RegisterLayout, rng: np.random.Generator, rank: int | None = None,
                    projective: bool = True) -> OperatorMatrix:
    d = layout.total_dim
    if projective:
        rank = max(1, d // 2) if rank is None else rank
        return OperatorMatrix(layout, layout, qops.random_projector(d, rank, rng), "projector")
    u = qops.haar_unitary(d, rng)
    m = (u * rng.uniform(0, 1, d)) @ u.conj().T
    return OperatorMatrix(layout, layout, (m + m.conj().T) / 2, "povm_element")


def random_instance(rng: np.random.Generator, rounds: int = 1, msg_dim: int = 2, work_dim: int = 2,
                    decision_rank: int | None = None, projective: bool = True) -> ProtocolInstance:
    """Haar-random challenger with equal message/response dimensions."""
    cs = []
    for i in range(rounds):
        cs.append(random_unitary_op(RegisterLayout.of((f"M{i}", msg_dim), (f"W{i}", work_dim)),
                                    RegisterLayout.of((f"R{i}", msg_dim), (f"W{i + 1}", work_dim)), rng))
    dec = random_decision(RegisterLayout.of((f"M{rounds}", msg_dim), (f"W{rounds}", work_dim)),
                          rng, decision_rank, projective)
    return ProtocolInstance.from_challenger(Challenger(tuple(cs), dec))


def random_adversary(p: ProtocolInstance, rng: np.random.Generator, mem_dim: int = 2) -> Adversary:
    """Haar-random adversary unitaries and advice compatible with `p`."""
    ch = p.challenger
    us = []
    m0 = ch.message_layout(0)
    a1 = RegisterLayout.of(("A1", mem_dim))
    a0 = RegisterLayout.of(("A0", a1.total_dim * m0.total_dim))
    us.append(random_unitary_op(a0, a1 + m0, rng))
    mem = mem_dim
    for i in range(1, ch.num_rounds + 1):
        r_prev = ch.response_layout(i - 1)
        mi = ch.message_layout(i)
        total = mem * r_prev.total_dim
        if total % mi.total_dim:
            raise ValueError("message dimensions do not allow a unitary adversary step")
        nxt = total // mi.total_dim
        us.append(random_unitary_op(RegisterLayout.of((f"A{i}", mem)) + r_prev,
                                    RegisterLayout.of((f"A{i + 1}", nxt)) + mi, rng))
        mem = nxt
    advice = PureState(a0, qops.random_state_vector(a0.total_dim, rng))
    return Adversary(tuple(us), advice)


# ---------------------------------------------------------------------------
# prefix-game projectors for 3-message protocols


@dataclass(frozen=True)
class PrefixGames:
    """Cached matrices for the prefix games G_i of a k-fold 3-message protocol.

    `adversary` is the k-fold adversary; only its second unitary enters G_i.
    The pre-challenge layout is (adversary memory, M0 of every fold, W0 of every fold).
    """

    base: ProtocolInstance
    adversary: Adversary
    k: int
    cap: int | None = field(default=DIM_CAP, compare=False)

    def __post_init__(self):
        if self.base.num_rounds != 1:
            raise ValueError("prefix games are defined for 3-message protocols only")
        if self.k < 1:
            raise ValueError("k must be at least 1")

    def folds(self, op: OperatorMatrix) -> list[OperatorMatrix]:
        return [fold_op(op, j, self.k) for j in range(1, self.k + 1)]

    @cached_property
    def challenge_ops(self) -> list[OperatorMatrix]:
        return self.folds(self.base.challenger.rounds[0])

    @cached_property
    def decision_ops(self) -> list[OperatorMatrix]:
        return self.folds(self.base.challenger.decision)

    @property
    def response_unitary(self) -> OperatorMatrix:
        return self.adversary.unitaries[1]

    @cached_property
    def memory_layout(self) -> RegisterLayout:
        u = self.response_unitary.in_layout
        return u.select(labels_of(u, "A", 1))

    def w0_labels(self, folds: Sequence[int] | None = None) -> tuple[str, ...]:
        folds = range(1, self.k + 1) if folds is None else folds
        out = []
        for j in folds:
            c = self.challenge_ops[j - 1]
            out.extend(labels_of(c.in_layout, "W", 0))
        return tuple(out)

    @cached_property
    def pre_layout(self) -> RegisterLayout:
        m = RegisterLayout()
        w = RegisterLayout()
        for c in self.challenge_ops:
            m = m + c.in_layout.select(labels_of(c.in_layout, "M", 0))
            w = w + c.in_layout.select(labels_of(c.in_layout, "W", 0))
        layout = self.memory_layout + m + w
        qops.check_dim(layout.total_dim, self.cap)
        return layout

    @cached_property
    def challenged(self) -> tuple[RegisterLayout, np.ndarray]:
        """Matrix of C^{(<=k)} on the pre-challenge layout."""
        layout, x = self.pre_layout, np.eye(self.pre_layout.total_dim, dtype=complex)
        for c in self.challenge_ops:
            layout, x = qops.apply_array(c, layout, x)
        return layout, x

    @cached_property
    def responded(self) -> tuple[RegisterLayout, np.ndarray]:
        """Matrix of A C^{(<=k)} on the pre-challenge layout."""
        layout, x = self.challenged
        return qops.apply_array(self.response_unitary, layout, x)

    def decided(self, i: int) -> tuple[RegisterLayout, np.ndarray]:
        """Matrix of D^{(<=i)} A C^{(<=k)}."""
        self._check_index(i)
        layout, x = self.responded
        for d in self.decision_ops[:i]:
            x = qops.act(d, layout, x, d.in_layout.labels)
        return layout, x

    def _check_index(self, i: int) -> None:
        if not 0 <= i <= self.k:
            raise ValueError(f"index {i} outside 0..{self.k}")

    def game(self, i: int) -> OperatorMatrix:
        self._check_index(i)
        lay = self.pre_layout
        if i == 0:
            return qops.identity(lay).with_kind("projector")
        _, x = self.responded
        _, y = self.decided(i)
        g = x.conj().T @ y
        g = (g + g.conj().T) / 2
        kind = "projector" if self.base.challenger.projective else "povm_element"
        return OperatorMatrix(lay, lay, g, kind)

    def zero_embedding(self, i: int) -> tuple[RegisterLayout, np.ndarray]:
        """Isometry preparing |0> on W0 of folds 1..i."""
        return qops.zero_isometry(self.pre_layout, self.w0_labels(range(1, i + 1)))

    def restricted(self, i: int, frame: str = "pre") -> OperatorMatrix:
        """G_i V_i where V_i prepares |0> on W0 of the first i folds.

        Its squared norm on a pre-challenge state equals the probability that
        the first i folds accept.  frame="post" left-multiplies by C^{(<=k)}.
        """
        self._check_index(i)
        inner, v = self.zero_embedding(i)
        g = self.game(i).entries @ v
        out_layout = self.pre_layout
        if frame == "post":
            out_layout, c = self.challenged
            g = c @ g
        elif frame != "pre":
            raise ValueError(f"unknown frame {frame!r}")
        return OperatorMatrix(inner, out_layout, g, "general")

    def restricted_povm(self, i: int) -> OperatorMatrix:
        """V_i^dag G_i V_i, the POVM element whose expectation is the prefix acceptance."""
        inner, v = self.zero_embedding(i)
        m = v.conj().T @ self.game(i).entries @ v
        m = (m + m.conj().T) / 2
        return OperatorMatrix(inner, inner, m, "povm_element")

    def pre_challenge_state(self, advice: PureState | None = None) -> PureState:
        """First adversary unitary applied to the advice, ordered as memory then M0 registers."""
        advice = self.adversary.advice if advice is None else advice
        st = qops.apply(self.adversary.unitaries[0], advice)
        order = self.pre_layout.without(self.w0_labels()).labels
        return st.reorder(order)

    def prefix_acceptance(self, i: int, state: PureState | None = None) -> float:
        """Probability that folds 1..i accept from a state on the layout with W0^{(<=i)} removed.

        Defaults to the adversary's own first message with every W0 at |0>.
        """
        if state is None:
            st = self.pre_challenge_state()
            inner, v = self.zero_embedding(self.k)
            full = v @ st.reorder(inner.labels).amplitudes
            inner_i, vi = self.zero_embedding(i)
            vec = vi.conj().T @ full
        else:
            inner_i, _ = self.zero_embedding(i)
            vec = state.reorder(inner_i.labels).amplitudes
        m = self.restricted(i).entries @ vec
        return float(np.vdot(m, m).real)


def game_projector(p3: ProtocolInstance, a: Adversary, i: int, k: int) -> OperatorMatrix:
    """G_i = C^dag A^dag D^{(<=i)} A C on the pre-challenge layout of the k-fold game."""
    return PrefixGames(p3, a, k).game(i)


def restricted_game(p3: ProtocolInstance, a: Adversary, i: int, k: int, frame: str = "pre") -> OperatorMatrix:
    return PrefixGames(p3, a, k).restricted(i, frame)


def restricted_game_povm(p3: ProtocolInstance, a: Adversary, i: int, k: int) -> OperatorMatrix:
    return PrefixGames(p3, a, k).restricted_povm(i)


# ---------------------------------------------------------------------------
# tiny fixed games


def echo_game(dim: int = 2, accept: int = 0) -> ProtocolInstance:
    """1-message game accepting iff the adversary's message is |accept>."""
    m = RegisterLayout.of(("M0", dim), ("W0", 1))
    d = np.zeros((dim, dim))
    d[accept, accept] = 1
    return ProtocolInstance.from_challenger(Challenger((), OperatorMatrix(m, m, d, "projector")))


def state_sender(state: np.ndarray, label_dim: int | None = None) -> Adversary:
    """1-message adversary that sends a fixed state."""
    state = np.asarray(state, dtype=complex)
    a0 = RegisterLayout.of(("A0", state.size))
    out = RegisterLayout.of(("A1", 1), ("M0", state.size))
    return Adversary((OperatorMatrix(a0, out, np.eye(state.size), "unitary"),), PureState(a0, state))
