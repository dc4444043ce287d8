"""Planted 3-message games whose prefix-game values are known in closed form.

Dial game: the challenger sends a fresh |0> qubit and keeps the adversary's
first message.  It accepts when the returned qubit is |0> and the kept
message lies in a fixed projector Q.  An adversary that rotates the qubit by
an angle theta with cos^2(theta) = lam and sends a message inside Q wins with
probability exactly lam.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import qops
from .protocol import (Adversary, Challenger, PrefixGames, ProtocolInstance, fold_label,
                       fold_op, product_adversary)
from .qops import OperatorMatrix, PureState, RegisterLayout


def dial_protocol(msg_dim: int = 2, q_rank: int = 1, rng: np.random.Generator | None = None,
                  q: np.ndarray | None = None) -> ProtocolInstance:
    """3-message dial game; Q is a random rank-`q_rank` projector unless given."""
    if q is None:
        rng = rng if rng is not None else np.random.default_rng(0)
        q = qops.random_projector(msg_dim, q_rank, rng)
    c_in = RegisterLayout.of(("M0", msg_dim), ("W0", 2))
    c_out = RegisterLayout.of(("R0", 2), ("W1", msg_dim))
    # |u>_M |w>_W -> |w>_R |u>_W1
    c = np.zeros((2 * msg_dim, 2 * msg_dim))
    for u in range(msg_dim):
        for w in range(2):
            c[w * msg_dim + u, u * 2 + w] = 1
    d_layout = RegisterLayout.of(("M1", 2), ("W1", msg_dim))
    p0 = np.diag([1.0, 0.0])
    dec = OperatorMatrix(d_layout, d_layout, np.kron(p0, q), "projector")
    return ProtocolInstance.from_challenger(
        Challenger((OperatorMatrix(c_in, c_out, c, "unitary"),), dec), "dial")


def rotation(lam: float) -> np.ndarray:
    th = np.arccos(np.sqrt(np.clip(lam, 0, 1)))
    return np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])


def dial_adversary(p: ProtocolInstance, lam: float, message: np.ndarray | None = None,
                   mem_dim: int = 1) -> Adversary:
    """Single-fold adversary: send `message` (default: top vector of Q), rotate the reply."""
    msg_dim = p.challenger.message_layout(0).total_dim
    q = p.challenger.decision.entries.reshape(2, msg_dim, 2, msg_dim)[0, :, 0, :]
    if message is None:
        w, v = np.linalg.eigh((q + q.conj().T) / 2)
        message = v[:, -1]
    message = np.asarray(message, dtype=complex)
    message = message / np.linalg.norm(message)
    a0 = RegisterLayout.of(("A0", mem_dim * msg_dim))
    out0 = RegisterLayout.of(("A1", mem_dim), ("M0", msg_dim))
    u0 = OperatorMatrix(a0, out0, np.eye(mem_dim * msg_dim), "unitary")
    advice = np.kron(np.eye(mem_dim)[0], message)
    in1 = RegisterLayout.of(("A1", mem_dim), ("R0", 2))
    out1 = RegisterLayout.of(("A2", mem_dim), ("M1", 2))
    u1 = OperatorMatrix(in1, out1, np.kron(np.eye(mem_dim), rotation(lam)), "unitary")
    return Adversary((u0, u1), PureState(a0, advice))


def dial_product(p: ProtocolInstance, lams: Sequence[float], mem_dim: int = 1,
                 messages: Sequence[np.ndarray] | None = None) -> Adversary:
    """k-fold adversary playing an independent dial strategy with value lams[j] in fold j."""
    k = len(lams)
    parts = [dial_adversary(p, lam, None if messages is None else messages[j], mem_dim)
             for j, lam in enumerate(lams)]
    if k == 1:
        return parts[0]
    us = []
    for step in range(2):
        ops = [fold_op(parts[j].unitaries[step], j + 1, k) for j in range(k)]
        us.append(qops.tensor_all(ops))
    advice = qops.tensor_all([parts[j].advice.relabel(lambda lab, j=j: fold_label(lab, j + 1, k))
                              for j in range(k)])
    return Adversary(tuple(us), advice)


def entangle_folds(a: Adversary, p: ProtocolInstance, k: int, rng: np.random.Generator) -> Adversary:
    """Post-compose the response unitary with a random unitary that commutes with every D^{(j)}.

    The dial decision is diagonal on each returned qubit, so a unitary of the
    form sum_s |s><s|_{M1} (x) U_s on (memory, returned qubits) preserves all
    prefix games while coupling the folds through the memory.
    """
    u1 = a.unitaries[1]
    out = u1.out_layout
    m1 = [lab for lab in out.labels if lab.startswith("M1")]
    mem = [lab for lab in out.labels if not lab.startswith("M1")]
    mem_layout = out.select(mem)
    n_pat = 2 ** len(m1)
    blocks = [qops.haar_unitary(mem_layout.total_dim, rng) for _ in range(n_pat)]
    big = np.zeros((n_pat * mem_layout.total_dim,) * 2, dtype=complex)
    for s, b in enumerate(blocks):
        sel = np.zeros((n_pat, n_pat))
        sel[s, s] = 1
        big += np.kron(sel, b)
    lay = out.select(m1) + mem_layout
    ent = OperatorMatrix(lay, lay, big, "unitary")
    new = qops.act(ent, out, u1.entries, lay.labels)
    return Adversary((a.unitaries[0], OperatorMatrix(u1.in_layout, out, new, "unitary")), a.advice)


@dataclass(frozen=True)
class PlantedInstance:
    base: ProtocolInstance
    adversary: Adversary
    k: int
    lams: tuple[float, ...]

    @property
    def games(self) -> PrefixGames:
        return PrefixGames(self.base, self.adversary, self.k)


def planted_instance(lams: Sequence[float], rng: np.random.Generator, msg_dim: int = 2,
                     mem_dim: int = 1, entangle: bool = False) -> PlantedInstance:
    """Dial game repeated len(lams) times against the matching product adversary.

    The top eigenvalue of the i-th restricted game is prod(lams[:i]).
    """
    p = dial_protocol(msg_dim, 1, rng)
    k = len(lams)
    a = dial_product(p, lams, mem_dim)
    if entangle:
        a = entangle_folds(a, p, k, rng)
    return PlantedInstance(p, a, k, tuple(float(x) for x in lams))


def forcing_values(delta: float, k: int, shrink: float = 0.9) -> tuple[float, ...]:
    """Per-fold values that make index 2 the first qualifying index.

    Fold 1 gets delta * shrink < delta and fold 2 gets delta / shrink, so the
    two-fold prefix reaches delta^2 exactly; later folds get 1.
    """
    lam1 = delta * shrink
    lam2 = min(1.0, delta / shrink)
    return (lam1, lam2) + (1.0,) * (k - 2)


def product_of(a: Adversary, k: int) -> Adversary:
    return product_adversary(a, k)
