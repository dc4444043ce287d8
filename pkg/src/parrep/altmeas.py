"""Alternating projective measurements and the EffJor almost-projective measurement."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy import stats

from .jordan import JordanDecomposition, jordan_decompose
from .qops import DensityOperator, PureState

FORCE_TOL = 1e-14
EXACT_MAX_T = 12
ABORT_VALUE = -np.inf


@dataclass(frozen=True)
class OutcomeTrace:
    bits: tuple[int, ...]
    labels: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.bits)


def _labels(t: int, first: str = "A") -> tuple[str, ...]:
    other = "B" if first == "A" else "A"
    return tuple(first if i % 2 == 0 else other for i in range(t))


def mw_dist_sample(p: float, T: int, rng: np.random.Generator) -> OutcomeTrace:
    """b_0 = 1 implicitly; each b_i repeats b_{i-1} with probability p."""
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    if T < 1:
        raise ValueError("T must be at least 1")
    flips = rng.random(T) >= p
    bits = np.bitwise_xor.accumulate(np.concatenate([[1], flips.astype(int)]))[1:]
    return OutcomeTrace(tuple(int(b) for b in bits), _labels(T))


def mw_dist_pmf(p: float, T: int) -> dict[tuple[int, ...], float]:
    """Exact probability of every bit string under the repeat-with-probability-p chain."""
    out = {}
    for bits in itertools.product((0, 1), repeat=T):
        prev, prob = 1, 1.0
        for b in bits:
            prob *= p if b == prev else 1 - p
            prev = b
        out[bits] = prob
    return out


def num_reps(bits: Sequence[int]) -> float:
    """Fraction of adjacent equal pairs."""
    b = np.asarray(bits, dtype=int)
    if b.size < 2:
        raise ValueError("num_reps needs at least two bits")
    return float(np.mean(b[1:] == b[:-1]))


def _project(p: np.ndarray, v: np.ndarray, rng: np.random.Generator) -> tuple[int, np.ndarray]:
    """Binary projective measurement of a normalized vector."""
    pv = p @ v
    q = np.vdot(pv, pv).real
    if q < FORCE_TOL:
        bit = 0
    elif 1 - q < FORCE_TOL:
        bit = 1
    else:
        bit = int(rng.random() < q)
    out, norm_sq = (pv, q) if bit else (v - pv, 1 - q)
    return bit, out / math.sqrt(norm_sq)


def alternate_measure(pa, pb, psi: PureState | np.ndarray, T: int,
                      rng: np.random.Generator) -> tuple[OutcomeTrace, np.ndarray]:
    """Measure pa, pb, pa, ... T times in total."""
    v = psi.amplitudes if isinstance(psi, PureState) else np.asarray(psi, dtype=complex)
    n = np.linalg.norm(v)
    if n == 0:
        raise ValueError("cannot measure the zero vector")
    v = v / n
    bits = []
    for t in range(T):
        bit, v = _project(pa if t % 2 == 0 else pb, v, rng)
        bits.append(bit)
    return OutcomeTrace(tuple(bits), _labels(T)), v


def alternate_distribution(pa, pb, psi: PureState | np.ndarray, T: int) -> dict[tuple[int, ...], float]:
    """Exact outcome law of `alternate_measure` by enumerating every branch."""
    if T > EXACT_MAX_T:
        raise ValueError(f"exact enumeration limited to T <= {EXACT_MAX_T}")
    v = psi.amplitudes if isinstance(psi, PureState) else np.asarray(psi, dtype=complex)
    n = np.linalg.norm(v)
    if n == 0:
        raise ValueError("cannot measure the zero vector")
    pa, pb = np.asarray(pa), np.asarray(pb)
    branches = {(): v / n}
    for t in range(T):
        p = pa if t % 2 == 0 else pb
        nxt = {}
        for bits, u in branches.items():
            pu = p @ u
            nxt[bits + (1,)] = pu
            nxt[bits + (0,)] = u - pu
        branches = nxt
    return {bits: float(np.vdot(u, u).real) for bits, u in branches.items()}


# ---------------------------------------------------------------------------
# EffJor


class Schedule(NamedTuple):
    T: int
    kappa: int


def effjor_schedule(eps: float, delta: float, schedule: str = "hoeffding") -> Schedule:
    """Number of recorded alternations T and repair budget kappa.

    "hoeffding" picks T so two independent runs on the same Jordan block
    disagree by more than eps with probability at most delta/2; "sketch" uses
    T = 2 ceil(ln(1/delta) / eps^2).
    """
    if not (0 < eps < 1 and 0 < delta < 1):
        raise ValueError("eps and delta must lie in (0, 1)")
    if schedule == "hoeffding":
        T = 2 * math.ceil(8 * math.log(4 / delta) / eps ** 2)
    elif schedule == "sketch":
        T = 2 * math.ceil(math.log(1 / delta) / eps ** 2)
    else:
        raise ValueError(f"unknown schedule {schedule!r}")
    return Schedule(T, math.ceil(3 * math.log2(2 / delta)))


def dilated_value(p):
    """Jordan value of a block after the two-qubit dilation."""
    return np.asarray(p) / 4 + 0.25


def dilate(pa: np.ndarray, pb: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Projectors on H (x) two qubits: pa(x)|00><00| and pb(x)|++><++| + I(x)|--><--|."""
    d = pa.shape[0]
    zz = np.zeros((4, 4))
    zz[0, 0] = 1
    plus = np.full(4, 0.5)
    minus = np.array([0.5, -0.5, -0.5, 0.5])
    return np.kron(pa, zz), np.kron(pb, np.outer(plus, plus)) + np.kron(np.eye(d), np.outer(minus, minus))


class EffJorResult(NamedTuple):
    outcome: float | None
    post_state: np.ndarray
    aborted: bool
    bits: tuple[int, ...]
    applications: int


def _measure_density(p: np.ndarray, rho: np.ndarray, rng) -> tuple[int, np.ndarray]:
    prho = p @ rho @ p
    q = float(np.trace(prho).real)
    if q < FORCE_TOL:
        bit = 0
    elif 1 - q < FORCE_TOL:
        bit = 1
    else:
        bit = int(rng.random() < q)
    if bit:
        out = prho
    else:
        c = np.eye(p.shape[0]) - p
        out = c @ rho @ c
    return bit, out / np.trace(out).real


def effjor(pa, pb, rho: DensityOperator | np.ndarray, eps: float, delta: float,
           rng: np.random.Generator, schedule: str = "hoeffding") -> EffJorResult:
    """Run EffJor step by step on a density matrix.

    The returned post-state has the two dilation qubits traced out.
    """
    pa, pb = np.asarray(pa, dtype=complex), np.asarray(pb, dtype=complex)
    m = rho.matrix if isinstance(rho, DensityOperator) else np.asarray(rho, dtype=complex)
    d = m.shape[0]
    T, kappa = effjor_schedule(eps, delta, schedule)
    qa, qb = dilate(pa, pb)
    anc = np.zeros((4, 4))
    anc[0, 0] = 1
    state = np.kron(m, anc)
    state /= np.trace(state).real

    def reduce(s):
        return np.einsum("iaja->ij", s.reshape(d, 4, d, 4))

    bit, state = _measure_density(qa, state, rng)
    used = 1
    if bit == 0:
        return EffJorResult(None, reduce(state), True, (), used)
    bits = []
    for t in range(T):
        b, state = _measure_density(qb if t % 2 == 0 else qa, state, rng)
        bits.append(b)
        used += 1
    last_a = bits[-1] if T % 2 == 0 else None
    steps = 0
    while last_a != 1 and steps < kappa:
        _, state = _measure_density(qb, state, rng)
        last_a, state = _measure_density(qa, state, rng)
        used += 2
        steps += 1
    outcome = 4 * (num_reps([1] + bits) - 0.25)
    return EffJorResult(outcome, reduce(state), False, tuple(bits), used)


class BatchResult(NamedTuple):
    outcomes: np.ndarray  # (trials, runs); nan marks an abort
    blocks: np.ndarray  # sampled Jordan block per trial (-1 for initial abort)
    repair_failed: np.ndarray  # (trials, runs)


def effjor_batch(values: np.ndarray, weights: np.ndarray, eps: float, delta: float,
                 trials: int, seed: int, runs: int = 2, schedule: str = "hoeffding",
                 first_trial: int = 0) -> BatchResult:
    """Sequential EffJor runs sampled block by block.

    Every operation EffJor performs commutes with the Jordan block projectors,
    so outcome statistics follow from sampling a block with probability
    `weights[j]` (the first-projector weight of the input on block j) and then
    running the two-state alternation chain with the dilated value.  The
    missing mass 1 - sum(weights) is the initial abort probability.  A run
    whose repair phase fails leaves the state outside the first projector; the
    following runs on that trial are recorded as aborts.
    """
    values = np.asarray(values, dtype=float)
    weights = np.clip(np.asarray(weights, dtype=float), 0, None)
    T, kappa = effjor_schedule(eps, delta, schedule)
    dv = dilated_value(values)
    stay_fail = 1 - 2 * dv * (1 - dv)
    total = weights.sum()
    if total > 1 + 1e-9:
        raise ValueError("block weights exceed one")
    probs = np.append(weights, max(0.0, 1 - total))
    probs /= probs.sum()
    outcomes = np.full((trials, runs), np.nan)
    blocks = np.full(trials, -1)
    failed = np.zeros((trials, runs), dtype=bool)
    for n in range(trials):
        rng = np.random.default_rng([seed, first_trial + n])
        j = int(rng.choice(probs.size, p=probs))
        if j == values.size:
            continue
        blocks[n] = j
        for r in range(runs):
            s = rng.binomial(T, dv[j])
            outcomes[n, r] = 4 * s / T - 1
            if (T - s) % 2:  # last recorded first-projector outcome was 0
                if rng.random() < stay_fail[j] ** kappa:
                    failed[n, r] = True
                    break
    return BatchResult(outcomes, blocks, failed)


def effjor_outcome_pmf(values: np.ndarray, weights: np.ndarray, eps: float, delta: float,
                       schedule: str = "hoeffding") -> tuple[np.ndarray, np.ndarray]:
    """Exact law of a single EffJor outcome: (support, probabilities); abort mass omitted."""
    T, _ = effjor_schedule(eps, delta, schedule)
    s = np.arange(T + 1)
    pmf = np.zeros(T + 1)
    for p, w in zip(values, weights):
        pmf += w * stats.binom.pmf(s, T, float(dilated_value(p)))
    return 4 * s / T - 1, pmf


# ---------------------------------------------------------------------------
# coherent measurement handles


@dataclass(frozen=True)
class DilatedMeasurement:
    """Measurement with a Naimark unitary that acts blockwise in a fixed basis.

    Basis vector b_c (column c of `basis`) is mapped to b_c (x) phi_c where
    phi_c = amplitudes[c] is a unit vector over outcome slots, so outcome o
    has value values[o].  The unitary is sum_c |b_c><b_c| (x) R_c with R_c the
    Householder reflection exchanging |0> and phi_c.
    """

    basis: np.ndarray
    amplitudes: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=float)
        if amp.shape != (self.basis.shape[1], self.values.size):
            raise ValueError("amplitude table shape mismatch")
        if np.max(np.abs(np.linalg.norm(amp, axis=1) - 1)) > 1e-9:
            raise ValueError("amplitude rows must be unit vectors")
        if np.any(amp[:, 0] < 0):
            raise ValueError("amplitudes on slot 0 must be non-negative")
        u = -amp.copy()
        u[:, 0] += 1.0
        object.__setattr__(self, "_house", u)
        object.__setattr__(self, "_house_norm", np.einsum("ij,ij->i", u, u))

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def num_outcomes(self) -> int:
        return self.values.size

    def probabilities(self, x: np.ndarray) -> np.ndarray:
        c = self.basis.conj().T @ x
        return (np.abs(c) ** 2) @ self.amplitudes ** 2

    def measure(self, x: np.ndarray, rng: np.random.Generator) -> tuple[float, np.ndarray]:
        """Sample an outcome value and the normalized post-measurement state."""
        x = np.asarray(x, dtype=complex)
        x = x / np.linalg.norm(x)
        c = self.basis.conj().T @ x
        probs = (np.abs(c) ** 2) @ self.amplitudes ** 2
        probs = probs / probs.sum()
        o = int(rng.choice(probs.size, p=probs))
        post = self.basis @ (c * self.amplitudes[:, o])
        return float(self.values[o]), post / np.linalg.norm(post)

    def reflect(self, z: np.ndarray) -> np.ndarray:
        """Apply the Naimark unitary (self-inverse) to a d x n array over H (x) W."""
        zt = self.basis.conj().T @ z
        u, un = self._house, self._house_norm
        coef = np.zeros(zt.shape[0], dtype=complex)
        nz = un > 1e-30
        coef[nz] = np.einsum("ij,ij->i", u[nz], zt[nz]) / un[nz]
        zt = zt - 2 * coef[:, None] * u
        return self.basis @ zt

    def project(self, z: np.ndarray, threshold: float, side: str) -> np.ndarray:
        """U^dag (I (x) sum over outcomes `side` threshold) U applied to z."""
        if side == "geq":
            mask = self.values >= threshold
        elif side == "lt":
            mask = ~(self.values >= threshold)
        else:
            raise ValueError(f"unknown side {side!r}")
        return self.reflect(self.reflect(z) * mask[None, :])


def _binomial_rows(T: int, p_values: np.ndarray) -> np.ndarray:
    s = np.arange(T + 1)
    return np.sqrt(stats.binom.pmf(s[None, :], T, dilated_value(p_values)[:, None]))


def effjor_handle(pa, pb, eps: float, delta: float, schedule: str = "hoeffding",
                  T: int | None = None, decomposition: JordanDecomposition | None = None,
                  trim: float = 1e-12) -> DilatedMeasurement:
    """Coherent model of EffJor: a first-projector block with value p reports 4 Bin(T, p/4 + 1/4)/T - 1.

    States outside the first projector report the abort value -inf.  Outcome
    slots whose amplitude is below `trim` for every block are dropped and the
    rows renormalized.
    """
    d = decomposition if decomposition is not None else jordan_decompose(pa, pb)
    if T is None:
        T = effjor_schedule(eps, delta, schedule).T
    has = d.has_v1
    basis_a = d.v1[:, has]
    other = d.v0[:, ~has]
    extra = d.v0[:, has & (d.dims == 2)]
    basis = np.concatenate([basis_a, extra, other], axis=1)
    n_a = basis_a.shape[1]
    amp = _binomial_rows(T, d.values[has])
    keep = amp.max(axis=0) > trim if n_a else np.zeros(T + 1, dtype=bool)
    amp = amp[:, keep]
    if n_a:
        amp /= np.linalg.norm(amp, axis=1, keepdims=True)
    n_out = int(keep.sum())
    rows = np.zeros((basis.shape[1], n_out + 1))
    rows[:n_a, :n_out] = amp
    rows[n_a:, n_out] = 1.0
    values = np.append((4 * np.arange(T + 1) / T - 1)[keep], ABORT_VALUE)
    return DilatedMeasurement(basis, rows, values)


def noisy_spectral_handle(h: np.ndarray, eps: float, grid: int | None = None) -> DilatedMeasurement:
    """Measure the eigenbasis of a Hermitian h, reporting a value within eps/2 of the eigenvalue.

    Two consecutive outcomes on any state therefore differ by at most eps.
    """
    h = np.asarray(h, dtype=complex)
    w, v = np.linalg.eigh((h + h.conj().T) / 2)
    lo, hi = float(w.min()) - eps, float(w.max()) + eps
    grid = grid or max(8, int(math.ceil((hi - lo) / (eps / 4))) + 1)
    values = np.linspace(lo, hi, grid)
    rows = np.zeros((w.size, grid))
    for c, lam in enumerate(w):
        near = np.abs(values - lam) <= eps / 2 - 1e-12
        if not near.any():
            near[np.argmin(np.abs(values - lam))] = True
        rows[c, near] = 1.0
        rows[c] /= np.linalg.norm(rows[c])
    return DilatedMeasurement(v, rows, values)
