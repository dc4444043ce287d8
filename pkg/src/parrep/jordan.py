"""Jordan decomposition of a pair of projectors and the tools built on it."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .qops import DensityOperator, PureState, trace_distance

GROUP_TOL = 1e-7
CHECK_TOL = 1e-9


def _range_basis(p: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((p + p.conj().T) / 2)
    return v[:, w > 0.5]


def _require_projector(p: np.ndarray, name: str) -> np.ndarray:
    p = np.asarray(p, dtype=complex)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ValueError(f"{name} must be square")
    if np.linalg.norm(p - p.conj().T) > 1e-8 or np.linalg.norm(p @ p - p) > 1e-8:
        raise ValueError(f"{name} is not a projector")
    return (p + p.conj().T) / 2


@dataclass(frozen=True)
class JordanDecomposition:
    """Blocks of the joint invariant-subspace decomposition of two projectors.

    Column j of v1, v0, w1, w0 holds the block's basis vectors; absent vectors
    are zero columns.  dims[j] is 1 or 2 and values[j] = |<v1_j|w1_j>|^2.
    """

    pa: np.ndarray
    pb: np.ndarray
    v1: np.ndarray
    v0: np.ndarray
    w1: np.ndarray
    w0: np.ndarray
    values: np.ndarray
    dims: np.ndarray

    @property
    def num_blocks(self) -> int:
        return int(self.values.size)

    @property
    def dim(self) -> int:
        return self.pa.shape[0]

    @property
    def has_v1(self) -> np.ndarray:
        return np.linalg.norm(self.v1, axis=0) > 0.5

    @property
    def has_w1(self) -> np.ndarray:
        return np.linalg.norm(self.w1, axis=0) > 0.5

    def block_projector(self, j: int) -> np.ndarray:
        return np.outer(self.v1[:, j], self.v1[:, j].conj()) + np.outer(self.v0[:, j], self.v0[:, j].conj())

    def block_weights(self, rho) -> np.ndarray:
        """Tr(Pi_j rho) for every block."""
        m = rho.matrix if isinstance(rho, DensityOperator) else np.asarray(rho)
        if m.ndim == 1:
            return np.abs(self.v1.conj().T @ m) ** 2 + np.abs(self.v0.conj().T @ m) ** 2
        return (np.einsum("ij,ik,kj->j", self.v1.conj(), m, self.v1)
                + np.einsum("ij,ik,kj->j", self.v0.conj(), m, self.v0)).real

    def a_weights(self, rho) -> np.ndarray:
        """<v1_j|rho|v1_j> for every block."""
        m = rho.matrix if isinstance(rho, DensityOperator) else np.asarray(rho)
        if m.ndim == 1:
            return np.abs(self.v1.conj().T @ m) ** 2
        return np.einsum("ij,ik,kj->j", self.v1.conj(), m, self.v1).real

    def zero_projector(self) -> np.ndarray:
        """Sum of block projectors with value 0."""
        sel = self.values <= GROUP_TOL
        return self.v1[:, sel] @ self.v1[:, sel].conj().T + self.v0[:, sel] @ self.v0[:, sel].conj().T

    def pseudo_inverse_weights(self) -> np.ndarray:
        """Coefficients of E = sum_{p_j > 0} Pi_j / p_j."""
        out = np.zeros_like(self.values)
        pos = self.values > GROUP_TOL
        out[pos] = 1.0 / self.values[pos]
        return out

    def e_operator(self) -> np.ndarray:
        c = self.pseudo_inverse_weights()
        return (self.v1 * c) @ self.v1.conj().T + (self.v0 * c) @ self.v0.conj().T


def jordan_decompose(pa, pb) -> JordanDecomposition:
    """Split the space into 1- and 2-dimensional subspaces invariant under both projectors."""
    pa = _require_projector(pa, "pa")
    pb = _require_projector(pb, "pb")
    if pa.shape != pb.shape:
        raise ValueError("projectors act on different spaces")
    d = pa.shape[0]
    qa = _range_basis(pa)
    cols = {"v1": [], "v0": [], "w1": [], "w0": []}
    values, dims = [], []
    zero = np.zeros(d, dtype=complex)

    def push(v1, v0, w1, w0, p, dim):
        cols["v1"].append(v1)
        cols["v0"].append(v0)
        cols["w1"].append(w1)
        cols["w0"].append(w0)
        values.append(p)
        dims.append(dim)

    if qa.shape[1]:
        m = qa.conj().T @ pb @ qa
        ev, c = np.linalg.eigh((m + m.conj().T) / 2)
        ev = np.clip(ev, 0.0, 1.0)
        order = np.argsort(-ev, kind="stable")
        for idx in order:
            p = float(ev[idx])
            v1 = qa @ c[:, idx]
            if p >= 1 - GROUP_TOL:
                w = pb @ v1
                push(v1, zero, w / np.linalg.norm(w), zero, 1.0, 1)
            elif p <= GROUP_TOL:
                push(v1, zero, zero, v1, 0.0, 1)
            else:
                w1 = pb @ v1 / np.sqrt(p)
                v0 = w1 - np.sqrt(p) * v1
                v0 /= np.linalg.norm(v0)
                w0 = v1 - np.sqrt(p) * w1
                w0 /= np.linalg.norm(w0)
                push(v1, v0, w1, w0, p, 2)
    covered = np.stack(cols["v1"] + cols["v0"], axis=1) if values else np.zeros((d, 0), dtype=complex)
    comp = np.eye(d) - covered @ covered.conj().T
    qc = _range_basis(comp)
    if qc.shape[1]:
        m = qc.conj().T @ pb @ qc
        ev, c = np.linalg.eigh((m + m.conj().T) / 2)
        for idx in np.argsort(-ev, kind="stable"):
            u = qc @ c[:, idx]
            if ev[idx] > 0.5:
                push(zero, u, u, zero, 0.0, 1)
            else:
                push(zero, u, zero, u, 0.0, 1)
    stack = {k: np.stack(v, axis=1) for k, v in cols.items()}
    return JordanDecomposition(pa, pb, stack["v1"], stack["v0"], stack["w1"], stack["w0"],
                               np.array(values, dtype=float), np.array(dims, dtype=int))


def jordan_measure(d: JordanDecomposition, psi: PureState | np.ndarray,
                   rng: np.random.Generator) -> tuple[int, np.ndarray]:
    """Measure which Jordan block the state lies in; returns (block index, normalized post-state)."""
    v = psi.amplitudes if isinstance(psi, PureState) else np.asarray(psi, dtype=complex)
    norm = np.linalg.norm(v)
    if norm == 0:
        raise ValueError("cannot measure the zero vector")
    probs = d.block_weights(v / norm)
    probs = probs / probs.sum()
    j = int(rng.choice(probs.size, p=probs))
    post = d.block_projector(j) @ v
    return j, post / np.linalg.norm(post)


class PseudoinverseDiagnostics(NamedTuple):
    e_expectation: float
    zero_weight: float
    td_bound: float
    td_actual: float


def _check_commutes(d: JordanDecomposition, m: np.ndarray) -> None:
    if np.linalg.norm(d.pa @ m - m @ d.pa) > 1e-8:
        raise ValueError("state does not commute with the first projector")


def pseudoinverse_state(d: JordanDecomposition, rho: DensityOperator | np.ndarray
                        ) -> tuple[np.ndarray, PseudoinverseDiagnostics]:
    """State supported in the second projector whose block weights are those of rho divided by p_j.

    The first-projector part of rho moves along v1 -> w1 and the orthogonal
    part along v0 -> w1, each block rescaled by 1/sqrt(p_j).
    """
    m = rho.matrix if isinstance(rho, DensityOperator) else np.asarray(rho, dtype=complex)
    _check_commutes(d, m)
    inv = d.pseudo_inverse_weights()
    e_val = float(np.trace(d.e_operator() @ m).real)
    if e_val <= 1e-14:
        raise ValueError("Tr(E rho) is zero")
    scale = np.sqrt(inv)
    x = (d.w1 * scale) @ d.v1.conj().T
    y = (d.w1 * scale) @ d.v0.conj().T
    ra = d.pa @ m @ d.pa
    rb = m - ra
    sigma = (x @ ra @ x.conj().T + y @ rb @ y.conj().T) / e_val
    sigma = (sigma + sigma.conj().T) / 2
    z = float(np.trace(d.zero_projector() @ m).real)
    pas = d.pa @ sigma @ d.pa
    tr = np.trace(pas).real
    td = trace_distance(m, pas / tr) if tr > 1e-14 else 1.0
    return sigma, PseudoinverseDiagnostics(e_val, z, float(np.sqrt(max(z, 0.0))), float(td))


def swap_unitary(d: JordanDecomposition) -> np.ndarray:
    """Unitary exchanging v1 and v0 inside every 2-dimensional block, identity elsewhere."""
    two = (d.dims == 2) & (d.values > GROUP_TOL) & (d.values < 1 - GROUP_TOL)
    u = np.eye(d.dim, dtype=complex)
    a, b = d.v1[:, two], d.v0[:, two]
    u -= a @ a.conj().T + b @ b.conj().T
    u += a @ b.conj().T + b @ a.conj().T
    return u


def rotate_to_subspace(d: JordanDecomposition, rho: DensityOperator | np.ndarray) -> np.ndarray:
    """Move the part of rho outside the first projector into it without changing block weights."""
    m = rho.matrix if isinstance(rho, DensityOperator) else np.asarray(rho, dtype=complex)
    _check_commutes(d, m)
    if np.trace(d.zero_projector() @ m).real > 1e-8:
        raise ValueError("state has weight on value-zero blocks")
    u = swap_unitary(d)
    comp = np.eye(d.dim) - d.pa
    out = d.pa @ m @ d.pa + u @ comp @ m @ comp @ u.conj().T
    return (out + out.conj().T) / 2
