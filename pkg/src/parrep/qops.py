"""Dense linear algebra over labeled multi-register Hilbert spaces."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

TOL = 1e-9
NORM_TOL = 1e-10
PSD_FLOOR = 1e-9
DIM_CAP = 4096

KINDS = ("unitary", "projector", "povm_element", "general")


class DimensionError(ValueError):
    """Raised when a Hilbert space would exceed the configured cap."""


def check_dim(total: int, cap: int | None = DIM_CAP) -> None:
    if cap is not None and total > cap:
        raise DimensionError(f"total dimension {total} exceeds cap {cap}")


@dataclass(frozen=True)
class RegisterLayout:
    """Ordered list of (label, dimension) pairs."""

    registers: tuple[tuple[str, int], ...] = ()

    def __post_init__(self):
        regs = tuple((str(lab), int(d)) for lab, d in self.registers)
        object.__setattr__(self, "registers", regs)
        labels = [lab for lab, _ in regs]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate register labels in {labels}")
        for lab, d in regs:
            if d < 1:
                raise ValueError(f"register {lab!r} has dimension {d} < 1")

    @classmethod
    def of(cls, *pairs: tuple[str, int]) -> "RegisterLayout":
        return cls(tuple(pairs))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(lab for lab, _ in self.registers)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(d for _, d in self.registers)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64)) if self.registers else 1

    def __len__(self) -> int:
        return len(self.registers)

    def __contains__(self, label: str) -> bool:
        return label in self.labels

    def dim(self, label: str) -> int:
        for lab, d in self.registers:
            if lab == label:
                return d
        raise KeyError(f"unknown register {label!r}")

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"unknown register {label!r}") from None

    def concat(self, other: "RegisterLayout") -> "RegisterLayout":
        return RegisterLayout(self.registers + other.registers)

    __add__ = concat

    def select(self, labels: Iterable[str]) -> "RegisterLayout":
        return RegisterLayout(tuple((lab, self.dim(lab)) for lab in labels))

    def without(self, labels: Iterable[str]) -> "RegisterLayout":
        drop = set(labels)
        for lab in drop:
            self.index(lab)
        return RegisterLayout(tuple(r for r in self.registers if r[0] not in drop))

    def relabel(self, mapping) -> "RegisterLayout":
        """Rename registers; `mapping` is a dict or a callable on labels."""
        fn = mapping if callable(mapping) else (lambda lab: mapping.get(lab, lab))
        return RegisterLayout(tuple((fn(lab), d) for lab, d in self.registers))

    def to_dict(self) -> list:
        return [[lab, d] for lab, d in self.registers]


EMPTY = RegisterLayout()


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PureState:
    """Possibly subnormalized state vector on a layout."""

    layout: RegisterLayout
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape[0] != self.layout.total_dim:
            raise ValueError(
                f"amplitude length {amps.shape[0]} != layout dim {self.layout.total_dim}")
        object.__setattr__(self, "amplitudes", _frozen(amps))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    @property
    def normalized(self) -> bool:
        return abs(self.norm - 1.0) <= NORM_TOL

    def normalize(self) -> "PureState":
        n = self.norm
        if n == 0:
            raise ValueError("cannot normalize the zero vector")
        return PureState(self.layout, self.amplitudes / n)

    def density(self) -> "DensityOperator":
        v = self.amplitudes
        return DensityOperator(self.layout, np.outer(v, v.conj()))

    def reorder(self, labels: Sequence[str]) -> "PureState":
        return PureState(self.layout.select(labels),
                         _permute_vector(self.amplitudes, self.layout, labels))

    def relabel(self, mapping) -> "PureState":
        return PureState(self.layout.relabel(mapping), self.amplitudes)


def basis_state(layout: RegisterLayout, index: int | Sequence[int] = 0) -> PureState:
    """Computational basis vector; `index` is flat or one digit per register."""
    if not isinstance(index, (int, np.integer)):
        index = int(np.ravel_multi_index(tuple(index), layout.dims)) if layout.dims else 0
    v = np.zeros(layout.total_dim, dtype=complex)
    v[index] = 1.0
    return PureState(layout, v)


def zero_state(layout: RegisterLayout) -> PureState:
    return basis_state(layout, 0)


@dataclass(frozen=True)
class OperatorMatrix:
    """Matrix from `in_layout` to `out_layout` with a validated kind tag."""

    in_layout: RegisterLayout
    out_layout: RegisterLayout
    entries: np.ndarray = field(repr=False)
    kind: str = "general"

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=complex)
        shape = (self.out_layout.total_dim, self.in_layout.total_dim)
        if m.ndim != 2 or m.shape != shape:
            raise ValueError(f"entries shape {m.shape} != {shape}")
        if self.kind not in KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}")
        object.__setattr__(self, "entries", _frozen(m))
        square = shape[0] == shape[1]
        if self.kind in ("unitary", "projector") and not square:
            raise ValueError(f"{self.kind} must be square")
        if self.kind == "unitary":
            err = np.linalg.norm(m.conj().T @ m - np.eye(shape[1]))
            if err > TOL:
                raise ValueError(f"not unitary (residual {err:.2e})")
        elif self.kind == "projector":
            if not _hermitian(m) or np.linalg.norm(m @ m - m) > TOL:
                raise ValueError("not a Hermitian idempotent")
        elif self.kind == "povm_element":
            if not square:
                if np.linalg.norm(m, 2) > 1 + TOL:
                    raise ValueError("rectangular POVM factor has norm above 1")
            else:
                if not _hermitian(m):
                    raise ValueError("POVM element not Hermitian")
                ev = np.linalg.eigvalsh((m + m.conj().T) / 2)
                if ev.min() < -TOL or ev.max() > 1 + TOL:
                    raise ValueError("POVM element spectrum outside [0, 1]")

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    @property
    def is_square(self) -> bool:
        return self.shape[0] == self.shape[1]

    def dagger(self) -> "OperatorMatrix":
        kind = self.kind if self.kind in ("unitary", "projector") else "general"
        if self.kind == "povm_element" and self.is_square:
            kind = "povm_element"
        return OperatorMatrix(self.out_layout, self.in_layout, self.entries.conj().T, kind)

    def relabel(self, mapping) -> "OperatorMatrix":
        return OperatorMatrix(self.in_layout.relabel(mapping), self.out_layout.relabel(mapping),
                              self.entries, self.kind)

    def with_kind(self, kind: str) -> "OperatorMatrix":
        return OperatorMatrix(self.in_layout, self.out_layout, self.entries, kind)


def _hermitian(m: np.ndarray, tol: float = TOL) -> bool:
    return m.shape[0] == m.shape[1] and np.linalg.norm(m - m.conj().T) <= tol * max(1.0, np.linalg.norm(m))


def operator(layout: RegisterLayout, entries, kind: str = "general") -> OperatorMatrix:
    """Square operator acting within `layout`."""
    return OperatorMatrix(layout, layout, entries, kind)


def identity(layout: RegisterLayout) -> OperatorMatrix:
    return OperatorMatrix(layout, layout, np.eye(layout.total_dim), "unitary")


@dataclass(frozen=True)
class DensityOperator:
    """Hermitian PSD matrix with trace at most one."""

    layout: RegisterLayout
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        d = self.layout.total_dim
        if m.shape != (d, d):
            raise ValueError(f"matrix shape {m.shape} != {(d, d)}")
        if not _hermitian(m):
            raise ValueError("density operator not Hermitian")
        m = (m + m.conj().T) / 2
        w, v = np.linalg.eigh(m)
        if w.size and w.min() < -PSD_FLOOR:
            raise ValueError(f"density operator has eigenvalue {w.min():.3e} below floor")
        if w.size and w.min() < 0:
            w = np.clip(w, 0, None)
            m = (v * w) @ v.conj().T
        if np.trace(m).real > 1 + TOL:
            raise ValueError(f"trace {np.trace(m).real:.12f} exceeds 1")
        object.__setattr__(self, "matrix", _frozen(m))

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def normalize(self) -> "DensityOperator":
        t = self.trace
        if t <= 0:
            raise ValueError("cannot normalize a zero operator")
        return DensityOperator(self.layout, self.matrix / t)

    def reorder(self, labels: Sequence[str]) -> "DensityOperator":
        perm = _permute_matrix(self.matrix, self.layout, labels, self.layout, labels)
        return DensityOperator(self.layout.select(labels), perm)

    def expectation(self, op: OperatorMatrix) -> float:
        m = embed(op, self.layout, op.in_layout.labels).entries if op.in_layout != self.layout else op.entries
        return float(np.trace(m @ self.matrix).real)


# ---------------------------------------------------------------------------
# register permutation helpers


def _permute_vector(v: np.ndarray, layout: RegisterLayout, order: Sequence[str]) -> np.ndarray:
    if not layout.registers:
        return np.asarray(v).copy()
    axes = [layout.index(lab) for lab in order]
    if len(axes) != len(layout):
        raise ValueError("reorder must list every register exactly once")
    return np.asarray(v).reshape(layout.dims).transpose(axes).reshape(-1)


def _permute_matrix(m, out_layout, out_order, in_layout, in_order) -> np.ndarray:
    no, ni = len(out_layout), len(in_layout)
    t = np.asarray(m).reshape(out_layout.dims + in_layout.dims)
    axes = [out_layout.index(lab) for lab in out_order] + [no + in_layout.index(lab) for lab in in_order]
    if len(out_order) != no or len(in_order) != ni:
        raise ValueError("reorder must list every register exactly once")
    return t.transpose(axes).reshape(out_layout.total_dim, in_layout.total_dim)


def reorder_operator(op: OperatorMatrix, in_order: Sequence[str], out_order: Sequence[str]) -> OperatorMatrix:
    m = _permute_matrix(op.entries, op.out_layout, out_order, op.in_layout, in_order)
    return OperatorMatrix(op.in_layout.select(in_order), op.out_layout.select(out_order), m, op.kind)


# ---------------------------------------------------------------------------
# core operations


def tensor(a, b, cap: int | None = DIM_CAP):
    """Kronecker product with concatenated layouts."""
    if isinstance(a, PureState) and isinstance(b, PureState):
        layout = a.layout + b.layout
        check_dim(layout.total_dim, cap)
        return PureState(layout, np.kron(a.amplitudes, b.amplitudes))
    if isinstance(a, OperatorMatrix) and isinstance(b, OperatorMatrix):
        in_l, out_l = a.in_layout + b.in_layout, a.out_layout + b.out_layout
        check_dim(max(in_l.total_dim, out_l.total_dim), cap)
        kind = a.kind if a.kind == b.kind else "general"
        if kind == "povm_element" and not (a.is_square and b.is_square):
            kind = "general"
        return OperatorMatrix(in_l, out_l, np.kron(a.entries, b.entries), kind)
    raise TypeError("tensor needs two PureStates or two OperatorMatrix values")


def tensor_all(items: Sequence, cap: int | None = DIM_CAP):
    out = items[0]
    for it in items[1:]:
        out = tensor(out, it, cap)
    return out


def embed(op: OperatorMatrix, target: RegisterLayout, on: Sequence[str] | None = None) -> OperatorMatrix:
    """Extend a square operator on registers `on` by the identity on the rest of `target`."""
    if op.in_layout.dims != op.out_layout.dims:
        raise ValueError("embed needs an operator whose input and output dimensions agree")
    on = tuple(op.in_layout.labels if on is None else on)
    if len(on) != len(op.in_layout):
        raise ValueError("`on` must name one target register per operator register")
    for lab, d in zip(on, op.in_layout.dims):
        if target.dim(lab) != d:
            raise ValueError(f"dimension mismatch on register {lab!r}")
    rest = target.without(on)
    full = np.kron(op.entries, np.eye(rest.total_dim))
    order_layout = target.select(on) + rest
    m = _permute_matrix(full, order_layout, target.labels, order_layout, target.labels)
    kind = op.kind if op.kind in ("unitary", "projector", "povm_element") else "general"
    return OperatorMatrix(target, target, m, kind)


def apply_array(op: OperatorMatrix, layout: RegisterLayout, arr: np.ndarray,
                on: Sequence[str] | None = None) -> tuple[RegisterLayout, np.ndarray]:
    """Apply `op` to the leading axis of `arr` (shape (layout.total_dim, ...)).

    The registers `on` (default: the operator's input labels) are consumed and
    replaced by the operator's output registers, which are placed first.
    """
    on = tuple(op.in_layout.labels if on is None else on)
    for lab, d in zip(on, op.in_layout.dims):
        if layout.dim(lab) != d:
            raise ValueError(f"dimension mismatch on register {lab!r}")
    if len(on) != len(op.in_layout):
        raise ValueError("operator register count mismatch")
    rest = layout.without(on)
    clash = set(op.out_layout.labels) & set(rest.labels)
    if clash:
        raise ValueError(f"output registers collide with existing ones: {sorted(clash)}")
    arr = np.asarray(arr)
    batch = arr.shape[1:]
    t = arr.reshape(layout.dims + batch) if layout.registers else arr.reshape(batch)
    axes = [layout.index(lab) for lab in on] + [layout.index(lab) for lab in rest.labels]
    nb = len(layout)
    t = t.transpose(axes + list(range(nb, nb + len(batch))))
    t = t.reshape(op.in_layout.total_dim, -1)
    out = op.entries @ t
    new_layout = op.out_layout + rest
    return new_layout, out.reshape((new_layout.total_dim,) + batch)


def apply(op: OperatorMatrix, state: PureState, on: Sequence[str] | None = None) -> PureState:
    layout, v = apply_array(op, state.layout, state.amplitudes, on)
    return PureState(layout, v)


def apply_density(op: OperatorMatrix, rho: DensityOperator, on: Sequence[str] | None = None) -> DensityOperator:
    layout, m = apply_array(op, rho.layout, rho.matrix, on)
    _, m2 = apply_array(op, rho.layout, m.conj().T, on)
    return DensityOperator(layout, m2)


def partial_trace(rho: DensityOperator, drop: Sequence[str]) -> DensityOperator:
    """Trace out the registers named in `drop`."""
    drop = tuple(drop)
    for lab in drop:
        rho.layout.index(lab)
    keep = rho.layout.without(drop)
    kd, dd = keep.total_dim, rho.layout.select(drop).total_dim
    order = keep.labels + drop
    m = _permute_matrix(rho.matrix, rho.layout, order, rho.layout, order)
    t = m.reshape(kd, dd, kd, dd)
    return DensityOperator(keep, np.einsum("ajbj->ab", t))


def reduced_state(psi: PureState, keep: Sequence[str]) -> DensityOperator:
    """Reduced density operator of a pure state, computed without the full outer product."""
    keep = tuple(keep)
    rest = psi.layout.without(keep)
    v = _permute_vector(psi.amplitudes, psi.layout, keep + rest.labels)
    a = v.reshape(psi.layout.select(keep).total_dim, rest.total_dim)
    return DensityOperator(psi.layout.select(keep), a @ a.conj().T)


class SVD(NamedTuple):
    left: np.ndarray  # columns |w_i>
    values: np.ndarray  # descending
    right: np.ndarray  # columns |v_i>


def svd(m: OperatorMatrix | np.ndarray) -> SVD:
    """m = sum_i s_i |w_i><v_i| with s_i descending."""
    a = m.entries if isinstance(m, OperatorMatrix) else np.asarray(m, dtype=complex)
    u, s, vh = np.linalg.svd(a, full_matrices=True)
    return SVD(u, s, vh.conj().T)


def eigenspace_projector(h: OperatorMatrix | np.ndarray, threshold: float, side: str,
                         tol: float = TOL) -> OperatorMatrix | np.ndarray:
    """Spectral projector of a Hermitian operator onto eigenvalues `lt`/`leq`/`gt`/`geq` a threshold.

    Eigenvalues within `tol` of the threshold count as equal to it.
    """
    a = h.entries if isinstance(h, OperatorMatrix) else np.asarray(h, dtype=complex)
    if not _hermitian(a):
        raise ValueError("eigenspace_projector needs a Hermitian operator")
    w, v = np.linalg.eigh((a + a.conj().T) / 2)
    if side == "lt":
        sel = w < threshold - tol
    elif side == "leq":
        sel = w <= threshold + tol
    elif side == "geq":
        sel = w >= threshold - tol
    elif side == "gt":
        sel = w > threshold + tol
    else:
        raise ValueError(f"unknown side {side!r}")
    p = v[:, sel] @ v[:, sel].conj().T
    if isinstance(h, OperatorMatrix):
        return OperatorMatrix(h.in_layout, h.out_layout, (p + p.conj().T) / 2, "projector")
    return (p + p.conj().T) / 2


def psd_sqrt(a: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((a + a.conj().T) / 2)
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T


def _mat(x) -> np.ndarray:
    if isinstance(x, DensityOperator):
        return x.matrix
    if isinstance(x, PureState):
        return np.outer(x.amplitudes, x.amplitudes.conj())
    return np.asarray(x, dtype=complex)


def trace_distance(rho, sigma) -> float:
    d = _mat(rho) - _mat(sigma)
    return float(0.5 * np.abs(np.linalg.eigvalsh((d + d.conj().T) / 2)).sum())


def fidelity(rho, sigma) -> float:
    """Squared-convention fidelity (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2."""
    if isinstance(rho, PureState) and isinstance(sigma, PureState):
        return float(abs(np.vdot(rho.amplitudes, sigma.amplitudes)) ** 2)
    # nuclear norm of sqrt(rho) sqrt(sigma); noise-level eigenvalues are zeroed so pure inputs stay exact
    sv = np.linalg.svd(_clean_sqrt(_mat(rho)) @ _clean_sqrt(_mat(sigma)), compute_uv=False)
    return float(min(sv.sum() ** 2, 1.0 + 1e-12))


def _clean_sqrt(a: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((a + a.conj().T) / 2)
    w = np.where(w > 1e-13 * max(1.0, float(w.max())), w, 0.0)
    return (v * np.sqrt(w)) @ v.conj().T


def bures_sq(rho, sigma) -> float:
    return float(2 * (1 - np.sqrt(min(max(fidelity(rho, sigma), 0.0), 1.0))))


class Distances(NamedTuple):
    trace_distance: float
    fidelity: float
    bures_sq: float


def distances(rho: DensityOperator, sigma: DensityOperator) -> Distances:
    if rho.layout.dims != sigma.layout.dims:
        raise ValueError("layout mismatch")
    f = min(max(fidelity(rho, sigma), 0.0), 1.0)
    return Distances(trace_distance(rho, sigma), f, 2 * (1 - np.sqrt(f)))


def operator_norm(m: OperatorMatrix | np.ndarray) -> float:
    a = m.entries if isinstance(m, OperatorMatrix) else np.asarray(m)
    if a.size == 0:
        return 0.0
    return float(np.linalg.norm(a, 2))


# ---------------------------------------------------------------------------
# random objects


def haar_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary from the QR decomposition of a complex Gaussian matrix."""
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def random_state_vector(d: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return v / np.linalg.norm(v)


def random_projector(d: int, rank: int, rng: np.random.Generator) -> np.ndarray:
    u = haar_unitary(d, rng)[:, :rank]
    p = u @ u.conj().T
    return (p + p.conj().T) / 2


def random_density(d: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = d if rank is None else rank
    g = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    m = g @ g.conj().T
    return m / np.trace(m).real


# ---------------------------------------------------------------------------
# JSON


def _cpairs(a: np.ndarray) -> list:
    return np.stack([a.real, a.imag], axis=-1).tolist()


def _from_cpairs(x) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    return a[..., 0] + 1j * a[..., 1]


def to_json(obj) -> str:
    if isinstance(obj, PureState):
        doc = {"type": "state", "layout": obj.layout.to_dict(), "amplitudes": _cpairs(obj.amplitudes)}
    elif isinstance(obj, OperatorMatrix):
        doc = {"type": "operator", "kind": obj.kind, "in_layout": obj.in_layout.to_dict(),
               "out_layout": obj.out_layout.to_dict(), "entries": _cpairs(obj.entries)}
    elif isinstance(obj, DensityOperator):
        doc = {"type": "density", "layout": obj.layout.to_dict(), "matrix": _cpairs(obj.matrix)}
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")
    doc["version"] = 1
    return json.dumps(doc)


def from_json(text: str):
    doc = json.loads(text) if isinstance(text, str) else text
    t = doc["type"]
    if t == "state":
        return PureState(RegisterLayout(tuple(map(tuple, doc["layout"]))), _from_cpairs(doc["amplitudes"]))
    if t == "operator":
        return OperatorMatrix(RegisterLayout(tuple(map(tuple, doc["in_layout"]))),
                              RegisterLayout(tuple(map(tuple, doc["out_layout"]))),
                              _from_cpairs(doc["entries"]), doc["kind"])
    if t == "density":
        return DensityOperator(RegisterLayout(tuple(map(tuple, doc["layout"]))), _from_cpairs(doc["matrix"]))
    raise ValueError(f"unknown document type {t!r}")



def act(op: OperatorMatrix, layout: RegisterLayout, arr: np.ndarray,
        on: Sequence[str] | None = None) -> np.ndarray:
    """Apply a square operator to registers `on` of `arr`, keeping the register order of `layout`."""
    on = tuple(op.in_layout.labels if on is None else on)
    if op.in_layout.dims != op.out_layout.dims:
        raise ValueError("act needs matching input and output dimensions")
    local = layout.select(on)
    if local.dims != op.in_layout.dims:
        raise ValueError(f"dimension mismatch acting on {on}")
    renamed = OperatorMatrix(local, local, op.entries)
    new_layout, out = apply_array(renamed, layout, arr, on)
    batch = out.shape[1:]
    t = out.reshape(new_layout.dims + batch) if new_layout.registers else out
    axes = [new_layout.index(lab) for lab in layout.labels]
    t = t.transpose(axes + list(range(len(new_layout), len(new_layout) + len(batch))))
    return t.reshape((layout.total_dim,) + batch)


def zero_isometry(layout: RegisterLayout, zeroed: Sequence[str]) -> tuple[RegisterLayout, np.ndarray]:
    """Isometry from `layout` minus `zeroed` into `layout` preparing |0> on `zeroed`.

    Returns (input layout, V) with V of shape (layout.total_dim, input dim).
    """
    zeroed = tuple(zeroed)
    inner = layout.without(zeroed)
    z = layout.select(zeroed)
    idx = np.arange(inner.total_dim)
    tmp = np.zeros((layout.total_dim, inner.total_dim), dtype=complex)
    tmp[idx * z.total_dim, idx] = 1.0
    v = _permute_matrix(tmp, inner + z, layout.labels, inner, inner.labels)
    return inner, v
