"""Singular-value amplification of a projector pair."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy.special import erf

from .qops import OperatorMatrix, PureState, psd_sqrt

TIE_TOL = 1e-9
GRID = 10_000
MAX_DEGREE = 20_001


def _arr(p) -> np.ndarray:
    return p.entries if isinstance(p, OperatorMatrix) else np.asarray(p, dtype=complex)


class Certificate(NamedTuple):
    max_relative_error: float
    max_abs_value: float
    degree: int
    passed: bool


@dataclass(frozen=True)
class OddPolynomial:
    """Odd polynomial in the Chebyshev basis with a grid certificate."""

    coef: np.ndarray
    certificate: Certificate

    def __call__(self, x):
        return C.chebval(np.asarray(x, dtype=float), self.coef)


def _window_target(gamma: float, mu: float, shrink: float):
    kappa = (1 - mu) / gamma
    edge = (1 - mu / 2) / gamma
    width = (edge - kappa) / 2
    centre = kappa + width
    slope = 4.0 / width

    def f(x):
        x = np.asarray(x, dtype=float)
        w = 0.5 * (erf(slope * (x + centre)) - erf(slope * (x - centre)))
        return shrink * gamma * x * w

    return f


def certify(g, gamma: float, mu: float, nu: float, degree: int) -> Certificate:
    kappa = (1 - mu) / gamma
    xs = np.linspace(kappa / GRID, kappa, GRID)
    rel = float(np.max(np.abs(g(xs) / (gamma * xs) - 1)))
    bound = float(np.max(np.abs(g(np.linspace(0, 1, GRID)))))
    return Certificate(rel, bound, degree, rel <= nu and bound <= 1 + 1e-12)


def build_polynomial(gamma: float, mu: float, nu: float, degree: int | None = None) -> OddPolynomial:
    """Odd g with |g| <= 1 on [-1, 1] and |g(x)/(gamma x) - 1| <= nu on [0, (1 - mu)/gamma].

    The degree starts at (gamma/mu) log(gamma/nu) and doubles until the grid
    certificate passes.
    """
    f = _window_target(gamma, mu, 1 - nu / 4)
    m = degree or max(3, int(math.ceil(gamma / mu * math.log(max(gamma, 1.0 + 1e-12) / nu + 1))))
    while True:
        m += 1 - m % 2
        cheb = C.Chebyshev.interpolate(f, m)
        coef = cheb.coef.copy()
        coef[0::2] = 0.0
        top = float(np.max(np.abs(C.chebval(np.linspace(-1, 1, 4 * GRID + 1), coef))))
        if top > 1:
            coef /= top
        g = lambda x, c=coef: C.chebval(np.asarray(x, dtype=float), c)  # noqa: E731
        cert = certify(g, gamma, mu, nu, m)
        if cert.passed or m >= MAX_DEGREE or degree is not None:
            return OddPolynomial(coef, cert)
        m *= 2


@dataclass(frozen=True)
class SVAmplifier:
    """Scale singular values of pi_tilde @ pi by gamma on the part below (1 - mu)/gamma."""

    pi: np.ndarray
    pi_tilde: np.ndarray
    gamma: float
    mu: float
    nu: float = 0.0
    mode: str = "exact_oracle"
    degree: int | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "pi", _arr(self.pi))
        object.__setattr__(self, "pi_tilde", _arr(self.pi_tilde))
        if self.pi.shape != self.pi_tilde.shape:
            raise ValueError("projectors act on different spaces")
        if not self.gamma > 1:
            raise ValueError("gamma must exceed 1")
        if not 0 < self.mu < 0.5:
            raise ValueError("mu must lie in (0, 1/2)")
        if self.mode == "polynomial" and not 0 < self.nu < 0.5:
            raise ValueError("nu must lie in (0, 1/2)")
        if not 0 <= self.nu < 0.5:
            raise ValueError("nu must lie in [0, 1/2)")
        if self.mode not in ("exact_oracle", "polynomial"):
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def kappa(self) -> float:
        return (1 - self.mu) / self.gamma

    @cached_property
    def _spectrum(self) -> tuple[np.ndarray, np.ndarray]:
        """Singular values and right singular vectors (columns) inside range(pi)."""
        w, v = np.linalg.eigh((self.pi + self.pi.conj().T) / 2)
        q = v[:, w > 0.5]
        m = q.conj().T @ self.pi_tilde @ q
        ev, c = np.linalg.eigh((m + m.conj().T) / 2)
        return np.sqrt(np.clip(ev, 0, None)), q @ c

    @cached_property
    def _selected(self) -> np.ndarray:
        s, _ = self._spectrum
        return s <= self.kappa + TIE_TOL

    @cached_property
    def polynomial(self) -> OddPolynomial:
        if self.mode != "polynomial":
            raise ValueError("polynomial only exists in polynomial mode")
        return build_polynomial(self.gamma, self.mu, self.nu, self.degree)

    def _gain(self, s: np.ndarray) -> np.ndarray:
        """g(s)/s, the factor applied to pi_tilde v for singular value s."""
        if self.mode == "exact_oracle":
            return np.full_like(s, self.gamma)
        g = self.polynomial
        out = np.empty_like(s)
        small = s < 1e-12
        out[~small] = g(s[~small]) / s[~small]
        out[small] = C.chebval(0.0, C.chebder(g.coef))
        return out

    @cached_property
    def operator(self) -> np.ndarray:
        """Matrix of the amplified map on the full space."""
        s, v = self._spectrum
        sel = self._selected
        vs = v[:, sel]
        return self.pi_tilde @ (vs * self._gain(s[sel])) @ vs.conj().T

    @cached_property
    def ideal_operator(self) -> np.ndarray:
        s, v = self._spectrum
        vs = v[:, self._selected]
        return self.gamma * self.pi_tilde @ vs @ vs.conj().T

    def threshold_projectors(self) -> tuple[np.ndarray, np.ndarray]:
        """(Pi_{<=kappa}, tilde Pi_{<=kappa}): singular subspaces at or below kappa."""
        s, v = self._spectrum
        vs = v[:, self._selected]
        right = vs @ vs.conj().T
        w, u = np.linalg.eigh((self.pi_tilde + self.pi_tilde.conj().T) / 2)
        qt = u[:, w > 0.5]
        mt = qt.conj().T @ self.pi @ qt
        evt, ct = np.linalg.eigh((mt + mt.conj().T) / 2)
        lv = qt @ ct[:, np.sqrt(np.clip(evt, 0, None)) <= self.kappa + TIE_TOL]
        left = lv @ lv.conj().T
        return (right + right.conj().T) / 2, (left + left.conj().T) / 2

    def amplify(self, psi: PureState | np.ndarray) -> PureState | np.ndarray:
        if isinstance(psi, PureState):
            return PureState(psi.layout, self.operator @ psi.amplitudes)
        return self.operator @ np.asarray(psi, dtype=complex)

    def polynomial_certificate(self) -> Certificate:
        return self.polynomial.certificate

    def block_encoding(self) -> np.ndarray:
        """Unitary W on (flag qubit) (x) space with (<+| (x) I) W (|+> (x) I) = operator."""
        return plus_block_encoding(self.operator)


def halmos_dilation(g: np.ndarray) -> np.ndarray:
    """[[G, sqrt(I - G G^dag)], [sqrt(I - G^dag G), -G^dag]] for a contraction G."""
    g = np.asarray(g, dtype=complex)
    n = g.shape[0]
    eye = np.eye(n)
    top = np.concatenate([g, psd_sqrt(eye - g @ g.conj().T)], axis=1)
    bottom = np.concatenate([psd_sqrt(eye - g.conj().T @ g), -g.conj().T], axis=1)
    return np.concatenate([top, bottom], axis=0)


def plus_block_encoding(g: np.ndarray) -> np.ndarray:
    """Halmos dilation conjugated by a Hadamard on the flag so the |+> corner holds g."""
    n = g.shape[0]
    h = np.kron(np.array([[1, 1], [1, -1]]) / np.sqrt(2), np.eye(n))
    return h @ halmos_dilation(g) @ h
