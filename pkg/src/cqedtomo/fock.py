"""Truncated Fock-space states and operators for a single cavity mode.

Everything lives in the basis |0>, ..., |D-1>.  Arrays handed out by the
value types are read-only so states can be shared freely.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import gammaln
from scipy.stats import poisson

from .errors import DegenerateState, TruncationError

TAIL_TOL = 1e-10


def _frozen(arr, dtype=complex):
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class StateVector:
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = _frozen(self.amplitudes)
        if amps.ndim != 1 or amps.size < 2:
            raise ValueError("state vector needs a 1-D array of length >= 2")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    elements: np.ndarray

    def __post_init__(self):
        rho = _frozen(self.elements)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1] or rho.shape[0] < 2:
            raise ValueError("density matrix must be square with D >= 2")
        object.__setattr__(self, "elements", rho)

    @property
    def dim(self) -> int:
        return self.elements.shape[0]

    def check(self, tol: float = 1e-10, psd_tol: float = 1e-8) -> None:
        """Raise ValueError unless Hermitian, unit trace and PSD within tolerance."""
        rho = self.elements
        herm = np.abs(rho - rho.conj().T).max()
        if herm > tol:
            raise ValueError(f"not Hermitian (max deviation {herm:.3e})")
        tr = np.trace(rho).real
        if abs(tr - 1.0) > tol:
            raise ValueError(f"trace {tr!r} differs from 1")
        lo = np.linalg.eigvalsh(rho).min()
        if lo < -psd_tol:
            raise ValueError(f"negative eigenvalue {lo:.3e}")

    def is_pure(self, tol: float = 1e-10) -> bool:
        purity = np.vdot(self.elements, self.elements).real
        return abs(purity - 1.0) < tol


@dataclass(frozen=True, eq=False)
class FieldOperator:
    elements: np.ndarray

    def __post_init__(self):
        op = _frozen(self.elements)
        if op.ndim != 2 or op.shape[0] != op.shape[1]:
            raise ValueError("operator must be a square matrix")
        object.__setattr__(self, "elements", op)

    @property
    def dim(self) -> int:
        return self.elements.shape[0]

    def __matmul__(self, other):
        if isinstance(other, StateVector):
            return StateVector(self.elements @ other.amplitudes)
        if isinstance(other, FieldOperator):
            return FieldOperator(self.elements @ other.elements)
        return self.elements @ np.asarray(other)

    def dag(self) -> "FieldOperator":
        return FieldOperator(self.elements.conj().T)

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return bool(np.abs(self.elements - self.elements.conj().T).max() <= tol)


def poisson_tail(beta_abs: float, dim: int) -> float:
    """Photon-number weight of |beta> outside the first ``dim`` Fock levels."""
    if beta_abs == 0:
        return 0.0
    return float(poisson.sf(dim - 1, beta_abs**2))


def required_dim(beta_abs: float, tol: float = TAIL_TOL) -> int:
    """Smallest D >= 2 whose Poisson tail for |beta> is below ``tol``."""
    d = 2
    while poisson_tail(beta_abs, d) >= tol:
        d += 1
    return d


def default_dim(beta_max: float) -> int:
    # |b|^2 + 6|b| + 10 keeps the tail far below 1e-10; rounded up to a multiple of 8
    d = math.ceil(beta_max**2 + 6 * beta_max + 10)
    return max(8, 8 * math.ceil(d / 8))


def coherent_state(beta: complex, dim: int | None = None, tol: float = TAIL_TOL) -> StateVector:
    """Coherent state |beta>, renormalized after truncation to ``dim`` levels."""
    beta = complex(beta)
    r = abs(beta)
    if dim is None:
        dim = default_dim(r)
    tail = poisson_tail(r, dim)
    if tail >= tol:
        need = required_dim(r, tol)
        raise TruncationError(
            f"|beta|={r:g} leaves tail weight {tail:.3e} beyond D={dim}; need D >= {need}",
            required_dim=need,
        )
    k = np.arange(dim)
    if r == 0:
        amps = np.zeros(dim, complex)
        amps[0] = 1.0
    else:
        logmag = -0.5 * r * r + k * math.log(r) - 0.5 * gammaln(k + 1)
        amps = np.exp(logmag) * np.exp(1j * cmath.phase(beta) * k)
    return StateVector(amps / np.linalg.norm(amps))


def fock_state(k: int, dim: int) -> StateVector:
    if not 0 <= k < dim:
        raise IndexError(f"Fock level {k} outside truncated basis of size {dim}")
    amps = np.zeros(dim, complex)
    amps[k] = 1.0
    return StateVector(amps)


def annihilation(dim: int) -> FieldOperator:
    if dim < 2:
        raise ValueError("dim must be >= 2")
    return FieldOperator(np.diag(np.sqrt(np.arange(1, dim)), k=1))


def creation(dim: int) -> FieldOperator:
    return annihilation(dim).dag()


def number_function(g: Callable[[np.ndarray], np.ndarray], dim: int) -> FieldOperator:
    """Diagonal operator g(a^dag a); ``g`` is called on the integer array 0..D-1."""
    n = np.arange(dim)
    try:
        vals = np.asarray(g(n), dtype=complex)
    except (TypeError, ValueError):
        vals = None  # g only takes scalars
    if vals is None or vals.shape != (dim,):
        vals = np.array([g(int(i)) for i in n], dtype=complex)
    if not np.all(np.isfinite(vals)):
        raise ValueError("g must be finite on 0..D-1")
    return FieldOperator(np.diag(vals))


def number_operator(dim: int) -> FieldOperator:
    return number_function(lambda n: n.astype(float), dim)


def quadrature_operator(phi: float, dim: int) -> FieldOperator:
    """Rotated quadrature (a^dag e^{i phi} + a e^{-i phi}) / sqrt(2)."""
    a = annihilation(dim).elements
    op = (a.conj().T * np.exp(1j * phi) + a * np.exp(-1j * phi)) / math.sqrt(2)
    return FieldOperator(0.5 * (op + op.conj().T))


def density_from_pure(psi: StateVector) -> DensityMatrix:
    v = psi.amplitudes
    return DensityMatrix(np.outer(v, v.conj()))


def mixture(weights: Sequence[float], states: Sequence[StateVector | DensityMatrix]) -> DensityMatrix:
    """Convex combination of states, renormalized."""
    if len(weights) != len(states) or not states:
        raise ValueError("need matching, nonempty weights and states")
    dim = max(s.dim for s in states)
    rho = np.zeros((dim, dim), complex)
    for w, s in zip(weights, states):
        if w < 0:
            raise ValueError("mixture weights must be nonnegative")
        part = density_from_pure(s).elements if isinstance(s, StateVector) else s.elements
        d = part.shape[0]
        rho[:d, :d] += w * part
    return renormalize(DensityMatrix(rho))


def trace(rho: DensityMatrix) -> float:
    return float(np.trace(rho.elements).real)


def expectation(op: FieldOperator, state: DensityMatrix | StateVector) -> complex:
    if isinstance(state, StateVector):
        v = state.amplitudes
        return complex(np.vdot(v, op.elements @ v))
    return complex(np.trace(op.elements @ state.elements))


def renormalize(rho: DensityMatrix | np.ndarray) -> DensityMatrix:
    """Hermitian-symmetrize and divide by the trace."""
    m = rho.elements if isinstance(rho, DensityMatrix) else np.asarray(rho, complex)
    m = 0.5 * (m + m.conj().T)
    tr = np.trace(m).real
    if tr < 1e-14:
        raise DegenerateState(f"trace {tr:.3e} too small to renormalize")
    return DensityMatrix(m / tr)


def as_density(state: StateVector | DensityMatrix) -> DensityMatrix:
    return density_from_pure(state) if isinstance(state, StateVector) else state
