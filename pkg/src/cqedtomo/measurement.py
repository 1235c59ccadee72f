"""Probe-atom measurement of the cavity mode.

A probe enters in the lower level |0>, interacts resonantly with the mode
for a time tau, has its basis rotated by a classical pulse with phase phi
(pulse area fixed by f * dt = pi/4) and is then detected.  Tracing out the
atom leaves two Kraus operators on the field,

    K00 = (C - e^{-i phi} a S) / sqrt(2)      probe found in |0>
    K10 = (C + e^{-i phi} a S) / sqrt(2)      probe found in |1> (a click)

with C = cos(lt sqrt(N)), S = sin(lt sqrt(N)) / sqrt(N), N = a^dag a and
lt = lambda * tau.
"""
from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import poisson

from .errors import ImpossibleOutcome, SizeError
from .fock import (
    TAIL_TOL,
    DensityMatrix,
    FieldOperator,
    StateVector,
    annihilation,
    as_density,
    renormalize,
    required_dim,
)

ENUMERATION_CAP = 14
PULSE_AREA = math.pi / 4  # f * dt, structural


@dataclass(frozen=True)
class InteractionParams:
    lambda_tau: float
    phi: float = 0.0
    Phi: float = 0.0
    dim: int = 40
    pulse_area: float = field(default=PULSE_AREA, init=False)

    def __post_init__(self):
        if not self.lambda_tau > 0:
            raise ValueError("lambda_tau must be positive")
        if self.dim < 2:
            raise ValueError("dim must be >= 2")

    def with_(self, **changes) -> "InteractionParams":
        kw = dict(lambda_tau=self.lambda_tau, phi=self.phi, Phi=self.Phi, dim=self.dim)
        kw.update(changes)
        return InteractionParams(**kw)


@dataclass(frozen=True, eq=False)
class KrausPair:
    k00: FieldOperator
    k10: FieldOperator
    params: InteractionParams

    def operator(self, outcome: int) -> np.ndarray:
        if outcome not in (0, 1):
            raise ValueError("outcome must be 0 or 1")
        return self.k10.elements if outcome else self.k00.elements

    def completeness_error(self) -> float:
        k0, k1 = self.k00.elements, self.k10.elements
        total = k0.conj().T @ k0 + k1.conj().T @ k1
        return float(np.abs(total - np.eye(total.shape[0])).max())


def rabi_factors(lambda_tau: float, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Diagonals of C and of the lowering part a*S, i.e. cos(lt sqrt n) and sin(lt sqrt n).

    ``(a S)|n> = sin(lt sqrt n) |n-1>``, so the second array is indexed by the
    photon number being lowered.
    """
    root = np.sqrt(np.arange(dim, dtype=float))
    return np.cos(lambda_tau * root), np.sin(lambda_tau * root)


def _s_diagonal(lambda_tau: float, dim: int) -> np.ndarray:
    root = np.sqrt(np.arange(dim, dtype=float))
    s = np.empty(dim)
    s[0] = lambda_tau  # limit of sin(lt x)/x at x -> 0
    s[1:] = np.sin(lambda_tau * root[1:]) / root[1:]
    return s


def build_kraus(params: InteractionParams) -> KrausPair:
    d, lt = params.dim, params.lambda_tau
    cos_diag, _ = rabi_factors(lt, d)
    a_s = annihilation(d).elements * _s_diagonal(lt, d)[None, :]
    ph = cmath.exp(-1j * params.phi)
    c = np.diag(cos_diag).astype(complex)
    k00 = (c - ph * a_s) / math.sqrt(2)
    k10 = (c + ph * a_s) / math.sqrt(2)
    return KrausPair(FieldOperator(k00), FieldOperator(k10), params)


def kraus_from_unitaries(params: InteractionParams) -> KrausPair:
    """Kraus pair read off the joint atom-field propagator U_a U_af.

    U_af is assembled block by block on the resonant pairs {|0,n>, |1,n-1>},
    where V_af acts as lambda*sqrt(n)*sigma_x, so each block is the rotation
    cos(th) - i sin(th) sigma_x with th = lt*sqrt(n).  The pulse U_a uses the
    same closed form since its generator squares to the identity.  Joint
    index is ``atom * D + n``.  Outcome-wise global phases are those of the
    propagator and differ from :func:`build_kraus`.
    """
    d, lt = params.dim, params.lambda_tau
    u_af = np.eye(2 * d, dtype=complex)
    for n in range(1, d):
        th = lt * math.sqrt(n)
        lo, up = n, d + n - 1  # |0,n>, |1,n-1>
        u_af[lo, lo] = u_af[up, up] = math.cos(th)
        u_af[lo, up] = u_af[up, lo] = -1j * math.sin(th)

    gen = np.array([[0, cmath.exp(-1j * params.phi)], [cmath.exp(1j * params.phi), 0]])
    rot = math.cos(params.pulse_area) * np.eye(2) - 1j * math.sin(params.pulse_area) * gen
    u_a = np.kron(rot, np.eye(d))

    total = u_a @ u_af
    k00 = total[:d, :d]
    k10 = total[d:, :d]
    return KrausPair(FieldOperator(k00), FieldOperator(k10), params)


def detection_probabilities(state: DensityMatrix | StateVector, kp: KrausPair) -> tuple[float, float]:
    """A priori probabilities (p0, p1) of finding the next probe in |0> or |1>.

    Returned as 1/2 -/+ (q1 - q0)/2 from the raw traces q_i, which relies on
    completeness: p0 + p1 = 1 by construction and the symmetric vacuum case
    comes out as exactly 1/2.
    """
    if isinstance(state, StateVector):
        v = state.amplitudes
        q0 = float(np.linalg.norm(kp.k00.elements @ v) ** 2)
        q1 = float(np.linalg.norm(kp.k10.elements @ v) ** 2)
    else:
        rho = state.elements
        q0, q1 = (float(np.trace(k @ rho @ k.conj().T).real) for k in (kp.k00.elements, kp.k10.elements))
    half_gap = 0.5 * (q1 - q0)
    return 0.5 - half_gap, 0.5 + half_gap


def reduce(rho: DensityMatrix, outcome: int, kp: KrausPair) -> tuple[DensityMatrix, float]:
    """Conditional state after detecting ``outcome`` and its probability."""
    k = kp.operator(outcome)
    unnorm = k @ as_density(rho).elements @ k.conj().T
    p = float(np.trace(unnorm).real)
    if p <= 1e-14:
        raise ImpossibleOutcome(f"outcome {outcome} has probability {p:.3e}")
    return renormalize(unnorm), p


def path_probability(rho0: DensityMatrix | StateVector, kp: KrausPair, outcomes) -> float:
    """Joint probability of an outcome string, from the full Kraus product.

    The first element of ``outcomes`` is the first probe, so its operator
    acts first (rightmost in the product).
    """
    rho = as_density(rho0).elements
    string = np.eye(rho.shape[0], dtype=complex)
    for o in outcomes:
        string = kp.operator(int(o)) @ string
    return float(np.trace(string @ rho @ string.conj().T).real)


def gamma_series(beta_abs: float, lambda_tau: float, tail_tol: float = TAIL_TOL) -> float:
    """Poisson-averaged Rabi overlap Gamma for a coherent state of amplitude |beta|."""
    if beta_abs < 0:
        raise ValueError("beta_abs must be nonnegative")
    m = np.arange(required_dim(beta_abs, tail_tol) if beta_abs > 0 else 1)
    weights = poisson.pmf(m, beta_abs**2) if beta_abs > 0 else np.ones(1)
    weights = weights / math.fsum(weights)  # same renormalization as the truncated state
    arg = lambda_tau * np.sqrt(m + 1.0)
    terms = np.cos(lambda_tau * np.sqrt(m)) * np.sinc(arg / np.pi) * weights
    return float(math.fsum(terms))


def gamma_approx(beta_abs: float, lambda_tau: float) -> float:
    """Small-coupling expansion of :func:`gamma_series`."""
    if beta_abs * lambda_tau > 0.3:
        warnings.warn(
            f"|beta|*lambda_tau = {beta_abs * lambda_tau:.3g} is not small; "
            "Gamma expansion unreliable",
            RuntimeWarning,
            stacklevel=2,
        )
    return 1.0 - lambda_tau**2 * (2.0 * beta_abs**2 / 3.0 + 1.0 / 6.0)


def gamma_value(beta_abs: float, lambda_tau: float, mode: str = "series") -> float:
    if mode == "series":
        return gamma_series(beta_abs, lambda_tau)
    if mode == "approx":
        return gamma_approx(beta_abs, lambda_tau)
    if mode == "unity":
        return 1.0
    raise ValueError(f"unknown gamma mode {mode!r}")


def first_click_probability(beta: complex, params: InteractionParams, gamma_mode: str = "series") -> float:
    """Closed-form click probability of the first probe for a coherent input |beta>.

    The coherent phase is the argument of ``beta``.
    """
    beta = complex(beta)
    r = abs(beta)
    if r == 0:
        return 0.5
    g = gamma_value(r, params.lambda_tau, gamma_mode)
    return 0.5 * (1.0 + 2.0 * params.lambda_tau * r * g * math.cos(cmath.phase(beta) - params.phi))


def enumerate_integrated_probability(
    rho0: DensityMatrix | StateVector, kp: KrausPair, n: int, cap: int = ENUMERATION_CAP
) -> np.ndarray:
    """Exact P(n; m), m = 0..n, by summing every one of the 2**n outcome strings.

    Leaf probabilities are collected per click count in a fixed depth-first
    order and summed with ``math.fsum``, so the result is reproducible.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > cap:
        raise SizeError(f"n={n} exceeds enumeration cap {cap} (cost 2**n)")
    ops = (kp.k00.elements, kp.k10.elements)
    leaves: list[list[float]] = [[] for _ in range(n + 1)]

    if isinstance(rho0, StateVector):
        def walk(v, depth, m):
            if depth == n:
                leaves[m].append(float(np.vdot(v, v).real))
                return
            walk(ops[0] @ v, depth + 1, m)
            walk(ops[1] @ v, depth + 1, m + 1)

        walk(rho0.amplitudes, 0, 0)
    else:
        def walk(r, depth, m):
            if depth == n:
                leaves[m].append(float(np.trace(r).real))
                return
            for o in (0, 1):
                k = ops[o]
                walk(k @ r @ k.conj().T, depth + 1, m + o)

        walk(rho0.elements, 0, 0)
    return np.array([math.fsum(x) for x in leaves])
