"""Seeded Monte Carlo simulation of probe sequences through the cavity.

Random streams
--------------
Trajectory ``i`` of an ensemble with master seed ``s`` draws its uniforms
from ``PCG64(SeedSequence(s, spawn_key=(i,)))``, one double per probe, in
order.  The stream depends only on ``(s, i)``, so chunking and thread count
never change a result.  A probe clicks (outcome 1) iff ``u <= p1``.

Ensemble kernel
---------------
The batched kernel works in the frame rotated by ``exp(-i phi N)``, where
both Kraus operators are real: ``(C -/+ A) / sqrt(2)`` with
``(A psi)_k = sin(lt sqrt(k+1)) psi_{k+1}``.  A mixed input is split once
into weighted eigenvectors x_j (rho = sum x_j x_j^dag); every Kraus step
acts on them as on a pure state, so a probe costs O(rank * D).  :func:`run_trajectory` is the plain density-matrix
reference built on :mod:`cqedtomo.measurement`.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .calibration import p_bar as mean_click_probability
from .fock import DensityMatrix, StateVector, as_density
from .measurement import KrausPair, detection_probabilities, rabi_factors, reduce


@dataclass(frozen=True)
class RunConfig:
    n: int
    N: int
    master_seed: int = 0
    record_probability_track: bool = False
    record_outcomes: bool = False
    chunk_size: int = 1000
    workers: int = 1

    def __post_init__(self):
        if self.n < 1 or self.N < 1:
            raise ValueError("n and N must be >= 1")
        if self.chunk_size < 1 or self.workers < 1:
            raise ValueError("chunk_size and workers must be >= 1")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must fit in an unsigned 64-bit integer")


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    outcomes: np.ndarray
    m: int
    p1_track: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class EnsembleResult:
    m: np.ndarray
    outcomes: np.ndarray | None = None
    p1: np.ndarray | None = None

    def records(self) -> list[TrajectoryRecord]:
        if self.outcomes is None:
            raise ValueError("ensemble was run without record_outcomes")
        return [
            TrajectoryRecord(self.outcomes[i], int(self.m[i]), None if self.p1 is None else self.p1[i])
            for i in range(self.m.size)
        ]


def trajectory_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(master_seed, spawn_key=(index,))))


def run_trajectory(
    rho0: DensityMatrix | StateVector,
    kp: KrausPair,
    n: int,
    rng: np.random.Generator,
    record_probability_track: bool = True,
) -> TrajectoryRecord:
    rho = as_density(rho0)
    outcomes = np.zeros(n, dtype=np.uint8)
    track = np.empty(n) if record_probability_track else None
    for k in range(n):
        _, p1 = detection_probabilities(rho, kp)
        if track is not None:
            track[k] = p1
        o = 1 if rng.random() <= p1 else 0
        rho, _ = reduce(rho, o, kp)
        outcomes[k] = o
    return TrajectoryRecord(outcomes, int(outcomes.sum()), track)


def occupied_dim(state: DensityMatrix | StateVector) -> int:
    """Levels needed to hold ``state`` exactly; the probes never add photons."""
    if isinstance(state, StateVector):
        nz = np.flatnonzero(state.amplitudes)
    else:
        nz = np.flatnonzero(np.any(state.elements != 0, axis=0))
    top = int(nz.max()) + 1 if nz.size else 1
    return max(2, top)


def _rotated_initial(state, phi: float, dim: int):
    phase = np.exp(-1j * phi * np.arange(dim))
    if isinstance(state, StateVector):
        v = state.amplitudes[:dim] * phase
        return v.real.copy() if not np.any(v.imag) else v
    r = state.elements[:dim, :dim] * phase[:, None] * phase.conj()[None, :]
    return r.real.copy() if not np.any(r.imag) else r


def _chunk(comps0, cos_d, sin_up, u, record_p1):
    """Propagate a batch of runs; each run holds ``r`` weighted components x_j with rho = sum x_j x_j^dag."""
    b, n = u.shape
    x = np.broadcast_to(comps0, (b,) + comps0.shape).copy()
    m = np.zeros(b, dtype=np.int64)
    outcomes = np.empty((b, n), dtype=np.uint8)
    track = np.empty((b, n)) if record_p1 else None
    lowered = np.zeros_like(x)
    for k in range(n):
        c = cos_d * x
        lowered[..., :-1] = sin_up * x[..., 1:]
        plus = c + lowered
        p1 = 0.5 * _sqnorm(plus)
        click = u[:, k] <= p1
        new = np.where(click[:, None, None], plus, c - lowered)
        x = new / np.sqrt(_sqnorm(new))[:, None, None]
        outcomes[:, k] = click
        m += click
        if track is not None:
            track[:, k] = p1
    return m, outcomes, track


def _sqnorm(x):
    if np.iscomplexobj(x):
        return (x.real * x.real + x.imag * x.imag).sum(axis=(-2, -1))
    return (x * x).sum(axis=(-2, -1))


def _components(start):
    """Rows x_j with sum_j x_j x_j^dag equal to ``start`` (a vector is one row)."""
    if start.ndim == 1:
        return start[None, :]
    w, v = np.linalg.eigh(0.5 * (start + start.conj().T))
    keep = w > 1e-15 * w.max()
    comps = (v[:, keep] * np.sqrt(w[keep])).T
    return comps.real.copy() if not np.any(comps.imag) else comps


def run_ensemble(rho0: DensityMatrix | StateVector, kp: KrausPair, config: RunConfig) -> EnsembleResult:
    """Simulate ``config.N`` independent runs of ``config.n`` probes each."""
    dim = min(occupied_dim(rho0), kp.params.dim)
    cos_d, sin_d = rabi_factors(kp.params.lambda_tau, dim)
    sin_up = sin_d[1:]
    comps = _components(_rotated_initial(rho0, kp.params.phi, dim))

    bounds = [(i, min(i + config.chunk_size, config.N)) for i in range(0, config.N, config.chunk_size)]

    def work(span):
        i0, i1 = span
        u = np.stack([trajectory_rng(config.master_seed, i).random(config.n) for i in range(i0, i1)])
        return _chunk(comps, cos_d, sin_up, u, config.record_probability_track)

    if config.workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            parts = list(pool.map(work, bounds))
    else:
        parts = [work(b) for b in bounds]

    m = np.concatenate([p[0] for p in parts])
    outcomes = np.concatenate([p[1] for p in parts]) if config.record_outcomes else None
    p1 = np.concatenate([p[2] for p in parts]) if config.record_probability_track else None
    return EnsembleResult(m, outcomes, p1)


@dataclass(frozen=True, eq=False)
class ProbabilityTracks:
    trajectory_id: np.ndarray
    k: np.ndarray
    p1: np.ndarray
    p_bar: float | None = None


def probability_track_figure(
    rho0: DensityMatrix | StateVector,
    kp: KrausPair,
    n: int,
    seeds,
    mu: float | None = None,
    beta_abs: float | None = None,
    gamma_mode: str = "unity",
) -> ProbabilityTracks:
    """A priori click probability against probe number, one track per seed.

    Track ``j`` is trajectory 0 of master seed ``seeds[j]``, so it coincides
    with the first member of an ensemble run under that seed.  When ``mu`` and
    ``beta_abs`` are given the flat mean-probability reference line is added.
    """
    ids, ks, ps = [], [], []
    for j, seed in enumerate(seeds):
        rec = run_trajectory(rho0, kp, n, trajectory_rng(seed, 0))
        ids.append(np.full(n, j))
        ks.append(np.arange(1, n + 1))
        ps.append(rec.p1_track)
    ref = None
    if mu is not None and beta_abs is not None:
        prm = kp.params
        ref = mean_click_probability(beta_abs, prm.Phi, prm.phi, prm.lambda_tau, mu, gamma_mode)
    return ProbabilityTracks(np.concatenate(ids), np.concatenate(ks), np.concatenate(ps), ref)
