"""Click-count statistics and calibration of the fitting parameter mu.

Under small coupling the click probability along a run is replaced by a
constant mean value

    p_bar = (1 + nu * sqrt(2) * |beta| * cos(Phi - phi)) / 2,
    nu    = Gamma * lambda_tau * (1 + mu) / sqrt(2),

so the click count m of n probes is binomial.  mu is picked so that the
binomial CDF matches a simulated coherent-state sample under the
Kolmogorov criterion; nu then fixes the variance of the instrumental
function of the method.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import binom, norm

from .errors import (
    EmptySample,
    NoAcceptableMu,
    NonpositiveInstrumentVariance,
    NonpositiveNu,
    OutOfRange,
)
from .measurement import gamma_value

SQRT2 = math.sqrt(2.0)


def nu(lambda_tau: float, mu: float, gamma: float = 1.0) -> float:
    value = gamma * lambda_tau * (1.0 + mu) / SQRT2
    if not value > 0:
        raise NonpositiveNu(f"nu = {value!r} for lambda_tau={lambda_tau}, mu={mu}, Gamma={gamma}")
    return value


def p_bar(
    beta_abs: float,
    Phi: float,
    phi: float,
    lambda_tau: float,
    mu: float,
    gamma_mode: str = "unity",
    gamma_beta: float | None = None,
) -> float:
    """Mean click probability for a coherent input |beta| e^{i Phi}.

    ``gamma_beta`` is the amplitude at which Gamma is evaluated (defaults to
    ``beta_abs``); it only matters for the ``series``/``approx`` modes.
    """
    g = gamma_value(beta_abs if gamma_beta is None else gamma_beta, lambda_tau, gamma_mode)
    value = 0.5 * (1.0 + nu(lambda_tau, mu, g) * SQRT2 * beta_abs * math.cos(Phi - phi))
    if not 0.0 < value < 1.0:
        raise OutOfRange(f"mean click probability {value!r} outside (0, 1)")
    return value


def integrated_pmf_bernoulli(n: int, p: float) -> np.ndarray:
    if not 0.0 < p < 1.0:
        raise OutOfRange(f"p={p!r} outside (0, 1)")
    return binom.pmf(np.arange(n + 1), n, p)


def integrated_pdf_gaussian(n: int, p: float, m):
    """Moivre-Laplace density of the click count."""
    var = n * p * (1.0 - p)
    if var < 9:
        warnings.warn(f"n p (1-p) = {var:.3g} < 9; normal approximation is poor", RuntimeWarning, stacklevel=2)
    return norm.pdf(m, loc=n * p, scale=math.sqrt(var))


def theoretical_cdf_m(n: int, p: float, x):
    """Binomial CDF of the click count, defined for every real x."""
    return binom.cdf(np.floor(x), n, p)


def empirical_cdf(samples, x):
    """Fraction of samples <= x (right-continuous step function)."""
    s = np.sort(np.asarray(samples, dtype=float).ravel())
    if s.size == 0:
        raise EmptySample("empirical CDF of an empty sample")
    return np.searchsorted(s, x, side="right") / s.size


def kolmogorov_bound(alpha: float, N: int) -> float:
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if N < 1:
        raise ValueError("N must be >= 1")
    return math.sqrt(0.5 * math.log(2.0 / (1.0 - alpha))) / math.sqrt(N)


def ks_statistic(samples, n: int, p: float) -> float:
    """sup_x |empirical CDF - binomial CDF| for click-count samples."""
    s = np.sort(np.asarray(samples, dtype=float).ravel())
    if s.size == 0:
        raise EmptySample("KS statistic of an empty sample")
    pts = np.union1d(np.arange(n + 1, dtype=float), s)
    right = np.abs(np.searchsorted(s, pts, side="right") / s.size - binom.cdf(np.floor(pts), n, p))
    left = np.abs(np.searchsorted(s, pts, side="left") / s.size - binom.cdf(np.ceil(pts) - 1, n, p))
    return float(max(right.max(), left.max()))


def ks_statistic_continuous(samples, cdf) -> float:
    """sup_x |empirical CDF - cdf| against a continuous CDF; handles tied samples."""
    s = np.sort(np.asarray(samples, dtype=float).ravel())
    if s.size == 0:
        raise EmptySample("KS statistic of an empty sample")
    f = np.asarray(cdf(s), dtype=float)
    above = np.searchsorted(s, s, side="right") / s.size - f
    below = f - np.searchsorted(s, s, side="left") / s.size
    return float(max(above.max(), below.max(), 0.0))


def sigma(n: int, nu_value: float) -> float:
    if nu_value <= 0:
        raise NonpositiveNu(f"nu = {nu_value!r}")
    return 1.0 / (n * nu_value**2)


def sigma_s(sigma_value: float) -> float:
    value = sigma_value - 0.5
    if value <= 0:
        raise NonpositiveInstrumentVariance(
            f"sigma = {sigma_value:.4g} <= 1/2: n is too large for this nu, no instrumental width left"
        )
    return value


@dataclass(frozen=True)
class CalibrationInput:
    lambda_tau: float = 0.04
    beta_max: float = 3.0
    Phi: float = math.pi / 4
    phi: float = -3 * math.pi / 4
    n: int = 300
    N: int = 1000
    alpha: float = 0.95
    gamma_mode: str = "unity"
    mu_lo: float = -1.0
    mu_hi: float = 1.0
    mu_step: float = 0.01

    def __post_init__(self):
        if not -1.0 <= self.mu_lo <= self.mu_hi <= 1.0:
            raise ValueError("mu grid must lie within [-1, 1]")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.mu_step <= 0:
            raise ValueError("mu_step must be positive")

    def mu_grid(self) -> np.ndarray:
        count = int(round((self.mu_hi - self.mu_lo) / self.mu_step)) + 1
        return np.round(self.mu_lo + self.mu_step * np.arange(count), 12)

    def gamma(self) -> float:
        return gamma_value(self.beta_max, self.lambda_tau, self.gamma_mode)


@dataclass(frozen=True)
class CalibrationResult:
    mu: float
    nu: float
    p_bar: float
    sigma: float
    sigma_s: float
    ks_statistic: float
    ks_bound: float
    accepted: bool
    gamma: float = 1.0
    n: int = 0
    N: int = 0
    lambda_tau: float = 0.0
    mu_grid: np.ndarray | None = field(default=None, repr=False, compare=False)
    ks_profile: np.ndarray | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("mu_grid")
        d.pop("ks_profile")
        return d


def _ks_profile(samples: np.ndarray, inp: CalibrationInput, mus: np.ndarray, g: float) -> tuple[np.ndarray, np.ndarray]:
    n = inp.n
    s = np.sort(samples)
    x = np.arange(n + 1)
    emp = np.searchsorted(s, x, side="right") / s.size
    nus = g * inp.lambda_tau * (1.0 + mus) / SQRT2
    p = 0.5 * (1.0 + nus * SQRT2 * inp.beta_max * math.cos(inp.Phi - inp.phi))
    ok = (nus > 0) & (p > 0) & (p < 1)
    stats = np.full(mus.size, np.inf)
    if ok.any():
        cdf = binom.cdf(x[None, :], n, p[ok][:, None])
        stats[ok] = np.abs(cdf - emp[None, :]).max(axis=1)
    return stats, p


def fit_mu(samples, inp: CalibrationInput, strict: bool = False) -> CalibrationResult:
    """Grid search for the mu minimizing the KS distance to the binomial model.

    Ties go to the smaller |mu|, then to the smaller mu.  With ``strict`` an
    unaccepted fit raises :class:`NoAcceptableMu` carrying the result.
    """
    m = np.asarray(samples, dtype=float).ravel()
    if m.size == 0:
        raise EmptySample("cannot calibrate on an empty sample")
    if m.min() < 0 or m.max() > inp.n or np.any(m != np.round(m)):
        raise ValueError("click counts must be integers in [0, n]")
    mus = inp.mu_grid()
    g = inp.gamma()
    stats, probs = _ks_profile(m, inp, mus, g)
    if not np.isfinite(stats).any():
        raise OutOfRange("no mu on the grid gives a valid mean click probability")
    order = np.lexsort((mus, np.abs(mus), stats))
    best = order[0]
    mu = float(mus[best])
    nu_value = nu(inp.lambda_tau, mu, g)
    sig = sigma(inp.n, nu_value)
    bound = kolmogorov_bound(inp.alpha, m.size)
    result = CalibrationResult(
        mu=mu,
        nu=nu_value,
        p_bar=float(probs[best]),
        sigma=sig,
        sigma_s=sig - 0.5,
        ks_statistic=float(stats[best]),
        ks_bound=bound,
        accepted=bool(stats[best] < bound),
        gamma=g,
        n=inp.n,
        N=int(m.size),
        lambda_tau=inp.lambda_tau,
        mu_grid=mus,
        ks_profile=stats,
    )
    if strict and not result.accepted:
        raise NoAcceptableMu(result)
    return result


@dataclass(frozen=True, eq=False)
class SweepTable:
    n: np.ndarray
    seed: np.ndarray
    mu: np.ndarray
    sigma_s: np.ndarray
    accepted: np.ndarray
    flagged: np.ndarray

    def median_by_n(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        ns = np.unique(self.n)
        mu = np.array([np.median(self.mu[self.n == v]) for v in ns])
        ss = np.array([np.median(self.sigma_s[self.n == v]) for v in ns])
        return ns, mu, ss


def sigma_s_vs_n_sweep(inp: CalibrationInput, n_values, seeds, dim: int | None = None, workers: int = 1) -> SweepTable:
    """Calibrate mu on simulated coherent samples at |beta_max| for each n and seed.

    Rows whose instrumental variance is not positive are flagged, not raised.
    """
    from .fock import coherent_state, default_dim
    from .measurement import InteractionParams, build_kraus
    from .trajectory import RunConfig, run_ensemble

    d = dim or default_dim(inp.beta_max)
    psi = coherent_state(inp.beta_max * complex(math.cos(inp.Phi), math.sin(inp.Phi)), d)
    kp = build_kraus(InteractionParams(inp.lambda_tau, inp.phi, inp.Phi, d))
    rows = []
    for n in n_values:
        sub = CalibrationInput(**{**asdict(inp), "n": int(n)})
        for seed in seeds:
            ens = run_ensemble(psi, kp, RunConfig(n=int(n), N=inp.N, master_seed=int(seed), workers=workers))
            res = fit_mu(ens.m, sub)
            rows.append((int(n), int(seed), res.mu, res.sigma_s, res.accepted, res.sigma_s <= 0))
    cols = list(zip(*rows)) if rows else [()] * 6
    return SweepTable(*(np.array(c) for c in cols))
