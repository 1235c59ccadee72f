"""Quadrature densities, the instrumental blur of the method, and its inversion.

Click counts map to quadrature values through ``chi = (2m - n) / (n nu)``.
The resulting sample follows the true quadrature density convolved with a
zero-mean Gaussian of variance ``sigma_s``; :func:`deconvolve` undoes that
blur with a Tikhonov-damped Fourier inversion.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .calibration import empirical_cdf, ks_statistic_continuous
from .errors import GridTooNarrow, IllConditioned, NonpositiveInstrumentVariance, NonpositiveNu
from .fock import DensityMatrix, StateVector

SQRT_PI = math.sqrt(math.pi)


@dataclass(frozen=True, eq=False)
class DensityOnGrid:
    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if g.ndim != 1 or g.shape != v.shape or g.size < 3:
            raise ValueError("grid and values must be 1-D arrays of equal length >= 3")
        steps = np.diff(g)
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
            raise ValueError("grid must be uniform")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)

    @property
    def h(self) -> float:
        return float(self.grid[1] - self.grid[0])

    def integral(self) -> float:
        return float(np.trapezoid(self.values, self.grid))

    def normalized(self) -> "DensityOnGrid":
        return DensityOnGrid(self.grid, self.values / self.integral())

    def mean(self) -> float:
        return float(np.trapezoid(self.grid * self.values, self.grid) / self.integral())

    def __call__(self, x):
        return np.interp(x, self.grid, self.values, left=0.0, right=0.0)


@dataclass(frozen=True, eq=False)
class CdfOnGrid:
    grid: np.ndarray
    values: np.ndarray

    def __call__(self, x):
        return np.interp(x, self.grid, self.values, left=0.0, right=1.0)


def make_grid(lo: float = -6.0, hi: float = 6.0, h: float = 0.05) -> np.ndarray:
    count = int(round((hi - lo) / h)) + 1
    return lo + h * np.arange(count)


def on_grid(pdf, grid) -> DensityOnGrid:
    grid = np.asarray(grid, dtype=float)
    return DensityOnGrid(grid, pdf(grid))


# -- quadrature values from click counts ------------------------------------

def chi_from_m(m, n: int, nu: float):
    if nu <= 0:
        raise NonpositiveNu(f"nu = {nu!r}")
    m_arr = np.asarray(m)
    if np.any(m_arr < 0) or np.any(m_arr > n):
        raise ValueError("click counts must lie in [0, n]")
    chi = (2.0 * m_arr - n) / (n * nu)
    return float(chi) if chi.ndim == 0 else chi


@dataclass(frozen=True, eq=False)
class QuadratureSampleSet:
    chi_values: np.ndarray
    phi: float
    nu_used: float
    n_used: int
    source: str = ""


@dataclass(frozen=True, eq=False)
class Tomogram:
    samples: QuadratureSampleSet

    def cdf(self, x):
        return empirical_cdf(self.samples.chi_values, x)

    def ks_distance(self, cdf) -> float:
        return ks_statistic_continuous(self.samples.chi_values, cdf)

    def mean(self) -> float:
        return float(np.mean(self.samples.chi_values))

    def variance(self) -> float:
        return float(np.var(self.samples.chi_values))


def tomogram_from_ensemble(m_samples, n: int, nu: float, phi: float, source: str = "") -> Tomogram:
    chi = np.atleast_1d(chi_from_m(np.asarray(m_samples), n, nu))
    return Tomogram(QuadratureSampleSet(chi, phi, nu, n, source))


# -- theoretical densities ----------------------------------------------------

def coherent_quadrature_pdf(chi, beta_abs: float, Phi: float, phi: float):
    return norm.pdf(chi, loc=math.sqrt(2.0) * beta_abs * math.cos(Phi - phi), scale=math.sqrt(0.5))


def fock1_quadrature_pdf(chi):
    chi = np.asarray(chi, dtype=float)
    return 2.0 * chi**2 * np.exp(-(chi**2)) / SQRT_PI


def hermite_functions(chi, kmax: int) -> np.ndarray:
    """Oscillator eigenfunctions psi_0..psi_kmax at ``chi``, shape (kmax+1, len(chi))."""
    x = np.atleast_1d(np.asarray(chi, dtype=float))
    out = np.empty((kmax + 1, x.size))
    out[0] = np.exp(-0.5 * x * x) / math.pi**0.25
    if kmax >= 1:
        out[1] = math.sqrt(2.0) * x * out[0]
    for k in range(1, kmax):
        out[k + 1] = math.sqrt(2.0 / (k + 1)) * x * out[k] - math.sqrt(k / (k + 1)) * out[k - 1]
    return out


def fock_quadrature_pdf(chi, k: int):
    return hermite_functions(chi, k)[k] ** 2


def quadrature_pdf(state: StateVector | DensityMatrix, phi: float, chi):
    """<chi_phi| rho |chi_phi> for any truncated state.

    Uses <chi_phi|k> = exp(-i k phi) psi_k(chi) for the rotated quadrature
    (a^dag e^{i phi} + a e^{-i phi}) / sqrt(2).
    """
    x = np.atleast_1d(np.asarray(chi, dtype=float))
    dim = state.dim
    basis = hermite_functions(x, dim - 1) * np.exp(-1j * phi * np.arange(dim))[:, None]
    if isinstance(state, StateVector):
        amp = state.amplitudes @ basis
        out = amp.real**2 + amp.imag**2
    else:
        out = np.einsum("jx,jk,kx->x", basis, state.elements, basis.conj()).real
    return out if np.ndim(chi) else float(out[0])


def instrumental_pdf(chi, sigma_s: float):
    if sigma_s <= 0:
        raise NonpositiveInstrumentVariance(f"sigma_s = {sigma_s!r}")
    return norm.pdf(chi, loc=0.0, scale=math.sqrt(sigma_s))


# -- closed forms of the blurred densities (used as cross-checks) -------------

def coherent_convolution_cdf(chi, beta_abs: float, Phi: float, phi: float, sigma_s: float):
    mean = math.sqrt(2.0) * beta_abs * math.cos(Phi - phi)
    return norm.cdf(chi, loc=mean, scale=math.sqrt(0.5 + sigma_s))


def fock1_convolution_pdf(chi, sigma_s: float):
    v = 0.5 + sigma_s
    chi = np.asarray(chi, dtype=float)
    return norm.pdf(chi, scale=math.sqrt(v)) * (chi**2 / (2 * v * v) + sigma_s / v)


def fock1_convolution_cdf(chi, sigma_s: float):
    v = 0.5 + sigma_s
    t = np.asarray(chi, dtype=float) / math.sqrt(v)
    return (norm.cdf(t) - t * norm.pdf(t)) / (2 * v) + sigma_s / v * norm.cdf(t)


# -- convolution and deconvolution --------------------------------------------

NORMALIZATION_TOL = 1e-6
ILL_CONDITIONED_LIMIT = 40.0


def convolve(pdf: DensityOnGrid, sigma_s: float) -> DensityOnGrid:
    """Blur ``pdf`` with the instrumental Gaussian by direct quadrature on its grid.

    Raises GridTooNarrow when more than 1e-6 of the mass leaks past the grid
    ends, i.e. the grid does not extend far enough beyond the pdf's tails.
    """
    x = pdf.grid
    kernel = instrumental_pdf(x[:, None] - x[None, :], sigma_s)
    out = DensityOnGrid(x, pdf.h * kernel @ pdf.values)
    before, after = pdf.integral(), out.integral()
    if abs(after - before) > NORMALIZATION_TOL * abs(before):
        raise GridTooNarrow(
            f"convolution lost {before - after:.3e} of mass {before:.6f}; "
            f"extend the grid by ~{5 * math.sqrt(sigma_s):.2f} beyond the density's tails"
        )
    return out


def convolution_cdf(pdf: DensityOnGrid) -> CdfOnGrid:
    """Cumulative trapezoid integral of a density on its grid."""
    v, x = pdf.values, pdf.grid
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * np.diff(x))])
    return CdfOnGrid(x, np.maximum.accumulate(cum))


def density_from_samples(chi, grid, bandwidth: float | None = None) -> DensityOnGrid:
    """Histogram on bins centred at ``grid`` followed by one Gaussian smoothing pass.

    ``bandwidth`` defaults to the grid step.
    """
    grid = np.asarray(grid, dtype=float)
    h = float(grid[1] - grid[0])
    edges = np.concatenate([grid - h / 2, [grid[-1] + h / 2]])
    counts, _ = np.histogram(np.asarray(chi, dtype=float), bins=edges)
    hist = counts / (max(counts.sum(), 1) * h)
    bw = h if bandwidth is None else bandwidth
    kernel = norm.pdf(grid[:, None] - grid[None, :], scale=bw)
    smooth = h * kernel @ hist
    return DensityOnGrid(grid, smooth).normalized()


def deconvolve(hist: DensityOnGrid, sigma_s: float, epsilon: float = 1e-4) -> DensityOnGrid:
    """Remove a Gaussian blur of variance ``sigma_s`` from a density on a uniform grid.

    Estimate = IFFT[ H(k) G(k) / (G(k)^2 + epsilon) ] with G(k) = exp(-sigma_s k^2 / 2),
    zero-padded to twice the grid length; negative lobes are clipped and the
    result renormalized.
    """
    if sigma_s <= 0:
        raise NonpositiveInstrumentVariance(f"sigma_s = {sigma_s!r}")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    x, h = hist.grid, hist.h
    size = 2 * x.size
    k = 2.0 * math.pi * np.fft.rfftfreq(size, d=h)
    if sigma_s * k[-1] ** 2 > ILL_CONDITIONED_LIMIT:
        warnings.warn(
            f"sigma_s * k_max^2 = {sigma_s * k[-1] ** 2:.3g}; the kernel transform is negligible "
            "at high frequencies and those components come from the regularizer alone",
            IllConditioned,
            stacklevel=2,
        )
    g = np.exp(-0.5 * sigma_s * k * k)
    spectrum = np.fft.rfft(hist.values, size) * g / (g * g + epsilon)
    est = np.clip(np.fft.irfft(spectrum, size)[: x.size], 0.0, None)
    return DensityOnGrid(x, est).normalized()
