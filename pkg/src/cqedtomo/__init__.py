"""Simulation and statistics for quadrature tomography of a cavity mode with probe atoms."""
from .calibration import (
    CalibrationInput,
    CalibrationResult,
    empirical_cdf,
    fit_mu,
    integrated_pdf_gaussian,
    integrated_pmf_bernoulli,
    kolmogorov_bound,
    ks_statistic,
    ks_statistic_continuous,
    nu,
    p_bar,
    sigma,
    sigma_s,
    sigma_s_vs_n_sweep,
    theoretical_cdf_m,
)
from .fock import (
    DensityMatrix,
    FieldOperator,
    StateVector,
    annihilation,
    coherent_state,
    creation,
    default_dim,
    density_from_pure,
    expectation,
    fock_state,
    mixture,
    number_function,
    number_operator,
    quadrature_operator,
    renormalize,
    trace,
)
from .measurement import (
    InteractionParams,
    KrausPair,
    build_kraus,
    detection_probabilities,
    enumerate_integrated_probability,
    first_click_probability,
    gamma_approx,
    gamma_series,
    kraus_from_unitaries,
    path_probability,
    reduce,
)
from .tomography import (
    DensityOnGrid,
    Tomogram,
    chi_from_m,
    coherent_quadrature_pdf,
    convolution_cdf,
    convolve,
    deconvolve,
    density_from_samples,
    fock1_quadrature_pdf,
    instrumental_pdf,
    make_grid,
    on_grid,
    quadrature_pdf,
    tomogram_from_ensemble,
)
from .trajectory import (
    RunConfig,
    TrajectoryRecord,
    probability_track_figure,
    run_ensemble,
    run_trajectory,
    trajectory_rng,
)

__version__ = "0.1.0"
