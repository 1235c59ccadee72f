"""
Quadrature samples of a single photon
=====================================

Click counts become quadrature samples; their distribution is the true
density blurred by the instrument, and a regularized division undoes it.
"""
# %%
import math
import warnings

import numpy as np

import cqedtomo as cq

probes, coupling, offset = 1000, 0.04, 0.36
probe_phase = -3 * math.pi / 4
scale = cq.nu(coupling, offset)
width = cq.sigma_s(cq.sigma(probes, scale))
print(f"sigma_s = {width:.3f}")

photon = cq.fock_state(1, 2)
kraus = cq.build_kraus(cq.InteractionParams(coupling, probe_phase, 0.0, 2))
counts = cq.run_ensemble(photon, kraus, cq.RunConfig(n=probes, N=1000, master_seed=0)).m
tomo = cq.tomogram_from_ensemble(counts, probes, scale, probe_phase)

# %%
grid = cq.make_grid(-10, 10, 0.05)
truth = cq.on_grid(cq.fock1_quadrature_pdf, grid)
blurred = cq.convolve(truth, width)
print("KS distance to blurred law", round(tomo.ks_distance(cq.convolution_cdf(blurred)), 4),
      "bound", round(cq.kolmogorov_bound(0.95, 1000), 4))

# %%
with warnings.catch_warnings():
    warnings.simplefilter("ignore", cq.errors.IllConditioned)
    back = cq.deconvolve(blurred, width)
err = np.linalg.norm(back.values - truth.values) / np.linalg.norm(truth.values)
print(f"round trip L2 error {err:.2%}; value at 0: {back(0.0):.3f} vs peak {back.values.max():.3f}")
