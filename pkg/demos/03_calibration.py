"""
Fitting the effective coupling offset
=====================================

Simulate click counts for a known coherent field, then scan the offset and
keep the value whose binomial law sits closest to the data.
"""
# %%
import math

import cqedtomo as cq

inp = cq.CalibrationInput()  # 300 probes, 1000 runs, |beta| = 3
field = cq.coherent_state(3 * complex(math.cos(inp.Phi), math.sin(inp.Phi)), 40)
kraus = cq.build_kraus(cq.InteractionParams(inp.lambda_tau, inp.phi, inp.Phi, 40))
counts = cq.run_ensemble(field, kraus, cq.RunConfig(n=inp.n, N=inp.N, master_seed=0)).m

# %%
fit = cq.fit_mu(counts, inp)
print(f"mu = {fit.mu:.2f}  KS = {fit.ks_statistic:.4f}  bound = {fit.ks_bound:.4f}  accepted = {fit.accepted}")
print(f"nu = {fit.nu:.6f}  sigma = {fit.sigma:.4f}  sigma_s = {fit.sigma_s:.4f}")

# %%
# instrument width shrinks with the number of probes
table = cq.sigma_s_vs_n_sweep(cq.CalibrationInput(N=300), [300, 600, 1000], seeds=range(3))
for probes, mu, width in zip(*table.median_by_n()):
    print(f"n={probes:5d}  median mu {mu:.2f}  median sigma_s {width:.3f}")
