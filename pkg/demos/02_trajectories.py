"""
Click probability along single trajectories
===========================================
"""
# %%
import math

import numpy as np

import cqedtomo as cq

probe_phase = -3 * math.pi / 4
params = cq.InteractionParams(0.04, probe_phase, math.pi / 4, 40)
kraus = cq.build_kraus(params)
field = cq.coherent_state(3 * complex(math.cos(math.pi / 4), math.sin(math.pi / 4)), 40)

# %%
tracks = cq.probability_track_figure(field, kraus, 300, seeds=range(5), mu=0.76, beta_abs=3.0)
print("flat reference", round(tracks.p_bar, 5))
for tid in range(5):
    p = tracks.p1[tracks.trajectory_id == tid]
    print(f"track {tid}: start {p[0]:.4f}  k=100 {p[99]:.4f}  end {p[-1]:.4f}  mean {p.mean():.4f}")

# %%
# a whole ensemble, seeded per trajectory; thread count does not change the counts
one = cq.run_ensemble(field, kraus, cq.RunConfig(n=300, N=400, master_seed=11, workers=1)).m
four = cq.run_ensemble(field, kraus, cq.RunConfig(n=300, N=400, master_seed=11, workers=4)).m
print("identical across workers:", np.array_equal(one, four))
print("mean clicks", one.mean(), "of 300")
