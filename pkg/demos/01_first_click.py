"""
Click probability of the first probe atom
=========================================

Coherent field of growing amplitude, probe phase in step with the field and
a quarter turn away.  Matrix result and closed form side by side.
"""
# %%
import math

import numpy as np

import cqedtomo as cq

probe_phase = -3 * math.pi / 4
coupling = 0.04

# %%
for offset in (0.0, math.pi / 2):
    field_phase = probe_phase + offset
    params = cq.InteractionParams(coupling, probe_phase, field_phase, 40)
    kraus = cq.build_kraus(params)
    print(f"field phase - probe phase = {offset:.3f}")
    for amp in np.linspace(0, 3, 7):
        beta = amp * complex(math.cos(field_phase), math.sin(field_phase))
        _, click = cq.detection_probabilities(cq.coherent_state(beta, 40), kraus)
        closed = cq.first_click_probability(beta, params)
        print(f"  |beta|={amp:4.1f}  matrix {click:.6f}  closed form {closed:.6f}")

# %%
# vacuum sits exactly at one half
print(cq.detection_probabilities(cq.fock_state(0, 40), kraus))
