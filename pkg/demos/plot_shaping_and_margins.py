"""
Shaping the amplification and checking the human phase margin
==============================================================

Build amplifier shapes for a few wearer stiffnesses, look at the
frequency response and compare adaptive, robust and aggressive designs.
"""

import numpy as np

from exoshape.shaper import ShaperConfig, robust_shape, synthesize
from exoshape.stability import phase_margin, human_side_compliance
from exoshape.plant import HumanModel

# defaults: m_he 0.14 kg m^2, alpha_ss 4, lambda 2, w_z2 at 10 Hz
cfg = ShaperConfig()
shape = synthesize(cfg, 60.0)
print("corners for k=60:", np.round([shape.w_p1, shape.w_z1, shape.w_p2, shape.w_z2], 3))

# alpha starts at alpha_ss and falls back to one at high frequency
w = np.logspace(-1, 4, 6)
print("|alpha|:", np.round(np.abs(shape.alpha_at(w)), 4))

# the robust shape must hold over the whole 5..90 Nm/rad range
rob = robust_shape(cfg, 5.0, 90.0)
print(f"robust w_p1 {rob.w_p1:.3f} rad/s vs adaptive {shape.w_p1:.3f} rad/s")

# %%
# Phase margins across stiffness
# ------------------------------
aggressive = ShaperConfig(lambda1=1.05, lambda2=1.05)
print(f"{'k':>5} {'adaptive':>9} {'robust':>9} {'aggr.':>9}")
for k in (5, 10, 20, 40, 60, 90):
    human = HumanModel(k_h=k)
    row = [phase_margin(s, human, 0.1).min_margin for s in (synthesize(cfg, k), rob, synthesize(aggressive, k))]
    print(f"{k:5d} " + " ".join(f"{m:9.1f}" for m in row))

# %%
# Human-side compliance at the crossover
# --------------------------------------
rep = phase_margin(shape, HumanModel(k_h=60.0), 0.1)
wc = rep.critical_crossover
print(f"crossover {wc:.2f} rad/s, margin {rep.min_margin:.1f} deg")
print("|C_e/alpha| there:", abs(human_side_compliance(shape, 0.1, [wc])[0]))
