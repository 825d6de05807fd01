"""
Validation scenarios in closed loop
===================================

Release a preloaded spring, press against a locked output, and run the
mismatched-estimate instability test. Adaptive runs here use the true
stiffness; pass a trained forest to run the estimator online.
"""

from exoshape.protocol.scenarios import bandwidth_scenario, instability_scenario, stability_scenario

for controller in ("adaptive", "robust"):
    for grip in ("low", "high"):
        print(stability_scenario(controller, grip).line())

# %%
# Torque bandwidth with the output locked
# ---------------------------------------
for controller in ("adaptive", "robust"):
    res = bandwidth_scenario(controller, "high")
    print(f"{controller:8s} rise time {res.metrics['rise_time_s']:.3f} s")

# %%
# Estimate built for 60 Nm/rad, wearer relaxed then tensed
# --------------------------------------------------------
res = instability_scenario(60.0)
print(res.line())
