"""
From sensor traces to a stiffness forest
========================================

Simulate a handful of protocol runs on the virtual subject, pool them
into a dataset and fit a small forest. The full default pipeline uses 22
runs and 50 trees (see ``exoshape generate`` and ``exoshape train``).
"""

import numpy as np

from exoshape.estimator import FEATURE_NAMES, ablate_stretch, fit_forest
from exoshape.estimator.metrics import accuracy
from exoshape.protocol import build_dataset, protocol_I, protocol_II, run_experiment

specs = [protocol_I(g, run_index=i) for i, g in enumerate((0.0, 0.5, 1.0))]
specs += [protocol_II(g, run_index=3 + i) for i, g in enumerate((0.0, 0.5, 1.0))]
logs = [run_experiment(s) for s in specs]

# reference stiffness comes from sliding regression; compare with the truth
lg = logs[1]
ok = np.isfinite(lg.k_ref)
print("median |k_ref - k_true|:", np.median(np.abs(lg.k_ref[ok] - lg.k_true[ok])))

ds = build_dataset(logs)
print("train/validation rows:", ds.y_train.size, ds.y_val.size)
print("features:", ", ".join(FEATURE_NAMES))

# %%
# Fit and score
# -------------
model = fit_forest(*ds.train, trees=10)
print("validation", accuracy(model.predict(ds.X_val), ds.y_val).line())

full, red = ablate_stretch(ds.train, ds.val, trees=10, full_model=model)
print("without stretch", red.line())
