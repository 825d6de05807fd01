"""Stiffness estimation from wearable sensors: feature pipeline, random
forest regressor and accuracy metrics."""

from .features import (
    FEATURE_NAMES,
    STRETCH_COLUMNS,
    Baseline,
    FeaturePipeline,
    SensorFrame,
    emg_condition,
    featurize,
    featurize_block,
    write_dataset,
    read_dataset,
)
from .forest import ForestModel, RegressionTree, fit_forest, fit_tree, load_forest, predict
from .metrics import AccuracyReport, ablate_stretch, evaluate

__all__ = [
    "FEATURE_NAMES",
    "STRETCH_COLUMNS",
    "Baseline",
    "FeaturePipeline",
    "SensorFrame",
    "emg_condition",
    "featurize",
    "featurize_block",
    "write_dataset",
    "read_dataset",
    "ForestModel",
    "RegressionTree",
    "fit_forest",
    "fit_tree",
    "load_forest",
    "predict",
    "AccuracyReport",
    "ablate_stretch",
    "evaluate",
]
