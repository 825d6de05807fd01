"""Virtual subject, training protocols and validation scenarios."""

from .experiments import (
    Dataset,
    ExperimentSpec,
    RunLog,
    build_dataset,
    default_runs,
    experiment_I,
    experiment_II,
    protocol_I,
    protocol_II,
    run_experiment,
)
from .subject import SubjectParams, VirtualSubject, grip_from_lb
