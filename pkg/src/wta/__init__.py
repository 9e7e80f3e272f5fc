"""Weighted trajectory analysis of ordinal longitudinal trial outcomes."""

__version__ = "0.1.0"

from .curve import ChangeTable, WeightedTrajectoryCurve, change_tables, wta_curve
from .data import (
    DataValidationError,
    OrdinalScale,
    Trajectory,
    TrialDataset,
    export_long_csv,
    export_wide_csv,
    ingest_long_csv,
    ingest_wide_csv,
    normalize_scale,
    read_dataset,
    response_rates,
)
from .gee import GeeFit, fit_gee, gee_test
from .km import binary_event_transform, km_estimate, logrank_test
from .markov import TransitionModel, computational_pvalue, fit_transitions
from .power import PowerGrid, run_power_study
from .results import TestResult
from .simulate import (
    SchizophreniaSimConfig,
    ToxicitySimConfig,
    simulate_schizophrenia_trial,
    simulate_toxicity_trial,
)
from .weighted_logrank import hypergeo_moments, weighted_logrank

__all__ = [
    "ChangeTable",
    "DataValidationError",
    "GeeFit",
    "OrdinalScale",
    "PowerGrid",
    "SchizophreniaSimConfig",
    "TestResult",
    "ToxicitySimConfig",
    "Trajectory",
    "TransitionModel",
    "TrialDataset",
    "WeightedTrajectoryCurve",
    "binary_event_transform",
    "change_tables",
    "computational_pvalue",
    "export_long_csv",
    "export_wide_csv",
    "fit_gee",
    "fit_transitions",
    "gee_test",
    "hypergeo_moments",
    "ingest_long_csv",
    "ingest_wide_csv",
    "km_estimate",
    "logrank_test",
    "normalize_scale",
    "read_dataset",
    "response_rates",
    "run_power_study",
    "simulate_schizophrenia_trial",
    "simulate_toxicity_trial",
    "weighted_logrank",
    "wta_curve",
]
