"""Active learning with recurrent networks for sepsis prediction on hourly ICU data."""

__version__ = "0.1.0"

from .active import ExperimentConfig, make_folds, run_alrt, run_baseline, run_cross_validation
from .ingest import PHYSIONET_2019, PatientRecord, RawColumnSchema, load_cohort, parse_patient_file
from .kernels import BACKEND
from .metrics import EvalReport, auprc, auroc, evaluate
from .model import ModelParams, TrainConfig, init_params, train
from .preprocess import FeatureSequence, Pipeline, fit_pipeline
from .sampling import score_entropy, score_least_confident, score_margin, select_batch

__all__ = [
    "BACKEND", "EvalReport", "ExperimentConfig", "FeatureSequence", "ModelParams", "PHYSIONET_2019",
    "PatientRecord", "Pipeline", "RawColumnSchema", "TrainConfig", "auprc", "auroc", "evaluate",
    "fit_pipeline", "init_params", "load_cohort", "make_folds", "parse_patient_file", "run_alrt",
    "run_baseline", "run_cross_validation", "score_entropy", "score_least_confident", "score_margin",
    "select_batch", "train",
]
