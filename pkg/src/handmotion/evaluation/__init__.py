from .evaluator import (
    ContrastiveEvaluator,
    EvaluatorTrainConfig,
    TrainedEvaluator,
    load_evaluator,
    motion_crop,
    save_evaluator,
    text_features,
    train_evaluator,
)
from .metrics import (
    accel_error,
    bleu,
    diversity,
    kid,
    mm_dist,
    mpjpe,
    multimodality,
    pa_mpjpe,
    r_precision,
    rouge_l,
    umeyama_align,
)
from .protocol import evaluate_m2t, evaluate_t2m, report_columns
from .report import (
    M2T_COLUMNS,
    T2M_COLUMNS,
    MetricReport,
    MetricValue,
    bootstrap_metric,
)

__all__ = [
    "ContrastiveEvaluator",
    "EvaluatorTrainConfig",
    "M2T_COLUMNS",
    "MetricReport",
    "MetricValue",
    "T2M_COLUMNS",
    "TrainedEvaluator",
    "accel_error",
    "bleu",
    "bootstrap_metric",
    "diversity",
    "evaluate_m2t",
    "evaluate_t2m",
    "kid",
    "load_evaluator",
    "mm_dist",
    "motion_crop",
    "mpjpe",
    "multimodality",
    "pa_mpjpe",
    "r_precision",
    "report_columns",
    "rouge_l",
    "save_evaluator",
    "text_features",
    "train_evaluator",
    "umeyama_align",
]
