"""Just-in-time defect prediction over git histories.

Pipeline: mine change records and metrics, label defect-inducing commits
by tracing fixes backward through blame, vectorize into multimodal
instances, train a fusion model, and evaluate on a held-out split.
"""

from .dataset import (
    LabeledInstance,
    SplitSpec,
    TextVector,
    clean,
    hash_featurize,
    load_embeddings,
    split,
)
from .evaluation import ConfusionMatrix, EvalReport, confusion, metrics, pr_auc
from .fusion import (
    FusionModel,
    TrainReport,
    combine,
    init_model,
    load_model,
    predict,
    predict_proba,
    save_model,
    train,
)
from .mining import (
    ChangeMetrics,
    CommitRecord,
    FileChange,
    HistoryIndex,
    SourceFilter,
    compute_metrics,
    is_fix,
    mine_history,
)
from .szz import Label, Repo, TraceResult, label_dataset, trace_all, trace_fix

__version__ = "0.1.0"

__all__ = [
    "ChangeMetrics",
    "CommitRecord",
    "ConfusionMatrix",
    "EvalReport",
    "FileChange",
    "FusionModel",
    "HistoryIndex",
    "Label",
    "LabeledInstance",
    "Repo",
    "SourceFilter",
    "SplitSpec",
    "TextVector",
    "TraceResult",
    "TrainReport",
    "clean",
    "combine",
    "compute_metrics",
    "confusion",
    "hash_featurize",
    "init_model",
    "is_fix",
    "label_dataset",
    "load_embeddings",
    "load_model",
    "metrics",
    "mine_history",
    "pr_auc",
    "predict",
    "predict_proba",
    "save_model",
    "split",
    "trace_all",
    "trace_fix",
    "train",
]
