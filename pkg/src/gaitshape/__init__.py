"""Cross-view gait recognition with an inferred body shape branch.

A silhouette encoder and a temporally shifted body shape encoder are
fused into per-bin identity embeddings; the shape branch is trained by
contrastive distillation from per-sequence body priors that cover only
part of the training set.
"""

from .data import (
    DataError,
    DatasetIndex,
    SequenceEntry,
    SilhouetteSequence,
    SyntheticWalkerParams,
    assign_roles,
    generate_synthetic_walker,
    load_dataset,
    make_pk_batch,
    make_view_split,
    normalize_frame,
    sample_frames,
    split_subjects,
    write_synthetic_dataset,
)
from .distill import (
    DistillBatch,
    DistillError,
    ProjectionHead,
    combined_loss,
    crd_loss,
    crd_pair_score,
    l2_hint_loss,
)
from .encoders import (
    BodyShapeEncoder,
    FusionHead,
    GaitShapeModel,
    ModelConfig,
    ShiftConfig,
    SilhouetteEncoder,
    freeze,
    temporal_shift,
)
from .estimator import GaitShapeRecognizer
from .evaluation import (
    EmbeddingRecord,
    EvalReport,
    evaluate_split,
    extract_embeddings,
    novel_view_report,
    rank1,
    summarize,
)
from .losses import DegenerateBatch, ce_identity_loss, triplet_loss
from .prior import (
    BodyPrior,
    DetectabilityMask,
    PriorError,
    PriorNormStats,
    apply_prior_norm,
    attach_priors,
    fit_prior_norm,
    select_reference_frame,
)
from .trainer import (
    TrainConfig,
    TrainState,
    TrainingAbort,
    init_state,
    load_checkpoint,
    save_checkpoint,
    train,
    train_step,
)

__version__ = "0.1.0"

__all__ = [
    "BodyPrior",
    "BodyShapeEncoder",
    "DataError",
    "DatasetIndex",
    "DegenerateBatch",
    "DetectabilityMask",
    "DistillBatch",
    "DistillError",
    "EmbeddingRecord",
    "EvalReport",
    "FusionHead",
    "GaitShapeModel",
    "GaitShapeRecognizer",
    "ModelConfig",
    "PriorError",
    "PriorNormStats",
    "ProjectionHead",
    "SequenceEntry",
    "ShiftConfig",
    "SilhouetteEncoder",
    "SilhouetteSequence",
    "SyntheticWalkerParams",
    "TrainConfig",
    "TrainState",
    "TrainingAbort",
    "apply_prior_norm",
    "assign_roles",
    "attach_priors",
    "ce_identity_loss",
    "combined_loss",
    "crd_loss",
    "crd_pair_score",
    "evaluate_split",
    "extract_embeddings",
    "fit_prior_norm",
    "freeze",
    "generate_synthetic_walker",
    "init_state",
    "l2_hint_loss",
    "load_checkpoint",
    "load_dataset",
    "make_pk_batch",
    "make_view_split",
    "normalize_frame",
    "novel_view_report",
    "rank1",
    "sample_frames",
    "save_checkpoint",
    "select_reference_frame",
    "split_subjects",
    "summarize",
    "temporal_shift",
    "train",
    "train_step",
    "triplet_loss",
    "write_synthetic_dataset",
]
