"""scikit-learn style facade over the training and embedding pipeline.

The estimator treats each silhouette sequence as one sample. ``fit``
trains the recognizer on labeled sequences (optionally with body priors),
``transform`` returns identity embeddings, and ``predict`` labels new
sequences by the nearest training sequence. The full cross-view
gallery/probe protocol lives in ``gaitshape.evaluation``; this class is
the convenience path for in-memory experiments.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from . import prior as _prior
from . import trainer as _trainer
from .data import DatasetIndex, SequenceEntry
from .evaluation import extract_embeddings
from .validation import check_is_fitted, check_labels, check_sequences


class GaitShapeRecognizer(BaseEstimator):
    """Gait recognizer with a distilled body shape branch.

    Parameters mirror the training configuration; see
    :class:`gaitshape.trainer.TrainConfig` for semantics. Defaults here
    are sized for small in-memory datasets rather than full benchmarks.
    """

    def __init__(
        self,
        max_iters=200,
        p=4,
        k=2,
        frames_per_sample=16,
        lr=1e-4,
        momentum=0.9,
        weight_decay=0.0,
        margin=0.2,
        lambda1=1.0,
        lambda2=1.0,
        distill="crd",
        use_ce=False,
        prior_coverage=1.0,
        shift_ratio=0.125,
        n_blocks=6,
        temporal_fusion="temporal_shift",
        silhouette_channels=(16, 32, 64),
        body_channels=(16, 24, 32, 64, 96, 160),
        embedding_dim=64,
        seed=0,
    ):
        self.max_iters = max_iters
        self.p = p
        self.k = k
        self.frames_per_sample = frames_per_sample
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.margin = margin
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.distill = distill
        self.use_ce = use_ce
        self.prior_coverage = prior_coverage
        self.shift_ratio = shift_ratio
        self.n_blocks = n_blocks
        self.temporal_fusion = temporal_fusion
        self.silhouette_channels = silhouette_channels
        self.body_channels = body_channels
        self.embedding_dim = embedding_dim
        self.seed = seed

    def _train_config(self) -> _trainer.TrainConfig:
        return _trainer.TrainConfig(
            p=self.p,
            k=self.k,
            frames_per_sample=self.frames_per_sample,
            max_iters=self.max_iters,
            lr=self.lr,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            margin=self.margin,
            lambda1=self.lambda1,
            lambda2=self.lambda2,
            distill=self.distill,
            use_ce=self.use_ce,
            prior_coverage=self.prior_coverage,
            shift_ratio=self.shift_ratio,
            n_blocks=self.n_blocks,
            temporal_fusion=self.temporal_fusion,
            silhouette_channels=tuple(self.silhouette_channels),
            body_channels=tuple(self.body_channels),
            embedding_dim=self.embedding_dim,
            eval_every=max(1, int(self.max_iters) or 1),
            seed=self.seed,
        )

    def _build_index(self, seqs, labels, views) -> DatasetIndex:
        counters: dict[str, int] = {}
        entries = []
        for i, (seq, label) in enumerate(zip(seqs, labels)):
            counters[label] = counters.get(label, 0) + 1
            entries.append(
                SequenceEntry(
                    subject=label,
                    variant="nm",
                    seq_idx=counters[label],
                    view=0 if views is None else int(views[i]),
                    frames=seq,
                    split="train",
                )
            )
        return DatasetIndex(entries=entries, layout="casia-b")

    def fit(self, X, y, priors=None, prior_masks=None, views=None):
        """Train on sequences X with subject labels y.

        ``priors`` is an optional (n, 10) array of raw body shape vectors;
        ``prior_masks`` optionally flags which frames of each sequence were
        usable for the estimate (defaults to all frames). A seed-driven
        fraction ``prior_coverage`` of the training sequences keeps its
        prior; the rest train on the identity loss alone.
        """
        seqs = check_sequences(X)
        labels = check_labels(y, len(seqs))
        index = self._build_index(seqs, labels, views)
        if priors is not None:
            priors = np.asarray(priors, dtype=np.float64)
            records = {}
            for i, e in enumerate(index.entries):
                mask = (
                    np.ones(e.frames.shape[0], dtype=bool)
                    if prior_masks is None
                    else np.asarray(prior_masks[i], dtype=bool)
                )
                records[e.key] = (priors[i], mask)
            _prior.attach_priors(
                index, records, coverage=self.prior_coverage, seed=self.seed
            )
        config = self._train_config()
        state, records_out = _trainer.train(config, index)
        self.state_ = state
        self.model_ = state.model
        self.classes_ = sorted(set(labels))
        self.history_ = records_out
        gallery = extract_embeddings(self.model_, index.entries)
        self.gallery_embeddings_ = np.stack([g.embedding for g in gallery])
        self.gallery_labels_ = [g.subject for g in gallery]
        return self

    def transform(self, X) -> np.ndarray:
        """Identity embeddings, one flattened vector per sequence."""
        check_is_fitted(self)
        seqs = check_sequences(X)
        entries = [
            SequenceEntry(
                subject="?", variant="nm", seq_idx=i + 1, view=0, frames=s
            )
            for i, s in enumerate(seqs)
        ]
        recs = extract_embeddings(self.model_, entries)
        return np.stack([r.embedding for r in recs])

    def predict(self, X) -> np.ndarray:
        """Label of the nearest training sequence (Euclidean, rank-1)."""
        emb = self.transform(X)
        out = []
        for e in emb:
            d = np.linalg.norm(self.gallery_embeddings_ - e[None, :], axis=1)
            out.append(self.gallery_labels_[int(np.argmin(d))])
        return np.array(out)

    def score(self, X, y) -> float:
        """Mean rank-1 accuracy of predict against y."""
        pred = self.predict(X)
        truth = np.array([str(label) for label in y])
        return float((pred == truth).mean())
