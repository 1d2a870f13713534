"""Body-prior handling.

A body prior is a 10-dim shape vector estimated once per sequence from a
single reference frame, then normalized so each dimension of the training
population is a zero-mean gaussian with std 0.1. Priors cover only a
fraction of the training sequences; the distillation loss is masked
accordingly downstream.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from . import data as _data
from .data import DataError, DatasetIndex, SHAPE_DIM


class PriorError(Exception):
    """Raised for unusable prior inputs (no detectable frame, bad stats)."""


@dataclasses.dataclass
class DetectabilityMask:
    """Per-frame flags: True where the full body is visible in frame."""

    flags: np.ndarray

    def __post_init__(self):
        self.flags = np.asarray(self.flags, dtype=bool).reshape(-1)
        if self.flags.size == 0:
            raise PriorError("detectability mask must cover at least one frame")

    @classmethod
    def from_string(cls, s: str) -> "DetectabilityMask":
        if not s or set(s) - {"0", "1"}:
            raise PriorError(f"bad mask string {s!r}")
        return cls(np.array([c == "1" for c in s]))

    def to_string(self) -> str:
        return "".join("1" if f else "0" for f in self.flags)


def select_reference_frame(mask: DetectabilityMask | np.ndarray) -> int:
    """Index of the middle frame of the longest detectable run.

    Runs are maximal stretches of consecutive True flags; the middle of a
    run starting at s with length L is s + (L - 1) // 2. Ties go to the
    earliest run. No detectable frame at all is an error.
    """
    flags = mask.flags if isinstance(mask, DetectabilityMask) else np.asarray(mask, bool)
    best_start, best_len = -1, 0
    run_start, run_len = -1, 0
    for i, f in enumerate(flags):
        if f:
            if run_len == 0:
                run_start = i
            run_len += 1
            if run_len > best_len:
                best_start, best_len = run_start, run_len
        else:
            run_len = 0
    if best_len == 0:
        raise PriorError("no detectable frame in sequence")
    return best_start + (best_len - 1) // 2


@dataclasses.dataclass
class PriorNormStats:
    """Affine map taking raw shape vectors to the (0, 0.1) population scale.

    normalized = (raw - mean) * scale, with scale = 0.1 / population_std.
    Dimensions that are constant across the population (std < 1e-8) map
    to exactly 0.
    """

    mean: np.ndarray
    scale: np.ndarray

    def as_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "PriorNormStats":
        return cls(
            mean=np.asarray(d["mean"], dtype=np.float64),
            scale=np.asarray(d["scale"], dtype=np.float64),
        )


def fit_prior_norm(raw_betas: np.ndarray) -> PriorNormStats:
    """Fit normalization stats over rows of raw shape vectors (population std)."""
    raw = np.asarray(raw_betas, dtype=np.float64)
    if raw.ndim != 2 or raw.shape[0] < 1 or raw.shape[1] != SHAPE_DIM:
        raise PriorError(f"expected (n, {SHAPE_DIM}) raw betas, got {raw.shape}")
    mean = raw.mean(axis=0)
    std = raw.std(axis=0)  # ddof=0
    scale = np.where(std < 1e-8, 0.0, 0.1 / np.where(std < 1e-8, 1.0, std))
    return PriorNormStats(mean=mean, scale=scale)


def apply_prior_norm(raw: np.ndarray, stats: PriorNormStats) -> np.ndarray:
    raw = np.asarray(raw, dtype=np.float64)
    return (raw - stats.mean) * stats.scale


@dataclasses.dataclass
class BodyPrior:
    """Normalized shape vector for one sequence plus its provenance."""

    beta: np.ndarray  # (10,) normalized
    raw_beta: np.ndarray  # (10,) as estimated
    source_frame: int  # reference frame the estimate came from


def attach_priors(
    index: DatasetIndex,
    sidecar: str | dict,
    coverage: float,
    seed: int,
) -> DatasetIndex:
    """Attach body priors to a seed-driven fraction of training sequences.

    ``sidecar`` is a path (or pre-parsed record dict) mapping sequence keys
    to (raw_beta, detectability mask). Normalization stats are fit on the
    selected subset only and stored on the index. Evaluation entries never
    receive priors. coverage=0 leaves the distillation path inert.
    """
    if not 0.0 <= coverage <= 1.0:
        raise PriorError(f"coverage must be in [0, 1], got {coverage}")
    records = sidecar if isinstance(sidecar, dict) else _data.read_sidecar(sidecar)

    for e in index.entries:
        e.prior = None
        e.has_prior = False

    train = sorted(index.train_entries(), key=lambda e: e.key)
    all_keys = {e.key for e in index.entries}
    for key in records:
        if key not in all_keys:
            index.warnings.append(f"sidecar row for unknown sequence {key}")

    eligible = []
    for e in train:
        rec = records.get(e.key)
        if rec is None:
            continue
        beta, mask = rec
        try:
            ref = select_reference_frame(DetectabilityMask(mask))
        except PriorError:
            index.warnings.append(f"{e.locator()}: no detectable frame; skipped")
            continue
        eligible.append((e, beta, ref))

    n_target = int(round(coverage * len(train)))
    if n_target > len(eligible):
        index.warnings.append(
            f"coverage {coverage} asks for {n_target} covered sequences, "
            f"only {len(eligible)} have usable priors"
        )
        n_target = len(eligible)

    index.prior_stats = None
    if n_target == 0:
        return index

    rng = np.random.default_rng(seed)
    picks = rng.choice(len(eligible), size=n_target, replace=False)
    chosen = [eligible[i] for i in sorted(picks)]
    stats = fit_prior_norm(np.stack([beta for _, beta, _ in chosen]))
    for e, beta, ref in chosen:
        e.prior = BodyPrior(
            beta=apply_prior_norm(beta, stats),
            raw_beta=np.asarray(beta, dtype=np.float64).copy(),
            source_frame=ref,
        )
        e.has_prior = True
    index.prior_stats = stats
    return index
