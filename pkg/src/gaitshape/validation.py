"""Input validation helpers for the estimator API."""

from __future__ import annotations

import numpy as np

from .data import DataError, FRAME_HEIGHT, FRAME_WIDTH, normalize_frame


def check_sequences(X) -> list[np.ndarray]:
    """Coerce X to a list of normalized (m, 64, 44) uint8 sequences.

    Accepts a single (n, m, H, W) array or a list/tuple of (m, H, W)
    arrays of possibly different lengths and resolutions. Frames already
    in the 64x44 binary convention pass through untouched; anything else
    is binarized and renormalized. Sequences whose frames are all empty
    are rejected.
    """
    if isinstance(X, np.ndarray):
        if X.ndim != 4:
            raise DataError(f"expected 4-D (n, m, H, W) array, got {X.shape}")
        seqs = list(X)
    elif isinstance(X, (list, tuple)):
        seqs = [np.asarray(s) for s in X]
    else:
        raise DataError(f"unsupported input type {type(X).__name__}")
    if not seqs:
        raise DataError("X must contain at least one sequence")

    out = []
    for i, seq in enumerate(seqs):
        if seq.ndim != 3:
            raise DataError(f"sequence {i} must be (m, H, W), got {seq.shape}")
        if (
            seq.shape[1:] == (FRAME_HEIGHT, FRAME_WIDTH)
            and seq.dtype == np.uint8
            and seq.max(initial=0) <= 1
        ):
            out.append(seq)
            continue
        frames = [normalize_frame(f) for f in seq]
        frames = [f for f in frames if f is not None]
        if not frames:
            raise DataError(f"sequence {i} has no non-empty frames")
        out.append(np.stack(frames))
    return out


def check_labels(y, n: int) -> list[str]:
    y = list(y)
    if len(y) != n:
        raise DataError(f"y has {len(y)} labels for {n} sequences")
    return [str(label) for label in y]


def check_is_fitted(estimator, attr: str = "state_") -> None:
    if not hasattr(estimator, attr):
        raise DataError(
            f"{type(estimator).__name__} is not fitted yet; call fit first"
        )
