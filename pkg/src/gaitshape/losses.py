"""Identity losses: batch-all triplet over horizontal bins, plus an
optional cross-entropy head."""

from __future__ import annotations

import torch
import torch.nn.functional as F


class DegenerateBatch(Exception):
    """Raised when a batch admits no (anchor, positive, negative) triplet."""


def pairwise_distances(x: torch.Tensor) -> torch.Tensor:
    """Euclidean distance matrix with a gradient-safe sqrt.

    Squared distances are clamped to 1e-12 before the root, so coincident
    points produce a finite (zero) gradient instead of NaN.
    """
    sq = (x * x).sum(dim=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    return d2.clamp(min=1e-12).sqrt()


def triplet_loss(
    embeddings: torch.Tensor,
    labels: torch.Tensor,
    margin: float = 0.2,
) -> torch.Tensor:
    """Batch-all triplet loss, computed per horizontal bin and averaged.

    embeddings is (B, bins, D) or (B, D). Within a bin every valid
    (anchor, positive, negative) combination contributes
    relu(d_ap - d_an + margin); the bin loss is the mean over the active
    (strictly positive) terms, or 0 when none are active. A batch whose
    labels admit no valid triplet at all is degenerate.
    """
    if embeddings.dim() == 2:
        embeddings = embeddings[:, None, :]
    if embeddings.dim() != 3:
        raise ValueError(f"expected (B, bins, D), got {tuple(embeddings.shape)}")
    b = embeddings.shape[0]
    if labels.shape[0] != b:
        raise ValueError("labels must match the batch dimension")

    same = labels[:, None] == labels[None, :]
    eye = torch.eye(b, dtype=torch.bool, device=embeddings.device)
    pos_mask = same & ~eye
    neg_mask = ~same
    valid = pos_mask[:, :, None] & neg_mask[:, None, :]
    if not bool(valid.any()):
        raise DegenerateBatch("no valid (anchor, positive, negative) triplets")

    bin_losses = []
    for n in range(embeddings.shape[1]):
        d = pairwise_distances(embeddings[:, n])
        hinge = d[:, :, None] - d[:, None, :] + margin
        active = (hinge > 0) & valid
        n_active = int(active.sum())
        if n_active == 0:
            # exact zero, but kept on the graph so a fully satisfied batch
            # backpropagates zero gradient instead of detaching the loss
            bin_losses.append(hinge.sum() * 0.0)
        else:
            bin_losses.append(hinge[active].sum() / n_active)
    return torch.stack(bin_losses).mean()


def ce_identity_loss(
    embeddings: torch.Tensor,
    labels: torch.Tensor,
    classifier: torch.nn.Module,
) -> torch.Tensor:
    """Cross entropy on the flattened embedding through an identity head."""
    if embeddings.dim() == 3:
        embeddings = embeddings.flatten(1)
    logits = classifier(embeddings)
    if int(labels.max()) >= logits.shape[1] or int(labels.min()) < 0:
        raise ValueError(
            f"labels out of range for a {logits.shape[1]}-way classifier"
        )
    return F.cross_entropy(logits, labels)
