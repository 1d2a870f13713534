"""Distillation of body-prior vectors into the shape encoder output.

The main path is a contrastive formulation: student/teacher vectors are
projected to a shared space and L2-normalized, and each pair is scored

    h(s, t) = exp(f1(s) . f2(t)) / (exp(f1(s) . f2(t)) + N / M)

where N is the batch size and M the training-set cardinality. Same-identity
pairs (the diagonal included) are pulled toward h = 1, cross-identity pairs
toward h = 0. An L2 hint loss is kept as a cheaper alternative.
"""

from __future__ import annotations

import dataclasses

import torch
import torch.nn as nn
import torch.nn.functional as F

_EPS = 1e-12


class DistillError(Exception):
    """Raised for degenerate distillation batches."""


class ProjectionHead(nn.Module):
    """Pair of linear maps (student f1, teacher f2) onto the unit sphere."""

    def __init__(self, dim: int = 10, proj_dim: int = 10):
        super().__init__()
        self.f_student = nn.Linear(dim, proj_dim)
        self.f_teacher = nn.Linear(dim, proj_dim)
        self.reset_parameters()

    def reset_parameters(self) -> None:
        # identity start when square, so projections begin as the raw spaces
        with torch.no_grad():
            for lin in (self.f_student, self.f_teacher):
                if lin.weight.shape[0] == lin.weight.shape[1]:
                    lin.weight.copy_(torch.eye(lin.weight.shape[0]))
                else:
                    bound = 1.0 / lin.weight.shape[1] ** 0.5
                    lin.weight.uniform_(-bound, bound)
                lin.bias.zero_()

    def project_student(self, x: torch.Tensor) -> torch.Tensor:
        return F.normalize(self.f_student(x), dim=-1, eps=_EPS)

    def project_teacher(self, x: torch.Tensor) -> torch.Tensor:
        return F.normalize(self.f_teacher(x), dim=-1, eps=_EPS)


@dataclasses.dataclass
class DistillBatch:
    """Student codes, teacher priors and identity labels for one step.

    cardinality (M) is the number of training sequences the negatives are
    notionally drawn from; the batch size N is len(student).
    """

    student: torch.Tensor  # (N, dim)
    teacher: torch.Tensor  # (N, dim)
    labels: torch.Tensor  # (N,) integer identities
    cardinality: int

    def __post_init__(self):
        n = self.student.shape[0]
        if n < 1:
            raise DistillError("empty distillation batch")
        if self.teacher.shape[0] != n or self.labels.shape[0] != n:
            raise DistillError("student/teacher/labels length mismatch")
        if self.cardinality < n:
            raise DistillError(
                f"cardinality {self.cardinality} smaller than batch {n}"
            )


def crd_pair_score(
    student: torch.Tensor,
    teacher: torch.Tensor,
    heads: ProjectionHead,
    n: int,
    m: int,
) -> torch.Tensor:
    """Score h(s, t) for aligned rows of student/teacher vectors."""
    zs = heads.project_student(student)
    zt = heads.project_teacher(teacher)
    dot = (zs * zt).sum(dim=-1).clamp(-1.0, 1.0)
    e = dot.exp()
    return e / (e + n / m)


def crd_loss(batch: DistillBatch, heads: ProjectionHead) -> torch.Tensor:
    """Contrastive distillation over all student x teacher pairs.

    Positives are same-identity pairs (diagonal included), negatives the
    rest. Returns the negated log objective, so lower is better and the
    value is nonnegative. A batch without positives is degenerate; one
    without negatives (single identity) only pulls positives.
    """
    zs = heads.project_student(batch.student)
    zt = heads.project_teacher(batch.teacher)
    n = batch.student.shape[0]
    dots = (zs @ zt.T).clamp(-1.0, 1.0)
    e = dots.exp()
    h = (e / (e + n / batch.cardinality)).clamp(_EPS, 1.0 - _EPS)
    pos = batch.labels[:, None] == batch.labels[None, :]
    if not bool(pos.any()):
        raise DistillError("no positive pairs in distillation batch")
    loss = -h[pos].log().mean()
    neg = ~pos
    if bool(neg.any()):
        loss = loss - (1.0 - h[neg]).log().mean()
    return loss


def l2_hint_loss(student: torch.Tensor, teacher: torch.Tensor) -> torch.Tensor:
    """Plain mean squared error between student codes and priors."""
    if student.shape != teacher.shape:
        raise DistillError(
            f"shape mismatch {tuple(student.shape)} vs {tuple(teacher.shape)}"
        )
    if student.numel() == 0:
        raise DistillError("empty distillation batch")
    return F.mse_loss(student, teacher)


def combined_loss(
    identity_loss: torch.Tensor,
    distill_loss: torch.Tensor | None,
    has_prior: bool,
    lambda1: float = 1.0,
    lambda2: float = 1.0,
) -> torch.Tensor:
    """Total objective: lambda1 * L_ID + lambda2 * L_KD, with the
    distillation term gated off when the batch carries no priors."""
    total = lambda1 * identity_loss
    if has_prior and distill_loss is not None:
        total = total + lambda2 * distill_loss
    return total
