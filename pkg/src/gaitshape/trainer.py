"""Training loop: (P, K) batches, combined identity + distillation loss,
single Adam optimizer, metrics records, and versioned binary checkpoints.

Runs are deterministic in the config seed: model init uses a dedicated
torch generator and every step derives its sampling rng from
(seed, iteration), so a resumed run continues the exact same stream.
"""

from __future__ import annotations

import dataclasses
import json
import struct
import time
from pathlib import Path
from typing import Callable

import numpy as np
import torch

from . import data as _data
from .data import DataError, DatasetIndex, SequenceEntry
from .distill import DistillBatch, crd_loss, l2_hint_loss
from .encoders import GaitShapeModel, ModelConfig, ShiftConfig, freeze
from .losses import ce_identity_loss, triplet_loss
from .prior import PriorNormStats

CHECKPOINT_MAGIC = b"GAITCKPT"
CHECKPOINT_VERSION = 1

DISTILL_MODES = ("crd", "l2", "none")


class TrainingAbort(Exception):
    """Raised when the objective turns non-finite."""


@dataclasses.dataclass
class TrainConfig:
    p: int = 8
    k: int = 16
    frames_per_sample: int = 30
    max_iters: int = 1000
    lr: float = 1e-4
    momentum: float = 0.9
    weight_decay: float = 0.0
    margin: float = 0.2
    lambda1: float = 1.0
    lambda2: float = 1.0
    distill: str = "crd"
    use_ce: bool = False
    prior_coverage: float = 0.2
    freeze_body_encoder: bool = False
    shift_ratio: float = 0.125
    n_blocks: int = 6
    temporal_fusion: str = "temporal_shift"
    silhouette_channels: tuple = (32, 64, 128)
    body_channels: tuple = (16, 24, 32, 64, 96, 160)
    horizontal_bins: int = 16
    embedding_dim: int = 128
    proj_dim: int = 10
    eval_every: int = 500
    seed: int = 0

    def __post_init__(self):
        self.silhouette_channels = tuple(self.silhouette_channels)
        self.body_channels = tuple(self.body_channels)
        if self.p < 2 or self.k < 1:
            raise ValueError("need p >= 2 subjects and k >= 1 sequences")
        if self.frames_per_sample < 1 or self.max_iters < 0:
            raise ValueError("frames_per_sample and max_iters must be positive")
        if self.distill not in DISTILL_MODES:
            raise ValueError(f"distill must be one of {DISTILL_MODES}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("loss weights must be nonnegative")
        if not 0.0 <= self.prior_coverage <= 1.0:
            raise ValueError("prior_coverage must be in [0, 1]")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")

    def model_config(self, n_classes: int | None = None) -> ModelConfig:
        return ModelConfig(
            silhouette_channels=self.silhouette_channels,
            body_channels=self.body_channels,
            horizontal_bins=self.horizontal_bins,
            embedding_dim=self.embedding_dim,
            proj_dim=self.proj_dim,
            shift=ShiftConfig(
                ratio=self.shift_ratio,
                n_blocks=self.n_blocks,
                temporal_fusion=self.temporal_fusion,
            ),
            n_classes=n_classes,
            seed=self.seed,
        )


@dataclasses.dataclass
class MetricsRecord:
    iteration: int
    l_id: float
    l_kd: float | None  # None when the batch carried no priors
    total: float
    lr: float
    wall_ms: float

    CSV_HEADER = "iteration,l_id,l_kd,total,lr,wall_ms"

    def csv_row(self) -> str:
        kd = "" if self.l_kd is None else repr(self.l_kd)
        return (
            f"{self.iteration},{self.l_id!r},{kd},{self.total!r},"
            f"{self.lr!r},{self.wall_ms:.3f}"
        )


@dataclasses.dataclass
class TrainState:
    model: GaitShapeModel
    optimizer: torch.optim.Adam
    config: TrainConfig
    iteration: int = 0
    label_map: dict = dataclasses.field(default_factory=dict)
    prior_stats: PriorNormStats | None = None
    train_cardinality: int = 0
    loader: Callable = None  # entry -> (m, 64, 44) uint8


def init_state(config: TrainConfig, index: DatasetIndex) -> TrainState:
    """Build a fresh model/optimizer pair bound to the training split."""
    train_entries = index.train_entries()
    if not train_entries:
        raise DataError("training split is empty")
    label_map = {s: i for i, s in enumerate(index.train_subjects())}
    n_classes = len(label_map) if config.use_ce else None
    model = GaitShapeModel(config.model_config(n_classes))
    if config.freeze_body_encoder:
        freeze(model, "body_shape_encoder")
    optimizer = torch.optim.Adam(
        [p for p in model.parameters() if p.requires_grad],
        lr=config.lr,
        betas=(config.momentum, 0.999),
        weight_decay=config.weight_decay,
    )
    return TrainState(
        model=model,
        optimizer=optimizer,
        config=config,
        iteration=0,
        label_map=label_map,
        prior_stats=index.prior_stats,
        train_cardinality=len(train_entries),
        loader=_data.SequenceCache(),
    )


def _batch_tensors(
    state: TrainState,
    batch: list[SequenceEntry],
    rng: np.random.Generator,
):
    cfg = state.config
    frames = np.empty(
        (len(batch), cfg.frames_per_sample, _data.FRAME_HEIGHT, _data.FRAME_WIDTH),
        dtype=np.float32,
    )
    for i, entry in enumerate(batch):
        seq = state.loader(entry)
        idx = _data.sample_frame_indices(
            seq.shape[0], cfg.frames_per_sample, "ordered_window", rng
        )
        frames[i] = seq[idx]
    labels = torch.tensor([state.label_map[e.subject] for e in batch])
    return torch.from_numpy(frames), labels


def train_step(
    state: TrainState,
    batch: list[SequenceEntry],
    rng: np.random.Generator | None = None,
) -> MetricsRecord:
    """One optimization step over a prepared (P, K) batch."""
    cfg = state.config
    t0 = time.perf_counter()
    state.iteration += 1
    rng = rng or np.random.default_rng(
        np.random.SeedSequence([cfg.seed, state.iteration, 1])
    )
    frames, labels = _batch_tensors(state, batch, rng)

    embeddings, shape_code = state.model.embed(frames)
    l_id = triplet_loss(embeddings, labels, margin=cfg.margin)
    if cfg.use_ce and state.model.classifier is not None:
        l_id = l_id + ce_identity_loss(embeddings, labels, state.model.classifier)

    covered = [i for i, e in enumerate(batch) if e.has_prior]
    l_kd = None
    if covered and cfg.distill != "none":
        teacher = torch.from_numpy(
            np.stack([batch[i].prior.beta for i in covered]).astype(np.float32)
        )
        student = shape_code[covered]
        if cfg.distill == "crd":
            # duplicated picks can make N exceed the unique-sequence count
            cardinality = max(state.train_cardinality, len(covered))
            l_kd = crd_loss(
                DistillBatch(student, teacher, labels[covered], cardinality),
                state.model.projection,
            )
        else:
            l_kd = l2_hint_loss(student, teacher)

    total = cfg.lambda1 * l_id
    if l_kd is not None:
        total = total + cfg.lambda2 * l_kd
    if not torch.isfinite(total):
        locs = ", ".join(e.locator() for e in batch)
        raise TrainingAbort(
            f"non-finite loss at iteration {state.iteration} (batch: {locs})"
        )

    state.optimizer.zero_grad()
    total.backward()
    state.optimizer.step()

    l_id_f = float(l_id.detach())
    l_kd_f = None if l_kd is None else float(l_kd.detach())
    total_f = cfg.lambda1 * l_id_f
    if l_kd_f is not None:
        total_f += cfg.lambda2 * l_kd_f
    return MetricsRecord(
        iteration=state.iteration,
        l_id=l_id_f,
        l_kd=l_kd_f,
        total=total_f,
        lr=cfg.lr,
        wall_ms=(time.perf_counter() - t0) * 1000.0,
    )


def train(
    config: TrainConfig,
    index: DatasetIndex,
    out_dir: str | Path | None = None,
    state: TrainState | None = None,
    on_eval: Callable | None = None,
) -> tuple[TrainState, list[MetricsRecord]]:
    """Run (or continue) training up to config.max_iters.

    With an out_dir, appends metrics.csv rows as they are produced and
    writes a checkpoint at iteration 0 (fresh runs), at every eval_every
    iterations, and at the end. ``on_eval`` is called at those same
    points with the current state (the CLI hooks evaluation in there).
    """
    if state is None:
        state = init_state(config, index)
    if state.loader is None:
        state.loader = _data.SequenceCache()
    records: list[MetricsRecord] = []

    metrics_path = ckpt_dir = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        metrics_path = out_dir / "metrics.csv"
        ckpt_dir = out_dir / "checkpoints"
        ckpt_dir.mkdir(exist_ok=True)
        if state.iteration == 0:
            save_checkpoint(state, ckpt_dir / "ckpt_0.bin")
    metrics_file = None
    if metrics_path is not None:
        new_file = not metrics_path.exists()
        metrics_file = metrics_path.open("a")
        if new_file:
            metrics_file.write(MetricsRecord.CSV_HEADER + "\n")

    try:
        while state.iteration < config.max_iters:
            it = state.iteration + 1
            batch_seed = int(
                np.random.SeedSequence([config.seed, it, 0]).generate_state(1)[0]
            )
            batch = _data.make_pk_batch(index, config.p, config.k, batch_seed)
            frame_rng = np.random.default_rng(
                np.random.SeedSequence([config.seed, it, 1])
            )
            rec = train_step(state, batch, frame_rng)
            records.append(rec)
            if metrics_file is not None:
                metrics_file.write(rec.csv_row() + "\n")
                metrics_file.flush()
            at_eval = (
                state.iteration % config.eval_every == 0
                or state.iteration == config.max_iters
            )
            if at_eval:
                if ckpt_dir is not None:
                    save_checkpoint(state, ckpt_dir / f"ckpt_{state.iteration}.bin")
                if on_eval is not None:
                    on_eval(state)
    finally:
        if metrics_file is not None:
            metrics_file.close()
    return state, records


# ---------------------------------------------------------------------------
# Checkpoint format: magic, u32 version, u64 header length, JSON header
# (sorted keys), then raw little-endian tensor payloads in header order.
# Saving, loading and saving again yields byte-identical files.
# ---------------------------------------------------------------------------


def _config_to_dict(config: TrainConfig) -> dict:
    d = dataclasses.asdict(config)
    d["silhouette_channels"] = list(config.silhouette_channels)
    d["body_channels"] = list(config.body_channels)
    return d


def save_checkpoint(state: TrainState, path: str | Path) -> None:
    path = Path(path)
    tensors: dict[str, np.ndarray] = {}
    for name, p in state.model.named_parameters():
        tensors[f"model.{name}"] = p.detach().numpy().astype(np.float32, copy=False)

    opt_steps: dict[str, int] = {}
    id_to_name = {id(p): n for n, p in state.model.named_parameters()}
    for p, pstate in state.optimizer.state.items():
        name = id_to_name[id(p)]
        opt_steps[name] = int(pstate["step"])
        for key in ("exp_avg", "exp_avg_sq"):
            tensors[f"opt.{name}.{key}"] = (
                pstate[key].detach().numpy().astype(np.float32, copy=False)
            )

    order = sorted(tensors)
    specs = []
    offset = 0
    for name in order:
        arr = np.ascontiguousarray(tensors[name])
        tensors[name] = arr
        specs.append(
            {
                "dtype": arr.dtype.str,
                "name": name,
                "nbytes": arr.nbytes,
                "offset": offset,
                "shape": list(arr.shape),
            }
        )
        offset += arr.nbytes

    header = {
        "config": _config_to_dict(state.config),
        "iteration": state.iteration,
        "label_map": state.label_map,
        "optimizer_steps": opt_steps,
        "prior_stats": None
        if state.prior_stats is None
        else state.prior_stats.as_dict(),
        "tensors": specs,
        "train_cardinality": state.train_cardinality,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with path.open("wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for name in order:
            f.write(tensors[name].tobytes())


def load_checkpoint(path: str | Path) -> TrainState:
    """Rebuild a full training state (model, optimizer, counters)."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 20 or raw[:8] != CHECKPOINT_MAGIC:
        raise DataError(f"{path} is not a gaitshape checkpoint")
    version = struct.unpack("<I", raw[8:12])[0]
    if version != CHECKPOINT_VERSION:
        raise DataError(f"unsupported checkpoint version {version}")
    hlen = struct.unpack("<Q", raw[12:20])[0]
    header = json.loads(raw[20 : 20 + hlen].decode())
    payload = raw[20 + hlen :]

    arrays: dict[str, np.ndarray] = {}
    for spec in header["tensors"]:
        buf = payload[spec["offset"] : spec["offset"] + spec["nbytes"]]
        arrays[spec["name"]] = np.frombuffer(buf, dtype=spec["dtype"]).reshape(
            spec["shape"]
        ).copy()

    config = TrainConfig(**header["config"])
    label_map = dict(header["label_map"])
    n_classes = len(label_map) if config.use_ce else None
    model = GaitShapeModel(config.model_config(n_classes))
    with torch.no_grad():
        for name, p in model.named_parameters():
            p.copy_(torch.from_numpy(arrays[f"model.{name}"]))
    if config.freeze_body_encoder:
        freeze(model, "body_shape_encoder")

    optimizer = torch.optim.Adam(
        [p for p in model.parameters() if p.requires_grad],
        lr=config.lr,
        betas=(config.momentum, 0.999),
        weight_decay=config.weight_decay,
    )
    params = dict(model.named_parameters())
    for name, step in header["optimizer_steps"].items():
        p = params[name]
        optimizer.state[p] = {
            "step": torch.tensor(float(step)),
            "exp_avg": torch.from_numpy(arrays[f"opt.{name}.exp_avg"]),
            "exp_avg_sq": torch.from_numpy(arrays[f"opt.{name}.exp_avg_sq"]),
        }

    prior_stats = None
    if header["prior_stats"] is not None:
        prior_stats = PriorNormStats.from_dict(header["prior_stats"])
    return TrainState(
        model=model,
        optimizer=optimizer,
        config=config,
        iteration=header["iteration"],
        label_map=label_map,
        prior_stats=prior_stats,
        train_cardinality=header["train_cardinality"],
        loader=_data.SequenceCache(),
    )
