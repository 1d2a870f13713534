"""Silhouette dataset handling: directory indexing, subject/view splits,
gallery/probe role assignment, frame sampling, (P, K) batch construction,
and a synthetic articulated-walker generator used for tests and demos.

Frames are binary silhouettes normalized to 64x44 (height x width). A
sequence directory tree follows the common gait layout::

    <root>/<subject>/<variant>-<seqidx>/<view>/<frame>.png

e.g. ``001/nm-01/090/0003.png``.
"""

from __future__ import annotations

import dataclasses
import json
import math
import re
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from PIL import Image

FRAME_HEIGHT = 64
FRAME_WIDTH = 44
# 8-bit inputs are binarized with foreground = value > threshold.
BINARY_THRESHOLD = 127

SHAPE_DIM = 10

# Per-dimension meaning and bounds of the synthetic walker shape vector.
# All lengths are in pixels of the fixed world scale; stride is in radians.
SHAPE_NAMES = (
    "torso_half_width",
    "torso_half_height",
    "leg_radius",
    "leg_length",
    "arm_radius",
    "arm_length",
    "head_radius",
    "shoulder_half_width",
    "hip_half_width",
    "stride_amplitude",
)
SHAPE_LOW = np.array([4.0, 7.0, 1.5, 12.0, 1.0, 8.0, 3.0, 4.0, 3.5, 0.15])
SHAPE_HIGH = np.array([9.0, 12.0, 3.5, 18.0, 2.5, 14.0, 6.0, 9.0, 8.0, 0.55])

_VARIANT_RE = re.compile(r"^([a-zA-Z]+)-(\d+)$")
_VIEW_RE = re.compile(r"^(\d+)$")


class DataError(Exception):
    """Raised for malformed or unusable dataset inputs."""


@dataclasses.dataclass
class SequenceEntry:
    """One silhouette sequence (a walk of one subject from one view)."""

    subject: str
    variant: str
    seq_idx: int
    view: int
    path: Path | None = None
    frames: np.ndarray | None = None  # optional in-memory (m, 64, 44) uint8
    split: str | None = None  # "train" | "test"
    role: str | None = None  # "gallery" | "probe" (test entries only)
    prior: object | None = None  # gaitshape.prior.BodyPrior once attached
    has_prior: bool = False

    @property
    def key(self) -> tuple[str, str, int, int]:
        return (self.subject, self.variant, self.seq_idx, self.view)

    def locator(self) -> str:
        return f"{self.subject}/{self.variant}-{self.seq_idx:02d}/{self.view:03d}"


@dataclasses.dataclass
class DatasetIndex:
    """All sequences of a dataset plus split/role bookkeeping."""

    entries: list[SequenceEntry]
    layout: str = "casia-b"
    warnings: list[str] = dataclasses.field(default_factory=list)
    train_views: tuple[int, ...] | None = None
    test_views: tuple[int, ...] | None = None
    prior_stats: object | None = None  # gaitshape.prior.PriorNormStats

    def subjects(self) -> list[str]:
        return sorted({e.subject for e in self.entries})

    def views(self) -> list[int]:
        return sorted({e.view for e in self.entries})

    def train_subjects(self) -> list[str]:
        return sorted({e.subject for e in self.entries if e.split == "train"})

    def test_subjects(self) -> list[str]:
        return sorted({e.subject for e in self.entries if e.split == "test"})

    def train_entries(self) -> list[SequenceEntry]:
        out = [e for e in self.entries if e.split == "train"]
        if self.train_views is not None:
            out = [e for e in out if e.view in self.train_views]
        return out

    def test_entries(self) -> list[SequenceEntry]:
        out = [e for e in self.entries if e.split == "test"]
        if self.test_views is not None:
            out = [e for e in out if e.view in self.test_views]
        return out

    def gallery_entries(self) -> list[SequenceEntry]:
        return [e for e in self.test_entries() if e.role == "gallery"]

    def probe_entries(self) -> list[SequenceEntry]:
        return [e for e in self.test_entries() if e.role == "probe"]


def binarize(img: np.ndarray) -> np.ndarray:
    """Map an image to a {0, 1} uint8 mask.

    Inputs already in {0, 1} (or bool) pass through; anything else is
    treated as 8-bit with foreground = value > 127.
    """
    if img.dtype == bool or img.max(initial=0) <= 1:
        return img.astype(np.uint8)
    return (img > BINARY_THRESHOLD).astype(np.uint8)


def _resize_nearest(mask: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    h, w = mask.shape
    rows = np.floor((np.arange(out_h) + 0.5) * h / out_h).astype(np.int64)
    cols = np.floor((np.arange(out_w) + 0.5) * w / out_w).astype(np.int64)
    rows = np.clip(rows, 0, h - 1)
    cols = np.clip(cols, 0, w - 1)
    return mask[rows][:, cols]


def normalize_frame(mask: np.ndarray) -> np.ndarray | None:
    """Normalize one binary mask to the 64x44 frame convention.

    Crops to the vertical foreground extent, rescales (aspect preserving)
    so the body spans the full height, and centers the foreground centroid
    horizontally. Returns None for frames with no foreground.
    """
    mask = binarize(np.asarray(mask))
    if mask.ndim != 2:
        raise DataError(f"expected a 2-D mask, got shape {mask.shape}")
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        return None
    body = mask[rows[0] : rows[-1] + 1]
    scale = FRAME_HEIGHT / body.shape[0]
    new_w = max(1, int(round(body.shape[1] * scale)))
    resized = _resize_nearest(body, FRAME_HEIGHT, new_w)
    col_mass = resized.sum(axis=0).astype(np.float64)
    total = col_mass.sum()
    if total == 0:  # resampling can in principle drop a 1-px sliver
        return None
    centroid = float((col_mass * np.arange(new_w)).sum() / total)
    out = np.zeros((FRAME_HEIGHT, FRAME_WIDTH), dtype=np.uint8)
    offset = int(round(FRAME_WIDTH / 2.0 - centroid))
    src_lo = max(0, -offset)
    src_hi = min(new_w, FRAME_WIDTH - offset)
    if src_lo < src_hi:
        out[:, src_lo + offset : src_hi + offset] = resized[:, src_lo:src_hi]
    return out


def load_sequence(entry: SequenceEntry) -> np.ndarray:
    """Load and normalize all frames of a sequence as (m, 64, 44) uint8."""
    if entry.frames is not None:
        return entry.frames
    if entry.path is None:
        raise DataError(f"sequence {entry.locator()} has neither path nor frames")
    files = sorted(entry.path.glob("*.png"))
    frames = []
    for f in files:
        arr = np.asarray(Image.open(f).convert("L"))
        norm = normalize_frame(arr)
        if norm is not None:
            frames.append(norm)
    if not frames:
        raise DataError(f"sequence {entry.locator()} has no non-empty frames")
    return np.stack(frames)


class SequenceCache:
    """Memoizing loader: decode and normalize each sequence at most once."""

    def __init__(self, max_items: int | None = None):
        self._store: dict[tuple, np.ndarray] = {}
        self.max_items = max_items

    def __call__(self, entry: SequenceEntry) -> np.ndarray:
        key = entry.key
        hit = self._store.get(key)
        if hit is not None:
            return hit
        frames = load_sequence(entry)
        if self.max_items is None or len(self._store) < self.max_items:
            self._store[key] = frames
        return frames


def load_dataset(root: str | Path, layout: str = "casia-b") -> DatasetIndex:
    """Index a silhouette tree laid out as subject/variant-seq/view/*.png.

    Malformed directory names are skipped with a warning recorded on the
    returned index; an entirely empty tree is an error.
    """
    root = Path(root)
    if layout not in ("casia-b", "oumvlp"):
        raise DataError(f"unknown layout {layout!r}")
    if not root.is_dir():
        raise DataError(f"dataset root {root} does not exist")
    entries: list[SequenceEntry] = []
    warnings: list[str] = []
    for subj_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        for var_dir in sorted(p for p in subj_dir.iterdir() if p.is_dir()):
            m = _VARIANT_RE.match(var_dir.name)
            if m is None:
                warnings.append(f"skipped {var_dir}: not <variant>-<seqidx>")
                continue
            variant, seq_idx = m.group(1).lower(), int(m.group(2))
            for view_dir in sorted(p for p in var_dir.iterdir() if p.is_dir()):
                vm = _VIEW_RE.match(view_dir.name)
                if vm is None:
                    warnings.append(f"skipped {view_dir}: view not numeric")
                    continue
                if not any(view_dir.glob("*.png")):
                    warnings.append(f"skipped {view_dir}: no png frames")
                    continue
                entries.append(
                    SequenceEntry(
                        subject=subj_dir.name,
                        variant=variant,
                        seq_idx=seq_idx,
                        view=int(vm.group(1)),
                        path=view_dir,
                    )
                )
    if not entries:
        raise DataError(f"no sequences found under {root}")
    return DatasetIndex(entries=entries, layout=layout, warnings=warnings)


def _sorted_subjects(index: DatasetIndex) -> list[str]:
    subs = index.subjects()
    if all(s.isdigit() for s in subs):
        return sorted(subs, key=lambda s: (int(s), s))
    return subs


def split_subjects(index: DatasetIndex, scheme: str | Iterable[str]) -> DatasetIndex:
    """Assign each entry a train/test split by subject.

    ``scheme`` is ``"casiab_74"`` (first 74 subjects train), ``"oumvlp_odd"``
    (alternating subjects train, as in the odd-index protocol), ``"first:<n>"``,
    or an explicit iterable of training subject labels.
    """
    subs = _sorted_subjects(index)
    if isinstance(scheme, str):
        if scheme == "casiab_74":
            if len(subs) < 74:
                raise DataError(
                    f"casiab_74 needs at least 74 subjects, found {len(subs)}"
                )
            train = set(subs[:74])
        elif scheme == "oumvlp_odd":
            # Odd 1-based positions, except the last position when the count
            # is odd; 10307 subjects therefore split 5153 train / 5154 test.
            train = set(subs[i] for i in range(0, len(subs) - 1, 2))
        elif scheme.startswith("first:"):
            n = int(scheme.split(":", 1)[1])
            if n < 1 or n > len(subs):
                raise DataError(f"first:{n} invalid for {len(subs)} subjects")
            train = set(subs[:n])
        else:
            raise DataError(f"unknown split scheme {scheme!r}")
    else:
        train = set(scheme)
        unknown = train - set(subs)
        if unknown:
            raise DataError(f"split lists unknown subjects: {sorted(unknown)}")
    if len(train) == len(subs):
        index.warnings.append("split leaves an empty test set")
    for e in index.entries:
        e.split = "train" if e.subject in train else "test"
    return index


def assign_roles(index: DatasetIndex) -> DatasetIndex:
    """Mark each test entry as gallery or probe per the layout convention.

    casia-b: nm-01..nm-04 are gallery, every other sequence is a probe.
    oumvlp: the lowest sequence index of each subject is gallery.
    Test subjects with no gallery sequences are dropped with a warning.
    """
    if any(e.split is None for e in index.entries):
        raise DataError("assign_roles requires split_subjects to run first")
    by_subject: dict[str, list[SequenceEntry]] = {}
    for e in index.entries:
        if e.split == "test":
            by_subject.setdefault(e.subject, []).append(e)
    for subject, group in sorted(by_subject.items()):
        if index.layout == "casia-b":
            for e in group:
                is_gal = e.variant == "nm" and 1 <= e.seq_idx <= 4
                e.role = "gallery" if is_gal else "probe"
        else:  # oumvlp
            first = min(e.seq_idx for e in group)
            for e in group:
                e.role = "gallery" if e.seq_idx == first else "probe"
        if not any(e.role == "gallery" for e in group):
            for e in group:
                e.role = None
            index.warnings.append(f"subject {subject} has no gallery; excluded")
    return index


def make_view_split(
    index: DatasetIndex,
    train_views: Sequence[int],
    test_views: Sequence[int],
) -> DatasetIndex:
    """Restrict training and evaluation to disjoint camera views.

    After this, train_entries() only yields training-view sequences and
    gallery/probe accessors only yield test-view sequences, which is the
    zero-shot novel-view protocol.
    """
    train_v = tuple(sorted(set(int(v) for v in train_views)))
    test_v = tuple(sorted(set(int(v) for v in test_views)))
    if not train_v or not test_v:
        raise DataError("view split needs non-empty train and test view sets")
    overlap = set(train_v) & set(test_v)
    if overlap:
        raise DataError(f"train and test views overlap: {sorted(overlap)}")
    known = set(index.views())
    missing = (set(train_v) | set(test_v)) - known
    if missing:
        raise DataError(f"views not present in dataset: {sorted(missing)}")
    index.train_views = train_v
    index.test_views = test_v
    return index


def sample_frame_indices(
    m: int,
    count: int,
    mode: str = "ordered_window",
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Pick frame indices for one sequence.

    ``full`` keeps every frame. ``ordered_window`` takes a contiguous,
    order-preserving window of ``count`` frames with a random start; short
    sequences wrap around cyclically (m=4, count=6, start 0 gives
    0,1,2,3,0,1). Without an rng the window starts at frame 0.
    """
    if m < 1:
        raise DataError("cannot sample from an empty sequence")
    if mode == "full":
        return np.arange(m)
    if mode != "ordered_window":
        raise DataError(f"unknown sampling mode {mode!r}")
    if count < 1:
        raise DataError("frame count must be >= 1")
    if m >= count:
        start = 0 if rng is None else int(rng.integers(0, m - count + 1))
        return np.arange(start, start + count)
    start = 0 if rng is None else int(rng.integers(0, m))
    return (start + np.arange(count)) % m


def sample_frames(
    frames: np.ndarray,
    count: int,
    mode: str = "ordered_window",
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Apply sample_frame_indices to an (m, H, W) stack."""
    idx = sample_frame_indices(frames.shape[0], count, mode=mode, rng=rng)
    return frames[idx]


def make_pk_batch(
    index: DatasetIndex,
    p: int,
    k: int,
    seed: int,
) -> list[SequenceEntry]:
    """Draw a (P, K) identity batch from the training split.

    P distinct subjects, K sequences each; subjects with fewer than K
    training sequences are sampled with replacement. Deterministic in
    ``seed``.
    """
    groups: dict[str, list[SequenceEntry]] = {}
    for e in index.train_entries():
        groups.setdefault(e.subject, []).append(e)
    subjects = sorted(groups)
    if len(subjects) < p:
        raise DataError(f"need {p} training subjects, have {len(subjects)}")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(subjects), size=p, replace=False)
    batch: list[SequenceEntry] = []
    for si in chosen:
        seqs = sorted(groups[subjects[si]], key=lambda e: e.key)
        if len(seqs) >= k:
            picks = rng.choice(len(seqs), size=k, replace=False)
        else:
            picks = rng.choice(len(seqs), size=k, replace=True)
        batch.extend(seqs[j] for j in picks)
    return batch


# ---------------------------------------------------------------------------
# Synthetic articulated walker
# ---------------------------------------------------------------------------

# Scene constants (pixels on the fixed world canvas).
_GROUND_Y = 62.0
_CENTER_X = FRAME_WIDTH / 2.0
_WIDE_PAD = 16  # extra canvas margin used to detect boundary clipping
_BAG_SEMI_X = 3.0
_BAG_SEMI_Y = 4.0
_ARM_SWING_FRACTION = 0.55
_HEAD_OVERLAP = 1.0


@dataclasses.dataclass
class SyntheticWalkerParams:
    """Inputs of the walker renderer.

    ``shape`` is the 10-vector described by SHAPE_NAMES; ``view`` is the
    camera angle in degrees (0 = side-on). ``bag`` adds a carried blob,
    ``coat_scale`` widens the torso/hip region, ``edge_slack`` lets the
    walker start/end partially outside the frame so those frames fail
    the body-prior detectability check.
    """

    shape: np.ndarray
    view: float = 0.0
    gait_phase_rate: float = 0.12
    bag: bool = False
    coat_scale: float = 1.0
    edge_slack: float = 0.0


@dataclasses.dataclass
class SilhouetteSequence:
    frames: np.ndarray  # (m, 64, 44) uint8 in {0, 1}
    detectable: np.ndarray  # (m,) bool
    params: SyntheticWalkerParams


def _ellipse(xx, yy, cx, cy, rx, ry):
    return ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0


def _capsule(xx, yy, ax, ay, bx, by, r):
    # distance from each pixel to segment (a, b)
    abx, aby = bx - ax, by - ay
    ab2 = abx * abx + aby * aby
    if ab2 < 1e-12:
        return (xx - ax) ** 2 + (yy - ay) ** 2 <= r * r
    t = np.clip(((xx - ax) * abx + (yy - ay) * aby) / ab2, 0.0, 1.0)
    dx = xx - (ax + t * abx)
    dy = yy - (ay + t * aby)
    return dx * dx + dy * dy <= r * r


def render_walker_frame(
    params: SyntheticWalkerParams, phase: float, center_x: float
) -> tuple[np.ndarray, bool]:
    """Render one frame; returns the 64x44 mask and a detectability flag.

    The walker is drawn on a wider canvas first; a frame counts as
    detectable only when no foreground falls outside the 44-wide crop.
    """
    s = np.asarray(params.shape, dtype=np.float64)
    if s.shape != (SHAPE_DIM,):
        raise DataError(f"shape vector must have {SHAPE_DIM} entries")
    (torso_w, torso_h, leg_r, leg_len, arm_r, arm_len,
     head_r, shoulder_w, hip_w, stride) = s
    fs = math.cos(math.radians(params.view))  # horizontal foreshortening

    wide_w = FRAME_WIDTH + 2 * _WIDE_PAD
    yy, xx = np.mgrid[0:FRAME_HEIGHT, 0:wide_w]
    xx = xx.astype(np.float64)
    yy = yy.astype(np.float64)
    cx = center_x + _WIDE_PAD

    hip_y = _GROUND_Y - leg_len
    torso_cy = hip_y - torso_h
    torso_top = hip_y - 2.0 * torso_h
    shoulder_y = torso_top + 2.0
    head_cy = torso_top - head_r + _HEAD_OVERLAP

    leg_ang = stride * math.sin(2.0 * math.pi * phase)
    arm_ang = _ARM_SWING_FRACTION * stride * math.sin(2.0 * math.pi * phase + math.pi)

    torso_rx = torso_w * params.coat_scale
    hip_rx = hip_w * params.coat_scale

    mask = _ellipse(xx, yy, cx, torso_cy, torso_rx, torso_h)
    mask |= _ellipse(xx, yy, cx, shoulder_y, shoulder_w, 2.5)
    mask |= _ellipse(xx, yy, cx, hip_y, hip_rx, 3.0)
    mask |= _ellipse(xx, yy, cx, head_cy, head_r, head_r)
    for sign in (1.0, -1.0):
        ldx = fs * math.sin(sign * leg_ang) * leg_len
        ldy = math.cos(sign * leg_ang) * leg_len
        mask |= _capsule(xx, yy, cx, hip_y, cx + ldx, hip_y + ldy, leg_r)
        adx = fs * math.sin(sign * arm_ang) * arm_len
        ady = math.cos(sign * arm_ang) * arm_len
        ax = cx + sign * shoulder_w
        mask |= _capsule(xx, yy, ax, shoulder_y, ax + adx, shoulder_y + ady, arm_r)
    if params.bag:
        bag_cx = cx + torso_rx + 2.0
        mask |= _ellipse(xx, yy, bag_cx, torso_cy + torso_h * 0.5,
                         _BAG_SEMI_X, _BAG_SEMI_Y)

    crop = mask[:, _WIDE_PAD : _WIDE_PAD + FRAME_WIDTH]
    spill = mask[:, :_WIDE_PAD].any() or mask[:, _WIDE_PAD + FRAME_WIDTH :].any()
    return crop.astype(np.uint8), not spill


def generate_synthetic_walker(
    params: SyntheticWalkerParams, m: int, seed: int
) -> tuple[SilhouetteSequence, np.ndarray]:
    """Render an m-frame walking sequence.

    Returns the sequence plus a copy of the true 10-dim shape vector.
    The silhouette depends on the view; the returned shape does not.
    With edge_slack > 0 a few leading/trailing frames are pushed past
    the frame edge and flagged undetectable.
    """
    if m < 1:
        raise DataError("sequence length must be >= 1")
    s = np.asarray(params.shape, dtype=np.float64)
    if np.any(s < SHAPE_LOW) or np.any(s > SHAPE_HIGH):
        raise DataError("shape vector outside the supported bounds")
    rng = np.random.default_rng(seed)
    phase0 = float(rng.uniform(0.0, 1.0))
    lead_in = lead_out = 0
    if params.edge_slack > 0:
        cap = max(1, m // 3)
        lead_in = int(rng.integers(1, cap + 1))
        lead_out = int(rng.integers(1, cap + 1))
    frames = np.zeros((m, FRAME_HEIGHT, FRAME_WIDTH), dtype=np.uint8)
    flags = np.zeros(m, dtype=bool)
    for t in range(m):
        offset = 0.0
        if lead_in and t < lead_in:
            offset = -params.edge_slack * (lead_in - t)
        elif lead_out and t >= m - lead_out:
            offset = params.edge_slack * (t - (m - lead_out) + 1)
        phase = phase0 + t * params.gait_phase_rate
        frames[t], flags[t] = render_walker_frame(params, phase, _CENTER_X + offset)
    return SilhouetteSequence(frames=frames, detectable=flags, params=params), s.copy()


def sidecar_line(
    subject: str, variant: str, seq_idx: int, view: int,
    beta: np.ndarray, mask_flags: np.ndarray,
) -> str:
    """Format one body-prior sidecar record (tab separated)."""
    beta = np.asarray(beta, dtype=np.float64)
    fields = [subject, variant, str(seq_idx), str(view)]
    fields.extend(repr(float(b)) for b in beta)
    fields.append("".join("1" if f else "0" for f in np.asarray(mask_flags)))
    return "\t".join(fields)


def read_sidecar(path: str | Path) -> dict[tuple, tuple[np.ndarray, np.ndarray]]:
    """Parse a prior sidecar into {(subject, variant, seq, view): (beta, mask)}."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"sidecar {path} does not exist")
    records: dict[tuple, tuple[np.ndarray, np.ndarray]] = {}
    for ln, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 4 + SHAPE_DIM + 1:
            raise DataError(f"{path}:{ln}: expected {5 + SHAPE_DIM} fields")
        subject, variant, seq_s, view_s = parts[:4]
        try:
            beta = np.array([float(x) for x in parts[4 : 4 + SHAPE_DIM]])
            key = (subject, variant.lower(), int(seq_s), int(view_s))
        except ValueError as exc:
            raise DataError(f"{path}:{ln}: {exc}") from exc
        flag_str = parts[-1]
        if not flag_str or set(flag_str) - {"0", "1"}:
            raise DataError(f"{path}:{ln}: mask must be a 0/1 string")
        mask = np.array([c == "1" for c in flag_str])
        records[key] = (beta, mask)
    return records


def write_synthetic_dataset(
    out_dir: str | Path,
    n_subjects: int,
    views: Sequence[int],
    frames: int,
    seed: int,
    variants: dict[str, int] | None = None,
    edge_slack_probability: float = 0.25,
    force: bool = False,
) -> dict:
    """Emit a synthetic dataset tree plus its body-prior sidecar.

    Layout matches load_dataset; the sidecar (``priors.tsv`` at the root)
    stores the true shape vector and per-frame detectability string of
    every sequence. Re-running with the same arguments reproduces the
    tree byte for byte. Returns a manifest dict (also written as
    ``manifest.json``).
    """
    out_dir = Path(out_dir)
    if variants is None:
        variants = {"nm": 6, "bg": 2, "cl": 2}
    if n_subjects < 1 or frames < 1 or not views:
        raise DataError("need at least one subject, one frame and one view")
    if out_dir.exists() and any(out_dir.iterdir()):
        if not force:
            raise DataError(f"{out_dir} is not empty (use force to overwrite)")
    out_dir.mkdir(parents=True, exist_ok=True)
    views = sorted(int(v) for v in views)
    variant_ids = {name: i for i, name in enumerate(sorted(variants))}

    sidecar_rows: list[str] = []
    n_sequences = 0
    for i in range(n_subjects):
        subject = f"{i + 1:03d}"
        subj_rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        shape = subj_rng.uniform(SHAPE_LOW, SHAPE_HIGH)
        phase_rate = float(subj_rng.uniform(0.08, 0.16))
        for variant in sorted(variants):
            for seq_idx in range(1, variants[variant] + 1):
                for view in views:
                    ss = np.random.SeedSequence(
                        [seed, i, variant_ids[variant], seq_idx, view]
                    )
                    seq_rng = np.random.default_rng(ss)
                    slack = 0.0
                    if seq_rng.uniform() < edge_slack_probability:
                        slack = float(seq_rng.uniform(6.0, 12.0))
                    params = SyntheticWalkerParams(
                        shape=shape,
                        view=float(view),
                        gait_phase_rate=phase_rate,
                        bag=variant == "bg",
                        coat_scale=1.3 if variant == "cl" else 1.0,
                        edge_slack=slack,
                    )
                    seq_seed = int(ss.generate_state(1)[0])
                    seq, beta = generate_synthetic_walker(params, frames, seq_seed)
                    seq_dir = (
                        out_dir / subject / f"{variant}-{seq_idx:02d}" / f"{view:03d}"
                    )
                    seq_dir.mkdir(parents=True, exist_ok=True)
                    for t in range(frames):
                        img = Image.fromarray(seq.frames[t] * np.uint8(255))
                        img.save(seq_dir / f"{t + 1:04d}.png")
                    sidecar_rows.append(
                        sidecar_line(subject, variant, seq_idx, view,
                                     beta, seq.detectable)
                    )
                    n_sequences += 1
    (out_dir / "priors.tsv").write_text("\n".join(sidecar_rows) + "\n")
    manifest = {
        "frames": frames,
        "n_sequences": n_sequences,
        "n_subjects": n_subjects,
        "seed": seed,
        "variants": {k: variants[k] for k in sorted(variants)},
        "views": views,
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )
    return manifest


def frames_to_tensor_input(frames: np.ndarray) -> np.ndarray:
    """uint8 {0,1} frame stack to float32 in {0.0, 1.0}."""
    return frames.astype(np.float32)
