"""Cross-view rank-1 evaluation.

Each probe sequence is matched against the gallery of every camera view
except its own (identical-view exclusion); a cell of the report is the
accuracy for one (variant, probe view), averaged over gallery views.
Distances are Euclidean in float64 over the flattened embedding; ties
resolve to the gallery entry listed first.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np
import torch

from . import data as _data
from .data import SequenceEntry


class EvalError(Exception):
    """Raised for unusable gallery/probe configurations."""


@dataclasses.dataclass
class EmbeddingRecord:
    subject: str
    variant: str
    view: int
    role: str
    embedding: np.ndarray  # flattened, float64


@dataclasses.dataclass
class EvalReport:
    """Rank-1 percentages per (variant, probe view) plus raw detail."""

    accuracy: dict  # {variant: {probe_view: pct}}
    counts: dict  # {variant: {probe_view: n_probes}}
    per_gallery_view: dict  # {variant: {probe_view: {gallery_view: pct}}}
    gallery_views: tuple

    def variants(self) -> list[str]:
        return sorted(self.accuracy)

    def probe_views(self, variant: str) -> list[int]:
        return sorted(self.accuracy[variant])


def extract_embeddings(
    model,
    entries: list[SequenceEntry],
    loader=None,
) -> list[EmbeddingRecord]:
    """Embed full sequences (all frames, order preserved)."""
    if loader is None:
        loader = _data.SequenceCache()
    model.eval()
    out = []
    with torch.no_grad():
        for entry in entries:
            seq = loader(entry)
            frames = torch.from_numpy(seq.astype(np.float32)).unsqueeze(0)
            emb = model(frames)[0]
            out.append(
                EmbeddingRecord(
                    subject=entry.subject,
                    variant=entry.variant.upper(),
                    view=entry.view,
                    role=entry.role or "",
                    embedding=emb.reshape(-1).numpy().astype(np.float64),
                )
            )
    return out


def rank1(
    gallery: list[EmbeddingRecord], probe: list[EmbeddingRecord]
) -> EvalReport:
    """Rank-1 accuracy table under identical-view exclusion."""
    if not gallery or not probe:
        raise EvalError("gallery and probe sets must both be non-empty")
    by_view: dict[int, tuple[np.ndarray, list[str]]] = {}
    for view in sorted({g.view for g in gallery}):
        subset = [g for g in gallery if g.view == view]
        mat = np.stack([g.embedding for g in subset]).astype(np.float64)
        by_view[view] = (mat, [g.subject for g in subset])

    hits: dict = {}
    attempts: dict = {}
    for p in probe:
        usable = [v for v in by_view if v != p.view]
        if not usable:
            raise EvalError(
                f"probe view {p.view} has no differing gallery view to match"
            )
        emb = p.embedding.astype(np.float64)
        for gv in usable:
            mat, subjects = by_view[gv]
            dists = np.linalg.norm(mat - emb[None, :], axis=1)
            j = int(np.argmin(dists))  # ties: first (lowest) gallery index
            cell = (p.variant, p.view, gv)
            attempts[cell] = attempts.get(cell, 0) + 1
            hits[cell] = hits.get(cell, 0) + (subjects[j] == p.subject)

    accuracy: dict = {}
    counts: dict = {}
    detail: dict = {}
    for (variant, pv, gv), n in attempts.items():
        pct = 100.0 * hits[(variant, pv, gv)] / n
        detail.setdefault(variant, {}).setdefault(pv, {})[gv] = pct
    for variant, pv_map in detail.items():
        accuracy[variant] = {}
        counts[variant] = {}
        for pv, gv_map in pv_map.items():
            accuracy[variant][pv] = float(np.mean(sorted(gv_map.values())))
            counts[variant][pv] = attempts[(variant, pv, next(iter(gv_map)))]
    return EvalReport(
        accuracy=accuracy,
        counts=counts,
        per_gallery_view=detail,
        gallery_views=tuple(sorted(by_view)),
    )


def evaluate_split(model, index, loader=None) -> EvalReport:
    """Extract gallery/probe embeddings from an index and run rank1."""
    gallery = extract_embeddings(model, index.gallery_entries(), loader)
    probe = extract_embeddings(model, index.probe_entries(), loader)
    return rank1(gallery, probe)


def summarize(report: EvalReport) -> dict:
    """Per-variant mean and population std over probe views."""
    out = {}
    for variant in report.variants():
        vals = np.array(
            [report.accuracy[variant][pv] for pv in report.probe_views(variant)],
            dtype=np.float64,
        )
        out[variant] = {
            "mean": float(vals.mean()),
            "std": float(vals.std()),  # population (ddof=0)
            "n_views": int(vals.size),
        }
    return out


def compare_summaries(base: dict, other: dict) -> dict:
    """Per-variant mean deltas (other - base) for variants both share."""
    return {
        v: other[v]["mean"] - base[v]["mean"] for v in sorted(set(base) & set(other))
    }


def novel_view_report(rows: list[dict]) -> tuple[str, dict]:
    """Zero-shot table: one row per training-view set.

    Each row dict carries ``label``, ``train_views`` (tuple or None) and
    ``accs`` ({test_view: pct}). Returns the formatted table and
    {label: mean accuracy}.
    """
    if not rows:
        raise EvalError("novel-view report needs at least one row")
    views = sorted({v for r in rows for v in r["accs"]})
    lines = []
    head = f"{'train views':>18} | " + " ".join(f"{v:>6}" for v in views)
    lines.append(head + " |   mean")
    lines.append("-" * len(lines[0]))
    means = {}
    for r in rows:
        tv = r["train_views"]
        label = "all" if tv is None else ",".join(str(v) for v in tv)
        cells = " ".join(
            f"{r['accs'][v]:6.1f}" if v in r["accs"] else "     -" for v in views
        )
        mean = float(np.mean([a for a in r["accs"].values()]))
        means[r["label"]] = mean
        lines.append(f"{label:>18} | {cells} | {mean:6.1f}")
    return "\n".join(lines) + "\n", means


def format_report_table(report: EvalReport) -> str:
    """Human-readable accuracy table, one row per variant."""
    views = sorted({pv for v in report.variants() for pv in report.accuracy[v]})
    header = "variant | " + " ".join(f"{v:>6}" for v in views) + " |   mean    std"
    lines = [header, "-" * len(header)]
    summary = summarize(report)
    for variant in report.variants():
        acc = report.accuracy[variant]
        cells = " ".join(
            f"{acc[v]:6.1f}" if v in acc else "     -" for v in views
        )
        s = summary[variant]
        lines.append(
            f"{variant:>7} | {cells} | {s['mean']:6.1f} {s['std']:6.2f}"
        )
    return "\n".join(lines) + "\n"


def write_report_csv(report: EvalReport, path: str | Path) -> None:
    lines = ["variant,probe_view,accuracy,n_probes"]
    for variant in report.variants():
        for pv in report.probe_views(variant):
            lines.append(
                f"{variant},{pv},{report.accuracy[variant][pv]!r},"
                f"{report.counts[variant][pv]}"
            )
    Path(path).write_text("\n".join(lines) + "\n")


def read_report_csv(path: str | Path) -> EvalReport:
    """Load a report written by write_report_csv (detail cells are lost)."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != "variant,probe_view,accuracy,n_probes":
        raise EvalError(f"{path} is not a rank-1 report csv")
    accuracy: dict = {}
    counts: dict = {}
    for line in lines[1:]:
        if not line.strip():
            continue
        variant, pv, acc, n = line.split(",")
        accuracy.setdefault(variant, {})[int(pv)] = float(acc)
        counts.setdefault(variant, {})[int(pv)] = int(n)
    if not accuracy:
        raise EvalError(f"{path} contains no accuracy rows")
    return EvalReport(
        accuracy=accuracy, counts=counts, per_gallery_view={}, gallery_views=()
    )


def write_summary_csv(summary: dict, path: str | Path) -> None:
    lines = ["variant,mean,std,n_views"]
    for variant in sorted(summary):
        s = summary[variant]
        lines.append(f"{variant},{s['mean']!r},{s['std']!r},{s['n_views']}")
    Path(path).write_text("\n".join(lines) + "\n")


def dump_embeddings(
    records: list[EmbeddingRecord], path: str | Path, decimals: int = 6
) -> None:
    """Write embeddings as text: metadata fields then fixed-decimal values."""
    lines = []
    for r in records:
        vals = " ".join(f"{x:.{decimals}f}" for x in r.embedding)
        lines.append(f"{r.subject}\t{r.variant}\t{r.view}\t{r.role}\t{vals}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_embeddings(path: str | Path) -> list[EmbeddingRecord]:
    records = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        subject, variant, view, role, vals = line.split("\t")
        records.append(
            EmbeddingRecord(
                subject=subject,
                variant=variant,
                view=int(view),
                role=role,
                embedding=np.array([float(x) for x in vals.split(" ")]),
            )
        )
    return records
