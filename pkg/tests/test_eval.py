import numpy as np
import pytest

from gaitshape import data as D
from gaitshape import evaluation as E
from gaitshape.encoders import GaitShapeModel, ModelConfig, ShiftConfig


def rec(subject, view, emb, variant="NM", role=""):
    return E.EmbeddingRecord(
        subject=subject,
        variant=variant,
        view=view,
        role=role,
        embedding=np.asarray(emb, dtype=np.float64),
    )


def oracle_rank1(gallery, probe):
    """Brute-force nested-loop reference for the rank-1 table."""
    views = sorted({g.view for g in gallery})
    cells = {}
    for p in probe:
        for gv in views:
            if gv == p.view:
                continue
            best_d, best_subject = None, None
            for g in gallery:
                if g.view != gv:
                    continue
                d = np.linalg.norm(g.embedding - p.embedding)
                if best_d is None or d < best_d:  # strict: first index wins ties
                    best_d, best_subject = d, g.subject
            h, n = cells.get((p.variant, p.view, gv), (0, 0))
            cells[(p.variant, p.view, gv)] = (h + (best_subject == p.subject), n + 1)
    detail = {}
    for (variant, pv, gv), (h, n) in cells.items():
        detail.setdefault(variant, {}).setdefault(pv, {})[gv] = 100.0 * h / n
    acc = {
        variant: {
            pv: float(np.mean(sorted(gvs.values()))) for pv, gvs in pvs.items()
        }
        for variant, pvs in detail.items()
    }
    return acc, detail


def random_records(rng, dim=3):
    subjects = [f"s{i}" for i in range(int(rng.integers(2, 7)))]
    views = sorted(rng.choice([0, 36, 72, 90, 126, 162], size=3, replace=False))
    variants = ["NM", "BG"][: int(rng.integers(1, 3))]
    gallery = [
        rec(s, int(v), rng.normal(size=dim)) for s in subjects for v in views
    ]
    probe = [
        rec(s, int(v), rng.normal(size=dim), variant=rng.choice(variants))
        for s in subjects
        for v in views
        for _ in range(int(rng.integers(1, 3)))
    ]
    return gallery, probe


# ------------------------------------------------------------------ rank1


def test_rank1_hand_case_per_gallery_view_average():
    # probe s_a@180 hits the view-0 gallery but misses at view 90 -> 50%
    gallery = [
        rec("a", 0, [0.0]),
        rec("b", 0, [1.0]),
        rec("a", 90, [1.0]),
        rec("b", 90, [0.0]),
    ]
    probe = [rec("a", 180, [0.1])]
    report = E.rank1(gallery, probe)
    assert report.per_gallery_view["NM"][180] == {0: 100.0, 90: 0.0}
    assert report.accuracy["NM"][180] == 50.0
    assert report.counts["NM"][180] == 1
    assert report.gallery_views == (0, 90)


def test_rank1_excludes_identical_view():
    # the only exact match sits in the probe's own view and must be ignored
    gallery = [
        rec("a", 0, [0.0]),
        rec("a", 90, [5.0]),
        rec("b", 90, [0.0]),
    ]
    probe = [rec("a", 0, [0.0])]
    report = E.rank1(gallery, probe)
    assert report.accuracy["NM"][0] == 0.0


def test_rank1_tie_breaks_to_first_gallery_entry():
    probe = [rec("a", 90, [0.0])]
    report = E.rank1([rec("a", 0, [0.0]), rec("b", 0, [0.0])], probe)
    assert report.accuracy["NM"][90] == 100.0
    report = E.rank1([rec("b", 0, [0.0]), rec("a", 0, [0.0])], probe)
    assert report.accuracy["NM"][90] == 0.0


def test_rank1_separates_variants():
    gallery = [rec("a", 0, [0.0]), rec("b", 0, [1.0]), rec("a", 90, [0.0])]
    probe = [
        rec("a", 90, [0.0], variant="NM"),
        rec("a", 90, [0.9], variant="BG"),
        rec("b", 90, [0.9], variant="BG"),
    ]
    report = E.rank1(gallery, probe)
    assert report.accuracy["NM"][90] == 100.0
    assert report.accuracy["BG"][90] == 50.0
    assert report.counts["BG"][90] == 2


def test_rank1_error_cases():
    g = [rec("a", 0, [0.0])]
    with pytest.raises(E.EvalError):
        E.rank1([], [rec("a", 0, [0.0])])
    with pytest.raises(E.EvalError):
        E.rank1(g, [])
    with pytest.raises(E.EvalError, match="no differing gallery view"):
        E.rank1(g, [rec("a", 0, [0.0])])


def test_rank1_matches_oracle_on_random_configs(rng):
    for _ in range(10):
        gallery, probe = random_records(rng)
        report = E.rank1(gallery, probe)
        acc, detail = oracle_rank1(gallery, probe)
        assert report.accuracy == acc
        assert report.per_gallery_view == detail


def test_rank1_ignores_same_view_gallery_perturbation(rng):
    # rewriting the gallery of view v cannot touch cells whose probes sit
    # at view v (those probes never match against their own view)
    gallery, probe = random_records(rng)
    report = E.rank1(gallery, probe)
    for view in {p.view for p in probe}:
        perturbed_gallery = [
            rec(g.subject, g.view, rng.normal(size=g.embedding.shape))
            if g.view == view
            else g
            for g in gallery
        ]
        perturbed = E.rank1(perturbed_gallery, probe)
        for variant in report.variants():
            if view in report.accuracy[variant]:
                assert (
                    perturbed.per_gallery_view[variant][view]
                    == report.per_gallery_view[variant][view]
                )


# ------------------------------------------------------- summaries / tables


def report_from(accuracy, counts=None):
    counts = counts or {
        v: {pv: 1 for pv in pvs} for v, pvs in accuracy.items()
    }
    return E.EvalReport(
        accuracy=accuracy, counts=counts, per_gallery_view={}, gallery_views=()
    )


def test_summarize_population_std():
    report = report_from({"NM": {0: 90.0, 90: 100.0}})
    s = E.summarize(report)
    assert s["NM"] == {"mean": 95.0, "std": 5.0, "n_views": 2}


def test_compare_summaries_reports_shared_variants_only():
    base = {"NM": {"mean": 90.0}, "BG": {"mean": 80.0}}
    other = {"NM": {"mean": 92.5}}
    assert E.compare_summaries(base, other) == {"NM": 2.5}


def test_novel_view_report_table_and_means():
    rows = [
        {"label": "narrow", "train_views": (0, 36), "accs": {90: 80.0, 126: 60.0}},
        {"label": "all", "train_views": None, "accs": {90: 90.0, 126: 70.0}},
    ]
    table, means = E.novel_view_report(rows)
    assert means == {"narrow": 70.0, "all": 80.0}
    assert "0,36" in table and "all" in table
    with pytest.raises(E.EvalError):
        E.novel_view_report([])


def test_format_report_table_marks_missing_views():
    report = report_from({"NM": {0: 100.0}, "BG": {90: 50.0}})
    table = E.format_report_table(report)
    assert "NM" in table and "BG" in table and "-" in table
    assert "mean" in table.splitlines()[0]


# --------------------------------------------------------------- file io


def test_report_csv_roundtrip(tmp_path):
    report = report_from(
        {"NM": {0: 97.3, 18: 100.0 / 3.0}, "CL": {0: 70.0}},
        counts={"NM": {0: 12, 18: 9}, "CL": {0: 4}},
    )
    path = tmp_path / "report.csv"
    E.write_report_csv(report, path)
    back = E.read_report_csv(path)
    assert back.accuracy == report.accuracy  # repr() round-trips floats
    assert back.counts == report.counts


def test_read_report_csv_rejects_other_files(tmp_path):
    bad = tmp_path / "junk.csv"
    bad.write_text("a,b\n1,2\n")
    with pytest.raises(E.EvalError, match="not a rank-1 report"):
        E.read_report_csv(bad)
    empty = tmp_path / "empty.csv"
    empty.write_text("variant,probe_view,accuracy,n_probes\n")
    with pytest.raises(E.EvalError, match="no accuracy rows"):
        E.read_report_csv(empty)


def test_embedding_dump_roundtrip(tmp_path):
    records = [
        rec("s1", 0, [0.123456789, -2.5], role="gallery"),
        rec("s2", 90, [1e-7, 3.0], variant="BG"),
    ]
    path = tmp_path / "emb.tsv"
    E.dump_embeddings(records, path, decimals=9)
    back = E.load_embeddings(path)
    assert [(r.subject, r.variant, r.view, r.role) for r in back] == [
        ("s1", "NM", 0, "gallery"),
        ("s2", "BG", 90, ""),
    ]
    for a, b in zip(records, back):
        np.testing.assert_allclose(a.embedding, b.embedding, atol=1e-8)


# ------------------------------------------------------- model extraction


def tiny_model():
    cfg = ModelConfig(
        silhouette_channels=(8, 16, 32),
        body_channels=(8, 8, 16, 16, 24, 32),
        embedding_dim=16,
        shift=ShiftConfig(),
        seed=3,
    )
    return GaitShapeModel(cfg)


def test_extract_embeddings_from_dataset(tiny_tree):
    root, _ = tiny_tree
    index = D.load_dataset(root)
    entries = index.entries[:4]
    records = E.extract_embeddings(tiny_model(), entries)
    assert len(records) == 4
    for entry, r in zip(entries, records):
        assert r.subject == entry.subject
        assert r.variant == entry.variant.upper()
        assert r.embedding.shape == (16 * 16,)
        assert r.embedding.dtype == np.float64
    again = E.extract_embeddings(tiny_model(), entries)
    for a, b in zip(records, again):
        np.testing.assert_array_equal(a.embedding, b.embedding)


def test_evaluate_split_produces_report(tiny_tree):
    root, _ = tiny_tree
    index = D.load_dataset(root)
    D.split_subjects(index, "first:4")
    D.assign_roles(index)
    report = E.evaluate_split(tiny_model(), index)
    assert set(report.variants()) == {"NM", "BG", "CL"}
    for variant in report.variants():
        for pv in report.probe_views(variant):
            assert 0.0 <= report.accuracy[variant][pv] <= 100.0
