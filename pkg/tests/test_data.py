import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gaitshape import data as D


# ------------------------------------------------------------ frames


def test_binarize_threshold_boundary():
    img = np.array([[0, 127, 128, 255]], dtype=np.uint8)
    np.testing.assert_array_equal(D.binarize(img), [[0, 0, 1, 1]])


def test_normalize_frame_fills_height_and_centers():
    mask = np.zeros((100, 80), dtype=np.uint8)
    mask[20:60, 10:30] = 1  # 40 tall, 20 wide blob
    out = D.normalize_frame(mask)
    assert out.shape == (64, 44)
    rows = np.flatnonzero(out.any(axis=1))
    assert rows[0] == 0 and rows[-1] == 63
    cols = out.sum(axis=0).astype(float)
    centroid = (cols * np.arange(44)).sum() / cols.sum()
    assert abs(centroid - 22.0) < 1.0


def test_normalize_frame_empty_returns_none():
    assert D.normalize_frame(np.zeros((50, 40), dtype=np.uint8)) is None


def test_normalize_frame_wide_body_is_clipped_not_crashed():
    mask = np.ones((10, 200), dtype=np.uint8)  # extreme aspect ratio
    out = D.normalize_frame(mask)
    assert out.shape == (64, 44)
    assert out.any()


# ------------------------------------------------------------ sampling


def test_sample_indices_full_keeps_everything():
    np.testing.assert_array_equal(
        D.sample_frame_indices(5, 3, mode="full"), np.arange(5)
    )


def test_sample_indices_cyclic_wrap_matches_convention():
    idx = D.sample_frame_indices(4, 6, mode="ordered_window")
    np.testing.assert_array_equal(idx, [0, 1, 2, 3, 0, 1])


def test_sample_indices_window_is_contiguous(rng):
    for _ in range(50):
        idx = D.sample_frame_indices(30, 10, rng=rng)
        assert idx.shape == (10,)
        np.testing.assert_array_equal(np.diff(idx), 1)
        assert 0 <= idx[0] and idx[-1] < 30


@given(m=st.integers(1, 40), count=st.integers(1, 40), seed=st.integers(0, 2**16))
@settings(max_examples=60, deadline=None)
def test_sample_indices_property(m, count, seed):
    rng = np.random.default_rng(seed)
    idx = D.sample_frame_indices(m, count, rng=rng)
    assert idx.shape == (count,)
    assert idx.min() >= 0 and idx.max() < m
    # order preserved modulo a single wrap point
    deltas = np.diff(idx) % m
    assert np.all(deltas == 1 % m)


def test_sample_indices_bad_args():
    with pytest.raises(D.DataError):
        D.sample_frame_indices(0, 3)
    with pytest.raises(D.DataError):
        D.sample_frame_indices(5, 0)
    with pytest.raises(D.DataError):
        D.sample_frame_indices(5, 3, mode="nope")


# ------------------------------------------------------------ index / splits


def _index_with_subjects(labels):
    entries = [
        D.SequenceEntry(subject=s, variant="nm", seq_idx=1, view=0) for s in labels
    ]
    return D.DatasetIndex(entries=entries)


def test_split_casiab_74_takes_first_74():
    labels = [f"{i:03d}" for i in range(1, 125)]  # 124 subjects
    idx = _index_with_subjects(labels)
    D.split_subjects(idx, "casiab_74")
    assert len(idx.train_subjects()) == 74
    assert len(idx.test_subjects()) == 50
    assert idx.train_subjects()[-1] == "074"


def test_split_casiab_74_too_few_subjects():
    with pytest.raises(D.DataError):
        D.split_subjects(_index_with_subjects(["a", "b"]), "casiab_74")


def test_split_oumvlp_odd_cardinality():
    labels = [str(i) for i in range(1, 10308)]  # 10307 subjects
    idx = _index_with_subjects(labels)
    D.split_subjects(idx, "oumvlp_odd")
    assert len(idx.train_subjects()) == 5153
    assert len(idx.test_subjects()) == 5154


def test_split_explicit_and_errors():
    idx = _index_with_subjects(["a", "b", "c"])
    D.split_subjects(idx, ["a", "c"])
    assert idx.train_subjects() == ["a", "c"]
    assert idx.test_subjects() == ["b"]
    with pytest.raises(D.DataError):
        D.split_subjects(idx, ["a", "zzz"])


def test_split_all_train_warns():
    idx = _index_with_subjects(["a", "b"])
    D.split_subjects(idx, ["a", "b"])
    assert any("empty test set" in w for w in idx.warnings)


def test_split_partition_covers_everything():
    labels = [f"s{i}" for i in range(30)]
    idx = _index_with_subjects(labels)
    D.split_subjects(idx, "first:11")
    train, test = set(idx.train_subjects()), set(idx.test_subjects())
    assert not train & test
    assert train | test == set(labels)


# ------------------------------------------------------------ roles


def _casia_like_index():
    entries = []
    for subject in ("001", "002"):
        for variant, n in (("nm", 6), ("bg", 2), ("cl", 2)):
            for s in range(1, n + 1):
                for view in (0, 90):
                    entries.append(
                        D.SequenceEntry(
                            subject=subject, variant=variant, seq_idx=s, view=view
                        )
                    )
    return D.DatasetIndex(entries=entries)


def test_assign_roles_casia_convention():
    idx = _casia_like_index()
    D.split_subjects(idx, ["001"])
    D.assign_roles(idx)
    galleries = idx.gallery_entries()
    probes = idx.probe_entries()
    assert all(e.subject == "002" for e in galleries + probes)
    assert {(e.variant, e.seq_idx) for e in galleries} == {
        ("nm", 1), ("nm", 2), ("nm", 3), ("nm", 4)
    }
    assert {(e.variant, e.seq_idx) for e in probes} == {
        ("nm", 5), ("nm", 6), ("bg", 1), ("bg", 2), ("cl", 1), ("cl", 2)
    }


def test_assign_roles_requires_split():
    with pytest.raises(D.DataError):
        D.assign_roles(_casia_like_index())


def test_assign_roles_oumvlp_first_sequence():
    entries = []
    for s in range(1, 3):
        for view in (0, 90):
            entries.append(
                D.SequenceEntry(subject="007", variant="nm", seq_idx=s, view=view)
            )
    idx = D.DatasetIndex(entries=entries, layout="oumvlp")
    idx.entries.append(
        D.SequenceEntry(subject="001", variant="nm", seq_idx=1, view=0)
    )
    D.split_subjects(idx, ["001"])
    D.assign_roles(idx)
    per_view = {}
    for e in idx.gallery_entries():
        per_view.setdefault(e.view, []).append(e.seq_idx)
    assert per_view == {0: [1], 90: [1]}
    assert all(e.seq_idx == 2 for e in idx.probe_entries())


def test_assign_roles_drops_subject_without_gallery():
    entries = [
        D.SequenceEntry(subject="009", variant="bg", seq_idx=1, view=0),
        D.SequenceEntry(subject="008", variant="nm", seq_idx=1, view=0),
    ]
    idx = D.DatasetIndex(entries=entries)
    D.split_subjects(idx, [])
    D.assign_roles(idx)
    assert all(e.role is None for e in idx.entries if e.subject == "009")
    assert any("no gallery" in w for w in idx.warnings)


# ------------------------------------------------------------ view split


def test_view_split_filters_accessors():
    idx = _casia_like_index()
    D.split_subjects(idx, ["001"])
    D.assign_roles(idx)
    D.make_view_split(idx, train_views=[0], test_views=[90])
    assert all(e.view == 0 for e in idx.train_entries())
    assert all(e.view == 90 for e in idx.gallery_entries() + idx.probe_entries())


def test_view_split_validation():
    idx = _casia_like_index()
    with pytest.raises(D.DataError):
        D.make_view_split(idx, [0], [0, 90])  # overlap
    with pytest.raises(D.DataError):
        D.make_view_split(idx, [0], [45])  # unknown view
    with pytest.raises(D.DataError):
        D.make_view_split(idx, [], [90])


# ------------------------------------------------------------ pk batches


def _train_index(n_subjects=6, seqs=4):
    entries = []
    for i in range(n_subjects):
        for s in range(1, seqs + 1):
            entries.append(
                D.SequenceEntry(
                    subject=f"{i:02d}", variant="nm", seq_idx=s, view=0, split="train"
                )
            )
    return D.DatasetIndex(entries=entries)


def test_pk_batch_structure():
    idx = _train_index(6, 4)
    batch = D.make_pk_batch(idx, p=4, k=3, seed=5)
    assert len(batch) == 12
    by_subject = {}
    for e in batch:
        by_subject.setdefault(e.subject, []).append(e)
    assert len(by_subject) == 4
    for group in by_subject.values():
        assert len(group) == 3
        assert len({e.key for e in group}) == 3  # no replacement needed


def test_pk_batch_replacement_when_short():
    idx = _train_index(3, 1)
    batch = D.make_pk_batch(idx, p=2, k=4, seed=0)
    by_subject = {}
    for e in batch:
        by_subject.setdefault(e.subject, []).append(e)
    assert all(len(g) == 4 for g in by_subject.values())


def test_pk_batch_deterministic_and_errors():
    idx = _train_index(6, 4)
    a = [e.key for e in D.make_pk_batch(idx, 3, 2, seed=9)]
    b = [e.key for e in D.make_pk_batch(idx, 3, 2, seed=9)]
    assert a == b
    assert a != [e.key for e in D.make_pk_batch(idx, 3, 2, seed=10)]
    with pytest.raises(D.DataError):
        D.make_pk_batch(idx, p=7, k=1, seed=0)


# ------------------------------------------------------------ walker


def _mid_shape():
    return (D.SHAPE_LOW + D.SHAPE_HIGH) / 2.0


def test_walker_deterministic_and_shape_passthrough():
    params = D.SyntheticWalkerParams(shape=_mid_shape(), view=30.0)
    seq_a, beta_a = D.generate_synthetic_walker(params, m=8, seed=3)
    seq_b, beta_b = D.generate_synthetic_walker(params, m=8, seed=3)
    np.testing.assert_array_equal(seq_a.frames, seq_b.frames)
    np.testing.assert_array_equal(beta_a, _mid_shape())
    np.testing.assert_array_equal(beta_a, beta_b)
    assert seq_a.frames.shape == (8, 64, 44)
    assert seq_a.frames.max() == 1


def test_walker_views_differ_but_shape_is_view_free():
    p0 = D.SyntheticWalkerParams(shape=_mid_shape(), view=0.0)
    p90 = D.SyntheticWalkerParams(shape=_mid_shape(), view=90.0)
    seq0, b0 = D.generate_synthetic_walker(p0, m=10, seed=4)
    seq90, b90 = D.generate_synthetic_walker(p90, m=10, seed=4)
    assert (seq0.frames != seq90.frames).any()
    np.testing.assert_array_equal(b0, b90)


def test_walker_area_monotone_in_each_shape_dim():
    """At view 0 every shape dimension grows the mean silhouette area."""
    for d in range(D.SHAPE_DIM):
        areas = []
        for val in np.linspace(D.SHAPE_LOW[d], D.SHAPE_HIGH[d], 4):
            shape = _mid_shape()
            shape[d] = val
            seq, _ = D.generate_synthetic_walker(
                D.SyntheticWalkerParams(shape=shape, view=0.0), m=8, seed=12
            )
            areas.append(seq.frames.sum() / 8.0)
        diffs = np.diff(areas)
        assert np.all(diffs >= 0), f"dim {D.SHAPE_NAMES[d]}: {areas}"
        assert areas[-1] > areas[0], f"dim {D.SHAPE_NAMES[d]} has no effect"


def test_walker_bag_and_coat_add_area():
    base = D.SyntheticWalkerParams(shape=_mid_shape())
    bag = D.SyntheticWalkerParams(shape=_mid_shape(), bag=True)
    coat = D.SyntheticWalkerParams(shape=_mid_shape(), coat_scale=1.3)
    a = D.generate_synthetic_walker(base, 6, seed=1)[0].frames.sum()
    assert D.generate_synthetic_walker(bag, 6, seed=1)[0].frames.sum() > a
    assert D.generate_synthetic_walker(coat, 6, seed=1)[0].frames.sum() > a


def test_walker_edge_slack_marks_boundary_frames():
    params = D.SyntheticWalkerParams(shape=_mid_shape(), edge_slack=10.0)
    seq, _ = D.generate_synthetic_walker(params, m=12, seed=2)
    assert not seq.detectable.all()
    assert seq.detectable.any()
    # undetectable frames only at the ends
    inner = seq.detectable[np.argmax(seq.detectable):]
    first_block = np.flatnonzero(~seq.detectable)
    assert first_block[0] == 0 or first_block[-1] == 11
    no_slack, _ = D.generate_synthetic_walker(
        D.SyntheticWalkerParams(shape=_mid_shape()), m=12, seed=2
    )
    assert no_slack.detectable.all()


def test_walker_rejects_out_of_range_shape():
    bad = _mid_shape()
    bad[0] = D.SHAPE_HIGH[0] + 5
    with pytest.raises(D.DataError):
        D.generate_synthetic_walker(
            D.SyntheticWalkerParams(shape=bad), m=4, seed=0
        )


# ------------------------------------------------------------ tree + sidecar


def test_dataset_roundtrip(tiny_tree):
    root, manifest = tiny_tree
    assert manifest["n_sequences"] == 6 * 7 * 3
    idx = D.load_dataset(root)
    assert len(idx.entries) == manifest["n_sequences"]
    assert idx.views() == [0, 90, 150]
    assert len(idx.subjects()) == 6
    frames = D.load_sequence(idx.entries[0])
    assert frames.shape[1:] == (64, 44)
    assert frames.dtype == np.uint8


def test_write_synthetic_dataset_is_reproducible(tmp_path):
    kwargs = dict(
        n_subjects=2, views=[0, 90], frames=4, seed=21, variants={"nm": 1}
    )
    D.write_synthetic_dataset(tmp_path / "a", **kwargs)
    D.write_synthetic_dataset(tmp_path / "b", **kwargs)
    files_a = sorted((tmp_path / "a").rglob("*"))
    files_b = sorted((tmp_path / "b").rglob("*"))
    assert [f.name for f in files_a] == [f.name for f in files_b]
    for fa, fb in zip(files_a, files_b):
        if fa.is_file():
            assert fa.read_bytes() == fb.read_bytes(), fa.name


def test_write_synthetic_dataset_refuses_nonempty(tmp_path):
    out = tmp_path / "ds"
    D.write_synthetic_dataset(out, n_subjects=1, views=[0], frames=2, seed=0,
                              variants={"nm": 1})
    with pytest.raises(D.DataError):
        D.write_synthetic_dataset(out, n_subjects=1, views=[0], frames=2, seed=0,
                                  variants={"nm": 1})
    D.write_synthetic_dataset(out, n_subjects=1, views=[0], frames=2, seed=0,
                              variants={"nm": 1}, force=True)


def test_load_dataset_warns_on_malformed(tmp_path, tiny_tree):
    root, _ = tiny_tree
    import shutil

    work = tmp_path / "ds"
    shutil.copytree(root, work)
    (work / "001" / "oops").mkdir()
    (work / "001" / "nm-01" / "notaview").mkdir()
    idx = D.load_dataset(work)
    assert any("not <variant>-<seqidx>" in w for w in idx.warnings)
    assert any("view not numeric" in w for w in idx.warnings)


def test_load_dataset_missing_root(tmp_path):
    with pytest.raises(D.DataError):
        D.load_dataset(tmp_path / "nothing_here")
    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(D.DataError):
        D.load_dataset(empty)


def test_sidecar_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    beta = rng.normal(size=10)
    mask = np.array([True, False, True])
    line = D.sidecar_line("001", "nm", 2, 90, beta, mask)
    path = tmp_path / "priors.tsv"
    path.write_text(line + "\n")
    records = D.read_sidecar(path)
    got_beta, got_mask = records[("001", "nm", 2, 90)]
    np.testing.assert_array_equal(got_beta, beta)  # repr round-trips exactly
    np.testing.assert_array_equal(got_mask, mask)


def test_sidecar_rejects_garbage(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("001\tnm\t1\t0\tnot_a_number\n")
    with pytest.raises(D.DataError):
        D.read_sidecar(path)
    path.write_text("001\tnm\t1\t0\t" + "\t".join(["0.0"] * 10) + "\t012\n")
    with pytest.raises(D.DataError):
        D.read_sidecar(path)
    with pytest.raises(D.DataError):
        D.read_sidecar(tmp_path / "missing.tsv")


def test_sequence_cache_decodes_once(tiny_tree, monkeypatch):
    root, _ = tiny_tree
    idx = D.load_dataset(root)
    cache = D.SequenceCache()
    calls = {"n": 0}
    real = D.load_sequence

    def counting(entry):
        calls["n"] += 1
        return real(entry)

    monkeypatch.setattr(D, "load_sequence", counting)
    a = cache(idx.entries[0])
    b = cache(idx.entries[0])
    assert calls["n"] == 1
    assert a is b
