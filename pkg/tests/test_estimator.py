import numpy as np
import pytest
from sklearn.base import clone

from gaitshape import GaitShapeRecognizer
from gaitshape import data as D
from gaitshape.data import DataError


def walker_dataset(n_subjects=4, per_subject=3, frames=10, seed=77):
    """In-memory labeled sequences with per-subject body shapes."""
    low = np.asarray(D.SHAPE_LOW)
    high = np.asarray(D.SHAPE_HIGH)
    X, y, shapes = [], [], []
    for s in range(n_subjects):
        rng = np.random.default_rng(np.random.SeedSequence([seed, s]))
        shape = low + rng.random(10) * (high - low)
        shapes.append(shape)
        for j in range(per_subject):
            params = D.SyntheticWalkerParams(shape=shape, view=(0, 90, 150)[j % 3])
            seq, _ = D.generate_synthetic_walker(params, frames, seed=seed + 31 * j)
            X.append(seq.frames)
            y.append(f"s{s:02d}")
    return X, y, np.stack(shapes)


def lean_recognizer(**overrides):
    kwargs = dict(
        max_iters=3,
        p=3,
        k=2,
        frames_per_sample=8,
        silhouette_channels=(8, 16, 32),
        body_channels=(8, 8, 16, 16, 24, 32),
        embedding_dim=32,
        seed=0,
    )
    kwargs.update(overrides)
    return GaitShapeRecognizer(**kwargs)


def test_get_params_set_params_clone_roundtrip():
    est = lean_recognizer(margin=0.35, distill="l2")
    params = est.get_params()
    assert params["margin"] == 0.35
    assert params["distill"] == "l2"
    twin = clone(est)
    assert twin.get_params() == params
    est.set_params(lr=5e-4)
    assert est.get_params()["lr"] == 5e-4


def test_fit_sets_learned_attributes():
    X, y, _ = walker_dataset()
    est = lean_recognizer().fit(X, y)
    assert est.classes_ == sorted(set(y))
    assert len(est.history_) == 3
    assert est.gallery_embeddings_.shape == (len(X), 16 * 32)
    assert est.gallery_labels_ == y
    assert est.state_.iteration == 3


def test_transform_shape_and_determinism():
    X, y, _ = walker_dataset()
    est = lean_recognizer().fit(X, y)
    emb = est.transform(X[:5])
    assert emb.shape == (5, 16 * 32)
    np.testing.assert_array_equal(emb, est.transform(X[:5]))


def test_predict_recalls_training_sequences_exactly():
    # a training sequence is its own nearest gallery entry (distance 0)
    X, y, _ = walker_dataset()
    est = lean_recognizer().fit(X, y)
    assert list(est.predict(X)) == y
    assert est.score(X, y) == 1.0


def test_fit_with_priors_enables_distillation():
    X, y, shapes = walker_dataset()
    per = len(X) // len(shapes)
    priors = np.repeat(shapes, per, axis=0)
    est = lean_recognizer().fit(X, y, priors=priors)
    assert est.state_.prior_stats is not None
    assert all(rec.l_kd is not None for rec in est.history_)  # coverage 1.0
    plain = lean_recognizer().fit(X, y)
    assert all(rec.l_kd is None for rec in plain.history_)


def test_fit_respects_prior_masks():
    # undetectable frames knock a sequence out of the covered set; with
    # every mask dead the distillation term disappears entirely
    X, y, shapes = walker_dataset(n_subjects=3, per_subject=2)
    priors = np.repeat(shapes, 2, axis=0)
    dead = [np.zeros(len(seq), dtype=bool) for seq in X]
    est = lean_recognizer(p=3, k=2).fit(X, y, priors=priors, prior_masks=dead)
    assert est.state_.prior_stats is None
    assert all(rec.l_kd is None for rec in est.history_)


def test_unfitted_estimator_refuses_to_run():
    est = lean_recognizer()
    X, _, _ = walker_dataset(n_subjects=2, per_subject=1)
    with pytest.raises(DataError, match="not fitted"):
        est.transform(X)
    with pytest.raises(DataError, match="not fitted"):
        est.predict(X)


def test_input_validation():
    est = lean_recognizer()
    with pytest.raises(DataError, match="4-D"):
        est.fit(np.zeros((3, 64, 44)), ["a", "b", "c"])
    X, y, _ = walker_dataset(n_subjects=2, per_subject=1)
    with pytest.raises(DataError, match="labels"):
        est.fit(X, y[:-1])
    with pytest.raises(DataError):
        est.fit(42, ["a"])


def test_accepts_unnormalized_grayscale_input():
    # 0/255 frames at a foreign resolution go through binarize+normalize
    X, y, _ = walker_dataset(n_subjects=2, per_subject=2, frames=8)
    raw = [np.kron(seq, np.ones((2, 2), dtype=np.uint8)) * 255 for seq in X]
    est = lean_recognizer(p=2, k=2).fit(raw, y)
    emb = est.transform(raw[:2])
    assert emb.shape == (2, 16 * 32)


def test_views_parameter_controls_entry_views():
    X, y, _ = walker_dataset(n_subjects=2, per_subject=2, frames=8)
    views = [0, 90, 0, 90]
    est = lean_recognizer(p=2, k=2).fit(X, y, views=views)
    assert est.state_.iteration == 3
