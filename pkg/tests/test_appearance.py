import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gpgp.appearance import (
    AppearanceModel,
    build_histograms,
    kmeans_cluster,
    log_emission,
    quantize,
    region_counts,
    region_loglik,
    train_appearance,
)
from gpgp.errors import DataError, GPGPIOError, ParameterError, UsageError
from gpgp.synth import synthetic_appearance


def test_kmeans_recovers_exactly_k_colors(rng):
    colors = rng.choice(256, size=(20, 3), replace=False).astype(float)
    pixels = np.repeat(colors, rng.integers(1, 6, size=20), axis=0)
    rng.shuffle(pixels)
    c = kmeans_cluster(pixels, 20, seed=3)
    assert {tuple(x) for x in c} == {tuple(x) for x in colors}
    assert np.array_equal(c[quantize(pixels[None], c)[0]], pixels)


def test_kmeans_identical_pixels():
    c = kmeans_cluster(np.full((50, 3), 17.0), 20, seed=0)
    assert (c == 17.0).all()


def test_kmeans_objective_non_increasing(rng):
    hist = []
    kmeans_cluster(rng.random((500, 3)) * 255, 20, seed=1, history=hist)
    assert len(hist) >= 2
    assert all(b <= a + 1e-9 for a, b in zip(hist, hist[1:]))


def test_kmeans_determinism_and_errors(rng):
    px = rng.random((300, 3))
    assert np.array_equal(kmeans_cluster(px, 20, seed=5), kmeans_cluster(px, 20, seed=5))
    with pytest.raises(DataError):
        kmeans_cluster(px[:19], 20)


def test_quantize_examples():
    c = np.arange(60, dtype=float).reshape(20, 3) * 10
    img = np.array([[c[7], c[19]]])
    assert quantize(img, c).tolist() == [[7, 19]]
    # equidistant from centroids 2 and 9 goes to 2
    c2 = np.zeros((20, 3)) + 1000
    c2[2] = (0, 0, 0)
    c2[9] = (10, 0, 0)
    assert quantize(np.array([[[5.0, 0, 0]]]), c2)[0, 0] == 2


@given(st.integers(0, 2**32 - 1))
def test_quantize_codomain(seed):
    r = np.random.default_rng(seed)
    q = quantize(r.random((6, 7, 3)) * 255, r.random((20, 3)) * 255)
    assert q.shape == (6, 7) and q.min() >= 0 and q.max() < 20


def test_histograms_one_hot_and_uniform():
    bins = np.full((3, 3), 3)
    labels = np.full((3, 3), 2)
    theta = build_histograms(bins, labels)
    assert theta[2, 3] == 1.0 and theta[2].sum() == 1.0
    assert np.allclose(theta[[0, 1, 3]], 1 / 20)


def test_histograms_hand_case():
    bins = np.array([[0, 1, 1, 2], [0, 0, 5, 5], [7, 7, 7, 7], [1, 1, 1, 1]])
    labels = np.array([[0, 0, 0, 0], [1, 1, 1, 1], [2, 2, 2, 3], [3, 3, 3, 3]])
    t = build_histograms(bins, labels)
    assert t[0, 0] == 0.25 and t[0, 1] == 0.5 and t[0, 2] == 0.25
    assert t[1, 0] == 0.5 and t[1, 5] == 0.5
    assert t[2, 7] == 1.0
    assert t[3, 7] == 0.2 and t[3, 1] == 0.8
    assert np.abs(t.sum(axis=1) - 1).max() < 1e-12
    with pytest.raises(UsageError):
        build_histograms(bins, labels[:2])


def test_region_loglik_examples():
    theta = np.full((4, 20), 1 / 20)
    labels = np.random.default_rng(0).integers(0, 4, size=(5, 6))
    bins = np.random.default_rng(1).integers(0, 20, size=(5, 6))
    assert region_loglik(bins, labels, theta, 0.7) == pytest.approx(30 * math.log(1 / 20), abs=1e-12)
    theta = np.full((4, 20), 0.87 / 19)
    theta[:, 4] = 0.13
    got = region_loglik(np.array([[4]]), np.array([[1]]), theta, 0.5)
    assert got == pytest.approx(math.log(0.63 / 11), abs=1e-12)
    big = region_loglik(np.array([[4]]), np.array([[1]]), theta, 1e9)
    assert big == pytest.approx(math.log(1 / 20), abs=1e-6)
    with pytest.raises(ParameterError):
        region_loglik(np.array([[4]]), np.array([[1]]), theta, 0.0)
    with pytest.raises(UsageError):
        region_loglik(np.zeros((2, 2), int), np.zeros((3, 2), int), theta, 0.5)


@given(st.integers(0, 2**32 - 1), st.floats(1e-6, 1e3))
def test_emission_normalizes(seed, eps):
    theta = np.random.default_rng(seed).dirichlet(np.ones(20), size=4)
    p = np.exp(log_emission(theta, eps))
    assert np.abs(p.sum(axis=1) - 1).max() < 1e-12


@given(st.integers(0, 2**32 - 1), st.floats(0.01, 5), st.floats(0.001, 0.3))
def test_loglik_strictly_increasing_in_theta(seed, eps, bump):
    r = np.random.default_rng(seed)
    theta = r.dirichlet(np.ones(20), size=4)
    bins = np.array([[3]])
    labels = np.array([[2]])
    raised = theta.copy()
    raised[2, 3] += bump
    # only the evaluated entry moves; normalizer uses the row sum
    assert region_loglik(bins, labels, raised, eps) > region_loglik(bins, labels, theta, eps)


def test_region_counts_total(rng):
    bins = rng.integers(0, 20, size=(7, 9))
    labels = rng.integers(0, 4, size=(7, 9)).astype(np.uint8)
    c = region_counts(bins, labels)
    assert c.shape == (4, 20) and c.sum() == 63
    assert c[labels[0, 0], bins[0, 0]] >= 1


def test_histograms_recover_sampling_theta():
    app = synthetic_appearance(seed=4)
    r = np.random.default_rng(0)
    n = 100_000
    labels = np.repeat(np.arange(4), n).reshape(4, n)
    bins = np.stack([r.choice(20, size=n, p=app.theta[k]) for k in range(4)])
    est = build_histograms(bins, labels)
    assert np.abs(est - app.theta).sum(axis=1).max() < 0.05


def test_train_appearance_on_region_distinct_frame():
    r = np.random.default_rng(0)
    labels = np.repeat(np.arange(4), 400).reshape(40, 40)
    palette = np.array([[200, 30, 30], [30, 200, 30], [30, 30, 200], [240, 240, 20]], dtype=float)
    rgb = np.clip(palette[labels] + r.normal(0, 2, size=(40, 40, 3)), 0, 255)
    m = train_appearance(rgb, labels, seed=0)
    # each region's mass sits on clusters near its own color
    near = np.argmin(((m.centroids[:, None, :] - palette[None]) ** 2).sum(-1), axis=1)
    for k in range(4):
        assert m.theta[k][near == k].sum() > 0.99


def test_train_appearance_flat_regions_give_one_hot_rows():
    labels = np.repeat(np.arange(4), 100).reshape(20, 20)
    palette = np.array([[200, 30, 30], [30, 200, 30], [30, 30, 200], [240, 240, 20]], dtype=float)
    m = train_appearance(palette[labels], labels, seed=0)
    assert (m.theta.max(axis=1) > 0.9).all()


def test_model_json_round_trip(tmp_path):
    app = synthetic_appearance(seed=2)
    p = tmp_path / "m.json"
    app.save(p)
    back = AppearanceModel.load(p)
    assert np.array_equal(back.centroids, app.centroids) and np.array_equal(back.theta, app.theta)
    assert set(back.to_json()["theta"]) == {"left", "right", "road", "lane"}
    with pytest.raises(GPGPIOError):
        AppearanceModel.load(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(DataError):
        AppearanceModel.load(tmp_path / "bad.json")
    with pytest.raises(DataError):
        AppearanceModel.from_json({"centroids": [[0, 0, 0]]})
    with pytest.raises(DataError):
        AppearanceModel(np.zeros((20, 3)), np.full((4, 20), 0.5))
