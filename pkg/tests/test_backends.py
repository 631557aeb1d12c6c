import numpy as np
import pytest

from adired import backends as be
from conftest import make_toy_disnet, make_toy_extractor, random_toy_instance
from oracle import brute_force_gap_score


@pytest.fixture
def gray_disnet(tmp_path):
    """One brightness filter that only fires above mid-gray."""
    return make_toy_disnet(
        tmp_path / "gray.toy",
        channel_weights=[[1 / 3, 1 / 3, 1 / 3]],
        filter_bias=[-0.5],
        class_weights=[[1.0], [-1.0]],
        grid_size=4,
    )


def test_zero_image_gives_zero_stack_and_lowest_index_prediction(tmp_path):
    disnet = make_toy_disnet(
        tmp_path / "zero.toy",
        channel_weights=[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        filter_bias=[0.0, 0.0],
        class_weights=[[1.0, 2.0], [3.0, 4.0]],
    )
    image = np.zeros((32, 32, 3), dtype=np.uint8)
    acts, predicted, scores = be.disnet_forward(image, disnet)
    assert np.all(acts.maps == 0.0)
    assert np.all(scores == 0.0)
    assert predicted == 0  # tie broken toward the lowest class index


def test_bright_quadrant_filter_peaks_top_left(gray_disnet):
    image = np.zeros((64, 64, 3), dtype=np.uint8)
    image[:32, :32] = 255  # bright top-left quadrant
    acts, _, _ = be.disnet_forward(image, gray_disnet)
    amap = acts.maps[0]
    peak = np.unravel_index(np.argmax(amap), amap.shape)
    assert peak[0] < 2 and peak[1] < 2
    assert amap[:2, :2].min() > amap[2:, 2:].max()


def test_synthetic_disnet_keeps_fourteen_grid_contract(synthetic_root,
                                                       synthetic_config):
    disnet = be.load_model(synthetic_config.model_paths["disnet"], "disnet")
    image = np.full((100, 150, 3), 60, dtype=np.uint8)
    acts, _, _ = be.disnet_forward(image, disnet)
    assert acts.grid_size == 14


def test_forward_is_deterministic(gray_disnet):
    rng = np.random.default_rng(3)
    image = rng.integers(0, 256, size=(40, 40, 3), dtype=np.uint8)
    first = be.disnet_forward(image, gray_disnet)
    second = be.disnet_forward(image, gray_disnet)
    assert np.array_equal(first[0].maps, second[0].maps)
    assert np.array_equal(first[2], second[2])
    assert first[1] == second[1]


def test_shape_coherence_weights_match_filters(gray_disnet):
    image = np.zeros((16, 16, 3), dtype=np.uint8)
    acts, _, _ = be.disnet_forward(image, gray_disnet)
    assert gray_disnet.backend.classifier.num_filters == acts.num_filters


def test_class_scores_match_brute_force_decomposition(tmp_path):
    rng = np.random.default_rng(11)
    disnet = make_toy_disnet(
        tmp_path / "rand.toy",
        channel_weights=rng.normal(size=(3, 3)),
        filter_bias=rng.normal(size=3) - 0.5,
        class_weights=rng.normal(size=(4, 3)),
        grid_size=5,
    )
    image = rng.integers(0, 256, size=(50, 70, 3), dtype=np.uint8)
    acts, _, scores = be.disnet_forward(image, disnet)
    for c in range(4):
        expected = brute_force_gap_score(
            acts.maps.tolist(), disnet.backend.classifier.weights[c].tolist())
        assert abs(scores[c] - expected) <= 1e-6 * max(1.0, abs(expected))


# ---------------------------------------------------------------------------
# feature extractors


@pytest.fixture
def eight_bin_extractor(tmp_path):
    """The documented 8-bin mean-of-channels layout with gaps between bins."""
    bins = [[r, c, 8, 8] for r in (8, 40) for c in (4, 20, 36, 52)]
    return make_toy_extractor(tmp_path / "mean8.toy", bins,
                              [[1 / 3, 1 / 3, 1 / 3]])


def test_uniform_gray_region_gives_equal_features(eight_bin_extractor):
    region = np.full((64, 64, 3), 120, dtype=np.uint8)
    feats = be.extract_features(region, eight_bin_extractor)
    assert feats.dim == 8
    assert np.all(feats.values == feats.values[0])
    assert feats.values[0] == pytest.approx(120 / 255)


def test_extractor_is_deterministic(eight_bin_extractor):
    rng = np.random.default_rng(5)
    region = rng.integers(0, 256, size=(30, 45, 3), dtype=np.uint8)
    a = be.extract_features(region, eight_bin_extractor)
    b = be.extract_features(region, eight_bin_extractor)
    assert np.array_equal(a.values, b.values)


def test_pixels_outside_bins_never_change_features(eight_bin_extractor):
    rng = np.random.default_rng(6)
    base = rng.integers(0, 256, size=(64, 64, 3), dtype=np.uint8)
    altered = base.copy()
    altered[0:8, :] = 255        # above the first bin row
    altered[16:40, :] = 0        # between the two bin rows
    altered[48:, :] = 37         # below the second bin row
    a = be.extract_features(base, eight_bin_extractor)
    b = be.extract_features(altered, eight_bin_extractor)
    assert np.array_equal(a.values, b.values)


def test_zero_area_region_is_rejected(eight_bin_extractor):
    with pytest.raises(be.BackendError):
        be.extract_features(np.zeros((0, 10, 3), dtype=np.uint8),
                            eight_bin_extractor)


def test_mix_bias_shifts_and_relu_clamps(tmp_path):
    full_bin = [[0, 0, 16, 16]]
    mixes = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]
    plain = make_toy_extractor(tmp_path / "p.toy", full_bin, mixes,
                               resolution=(16, 16))
    biased = make_toy_extractor(tmp_path / "b.toy", full_bin, mixes,
                                resolution=(16, 16), mix_bias=[-0.5, 0.25])
    clamped = make_toy_extractor(tmp_path / "c.toy", full_bin, mixes,
                                 resolution=(16, 16), mix_bias=[-0.5, 0.25],
                                 relu=True)
    region = np.full((16, 16, 3), 51, dtype=np.uint8)  # 0.2 per channel
    base = be.extract_features(region, plain).values
    shifted = be.extract_features(region, biased).values
    assert shifted == pytest.approx(base + np.array([-0.5, 0.25]))
    rectified = be.extract_features(region, clamped).values
    assert rectified == pytest.approx(np.maximum(shifted, 0.0))
    assert rectified[0] == 0.0  # the negative response is clamped


def test_mix_bias_length_mismatch_is_rejected(tmp_path):
    with pytest.raises(be.ShapeMismatchError):
        make_toy_extractor(tmp_path / "mb.toy", [[0, 0, 4, 4]],
                           [[1.0, 0.0, 0.0]], mix_bias=[0.1, 0.2])


def test_extract_features_resizes_to_input_resolution(tmp_path):
    # one bin covering everything: the feature is the overall mean
    ext = make_toy_extractor(tmp_path / "full.toy", [[0, 0, 16, 16]],
                             [[1.0, 0.0, 0.0]], resolution=(16, 16))
    region = np.full((100, 33, 3), 200, dtype=np.uint8)
    feats = be.extract_features(region, ext)
    assert feats.dim == 1
    assert feats.values[0] == pytest.approx(200 / 255, abs=1e-6)


# ---------------------------------------------------------------------------
# model loading


def test_load_model_round_trips_declared_resolution(tmp_path):
    ext = make_toy_extractor(tmp_path / "rt.toy", [[0, 0, 4, 4]],
                             [[1 / 3, 1 / 3, 1 / 3]], resolution=(48, 32))
    assert ext.kind == "feature-extractor"
    assert ext.input_resolution == (48, 32)
    assert ext.source == "toy"


def test_truncated_fixture_is_a_parse_error(tmp_path):
    path = tmp_path / "broken.toy"
    good = tmp_path / "good.toy"
    make_toy_extractor(good, [[0, 0, 4, 4]], [[1.0, 0.0, 0.0]])
    content = good.read_text()
    path.write_text(content[:len(content) // 2])
    with pytest.raises(be.ModelFormatError):
        be.load_model(path, "feature-extractor")


def test_disnet_without_classifier_weights_is_rejected(tmp_path):
    path = tmp_path / "headless.toy"
    be.write_toy_file(path, {
        "input_resolution": np.array([32.0, 32.0]),
        "grid_size": np.array(4.0),
        "channel_weights": np.array([[1.0, 0.0, 0.0]]),
        "filter_bias": np.array([0.0]),
    })
    with pytest.raises(be.ModelFormatError, match="classifier"):
        be.load_model(path, "disnet")


def test_missing_model_file_is_an_error(tmp_path):
    with pytest.raises(be.ModelFormatError):
        be.load_model(tmp_path / "nope.toy", "disnet")


def test_bad_header_is_rejected(tmp_path):
    path = tmp_path / "bad.toy"
    path.write_text("NOTATOY v9\n")
    with pytest.raises(be.ModelFormatError):
        be.load_model(path, "feature-extractor")


def test_labels_sidecar_is_used(tmp_path):
    disnet = make_toy_disnet(
        tmp_path / "lab.toy",
        channel_weights=[[1.0, 0.0, 0.0]],
        filter_bias=[0.0],
        class_weights=[[1.0], [2.0]],
        labels=["campsite", "art_school"],
    )
    assert disnet.backend.class_labels == ("campsite", "art_school")


def test_label_count_mismatch_is_rejected(tmp_path):
    with pytest.raises(be.ModelFormatError):
        make_toy_disnet(
            tmp_path / "mis.toy",
            channel_weights=[[1.0, 0.0, 0.0]],
            filter_bias=[0.0],
            class_weights=[[1.0], [2.0]],
            labels=["only_one"],
        )


def test_activation_stack_rejects_tiny_grids():
    with pytest.raises(be.ShapeMismatchError):
        be.ActivationStack(np.zeros((1, 2, 2)))


def test_random_instance_shapes_cohere():
    rng = np.random.default_rng(0)
    acts, weights = random_toy_instance(rng)
    assert weights.num_filters == acts.num_filters
