import numpy as np
import pytest

from adired.regions import (
    COARSE,
    FINE,
    GridPeak,
    SelectionConfig,
    crop_patch,
    dedup_equal_peaks,
    find_local_maxima,
    grid_to_pixel,
    patch_side,
    sample_dense,
    sample_random,
    select_regions,
    threshold_peaks,
)
from oracle import brute_force_peaks


def as_tuples(peaks):
    return [(p.gx, p.gy, p.score) for p in peaks]


# ---------------------------------------------------------------------------
# local maxima


def test_unique_strict_maximum():
    grid = np.array([[1, 2, 3], [4, 9, 5], [6, 7, 8]], dtype=float)
    peaks = find_local_maxima(grid)
    assert as_tuples(peaks) == [(1, 1, 9.0)]


def test_constant_grid_keeps_the_four_corners():
    peaks = find_local_maxima(np.full((3, 3), 5.0))
    assert sorted((p.gx, p.gy) for p in peaks) == [(0, 0), (0, 2), (2, 0), (2, 2)]


def test_border_cells_can_be_maxima():
    grid = np.zeros((4, 4))
    grid[0, 3] = 8.0
    peaks = find_local_maxima(grid)
    assert (peaks[0].gx, peaks[0].gy) == (3, 0)


def test_sorted_by_descending_score_then_row_major():
    grid = np.zeros((5, 5))
    grid[0, 4] = 7.0
    grid[4, 0] = 7.0
    grid[2, 2] = 9.0
    peaks = find_local_maxima(grid)
    assert as_tuples(peaks)[:3] == [(2, 2, 9.0), (4, 0, 7.0), (0, 4, 7.0)]


def test_small_grid_rejected():
    with pytest.raises(ValueError):
        find_local_maxima(np.zeros((2, 2)))


def test_thousand_random_grids_match_brute_force_oracle():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        grid = rng.uniform(0, 255, size=(14, 14))
        if rng.random() < 0.3:  # force ties sometimes
            grid = np.round(grid / 25) * 25
        assert as_tuples(find_local_maxima(grid)) == brute_force_peaks(
            grid.tolist())


# ---------------------------------------------------------------------------
# dedup


def test_adjacent_equal_peaks_keep_row_major_first():
    candidates = [GridPeak(1, 1, 200.0), GridPeak(2, 1, 200.0)]
    assert dedup_equal_peaks(candidates) == [GridPeak(1, 1, 200.0)]


def test_distant_equal_peaks_both_survive():
    candidates = [GridPeak(1, 1, 200.0), GridPeak(4, 1, 200.0)]
    assert dedup_equal_peaks(candidates) == candidates


def test_dedup_empty():
    assert dedup_equal_peaks([]) == []


# ---------------------------------------------------------------------------
# thresholding


def peaks_with_scores(*scores):
    return [GridPeak(i, 0, float(s)) for i, s in enumerate(scores)]


def test_threshold_keeps_strictly_greater():
    kept = threshold_peaks(peaks_with_scores(120, 160, 200), 150)
    assert [p.score for p in kept] == [160.0, 200.0]


def test_zero_threshold_keeps_everything_positive():
    peaks = peaks_with_scores(120, 160, 200)
    assert threshold_peaks(peaks, 0) == peaks


def test_fallback_keeps_single_best_peak():
    kept = threshold_peaks(peaks_with_scores(120, 90), 255, fallback_on_empty=True)
    assert [p.score for p in kept] == [120.0]


def test_no_fallback_returns_empty():
    assert threshold_peaks(peaks_with_scores(120, 90), 255,
                           fallback_on_empty=False) == []


def test_threshold_monotonicity_peak_sets_nest():
    rng = np.random.default_rng(9)
    for _ in range(100):
        peaks = find_local_maxima(rng.uniform(0, 255, size=(14, 14)))
        previous = None
        for t in (0, 50, 100, 150, 200, 250):
            kept = {(p.gx, p.gy) for p in
                    threshold_peaks(peaks, t, fallback_on_empty=False)}
            if previous is not None:
                assert kept <= previous
            previous = kept


# ---------------------------------------------------------------------------
# coordinates and patches


def test_grid_to_pixel_first_and_last_cell():
    assert grid_to_pixel(GridPeak(0, 0, 0.0), 14, 224, 224) == (8, 8)
    assert grid_to_pixel(GridPeak(13, 13, 0.0), 14, 224, 224) == (216, 216)


def test_grid_to_pixel_identity_resolution():
    for g in (0, 3, 6):
        assert grid_to_pixel(GridPeak(g, g, 0.0), 7, 7, 7) == (g, g)


def test_patch_sides():
    assert patch_side(COARSE, 224, 224) == 112
    assert patch_side(FINE, 224, 224) == 56
    assert patch_side(COARSE, 101, 301) == 51  # round half up on 50.5


def test_crop_exact_corner_fit():
    patch = crop_patch((56, 56), COARSE, 224, 224)
    assert (patch.left, patch.top, patch.side) == (0, 0, 112)


def test_crop_clamps_negative_offsets():
    patch = crop_patch((10, 10), COARSE, 224, 224)
    assert (patch.left, patch.top) == (0, 0)


def test_crop_clamps_past_right_edge():
    patch = crop_patch((200, 120), FINE, 224, 224)
    assert (patch.left, patch.top, patch.side) == (168, 92, 56)


def test_crop_containment_randomized():
    rng = np.random.default_rng(77)
    for _ in range(2000):
        w = int(rng.integers(64, 1025))
        h = int(rng.integers(64, 1025))
        cx = int(rng.integers(0, w))
        cy = int(rng.integers(0, h))
        scale = COARSE if rng.random() < 0.5 else FINE
        patch = crop_patch((cx, cy), scale, w, h)
        frac = 0.5 if scale == COARSE else 0.25
        assert patch.side == int(np.floor(frac * min(w, h) + 0.5))
        assert 0 <= patch.left and patch.left + patch.side <= w
        assert 0 <= patch.top and patch.top + patch.side <= h


# ---------------------------------------------------------------------------
# composed selection


def test_constant_map_falls_back_to_one_corner_patch_per_scale():
    regions = select_regions(np.zeros((14, 14)), SelectionConfig(), 224, 224)
    assert len(regions.per_scale(COARSE)) == 1
    assert len(regions.per_scale(FINE)) == 1
    peak = regions.patches[0].source_peak
    assert (peak.gx, peak.gy) == (0, 0)


def test_equal_thresholds_give_equal_per_scale_counts():
    rng = np.random.default_rng(10)
    grid = rng.uniform(0, 255, size=(14, 14))
    config = SelectionConfig(t_coarse=0, t_fine=0)
    regions = select_regions(grid, config, 300, 200)
    assert len(regions.per_scale(COARSE)) == len(regions.per_scale(FINE))


def test_planted_peak_patch_contains_its_pixel_center():
    grid = np.zeros((14, 14))
    grid[9, 4] = 255.0  # gy=9, gx=4
    regions = select_regions(grid, SelectionConfig(), 448, 448)
    cx, cy = grid_to_pixel(GridPeak(4, 9, 255.0), 14, 448, 448)
    for patch in regions.patches:
        assert patch.left <= cx < patch.left + patch.side
        assert patch.top <= cy < patch.top + patch.side


def test_no_two_kept_equal_peaks_share_a_window():
    rng = np.random.default_rng(11)
    for _ in range(200):
        grid = np.round(rng.uniform(0, 255, size=(14, 14)) / 40) * 40
        peaks = find_local_maxima(grid)
        for i, a in enumerate(peaks):
            for b in peaks[i + 1:]:
                if a.score == b.score:
                    assert max(abs(a.gx - b.gx), abs(a.gy - b.gy)) > 1


def test_selection_invariant_under_positive_weight_rescaling():
    rng = np.random.default_rng(12)
    grid = rng.uniform(size=(14, 14))
    config = SelectionConfig()
    base = select_regions(grid * 255 / grid.max(), config, 224, 224)
    # scaling raw values before normalization must not change anything
    from adired.dismap import normalize_map
    a = select_regions(normalize_map(grid), config, 224, 224)
    b = select_regions(normalize_map(grid * 31.7), config, 224, 224)
    # same regions; scores may differ in the last ulp of the rescale
    assert [(p.left, p.top, p.side, p.scale) for p in a.patches] == \
        [(p.left, p.top, p.side, p.scale) for p in b.patches]
    assert np.allclose([p.score for p in a.patches],
                       [p.score for p in b.patches], rtol=1e-12)
    assert base.thresholds == a.thresholds


# ---------------------------------------------------------------------------
# baseline samplers


def test_dense_sampling_emits_sixty_contained_patches():
    regions = sample_dense(224, 224)
    assert len(regions.per_scale(COARSE)) == 10
    assert len(regions.per_scale(FINE)) == 50
    for patch in regions.patches:
        assert 0 <= patch.left and patch.left + patch.side <= 224
        assert 0 <= patch.top and patch.top + patch.side <= 224


def test_dense_geometry_depends_only_on_image_size():
    assert sample_dense(640, 480).patches == sample_dense(640, 480).patches


def test_random_sampling_emits_ten_seeded_patches():
    a = sample_random(300, 200, seed=123)
    b = sample_random(300, 200, seed=123)
    c = sample_random(300, 200, seed=124)
    assert len(a.patches) == 10
    assert a.patches == b.patches
    assert a.patches != c.patches


def test_random_patches_always_contained():
    rng = np.random.default_rng(13)
    for _ in range(1000):
        w = int(rng.integers(64, 1025))
        h = int(rng.integers(64, 1025))
        for patch in sample_random(w, h, int(rng.integers(0, 2**32))).patches:
            assert 0 <= patch.left and patch.left + patch.side <= w
            assert 0 <= patch.top and patch.top + patch.side <= h


def test_selection_config_validates_threshold_range():
    with pytest.raises(ValueError):
        SelectionConfig(t_coarse=300)
