"""Filter scoring, selection modes, and map-to-box localization."""

import numpy as np
import pytest

from gesturekit.backbone import DEFAULT_PLANTED, ActivationStack, SyntheticBackbone
from gesturekit.filter_selection import (
    FilterSet,
    FSParams,
    filter_predictions,
    grid_params,
    load_filter_set,
    localize,
    localize_stack,
    rescale_unit,
    save_filter_set,
    score_filters,
    select_filters,
    select_filters_from_stacks,
    sweep,
)
from gesturekit.tensors import BBox, Tensor

from oracles import filter_boxes_ref, fs_scores_ref


def _stack(maps, extent):
    return ActivationStack("conv3", Tensor(np.asarray(maps, dtype=np.float32)), extent)


def test_params_require_exactly_one_selection_mode():
    with pytest.raises(ValueError):
        FSParams(alpha=0.5, top_n=4)
    with pytest.raises(ValueError):
        FSParams(alpha=None, top_n=None)
    with pytest.raises(ValueError):
        FSParams(top_n=4, kernel=4)
    FSParams(alpha=0.9, top_n=None)


def test_rescale_unit_bounds_and_constant_map():
    arr = np.array([[2.0, 4.0], [6.0, 10.0]])
    unit = rescale_unit(arr)
    assert unit.min() == 0.0 and unit.max() == 1.0
    assert unit[0, 1] == pytest.approx(0.25)
    assert np.all(rescale_unit(np.full((3, 3), 7.0)) == 0.0)


def test_filter_predictions_identity_extent_exact():
    # 2x2 map at a 2x2 extent skips resizing entirely, so the pipeline
    # reduces to rescale -> threshold -> blobs and is exact.
    boxes = filter_predictions([[1.0, 0.0], [0.0, 0.0]], (2, 2), beta=0.5, kernel=1)
    assert [b.as_tuple() for b in boxes] == [(0, 0, 1, 1)]


def test_constant_map_predicts_nothing():
    assert filter_predictions(np.full((4, 4), 0.9), (32, 32), beta=0.5, kernel=3) == []


def test_score_filters_exact_frozen_case():
    # Filter 0 is a perfect single-cell indicator, filter 1 is constant.
    maps = [[[1.0, 0.0], [0.0, 0.0]], [[0.7, 0.7], [0.7, 0.7]]]
    stack = _stack(maps, (2, 2))
    params = FSParams(top_n=1, beta=0.5, kernel=1)
    scores = score_filters([stack, stack], [[BBox(0, 0, 1, 1)], [BBox(0, 0, 1, 1)]], params)
    assert scores.tolist() == [1.0, 0.0]


def test_score_filters_matches_loop_oracle():
    rng = np.random.default_rng(21)
    extent = (20, 20)
    params = FSParams(top_n=2, beta=0.6, kernel=3, min_area=2)
    stacks, truths = [], []
    for _ in range(3):
        stacks.append(_stack(rng.random((4, 5, 5)), extent))
        x0, y0 = int(rng.integers(0, 12)), int(rng.integers(0, 12))
        truths.append([BBox(x0, y0, x0 + int(rng.integers(2, 8)), y0 + int(rng.integers(2, 8)))])
    got = score_filters(stacks, truths, params)
    want = fs_scores_ref(
        [s.maps.array for s in stacks],
        [[b.as_tuple() for b in t] for t in truths],
        extent, params.beta, params.kernel, params.min_area,
    )
    assert got == pytest.approx(want, abs=1e-9)


def test_filter_predictions_matches_oracle_on_random_maps():
    rng = np.random.default_rng(22)
    for _ in range(15):
        arr = rng.random((int(rng.integers(2, 7)), int(rng.integers(2, 7))))
        got = [b.as_tuple() for b in filter_predictions(arr, (16, 12), beta=0.7, kernel=3)]
        assert got == filter_boxes_ref(arr, (16, 12), 0.7, 3, 1)


def test_selection_alpha_is_strict_and_top_n_breaks_ties_low():
    maps = np.zeros((3, 2, 2), dtype=np.float32)
    maps[0, 0, 0] = 1.0  # score 1.0
    maps[1, 0, 0] = 1.0  # identical map, identical score
    stack = _stack(maps, (2, 2))
    truths = [[BBox(0, 0, 1, 1)]]

    top1 = select_filters_from_stacks([stack], truths, FSParams(top_n=1, beta=0.5, kernel=1), "Point")
    assert top1.entries == ((0, 1.0),)  # tie -> lower index

    strict = select_filters_from_stacks(
        [stack], truths, FSParams(alpha=1.0, top_n=None, beta=0.5, kernel=1), "Point"
    )
    assert strict.entries == ()  # alpha comparison is strictly greater-than

    loose = select_filters_from_stacks(
        [stack], truths, FSParams(alpha=0.9, top_n=None, beta=0.5, kernel=1), "Point"
    )
    assert loose.indices == (0, 1)


def test_higher_beta_never_grows_predictions():
    rng = np.random.default_rng(23)
    arr = rng.random((6, 6))
    prev_area = None
    for beta in (0.3, 0.6, 0.9):
        boxes = filter_predictions(arr, (24, 24), beta=beta, kernel=1)
        area = sum(b.area for b in boxes)
        if prev_area is not None:
            assert area <= prev_area
        prev_area = area


def test_localize_single_filter_reproduces_filter_predictions():
    bb = SyntheticBackbone(seed=3, extent=(48, 48))
    frame = np.full((48, 48, 3), 0.5, dtype=np.float32)
    frame[8:24, 16:32] = DEFAULT_PLANTED[0].color
    frame_t = Tensor(frame)
    params = FSParams(top_n=1, beta=0.92, kernel=7)
    fset = select_filters(bb, "conv3", [(frame_t, [BBox(16, 8, 32, 24)])], params, "Point")
    assert fset.indices == (0,)

    stacks, _ = bb.forward(frame_t, ["conv3"])
    direct = filter_predictions(stacks["conv3"].maps.array[0], (48, 48), 0.92, 7, 1)
    via_set = localize(bb, frame_t, fset, params)
    assert [b.as_tuple() for b in via_set.boxes] == [b.as_tuple() for b in direct]
    assert via_set.heat.dims == (48, 48)


def test_localize_stack_validates_layer_and_indices():
    stack = _stack(np.zeros((2, 2, 2)), (2, 2))
    params = FSParams(top_n=1, beta=0.5, kernel=1)
    with pytest.raises(ValueError, match="empty"):
        localize_stack(stack, FilterSet("Point", "conv3", ()), params)
    with pytest.raises(ValueError, match="layer"):
        localize_stack(stack, FilterSet("Point", "conv2", ((0, 1.0),)), params)
    with pytest.raises(ValueError, match="out of range"):
        localize_stack(stack, FilterSet("Point", "conv3", ((5, 1.0),)), params)


def test_filter_set_invariants():
    with pytest.raises(ValueError, match="unique"):
        FilterSet("Point", "conv3", ((1, 0.9), (1, 0.8)))
    with pytest.raises(ValueError, match="descending"):
        FilterSet("Point", "conv3", ((1, 0.5), (2, 0.9)))
    with pytest.raises(ValueError, match="scores"):
        FilterSet("Point", "conv3", ((1, 1.5),))


def test_filter_set_save_load_round_trip(tmp_path):
    fset = FilterSet("Drag", "conv3", ((7, 0.75), (2, 0.5)))
    path = tmp_path / "drag.fset"
    save_filter_set(fset, path)
    back = load_filter_set(path)
    assert back.class_label == "Drag"
    assert back.layer_name == "conv3"
    assert back.entries == ((7, 0.75), (2, 0.5))
    bad = tmp_path / "bad.fset"
    bad.write_text("junk\n")
    with pytest.raises(ValueError, match="malformed"):
        load_filter_set(bad)


def test_grid_params_cross_product_order():
    grid = grid_params(["conv3"], [1, 2], [0.5, 0.9], [1])
    assert [(g.top_n, g.beta) for g in grid] == [(1, 0.5), (1, 0.9), (2, 0.5), (2, 0.9)]


def test_sweep_flags_best_row_earliest_tie():
    bb = SyntheticBackbone(seed=3, extent=(48, 48))
    def scene(x, y):
        frame = np.full((48, 48, 3), 0.5, dtype=np.float32)
        frame[y : y + 16, x : x + 16] = DEFAULT_PLANTED[0].color
        return Tensor(frame), [BBox(x, y, x + 16, y + 16)]
    select_images = [scene(0, 0), scene(16, 16)]
    eval_images = [scene(32, 16), scene(8, 24)]
    grid = grid_params(["conv3"], [1], [0.92], [7, 5])
    rows = sweep(bb, select_images, eval_images, grid, "Point")
    assert len(rows) == 2
    assert sum(r.best for r in rows) == 1
    best = next(r for r in rows if r.best)
    assert best.f1 == max(r.f1 for r in rows)
    first_best_idx = [r.f1 for r in rows].index(max(r.f1 for r in rows))
    assert rows[first_best_idx].best
