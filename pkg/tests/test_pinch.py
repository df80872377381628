"""Frame buffer lookback, zoom head forward pass, and the distance baseline."""

import numpy as np
import pytest

from gesturekit.backbone import ActivationStack
from gesturekit.pinch import (
    FrameBuffer,
    PinchDistanceBaseline,
    PinchHeadWeights,
    ZoomAction,
    init_pinch_weights,
    load_pinch_weights,
    pinch_baseline,
    pinch_forward,
    save_pinch_weights,
)
from gesturekit.tensors import Tensor


def _stack(value, dims=(2, 4, 4)):
    return ActivationStack("conv3", Tensor(np.full(dims, value, dtype=np.float32)), (32, 32))


def test_zoom_action_labels_round_trip():
    for action in ZoomAction:
        assert ZoomAction.from_label(action.label) is action
    with pytest.raises(ValueError):
        ZoomAction.from_label("sideways")


def test_buffer_first_frame_pairs_with_itself():
    buf = FrameBuffer(3)
    s0 = _stack(0.0)
    current, past = buf.push(s0)
    assert current is s0 and past is s0


def test_buffer_warmup_then_exact_lookback():
    buf = FrameBuffer(3)
    stacks = [_stack(float(i)) for i in range(6)]
    pairs = [buf.push(s) for s in stacks]
    # Warm-up: oldest available; then exactly t - capacity.
    want_past = [0, 0, 0, 0, 1, 2]
    for t, (current, past) in enumerate(pairs):
        assert current is stacks[t]
        assert past is stacks[want_past[t]]
    assert len(buf) == 3
    buf.clear()
    assert len(buf) == 0


def test_buffer_capacity_validation():
    with pytest.raises(ValueError):
        FrameBuffer(0)


def test_pair_input_requires_matching_dims():
    weights = init_pinch_weights(2, (4, 4), seed=0)
    with pytest.raises(ValueError, match="dims differ"):
        pinch_forward(weights, _stack(1.0), _stack(1.0, dims=(2, 3, 3)))


def test_forward_probabilities_and_tie_rule():
    weights = init_pinch_weights(2, (4, 4), seed=1)
    probs, action = pinch_forward(weights, _stack(0.5), _stack(0.1))
    assert probs.shape == (3,)
    assert probs.sum() == pytest.approx(1.0)
    assert action is ZoomAction(int(np.argmax(probs))) or action is ZoomAction.NO_ZOOM

    # Identical stacks through zeroed output weights: exact three-way tie.
    tied = PinchHeadWeights(
        conv_w=weights.conv_w, bn_gamma=weights.bn_gamma, bn_beta=weights.bn_beta,
        bn_mean=weights.bn_mean, bn_var=weights.bn_var,
        fc1_w=weights.fc1_w, fc1_b=weights.fc1_b,
        fc2_w=np.zeros((3, 32)), fc2_b=np.zeros(3),
    )
    _, action = pinch_forward(tied, _stack(0.5), _stack(0.5))
    assert action is ZoomAction.NO_ZOOM


def test_forward_is_deterministic():
    weights = init_pinch_weights(2, (4, 4), seed=2)
    a, _ = pinch_forward(weights, _stack(0.3), _stack(0.9))
    b, _ = pinch_forward(weights, _stack(0.3), _stack(0.9))
    assert np.array_equal(a, b)


def test_baseline_thresholds_distance_change():
    # Separation grew 40 -> 50 px: zooming in.
    history = [((0.0, 0.0), (40.0, 0.0))]
    assert pinch_baseline((0.0, 0.0), (50.0, 0.0), history) is ZoomAction.ZOOM_IN
    assert pinch_baseline((0.0, 0.0), (30.0, 0.0), history) is ZoomAction.ZOOM_OUT
    assert pinch_baseline((0.0, 0.0), (42.0, 0.0), history) is ZoomAction.NO_ZOOM
    # At exactly the threshold nothing fires.
    assert pinch_baseline((0.0, 0.0), (43.0, 0.0), history) is ZoomAction.NO_ZOOM
    assert pinch_baseline((0.0, 0.0), (50.0, 0.0), []) is ZoomAction.NO_ZOOM


def test_baseline_is_antisymmetric():
    history = [((0.0, 0.0), (40.0, 0.0))]
    grown = pinch_baseline((0.0, 0.0), (48.0, 0.0), history)
    shrunk = pinch_baseline((0.0, 0.0), (32.0, 0.0), history)
    assert {grown, shrunk} == {ZoomAction.ZOOM_IN, ZoomAction.ZOOM_OUT}


def test_stateful_baseline_compares_d_frames_back():
    base = PinchDistanceBaseline(d=2)
    assert base.step((0.0, 0.0), (40.0, 0.0)) is ZoomAction.NO_ZOOM  # warm-up
    assert base.step((0.0, 0.0), (44.0, 0.0)) is ZoomAction.NO_ZOOM  # warm-up
    # Now compared against the first observation (40): 50 - 40 > 3.
    assert base.step((0.0, 0.0), (50.0, 0.0)) is ZoomAction.ZOOM_IN
    # Against the second (44): 44 - 44 = 0.
    assert base.step((0.0, 0.0), (44.0, 0.0)) is ZoomAction.NO_ZOOM


def test_weights_save_load_round_trip(tmp_path):
    weights = init_pinch_weights(2, (4, 4), seed=3)
    save_pinch_weights(weights, tmp_path)
    back = load_pinch_weights(tmp_path / "pinch.json")
    current, past = _stack(0.2), _stack(0.8)
    p1, a1 = pinch_forward(weights, current, past)
    p2, a2 = pinch_forward(back, current, past)
    assert a1 is a2
    assert p1 == pytest.approx(p2, abs=1e-6)


def test_weights_validation():
    with pytest.raises(ValueError, match="3 units"):
        init_pinch_weights(2, (4, 4)).__class__(
            conv_w=np.zeros((4, 4, 3, 3)), bn_gamma=np.ones(4), bn_beta=np.zeros(4),
            bn_mean=np.zeros(4), bn_var=np.ones(4),
            fc1_w=np.zeros((8, 16)), fc1_b=np.zeros(8),
            fc2_w=np.zeros((2, 8)), fc2_b=np.zeros(2),
        )
    with pytest.raises(ValueError, match="variance"):
        PinchHeadWeights(
            conv_w=np.zeros((4, 4, 3, 3)), bn_gamma=np.ones(4), bn_beta=np.zeros(4),
            bn_mean=np.zeros(4), bn_var=-np.ones(4),
            fc1_w=np.zeros((8, 16)), fc1_b=np.zeros(8),
            fc2_w=np.zeros((3, 8)), fc2_b=np.zeros(3),
        )
