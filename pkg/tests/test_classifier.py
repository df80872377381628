"""Dense softmax head, label registry, and head routing."""

import math

import numpy as np
import pytest

from gesturekit.backbone import FeatureVector
from gesturekit.classifier import (
    DenseSoftmaxHead,
    HeadKind,
    LabelRegistry,
    classify,
    default_registry,
    load_classifier,
    route,
    save_classifier,
    softmax,
)
from gesturekit.tensors import Tensor


def test_default_registry_layout():
    reg = default_registry()
    assert reg.names == ("Point", "Drag", "Loupe", "Pinch", "Other", "None")
    assert [l.negative for l in reg.labels] == [False, False, False, False, True, True]
    assert reg.by_name("Point").head is HeadKind.LOCALIZATION
    assert reg.by_name("Drag").head is HeadKind.LOCALIZATION
    assert reg.by_name("Loupe").head is HeadKind.CAPTION
    assert reg.by_name("Pinch").head is HeadKind.PINCH
    assert reg.by_name("Other").head is HeadKind.NONE


def test_registry_rejects_duplicates_and_negative_heads():
    reg = LabelRegistry()
    reg.register("A")
    with pytest.raises(ValueError, match="already"):
        reg.register("A")
    with pytest.raises(ValueError, match="cannot bind"):
        reg.register("B", negative=True, head=HeadKind.CAPTION)
    with pytest.raises(KeyError):
        reg.by_name("missing")


def test_softmax_frozen_value():
    # e^10 against five e^0 terms.
    probs = softmax(np.array([10.0, 0, 0, 0, 0, 0]))
    want = math.exp(10) / (math.exp(10) + 5)
    assert probs[0] == pytest.approx(want, rel=1e-12)
    assert probs.sum() == pytest.approx(1.0)


def test_softmax_shift_invariance():
    z = np.array([1.0, 2.0, 3.0])
    assert softmax(z) == pytest.approx(softmax(z + 1000.0))


def test_classify_picks_argmax_and_one_hot():
    reg = default_registry()
    w = np.zeros((6, 4))
    w[2, 0] = 5.0  # feature 0 drives Loupe
    head = DenseSoftmaxHead(w, np.zeros(6))
    decision = classify(head, FeatureVector(Tensor([1.0, 0, 0, 0])), reg)
    assert decision.label.name == "Loupe"
    assert decision.one_hot.tolist() == [0, 0, 1, 0, 0, 0]
    assert decision.probabilities.sum() == pytest.approx(1.0)
    assert int(decision.one_hot.sum()) == 1


def test_classify_tie_goes_to_lowest_index():
    reg = default_registry()
    head = DenseSoftmaxHead(np.zeros((6, 3)), np.zeros(6))
    decision = classify(head, FeatureVector(Tensor([0.5, 0.5, 0.5])), reg)
    assert decision.label.name == "Point"


def test_classify_validates_dimensions():
    reg = default_registry()
    with pytest.raises(ValueError, match="outputs"):
        classify(DenseSoftmaxHead(np.zeros((5, 3)), np.zeros(5)), FeatureVector(Tensor([1.0, 0, 0])), reg)
    with pytest.raises(ValueError, match="feature dim"):
        classify(DenseSoftmaxHead(np.zeros((6, 4)), np.zeros(6)), FeatureVector(Tensor([1.0, 0, 0])), reg)


def test_route_negative_runs_nothing():
    reg = default_registry()
    head = DenseSoftmaxHead(np.eye(6), np.zeros(6))
    other = classify(head, FeatureVector(Tensor([0, 0, 0, 0, 9.0, 0])), reg)
    assert other.label.name == "Other"
    assert route(other, reg) is HeadKind.NONE
    none = classify(head, FeatureVector(Tensor([0, 0, 0, 0, 0, 9.0])), reg)
    assert route(none, reg) is HeadKind.NONE
    pinch = classify(head, FeatureVector(Tensor([0, 0, 0, 9.0, 0, 0])), reg)
    assert route(pinch, reg) is HeadKind.PINCH


def test_route_rejects_foreign_labels():
    reg = default_registry()
    foreign = LabelRegistry()
    foreign.register("Zap")
    head = DenseSoftmaxHead(np.zeros((1, 2)), np.zeros(1))
    decision = classify(head, FeatureVector(Tensor([1.0, 1.0])), foreign)
    with pytest.raises(KeyError):
        route(decision, reg)


def test_head_weights_validation():
    with pytest.raises(ValueError):
        DenseSoftmaxHead(np.zeros((3, 2)), np.zeros(4))
    with pytest.raises(ValueError):
        DenseSoftmaxHead(np.full((2, 2), np.nan), np.zeros(2))


def test_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(12)
    head = DenseSoftmaxHead(rng.standard_normal((6, 8)), rng.standard_normal(6))
    save_classifier(head, tmp_path)
    back = load_classifier(tmp_path / "classifier.json")
    assert np.array_equal(back.weights, head.weights.astype(np.float32).astype(np.float64))
    assert np.array_equal(back.biases, head.biases.astype(np.float32).astype(np.float64))
