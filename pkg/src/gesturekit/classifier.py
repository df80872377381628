"""Gesture label registry, dense softmax classification, and head routing."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .atn import load_tensor_dict, save_tensor_dict
from .backbone import FeatureVector
from .tensors import Tensor


class HeadKind(enum.Enum):
    LOCALIZATION = "localization"
    CAPTION = "caption"
    PINCH = "pinch"
    NONE = "none"


@dataclass(frozen=True)
class GestureLabel:
    name: str
    index: int
    negative: bool = False
    head: HeadKind = HeadKind.NONE


class LabelRegistry:
    """Append-only label set; index order is the classifier's output order."""

    def __init__(self) -> None:
        self._labels: list[GestureLabel] = []
        self._by_name: dict[str, GestureLabel] = {}

    def register(self, name: str, negative: bool = False, head: HeadKind | None = None) -> GestureLabel:
        if name in self._by_name:
            raise ValueError(f"label {name!r} already registered")
        if head is None:
            head = HeadKind.NONE
        if negative and head is not HeadKind.NONE:
            raise ValueError(f"negative label {name!r} cannot bind a head")
        label = GestureLabel(name, len(self._labels), negative, head)
        self._labels.append(label)
        self._by_name[name] = label
        return label

    def by_name(self, name: str) -> GestureLabel:
        try:
            return self._by_name[name]
        except KeyError:
            raise KeyError(f"unregistered label {name!r}") from None

    def by_index(self, index: int) -> GestureLabel:
        if not 0 <= index < len(self._labels):
            raise IndexError(f"label index {index} out of range")
        return self._labels[index]

    def __len__(self) -> int:
        return len(self._labels)

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    @property
    def labels(self) -> tuple[GestureLabel, ...]:
        return tuple(self._labels)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(l.name for l in self._labels)


def default_registry() -> LabelRegistry:
    """Point, Drag, Loupe, Pinch plus the two negative classes Other and None."""
    reg = LabelRegistry()
    reg.register("Point", head=HeadKind.LOCALIZATION)
    reg.register("Drag", head=HeadKind.LOCALIZATION)
    reg.register("Loupe", head=HeadKind.CAPTION)
    reg.register("Pinch", head=HeadKind.PINCH)
    reg.register("Other", negative=True)
    reg.register("None", negative=True)
    return reg


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


@dataclass(frozen=True)
class DenseSoftmaxHead:
    """Single dense layer over pooled features, softmax over registered labels."""

    weights: np.ndarray  # (n_labels, feature_dim)
    biases: np.ndarray  # (n_labels,)

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.biases, dtype=np.float64)
        if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
            raise ValueError(f"inconsistent head shapes: weights {w.shape}, biases {b.shape}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValueError("head weights must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)

    @property
    def n_labels(self) -> int:
        return self.weights.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class RoutingDecision:
    probabilities: np.ndarray  # (n_labels,), sums to 1
    one_hot: np.ndarray  # (n_labels,), exactly one 1
    label: GestureLabel


def classify(head: DenseSoftmaxHead, features: FeatureVector, registry: LabelRegistry) -> RoutingDecision:
    """Softmax over labels; argmax wins, ties resolved to the lowest index."""
    if head.n_labels != len(registry):
        raise ValueError(f"head has {head.n_labels} outputs but registry has {len(registry)} labels")
    x = features.values.array.astype(np.float64)
    if x.shape[0] != head.feature_dim:
        raise ValueError(f"feature dim {x.shape[0]} does not match head dim {head.feature_dim}")
    probs = softmax(head.weights @ x + head.biases)
    idx = int(np.argmax(probs))  # np.argmax returns the first maximum
    one_hot = np.zeros(len(probs))
    one_hot[idx] = 1.0
    return RoutingDecision(probs, one_hot, registry.by_index(idx))


def route(decision: RoutingDecision, registry: LabelRegistry) -> HeadKind:
    """Map the decided label to the specialized head that should run."""
    label = decision.label
    if label.name not in registry or registry.by_name(label.name) != label:
        raise KeyError(f"label {label.name!r} is not from this registry")
    if label.negative:
        return HeadKind.NONE
    return label.head


def save_classifier(head: DenseSoftmaxHead, directory) -> None:
    save_tensor_dict(
        {"W": Tensor(head.weights), "b": Tensor(head.biases)}, directory, "classifier.json"
    )


def load_classifier(manifest_path) -> DenseSoftmaxHead:
    tensors = load_tensor_dict(manifest_path)
    if set(tensors) != {"W", "b"}:
        raise ValueError(f"classifier manifest must hold W and b, got {sorted(tensors)}")
    return DenseSoftmaxHead(tensors["W"].array, tensors["b"].array)
