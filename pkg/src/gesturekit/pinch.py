"""Zoom head for the dynamic pinch gesture, plus the fingertip-distance baseline.

The head compares the current frame's activation stack with the one d
frames back (channel concatenation), so motion direction is recoverable
without any recurrent state.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass
from math import hypot
from typing import Sequence

import numpy as np

from . import nnops
from .atn import load_tensor_dict, save_tensor_dict
from .backbone import ActivationStack
from .tensors import Tensor

DEFAULT_LOOKBACK = 5
BASELINE_THRESHOLD_PX = 3.0


class ZoomAction(enum.IntEnum):
    ZOOM_IN = 0
    ZOOM_OUT = 1
    NO_ZOOM = 2

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, label: str) -> "ZoomAction":
        try:
            return cls[label.upper()]
        except KeyError:
            raise ValueError(f"unknown zoom label {label!r}") from None


class FrameBuffer:
    """Ring of the last `capacity` activation stacks.

    push() reads the comparison frame before inserting, so with a full
    buffer the returned pair is exactly (t, t - capacity). During warm-up
    the oldest available frame stands in; the very first frame pairs with
    itself.
    """

    def __init__(self, capacity: int) -> None:
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._ring: deque[ActivationStack] = deque(maxlen=capacity)

    def push(self, stack: ActivationStack) -> tuple[ActivationStack, ActivationStack]:
        past = self._ring[0] if self._ring else stack
        self._ring.append(stack)
        return stack, past

    def __len__(self) -> int:
        return len(self._ring)

    def clear(self) -> None:
        self._ring.clear()


def buffer_push(buf: FrameBuffer, stack: ActivationStack) -> tuple[ActivationStack, ActivationStack]:
    return buf.push(stack)


@dataclass
class PinchHeadWeights:
    """Conv + batch-norm + pooled dense stack mapping a frame pair to 3 logits."""

    conv_w: np.ndarray  # (filters, 2 * stack_channels, 3, 3)
    bn_gamma: np.ndarray
    bn_beta: np.ndarray
    bn_mean: np.ndarray  # running statistics used at inference
    bn_var: np.ndarray
    fc1_w: np.ndarray  # (fc_units, filters * (h // 2) * (w // 2))
    fc1_b: np.ndarray
    fc2_w: np.ndarray  # (3, fc_units)
    fc2_b: np.ndarray

    def __post_init__(self) -> None:
        for name in ("conv_w", "bn_gamma", "bn_beta", "bn_mean", "bn_var", "fc1_w", "fc1_b", "fc2_w", "fc2_b"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be finite")
            setattr(self, name, arr)
        if np.any(self.bn_var < 0):
            raise ValueError("batch-norm variance must be >= 0")
        if self.fc2_w.shape[0] != 3 or self.fc2_b.shape != (3,):
            raise ValueError("output layer must have exactly 3 units")


def init_pinch_weights(
    in_channels: int,
    in_hw: tuple[int, int],
    seed: int = 0,
    filters: int = 64,
    fc_units: int = 32,
    init_scale: float = 0.05,
) -> PinchHeadWeights:
    """Uniform +/-init_scale weights; batch-norm starts as the identity."""
    rng = np.random.default_rng(seed)
    h, w = in_hw
    flat = filters * (h // 2) * (w // 2)
    if flat < 1:
        raise ValueError(f"pooled stack collapses to nothing for maps of {h}x{w}")
    u = lambda *shape: rng.uniform(-init_scale, init_scale, size=shape)
    return PinchHeadWeights(
        conv_w=u(filters, 2 * in_channels, 3, 3),
        bn_gamma=np.ones(filters),
        bn_beta=np.zeros(filters),
        bn_mean=np.zeros(filters),
        bn_var=np.ones(filters),
        fc1_w=u(fc_units, flat),
        fc1_b=np.zeros(fc_units),
        fc2_w=u(3, fc_units),
        fc2_b=np.zeros(3),
    )


def _pair_input(current: ActivationStack, past: ActivationStack) -> np.ndarray:
    if current.maps.dims != past.maps.dims:
        raise ValueError(
            f"stack dims differ: {current.maps.dims} vs {past.maps.dims}"
        )
    return np.concatenate(
        [current.maps.array.astype(np.float64), past.maps.array.astype(np.float64)], axis=0
    )


def pinch_logits(weights: PinchHeadWeights, x: np.ndarray, train_stats: bool = False):
    """Forward pass over a batch (n, 2c, h, w); see training for the backward."""
    conv, conv_cache = nnops.conv3x3(x, weights.conv_w)
    if train_stats:
        normed, bn_cache, mean, var = nnops.batchnorm_train(conv, weights.bn_gamma, weights.bn_beta)
    else:
        normed = nnops.batchnorm_infer(conv, weights.bn_gamma, weights.bn_beta, weights.bn_mean, weights.bn_var)
        bn_cache, mean, var = None, None, None
    pooled, pool_cache = nnops.maxpool2(normed)
    n = pooled.shape[0]
    flat = pooled.reshape(n, -1)
    if flat.shape[1] != weights.fc1_w.shape[1]:
        raise ValueError(
            f"flattened size {flat.shape[1]} does not match fc1 input {weights.fc1_w.shape[1]}"
        )
    z1 = nnops.dense(flat, weights.fc1_w, weights.fc1_b)
    a1 = nnops.relu(z1)
    logits = nnops.dense(a1, weights.fc2_w, weights.fc2_b)
    cache = (conv_cache, bn_cache, pool_cache, flat, z1, a1, mean, var)
    return logits, cache


def _decide(probs: np.ndarray) -> ZoomAction:
    # Ties go to NO_ZOOM when it participates, else to the lowest index.
    if probs[ZoomAction.NO_ZOOM] == probs.max():
        return ZoomAction.NO_ZOOM
    return ZoomAction(int(np.argmax(probs)))


def pinch_forward(
    weights: PinchHeadWeights, current: ActivationStack, past: ActivationStack
) -> tuple[np.ndarray, ZoomAction]:
    """Class probabilities and the decided action for one frame pair."""
    x = _pair_input(current, past)[None]
    logits, _ = pinch_logits(weights, x, train_stats=False)
    probs = nnops.softmax_rows(logits)[0]
    return probs, _decide(probs)


def pinch_baseline(
    thumb_tip: tuple[float, float],
    index_tip: tuple[float, float],
    history: Sequence[tuple[tuple[float, float], tuple[float, float]]],
    threshold: float = BASELINE_THRESHOLD_PX,
) -> ZoomAction:
    """Threshold the distance change against the oldest frame in `history`.

    With no history there is nothing to compare against: NO_ZOOM.
    """
    if not history:
        return ZoomAction.NO_ZOOM
    now = hypot(thumb_tip[0] - index_tip[0], thumb_tip[1] - index_tip[1])
    old_thumb, old_index = history[0]
    before = hypot(old_thumb[0] - old_index[0], old_thumb[1] - old_index[1])
    delta = now - before
    if delta > threshold:
        return ZoomAction.ZOOM_IN
    if delta < -threshold:
        return ZoomAction.ZOOM_OUT
    return ZoomAction.NO_ZOOM


class PinchDistanceBaseline:
    """Stateful wrapper: compares against the observation exactly d frames back."""

    def __init__(self, d: int = DEFAULT_LOOKBACK, threshold: float = BASELINE_THRESHOLD_PX) -> None:
        if d < 1:
            raise ValueError(f"d must be >= 1, got {d}")
        self.d = d
        self.threshold = threshold
        self._ring: deque = deque(maxlen=d)

    def step(self, thumb_tip: tuple[float, float], index_tip: tuple[float, float]) -> ZoomAction:
        if len(self._ring) < self.d:
            self._ring.append((thumb_tip, index_tip))
            return ZoomAction.NO_ZOOM
        action = pinch_baseline(thumb_tip, index_tip, [self._ring[0]], self.threshold)
        self._ring.append((thumb_tip, index_tip))
        return action


_PINCH_TENSOR_NAMES = (
    "conv_w", "bn_gamma", "bn_beta", "bn_mean", "bn_var", "fc1_w", "fc1_b", "fc2_w", "fc2_b",
)


def save_pinch_weights(weights: PinchHeadWeights, directory) -> None:
    save_tensor_dict(
        {name: Tensor(getattr(weights, name)) for name in _PINCH_TENSOR_NAMES},
        directory,
        "pinch.json",
    )


def load_pinch_weights(manifest_path) -> PinchHeadWeights:
    tensors = load_tensor_dict(manifest_path)
    missing = set(_PINCH_TENSOR_NAMES) - set(tensors)
    if missing:
        raise ValueError(f"pinch manifest missing tensors: {sorted(missing)}")
    return PinchHeadWeights(**{name: tensors[name].array for name in _PINCH_TENSOR_NAMES})
