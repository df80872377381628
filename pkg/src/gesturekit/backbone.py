"""Backbone contract, a seed-deterministic synthetic backbone, and pooled features.

The synthetic backbone exists so every downstream stage can be exercised
against exact, analytically known ground truth: a small seeded conv stack
provides realistic-looking activations, while a handful of planted color
detectors occupy the first filter slots of the last layer and fire exactly
on their stimulus patches.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from .tensors import Tensor

__all__ = [
    "ActivationStack",
    "FeatureVector",
    "BackboneContract",
    "PlantedDetector",
    "SyntheticBackbone",
    "DEFAULT_PLANTED",
    "PLANTED_MARGIN",
    "forward",
    "global_average_pool",
]


@dataclass(frozen=True)
class ActivationStack:
    """Per-filter 2-D activation maps from one named layer."""

    layer_name: str
    maps: Tensor  # (n_filters, h', w')
    source_extent: tuple[int, int]  # (w, h) of the frame that produced it

    def __post_init__(self) -> None:
        if len(self.maps.dims) != 3:
            raise ValueError(f"activation stack must be 3-D, got dims {self.maps.dims}")
        n, mh, mw = self.maps.dims
        w, h = self.source_extent
        if mw > w or mh > h:
            raise ValueError(
                f"map extent {mw}x{mh} exceeds source extent {w}x{h} for layer {self.layer_name!r}"
            )

    @property
    def n_filters(self) -> int:
        return self.maps.dims[0]


@dataclass(frozen=True)
class FeatureVector:
    """Globally pooled per-filter means, the classifier head's input."""

    values: Tensor

    def __post_init__(self) -> None:
        if len(self.values.dims) != 1:
            raise ValueError(f"feature vector must be 1-D, got dims {self.values.dims}")
        if not np.all(np.isfinite(self.values.array)):
            raise ValueError("feature vector must be finite")


@runtime_checkable
class BackboneContract(Protocol):
    """Anything that can turn a frame into named activation stacks plus features."""

    @property
    def extent(self) -> tuple[int, int]: ...

    @property
    def layer_names(self) -> tuple[str, ...]: ...

    def forward(
        self, frame: Tensor, layers: Sequence[str] | None = None
    ) -> tuple[dict[str, ActivationStack], FeatureVector]: ...


def global_average_pool(stack: ActivationStack) -> FeatureVector:
    """Mean of each filter map; the pooled vector feeding the classifier."""
    means = stack.maps.array.astype(np.float64).mean(axis=(1, 2))
    return FeatureVector(Tensor(means))


@dataclass(frozen=True)
class PlantedDetector:
    """Analytic color detector occupying one filter slot of the last layer.

    Its map is 1.0 on every output cell whose receptive block contains at
    least one pixel within `tolerance` (per channel) of `color`, else 0.0.
    """

    name: str
    color: tuple[float, float, float]
    tolerance: float = 0.12


# Any planted activation >= this margin means the detector fired there.
PLANTED_MARGIN = 0.5

DEFAULT_PLANTED = (
    PlantedDetector("point", (0.90, 0.10, 0.10)),
    PlantedDetector("drag", (0.10, 0.80, 0.20)),
    PlantedDetector("loupe", (0.15, 0.25, 0.90)),
    PlantedDetector("pinch", (0.95, 0.85, 0.10)),
    PlantedDetector("other", (0.85, 0.15, 0.80)),
)


def _conv3x3_s2_relu(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    # x: (C, H, W), w: (F, C, 3, 3); stride 2, zero pad 1, ReLU. Zero bias by
    # construction so an all-zero frame stays all-zero through the stack.
    c, h, wd = x.shape
    xp = np.zeros((c, h + 2, wd + 2), dtype=np.float32)
    xp[:, 1:-1, 1:-1] = x
    ho, wo = (h + 1) // 2, (wd + 1) // 2
    cols = np.empty((c * 9, ho * wo), dtype=np.float32)
    k = 0
    for ci in range(c):
        for dy in range(3):
            for dx in range(3):
                cols[k] = xp[ci, dy : dy + 2 * ho : 2, dx : dx + 2 * wo : 2].reshape(-1)
                k += 1
    out = w.reshape(w.shape[0], -1) @ cols
    np.maximum(out, 0.0, out=out)
    return out.reshape(w.shape[0], ho, wo)


class SyntheticBackbone:
    """Three stride-2 conv stages (16/32/64 filters of 3x3) with seeded weights.

    Outputs are a pure function of (seed, frame): weights come from a seeded
    generator and evaluation order is fixed, so repeated forwards are
    bit-identical. Planted detectors, if any, replace the leading filters of
    the last stage.
    """

    STAGE_FILTERS = (16, 32, 64)

    def __init__(
        self,
        seed: int = 0,
        extent: tuple[int, int] = (224, 224),
        planted: Sequence[PlantedDetector] = DEFAULT_PLANTED,
    ) -> None:
        w, h = extent
        if w % 8 != 0 or h % 8 != 0 or w < 8 or h < 8:
            raise ValueError(f"extent must be a positive multiple of 8, got {extent}")
        if len(planted) >= self.STAGE_FILTERS[-1]:
            raise ValueError("too many planted detectors for the last stage")
        self._extent = (w, h)
        self._planted = tuple(planted)
        self._seed = seed
        rng = np.random.default_rng(seed)
        self._weights = []
        in_ch = 3
        for out_ch in self.STAGE_FILTERS:
            scale = 1.0 / np.sqrt(9.0 * in_ch)
            self._weights.append(
                rng.uniform(-scale, scale, size=(out_ch, in_ch, 3, 3)).astype(np.float32)
            )
            in_ch = out_ch

    @property
    def extent(self) -> tuple[int, int]:
        return self._extent

    @property
    def seed(self) -> int:
        return self._seed

    @property
    def layer_names(self) -> tuple[str, ...]:
        return tuple(f"conv{i + 1}" for i in range(len(self.STAGE_FILTERS)))

    @property
    def planted(self) -> tuple[PlantedDetector, ...]:
        return self._planted

    def _planted_maps(self, frame: np.ndarray, mh: int, mw: int) -> np.ndarray:
        h, w, _ = frame.shape
        by, bx = h // mh, w // mw
        out = np.zeros((len(self._planted), mh, mw), dtype=np.float32)
        for i, det in enumerate(self._planted):
            color = np.asarray(det.color, dtype=np.float32)
            hit = np.all(np.abs(frame - color) <= det.tolerance, axis=2)
            # Block max: a cell fires iff any pixel in its receptive block hits.
            out[i] = hit.reshape(mh, by, mw, bx).any(axis=(1, 3))
        return out

    def forward(
        self, frame: Tensor, layers: Sequence[str] | None = None
    ) -> tuple[dict[str, ActivationStack], FeatureVector]:
        w, h = self._extent
        if frame.dims != (h, w, 3):
            raise ValueError(f"frame dims {frame.dims} do not match extent {w}x{h}x3")
        arr = frame.array
        if not np.all(np.isfinite(arr)):
            raise ValueError("frame values must be finite")
        names = self.layer_names
        if layers is None:
            layers = (names[-1],)
        unknown = [l for l in layers if l not in names]
        if unknown:
            raise ValueError(f"unknown layer(s) {unknown}, have {list(names)}")

        x = np.ascontiguousarray(arr.transpose(2, 0, 1))
        stage_out: dict[str, np.ndarray] = {}
        for name, wts in zip(names, self._weights):
            x = _conv3x3_s2_relu(x, wts)
            stage_out[name] = x
        if self._planted:
            last = stage_out[names[-1]].copy()
            last[: len(self._planted)] = self._planted_maps(arr, last.shape[1], last.shape[2])
            stage_out[names[-1]] = last

        stacks = {
            name: ActivationStack(name, Tensor(stage_out[name]), self._extent) for name in layers
        }
        final = ActivationStack(names[-1], Tensor(stage_out[names[-1]]), self._extent)
        return stacks, global_average_pool(final)


def forward(
    backbone: BackboneContract, frame: Tensor, layers: Sequence[str] | None = None
) -> tuple[dict[str, ActivationStack], FeatureVector]:
    """One full pass: requested activation stacks plus the pooled feature vector."""
    return backbone.forward(frame, layers)
