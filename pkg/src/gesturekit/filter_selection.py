"""Training-free fingertip localization from selected backbone filters.

Selection scores every filter of a layer by how well the blobs of its
thresholded activation map overlap class ground truth, then keeps either
the filters above a score cutoff or the n best. Localization averages the
selected filters' rescaled maps and reads boxes off the same thresholding
pipeline. Inference only: nothing here computes a gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .backbone import ActivationStack, BackboneContract
from .tensors import BBox, BinaryMask, Tensor, blobs, dilate, match_iou, resample_bilinear

__all__ = [
    "FSParams",
    "FilterSet",
    "LocalizationResult",
    "SweepRow",
    "rescale_unit",
    "filter_predictions",
    "select_filters",
    "select_filters_from_stacks",
    "localize",
    "localize_stack",
    "sweep",
    "grid_params",
    "save_filter_set",
    "load_filter_set",
]


@dataclass(frozen=True)
class FSParams:
    """Selection and thresholding knobs.

    Exactly one of `alpha` (keep scores strictly above the cutoff) or
    `top_n` (keep the n best scores) must be set.
    """

    layer_name: str = "conv3"
    alpha: float | None = None
    top_n: int | None = 4
    beta: float = 0.92
    kernel: int = 7
    min_area: int = 1

    def __post_init__(self) -> None:
        if (self.alpha is None) == (self.top_n is None):
            raise ValueError("exactly one of alpha / top_n must be set")
        if self.alpha is not None and not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.top_n is not None and self.top_n < 1:
            raise ValueError(f"top_n must be >= 1, got {self.top_n}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ValueError(f"kernel must be odd and >= 1, got {self.kernel}")
        if self.min_area < 1:
            raise ValueError(f"min_area must be >= 1, got {self.min_area}")


@dataclass(frozen=True)
class FilterSet:
    """Selected filter indices with their selection scores, best first."""

    class_label: str
    layer_name: str
    entries: tuple[tuple[int, float], ...]

    def __post_init__(self) -> None:
        idxs = [i for i, _ in self.entries]
        if len(set(idxs)) != len(idxs):
            raise ValueError("filter indices must be unique")
        scores = [s for _, s in self.entries]
        if any(not 0.0 <= s <= 1.0 for s in scores):
            raise ValueError("scores must lie in [0, 1]")
        if any(scores[i] < scores[i + 1] for i in range(len(scores) - 1)):
            raise ValueError("entries must be sorted by descending score")

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(i for i, _ in self.entries)

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class LocalizationResult:
    boxes: tuple[BBox, ...]
    heat: Tensor  # frame-extent mean of the selected rescaled maps


def rescale_unit(map2d: np.ndarray) -> np.ndarray:
    """Min-max rescale to [0, 1]; a constant map becomes all zeros."""
    arr = np.asarray(map2d, dtype=np.float64)
    lo = arr.min()
    hi = arr.max()
    if hi == lo:
        return np.zeros_like(arr)
    return (arr - lo) / (hi - lo)


def _boxes_from_unit_map(
    unit_map: np.ndarray, extent: tuple[int, int], beta: float, kernel: int, min_area: int
) -> list[BBox]:
    # Fixed order: resize to the frame extent first so beta thresholds the
    # same intensities regardless of map resolution, then dilate, then blobs.
    # Thresholding stays in float64; the f32 tensor boundary would flip
    # pixels within one ulp of beta.
    w, h = extent
    resized = resample_bilinear(unit_map, w, h)
    mask = dilate(BinaryMask(resized > beta), kernel)
    return blobs(mask, min_area)


def filter_predictions(
    map2d, extent: tuple[int, int], beta: float = 0.92, kernel: int = 7, min_area: int = 1
) -> list[BBox]:
    """Boxes predicted by a single activation map at the frame extent."""
    arr = map2d.array if isinstance(map2d, Tensor) else np.asarray(map2d)
    if arr.ndim != 2:
        raise ValueError(f"activation map must be 2-D, got {arr.ndim} dims")
    if extent[0] < 1 or extent[1] < 1:
        raise ValueError(f"bad extent {extent}")
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must be in [0, 1], got {beta}")
    return _boxes_from_unit_map(rescale_unit(arr), extent, beta, kernel, min_area)


def score_filters(
    stacks: Sequence[ActivationStack], truths: Sequence[Sequence[BBox]], params: FSParams
) -> np.ndarray:
    """Per-filter mean overlap score across the labeled images."""
    if len(stacks) == 0:
        raise ValueError("need at least one labeled image")
    if len(stacks) != len(truths):
        raise ValueError(f"{len(stacks)} stacks vs {len(truths)} truth lists")
    n_filters = stacks[0].n_filters
    extent = stacks[0].source_extent
    totals = np.zeros(n_filters)
    for stack, boxes in zip(stacks, truths):
        if stack.n_filters != n_filters or stack.source_extent != extent:
            raise ValueError("stacks must share filter count and extent")
        if not boxes:
            raise ValueError("every image needs at least one ground-truth box")
        maps = stack.maps.array
        for f in range(n_filters):
            preds = filter_predictions(maps[f], extent, params.beta, params.kernel, params.min_area)
            totals[f] += match_iou(preds, boxes)
    return totals / len(stacks)


def _select(scores: np.ndarray, params: FSParams) -> list[tuple[int, float]]:
    if params.alpha is not None:
        picked = [(i, float(s)) for i, s in enumerate(scores) if s > params.alpha]
    else:
        order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
        picked = [(i, float(scores[i])) for i in order[: params.top_n]]
    picked.sort(key=lambda e: (-e[1], e[0]))
    return picked


def select_filters_from_stacks(
    stacks: Sequence[ActivationStack],
    truths: Sequence[Sequence[BBox]],
    params: FSParams,
    class_label: str,
) -> FilterSet:
    """Score every filter of the precomputed stacks and keep the chosen ones."""
    scores = score_filters(stacks, truths, params)
    return FilterSet(class_label, stacks[0].layer_name, tuple(_select(scores, params)))


def select_filters(
    backbone: BackboneContract,
    layer_name: str,
    images: Sequence[tuple[Tensor, Sequence[BBox]]],
    params: FSParams,
    class_label: str,
) -> FilterSet:
    """Run the backbone over labeled images, then select filters for the class."""
    if not images:
        raise ValueError("need at least one labeled image")
    stacks = []
    truths = []
    for frame, boxes in images:
        layer_stacks, _ = backbone.forward(frame, [layer_name])
        stacks.append(layer_stacks[layer_name])
        truths.append(list(boxes))
    return select_filters_from_stacks(stacks, truths, params, class_label)


def localize_stack(stack: ActivationStack, fset: FilterSet, params: FSParams) -> LocalizationResult:
    """Boxes from the mean of the selected filters' rescaled maps.

    The mean map is thresholded directly (no second rescale), so a
    single-filter set reproduces filter_predictions exactly.
    """
    if len(fset) == 0:
        raise ValueError("filter set is empty")
    if stack.layer_name != fset.layer_name:
        raise ValueError(f"stack layer {stack.layer_name!r} != set layer {fset.layer_name!r}")
    maps = stack.maps.array
    for idx in fset.indices:
        if not 0 <= idx < maps.shape[0]:
            raise ValueError(f"filter index {idx} out of range for {maps.shape[0]} filters")
    mean_map = np.mean([rescale_unit(maps[i]) for i in fset.indices], axis=0)
    w, h = stack.source_extent
    heat = resample_bilinear(mean_map, w, h)
    mask = dilate(BinaryMask(heat > params.beta), params.kernel)
    boxes = blobs(mask, params.min_area)
    return LocalizationResult(tuple(boxes), Tensor(heat))


def localize(
    backbone: BackboneContract, frame: Tensor, fset: FilterSet, params: FSParams
) -> LocalizationResult:
    stacks, _ = backbone.forward(frame, [fset.layer_name])
    return localize_stack(stacks[fset.layer_name], fset, params)


def box_confidence(result: LocalizationResult, box: BBox) -> float:
    """Mean heat inside the box, the ranking surrogate for detection metrics."""
    return float(result.heat.array[box.y0 : box.y1, box.x0 : box.x1].mean())


@dataclass(frozen=True)
class SweepRow:
    params: FSParams
    f1: float
    n_selected: int
    best: bool = False


def grid_params(
    layers: Sequence[str],
    top_ns: Sequence[int],
    betas: Sequence[float],
    kernels: Sequence[int],
    min_area: int = 1,
) -> list[FSParams]:
    """Cross product of the swept axes, in deterministic field order."""
    grid = [
        FSParams(layer_name=l, top_n=n, alpha=None, beta=b, kernel=s, min_area=min_area)
        for l in layers
        for n in top_ns
        for b in betas
        for s in kernels
    ]
    if not grid:
        raise ValueError("sweep grid is empty")
    return grid


def sweep(
    backbone: BackboneContract,
    select_images: Sequence[tuple[Tensor, Sequence[BBox]]],
    eval_images: Sequence[tuple[Tensor, Sequence[BBox]]],
    grid: Iterable[FSParams],
    class_label: str,
    lam: float = 0.5,
) -> list[SweepRow]:
    """Select on one image set, score detection F1 on another, per grid entry."""
    from .metrics import DetectionRecord, detection_f1

    grid = list(grid)
    if not grid:
        raise ValueError("sweep grid is empty")
    rows = []
    for params in grid:
        fset = select_filters(backbone, params.layer_name, select_images, params, class_label)
        records = []
        for frame, boxes in eval_images:
            result = localize(backbone, frame, fset, params)
            preds = [(b, box_confidence(result, b)) for b in result.boxes]
            records.append(DetectionRecord(preds, list(boxes)))
        rows.append(SweepRow(params, detection_f1(records, lam), len(fset)))
    best_idx = max(range(len(rows)), key=lambda i: (rows[i].f1, -i))
    rows[best_idx] = replace(rows[best_idx], best=True)
    return rows


def save_filter_set(fset: FilterSet, path) -> None:
    lines = [f"class {fset.class_label}", f"layer {fset.layer_name}"]
    lines += [f"{idx} {score:.6f}" for idx, score in fset.entries]
    Path(path).write_text("\n".join(lines) + "\n")


def load_filter_set(path) -> FilterSet:
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if len(lines) < 2 or not lines[0].startswith("class ") or not lines[1].startswith("layer "):
        raise ValueError(f"malformed filter-set file {path}")
    entries = []
    for ln in lines[2:]:
        idx_s, score_s = ln.split()
        entries.append((int(idx_s), float(score_s)))
    return FilterSet(lines[0][6:], lines[1][6:], tuple(entries))
