"""Dense tensors, pixel boxes and binary masks shared across the pipeline.

Conventions used everywhere downstream: boxes are half-open pixel
rectangles, masks and tensors are row-major, and image extents are
passed as (width, height).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "Tensor",
    "BBox",
    "BinaryMask",
    "iou",
    "match_iou",
    "dilate",
    "blobs",
    "resample_bilinear",
    "resize_bilinear",
]


class Tensor:
    """Immutable float32 array with explicit row-major dims."""

    __slots__ = ("_array",)

    def __init__(self, array) -> None:
        arr = np.array(array, dtype=np.float32, order="C")
        if arr.ndim == 0:
            raise ValueError("tensor needs at least one dimension")
        if min(arr.shape) < 1:
            raise ValueError(f"tensor dims must all be >= 1, got {arr.shape}")
        arr.setflags(write=False)
        self._array = arr

    @property
    def dims(self) -> tuple[int, ...]:
        return self._array.shape

    @property
    def array(self) -> np.ndarray:
        """Read-only shaped view of the payload."""
        return self._array

    @property
    def data(self) -> np.ndarray:
        """Read-only flat row-major view of the payload."""
        return self._array.reshape(-1)

    def __repr__(self) -> str:
        return f"Tensor(dims={self.dims})"


@dataclass(frozen=True)
class BBox:
    """Axis-aligned half-open pixel rectangle [x0, x1) x [y0, y1)."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self) -> None:
        for name in ("x0", "y0", "x1", "y1"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)):
                raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
            object.__setattr__(self, name, int(value))
        if self.x0 < 0 or self.y0 < 0:
            raise ValueError(f"box coordinates must be non-negative: {self.as_tuple()}")
        if self.x0 >= self.x1 or self.y0 >= self.y1:
            raise ValueError(f"box must have positive area: {self.as_tuple()}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    @property
    def area(self) -> int:
        return self.width * self.height

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x0, self.y0, self.x1, self.y1)

    def clip_to(self, width: int, height: int) -> "BBox | None":
        """Intersect with the extent; None if nothing remains."""
        x0, y0 = max(self.x0, 0), max(self.y0, 0)
        x1, y1 = min(self.x1, width), min(self.y1, height)
        if x0 >= x1 or y0 >= y1:
            return None
        return BBox(x0, y0, x1, y1)


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes; 0.0 when disjoint."""
    ix0 = max(a.x0, b.x0)
    iy0 = max(a.y0, b.y0)
    ix1 = min(a.x1, b.x1)
    iy1 = min(a.y1, b.y1)
    iw = ix1 - ix0
    ih = iy1 - iy0
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / float(a.area + b.area - inter)


def match_iou(preds: Sequence[BBox], truths: Sequence[BBox]) -> float:
    """Mean over predictions of the best overlap with any truth box.

    Each prediction is matched greedily to the truth box maximizing IoU
    (ties keep the lowest truth index). No predictions means score 0.0.
    """
    if not truths:
        raise ValueError("match_iou needs at least one ground-truth box")
    if not preds:
        return 0.0
    total = 0.0
    for p in preds:
        # max() keeps the first maximal element: lowest truth index on ties.
        total += max(iou(p, t) for t in truths)
    return total / len(preds)


class BinaryMask:
    """Immutable row-major boolean pixel grid."""

    __slots__ = ("_bits",)

    def __init__(self, bits) -> None:
        arr = np.array(bits, dtype=bool, order="C")
        if arr.ndim != 2:
            raise ValueError(f"mask must be 2-D, got {arr.ndim} dims")
        if min(arr.shape) < 1:
            raise ValueError(f"mask dims must be >= 1, got {arr.shape}")
        arr.setflags(write=False)
        self._bits = arr

    @property
    def width(self) -> int:
        return self._bits.shape[1]

    @property
    def height(self) -> int:
        return self._bits.shape[0]

    @property
    def array(self) -> np.ndarray:
        return self._bits

    @property
    def bits(self) -> np.ndarray:
        return self._bits.reshape(-1)

    def popcount(self) -> int:
        return int(self._bits.sum())

    def __repr__(self) -> str:
        return f"BinaryMask({self.width}x{self.height}, set={self.popcount()})"


def dilate(mask: BinaryMask, s: int) -> BinaryMask:
    """Binary dilation with a full s x s structuring element, clipped at borders."""
    if s < 1 or s % 2 == 0:
        raise ValueError(f"structuring element size must be odd and >= 1, got {s}")
    if s == 1:
        return mask
    src = mask.array
    h, w = src.shape
    r = s // 2
    out = np.zeros((h, w), dtype=bool)
    for dy in range(-r, r + 1):
        ys = slice(max(0, dy), min(h, h + dy))
        yd = slice(max(0, -dy), min(h, h - dy))
        for dx in range(-r, r + 1):
            xs = slice(max(0, dx), min(w, w + dx))
            xd = slice(max(0, -dx), min(w, w - dx))
            out[yd, xd] |= src[ys, xs]
    return BinaryMask(out)


def blobs(mask: BinaryMask, min_area: int = 1) -> list[BBox]:
    """Tight boxes of 8-connected components with pixel count >= min_area.

    Sorted by descending pixel count; ties by (y0, x0) of the box.
    """
    if min_area < 1:
        raise ValueError(f"min_area must be >= 1, got {min_area}")
    grid = mask.array
    h, w = grid.shape
    ys, xs = np.nonzero(grid)
    if ys.size == 0:
        return []
    # Plain lists beat ndarray scalar indexing for the flood fill below.
    cells = grid.tolist()
    seen = [[False] * w for _ in range(h)]
    comps: list[tuple[int, int, int, int, int]] = []
    for sy, sx in zip(ys.tolist(), xs.tolist()):
        if seen[sy][sx]:
            continue
        seen[sy][sx] = True
        stack = [(sy, sx)]
        count = 0
        ymin = ymax = sy
        xmin = xmax = sx
        while stack:
            y, x = stack.pop()
            count += 1
            if y < ymin:
                ymin = y
            elif y > ymax:
                ymax = y
            if x < xmin:
                xmin = x
            elif x > xmax:
                xmax = x
            for ny in (y - 1, y, y + 1):
                if ny < 0 or ny >= h:
                    continue
                row = cells[ny]
                srow = seen[ny]
                for nx in (x - 1, x, x + 1):
                    if 0 <= nx < w and row[nx] and not srow[nx]:
                        srow[nx] = True
                        stack.append((ny, nx))
        if count >= min_area:
            comps.append((count, ymin, xmin, ymax, xmax))
    comps.sort(key=lambda c: (-c[0], c[1], c[2]))
    return [BBox(x0, y0, x1 + 1, y1 + 1) for _, y0, x0, y1, x1 in comps]


def _axis_positions(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray]:
    # Corner-aligned sampling: output endpoints hit input endpoints exactly.
    if n_out == 1 or n_in == 1:
        return np.zeros(n_out, dtype=np.int64), np.zeros(n_out)
    pos = np.linspace(0.0, n_in - 1.0, n_out)
    lo = np.minimum(np.floor(pos).astype(np.int64), n_in - 2)
    return lo, pos - lo


def resample_bilinear(array, out_w: int, out_h: int) -> np.ndarray:
    """Corner-aligned bilinear resize of a 2-D array; float64 in and out.

    Full-precision counterpart of resize_bilinear for callers that threshold
    the result: the float32 tensor boundary can flip pixels sitting within
    one ulp of the threshold.
    """
    src = np.asarray(array, dtype=np.float64)
    if src.ndim != 2:
        raise ValueError(f"resample_bilinear expects a 2-D array, got {src.ndim} dims")
    if out_w < 1 or out_h < 1:
        raise ValueError(f"output extent must be positive, got {out_w}x{out_h}")
    h, w = src.shape
    if (h, w) == (out_h, out_w):
        return np.array(src)
    y0, fy = _axis_positions(h, out_h)
    x0, fx = _axis_positions(w, out_w)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = fy[:, None]
    fx = fx[None, :]
    top = src[np.ix_(y0, x0)] * (1.0 - fx) + src[np.ix_(y0, x1)] * fx
    bot = src[np.ix_(y1, x0)] * (1.0 - fx) + src[np.ix_(y1, x1)] * fx
    return top * (1.0 - fy) + bot * fy


def resize_bilinear(t: Tensor, out_w: int, out_h: int) -> Tensor:
    """Corner-aligned bilinear resize of a 2-D tensor to (out_h, out_w)."""
    if len(t.dims) != 2:
        raise ValueError(f"resize_bilinear expects a 2-D tensor, got dims {t.dims}")
    if out_w < 1 or out_h < 1:
        raise ValueError(f"output extent must be positive, got {out_w}x{out_h}")
    if t.dims == (out_h, out_w):
        return t
    return Tensor(resample_bilinear(t.array, out_w, out_h))
