"""Synthetic scenes with exact ground truth, manifests, splits, augmentation.

Scenes are flat-color stimulus patches on a noisy neutral background; the
palette matches the synthetic backbone's planted detectors, so localization
ground truth is exact by construction. Frames travel as .atn tensors or
binary PPM; records travel as a JSON-lines manifest.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .atn import load_tensor, save_tensor
from .backbone import DEFAULT_PLANTED
from .tensors import BBox, Tensor

BACKGROUND = (0.50, 0.55, 0.50)
BACKGROUND_NOISE = 0.02
STIMULUS_COLORS = {det.name: det.color for det in DEFAULT_PLANTED}

# Gesture -> stimulus palette key. Fingertip stimuli exist only for the two
# localization gestures; Drag uses two of them.
GESTURE_STIMULUS = {"Point": "point", "Drag": "drag", "Loupe": "loupe", "Pinch": "pinch", "Other": "other"}


@dataclass(frozen=True)
class Stimulus:
    kind: str  # palette key
    x: int
    y: int
    size: int

    def box(self) -> BBox:
        return BBox(self.x, self.y, self.x + self.size, self.y + self.size)


@dataclass(frozen=True)
class SceneSpec:
    gesture: str
    stimuli: tuple[Stimulus, ...] = ()
    captions: tuple[str, ...] = ()
    sequence_id: str | None = None
    frame_index: int = 0
    zoom: str | None = None


@dataclass(frozen=True)
class SampleRecord:
    """Ground truth for one frame."""

    gesture: str
    frame_path: str | None = None
    hand_box: BBox | None = None
    fingertip_boxes: tuple[BBox, ...] = ()
    object_boxes: tuple[tuple[BBox, str], ...] = ()
    captions: tuple[str, ...] = ()
    sequence_id: str | None = None
    frame_index: int = 0
    zoom: str | None = None

    def __post_init__(self) -> None:
        wants_tips = self.gesture in ("Point", "Drag")
        if wants_tips != bool(self.fingertip_boxes):
            raise ValueError(
                f"fingertip_boxes must be non-empty exactly for Point/Drag, got {self.gesture}"
            )
        if (self.gesture == "Pinch") != (self.zoom is not None):
            raise ValueError("zoom label must be present exactly for Pinch records")
        if len(self.captions) > 5:
            raise ValueError("at most 5 captions per record")


def generate_synthetic_scene(
    spec: SceneSpec, seed: int = 0, extent: tuple[int, int] = (224, 224)
) -> tuple[Tensor, SampleRecord]:
    """Render the scene and return it with its exact ground-truth record."""
    w, h = extent
    rng = np.random.default_rng(seed)
    frame = np.empty((h, w, 3), dtype=np.float32)
    frame[:] = BACKGROUND
    frame += rng.uniform(-BACKGROUND_NOISE, BACKGROUND_NOISE, size=(h, w, 3)).astype(np.float32)

    boxes: list[BBox] = []
    for a, stim in enumerate(spec.stimuli):
        if stim.kind not in STIMULUS_COLORS:
            raise ValueError(f"unknown stimulus kind {stim.kind!r}")
        box = stim.box()
        if box.x1 > w or box.y1 > h:
            raise ValueError(f"stimulus {stim} exceeds the {w}x{h} extent")
        for other in boxes:
            overlap = min(box.x1, other.x1) - max(box.x0, other.x0)
            overlap_y = min(box.y1, other.y1) - max(box.y0, other.y0)
            if overlap > 0 and overlap_y > 0:
                raise ValueError(f"stimuli overlap: {box.as_tuple()} vs {other.as_tuple()}")
        frame[box.y0 : box.y1, box.x0 : box.x1] = STIMULUS_COLORS[stim.kind]
        boxes.append(box)

    hand_box = None
    if boxes:
        hand_box = BBox(
            min(b.x0 for b in boxes), min(b.y0 for b in boxes),
            max(b.x1 for b in boxes), max(b.y1 for b in boxes),
        )
    tips = tuple(boxes) if spec.gesture in ("Point", "Drag") else ()
    record = SampleRecord(
        gesture=spec.gesture,
        hand_box=hand_box,
        fingertip_boxes=tips,
        captions=spec.captions,
        sequence_id=spec.sequence_id,
        frame_index=spec.frame_index,
        zoom=spec.zoom,
    )
    return Tensor(frame), record


_CAPTION_OBJECTS = (
    "a red mug on the desk",
    "a blue marker near the keyboard",
    "a green notebook by the lamp",
    "a yellow ruler on the shelf",
    "a small clock beside the monitor",
    "a white cable under the screen",
)


def _grid_position(rng, extent, size, taken: Sequence[BBox] = ()) -> tuple[int, int]:
    w, h = extent
    # Block-aligned placement keeps planted-detector boxes tight. Enumerating
    # the free slots instead of rejection sampling keeps this deterministic
    # and failure-free whenever any slot exists.
    free = [
        (gx, gy)
        for gx in range(0, w - size + 1, 8)
        for gy in range(0, h - size + 1, 8)
        if all(gx + size <= b.x0 or b.x1 <= gx or gy + size <= b.y0 or b.y1 <= gy for b in taken)
    ]
    if not free:
        raise ValueError(f"no free {size}x{size} slot in a {w}x{h} frame")
    return free[int(rng.integers(len(free)))]


def make_scene_specs(
    n_scenes: int,
    seed: int = 0,
    extent: tuple[int, int] = (224, 224),
    gestures: Sequence[str] = ("Point", "Drag", "Loupe", "Pinch", "Other", "None"),
    pinch_frames: int = 8,
    pinch_step: int = 8,
) -> list[SceneSpec]:
    """Round-robin scene layouts; Pinch entries expand into frame sequences."""
    rng = np.random.default_rng(seed)
    specs: list[SceneSpec] = []
    seq_counter = 0
    for i in range(n_scenes):
        gesture = gestures[i % len(gestures)]
        size = int(rng.choice((24, 32, 40)))
        if gesture == "None":
            specs.append(SceneSpec("None"))
        elif gesture == "Point":
            x, y = _grid_position(rng, extent, size)
            specs.append(SceneSpec("Point", (Stimulus("point", x, y, size),)))
        elif gesture == "Drag":
            x, y = _grid_position(rng, extent, size)
            first = Stimulus("drag", x, y, size)
            x2, y2 = _grid_position(rng, extent, size, [first.box()])
            specs.append(SceneSpec("Drag", (first, Stimulus("drag", x2, y2, size))))
        elif gesture == "Loupe":
            x, y = _grid_position(rng, extent, size)
            caption = _CAPTION_OBJECTS[int(rng.integers(len(_CAPTION_OBJECTS)))]
            specs.append(SceneSpec("Loupe", (Stimulus("loupe", x, y, size),), (caption,)))
        elif gesture == "Other":
            x, y = _grid_position(rng, extent, size)
            specs.append(SceneSpec("Other", (Stimulus("other", x, y, size),)))
        elif gesture == "Pinch":
            seq_counter += 1
            zoom = ("zoom_in", "zoom_out", "no_zoom")[seq_counter % 3]
            specs.extend(
                make_pinch_sequence(
                    f"seq{seq_counter:04d}", zoom, rng, extent, pinch_frames, pinch_step
                )
            )
        else:
            raise ValueError(f"unknown gesture {gesture!r}")
    return specs


def make_pinch_sequence(
    sequence_id: str,
    zoom: str,
    rng,
    extent: tuple[int, int] = (224, 224),
    frames: int = 8,
    step: int = 8,
) -> list[SceneSpec]:
    """Two pinch stimuli whose separation grows, shrinks, or holds."""
    w, h = extent
    size = 16
    cy = (h // 2 // 8) * 8
    gap0 = {"zoom_in": 24, "zoom_out": 24 + step * (frames - 1), "no_zoom": 48}[zoom]
    direction = {"zoom_in": 1, "zoom_out": -1, "no_zoom": 0}[zoom]
    specs = []
    for t in range(frames):
        gap = gap0 + direction * step * t
        cx = w // 2
        left = ((cx - gap // 2 - size) // 8) * 8
        right = ((cx + gap // 2) // 8) * 8
        specs.append(
            SceneSpec(
                "Pinch",
                (Stimulus("pinch", left, cy, size), Stimulus("pinch", right, cy, size)),
                sequence_id=sequence_id,
                frame_index=t,
                zoom=zoom,
            )
        )
    return specs


# --- frame files ------------------------------------------------------------


def write_ppm(frame: Tensor, path) -> None:
    """Binary PPM (P6, maxval 255); values clipped to [0, 1] and quantized."""
    if len(frame.dims) != 3 or frame.dims[2] != 3:
        raise ValueError(f"frame must be (h, w, 3), got {frame.dims}")
    h, w, _ = frame.dims
    data = np.clip(frame.array, 0.0, 1.0)
    raw = np.round(data * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(raw.tobytes(order="C"))


def read_ppm(path) -> Tensor:
    data = Path(path).read_bytes()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":  # comment runs to end of line
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    if fields[0] != b"P6":
        raise ValueError(f"not a binary PPM: magic {fields[0]!r}")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise ValueError(f"unsupported maxval {maxval}")
    pos += 1  # single whitespace byte after the header
    raw = np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=pos)
    if raw.size < w * h * 3:
        raise ValueError("truncated PPM payload")
    return Tensor(raw.reshape(h, w, 3).astype(np.float32) / 255.0)


def load_frame(path) -> Tensor:
    path = Path(path)
    if path.suffix == ".ppm":
        return read_ppm(path)
    if path.suffix == ".atn":
        return load_tensor(path)
    raise ValueError(f"unsupported frame format {path.suffix!r}")


def save_frame(frame: Tensor, path) -> None:
    path = Path(path)
    if path.suffix == ".ppm":
        write_ppm(frame, path)
    elif path.suffix == ".atn":
        save_tensor(frame, path)
    else:
        raise ValueError(f"unsupported frame format {path.suffix!r}")


# --- manifest ---------------------------------------------------------------


def _box_json(box: BBox | None):
    return None if box is None else list(box.as_tuple())


def record_to_json(record: SampleRecord) -> dict:
    return {
        "frame": record.frame_path,
        "gesture": record.gesture,
        "hand_box": _box_json(record.hand_box),
        "fingertip_boxes": [list(b.as_tuple()) for b in record.fingertip_boxes],
        "object_boxes": [{"box": list(b.as_tuple()), "category": c} for b, c in record.object_boxes],
        "captions": list(record.captions),
        "sequence_id": record.sequence_id,
        "frame_index": record.frame_index,
        "zoom": record.zoom,
    }


def record_from_json(doc: dict) -> SampleRecord:
    box = lambda v: None if v is None else BBox(*v)
    return SampleRecord(
        gesture=doc["gesture"],
        frame_path=doc.get("frame"),
        hand_box=box(doc.get("hand_box")),
        fingertip_boxes=tuple(BBox(*b) for b in doc.get("fingertip_boxes", [])),
        object_boxes=tuple((BBox(*o["box"]), o["category"]) for o in doc.get("object_boxes", [])),
        captions=tuple(doc.get("captions", [])),
        sequence_id=doc.get("sequence_id"),
        frame_index=doc.get("frame_index", 0),
        zoom=doc.get("zoom"),
    )


def save_manifest(records: Sequence[SampleRecord], path) -> None:
    with open(path, "w") as fh:
        for record in records:
            fh.write(json.dumps(record_to_json(record), sort_keys=True) + "\n")


def load_manifest(path) -> list[SampleRecord]:
    records = []
    for i, line in enumerate(Path(path).read_text().splitlines()):
        if not line.strip():
            continue
        try:
            records.append(record_from_json(json.loads(line)))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"bad manifest line {i + 1}: {exc}") from exc
    return records


def write_dataset(
    specs: Sequence[SceneSpec], out_dir, seed: int = 0, fmt: str = "atn",
    extent: tuple[int, int] = (224, 224),
) -> Path:
    """Render scenes to frame files plus manifest.jsonl; returns the manifest path."""
    if fmt not in ("atn", "ppm"):
        raise ValueError(f"unsupported format {fmt!r}")
    out_dir = Path(out_dir)
    frames_dir = out_dir / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for i, spec in enumerate(specs):
        frame, record = generate_synthetic_scene(spec, seed=seed + i, extent=extent)
        rel = f"frames/frame_{i:05d}.{fmt}"
        save_frame(frame, out_dir / rel)
        records.append(replace(record, frame_path=rel))
    manifest = out_dir / "manifest.jsonl"
    save_manifest(records, manifest)
    return manifest


# --- splits -----------------------------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.8
    val: float = 0.1
    test: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        parts = (self.train, self.val, self.test)
        if any(p < 0 for p in parts) or not math.isclose(sum(parts), 1.0, abs_tol=1e-9):
            raise ValueError(f"split fractions must be >= 0 and sum to 1, got {parts}")


def _allocate(n: int, fractions: Sequence[float]) -> list[int]:
    # Largest-remainder allocation; exact totals, deterministic ties.
    raw = [n * f for f in fractions]
    base = [int(x) for x in raw]
    short = n - sum(base)
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - base[i]), i))
    for i in order[:short]:
        base[i] += 1
    return base


def split(
    records: Sequence[SampleRecord], spec: SplitSpec = SplitSpec()
) -> tuple[list[SampleRecord], list[SampleRecord], list[SampleRecord]]:
    """Stratified train/val/test split that never separates a sequence."""
    rng = np.random.default_rng(spec.seed)
    by_class: dict[str, dict[str | None, list[SampleRecord]]] = {}
    for i, record in enumerate(records):
        key = record.sequence_id if record.sequence_id is not None else f"#solo{i}"
        by_class.setdefault(record.gesture, {}).setdefault(key, []).append(record)

    out: tuple[list, list, list] = ([], [], [])
    fractions = (spec.train, spec.val, spec.test)
    for gesture in sorted(by_class):
        groups = [by_class[gesture][k] for k in sorted(by_class[gesture], key=str)]
        rng.shuffle(groups)
        n = sum(len(g) for g in groups)
        if len(groups) < 3:
            warnings.warn(
                f"class {gesture!r} has only {len(groups)} group(s); all go to train",
                stacklevel=2,
            )
            out[0].extend(r for g in groups for r in g)
            continue
        targets = _allocate(n, fractions)
        filled = [0, 0, 0]
        for group in groups:
            # Greedy: drop the group into the split with the largest deficit.
            deficits = [targets[i] - filled[i] for i in range(3)]
            dest = max(range(3), key=lambda i: (deficits[i], -i))
            out[dest].extend(group)
            filled[dest] += len(group)
    return out


# --- augmentation -----------------------------------------------------------


@dataclass(frozen=True)
class AugmentSpec:
    count: int = 10
    flip_prob: float = 0.5
    shift_frac: float = 0.10
    zoom_frac: float = 0.10
    rot_deg: float = 5.0
    min_area_frac: float = 0.25  # boxes clipped below this fraction are dropped

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ValueError("count must be >= 1")


@dataclass(frozen=True)
class _Transform:
    kind: str
    flip: bool = False
    dx: int = 0
    dy: int = 0
    scale: float = 1.0
    angle: float = 0.0


def _sample_transform(rng, spec: AugmentSpec) -> _Transform:
    kind = ("flip", "shift", "zoom", "rotate")[int(rng.integers(4))]
    if kind == "flip":
        return _Transform("flip", flip=bool(rng.random() < spec.flip_prob))
    if kind == "shift":
        return _Transform(
            "shift",
            dx=int(round(rng.uniform(-spec.shift_frac, spec.shift_frac) * 224)),
            dy=int(round(rng.uniform(-spec.shift_frac, spec.shift_frac) * 224)),
        )
    if kind == "zoom":
        return _Transform("zoom", scale=float(rng.uniform(1.0 - spec.zoom_frac, 1.0 + spec.zoom_frac)))
    return _Transform("rotate", angle=float(rng.uniform(-spec.rot_deg, spec.rot_deg)))


def _transform_matrix(t: _Transform, extent: tuple[int, int]) -> np.ndarray | None:
    """Forward 2x3 affine map in pixel coordinates, or None for identity/flip."""
    w, h = extent
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    if t.kind == "shift":
        return np.array([[1.0, 0.0, float(t.dx)], [0.0, 1.0, float(t.dy)]])
    if t.kind == "zoom":
        s = t.scale
        return np.array([[s, 0.0, cx * (1 - s)], [0.0, s, cy * (1 - s)]])
    if t.kind == "rotate":
        rad = math.radians(t.angle)
        c, s = math.cos(rad), math.sin(rad)
        return np.array(
            [[c, -s, cx - c * cx + s * cy], [s, c, cy - s * cx - c * cy]]
        )
    return None


def _warp_affine(frame: np.ndarray, matrix: np.ndarray, fill: Sequence[float]) -> np.ndarray:
    """Inverse-map bilinear warp; out-of-frame samples take the fill color."""
    h, w, _ = frame.shape
    a, b, tx = matrix[0]
    c, d, ty = matrix[1]
    det = a * d - b * c
    ia, ib = d / det, -b / det
    ic, id_ = -c / det, a / det
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    sx = ia * (xs - tx) + ib * (ys - ty)
    sy = ic * (xs - tx) + id_ * (ys - ty)
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = (sx - x0)[..., None]
    fy = (sy - y0)[..., None]
    out = np.zeros_like(frame, dtype=np.float64)
    fill_arr = np.asarray(fill, dtype=np.float64)

    def sample(yy, xx):
        valid = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        vals = np.where(
            valid[..., None],
            frame[np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)],
            fill_arr,
        )
        return vals

    out = (
        sample(y0, x0) * (1 - fy) * (1 - fx)
        + sample(y0, x0 + 1) * (1 - fy) * fx
        + sample(y0 + 1, x0) * fy * (1 - fx)
        + sample(y0 + 1, x0 + 1) * fy * fx
    )
    return out.astype(np.float32)


def _apply_to_frame(frame: Tensor, t: _Transform) -> Tensor:
    arr = frame.array
    if t.kind == "flip":
        return Tensor(arr[:, ::-1, :]) if t.flip else frame
    matrix = _transform_matrix(t, (arr.shape[1], arr.shape[0]))
    return Tensor(_warp_affine(arr.astype(np.float64), matrix, BACKGROUND))


def _apply_to_box(box: BBox, t: _Transform, extent: tuple[int, int], min_frac: float) -> BBox | None:
    w, h = extent
    if t.kind == "flip":
        if not t.flip:
            return box
        return BBox(w - box.x1, box.y0, w - box.x0, box.y1)
    matrix = _transform_matrix(t, extent)
    corners = np.array(
        [[box.x0, box.y0], [box.x1, box.y0], [box.x0, box.y1], [box.x1, box.y1]], dtype=np.float64
    )
    moved = corners @ matrix[:, :2].T + matrix[:, 2]
    x0, y0 = moved.min(axis=0)
    x1, y1 = moved.max(axis=0)
    xi0, yi0 = int(round(x0)), int(round(y0))
    xi1, yi1 = int(round(x1)), int(round(y1))
    if xi0 >= xi1 or yi0 >= yi1:
        return None
    hull_area = (xi1 - xi0) * (yi1 - yi0)
    clipped = BBox(max(xi0, 0), max(yi0, 0), max(xi1, 1), max(yi1, 1)).clip_to(w, h)
    if clipped is None or clipped.area < min_frac * hull_area:
        return None
    return clipped


def _apply_to_record(record: SampleRecord, t: _Transform, extent, min_frac: float) -> SampleRecord | None:
    def conv(box):
        return _apply_to_box(box, t, extent, min_frac)

    tips = tuple(b for b in map(conv, record.fingertip_boxes) if b is not None)
    if record.fingertip_boxes and not tips:
        return None  # the gesture's defining boxes all left the frame
    objs = tuple((nb, c) for (b, c) in record.object_boxes for nb in [conv(b)] if nb is not None)
    hand = conv(record.hand_box) if record.hand_box is not None else None
    return replace(record, frame_path=None, hand_box=hand, fingertip_boxes=tips, object_boxes=objs)


def augment(
    frame: Tensor, record: SampleRecord, spec: AugmentSpec = AugmentSpec(), seed: int = 0
) -> list[tuple[Tensor, SampleRecord]]:
    """`spec.count` copies, each under one randomly drawn transform.

    Transforms that would drop every fingertip box are re-drawn a few times,
    then fall back to the identity so record invariants always hold.
    """
    h, w, _ = frame.dims
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(spec.count):
        chosen = None
        new_record = None
        for _try in range(20):
            t = _sample_transform(rng, spec)
            cand = _apply_to_record(record, t, (w, h), spec.min_area_frac)
            if cand is not None:
                chosen, new_record = t, cand
                break
        if chosen is None:
            chosen = _Transform("flip", flip=False)
            new_record = _apply_to_record(record, chosen, (w, h), spec.min_area_frac)
        out.append((_apply_to_frame(frame, chosen), new_record))
    return out


def augment_pair(
    frames: Sequence[Tensor], records: Sequence[SampleRecord],
    spec: AugmentSpec = AugmentSpec(), seed: int = 0,
) -> list[list[tuple[Tensor, SampleRecord]]]:
    """Augment frames that belong together; one transform is shared per copy."""
    if len(frames) != len(records):
        raise ValueError("frames and records must align")
    h, w, _ = frames[0].dims
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(spec.count):
        copies = None
        for _try in range(20):
            t = _sample_transform(rng, spec)
            cand = [_apply_to_record(r, t, (w, h), spec.min_area_frac) for r in records]
            if all(c is not None for c in cand):
                copies = [(_apply_to_frame(f, t), c) for f, c in zip(frames, cand)]
                break
        if copies is None:
            ident = _Transform("flip", flip=False)
            copies = [
                (_apply_to_frame(f, ident), _apply_to_record(r, ident, (w, h), spec.min_area_frac))
                for f, r in zip(frames, records)
            ]
        out.append(copies)
    return out


# --- synthetic zoom sequences at the activation level ------------------------


def make_zoom_stack_sequences(
    n_per_class: int,
    length: int = 12,
    channels: int = 4,
    hw: tuple[int, int] = (8, 8),
    seed: int = 0,
    noise: float = 0.05,
) -> list[tuple[list[np.ndarray], int]]:
    """Sequences of small activation stacks with known separation motion.

    Labels follow ZoomAction: 0 separating, 1 approaching, 2 static. Two
    soft blobs drift apart/together along a random axis; Gaussian noise on top.
    """
    rng = np.random.default_rng(seed)
    h, w = hw
    yy, xx = np.mgrid[0:h, 0:w]
    sequences = []
    for label, direction in ((0, 1.0), (1, -1.0), (2, 0.0)):
        for _ in range(n_per_class):
            cx, cy = w / 2 + rng.uniform(-1, 1), h / 2 + rng.uniform(-1, 1)
            angle = rng.uniform(0, math.pi)
            ux, uy = math.cos(angle), math.sin(angle)
            gap0 = rng.uniform(1.0, 2.0)
            speed = rng.uniform(0.25, 0.45)
            stacks = []
            for t in range(length):
                gap = gap0 + direction * speed * t
                stack = np.empty((channels, h, w))
                for ch in range(channels):
                    amp = 0.5 + 0.5 * (ch + 1) / channels
                    blob = np.zeros((h, w))
                    for sign in (-1.0, 1.0):
                        bx, by = cx + sign * ux * gap, cy + sign * uy * gap
                        blob += np.exp(-((xx - bx) ** 2 + (yy - by) ** 2) / 2.0)
                    stack[ch] = amp * blob + rng.normal(0.0, noise, size=(h, w))
                stacks.append(stack)
            sequences.append((stacks, label))
    return sequences


def make_pinch_pairs(
    sequences: Sequence[tuple[Sequence[np.ndarray], int]],
    d: int = 5,
    jitter: bool = False,
    seed: int = 0,
) -> list[tuple[tuple[np.ndarray, np.ndarray], int]]:
    """(current, past) training pairs; `jitter` varies the lookback by +/-1."""
    rng = np.random.default_rng(seed)
    pairs = []
    for stacks, label in sequences:
        for t in range(d, len(stacks)):
            back = d
            if jitter:
                back = min(max(d + int(rng.integers(-1, 2)), 1), t)
            pairs.append(((stacks[t], stacks[t - back]), label))
    return pairs
