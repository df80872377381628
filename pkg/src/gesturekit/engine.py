"""Frame-by-frame inference session.

Budget per frame: exactly one backbone pass, at most one specialized head
pass. The pinch buffer is fed every frame regardless of routing so a later
Pinch validation always has a frame d steps back to compare against. Caption
decoding is the expensive head, so it runs on a schedule of Loupe
validations (every n-th, n=1 by default) and the last decoded text is
reused in between.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .backbone import ActivationStack, BackboneContract, FeatureVector, SyntheticBackbone
from .caption import CaptionModelWeights, Vocabulary, decode, load_caption_weights, postprocess
from .classifier import (
    DenseSoftmaxHead,
    GestureLabel,
    HeadKind,
    LabelRegistry,
    classify,
    default_registry,
    load_classifier,
)
from .filter_selection import FilterSet, FSParams, load_filter_set, localize_stack
from .pinch import FrameBuffer, PinchHeadWeights, load_pinch_weights, pinch_forward
from .temporal import TemporalGate
from .tensors import Tensor


class EngineError(RuntimeError):
    """A head was routed to but is not bound to the session."""


@dataclass(frozen=True)
class BoxPayload:
    boxes: tuple[tuple[int, int, int, int], ...]


@dataclass(frozen=True)
class CaptionPayload:
    text: str


@dataclass(frozen=True)
class ZoomPayload:
    action: str


@dataclass(frozen=True)
class FramePrediction:
    frame_index: int
    raw_label: str
    validated_label: str | None  # None while the gate is unset
    payload: BoxPayload | CaptionPayload | ZoomPayload | None

    def responded(self) -> bool:
        return self.payload is not None


@dataclass
class SessionConfig:
    k: int = 2
    caption_every_n: int = 1  # re-decode on every n-th Loupe validation
    fs_params: FSParams = field(default_factory=FSParams)
    max_caption_len: int = 20

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.caption_every_n < 1:
            raise ValueError(f"caption_every_n must be >= 1, got {self.caption_every_n}")


@dataclass
class Session:
    """Every bound model plus the cross-frame state."""

    backbone: BackboneContract
    classifier: DenseSoftmaxHead
    registry: LabelRegistry = field(default_factory=default_registry)
    config: SessionConfig = field(default_factory=SessionConfig)
    filter_sets: dict[str, FilterSet] = field(default_factory=dict)
    caption_weights: CaptionModelWeights | None = None
    vocab: Vocabulary | None = None
    pinch_weights: PinchHeadWeights | None = None
    pinch_lookback: int = 5

    def __post_init__(self) -> None:
        self.gate = TemporalGate(self.config.k)
        self.buffer = FrameBuffer(self.pinch_lookback)
        self.frame_index = 0
        self.backbone_calls = 0
        self.head_calls = 0
        self.stage_seconds = {"backbone": 0.0, "classify": 0.0, "head": 0.0}
        self._cached_caption: str | None = None
        self._caption_validations = 0

    # -- single frame ---------------------------------------------------------

    def process_frame(self, frame: Tensor) -> FramePrediction:
        layer = self.config.fs_params.layer_name
        t0 = time.perf_counter()
        stacks, features = self.backbone.forward(frame, layers=[layer])
        self.backbone_calls += 1
        stack = stacks[layer]
        pair = self.buffer.push(stack)
        t1 = time.perf_counter()

        decision = classify(self.classifier, features, self.registry)
        raw = decision.label
        validated, changed = self.gate.step(raw)
        t2 = time.perf_counter()

        payload = None
        if validated is not None and not validated.negative:
            payload = self._run_head(validated, stack, features, pair, changed)
        t3 = time.perf_counter()

        self.stage_seconds["backbone"] += t1 - t0
        self.stage_seconds["classify"] += t2 - t1
        self.stage_seconds["head"] += t3 - t2

        shown = None if validated is None else validated.name
        pred = FramePrediction(self.frame_index, raw.name, shown, payload)
        self.frame_index += 1
        return pred

    def _run_head(
        self,
        label: GestureLabel,
        stack: ActivationStack,
        features: FeatureVector,
        pair: tuple[ActivationStack, ActivationStack],
        just_validated: bool,
    ):
        if label.head is HeadKind.LOCALIZATION:
            fset = self.filter_sets.get(label.name)
            if fset is None:
                raise EngineError(f"no filter set bound for {label.name!r}")
            result = localize_stack(stack, fset, self.config.fs_params)
            self.head_calls += 1
            return BoxPayload(tuple(b.as_tuple() for b in result.boxes))
        if label.head is HeadKind.CAPTION:
            if self.caption_weights is None or self.vocab is None:
                raise EngineError("no caption model bound")
            if just_validated:
                self._caption_validations += 1
                due = (self._caption_validations - 1) % self.config.caption_every_n == 0
                if due:
                    self._cached_caption = self._decode_caption(features)
            if self._cached_caption is None:
                # Defensive: the first validation is always due, so this only
                # fires if the schedule logic changes.
                self._cached_caption = self._decode_caption(features)
            return CaptionPayload(self._cached_caption)
        if label.head is HeadKind.PINCH:
            if self.pinch_weights is None:
                raise EngineError("no pinch model bound")
            current, past = pair
            _, action = pinch_forward(self.pinch_weights, current, past)
            self.head_calls += 1
            return ZoomPayload(action.label)
        raise EngineError(f"label {label.name!r} routed to unknown head {label.head}")

    def _decode_caption(self, features: FeatureVector) -> str:
        caption = decode(
            self.caption_weights, features, self.vocab, max_len=self.config.max_caption_len
        )
        self.head_calls += 1
        return postprocess(caption.text)


# --- streams ------------------------------------------------------------


@dataclass(frozen=True)
class TimingReport:
    frames: int
    total_s: float
    stage_s: dict[str, float]  # backbone / classify / head; sums to <= total_s
    backbone_calls: int
    head_calls: int

    @property
    def fps(self) -> float:
        return self.frames / self.total_s if self.total_s > 0 else float("inf")


def process_stream(
    session: Session, frames: Iterable[Tensor]
) -> tuple[list[FramePrediction], TimingReport]:
    stage_before = dict(session.stage_seconds)
    start = time.perf_counter()
    preds = []
    for i, frame in enumerate(frames):
        try:
            preds.append(session.process_frame(frame))
        except EngineError:
            raise
        except Exception as exc:
            raise EngineError(f"frame {i}: {exc}") from exc
    elapsed = time.perf_counter() - start
    stage = {k: session.stage_seconds[k] - stage_before[k] for k in stage_before}
    report = TimingReport(len(preds), elapsed, stage, session.backbone_calls, session.head_calls)
    return preds, report


def prediction_to_json(pred: FramePrediction) -> dict:
    doc: dict = {
        "frame": pred.frame_index,
        "raw": pred.raw_label,
        "validated": pred.validated_label,
        "response": None,
    }
    if isinstance(pred.payload, BoxPayload):
        doc["response"] = {"type": "boxes", "boxes": [list(b) for b in pred.payload.boxes]}
    elif isinstance(pred.payload, CaptionPayload):
        doc["response"] = {"type": "caption", "text": pred.payload.text}
    elif isinstance(pred.payload, ZoomPayload):
        doc["response"] = {"type": "zoom", "action": pred.payload.action}
    return doc


def predictions_to_jsonl(preds: Sequence[FramePrediction]) -> str:
    return "".join(json.dumps(prediction_to_json(p), sort_keys=True) + "\n" for p in preds)


def write_predictions(preds: Sequence[FramePrediction], path) -> None:
    Path(path).write_text(predictions_to_jsonl(preds))


# --- session assembly from a config file ---------------------------------


_CONFIG_KEYS = {
    "seed", "extent", "k", "caption_every_n", "layer", "alpha", "top_n", "beta",
    "kernel", "min_area", "classifier", "filter_sets", "caption_model", "vocab",
    "pinch_model", "pinch_lookback", "max_caption_len",
}

# Model paths may name the manifest file or its directory.
_MANIFEST_NAMES = {"classifier": "classifier.json", "caption_model": "caption.json", "pinch_model": "pinch.json"}


def load_session(config_path) -> Session:
    """Build a session from a JSON config; unknown keys are an error."""
    config_path = Path(config_path)
    doc = json.loads(config_path.read_text())
    if not isinstance(doc, dict):
        raise ValueError("config must be a JSON object")
    unknown = set(doc) - _CONFIG_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    base = config_path.parent

    def resolve(rel, key=None):
        path = base / rel
        if path.is_dir() and key in _MANIFEST_NAMES:
            path = path / _MANIFEST_NAMES[key]
        if not path.exists():
            raise FileNotFoundError(f"config references missing path: {path}")
        return path

    extent = tuple(doc.get("extent", (224, 224)))
    backbone = SyntheticBackbone(seed=int(doc.get("seed", 0)), extent=extent)

    if "classifier" not in doc:
        raise ValueError("config must name a classifier directory")
    head = load_classifier(resolve(doc["classifier"], "classifier"))

    fs_kwargs = dict(
        layer_name=doc.get("layer", "conv3"),
        beta=float(doc.get("beta", 0.92)),
        kernel=int(doc.get("kernel", 7)),
        min_area=int(doc.get("min_area", 1)),
    )
    if doc.get("alpha") is not None:
        fs_kwargs["alpha"] = float(doc["alpha"])
        fs_kwargs["top_n"] = None
    else:
        fs_kwargs["top_n"] = int(doc.get("top_n", 4))
    params = FSParams(**fs_kwargs)

    config = SessionConfig(
        k=int(doc.get("k", 2)),
        caption_every_n=int(doc.get("caption_every_n", 1)),
        fs_params=params,
        max_caption_len=int(doc.get("max_caption_len", 20)),
    )

    filter_sets = {}
    for name, rel in doc.get("filter_sets", {}).items():
        filter_sets[name] = load_filter_set(resolve(rel))

    caption_weights = vocab = None
    if "caption_model" in doc:
        caption_weights = load_caption_weights(resolve(doc["caption_model"], "caption_model"))
        if "vocab" not in doc:
            raise ValueError("caption_model requires a vocab path")
        vocab = Vocabulary.load(resolve(doc["vocab"]))

    pinch_weights = None
    if "pinch_model" in doc:
        pinch_weights = load_pinch_weights(resolve(doc["pinch_model"], "pinch_model"))

    return Session(
        backbone=backbone,
        classifier=head,
        config=config,
        filter_sets=filter_sets,
        caption_weights=caption_weights,
        vocab=vocab,
        pinch_weights=pinch_weights,
        pinch_lookback=int(doc.get("pinch_lookback", 5)),
    )
