"""Desk-scale gesture recognition: shared backbone, gated heads, evaluation."""

from .atn import load_tensor, load_tensor_dict, save_tensor, save_tensor_dict
from .backbone import ActivationStack, FeatureVector, SyntheticBackbone
from .caption import Vocabulary, decode, postprocess
from .classifier import (
    DenseSoftmaxHead,
    GestureLabel,
    HeadKind,
    LabelRegistry,
    classify,
    default_registry,
    route,
)
from .engine import Session, SessionConfig, load_session, process_stream
from .filter_selection import (
    FilterSet,
    FSParams,
    filter_predictions,
    localize,
    score_filters,
    select_filters,
    sweep,
)
from .metrics import (
    DetectionRecord,
    ModelPoint,
    average_precision,
    avg_iou,
    bleu,
    corpus_bleu,
    detection_prf,
    pareto_front,
    prf1,
)
from .pinch import FrameBuffer, PinchDistanceBaseline, ZoomAction, pinch_forward
from .temporal import TemporalGate, evaluate_k
from .tensors import BBox, BinaryMask, Tensor

__version__ = "0.1.0"
