"""Merge-style caption head: image and text branches fused by addition.

The image branch is one ReLU dense layer over the pooled feature vector;
the text branch embeds the prefix and runs it through an LSTM. Their sum
passes through two ReLU dense layers and a softmax over the vocabulary.
Decoding is greedy.
"""

from __future__ import annotations

import re
import string
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import nnops
from .atn import load_tensor_dict, save_tensor_dict
from .backbone import FeatureVector
from .tensors import Tensor

PAD, START, END, UNK = 0, 1, 2, 3
RESERVED = ("<pad>", "startseq", "endseq", "<unk>")

DEFAULT_DIM = 256
DEFAULT_MAX_LEN = 20

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def tokenize(text: str) -> list[str]:
    """Lowercase, strip punctuation, split on whitespace."""
    return text.lower().translate(_PUNCT_TABLE).split()


class Vocabulary:
    """Token/index mapping with four reserved leading indices."""

    def __init__(self, tokens: Sequence[str]) -> None:
        tokens = list(tokens)
        if len(set(tokens)) != len(tokens):
            raise ValueError("duplicate tokens in vocabulary")
        if any(t in RESERVED for t in tokens):
            raise ValueError("reserved tokens cannot be re-registered")
        if any((not t) or any(ch.isspace() for ch in t) for t in tokens):
            raise ValueError("tokens must be non-empty and whitespace-free")
        self._tokens = list(RESERVED) + tokens
        self._index = {t: i for i, t in enumerate(self._tokens)}

    @classmethod
    def from_corpus(cls, texts: Sequence[str], min_freq: int = 1) -> "Vocabulary":
        counts: dict[str, int] = {}
        for text in texts:
            for tok in tokenize(text):
                counts[tok] = counts.get(tok, 0) + 1
        kept = sorted((t for t, c in counts.items() if c >= min_freq and t not in RESERVED))
        return cls(kept)

    def __len__(self) -> int:
        return len(self._tokens)

    def token(self, index: int) -> str:
        if not 0 <= index < len(self._tokens):
            raise IndexError(f"token index {index} out of range")
        return self._tokens[index]

    def index(self, token: str) -> int:
        return self._index.get(token, UNK)

    def encode(self, text: str) -> list[int]:
        return [self.index(t) for t in tokenize(text)]

    def save(self, path) -> None:
        # Reserved entries are implicit: line i holds the token at index i + 4.
        Path(path).write_text("\n".join(self._tokens[len(RESERVED) :]) + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = [ln for ln in Path(path).read_text().splitlines() if ln]
        return cls(lines)


@dataclass(frozen=True)
class Caption:
    """Finalized caption: plain tokens, no control symbols."""

    tokens: tuple[str, ...]
    text: str


@dataclass
class CaptionModelWeights:
    """All trainable tensors of the merge model. LSTM gate order is (i, f, g, o)."""

    img_w: np.ndarray  # (dim, feature_dim)
    img_b: np.ndarray
    emb: np.ndarray  # (vocab, dim)
    lstm_wx: np.ndarray  # (4*dim, dim)
    lstm_wh: np.ndarray  # (4*dim, dim)
    lstm_b: np.ndarray  # (4*dim,)
    d1_w: np.ndarray  # (dim, dim)
    d1_b: np.ndarray
    d2_w: np.ndarray  # (dim, dim)
    d2_b: np.ndarray
    out_w: np.ndarray  # (vocab, dim)
    out_b: np.ndarray

    def __post_init__(self) -> None:
        for name in self.tensor_names():
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be finite")
            setattr(self, name, arr)
        if self.emb.shape[0] != self.out_w.shape[0]:
            raise ValueError("embedding and output layer disagree on vocabulary size")

    @staticmethod
    def tensor_names() -> tuple[str, ...]:
        return (
            "img_w", "img_b", "emb", "lstm_wx", "lstm_wh", "lstm_b",
            "d1_w", "d1_b", "d2_w", "d2_b", "out_w", "out_b",
        )

    @property
    def dim(self) -> int:
        return self.img_w.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.emb.shape[0]


def init_caption_weights(
    vocab_size: int, feature_dim: int, dim: int = DEFAULT_DIM, seed: int = 0, init_scale: float = 0.05
) -> CaptionModelWeights:
    rng = np.random.default_rng(seed)
    u = lambda *shape: rng.uniform(-init_scale, init_scale, size=shape)
    b = np.zeros(4 * dim)
    b[dim : 2 * dim] = 1.0  # forget-gate bias starts open
    return CaptionModelWeights(
        img_w=u(dim, feature_dim),
        img_b=np.zeros(dim),
        emb=u(vocab_size, dim),
        lstm_wx=u(4 * dim, dim),
        lstm_wh=u(4 * dim, dim),
        lstm_b=b,
        d1_w=u(dim, dim),
        d1_b=np.zeros(dim),
        d2_w=u(dim, dim),
        d2_b=np.zeros(dim),
        out_w=u(vocab_size, dim),
        out_b=np.zeros(vocab_size),
    )


def _features_array(image_features) -> np.ndarray:
    if isinstance(image_features, FeatureVector):
        return image_features.values.array.astype(np.float64)
    return np.asarray(image_features, dtype=np.float64)


def _merge_head(weights: CaptionModelWeights, img_vec: np.ndarray, h: np.ndarray) -> np.ndarray:
    merged = img_vec + h
    z1 = nnops.relu(weights.d1_w @ merged + weights.d1_b)
    z2 = nnops.relu(weights.d2_w @ z1 + weights.d2_b)
    logits = weights.out_w @ z2 + weights.out_b
    return nnops.softmax_rows(logits[None])[0]


def caption_step(weights: CaptionModelWeights, image_features, prefix: Sequence[int]) -> np.ndarray:
    """Next-token distribution given the image and a startseq-led prefix."""
    prefix = list(prefix)
    if not prefix or prefix[0] != START:
        raise ValueError("prefix must begin with the startseq token")
    if any(not 0 <= t < weights.vocab_size for t in prefix):
        raise ValueError("prefix token out of vocabulary range")
    feats = _features_array(image_features)
    img_vec = nnops.relu(weights.img_w @ feats + weights.img_b)
    h = np.zeros(weights.dim)
    c = np.zeros(weights.dim)
    for tok in prefix:
        h, c, _ = nnops.lstm_step(weights.emb[tok], h, c, weights.lstm_wx, weights.lstm_wh, weights.lstm_b)
    return _merge_head(weights, img_vec, h)


def decode(
    weights: CaptionModelWeights,
    image_features,
    vocab: Vocabulary,
    max_len: int = DEFAULT_MAX_LEN,
) -> Caption:
    """Greedy decoding from startseq until endseq or max_len tokens."""
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    if len(vocab) != weights.vocab_size:
        raise ValueError(f"vocabulary size {len(vocab)} != model vocabulary {weights.vocab_size}")
    feats = _features_array(image_features)
    img_vec = nnops.relu(weights.img_w @ feats + weights.img_b)
    h = np.zeros(weights.dim)
    c = np.zeros(weights.dim)
    # Incremental state carry; identical math to rerunning the prefix each step.
    h, c, _ = nnops.lstm_step(weights.emb[START], h, c, weights.lstm_wx, weights.lstm_wh, weights.lstm_b)
    ids: list[int] = []
    for _ in range(max_len):
        probs = _merge_head(weights, img_vec, h)
        nxt = int(np.argmax(probs))
        if nxt == END:
            break
        ids.append(nxt)
        h, c, _ = nnops.lstm_step(weights.emb[nxt], h, c, weights.lstm_wx, weights.lstm_wh, weights.lstm_b)
    tokens = tuple(vocab.token(i) for i in ids if i not in (PAD, START, END))
    return Caption(tokens, " ".join(tokens))


# Leading hand/finger phrasing to strip, applied to a fixpoint. The article
# of the following noun phrase survives, so only the pointing scaffold goes.
_REWRITES = (
    re.compile(r"^(?:a|the)\s+(?:hand|finger)\s+is\s+pointing\s+(?:to|at)\s+", re.IGNORECASE),
    re.compile(r"^(?:a|the)\s+(?:hand|finger)\s+pointing\s+(?:to|at)\s+", re.IGNORECASE),
    re.compile(r"^(?:a|the)\s+(?:hand|finger)\s+and\s+", re.IGNORECASE),
)


def postprocess(text: str) -> str:
    """Strip hand/finger phrasing from a caption; idempotent by construction."""
    out = " ".join(text.split())
    changed = True
    while changed:
        changed = False
        for rx in _REWRITES:
            new = rx.sub("", out)
            if new != out and new:
                out = new
                changed = True
                break
    return out[:1].upper() + out[1:]


def save_caption_weights(weights: CaptionModelWeights, directory) -> None:
    save_tensor_dict(
        {name: Tensor(getattr(weights, name)) for name in CaptionModelWeights.tensor_names()},
        directory,
        "caption.json",
    )


def load_caption_weights(manifest_path) -> CaptionModelWeights:
    tensors = load_tensor_dict(manifest_path)
    missing = set(CaptionModelWeights.tensor_names()) - set(tensors)
    if missing:
        raise ValueError(f"caption manifest missing tensors: {sorted(missing)}")
    return CaptionModelWeights(
        **{name: tensors[name].array for name in CaptionModelWeights.tensor_names()}
    )
