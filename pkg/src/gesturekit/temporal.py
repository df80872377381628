"""Temporal consistency gate: a decision must persist k frames to take effect."""

from __future__ import annotations

from typing import Iterable, Sequence

from .classifier import GestureLabel

# Both negative classes collapse to this single label before gating, so
# flicker between them never counts as a gesture change.
NEGATIVE = GestureLabel("Negative", -1, negative=True)


def collapse_negative(label: GestureLabel) -> GestureLabel:
    return NEGATIVE if label.negative else label


class TemporalGate:
    """Holds the last validated label until k consecutive frames disagree.

    Before anything validates the output is None (unset); the engine emits
    no response for it. An interrupted candidate run starts over.
    """

    def __init__(self, k: int) -> None:
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        self.k = k
        self.current: GestureLabel | None = None
        self.candidate: GestureLabel | None = None
        self.run_length = 0

    def reset(self) -> None:
        self.current = None
        self.candidate = None
        self.run_length = 0

    def step(self, raw: GestureLabel) -> tuple[GestureLabel | None, bool]:
        """Feed one raw frame label; returns (validated label or None, changed)."""
        raw = collapse_negative(raw)
        if self.current is not None and raw == self.current:
            self.candidate = None
            self.run_length = 0
            return self.current, False
        if raw == self.candidate:
            self.run_length += 1
        else:
            self.candidate = raw
            self.run_length = 1
        if self.run_length >= self.k:
            self.current = raw
            self.candidate = None
            self.run_length = 0
            return self.current, True
        return self.current, False


def evaluate_k(
    stream: Sequence[tuple[GestureLabel, GestureLabel]], ks: Iterable[int]
) -> dict[int, float]:
    """Macro-F1 of gated output against truth for each k.

    Unset frames count as negative predictions; truth labels collapse the
    same way, so the score is over positive gestures plus one negative class.
    """
    from .metrics import prf1, tally_from_labels

    stream = list(stream)
    if not stream:
        raise ValueError("stream is empty")
    result: dict[int, float] = {}
    for k in ks:
        gate = TemporalGate(k)
        preds = []
        truths = []
        for raw, truth in stream:
            validated, _ = gate.step(raw)
            preds.append((validated or NEGATIVE).name)
            truths.append(collapse_negative(truth).name)
        result[k] = prf1(tally_from_labels(preds, truths)).macro_f1
    return result
