"""Task-success and calibration metrics: scene similarity (v2), size accuracy, ECE, Brier."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .world import Gallery, Scene, Size

POSITION_DELTA = 0.2
DIST_TOL = 1e-9


@dataclass(frozen=True)
class SimilarityBreakdown:
    """Per-component scene similarity; components are None when not applicable."""

    presence: float | None
    size: float | None
    flip: float | None
    position: float | None
    expression: float | None
    pose: float | None
    total: float

    def components(self) -> dict[str, float | None]:
        return {
            "presence": self.presence,
            "size": self.size,
            "flip": self.flip,
            "position": self.position,
            "expression": self.expression,
            "pose": self.pose,
        }


def similarity_v2(target: Scene, drawn: Scene, gallery: Gallery,
                  position_delta: float = POSITION_DELTA) -> SimilarityBreakdown:
    """Equal-weight similarity over applicable components, scaled to [0, 5].

    Presence is |intersection| / |union| of clipart ids. The remaining
    components are evaluated over the common ids only: exact size matches,
    flip matches restricted to asymmetric cliparts, a capped-distance
    position term, and expression/pose matches restricted to persons.
    Two empty scenes score a full 5.0 with no applicable components.
    """
    t_ids, d_ids = target.ids(), drawn.ids()
    union = t_ids | d_ids
    common = sorted(t_ids & d_ids)

    if not union:
        return SimilarityBreakdown(None, None, None, None, None, None, total=5.0)

    presence = len(common) / len(union)
    size = flip = position = expression = pose = None

    if common:
        size_hits = pos_terms = 0.0
        flip_hits = flip_n = 0
        expr_hits = pose_hits = person_n = 0
        for cid in common:
            tp, dp = target.get(cid), drawn.get(cid)
            size_hits += tp.size == dp.size
            dist = math.hypot(tp.x - dp.x, tp.y - dp.y)
            pos_terms += 1.0 - min(1.0, dist / position_delta)
            entry = gallery[cid]
            if not entry.is_symmetric:
                flip_hits += tp.flip == dp.flip
                flip_n += 1
            if entry.is_person:
                expr_hits += tp.expression == dp.expression
                pose_hits += tp.pose == dp.pose
                person_n += 1
        size = size_hits / len(common)
        position = pos_terms / len(common)
        if flip_n:
            flip = flip_hits / flip_n
        if person_n:
            expression = expr_hits / person_n
            pose = pose_hits / person_n

    parts = [c for c in (presence, size, flip, position, expression, pose) if c is not None]
    total = 5.0 * sum(parts) / len(parts)
    return SimilarityBreakdown(presence, size, flip, position, expression, pose, total=total)


def size_accuracy(pairs: list[tuple[Size, Size]]) -> float:
    """Percentage of exact size matches over (predicted, true) pairs."""
    if not pairs:
        raise ValueError("size_accuracy needs at least one pair")
    hits = sum(1 for predicted, true in pairs if predicted == true)
    return 100.0 * hits / len(pairs)


def _validate_rows(probs: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if probs.ndim != 2 or probs.shape[0] == 0:
        raise ValueError("expected a nonempty (n, k) probability matrix")
    if labels.shape != (probs.shape[0],):
        raise ValueError("labels must align with probability rows")
    if np.any(probs < 0):
        raise ValueError("probabilities must be nonnegative")
    if np.any(np.abs(probs.sum(axis=1) - 1.0) > DIST_TOL):
        raise ValueError("each probability row must sum to 1")
    if np.any(labels < 0) or np.any(labels >= probs.shape[1]):
        raise ValueError("class labels out of range")
    return probs, labels


def ece(probs: np.ndarray, labels: np.ndarray, bins: int = 10) -> float:
    """Top-label expected calibration error with equal-width bins over (0, 1]."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    probs, labels = _validate_rows(probs, labels)
    confidence = probs.max(axis=1)
    correct = probs.argmax(axis=1) == labels
    edges = np.linspace(0.0, 1.0, bins + 1)
    idx = np.clip(np.searchsorted(edges, confidence, side="left") - 1, 0, bins - 1)
    total = 0.0
    n = len(labels)
    for b in range(bins):
        mask = idx == b
        if not mask.any():
            continue
        gap = abs(correct[mask].mean() - confidence[mask].mean())
        total += (mask.sum() / n) * gap
    return float(total)


def brier(probs: np.ndarray, labels: np.ndarray) -> float:
    """Multiclass Brier score: mean squared distance to the one-hot truth."""
    probs, labels = _validate_rows(probs, labels)
    onehot = np.zeros_like(probs)
    onehot[np.arange(len(labels)), labels] = 1.0
    return float(np.mean(((probs - onehot) ** 2).sum(axis=1)))


def write_metrics_report(path_base, values: dict[str, float | str]) -> None:
    """Write a metrics mapping as `<base>.csv` (metric,value rows) and `<base>.json`."""
    from pathlib import Path

    base = Path(path_base)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["metric", "value"])
    for key in values:
        writer.writerow([key, values[key]])
    base.with_suffix(".csv").write_text(buf.getvalue(), encoding="utf-8")
    base.with_suffix(".json").write_text(json.dumps(values, indent=2, sort_keys=True) + "\n", encoding="utf-8")
