"""Per-clipart and per-turn uncertainty estimators over drawer outputs.

Entropies are in bits throughout (base 2); training losses use natural log.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .drawer import DrawerOutput

DIST_TOL = 1e-9

SELECT_RAW = "raw"
SELECT_NORMALIZED = "normalized"


def _check_dist(dist: np.ndarray) -> np.ndarray:
    dist = np.asarray(dist, dtype=np.float64)
    if dist.ndim != 1 or dist.size == 0:
        raise ValueError("expected a 1-d probability vector")
    if np.any(dist < -DIST_TOL):
        raise ValueError("probabilities must be nonnegative")
    if abs(dist.sum() - 1.0) > DIST_TOL:
        raise ValueError(f"probabilities sum to {dist.sum()}, not 1")
    return np.clip(dist, 0.0, 1.0)


def entropy_bits(dist: np.ndarray) -> float:
    """Shannon entropy in bits, with 0*log(0) taken as 0."""
    dist = _check_dist(dist)
    nz = dist[dist > 0.0]
    return float(-(nz * np.log2(nz)).sum())


def selection_uncertainty(scores: dict[int, float], normalize: bool) -> dict[int, float]:
    """Reverse per-clipart selection scores into uncertainty values.

    Raw mode negates the score (lower score = more uncertain). Normalized
    mode min-max scales the given scores and reverses them; a single clipart
    (or all-equal scores) maps to 0.5.
    """
    if not normalize:
        return {cid: -s for cid, s in scores.items()}
    if not scores:
        return {}
    values = list(scores.values())
    lo, hi = min(values), max(values)
    if hi - lo <= 0.0:
        return {cid: 0.5 for cid in scores}
    return {cid: 1.0 - (s - lo) / (hi - lo) for cid, s in scores.items()}


def position_uncertainty(member_positions: np.ndarray) -> float:
    """Population variance of x plus population variance of y across ensemble members."""
    pts = np.asarray(member_positions, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 1:
        raise ValueError("expected an (N, 2) array of member (x, y) predictions")
    return float(pts[:, 0].var() + pts[:, 1].var())


@dataclass(frozen=True)
class Decomposition:
    total: float
    data: float
    model: float


def _entropy_bits_rows(matrix: np.ndarray) -> np.ndarray:
    safe = np.where(matrix > 0.0, matrix, 1.0)
    return -(safe * np.log2(safe)).sum(axis=1)


def decompose(member_dists: np.ndarray) -> Decomposition:
    """Split ensemble predictive entropy into data (mean member entropy) and model terms."""
    dists = np.asarray(member_dists, dtype=np.float64)
    if dists.ndim != 2 or dists.shape[0] < 1:
        raise ValueError("expected an (N, K) matrix of member distributions")
    if np.any(dists < -DIST_TOL):
        raise ValueError("probabilities must be nonnegative")
    if np.any(np.abs(dists.sum(axis=1) - 1.0) > DIST_TOL):
        raise ValueError("each member row must sum to 1")
    clipped = np.clip(dists, 0.0, 1.0)
    total = float(_entropy_bits_rows(clipped.mean(axis=0, keepdims=True))[0])
    data = float(_entropy_bits_rows(clipped).mean())
    return Decomposition(total=total, data=data, model=total - data)


@dataclass(frozen=True)
class ClipartUncertainty:
    clipart: int
    u_select: float
    h_size: float
    h_flip: float
    u_position: float | None = None


@dataclass(frozen=True)
class TurnUncertainty:
    per_clipart: tuple[ClipartUncertainty, ...]
    u_select_max: float | None
    h_size_max: float | None
    h_flip_max: float | None
    u_position_max: float | None

    @property
    def empty(self) -> bool:
        return not self.per_clipart

    def size_entropies(self) -> dict[int, float]:
        return {c.clipart: c.h_size for c in self.per_clipart}


def turn_uncertainty(output: DrawerOutput,
                     ensemble_outputs: list[DrawerOutput] | None = None,
                     select_mode: str = SELECT_RAW,
                     want_position: bool = False) -> TurnUncertainty:
    """Uncertainty for the cliparts selected at this turn (score > 0) plus per-variable maxima.

    Position uncertainty needs ensemble outputs; it is reported as None when
    no ensemble is supplied (and requesting it without one is an error).
    """
    if select_mode not in (SELECT_RAW, SELECT_NORMALIZED):
        raise ValueError(f"unknown selection-uncertainty mode {select_mode!r}")
    if want_position and ensemble_outputs is None:
        raise ValueError("position uncertainty requires ensemble outputs")
    selected = output.selected_ids()
    if not selected:
        return TurnUncertainty((), None, None, None, None)
    u_sel = selection_uncertainty({c: float(output.scores[c]) for c in selected},
                                  normalize=select_mode == SELECT_NORMALIZED)
    details = []
    for cid in selected:
        u_pos = None
        if ensemble_outputs is not None:
            pts = np.array([m.pos[cid] for m in ensemble_outputs])
            u_pos = position_uncertainty(pts)
        details.append(ClipartUncertainty(
            clipart=cid,
            u_select=u_sel[cid],
            h_size=entropy_bits(output.size_dist[cid]),
            h_flip=entropy_bits(output.flip_dist[cid]),
            u_position=u_pos,
        ))
    pos_values = [d.u_position for d in details if d.u_position is not None]
    return TurnUncertainty(
        per_clipart=tuple(details),
        u_select_max=max(d.u_select for d in details),
        h_size_max=max(d.h_size for d in details),
        h_flip_max=max(d.h_flip for d in details),
        u_position_max=max(pos_values) if pos_values else None,
    )


def write_uncertainty_rows(rows: list[dict]) -> str:
    """CSV dump (dialogue_id,turn_index,u_select,h_size,h_flip,u_position) for analysis."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["dialogue_id", "turn_index", "u_select", "h_size", "h_flip", "u_position"])
    for row in rows:
        writer.writerow([
            row["dialogue_id"], row["turn_index"],
            row["u_select"], row["h_size"], row["h_flip"],
            "" if row.get("u_position") is None else row["u_position"],
        ])
    return buf.getvalue()
