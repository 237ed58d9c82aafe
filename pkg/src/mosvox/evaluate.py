"""Dynamic-class scoring against ground truth (IoU, optionally range-limited)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EvaluationError


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn
        )

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def accumulate(gt, pred, points=None, range_limit: float | None = None) -> ConfusionCounts:
    """Confusion counts with dynamic as the positive class.

    With a range limit, only points whose sensor-frame range is within it
    are counted (``points`` must then be the sensor-frame coordinates).
    """
    g = np.asarray(gt, dtype=bool)
    p = np.asarray(pred, dtype=bool)
    if g.shape != p.shape:
        raise EvaluationError(
            f"label length mismatch: ground truth {g.shape} vs prediction {p.shape}"
        )
    if range_limit is not None:
        if points is None:
            raise EvaluationError("range-limited evaluation needs sensor-frame points")
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if pts.shape[0] != g.shape[0]:
            raise EvaluationError("points/labels length mismatch")
        within = np.linalg.norm(pts, axis=1) <= range_limit
        g = g[within]
        p = p[within]
    return ConfusionCounts(
        tp=int(np.count_nonzero(g & p)),
        fp=int(np.count_nonzero(~g & p)),
        fn=int(np.count_nonzero(g & ~p)),
        tn=int(np.count_nonzero(~g & ~p)),
    )


def iou(counts: ConfusionCounts) -> float:
    """Dynamic-class IoU as a percentage: 100 * tp / (tp + fp + fn).

    A sequence with no dynamic points anywhere (denominator zero) scores
    100.0 by convention.
    """
    denom = counts.tp + counts.fp + counts.fn
    if denom == 0:
        return 100.0
    return 100.0 * counts.tp / denom


def format_table(rows: list[tuple[str, ConfusionCounts]]) -> str:
    """Tab-separated results table with an aggregate row."""
    out = ["sequence\ttp\tfp\tfn\ttn\tiou"]
    total = ConfusionCounts()
    for name, c in rows:
        out.append(f"{name}\t{c.tp}\t{c.fp}\t{c.fn}\t{c.tn}\t{iou(c):.2f}")
        total = total + c
    out.append(f"ALL\t{total.tp}\t{total.fp}\t{total.fn}\t{total.tn}\t{iou(total):.2f}")
    return "\n".join(out)
