"""Proposal quality (ABO/MABO), end-to-end accuracy and timing."""
from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .proposal import BBox, overlap_rate


@dataclass(frozen=True)
class Detection:
    bbox: BBox
    label: str
    confidence: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


def best_overlap(gt: BBox, proposals: Sequence[BBox]) -> float:
    return max((overlap_rate(gt, p) for p in proposals), default=0.0)


def abo(gt_boxes: Sequence[BBox], proposals: Sequence[BBox]) -> float:
    """Mean over ground-truth boxes of the best overlap with any proposal."""
    if not gt_boxes:
        raise ValueError("ABO is undefined without ground-truth boxes")
    return float(np.mean([best_overlap(g, proposals) for g in gt_boxes]))


def class_abo(
    annotations: Mapping[str, Sequence[tuple[BBox, str]]],
    proposals: Mapping[str, Sequence[BBox]],
) -> dict[str, float]:
    """Per-class ABO, pooling each class's boxes over every image.

    ``annotations`` maps image key -> [(box, label)], ``proposals`` maps the
    same keys -> boxes (missing keys mean no proposals).
    """
    per_class: dict[str, list[float]] = {}
    for image, boxes in annotations.items():
        props = proposals.get(image, ())
        for box, label in boxes:
            per_class.setdefault(label, []).append(best_overlap(box, props))
    return {label: float(np.mean(v)) for label, v in sorted(per_class.items())}


def mabo(
    annotations: Mapping[str, Sequence[tuple[BBox, str]]],
    proposals: Mapping[str, Sequence[BBox]],
) -> float:
    scores = class_abo(annotations, proposals)
    if not scores:
        raise ValueError("MABO needs at least one ground-truth box")
    return float(np.mean(list(scores.values())))


def match_detections(
    gt: Sequence[tuple[BBox, str]], dets: Sequence[Detection], iou_threshold: float = 0.5
) -> list[tuple[int, Detection, float]]:
    """Greedy one-to-one matching by descending IoU among pairs >= threshold.

    Ties are broken by ground-truth index and then by detection content, so
    the result does not depend on the order of ``dets``.
    """
    pairs = []
    for gi, (g, _) in enumerate(gt):
        for d in dets:
            iou = overlap_rate(g, d.bbox)
            if iou >= iou_threshold:
                pairs.append((-iou, gi, d.bbox.as_tuple(), d.label, -d.confidence, d))
    pairs.sort(key=lambda p: p[:5])
    used_gt: set[int] = set()
    used_det: set[int] = set()
    matches = []
    for neg_iou, gi, _, _, _, d in pairs:
        if gi in used_gt or id(d) in used_det:
            continue
        used_gt.add(gi)
        used_det.add(id(d))
        matches.append((gi, d, -neg_iou))
    return matches


def final_accuracy(
    detections: Mapping[str, Sequence[Detection]],
    annotations: Mapping[str, Sequence[tuple[BBox, str]]],
    iou_threshold: float = 0.5,
) -> float:
    """Fraction of ground-truth boxes matched by a detection with the right label."""
    total = 0
    correct = 0
    for image, gt in annotations.items():
        total += len(gt)
        for gi, d, _ in match_detections(gt, detections.get(image, ()), iou_threshold):
            if d.label == gt[gi][1]:
                correct += 1
    return correct / total if total else float("nan")


@dataclass
class BenchStats:
    times: list[float]

    @property
    def mean(self) -> float:
        return float(np.mean(self.times))

    @property
    def min(self) -> float:
        return float(np.min(self.times))


def bench(fn: Callable[..., object], inputs: Iterable = ((),), repetitions: int = 3) -> BenchStats:
    """Time ``fn(*args)`` summed over ``inputs``, after one untimed warm-up run."""
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    inputs = list(inputs)

    def once() -> None:
        for args in inputs:
            fn(*args)

    once()
    times = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        once()
        times.append(time.perf_counter() - t0)
    return BenchStats(times)


@dataclass
class EvalReport:
    class_abo: dict[str, float] = field(default_factory=dict)
    mabo: float | None = None
    # image -> (before box merging or None when unknown, after)
    box_counts: dict[str, tuple[int | None, int]] = field(default_factory=dict)
    accuracy: float | None = None
    timings: dict[str, float] = field(default_factory=dict)

    def rows(self) -> list[tuple[str, str, str]]:
        rows = [("abo", label, f"{v:.4f}") for label, v in self.class_abo.items()]
        if self.mabo is not None:
            rows.append(("mabo", "", f"{self.mabo:.4f}"))
        for image, (pre, post) in self.box_counts.items():
            if pre is not None:
                rows.append(("boxes_pre_merge", image, str(pre)))
            rows.append(("boxes_post_merge", image, str(post)))
        if self.accuracy is not None:
            rows.append(("final_accuracy", "", f"{self.accuracy:.4f}"))
        for stage, t in self.timings.items():
            rows.append(("time_s", stage, f"{t:.4f}"))
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["metric", "key", "value"])
        writer.writerows(self.rows())
        return buf.getvalue()

    def to_table(self) -> str:
        lines = []
        if self.class_abo:
            width = max(12, *(len(k) for k in self.class_abo))
            lines.append(f"{'class':<{width}}  ABO(%)")
            lines.append("-" * (width + 8))
            for label, v in self.class_abo.items():
                lines.append(f"{label:<{width}}  {100 * v:6.2f}")
            lines.append("-" * (width + 8))
        if self.mabo is not None:
            pre = [p for p, _ in self.box_counts.values() if p is not None]
            post = [q for _, q in self.box_counts.values()]
            line = f"MABO {100 * self.mabo:.2f}"
            if pre and len(pre) == len(post):
                line += f"  #box {np.mean(pre):.1f} (after merging {np.mean(post):.1f})"
            elif post:
                line += f"  #box {np.mean(post):.1f}"
            lines.append(line)
        if self.accuracy is not None:
            lines.append(f"Final accuracy {100 * self.accuracy:.2f}")
        for stage, t in self.timings.items():
            lines.append(f"{stage:<16} {t:.3f}s")
        return "\n".join(lines)
