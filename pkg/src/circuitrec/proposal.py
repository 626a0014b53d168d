"""Selective-search region proposals.

Regions from the initial segmentation are merged greedily by a sum of
colour, size and fill similarities. Every region seen along the way
(initial and merged) contributes its bounding box. Overlapping candidate
boxes are then fused until no pair overlaps more than a threshold, and the
result is mapped back to original-image coordinates.
"""
from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .imaging import CHANNEL_RANGES, ColorSpace, Image, convert, resize_long_side
from .segmentation import LabelMap, SegmentationParams, segment

BINS_PER_CHANNEL = 25


@dataclass(frozen=True, order=True)
class BBox:
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self) -> None:
        if self.w < 1 or self.h < 1:
            raise ValueError(f"degenerate box {self!r}")

    @property
    def area(self) -> int:
        return self.w * self.h

    @property
    def x2(self) -> int:
        return self.x + self.w

    @property
    def y2(self) -> int:
        return self.y + self.h

    def union(self, other: "BBox") -> "BBox":
        x0, y0 = min(self.x, other.x), min(self.y, other.y)
        x1, y1 = max(self.x2, other.x2), max(self.y2, other.y2)
        return BBox(x0, y0, x1 - x0, y1 - y0)

    def intersection_area(self, other: "BBox") -> int:
        iw = min(self.x2, other.x2) - max(self.x, other.x)
        ih = min(self.y2, other.y2) - max(self.y, other.y)
        return max(iw, 0) * max(ih, 0)

    def contains(self, other: "BBox") -> bool:
        return (
            self.x <= other.x and self.y <= other.y
            and self.x2 >= other.x2 and self.y2 >= other.y2
        )

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x, self.y, self.w, self.h)


@dataclass
class Region:
    id: int
    size: int
    bbox: BBox
    hist: np.ndarray
    neighbors: set[int] = field(default_factory=set)


@dataclass(frozen=True)
class SimilarityConfig:
    use_colour: bool = True
    use_size: bool = True
    use_fill: bool = True
    color_space: ColorSpace = ColorSpace.RGB8
    merge_threshold: float = 0.2
    thumbnail_long_side: int = 400
    min_box_frac: float = 0.001
    max_box_frac: float = 0.9

    def __post_init__(self) -> None:
        object.__setattr__(self, "color_space", ColorSpace(self.color_space))
        if not (self.use_colour or self.use_size or self.use_fill):
            raise ConfigError("at least one similarity must be enabled")
        if not 0.0 <= self.merge_threshold <= 1.0:
            raise ConfigError("merge_threshold must lie in [0, 1]")
        if not 0.0 < self.min_box_frac < self.max_box_frac <= 1.0:
            raise ConfigError("need 0 < min_box_frac < max_box_frac <= 1")
        if self.thumbnail_long_side < 1:
            raise ConfigError("thumbnail_long_side must be >= 1")


def channel_bins(img: Image, bins: int = BINS_PER_CHANNEL) -> np.ndarray:
    """Per-pixel bin index for each channel, shape (H, W, C)."""
    px = img.pixels.astype(np.float64)
    ranges = CHANNEL_RANGES[img.color_space]
    out = np.empty(px.shape, dtype=np.int64)
    for c, (lo, hi) in enumerate(ranges):
        b = np.floor((px[:, :, c] - lo) / (hi - lo) * bins).astype(np.int64)
        out[:, :, c] = np.clip(b, 0, bins - 1)
    return out


def build_regions(labels: LabelMap, img: Image) -> list[Region]:
    if (labels.height, labels.width) != img.shape:
        raise ValueError(
            f"label map {labels.width}x{labels.height} does not match image "
            f"{img.width}x{img.height}"
        )
    n = labels.num_regions
    lab = labels.labels
    h, w = lab.shape
    nch = img.color_space.channels
    nbins = BINS_PER_CHANNEL * nch

    flat = lab.ravel()
    sizes = np.bincount(flat, minlength=n)
    bins = channel_bins(img).reshape(-1, nch) + np.arange(nch) * BINS_PER_CHANNEL
    counts = np.zeros((n, nbins), dtype=np.float64)
    for c in range(nch):
        counts += np.bincount(
            flat * nbins + bins[:, c], minlength=n * nbins
        ).reshape(n, nbins)
    hists = counts / counts.sum(axis=1, keepdims=True)

    ys, xs = np.divmod(np.arange(h * w), w)
    x0 = np.full(n, w, dtype=np.int64)
    y0 = np.full(n, h, dtype=np.int64)
    x1 = np.full(n, -1, dtype=np.int64)
    y1 = np.full(n, -1, dtype=np.int64)
    np.minimum.at(x0, flat, xs)
    np.minimum.at(y0, flat, ys)
    np.maximum.at(x1, flat, xs)
    np.maximum.at(y1, flat, ys)

    regions = [
        Region(
            i, int(sizes[i]),
            BBox(int(x0[i]), int(y0[i]), int(x1[i] - x0[i] + 1), int(y1[i] - y0[i] + 1)),
            hists[i],
        )
        for i in range(n)
    ]
    pairs = np.concatenate(
        [
            np.stack([lab[:, :-1].ravel(), lab[:, 1:].ravel()], axis=1),
            np.stack([lab[:-1, :].ravel(), lab[1:, :].ravel()], axis=1),
        ]
    )
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    for a, b in np.unique(np.sort(pairs, axis=1), axis=0):
        regions[a].neighbors.add(int(b))
        regions[b].neighbors.add(int(a))
    return regions


def sim_colour(a: Region, b: Region) -> float:
    return float(np.minimum(a.hist, b.hist).sum())


def sim_size(a: Region, b: Region, im_area: int) -> float:
    return 1.0 - (a.size + b.size) / im_area


def sim_fill(a: Region, b: Region, im_area: int) -> float:
    joint = a.bbox.union(b.bbox).area
    return 1.0 - (joint - a.size - b.size) / im_area


def combined_similarity(a: Region, b: Region, cfg: SimilarityConfig, im_area: int) -> float:
    s = 0.0
    if cfg.use_colour:
        s += sim_colour(a, b)
    if cfg.use_size:
        s += sim_size(a, b, im_area)
    if cfg.use_fill:
        s += sim_fill(a, b, im_area)
    return s


def merge_regions(a: Region, b: Region, new_id: int) -> Region:
    size = a.size + b.size
    hist = (a.size * a.hist + b.size * b.hist) / size
    hist = hist / hist.sum()
    neighbors = (a.neighbors | b.neighbors) - {a.id, b.id}
    return Region(new_id, size, a.bbox.union(b.bbox), hist, neighbors)


def group_regions(
    regions: list[Region], cfg: SimilarityConfig, im_area: int
) -> tuple[list[BBox], int]:
    """Greedy max-similarity merging until one region is left.

    Returns every region's box in creation order (unfiltered, with
    repeats) and the number of merges performed. Ties go to the pair with
    the smallest ``(min id, max id)``.
    """
    if not regions:
        raise ValueError("need at least one region")
    live = {r.id: Region(r.id, r.size, r.bbox, r.hist, set(r.neighbors)) for r in regions}
    boxes = [r.bbox for r in regions]
    heap: list[tuple[float, int, int]] = []
    for r in regions:
        for nb in r.neighbors:
            if r.id < nb:
                heap.append((-combined_similarity(r, live[nb], cfg, im_area), r.id, nb))
    heapq.heapify(heap)

    next_id = max(live) + 1
    merges = 0
    while heap:
        _, i, j = heapq.heappop(heap)
        if i not in live or j not in live:
            continue
        a, b = live.pop(i), live.pop(j)
        merged = merge_regions(a, b, next_id)
        next_id += 1
        merges += 1
        for nb in merged.neighbors:
            other = live[nb]
            other.neighbors.discard(i)
            other.neighbors.discard(j)
            other.neighbors.add(merged.id)
            heapq.heappush(
                heap, (-combined_similarity(other, merged, cfg, im_area), nb, merged.id)
            )
        live[merged.id] = merged
        boxes.append(merged.bbox)
    return boxes, merges


def filter_boxes(boxes: list[BBox], cfg: SimilarityConfig, im_area: int) -> list[BBox]:
    """Drop repeats (keeping first occurrence) and boxes outside the area window."""
    seen: set[BBox] = set()
    out = []
    lo, hi = cfg.min_box_frac * im_area, cfg.max_box_frac * im_area
    for b in boxes:
        if b in seen:
            continue
        seen.add(b)
        if lo <= b.area <= hi:
            out.append(b)
    return out


def hierarchical_group(regions: list[Region], cfg: SimilarityConfig, im_area: int) -> list[BBox]:
    boxes, _ = group_regions(regions, cfg, im_area)
    return filter_boxes(boxes, cfg, im_area)


def overlap_rate(a: BBox, b: BBox) -> float:
    inter = a.intersection_area(b)
    return inter / (a.area + b.area - inter)


def _pairwise_overlap(arr: np.ndarray) -> np.ndarray:
    x0, y0 = arr[:, 0], arr[:, 1]
    x1, y1 = x0 + arr[:, 2], y0 + arr[:, 3]
    iw = np.minimum(x1[:, None], x1[None, :]) - np.maximum(x0[:, None], x0[None, :])
    ih = np.minimum(y1[:, None], y1[None, :]) - np.maximum(y0[:, None], y0[None, :])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    area = arr[:, 2] * arr[:, 3]
    return inter / (area[:, None] + area[None, :] - inter)


def merge_overlapping(boxes: list[BBox], threshold: float) -> list[BBox]:
    """Fuse box pairs overlapping more than ``threshold`` into their union.

    Pairs are scanned in index order; after each fusion the union takes the
    first box's slot, the second box is deleted and the scan restarts.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ConfigError("threshold must lie in [0, 1]")
    out = list(boxes)
    while len(out) > 1:
        arr = np.array([b.as_tuple() for b in out], dtype=np.int64)
        ov = np.triu(_pairwise_overlap(arr), k=1)
        hits = np.argwhere(ov > threshold)
        if hits.size == 0:
            break
        i, j = (int(v) for v in hits[0])  # argwhere is row-major: lexicographic (i, j)
        out[i] = out[i].union(out[j])
        del out[j]
    return out


def rescale_boxes(
    boxes: list[BBox], scale: float, bounds: tuple[int, int] | None = None
) -> list[BBox]:
    """Map thumbnail boxes to original coordinates; ``bounds`` is (width, height)."""
    if scale <= 0:
        raise ValueError("scale must be > 0")

    def rnd(v: float) -> int:
        return int(math.floor(v * scale + 0.5))

    out = []
    for b in boxes:
        x, y, w, h = rnd(b.x), rnd(b.y), max(1, rnd(b.w)), max(1, rnd(b.h))
        if bounds is not None:
            bw, bh = bounds
            x, y = min(max(x, 0), bw - 1), min(max(y, 0), bh - 1)
            w, h = min(w, bw - x), min(h, bh - y)
        out.append(BBox(x, y, w, h))
    return out


@dataclass
class ProposalResult:
    boxes: list[BBox]  # final, original coordinates
    candidates: list[BBox]  # thumbnail coordinates, before box merging
    merged: list[BBox]  # thumbnail coordinates, after box merging
    num_regions: int
    scale: float
    timings: dict[str, float]


def propose_detailed(
    img: Image,
    cfg: SimilarityConfig = SimilarityConfig(),
    seg_params: SegmentationParams = SegmentationParams(),
) -> ProposalResult:
    timings: dict[str, float] = {}
    t = time.perf_counter()

    def lap(name: str) -> None:
        nonlocal t
        now = time.perf_counter()
        timings[name] = now - t
        t = now

    thumb, scale = resize_long_side(img, cfg.thumbnail_long_side)
    work = convert(thumb, cfg.color_space)
    lap("resize")
    labels = segment(work, seg_params)
    lap("segment")
    regions = build_regions(labels, work)
    im_area = work.width * work.height
    candidates = hierarchical_group(regions, cfg, im_area)
    lap("group")
    merged = merge_overlapping(candidates, cfg.merge_threshold)
    boxes = rescale_boxes(merged, scale, (img.width, img.height))
    lap("merge")
    return ProposalResult(boxes, candidates, merged, labels.num_regions, scale, timings)


def propose(
    img: Image,
    cfg: SimilarityConfig = SimilarityConfig(),
    seg_params: SegmentationParams = SegmentationParams(),
) -> list[BBox]:
    return propose_detailed(img, cfg, seg_params).boxes
