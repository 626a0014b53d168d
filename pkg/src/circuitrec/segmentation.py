"""Initial over-segmentation by Felzenszwalb-Huttenlocher graph merging.

The pixel graph is 4-connected (east and south neighbours) so every
resulting region is 4-connected. Edge weights are Euclidean distances
between Gaussian-smoothed pixel values; non-RGB color spaces are first
rescaled so each channel spans roughly 0..255 and ``k`` keeps its meaning.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigError
from .imaging import CHANNEL_RANGES, ColorSpace, Image


@dataclass(frozen=True)
class SegmentationParams:
    sigma: float = 0.8
    k: float = 200.0
    min_size: int = 50

    def __post_init__(self) -> None:
        if self.sigma < 0:
            raise ConfigError("sigma must be >= 0")
        if self.k <= 0:
            raise ConfigError("k must be > 0")
        if self.min_size < 1:
            raise ConfigError("min_size must be >= 1")


@dataclass(frozen=True, eq=False)
class LabelMap:
    labels: np.ndarray  # (H, W) int64, dense ids
    num_regions: int

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels.ravel(), minlength=self.num_regions)


def gaussian_smooth(channels: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with replicated borders, per channel."""
    if sigma <= 0:
        return channels.astype(np.float64)
    sigma = max(sigma, 0.01)
    radius = int(math.ceil(sigma * 4.0))
    taps = np.exp(-0.5 * (np.arange(-radius, radius + 1) / sigma) ** 2)
    taps /= taps.sum()
    out = channels.astype(np.float64)
    for axis in (0, 1):
        pad = [(0, 0)] * out.ndim
        pad[axis] = (radius, radius)
        padded = np.pad(out, pad, mode="edge")
        acc = np.zeros_like(out)
        n = out.shape[axis]
        for i, t in enumerate(taps):
            acc += t * np.take(padded, np.arange(i, i + n), axis=axis)
        out = acc
    return out


def _normalized_channels(img: Image) -> np.ndarray:
    px = img.pixels.astype(np.float64)
    if img.color_space is ColorSpace.RGB8:
        return px
    ranges = CHANNEL_RANGES[img.color_space]
    lo = np.array([r[0] for r in ranges])
    span = np.array([r[1] - r[0] for r in ranges])
    return (px - lo) / span * 255.0


def grid_edges(values: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """East and south edges in row-major order, east before south per pixel."""
    h, w = values.shape[:2]
    idx = np.arange(h * w, dtype=np.int64).reshape(h, w)
    flat = values.reshape(h * w, -1)

    src = np.full((h, w, 2), -1, dtype=np.int64)
    dst = np.full((h, w, 2), -1, dtype=np.int64)
    src[:, :-1, 0] = idx[:, :-1]
    dst[:, :-1, 0] = idx[:, 1:]
    src[:-1, :, 1] = idx[:-1, :]
    dst[:-1, :, 1] = idx[1:, :]
    src = src.ravel()
    dst = dst.ravel()
    keep = src >= 0
    src, dst = src[keep], dst[keep]
    weight = np.sqrt(((flat[src] - flat[dst]) ** 2).sum(axis=1))
    return src, dst, weight


def segment(img: Image, params: SegmentationParams = SegmentationParams()) -> LabelMap:
    smooth = gaussian_smooth(_normalized_channels(img), params.sigma)
    src, dst, weight = grid_edges(smooth)
    order = np.argsort(weight, kind="stable")
    labels = _kernels.fh_merge(
        src[order], dst[order], weight[order], img.height * img.width,
        float(params.k), int(params.min_size),
    )
    labels = labels.reshape(img.height, img.width)
    return LabelMap(labels, int(labels.max()) + 1)


def label_image(labels: LabelMap) -> Image:
    """Color-code a label map for debugging; colors are a fixed hash of the id."""
    ids = labels.labels.astype(np.uint64)
    rgb = np.stack(
        [(ids * np.uint64(p)) % np.uint64(251) for p in (97, 193, 57)], axis=-1
    )
    return Image(rgb.astype(np.uint8))
