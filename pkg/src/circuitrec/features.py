"""Hand-crafted crop descriptors for the SVM baseline.

Four modes with fixed lengths: raw grayscale pixels (22,500), aspect ratio
with mean hue and saturation (3), color statistics (20) and the ten
strongest center-surround responses (10).
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imaging import ColorSpace, Image, IntegralImage, convert, integral, resize

FEATURE_SIDE = 150
HUE_BINS = 18
CENSURE_SCALES = (1, 2, 3, 4, 5, 6)
CENSURE_TOP_N = 10


class FeatureMode(str, enum.Enum):
    RAW_PIXELS = "raw"
    ASPECT_HUE = "aspect_hue"
    COLOR = "color"
    CENSURE = "censure"

    @property
    def length(self) -> int:
        return {
            FeatureMode.RAW_PIXELS: FEATURE_SIDE * FEATURE_SIDE,
            FeatureMode.ASPECT_HUE: 3,
            FeatureMode.COLOR: 2 + HUE_BINS,
            FeatureMode.CENSURE: CENSURE_TOP_N,
        }[self]


@dataclass(frozen=True, eq=False)
class FeatureVector:
    mode: FeatureMode
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.values.shape != (self.mode.length,):
            raise ValueError(f"{self.mode.name} expects {self.mode.length} values, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("feature values must be finite")


def _hsv(img: Image) -> np.ndarray:
    if img.color_space is ColorSpace.HSV:
        return img.pixels
    return convert(img, ColorSpace.HSV).pixels


def f_hue(img: Image, circular: bool = False) -> float:
    """Mean hue in degrees. ``circular=True`` uses the angular mean instead."""
    hue = _hsv(img)[:, :, 0]
    if not circular:
        return float(hue.mean())
    rad = np.deg2rad(hue)
    ang = np.rad2deg(np.arctan2(np.sin(rad).mean(), np.cos(rad).mean()))
    return float(ang % 360.0)


def f_sat(img: Image) -> float:
    return float(_hsv(img)[:, :, 1].mean())


def hue_distribution(img: Image, bins: int = HUE_BINS) -> np.ndarray:
    """Fraction of pixels per hue bin over [0, 360); gray pixels count as hue 0."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    hue = _hsv(img)[:, :, 0].ravel()
    idx = np.clip((hue * bins / 360.0).astype(np.int64), 0, bins - 1)
    counts = np.bincount(idx, minlength=bins).astype(np.float64)
    return counts / counts.sum()


def _gray(img: Image) -> Image:
    return img if img.color_space is ColorSpace.GRAY else convert(img, ColorSpace.GRAY)


def censure_response(ii: IntegralImage, s: int) -> tuple[np.ndarray, np.ndarray]:
    """Center-surround response at scale ``s`` for every pixel center.

    The kernel is +1/area over the inner (2s+1) box and -1/area over the
    ring between it and the outer (4s+1) box, so it has zero DC response.
    Returns the full-size response map and a mask of centers where the
    outer box fits inside the image.
    """
    h, w = ii.height, ii.width
    resp = np.zeros((h, w))
    valid = np.zeros((h, w), dtype=bool)
    r_out, r_in = 2 * s, s
    if h < 2 * r_out + 1 or w < 2 * r_out + 1:
        return resp, valid
    ys, xs = np.mgrid[r_out : h - r_out, r_out : w - r_out]
    inner = ii.box_sums(ys - r_in, xs - r_in, ys + r_in + 1, xs + r_in + 1)
    outer = ii.box_sums(ys - r_out, xs - r_out, ys + r_out + 1, xs + r_out + 1)
    a_in = (2 * r_in + 1) ** 2
    a_ring = (2 * r_out + 1) ** 2 - a_in
    r = inner / a_in - (outer - inner) / a_ring
    # integral-image round-off on flat patches is not a response
    r[np.abs(r) < 1e-9] = 0.0
    resp[r_out : h - r_out, r_out : w - r_out] = r
    valid[r_out : h - r_out, r_out : w - r_out] = True
    return resp, valid


def censure_extrema(img: Image, scales=CENSURE_SCALES) -> list[tuple[float, int, int, int]]:
    """Scale-space extrema of |response| as (magnitude, scale, y, x).

    A point survives when its magnitude is non-zero and at least as large
    as every valid neighbor in the 3x3 window at its own and adjacent scales.
    """
    ii = integral(_gray(img))
    maps = [censure_response(ii, s) for s in scales]
    mag = np.stack([np.where(v, np.abs(r), -np.inf) for r, v in maps])
    padded = np.pad(mag, 1, mode="constant", constant_values=-np.inf)
    nbr = np.full_like(mag, -np.inf)
    depth, h, w = mag.shape
    for ds in (0, 1, 2):
        for dy in (0, 1, 2):
            for dx in (0, 1, 2):
                if (ds, dy, dx) == (1, 1, 1):
                    continue
                np.maximum(nbr, padded[ds : ds + depth, dy : dy + h, dx : dx + w], out=nbr)
    keep = np.isfinite(mag) & (mag > 0) & (mag >= nbr)
    out = [(float(mag[si, y, x]), scales[si], int(y), int(x)) for si, y, x in np.argwhere(keep)]
    out.sort(key=lambda t: (-t[0], t[1], t[2], t[3]))
    return out


def censure_features(img: Image, n: int = CENSURE_TOP_N) -> np.ndarray:
    """The ``n`` largest extremum magnitudes, descending, zero-padded."""
    vals = [m for m, *_ in censure_extrema(img)][:n]
    out = np.zeros(n)
    out[: len(vals)] = vals
    return out


def feature_vector(crop: Image, mode: FeatureMode | str) -> FeatureVector:
    mode = FeatureMode(mode)
    if mode is FeatureMode.ASPECT_HUE:
        # aspect comes from the crop as cut, before squashing to a square
        sq = resize(crop, FEATURE_SIDE, FEATURE_SIDE)
        values = np.array([crop.width / crop.height, f_hue(sq), f_sat(sq)])
        return FeatureVector(mode, values)
    sq = resize(crop, FEATURE_SIDE, FEATURE_SIDE)
    if mode is FeatureMode.RAW_PIXELS:
        values = _gray(sq).pixels.ravel()
    elif mode is FeatureMode.COLOR:
        values = np.concatenate([[f_hue(sq), f_sat(sq)], hue_distribution(sq)])
    else:
        values = censure_features(sq)
    return FeatureVector(mode, np.asarray(values, dtype=np.float64))


def write_features_csv(rows: list[tuple[str, str, FeatureVector]], path: str | Path) -> None:
    """Rows of (source, label, vector) for inspection."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if rows:
            n = rows[0][2].values.size
            writer.writerow(["source", "label"] + [f"f{i}" for i in range(n)])
        for src, label, vec in rows:
            writer.writerow([src, label] + [f"{v:.8g}" for v in vec.values])
