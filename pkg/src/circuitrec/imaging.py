"""Raster images, color conversion, resizing and integral images.

Images are immutable wrappers around an ``(H, W, C)`` numpy array. RGB8
data is ``uint8``; HSV, LAB and GRAY are ``float64``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage
from PIL import UnidentifiedImageError

from .errors import FormatError


class ColorSpace(str, enum.Enum):
    RGB8 = "rgb"
    HSV = "hsv"
    LAB = "lab"
    GRAY = "gray"

    @property
    def channels(self) -> int:
        return 1 if self is ColorSpace.GRAY else 3


# Nominal per-channel value ranges, used for histogram binning and for
# bringing every space onto a common 0..255 scale before segmentation.
CHANNEL_RANGES = {
    ColorSpace.RGB8: ((0.0, 256.0),) * 3,
    ColorSpace.HSV: ((0.0, 360.0), (0.0, 1.0), (0.0, 1.0)),
    ColorSpace.LAB: ((0.0, 100.0), (-128.0, 128.0), (-128.0, 128.0)),
    ColorSpace.GRAY: ((0.0, 1.0),),
}


@dataclass(frozen=True, eq=False)
class Image:
    pixels: np.ndarray
    color_space: ColorSpace = ColorSpace.RGB8

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] != self.color_space.channels:
            raise ValueError(
                f"pixel array of shape {np.shape(self.pixels)} does not fit "
                f"{self.color_space.name}"
            )
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("image must have at least one pixel")
        dtype = np.uint8 if self.color_space is ColorSpace.RGB8 else np.float64
        px = np.array(px, dtype=dtype, copy=True)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width

    def crop(self, x: int, y: int, w: int, h: int) -> "Image":
        if x < 0 or y < 0 or w < 1 or h < 1 or x + w > self.width or y + h > self.height:
            raise ValueError(f"crop ({x}, {y}, {w}, {h}) outside {self.width}x{self.height}")
        return Image(self.pixels[y : y + h, x : x + w], self.color_space)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Image):
            return NotImplemented
        return self.color_space is other.color_space and np.array_equal(
            self.pixels, other.pixels
        )


def load_image(path: str | Path) -> Image:
    """Decode PNG, JPEG or PPM/PGM into an RGB8 image (top-left origin)."""
    path = Path(path)
    with open(path, "rb") as fh:  # OSError propagates for unreadable files
        if not fh.read(1):
            raise FormatError(f"{path}: empty file")
    try:
        with PILImage.open(path) as im:
            im.load()
            rgb = im.convert("RGB")
    except (UnidentifiedImageError, SyntaxError) as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return Image(np.asarray(rgb, dtype=np.uint8))


def save_image(img: Image, path: str | Path) -> None:
    """Write an RGB8 or GRAY image; the format follows the suffix (.png/.ppm)."""
    path = Path(path)
    if path.suffix.lower() not in (".png", ".ppm", ".pgm"):
        raise FormatError(f"unsupported output format {path.suffix!r}")
    if img.color_space is ColorSpace.RGB8:
        arr = img.pixels
    elif img.color_space is ColorSpace.GRAY:
        arr = np.clip(np.rint(img.pixels[:, :, 0] * 255.0), 0, 255).astype(np.uint8)
    else:
        arr = to_rgb8(img).pixels
    PILImage.fromarray(np.ascontiguousarray(arr)).save(path)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def resize(img: Image, width: int, height: int) -> Image:
    """Bilinear resample with pixel-center alignment and edge clamping."""
    if width < 1 or height < 1:
        raise ValueError("target size must be positive")
    src = img.pixels.astype(np.float64)
    h0, w0 = img.shape
    if (h0, w0) == (height, width):
        return img

    def axis(n_out: int, n_in: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        pos = np.clip(pos, 0.0, n_in - 1)
        lo = np.floor(pos).astype(np.intp)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, pos - lo

    y0, y1, fy = axis(height, h0)
    x0, x1, fx = axis(width, w0)
    fx = fx[None, :, None]
    top = src[y0][:, x0] * (1 - fx) + src[y0][:, x1] * fx
    bot = src[y1][:, x0] * (1 - fx) + src[y1][:, x1] * fx
    out = top * (1 - fy[:, None, None]) + bot * fy[:, None, None]
    if img.color_space is ColorSpace.RGB8:
        out = np.clip(np.rint(out), 0, 255).astype(np.uint8)
    return Image(out, img.color_space)


def resize_long_side(img: Image, target_long: int) -> tuple[Image, float]:
    """Shrink or enlarge so the longer side equals ``target_long``.

    Returns the resized image and ``scale = original_long / target_long``,
    the factor that maps thumbnail coordinates back to the original.
    """
    if target_long < 1:
        raise ValueError("target_long must be >= 1")
    h, w = img.shape
    long_side = max(h, w)
    scale = long_side / target_long
    short = max(1, _round_half_up(min(h, w) / scale))
    if h >= w:
        new_h, new_w = target_long, short
    else:
        new_h, new_w = short, target_long
    return resize(img, new_w, new_h), scale


# -- color conversion ------------------------------------------------------

_SRGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_D65 = np.array([0.95047, 1.00000, 1.08883])


def _rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    cmax = rgb.max(axis=-1)
    cmin = rgb.min(axis=-1)
    delta = cmax - cmin
    safe = np.where(delta > 0, delta, 1.0)
    hue = np.zeros_like(cmax)
    hue = np.where(cmax == r, ((g - b) / safe) % 6.0, hue)
    hue = np.where((cmax == g) & (cmax != r), (b - r) / safe + 2.0, hue)
    hue = np.where((cmax == b) & (cmax != r) & (cmax != g), (r - g) / safe + 4.0, hue)
    hue = np.where(delta > 0, hue * 60.0, 0.0)
    hue = np.where(hue >= 360.0, hue - 360.0, hue)
    sat = np.where(cmax > 0, delta / np.where(cmax > 0, cmax, 1.0), 0.0)
    return np.stack([hue, sat, cmax], axis=-1)


def _hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    h, s, v = hsv[..., 0] % 360.0, hsv[..., 1], hsv[..., 2]
    c = v * s
    hp = h / 60.0
    x = c * (1 - np.abs(hp % 2 - 1))
    m = v - c
    z = np.zeros_like(h)
    sector = np.floor(hp).astype(int) % 6
    choices = [
        np.stack([c, x, z], -1),
        np.stack([x, c, z], -1),
        np.stack([z, c, x], -1),
        np.stack([z, x, c], -1),
        np.stack([x, z, c], -1),
        np.stack([c, z, x], -1),
    ]
    out = np.zeros(h.shape + (3,))
    for i, ch in enumerate(choices):
        out = np.where((sector == i)[..., None], ch, out)
    return out + m[..., None]


def _rgb_to_lab(rgb: np.ndarray) -> np.ndarray:
    lin = np.where(rgb <= 0.04045, rgb / 12.92, ((rgb + 0.055) / 1.055) ** 2.4)
    xyz = lin @ _SRGB_TO_XYZ.T / _D65
    eps, kappa = 216 / 24389, 24389 / 27
    f = np.where(xyz > eps, np.cbrt(xyz), (kappa * xyz + 16) / 116)
    # the matrix rows sum to 1 only to 7 digits, so white lands a hair above 100
    L = np.clip(116 * f[..., 1] - 16, 0.0, 100.0)
    a = 500 * (f[..., 0] - f[..., 1])
    b = 200 * (f[..., 1] - f[..., 2])
    return np.stack([L, a, b], axis=-1)


def convert(img: Image, target: ColorSpace | str) -> Image:
    """Convert an RGB8 image to HSV (hue in degrees), CIELAB (D65) or GRAY."""
    target = ColorSpace(target)
    if img.color_space is not ColorSpace.RGB8:
        raise ValueError(f"convert expects RGB8 input, got {img.color_space.name}")
    if target is ColorSpace.RGB8:
        return img
    rgb = img.pixels.astype(np.float64) / 255.0
    if target is ColorSpace.HSV:
        out = _rgb_to_hsv(rgb)
    elif target is ColorSpace.LAB:
        out = _rgb_to_lab(rgb)
    else:
        out = (rgb @ np.array([0.299, 0.587, 0.114]))[..., None]
        out = np.clip(out, 0.0, 1.0)
    return Image(out, target)


def to_rgb8(img: Image) -> Image:
    """Inverse of :func:`convert` for HSV and GRAY."""
    if img.color_space is ColorSpace.RGB8:
        return img
    if img.color_space is ColorSpace.HSV:
        rgb = _hsv_to_rgb(img.pixels)
    elif img.color_space is ColorSpace.GRAY:
        rgb = np.repeat(img.pixels, 3, axis=2)
    else:
        raise ValueError("LAB -> RGB is not supported")
    return Image(np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8))


# -- integral image -------------------------------------------------------


class IntegralImage:
    """Summed-area table with a zero first row and column."""

    def __init__(self, table: np.ndarray):
        self.table = table
        self.height = table.shape[0] - 1
        self.width = table.shape[1] - 1

    def rect_sum(self, x0: int, y0: int, x1: int, y1: int) -> float:
        """Sum over columns ``x0..x1-1`` and rows ``y0..y1-1``."""
        t = self.table
        return float(t[y1, x1] - t[y0, x1] - t[y1, x0] + t[y0, x0])

    def box_sums(self, y0: np.ndarray, x0: np.ndarray, y1: np.ndarray, x1: np.ndarray) -> np.ndarray:
        t = self.table
        return t[y1, x1] - t[y0, x1] - t[y1, x0] + t[y0, x0]


def integral(img: Image) -> IntegralImage:
    if img.color_space is not ColorSpace.GRAY:
        raise ValueError("integral image needs a GRAY image")
    h, w = img.shape
    table = np.zeros((h + 1, w + 1), dtype=np.float64)
    table[1:, 1:] = img.pixels[:, :, 0].cumsum(axis=0).cumsum(axis=1)
    return IntegralImage(table)
