"""Generated images with known ground truth, for tests, benchmarks and fixtures."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .dataset import AnnotationEntry, AnnotationSet, BoxLabel, save_annotations
from .imaging import ColorSpace, Image, save_image
from .proposal import BBox

# label -> base RGB, kept well away from the near-white background
PALETTE = {
    "resistor": (200, 120, 40),
    "capacitor": (40, 90, 200),
    "led": (210, 30, 40),
    "chip": (40, 40, 45),
    "switch": (30, 150, 70),
    "battery": (150, 60, 170),
}
SOLID_COLORS = [(220, 40, 40), (40, 180, 60), (40, 60, 220), (230, 200, 40)]


def _paint(canvas: np.ndarray, box: BBox, color, rng: np.random.Generator, noise: float) -> None:
    h, w = box.h, box.w
    patch = np.empty((h, w, 3))
    patch[:] = color
    # horizontal bands give each object internal structure to group over
    band = max(3, h // 6)
    rows = (np.arange(h) // band) % 2 == 1
    patch[rows] *= 0.8
    patch += rng.normal(0.0, noise, size=patch.shape)
    canvas[box.y : box.y2, box.x : box.x2] = patch


def _place(rng: np.random.Generator, width: int, height: int, taken: list[BBox],
           min_side: int, max_side: int, gap: int) -> BBox | None:
    for _ in range(200):
        w = int(rng.integers(min_side, max_side + 1))
        h = int(rng.integers(min_side, max_side + 1))
        x = int(rng.integers(gap, width - w - gap + 1))
        y = int(rng.integers(gap, height - h - gap + 1))
        cand = BBox(x, y, w, h)
        grown = BBox(x - gap, y - gap, w + 2 * gap, h + 2 * gap)
        if all(grown.intersection_area(t) == 0 for t in taken):
            return cand
    return None


def textured_scene(
    rng: np.random.Generator,
    height: int = 300,
    width: int = 400,
    count: tuple[int, int] = (3, 6),
    noise: float = 8.0,
    labels: list[str] | None = None,
) -> tuple[Image, list[tuple[BBox, str]]]:
    """Textured, non-touching rectangles on a near-white, slightly noisy background.

    With ``labels`` the i-th object cycles through that list instead of a
    random palette entry.
    """
    canvas = rng.normal(242.0, 3.0, size=(height, width, 3))
    n = int(rng.integers(count[0], count[1] + 1))
    names = list(PALETTE)
    short = min(height, width)
    boxes: list[tuple[BBox, str]] = []
    for _ in range(n):
        box = _place(rng, width, height, [b for b, _ in boxes], short // 8, short // 3, max(4, short // 30))
        if box is None:
            break
        label = labels[len(boxes) % len(labels)] if labels else names[int(rng.integers(len(names)))]
        _paint(canvas, box, PALETTE[label], rng, noise)
        boxes.append((box, label))
    pixels = np.clip(np.rint(canvas), 0, 255).astype(np.uint8)
    return Image(pixels, ColorSpace.RGB8), boxes


def solid_crops(rng: np.random.Generator, per_class: int, size: int = 48,
                colors=SOLID_COLORS, noise: float = 4.0) -> tuple[list[Image], np.ndarray]:
    """``per_class`` noisy solid-color squares for each color; labels index ``colors``."""
    crops, labels = [], []
    for k, color in enumerate(colors):
        for _ in range(per_class):
            px = np.asarray(color, dtype=np.float64) + rng.normal(0.0, noise, size=(size, size, 3))
            crops.append(Image(np.clip(np.rint(px), 0, 255).astype(np.uint8), ColorSpace.RGB8))
            labels.append(k)
    return crops, np.array(labels)


FIXTURE_CLASSES = ["capacitor", "chip", "resistor"]


def write_fixture_dataset(root: str | Path, seed: int = 0, photos: int = 4,
                          crops_per_class: tuple[int, int] = (3, 1)) -> AnnotationSet:
    """Write a miniature dataset: ``photos/`` + ``gt.jsonl`` and ``crops/{train,test}/<class>/``.

    Crops are cut from the generated photos (ground-truth boxes for the
    object classes, background patches for ``blank``).
    """
    root = Path(root)
    rng = np.random.default_rng(seed)
    entries = []
    pool: dict[str, list[Image]] = {}
    (root / "photos").mkdir(parents=True, exist_ok=True)
    for i in range(photos):
        img, boxes = textured_scene(rng, 150, 200, count=(3, 3), labels=FIXTURE_CLASSES)
        name = f"photos/scene_{i:02d}.png"
        save_image(img, root / name)
        entries.append(AnnotationEntry(name, [BoxLabel(b, lab) for b, lab in boxes]))
        for b, lab in boxes:
            pool.setdefault(lab, []).append(img.crop(b.x, b.y, b.w, b.h))
        bg = _place(rng, img.width, img.height, [b for b, _ in boxes], 24, 24, 2)
        if bg is not None:
            pool.setdefault("blank", []).append(img.crop(bg.x, bg.y, bg.w, bg.h))
    ann = AnnotationSet(entries)
    save_annotations(ann, root / "gt.jsonl")
    n_train, n_test = crops_per_class
    for label, crops in sorted(pool.items()):
        for split, chunk in (("train", crops[:n_train]), ("test", crops[n_train : n_train + n_test])):
            out = root / "crops" / split / label
            out.mkdir(parents=True, exist_ok=True)
            for j, crop in enumerate(chunk):
                save_image(crop, out / f"{label}_{j}.png")
    return ann
