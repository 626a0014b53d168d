"""Dataset layouts: folder-per-class crops and JSON-lines box annotations.

Cropped samples live under ``root/train/<class>/*`` and
``root/test/<class>/*``. Annotation files hold one JSON object per line::

    {"image": "photos/a.jpg", "boxes": [{"x": 1, "y": 2, "w": 30, "h": 40, "label": "relay"}]}

Detections use the same schema with an extra ``"confidence"`` per box, and
proposal files may carry ``"candidates"``: the box count before overlapping
boxes were merged.
"""
from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, FormatError
from .imaging import Image, load_image, save_image
from .proposal import BBox

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".jpg", ".jpeg", ".png", ".ppm", ".pgm", ".bmp"}
BLANK = "blank"


class AnnotationError(FormatError):
    pass


@dataclass
class Sample:
    image: Image
    label: int
    path: Path


@dataclass
class CroppedDataset:
    classes: list[str]
    train: list[Sample]
    test: list[Sample]

    def label_index(self, name: str) -> int:
        return self.classes.index(name)


def _image_files(folder: Path) -> list[Path]:
    return sorted(p for p in folder.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)


def load_cropped_dataset(root: str | Path) -> CroppedDataset:
    """Read ``train/`` and ``test/`` splits; class ids follow sorted folder names."""
    root = Path(root)
    splits = {}
    for split in ("train", "test"):
        d = root / split
        if not d.is_dir():
            raise ConfigError(f"{root}: missing '{split}' split directory")
        splits[split] = d
    names = set()
    for d in splits.values():
        names.update(p.name for p in d.iterdir() if p.is_dir())
    classes = sorted(names)
    if not classes:
        raise ConfigError(f"{root}: no class folders found")
    loaded = {}
    for split, d in splits.items():
        samples = []
        for idx, name in enumerate(classes):
            folder = d / name
            files = _image_files(folder) if folder.is_dir() else []
            if not files:
                log.warning("%s/%s has no images", split, name)
            samples.extend(Sample(load_image(f), idx, f) for f in files)
        loaded[split] = samples
    return CroppedDataset(classes, loaded["train"], loaded["test"])


@dataclass
class BoxLabel:
    bbox: BBox
    label: str
    confidence: float | None = None


@dataclass
class AnnotationEntry:
    image: str
    boxes: list[BoxLabel] = field(default_factory=list)
    candidates: int | None = None


@dataclass
class AnnotationSet:
    entries: list[AnnotationEntry] = field(default_factory=list)

    @property
    def classes(self) -> list[str]:
        return sorted({b.label for e in self.entries for b in e.boxes})

    def ground_truth(self) -> dict[str, list[tuple[BBox, str]]]:
        return {e.image: [(b.bbox, b.label) for b in e.boxes] for e in self.entries}

    def box_map(self) -> dict[str, list[BBox]]:
        return {e.image: [b.bbox for b in e.boxes] for e in self.entries}


def _parse_box(obj: dict, lineno: int) -> BoxLabel:
    try:
        x, y, w, h = (int(obj[k]) for k in ("x", "y", "w", "h"))
        label = str(obj["label"])
        conf = obj.get("confidence")
        bbox = BBox(x, y, w, h)
    except (KeyError, TypeError, ValueError) as exc:
        raise AnnotationError(f"line {lineno}: bad box {obj!r}: {exc}") from exc
    if x < 0 or y < 0:
        raise AnnotationError(f"line {lineno}: negative box origin {obj!r}")
    return BoxLabel(bbox, label, None if conf is None else float(conf))


def load_annotations(path: str | Path, image_root: str | Path | None = None,
                     validate: bool = True) -> AnnotationSet:
    """Parse a JSON-lines annotation file.

    When ``validate`` is set and an entry's image exists (relative paths
    resolve against ``image_root``, defaulting to the file's directory),
    every box must lie inside it.
    """
    path = Path(path)
    root = Path(image_root) if image_root is not None else path.parent
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                image = str(obj["image"])
                raw_boxes = obj.get("boxes", [])
                if not isinstance(raw_boxes, list):
                    raise TypeError("'boxes' must be a list")
                candidates = obj.get("candidates")
                candidates = None if candidates is None else int(candidates)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise AnnotationError(f"{path}:{lineno}: {exc}") from exc
            entry = AnnotationEntry(image, [_parse_box(b, lineno) for b in raw_boxes], candidates)
            if validate:
                img_path = Path(image) if Path(image).is_absolute() else root / image
                if img_path.is_file():
                    img = load_image(img_path)
                    for b in entry.boxes:
                        if b.bbox.x2 > img.width or b.bbox.y2 > img.height:
                            raise AnnotationError(
                                f"{path}:{lineno}: box {b.bbox.as_tuple()} exceeds "
                                f"{img.width}x{img.height} image {image}"
                            )
            entries.append(entry)
    return AnnotationSet(entries)


def entry_to_json(entry: AnnotationEntry) -> str:
    boxes = []
    for b in entry.boxes:
        d = {"x": b.bbox.x, "y": b.bbox.y, "w": b.bbox.w, "h": b.bbox.h, "label": b.label}
        if b.confidence is not None:
            d["confidence"] = round(b.confidence, 6)
        boxes.append(d)
    obj = {"image": entry.image, "boxes": boxes}
    if entry.candidates is not None:
        obj["candidates"] = entry.candidates
    return json.dumps(obj)


def save_annotations(annotations: AnnotationSet, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in annotations.entries:
            fh.write(entry_to_json(e) + "\n")


CROP_NAME = re.compile(r"^(?P<stem>.+)_(?P<i>\d+)_(?P<x>\d+)_(?P<y>\d+)_(?P<w>\d+)_(?P<h>\d+)$")


def crop_name(stem: str, index: int, box: BBox) -> str:
    return f"{stem}_{index}_{box.x}_{box.y}_{box.w}_{box.h}.png"


def parse_crop_name(name: str | Path) -> tuple[str, int, BBox]:
    m = CROP_NAME.match(Path(name).stem)
    if not m:
        raise FormatError(f"not an exported crop name: {name}")
    return m["stem"], int(m["i"]), BBox(int(m["x"]), int(m["y"]), int(m["w"]), int(m["h"]))


def crop_and_export(img: Image, boxes: list[BBox], out_dir: str | Path, stem: str = "image") -> list[Path]:
    """Write one PNG per box, named so the box can be recovered from the file name."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for i, box in enumerate(boxes):
        target = out_dir / crop_name(stem, i, box)
        save_image(img.crop(box.x, box.y, box.w, box.h), target)
        written.append(target)
    return written
