import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from circuitrec.dataset import (
    BLANK, AnnotationEntry, AnnotationError, AnnotationSet, BoxLabel, crop_and_export, crop_name,
    entry_to_json, load_annotations, load_cropped_dataset, parse_crop_name, save_annotations,
)
from circuitrec.errors import ConfigError, FormatError
from circuitrec.imaging import Image, load_image, save_image
from circuitrec.proposal import BBox
from circuitrec.synthetic import FIXTURE_CLASSES, write_fixture_dataset


def test_fixture_crops(mini_root):
    ds = load_cropped_dataset(mini_root / "crops")
    assert ds.classes == [BLANK] + FIXTURE_CLASSES
    assert len(ds.train) == 12 and len(ds.test) == 4
    assert ds.label_index("chip") == 2
    assert all(s.path.parent.name == ds.classes[s.label] for s in ds.train + ds.test)


def test_fixture_annotations(mini_root):
    ann = load_annotations(mini_root / "gt.jsonl")
    assert len(ann.entries) == 4 and ann.classes == FIXTURE_CLASSES
    assert all(len(e.boxes) == 3 for e in ann.entries)
    assert sum(1 for p in mini_root.rglob("*.png")) == 20


def test_fixture_is_reproducible(tmp_path, mini_root):
    write_fixture_dataset(tmp_path, seed=7)
    assert (tmp_path / "gt.jsonl").read_text() == (mini_root / "gt.jsonl").read_text()
    for p in mini_root.rglob("*.png"):
        other = tmp_path / p.relative_to(mini_root)
        assert np.array_equal(load_image(p).pixels, load_image(other).pixels)


def test_missing_split(tmp_path):
    (tmp_path / "train" / "a").mkdir(parents=True)
    with pytest.raises(ConfigError):
        load_cropped_dataset(tmp_path)


def test_class_vocabulary_is_union(tmp_path):
    img = Image(np.zeros((4, 4, 3), np.uint8))
    for split, cls in (("train", "a"), ("train", "b"), ("test", "c")):
        (tmp_path / split / cls).mkdir(parents=True)
        save_image(img, tmp_path / split / cls / "x.png")
    ds = load_cropped_dataset(tmp_path)
    assert ds.classes == ["a", "b", "c"] and ds.test[0].label == 2


def test_empty_annotation_file(tmp_path):
    (tmp_path / "a.jsonl").write_text("")
    assert load_annotations(tmp_path / "a.jsonl").entries == []


def test_two_boxes_and_blank_lines(tmp_path):
    p = tmp_path / "a.jsonl"
    p.write_text('\n{"image": "x.jpg", "boxes": [{"x": 1, "y": 2, "w": 3, "h": 4, "label": "relay"},'
                 ' {"x": 5, "y": 6, "w": 7, "h": 8, "label": "led", "confidence": 0.25}]}\n\n')
    (e,) = load_annotations(p).entries
    assert e.image == "x.jpg" and [b.bbox.as_tuple() for b in e.boxes] == [(1, 2, 3, 4), (5, 6, 7, 8)]
    assert e.boxes[0].confidence is None and e.boxes[1].confidence == 0.25


@pytest.mark.parametrize("line", [
    "not json", '{"boxes": []}', '{"image": "a", "boxes": {}}',
    '{"image": "a", "boxes": [{"x": 1, "y": 1, "w": 0, "h": 1, "label": "r"}]}',
    '{"image": "a", "boxes": [{"x": -1, "y": 1, "w": 2, "h": 1, "label": "r"}]}',
    '{"image": "a", "boxes": [{"x": 1, "y": 1, "w": 2, "label": "r"}]}',
])
def test_parse_errors_name_the_line(tmp_path, line):
    p = tmp_path / "a.jsonl"
    p.write_text('{"image": "ok", "boxes": []}\n' + line + "\n")
    with pytest.raises(AnnotationError, match="2"):
        load_annotations(p)


def test_annotation_error_is_format_error():
    assert issubclass(AnnotationError, FormatError)


def test_out_of_bounds_box(tmp_path):
    save_image(Image(np.zeros((10, 20, 3), np.uint8)), tmp_path / "im.png")
    p = tmp_path / "a.jsonl"
    p.write_text('{"image": "im.png", "boxes": [{"x": 15, "y": 0, "w": 6, "h": 5, "label": "r"}]}\n')
    with pytest.raises(AnnotationError, match="exceeds"):
        load_annotations(p)
    assert len(load_annotations(p, validate=False).entries) == 1


label_st = st.text("abcxyz_-", min_size=1, max_size=8)
box_label = st.builds(
    BoxLabel,
    st.builds(BBox, st.integers(0, 500), st.integers(0, 500), st.integers(1, 300), st.integers(1, 300)),
    label_st,
    st.none() | st.integers(0, 10**6).map(lambda v: v / 10**6),
)
entries = st.builds(AnnotationEntry, st.text("abc/._", min_size=1, max_size=12),
                    st.lists(box_label, max_size=5), st.none() | st.integers(0, 999))


@given(st.lists(entries, max_size=4))
def test_round_trip(tmp_path_factory, items):
    path = tmp_path_factory.mktemp("rt") / "a.jsonl"
    save_annotations(AnnotationSet(items), path)
    back = load_annotations(path, validate=False)
    assert back.entries == items
    assert [entry_to_json(e) for e in back.entries] == path.read_text().splitlines()


def test_entry_json_keys():
    obj = json.loads(entry_to_json(AnnotationEntry("a.png", [BoxLabel(BBox(1, 2, 3, 4), "r", 1 / 3)], 12)))
    assert obj == {"image": "a.png", "boxes": [{"x": 1, "y": 2, "w": 3, "h": 4, "label": "r",
                                                "confidence": 0.333333}], "candidates": 12}


def test_ground_truth_views():
    ann = AnnotationSet([AnnotationEntry("a", [BoxLabel(BBox(0, 0, 2, 2), "r")])])
    assert ann.ground_truth() == {"a": [(BBox(0, 0, 2, 2), "r")]}
    assert ann.box_map() == {"a": [BBox(0, 0, 2, 2)]}


def test_crop_names():
    assert crop_name("scene_01", 3, BBox(5, 6, 7, 8)) == "scene_01_3_5_6_7_8.png"
    assert parse_crop_name("dir/scene_01_3_5_6_7_8.png") == ("scene_01", 3, BBox(5, 6, 7, 8))
    with pytest.raises(FormatError):
        parse_crop_name("plain.png")


def test_crop_and_export_pixels(tmp_path, rng):
    px = rng.integers(0, 256, (40, 50, 3), dtype=np.uint8)
    boxes = [BBox(0, 0, 50, 40), BBox(10, 5, 7, 9)]
    paths = crop_and_export(Image(px), boxes, tmp_path / "out", stem="p")
    assert [p.name for p in paths] == ["p_0_0_0_50_40.png", "p_1_10_5_7_9.png"]
    for path in paths:
        _, _, b = parse_crop_name(path)
        assert np.array_equal(load_image(path).pixels, px[b.y : b.y2, b.x : b.x2])
