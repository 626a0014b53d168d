"""Command-line entry point: ``circuitrec <subcommand> ...``.

Exit codes: 0 success, 1 internal error, 2 usage error or unreadable input,
3 a requested check failed.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as config_mod
from .dataset import (
    BLANK, AnnotationEntry, BoxLabel, crop_and_export, entry_to_json,
    load_annotations, load_cropped_dataset,
)
from .errors import ConfigError, FormatError
from .evaluation import Detection, EvalReport, bench, class_abo, final_accuracy, mabo
from .features import FeatureMode, feature_vector
from .imaging import convert, load_image, resize_long_side, save_image
from .nanocnn import (
    build_network, load_weights, prepare_batch, run_gradient_check, save_weights, train,
    write_history_csv,
)
from .nanocnn.train import WEIGHTS_MAGIC
from .proposal import SimilarityConfig, propose_detailed
from .segmentation import label_image, segment
from .svm import SVM_MAGIC, load_svm, save_svm, svm_predict_batch, svm_train

log = logging.getLogger("circuitrec")

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_CHECK = 0, 1, 2, 3
PREDICT_BATCH = 32


class CheckFailed(Exception):
    pass


def _emit(line: str) -> None:
    sys.stdout.write(line + "\n")


def _overrides(args: argparse.Namespace) -> dict:
    o = {
        ("run", "seed"): getattr(args, "seed", None),
        ("proposal", "color_space"): getattr(args, "color_space", None),
        ("proposal", "thumbnail_long_side"): getattr(args, "thumb_long", None),
        ("proposal", "merge_threshold"): getattr(args, "merge_threshold", None),
        ("proposal", "min_box_frac"): getattr(args, "min_box_frac", None),
        ("proposal", "max_box_frac"): getattr(args, "max_box_frac", None),
        ("segmentation", "sigma"): getattr(args, "sigma", None),
        ("segmentation", "k"): getattr(args, "k", None),
        ("segmentation", "min_size"): getattr(args, "min_size", None),
        ("train", "batch_size"): getattr(args, "batch", None),
        ("train", "learning_rate"): getattr(args, "lr", None),
        ("train", "l2"): getattr(args, "l2", None),
        ("train", "epochs"): getattr(args, "epochs", None),
        ("network", "input_size"): getattr(args, "input_size", None),
        ("network", "fc1_bias"): getattr(args, "fc1_bias", None),
        ("network", "dropout_rate"): getattr(args, "dropout", None),
    }
    sims = getattr(args, "sim", None)
    if sims is not None:
        chosen = {s.strip() for s in sims.split(",") if s.strip()}
        unknown = chosen - {"color", "colour", "size", "fill"}
        if unknown:
            raise ConfigError(f"unknown similarity: {', '.join(sorted(unknown))}")
        o[("proposal", "use_colour")] = bool(chosen & {"color", "colour"})
        o[("proposal", "use_size")] = "size" in chosen
        o[("proposal", "use_fill")] = "fill" in chosen
    return o


def _detections_from(entry: AnnotationEntry) -> list[Detection]:
    return [Detection(b.bbox, b.label, 1.0 if b.confidence is None else b.confidence) for b in entry.boxes]


def _image_key(image: str, ann_file: str | Path) -> str:
    """Canonical key for an annotation entry so files written from different
    working directories still line up: relative paths resolve against the
    annotation file first, then the current directory."""
    p = Path(image)
    for cand in ([p] if p.is_absolute() else [Path(ann_file).parent / p, p]):
        if cand.exists():
            return str(cand.resolve())
    return image


def _keyed(ann, ann_file) -> dict:
    return {_image_key(e.image, ann_file): e for e in ann.entries}


def _read_magic(path: str | Path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read(8)


# -- subcommands ------------------------------------------------------------

def cmd_propose(args, cfg) -> int:
    sim, seg = cfg.similarity(), cfg.segmentation()
    for path in sorted(args.images):
        img = load_image(path)
        res = propose_detailed(img, sim, seg)
        entry = AnnotationEntry(path, [BoxLabel(b, "?") for b in res.boxes], len(res.candidates))
        _emit(entry_to_json(entry))
        log.info("%s: %d regions, %d candidates, %d after merging", path,
                 res.num_regions, len(res.candidates), len(res.merged))
        if args.debug_dir:
            out = Path(args.debug_dir)
            out.mkdir(parents=True, exist_ok=True)
            thumb, _ = resize_long_side(img, sim.thumbnail_long_side)
            labels = segment(convert(thumb, sim.color_space), seg)
            save_image(label_image(labels), out / f"{Path(path).stem}_segments.png")
    return EXIT_OK


def cmd_crop(args, cfg) -> int:
    boxes_by_image = None
    if args.boxes:
        boxes_by_image = load_annotations(args.boxes, validate=False).box_map()
    for path in sorted(args.images):
        img = load_image(path)
        if boxes_by_image is not None:
            boxes = boxes_by_image.get(path, [])
        else:
            boxes = propose_detailed(img, cfg.similarity(), cfg.segmentation()).boxes
        written = crop_and_export(img, boxes, args.out, stem=Path(path).stem)
        log.info("%s: wrote %d crops", path, len(written))
    return EXIT_OK


def cmd_train_cnn(args, cfg) -> int:
    data = load_cropped_dataset(args.data)
    spec = cfg.network(len(data.classes))
    tcfg = cfg.training()
    net = build_network(spec, seed=cfg.seed)
    x = prepare_batch([s.image for s in data.train], spec.input_size)
    y = np.array([s.label for s in data.train])
    xt = prepare_batch([s.image for s in data.test], spec.input_size) if data.test else None
    yt = np.array([s.label for s in data.test]) if data.test else None

    def report(stats) -> None:
        log.info("epoch %d loss %.5f train %.4f test %.4f", stats.epoch, stats.loss,
                 stats.train_acc, stats.test_acc)

    weights, history = train(net, x, y, tcfg, xt, yt, on_epoch=report)
    weights.classes = list(data.classes)
    digest = save_weights(weights, args.out)
    if args.history:
        write_history_csv(history, args.history)
    last = history[-1] if history else None
    summary = {"model": str(args.out), "sha256": digest, "classes": data.classes,
               "train_acc": last.train_acc if last else None,
               "test_acc": None if last is None or np.isnan(last.test_acc) else last.test_acc}
    _emit(json.dumps(summary) if args.json else
          f"saved {args.out} ({len(data.classes)} classes, sha256 {digest[:12]})")
    return EXIT_OK


def _features(crops, mode: FeatureMode) -> np.ndarray:
    return np.stack([feature_vector(c, mode).values for c in crops])


def cmd_train_svm(args, cfg) -> int:
    data = load_cropped_dataset(args.data)
    mode = FeatureMode(args.mode)
    x = _features([s.image for s in data.train], mode)
    y = np.array([s.label for s in data.train])
    model = svm_train(x, y, mode, epochs=args.svm_epochs, lr=args.svm_lr, reg=args.svm_reg,
                      seed=cfg.seed, classes=list(data.classes))
    train_acc = float(np.mean(svm_predict_batch(model, x) == y))
    test_acc = None
    if data.test:
        xt = _features([s.image for s in data.test], mode)
        test_acc = float(np.mean(svm_predict_batch(model, xt) == np.array([s.label for s in data.test])))
    digest = save_svm(model, args.out)
    summary = {"model": str(args.out), "sha256": digest, "mode": mode.value,
               "dims": mode.length, "train_acc": train_acc, "test_acc": test_acc}
    _emit(json.dumps(summary) if args.json else
          f"saved {args.out} mode {mode.value} ({mode.length} dims) train {train_acc:.4f}"
          + ("" if test_acc is None else f" test {test_acc:.4f}"))
    return EXIT_OK


class _Classifier:
    """Wraps either saved model kind behind one batch-predict call."""

    def __init__(self, path: str | Path):
        magic = _read_magic(path)
        if magic == WEIGHTS_MAGIC:
            w = load_weights(path)
            self.net, self.svm, self.classes = w.to_network(), None, w.classes
        elif magic == SVM_MAGIC:
            self.svm = load_svm(path)
            self.net, self.classes = None, self.svm.classes
        else:
            raise FormatError(f"{path}: not a model file")

    def predict(self, crops) -> list[tuple[str, float]]:
        if not crops:
            return []
        if self.net is not None:
            size = self.net.input_shape[0]
            probs = np.concatenate([
                self.net.predict_proba(prepare_batch(crops[i : i + PREDICT_BATCH], size, self.net.dtype))
                for i in range(0, len(crops), PREDICT_BATCH)
            ])
        else:
            scores = self.svm.scores(_features(crops, self.svm.mode))
            e = np.exp(scores - scores.max(axis=1, keepdims=True))
            probs = e / e.sum(axis=1, keepdims=True)
        ks = probs.argmax(axis=1)
        names = self.classes or [str(i) for i in range(probs.shape[1])]
        return [(names[k], float(probs[i, k])) for i, k in enumerate(ks)]


def cmd_detect(args, cfg) -> int:
    clf = _Classifier(args.model)
    sim, seg = cfg.similarity(), cfg.segmentation()
    for path in sorted(args.images):
        img = load_image(path)
        boxes = propose_detailed(img, sim, seg).boxes
        preds = clf.predict([img.crop(b.x, b.y, b.w, b.h) for b in boxes])
        kept = [BoxLabel(b, label, conf) for b, (label, conf) in zip(boxes, preds)
                if args.keep_blank or label != BLANK]
        _emit(entry_to_json(AnnotationEntry(path, kept)))
    return EXIT_OK


def cmd_eval(args, cfg) -> int:
    gt = load_annotations(args.annotations, validate=not args.no_validate)
    truth = {k: [(b.bbox, b.label) for b in e.boxes] for k, e in _keyed(gt, args.annotations).items()}
    report = EvalReport()
    if args.proposals:
        props = _keyed(load_annotations(args.proposals, validate=False), args.proposals)
        pmap = {k: [b.bbox for b in e.boxes] for k, e in props.items()}
        report.class_abo = class_abo(truth, pmap)
        report.mabo = mabo(truth, pmap)
        report.box_counts = {e.image: (e.candidates, len(e.boxes)) for _, e in sorted(props.items())}
    if args.detections:
        dets = _keyed(load_annotations(args.detections, validate=False), args.detections)
        dmap = {k: _detections_from(e) for k, e in dets.items()}
        report.accuracy = final_accuracy(dmap, truth, args.iou)
    if report.mabo is None and report.accuracy is None:
        raise ConfigError("eval needs --proposals and/or --detections")
    if args.csv:
        Path(args.csv).write_text(report.to_csv())
    if args.json:
        _emit(json.dumps({"class_abo": report.class_abo, "mabo": report.mabo,
                          "accuracy": report.accuracy}))
    else:
        _emit(report.to_table())
    if args.min_mabo is not None and (report.mabo is None or report.mabo < args.min_mabo):
        raise CheckFailed(f"MABO {report.mabo} below {args.min_mabo}")
    if args.min_accuracy is not None and (report.accuracy is None or report.accuracy < args.min_accuracy):
        raise CheckFailed(f"accuracy {report.accuracy} below {args.min_accuracy}")
    return EXIT_OK


def cmd_bench(args, cfg) -> int:
    images = [load_image(p) for p in sorted(args.images)]
    seg = cfg.segmentation()
    base = cfg.section("proposal")
    results = {}
    for long_side in args.thumbs:
        sim = SimilarityConfig(**{**base, "thumbnail_long_side": long_side})
        stats = bench(lambda im: propose_detailed(im, sim, seg), [(im,) for im in images], args.repetitions)
        results[f"propose@{long_side}"] = (stats.mean / len(images), stats.min / len(images))
    if args.model:
        clf = _Classifier(args.model)
        crops = [images[0].crop(0, 0, min(64, images[0].width), min(64, images[0].height))]
        stats = bench(clf.predict, [(crops,)], args.repetitions)
        results["predict_crop"] = (stats.mean, stats.min)
    if args.json:
        _emit(json.dumps({k: {"mean_s": m, "min_s": n} for k, (m, n) in results.items()}))
    else:
        _emit(f"{'stage':<20} {'mean_s':>10} {'min_s':>10}")
        for k, (m, n) in results.items():
            _emit(f"{k:<20} {m:>10.4f} {n:>10.4f}")
    return EXIT_OK


def cmd_gradcheck(args, cfg) -> int:
    res = run_gradient_check(seed=cfg.seed, eps=args.eps, linear=args.linear, dropout=args.dropout)
    if args.json:
        _emit(json.dumps({"max_rel_error": res.max_rel_error, "per_tensor": res.per_tensor}))
    else:
        for name, err in res.per_tensor.items():
            _emit(f"{name:<24} {err:.3e}")
        _emit(f"max relative error {res.max_rel_error:.3e}")
    if not res.max_rel_error < args.threshold:
        raise CheckFailed(f"max relative error {res.max_rel_error:.3e} >= {args.threshold:g}")
    return EXIT_OK


def label_color(label: str) -> tuple[int, int, int]:
    d = hashlib.sha256(label.encode("utf-8")).digest()
    # keep colors away from near-white so outlines stay visible
    return tuple(int(c) % 200 for c in d[:3])


def cmd_render(args, cfg) -> int:
    from PIL import Image as PILImage, ImageDraw

    dets = load_annotations(args.detections, validate=False)
    entry = next((e for e in dets.entries if e.image == args.image), None)
    if entry is None and len(dets.entries) == 1:
        entry = dets.entries[0]
    if entry is None:
        raise ConfigError(f"no detections for {args.image}")
    img = load_image(args.image)
    canvas = PILImage.fromarray(np.ascontiguousarray(img.pixels), "RGB")
    draw = ImageDraw.Draw(canvas)
    for b in entry.boxes:
        color = label_color(b.label)
        draw.rectangle([b.bbox.x, b.bbox.y, b.bbox.x2 - 1, b.bbox.y2 - 1], outline=color, width=2)
        text = b.label if b.confidence is None else f"{b.label} {b.confidence:.2f}"
        ty = b.bbox.y - 12 if b.bbox.y >= 12 else b.bbox.y + 2
        draw.text((b.bbox.x + 2, ty), text, fill=color)
    canvas.save(args.out)
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def _add_proposal_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("proposal")
    g.add_argument("--color-space", choices=["rgb", "hsv", "lab", "gray"])
    g.add_argument("--sim", help="comma list of color,size,fill")
    g.add_argument("--thumb-long", type=int, help="long side of the working thumbnail")
    g.add_argument("--merge-threshold", type=float, help="box merging overlap threshold")
    g.add_argument("--min-box-frac", type=float)
    g.add_argument("--max-box-frac", type=float)
    g.add_argument("--sigma", type=float, help="segmentation smoothing")
    g.add_argument("--k", type=float, help="segmentation scale")
    g.add_argument("--min-size", type=int, help="segmentation minimum component size")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="INI file")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--json", action="store_true", default=argparse.SUPPRESS,
                        help="machine-readable output")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="circuitrec", parents=[common],
                                     description="Circuit component detection and recognition.")
    parser.set_defaults(config=None, seed=None, json=False, verbose=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("propose", parents=[common], help="region proposals as JSON lines")
    p.add_argument("images", nargs="+")
    p.add_argument("--debug-dir", help="write segmentation images here")
    _add_proposal_flags(p)
    p.set_defaults(func=cmd_propose)

    p = sub.add_parser("crop", parents=[common], help="export proposal crops for sorting")
    p.add_argument("images", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--boxes", help="crop these JSON-lines boxes instead of proposing")
    _add_proposal_flags(p)
    p.set_defaults(func=cmd_crop)

    p = sub.add_parser("train-cnn", parents=[common], help="train the CNN on cropped samples")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--history", help="per-epoch CSV")
    p.add_argument("--input-size", type=int, choices=[150, 200, 300])
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--l2", type=float)
    p.add_argument("--dropout", type=float)
    p.add_argument("--fc1-bias", action=argparse.BooleanOptionalAction, default=None)
    p.set_defaults(func=cmd_train_cnn)

    p = sub.add_parser("train-svm", parents=[common], help="train the SVM baseline")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=[m.value for m in FeatureMode], default="color")
    p.add_argument("--svm-epochs", type=int, default=300)
    p.add_argument("--svm-lr", type=float, default=0.1)
    p.add_argument("--svm-reg", type=float, default=1e-3)
    p.set_defaults(func=cmd_train_svm)

    p = sub.add_parser("detect", parents=[common], help="propose, classify, emit detections")
    p.add_argument("images", nargs="+")
    p.add_argument("--model", required=True, help="CNN or SVM model file")
    p.add_argument("--keep-blank", action="store_true")
    _add_proposal_flags(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", parents=[common], help="MABO and final accuracy")
    p.add_argument("--annotations", required=True)
    p.add_argument("--proposals")
    p.add_argument("--detections")
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--csv")
    p.add_argument("--min-mabo", type=float)
    p.add_argument("--min-accuracy", type=float)
    p.add_argument("--no-validate", action="store_true", help="skip image bounds checks")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", parents=[common], help="stage timings")
    p.add_argument("images", nargs="+")
    p.add_argument("--repetitions", type=int, default=3)
    p.add_argument("--thumbs", type=lambda s: [int(v) for v in s.split(",")], default=[400, 800])
    p.add_argument("--model")
    _add_proposal_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient check")
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--threshold", type=float, default=1e-4)
    p.add_argument("--linear", action="store_true")
    p.add_argument("--dropout", action="store_true")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("render", parents=[common], help="draw detections onto an image")
    p.add_argument("image")
    p.add_argument("--detections", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        overrides = _overrides(args)
        if args.command == "gradcheck":
            # this subcommand reuses --dropout as a switch, not a rate
            overrides.pop(("network", "dropout_rate"))
        cfg = config_mod.resolve(args.config, overrides)
        sys.stderr.write(f"# effective config ({args.command})\n{cfg.to_ini()}")
        return args.func(args, cfg)
    except CheckFailed as exc:
        sys.stderr.write(f"check failed: {exc}\n")
        return EXIT_CHECK
    except (ConfigError, FormatError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        sys.stderr.write(f"internal error: {type(exc).__name__}: {exc}\n")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
