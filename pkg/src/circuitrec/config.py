"""Layered run configuration: defaults, then an INI file, then command-line flags.

The resolved configuration renders back to INI, so a run can be repeated
exactly by feeding its echoed config to ``--config``.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from .errors import ConfigError
from .imaging import ColorSpace
from .nanocnn import NetworkSpec, TrainConfig
from .proposal import SimilarityConfig
from .segmentation import SegmentationParams


def _bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# (section, key) -> (parser, default)
FIELDS: dict[tuple[str, str], tuple[Callable[[str], Any], Any]] = {
    ("run", "seed"): (int, 0),
    ("proposal", "color_space"): (lambda s: ColorSpace(s).value, "rgb"),
    ("proposal", "use_colour"): (_bool, True),
    ("proposal", "use_size"): (_bool, True),
    ("proposal", "use_fill"): (_bool, True),
    ("proposal", "merge_threshold"): (float, 0.2),
    ("proposal", "thumbnail_long_side"): (int, 400),
    ("proposal", "min_box_frac"): (float, 0.001),
    ("proposal", "max_box_frac"): (float, 0.9),
    ("segmentation", "sigma"): (float, 0.8),
    ("segmentation", "k"): (float, 200.0),
    ("segmentation", "min_size"): (int, 50),
    ("train", "batch_size"): (int, 64),
    ("train", "learning_rate"): (float, 1e-6),
    ("train", "l2"): (float, 1e-6),
    ("train", "epochs"): (int, 1000),
    ("network", "input_size"): (int, 150),
    ("network", "fc1_bias"): (_bool, True),
    ("network", "dropout_rate"): (float, 0.5),
}


@dataclass(frozen=True)
class RunConfig:
    values: dict[tuple[str, str], Any]

    def __getitem__(self, key: tuple[str, str]) -> Any:
        return self.values[key]

    @property
    def seed(self) -> int:
        return self.values[("run", "seed")]

    def section(self, name: str) -> dict[str, Any]:
        return {k: v for (s, k), v in self.values.items() if s == name}

    def similarity(self) -> SimilarityConfig:
        return SimilarityConfig(**self.section("proposal"))

    def segmentation(self) -> SegmentationParams:
        return SegmentationParams(**self.section("segmentation"))

    def training(self) -> TrainConfig:
        return TrainConfig(seed=self.seed, **self.section("train"))

    def network(self, num_classes: int) -> NetworkSpec:
        return NetworkSpec(num_classes=num_classes, **self.section("network"))

    def to_ini(self) -> str:
        lines = []
        current = None
        for (section, key), value in self.values.items():
            if section != current:
                if current is not None:
                    lines.append("")
                lines.append(f"[{section}]")
                current = section
            text = str(value).lower() if isinstance(value, bool) else repr(value) if isinstance(value, float) else str(value)
            lines.append(f"{key} = {text}")
        return "\n".join(lines) + "\n"


def _parse(section: str, key: str, raw: Any) -> Any:
    if (section, key) not in FIELDS:
        raise ConfigError(f"unknown config key [{section}] {key}")
    parser, _ = FIELDS[(section, key)]
    if not isinstance(raw, str):
        raw = str(raw)
    try:
        return parser(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from exc


def read_ini(path: str | Path) -> dict[tuple[str, str], Any]:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return {(s, k): _parse(s, k, v) for s in parser.sections() for k, v in parser[s].items()}


def resolve(path: str | Path | None = None,
            overrides: dict[tuple[str, str], Any] | None = None) -> RunConfig:
    """Defaults < file < overrides. ``None`` overrides are ignored."""
    values = {key: default for key, (_, default) in FIELDS.items()}
    if path is not None:
        values.update(read_ini(path))
    for key, raw in (overrides or {}).items():
        if raw is not None:
            values[key] = _parse(*key, raw)
    cfg = RunConfig(values)
    # build once so bad combinations surface before any work starts
    cfg.similarity()
    cfg.segmentation()
    cfg.training()
    cfg.network(2)
    return cfg
