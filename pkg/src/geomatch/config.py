"""Run configuration: file loading, flag overrides, and the config hash
embedded in every output artifact."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InputError
from .matcher import InferenceConfig
from .trainer.loop import TrainConfig
from .validation import validate

DEFAULT_ALIGN_VARIANTS = ("identity", "hflip")


@dataclass(frozen=True)
class AlignConfig:
    variants: tuple[str, ...] = DEFAULT_ALIGN_VARIANTS
    metric: str = "imd"

    def __post_init__(self) -> None:
        if not self.variants or self.variants[0] != "identity":
            raise InputError("variant list must start with 'identity'")
        if self.metric not in ("imd", "mutual_nn"):
            raise InputError(f"unknown alignment metric {self.metric!r}")


@dataclass(frozen=True)
class RunConfig:
    dataset_root: str | None = None
    features_dir: str | None = None
    schema_dir: str | None = None
    output_dir: str | None = None
    seed: int = 0
    sampling: str = "bilinear"
    inference: InferenceConfig = field(default_factory=InferenceConfig)
    train: dict = field(default_factory=dict)
    align: AlignConfig = field(default_factory=AlignConfig)

    def __post_init__(self) -> None:
        for name in ("dataset_root", "features_dir", "schema_dir"):
            value = getattr(self, name)
            if value is not None and not Path(value).exists():
                raise InputError(f"{name} does not exist: {value}")

    def train_config(self, steps: int | None = None) -> TrainConfig:
        doc = dict(self.train)
        doc.pop("bottleneck_channels", None)
        doc.pop("blocks", None)
        if steps is not None:
            doc["steps"] = steps
        if "steps" not in doc:
            raise InputError("training needs a step count (config train.steps or --steps)")
        doc.setdefault("seed", self.seed)
        return TrainConfig(**doc)

    def to_dict(self) -> dict:
        return {
            "dataset_root": self.dataset_root,
            "features_dir": self.features_dir,
            "schema_dir": self.schema_dir,
            "output_dir": self.output_dir,
            "seed": self.seed,
            "sampling": self.sampling,
            "inference": {
                "mode": self.inference.mode,
                "window_size": self.inference.window_size,
                "temperature": self.inference.temperature,
                "kernel_sigma": self.inference.kernel_sigma,
            },
            "train": dict(self.train),
            "align": {"variants": list(self.align.variants), "metric": self.align.metric},
        }


def config_hash(cfg: RunConfig) -> str:
    """Hash of the semantic knobs only. Storage locations stay out of the
    blob so reruns over the same data hash identically wherever the files
    happen to live."""
    doc = cfg.to_dict()
    for key in ("dataset_root", "features_dir", "schema_dir", "output_dir"):
        doc.pop(key, None)
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def load_run_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Read the JSON config file (when given) and apply flag overrides on top."""
    doc: dict = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise InputError(f"config file not found: {path}") from None
        except json.JSONDecodeError as e:
            raise InputError(f"config file {path} is not valid JSON: {e}") from None
        validate(doc, "run_config")
    merged = dict(doc)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key.startswith("inference."):
            merged.setdefault("inference", {})
            merged["inference"] = dict(merged["inference"])
            merged["inference"][key.split(".", 1)[1]] = value
        elif key.startswith("train."):
            merged.setdefault("train", {})
            merged["train"] = dict(merged["train"])
            merged["train"][key.split(".", 1)[1]] = value
        elif key.startswith("align."):
            merged.setdefault("align", {})
            merged["align"] = dict(merged["align"])
            merged["align"][key.split(".", 1)[1]] = value
        else:
            merged[key] = value
    inference_doc = dict(merged.pop("inference", {}))
    sampling = inference_doc.pop("sampling", merged.pop("sampling", "bilinear"))
    inference = InferenceConfig(**inference_doc)
    align_doc = merged.pop("align", {})
    align = AlignConfig(variants=tuple(align_doc.get("variants", DEFAULT_ALIGN_VARIANTS)),
                        metric=align_doc.get("metric", "imd"))
    if sampling not in ("bilinear", "nearest"):
        raise InputError(f"unknown sampling {sampling!r}")
    return RunConfig(inference=inference, align=align, sampling=sampling, **merged)
