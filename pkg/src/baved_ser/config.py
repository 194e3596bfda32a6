"""Flat dotted-key experiment configuration.

Config files are plain text, one `key = value` per line, `#` comments,
keys matching the names each module documents (`backbone.name`,
`train.epochs`, ...). Unknown keys are hard errors: a silently ignored
typo corrupts an experiment. Every value has a default, so the empty
file is a valid config (it still needs `dataset.root` to touch a real
corpus).

    dataset.root            = /data/BAVED
    split.ratios            = 0.8,0.2
    split.seed              = 42
    split.speaker_disjoint  = false
    backbone.name           = wav2vec2_arabic
    backbone.checkpoint_ref =          # default per name; "stub" for the test backbone
    backbone.layer          =          # hidden layer to export; empty = last
    cache.root              =          # empty = <out>/feature_cache
    cache.enabled           = true
    head.kind               = mlp      # mlp | bilstm
    head.hidden_sizes       = 256,64
    head.lstm_hidden        = 50
    head.dropout            = 0.1
    head.activation         = relu     # relu | tanh
    head.pooling            = mean     # mean | max
    train.epochs            = 5
    train.batch_size        = 32
    train.learning_rate     = 0.001
    train.seed              = 0
    train.select_best       = false
    compare.backbones       = wav2vec2_arabic,hubert_base,hubert_large
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .backbones import BackboneId, BACKBONE_WIDTHS, STUB_CHECKPOINT
from .heads import HeadConfig


class ConfigError(Exception):
    """Unknown key, unparseable value, or an invariant violation."""


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_int_list(raw: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in raw.split(",") if tok.strip())


def _parse_ratio_pair(raw: str) -> tuple[float, float]:
    parts = [float(tok) for tok in raw.split(",")]
    if len(parts) != 2:
        raise ValueError(f"expected two comma-separated fractions, got {raw!r}")
    return parts[0], parts[1]


def _parse_name_list(raw: str) -> tuple[str, ...]:
    return tuple(tok.strip() for tok in raw.split(",") if tok.strip())


def _parse_optional_int(raw: str) -> int | None:
    raw = raw.strip()
    if not raw or raw == "last":
        return None
    return int(raw)


# key -> (parser, default as written in a config file)
SCHEMA: dict[str, tuple] = {
    "dataset.root": (str, ""),
    "split.ratios": (_parse_ratio_pair, "0.8,0.2"),
    "split.seed": (int, "42"),
    "split.speaker_disjoint": (_parse_bool, "false"),
    "backbone.name": (str, "wav2vec2_arabic"),
    "backbone.checkpoint_ref": (str, ""),
    "backbone.layer": (_parse_optional_int, ""),
    "cache.root": (str, ""),
    "cache.enabled": (_parse_bool, "true"),
    "head.kind": (str, "mlp"),
    "head.hidden_sizes": (_parse_int_list, "256,64"),
    "head.lstm_hidden": (int, "50"),
    "head.dropout": (float, "0.1"),
    "head.activation": (str, "relu"),
    "head.pooling": (str, "mean"),
    "train.epochs": (int, "5"),
    "train.batch_size": (int, "32"),
    "train.learning_rate": (float, "0.001"),
    "train.seed": (int, "0"),
    "train.select_best": (_parse_bool, "false"),
    "compare.backbones": (_parse_name_list, "wav2vec2_arabic,hubert_base,hubert_large"),
}


def parse_flat_config(text: str) -> dict[str, str]:
    """Syntax pass only: `key = value` lines into a dict of raw strings."""
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value.strip()
    return values


@dataclass
class ExperimentConfig:
    """Resolved experiment parameters; sufficient (with the corpus) to
    re-execute a run bit-identically when the backbone is the stub."""

    dataset_root: str = ""
    split_ratios: tuple[float, float] = (0.8, 0.2)
    split_seed: int = 42
    speaker_disjoint: bool = False
    backbone: BackboneId = field(default_factory=lambda: BackboneId("wav2vec2_arabic"))
    layer: int | None = None
    cache_root: str = ""
    cache_enabled: bool = True
    head: HeadConfig = field(default_factory=HeadConfig)
    epochs: int = 5
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0
    select_best: bool = False
    compare_backbones: tuple[str, ...] = ("wav2vec2_arabic", "hubert_base", "hubert_large")

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"train.epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"train.batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigError(f"train.learning_rate must be > 0, got {self.learning_rate}")
        for name in self.compare_backbones:
            if name not in BACKBONE_WIDTHS:
                raise ConfigError(f"compare.backbones: unknown backbone {name!r}")

    def to_flat_dict(self) -> dict[str, object]:
        """The resolved config under its file keys (for run manifests)."""
        return {
            "dataset.root": self.dataset_root,
            "split.ratios": list(self.split_ratios),
            "split.seed": self.split_seed,
            "split.speaker_disjoint": self.speaker_disjoint,
            "backbone.name": self.backbone.name,
            "backbone.checkpoint_ref": self.backbone.checkpoint_ref,
            "backbone.layer": self.layer,
            "cache.root": self.cache_root,
            "cache.enabled": self.cache_enabled,
            "head.kind": self.head.kind,
            "head.hidden_sizes": list(self.head.hidden_sizes),
            "head.lstm_hidden": self.head.lstm_hidden,
            "head.dropout": self.head.dropout,
            "head.activation": self.head.activation,
            "head.pooling": self.head.pooling,
            "train.epochs": self.epochs,
            "train.batch_size": self.batch_size,
            "train.learning_rate": self.learning_rate,
            "train.seed": self.seed,
            "train.select_best": self.select_best,
            "compare.backbones": list(self.compare_backbones),
            "optimizer": "adam(beta1=0.9, beta2=0.999, eps=1e-08)",
            "loss": "mean cross-entropy over softmax logits",
        }


def build_config(raw: dict[str, str]) -> ExperimentConfig:
    """Typed values from raw key/value strings; unknown keys are errors."""
    unknown = sorted(set(raw) - set(SCHEMA))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")

    typed: dict[str, object] = {}
    for key, (parser, default) in SCHEMA.items():
        raw_value = raw.get(key, default)
        try:
            typed[key] = parser(raw_value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {raw_value!r} ({exc})") from exc

    try:
        head = HeadConfig(
            kind=typed["head.kind"],
            hidden_sizes=typed["head.hidden_sizes"],
            lstm_hidden=typed["head.lstm_hidden"],
            dropout=typed["head.dropout"],
            activation=typed["head.activation"],
            pooling=typed["head.pooling"],
        )
        backbone = BackboneId(typed["backbone.name"], typed["backbone.checkpoint_ref"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    return ExperimentConfig(
        dataset_root=typed["dataset.root"],
        split_ratios=typed["split.ratios"],
        split_seed=typed["split.seed"],
        speaker_disjoint=typed["split.speaker_disjoint"],
        backbone=backbone,
        layer=typed["backbone.layer"],
        cache_root=typed["cache.root"],
        cache_enabled=typed["cache.enabled"],
        head=head,
        epochs=typed["train.epochs"],
        batch_size=typed["train.batch_size"],
        learning_rate=typed["train.learning_rate"],
        seed=typed["train.seed"],
        select_best=typed["train.select_best"],
        compare_backbones=typed["compare.backbones"],
    )


def load_config(path: str | Path | None = None, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    """Parse a config file (optional) plus raw-string overrides."""
    raw: dict[str, str] = {}
    if path is not None:
        config_path = Path(path)
        if not config_path.is_file():
            raise ConfigError(f"config file not found: {config_path}")
        raw = parse_flat_config(config_path.read_text())
    for key, value in (overrides or {}).items():
        raw[key] = value
    return build_config(raw)


def stub_variant(config: ExperimentConfig) -> ExperimentConfig:
    """Same experiment with the backbone swapped for its stub twin."""
    return replace_backbone(config, BackboneId(config.backbone.name, STUB_CHECKPOINT))


def replace_backbone(config: ExperimentConfig, backbone: BackboneId) -> ExperimentConfig:
    import dataclasses

    return dataclasses.replace(config, backbone=backbone)
