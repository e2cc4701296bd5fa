"""Flat ``key = value`` run configuration shared by every CLI command."""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .downsample import DownsampleConfig
from .model import ModelOptions
from .trainer import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # paths
    nodes: str = ""
    edges: str = ""
    checkpoint: str = "widen.ckpt"
    report: str = "widen_report.tsv"
    embeddings: str = "widen_embeddings.tsv"
    metrics: str = ""
    report_timing: bool = True
    # protocol
    protocol: str = "transductive"
    holdout: float = 0.2
    label_fraction: float = 1.0
    train_fraction: float = 0.6
    val_fraction: float = 0.2
    test_fraction: float = 0.2
    undirected: bool = True
    # model and training
    d: int = 128
    n_wide: int = 20
    n_deep: int = 20
    phi: int = 10
    batch_size: int = 32
    lr: float = 1e-4
    epochs: int = 100
    l2: float = 0.01
    optimizer: str = "adam"
    patience: int = 0
    seed: int = 0
    eval_seed: int = -1  # -1 reuses the training seed
    threads: int = 1
    deep_values: str = "packs"
    use_wide: bool = True
    use_deep: bool = True
    layers: int = 1
    # downsampling
    downsampling: str = "on"
    r_wide: float = 0.001
    r_deep: float = 0.001
    k_wide: int = 5
    k_deep: int = 5
    # synthetic fixtures
    pattern: str = "block"
    synth_nodes: int = 200
    node_types: int = 2
    edge_types: int = 3
    classes: int = 2
    homophily: float = 0.9
    feature_dim: int = 16
    separation: float = 1.0
    degree: int = 4

    @property
    def effective_eval_seed(self) -> int:
        return self.seed if self.eval_seed < 0 else self.eval_seed

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            d=self.d,
            n_wide=self.n_wide,
            n_deep=self.n_deep,
            phi=self.phi,
            batch_size=self.batch_size,
            lr=self.lr,
            epochs=self.epochs,
            l2=self.l2,
            downsample=DownsampleConfig(self.r_wide, self.r_deep, self.k_wide, self.k_deep, self.downsampling),
            seed=self.seed,
            optimizer=self.optimizer,
            patience=self.patience,
            threads=self.threads,
            model=self.model_options(),
        )

    def model_options(self) -> ModelOptions:
        return ModelOptions(self.deep_values, self.use_wide, self.use_deep, False, self.layers)

    def as_dict(self) -> dict:
        return asdict(self)


FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def coerce(key: str, raw: str):
    if key not in FIELD_TYPES:
        raise ConfigError(f"unknown configuration key {key!r}")
    kind = FIELD_TYPES[key]
    text = raw.strip()
    try:
        if kind == "bool":
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {key} (expected {kind})") from None
    return text


def read_config_file(path) -> dict[str, str]:
    values = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def write_config_file(cfg: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in cfg.as_dict().items():
            fh.write(f"{key} = {value}\n")


def build(file_values: dict[str, str], overrides: dict[str, str]) -> RunConfig:
    """File values first, then overrides; ``WIDEN_THREADS`` sits in between."""
    merged = dict(file_values)
    if "WIDEN_THREADS" in os.environ:
        merged["threads"] = os.environ["WIDEN_THREADS"]
    merged.update(overrides)
    cfg = RunConfig(**{k: coerce(k, v) for k, v in merged.items()})
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    if cfg.protocol not in ("transductive", "inductive"):
        raise ConfigError(f"protocol must be transductive or inductive, not {cfg.protocol!r}")
    if not 0.0 < cfg.holdout < 1.0:
        raise ConfigError("holdout must lie in (0, 1)")
    if cfg.pattern not in ("block", "two_hop"):
        raise ConfigError(f"unknown synthetic pattern {cfg.pattern!r}")
    try:
        cfg.train_config()
    except (ValueError, NotImplementedError) as exc:
        raise ConfigError(str(exc)) from None
