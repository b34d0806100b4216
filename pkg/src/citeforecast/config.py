"""Run configuration: training, PPR and generator settings.

Defaults follow the published implementation details where they exist.
A config file is a flat ``key: value`` YAML mapping whose keys are field
names of any of the three sections.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from .generator import GeneratorConfig
from .ppr import PPRConfig


@dataclass(frozen=True)
class TrainConfig:
    history_window: int = 3
    learning_rate: float = 0.001
    batch_size: int = 3000
    beta_time: float = 0.5
    horizon: int = 5
    epochs: int = 50
    seed: int = 0
    optimizer: str = "adam"
    patience: int | None = 10  # None/0 trains for all epochs
    # model widths
    dim: int = 32
    encoder_heads: int = 4
    encoder_layers: int = 2
    rnn_hidden: int = 32
    rnn_layers: int = 3
    rnn_cell: str = "gru"
    importance_heads: int = 4
    importance_layers: int = 2
    mlp_hidden: int = 20
    metapaths: tuple[str, ...] = ("PAP", "PVP", "PKP")
    self_edges: bool = True
    layer_norm: bool = True
    # publication-year split; None derives it from the dataset's year range
    train_years: tuple[int, ...] | None = None
    val_year: int | None = None
    test_year: int | None = None
    n_train_years: int = 6
    ppr_seed: int = 0

    def __post_init__(self):
        if self.history_window < 1:
            raise ValueError("history_window must be >= 1")
        if self.optimizer != "adam":
            raise ValueError("only the adam optimizer is supported")
        if self.dim % self.encoder_heads:
            raise ValueError("encoder_heads must divide dim")
        object.__setattr__(self, "metapaths", tuple(self.metapaths))
        if self.train_years is not None:
            object.__setattr__(self, "train_years", tuple(self.train_years))


@dataclass(frozen=True)
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    ppr: PPRConfig = field(default_factory=PPRConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)

    def to_dict(self) -> dict:
        return {"train": asdict(self.train), "ppr": asdict(self.ppr), "generator": asdict(self.generator)}

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        return cls(
            TrainConfig(**d.get("train", {})),
            PPRConfig(**d.get("ppr", {})),
            GeneratorConfig(**d.get("generator", {})),
        )

    def updated(self, **values) -> "RunConfig":
        """Copy with flat keys routed to whichever section declares them."""
        sections = {"train": self.train, "ppr": self.ppr, "generator": self.generator}
        pending = {name: {} for name in sections}
        for key, val in values.items():
            if key == "horizon":
                # one horizon shared by training and the generator
                pending["train"][key] = val
                pending["generator"][key] = val
                continue
            for name, sec in sections.items():
                if key in {f.name for f in fields(sec)}:
                    pending[name][key] = val
                    break
            else:
                raise KeyError(f"unknown config key {key!r}")
        return RunConfig(**{name: replace(sec, **pending[name]) for name, sec in sections.items()})


def load_config(path=None, **overrides) -> RunConfig:
    cfg = RunConfig()
    values = {}
    if path is not None:
        loaded = yaml.safe_load(Path(path).read_text()) or {}
        if not isinstance(loaded, dict):
            raise ValueError(f"{path}: expected a key: value mapping")
        values.update(loaded)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return cfg.updated(**values) if values else cfg
