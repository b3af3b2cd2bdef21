"""Run configuration: sectioned key=value files with command-line overrides.

Sections map onto dataclasses: ``[model]`` -> ModelConfig, ``[train]`` ->
TrainConfig, ``[corpus]`` -> SyntheticTaskSpec, ``[sweep]`` -> SweepConfig,
``[paths]`` -> file locations. ``[run] seed`` seeds everything that has not
been given its own seed.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .model import ModelConfig
from .synthetic import SyntheticSpecError, SyntheticTaskSpec
from .training import TrainConfig


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass(frozen=True)
class SweepConfig:
    t_values: tuple[int, ...] = (0, 1, 2)
    paragraph_counts: tuple[int, ...] = (4, 10, 20, 30)
    train_paragraphs: int = 7
    train_questions: int = 2000
    dev_questions: int = 500
    paragraph_dev_questions: int = 300


PATH_KEYS = ("corpus", "dev", "entities", "triples", "checkpoint", "output_dir", "predictions")

# Optional fields whose default is None, with the type used when they are set.
_OPTIONAL = {"max_updates": int, "question_relations": tuple}


@dataclass
class RunConfig:
    seed: int = 0
    paths: dict[str, str] = field(default_factory=dict)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    corpus: SyntheticTaskSpec = field(default_factory=SyntheticTaskSpec)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def path(self, key: str, must_exist: bool = False) -> Path:
        value = self.paths.get(key)
        if not value:
            raise ConfigError(f"paths.{key} is required for this command")
        p = Path(value)
        if must_exist and not p.exists():
            raise ConfigError(f"paths.{key}: {p} does not exist")
        return p

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "paths": dict(sorted(self.paths.items())),
            "model": self.model.to_dict(),
            "train": self.train.to_dict(),
            "corpus": self.corpus.to_dict(),
            "sweep": dataclasses.asdict(self.sweep),
        }


def _coerce(section: str, key: str, raw: str, default: Any):
    name = f"{section}.{key}"
    text = raw.strip()
    try:
        if default is None:
            if text.lower() in ("", "none"):
                return None
            kind = _OPTIONAL.get(key, str)
            if kind is tuple:
                return tuple(x.strip() for x in text.split(",") if x.strip())
            return kind(text)
        if isinstance(default, bool):
            lowered = text.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            items = [x.strip() for x in text.split(",") if x.strip()]
            if default and isinstance(default[0], int):
                return tuple(int(x) for x in items)
            return tuple(items)
        return text
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}") from None


def _apply(obj, section: str, values: dict[str, str]):
    known = {f.name: getattr(obj, f.name) for f in dataclasses.fields(obj)}
    updates = {}
    for key, raw in values.items():
        if key not in known:
            raise ConfigError(f"{section}.{key}: unknown field (known: {', '.join(sorted(known))})")
        updates[key] = _coerce(section, key, raw, known[key])
    try:
        return dataclasses.replace(obj, **updates)
    except (ValueError, SyntheticSpecError) as exc:
        raise ConfigError(f"{section}: {exc}") from None


SECTIONS = ("run", "paths", "model", "train", "corpus", "sweep")


def load_config(path: str | Path | None = None, overrides: dict[str, str] | None = None) -> RunConfig:
    """Read an INI-style file (optional) and then apply ``section.key -> value`` overrides."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config: {p} does not exist")
        try:
            parser.read(p, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigError(f"config: {exc}") from None
    values: dict[str, dict[str, str]] = {s: {} for s in SECTIONS}
    for section in parser.sections():
        if section not in values:
            raise ConfigError(f"{section}: unknown section (known: {', '.join(SECTIONS)})")
        values[section].update(parser[section])
    for dotted, raw in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        if section not in values or not key:
            raise ConfigError(f"{dotted}: overrides take the form section.key")
        values[section][key] = raw

    config = RunConfig()
    for key, raw in values["run"].items():
        if key != "seed":
            raise ConfigError(f"run.{key}: unknown field (known: seed)")
        config.seed = _coerce("run", key, raw, 0)
    for key, raw in values["paths"].items():
        if key not in PATH_KEYS:
            raise ConfigError(f"paths.{key}: unknown field (known: {', '.join(PATH_KEYS)})")
        config.paths[key] = raw.strip()

    seeded = {"train": "seed", "corpus": "seed"}
    for section, key in seeded.items():
        values[section].setdefault(key, str(config.seed))
    values["corpus"].setdefault("world_seed", str(config.seed))

    config.model = _apply(config.model, "model", values["model"])
    config.train = _apply(config.train, "train", values["train"])
    config.corpus = _apply(config.corpus, "corpus", values["corpus"])
    config.sweep = _apply(config.sweep, "sweep", values["sweep"])
    if config.train.num_steps > config.model.max_steps:
        config.model = dataclasses.replace(config.model, max_steps=config.train.num_steps)
    return config
